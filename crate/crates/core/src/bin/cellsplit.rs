use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use cellsplit::config::{parse_config, ExperimentConfig};
use cellsplit::gradcheck::{gradcheck, GradcheckOptions};
use cellsplit::homogenize::{effective_table, EffectiveTensor};
use cellsplit::mesh::PeriodicMesh;
use cellsplit::optimizer::{continuation_run, LevelRecord};
use cellsplit::output::{
    checkpoint_path, log_line, read_field_file, write_cell_file, write_field_file, write_log_csv,
    write_table_csv, FieldMeta,
};
use cellsplit::phase_field::Phase;
use cellsplit::postprocess::von_mises_fields;
use cellsplit::{Error, Result};

#[derive(Parser)]
#[command(name = "cellsplit", version, about = "Two-phase periodic microstructure optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the coarse-to-fine optimization described by a config file.
    Optimize {
        config: PathBuf,
        /// Continue from the newest matching checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Override the output directory of the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print (and optionally save) the effective table of a field file.
    Evaluate {
        config: PathBuf,
        field: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Re-export a field file, optionally tiled and with von Mises stresses.
    Export {
        field: PathBuf,
        #[arg(long, default_value_t = 1)]
        tile: usize,
        /// Requires `--config` for materials and loads.
        #[arg(long)]
        von_mises: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output path (defaults to `<field>_tiled<k>.vtk`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the analytic gradient with central finite differences.
    Gradcheck {
        config: PathBuf,
        #[arg(long, default_value_t = 5)]
        nodes: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Exit with status 1 when the relative error exceeds this value.
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
    },
}

fn print_table(table: &EffectiveTensor) {
    println!("{:>6} {:>6} {:>14} {:>10}", "phase", "load", "component", "volume");
    for phase in Phase::BOTH {
        let m = phase.index();
        for e in &table.rows[m] {
            println!("{m:>6} {:>6} {:>14.6} {:>10.5}", e.label, e.normalized, table.volumes[m]);
        }
    }
}

fn find_checkpoint(cfg: &ExperimentConfig, hash: &str) -> Result<Option<(usize, Vec<f64>)>> {
    for level in (0..cfg.schedule.len()).rev() {
        let path = checkpoint_path(&cfg.output, level, cfg.schedule[level]);
        if !path.exists() {
            continue;
        }
        let loaded = read_field_file(&path)?;
        if loaded.meta.hash.as_deref() != Some(hash) {
            eprintln!("ignoring {}: written by a different config", path.display());
            continue;
        }
        eprintln!("resuming after level {level} from {}", path.display());
        return Ok(Some((level, loaded.values)));
    }
    Ok(None)
}

fn run_optimize(cfg: &ExperimentConfig, resume: bool) -> Result<()> {
    let out = &cfg.output;
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let config_copy = out.join("config.toml");
    std::fs::write(&config_copy, cfg.to_toml_string()).map_err(|e| Error::Io {
        path: config_copy,
        source: e,
    })?;
    let hash = cfg.config_hash();
    let problem = cfg.to_problem()?;
    let start = if resume { find_checkpoint(cfg, &hash)? } else { None };
    println!("experiment {} (hash {hash})", cfg.name);

    let mut on_level = |level: usize, mesh: &PeriodicMesh, rec: &LevelRecord| -> Result<()> {
        for entry in &rec.record.log {
            println!("  {}", log_line(entry));
        }
        println!(
            "level {level}: N={} eps={:.4e} J={:.8e} ({:?}, {:.1?})",
            rec.nodes_per_axis, rec.eps, rec.record.value, rec.record.termination, rec.record.elapsed
        );
        let meta = FieldMeta {
            hash: Some(hash.clone()),
            level: Some(level),
        };
        write_field_file(
            &checkpoint_path(out, level, rec.nodes_per_axis),
            mesh,
            &rec.record.field,
            &[],
            1,
            &meta,
        )?;
        write_log_csv(&out.join(format!("log_level{level}.csv")), &rec.record.log)
    };
    let result = continuation_run(&problem, &cfg.to_continuation(), start, &mut on_level)?;

    let Some(last) = result.levels.last() else {
        println!("all levels already finished; nothing to do");
        return Ok(());
    };
    let mesh = Arc::new(PeriodicMesh::new(cfg.dimension, last.nodes_per_axis)?);
    let field = &last.record.field;
    let level = cfg.output_options.isosurface_level;
    let indicator: Vec<f64> = field.iter().map(|&x| if x > level { 1.0 } else { 0.0 }).collect();
    let meta = FieldMeta {
        hash: Some(hash.clone()),
        level: Some(cfg.schedule.len() - 1),
    };
    let tile = cfg.output_options.tile;
    write_field_file(&out.join("final.vtk"), &mesh, field, &[("phase0_indicator", &indicator)], tile, &meta)?;
    if let Some(table) = &last.record.table {
        write_table_csv(&out.join("table.csv"), table)?;
        print_table(table);
    }
    if cfg.output_options.von_mises {
        let fields = von_mises_fields(&mesh, field, &problem)?;
        let named: Vec<(&str, &[f64])> = fields.iter().map(|(n, v)| (n.as_str(), v.as_slice())).collect();
        write_cell_file(&out.join("von_mises.vtk"), &mesh, &named, tile, &meta)?;
    }
    println!("results written to {}", out.display());
    Ok(())
}

fn optimize(config: &Path, resume: bool, output: Option<PathBuf>) -> Result<()> {
    let mut cfg = parse_config(config)?;
    if let Some(o) = output {
        cfg.output = o;
    }
    for run in cfg.expand_sweep() {
        run_optimize(&run, resume)?;
    }
    Ok(())
}

fn evaluate(config: &Path, field: &Path, csv: Option<PathBuf>) -> Result<()> {
    let cfg = parse_config(config)?;
    let loaded = read_field_file(field)?;
    if loaded.mesh.dim() != cfg.dimension {
        return Err(Error::DimensionMismatch {
            expected: cfg.dimension,
            actual: loaded.mesh.dim(),
        });
    }
    let problem = cfg.to_problem()?;
    let mesh = Arc::new(loaded.mesh);
    let table = effective_table(
        &mesh,
        &loaded.values,
        &problem.materials,
        &problem.interp,
        &problem.loads[0],
        &problem.solver,
    )?;
    print_table(&table);
    if let Some(path) = csv {
        write_table_csv(&path, &table)?;
    }
    Ok(())
}

fn export(field: &Path, tile: usize, von_mises: bool, config: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let loaded = read_field_file(field)?;
    let stem = field.with_extension("");
    let out = out.unwrap_or_else(|| PathBuf::from(format!("{}_tiled{tile}.vtk", stem.display())));
    write_field_file(&out, &loaded.mesh, &loaded.values, &[], tile, &loaded.meta)?;
    println!("wrote {}", out.display());
    if von_mises {
        let config = config.ok_or_else(|| Error::Config {
            key: "--config".into(),
            reason: "--von-mises needs the experiment config for materials and loads".into(),
        })?;
        let problem = parse_config(&config)?.to_problem()?;
        let mesh = Arc::new(loaded.mesh);
        let fields = von_mises_fields(&mesh, &loaded.values, &problem)?;
        let named: Vec<(&str, &[f64])> = fields.iter().map(|(n, v)| (n.as_str(), v.as_slice())).collect();
        let vm_path = PathBuf::from(format!("{}_von_mises_tiled{tile}.vtk", stem.display()));
        write_cell_file(&vm_path, &mesh, &named, tile, &loaded.meta)?;
        println!("wrote {}", vm_path.display());
    }
    Ok(())
}

fn run_gradcheck(config: &Path, nodes: usize, seed: u64, threshold: f64) -> Result<bool> {
    let cfg = parse_config(config)?;
    let opts = GradcheckOptions {
        nodes_per_axis: nodes,
        seed,
        eps_factor: cfg.eps_factor,
        ..GradcheckOptions::default()
    };
    let report = gradcheck(&cfg.to_problem()?, &opts)?;
    println!(
        "gradcheck d={} N={nodes} nodes={} J={:.10e} max_abs_error={:.3e} max_rel_error={:.3e}",
        cfg.dimension, report.nodes, report.value, report.max_abs_error, report.max_rel_error
    );
    Ok(report.max_rel_error <= threshold)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Optimize { config, resume, output } => optimize(&config, resume, output).map(|_| true),
        Command::Evaluate { config, field, csv } => evaluate(&config, &field, csv).map(|_| true),
        Command::Export {
            field,
            tile,
            von_mises,
            config,
            out,
        } => export(&field, tile, von_mises, config, out).map(|_| true),
        Command::Gradcheck {
            config,
            nodes,
            seed,
            threshold,
        } => run_gradcheck(&config, nodes, seed, threshold),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("gradient check failed: error above threshold");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
