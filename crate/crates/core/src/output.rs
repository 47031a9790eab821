//! File formats: legacy VTK structured points (fields), CSV (tables, logs).
//!
//! Field files use ASCII values with 17 significant digits, so nodal values
//! survive a write/read round trip bit-exactly. The header title line carries
//! `key=value` metadata (`d`, `n`, `tile`, `hash`, `level`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::homogenize::EffectiveTensor;
use crate::mesh::PeriodicMesh;
use crate::optimizer::IterationLog;
use crate::phase_field::Phase;
use crate::postprocess::tile_field;
use crate::{Error, Result};

/// Contents of a structured-points file.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredPoints {
    pub title: String,
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub fields: Vec<(String, Vec<f64>)>,
}

impl StructuredPoints {
    pub fn field(&self, name: &str) -> Option<&[f64]> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// `key=value` pairs of the title line.
    pub fn metadata(&self) -> BTreeMap<String, String> {
        self.title
            .split_whitespace()
            .filter_map(|t| t.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    pub fn to_vtk_string(&self) -> String {
        let count: usize = self.dims.iter().product();
        let mut s = String::new();
        s.push_str("# vtk DataFile Version 3.0\n");
        s.push_str(&self.title.replace('\n', " "));
        s.push('\n');
        s.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
        let _ = writeln!(s, "DIMENSIONS {} {} {}", self.dims[0], self.dims[1], self.dims[2]);
        let _ = writeln!(
            s,
            "ORIGIN {:.16e} {:.16e} {:.16e}",
            self.origin[0], self.origin[1], self.origin[2]
        );
        let _ = writeln!(
            s,
            "SPACING {:.16e} {:.16e} {:.16e}",
            self.spacing[0], self.spacing[1], self.spacing[2]
        );
        let _ = writeln!(s, "POINT_DATA {count}");
        for (name, values) in &self.fields {
            let _ = writeln!(s, "SCALARS {name} double 1");
            s.push_str("LOOKUP_TABLE default\n");
            for v in values {
                let _ = writeln!(s, "{v:.16e}");
            }
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        for (name, values) in &self.fields {
            if values.len() != self.dims.iter().product::<usize>() {
                return Err(Error::FieldFile {
                    path: path.to_path_buf(),
                    reason: format!("field `{name}` has {} values for dims {:?}", values.len(), self.dims),
                });
            }
        }
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        fs::write(path, self.to_vtk_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|reason| Error::FieldFile {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty file")?;
        if !header.starts_with("# vtk DataFile") {
            return Err("missing `# vtk DataFile` header".into());
        }
        let title = lines.next().ok_or("missing title line")?.to_string();
        let mut tokens = lines.flat_map(|l| l.split_whitespace());
        let mut expect = |word: &str| -> std::result::Result<(), String> {
            match tokens.next() {
                Some(t) if t.eq_ignore_ascii_case(word) => Ok(()),
                other => Err(format!("expected `{word}`, found {other:?}")),
            }
        };
        expect("ASCII")?;
        expect("DATASET")?;
        expect("STRUCTURED_POINTS")?;
        let mut dims = [0usize; 3];
        let mut origin = [0.0; 3];
        let mut spacing = [1.0; 3];
        let mut count = None;
        let mut fields = Vec::new();
        let num = |t: Option<&str>| -> std::result::Result<f64, String> {
            t.ok_or("unexpected end of file")?
                .parse::<f64>()
                .map_err(|e| format!("bad number: {e}"))
        };
        while let Some(tok) = tokens.next() {
            match tok.to_ascii_uppercase().as_str() {
                "DIMENSIONS" => {
                    for d in dims.iter_mut() {
                        *d = num(tokens.next())? as usize;
                    }
                }
                "ORIGIN" => {
                    for o in origin.iter_mut() {
                        *o = num(tokens.next())?;
                    }
                }
                "SPACING" | "ASPECT_RATIO" => {
                    for s in spacing.iter_mut() {
                        *s = num(tokens.next())?;
                    }
                }
                "POINT_DATA" => count = Some(num(tokens.next())? as usize),
                "SCALARS" => {
                    let name = tokens.next().ok_or("missing scalar name")?.to_string();
                    let _ty = tokens.next().ok_or("missing scalar type")?;
                    let mut next = tokens.next();
                    if next.map(|t| t.parse::<usize>().is_ok()) == Some(true) {
                        next = tokens.next();
                    }
                    if next.map(|t| t.eq_ignore_ascii_case("LOOKUP_TABLE")) != Some(true) {
                        return Err(format!("field `{name}`: expected LOOKUP_TABLE"));
                    }
                    tokens.next();
                    let n = count.ok_or("SCALARS before POINT_DATA")?;
                    let values = (0..n).map(|_| num(tokens.next())).collect::<std::result::Result<Vec<_>, _>>()?;
                    fields.push((name, values));
                }
                other => return Err(format!("unsupported keyword `{other}`")),
            }
        }
        if count != Some(dims.iter().product()) {
            return Err("POINT_DATA count does not match DIMENSIONS".into());
        }
        Ok(StructuredPoints {
            title,
            dims,
            origin,
            spacing,
            fields,
        })
    }
}

/// Metadata written into field-file titles.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FieldMeta {
    pub hash: Option<String>,
    pub level: Option<usize>,
}

fn title_for(mesh: &PeriodicMesh, tile: usize, meta: &FieldMeta) -> String {
    let mut t = format!(
        "cellsplit d={} n={} tile={tile}",
        mesh.dim(),
        mesh.nodes_per_axis()
    );
    if let Some(h) = &meta.hash {
        let _ = write!(t, " hash={h}");
    }
    if let Some(l) = meta.level {
        let _ = write!(t, " level={l}");
    }
    t
}

fn grid_dims(mesh: &PeriodicMesh, tile: usize) -> [usize; 3] {
    let side = mesh.cells_per_axis() * tile;
    if mesh.dim() == 2 {
        [side, side, 1]
    } else {
        [side, side, side]
    }
}

/// Write the phase field (named `phase`) and extra nodal fields, tiled `tile` times.
pub fn write_field_file(
    path: &Path,
    mesh: &PeriodicMesh,
    phase: &[f64],
    extras: &[(&str, &[f64])],
    tile: usize,
    meta: &FieldMeta,
) -> Result<()> {
    if tile == 0 {
        return Err(Error::param("tile", "must be at least 1"));
    }
    let h = mesh.spacing();
    let mut fields = vec![("phase".to_string(), tile_field(mesh, phase, tile))];
    for (name, values) in extras {
        fields.push((name.to_string(), tile_field(mesh, values, tile)));
    }
    StructuredPoints {
        title: title_for(mesh, tile, meta),
        dims: grid_dims(mesh, tile),
        origin: [0.0; 3],
        spacing: [h, h, h],
        fields,
    }
    .write(path)
}

/// Write per-cell fields as points at the cell centers.
pub fn write_cell_file(
    path: &Path,
    mesh: &PeriodicMesh,
    cells: &[(&str, &[f64])],
    tile: usize,
    meta: &FieldMeta,
) -> Result<()> {
    if tile == 0 {
        return Err(Error::param("tile", "must be at least 1"));
    }
    let h = mesh.spacing();
    let half = 0.5 * h;
    let origin = if mesh.dim() == 2 { [half, half, 0.0] } else { [half; 3] };
    StructuredPoints {
        title: title_for(mesh, tile, meta) + " cells",
        dims: grid_dims(mesh, tile),
        origin,
        spacing: [h, h, h],
        fields: cells
            .iter()
            .map(|(n, v)| (n.to_string(), tile_field(mesh, v, tile)))
            .collect(),
    }
    .write(path)
}

/// A phase field read back from a field file.
#[derive(Debug, Clone)]
pub struct LoadedField {
    pub mesh: PeriodicMesh,
    pub values: Vec<f64>,
    pub meta: FieldMeta,
}

/// Read a field file written by [`write_field_file`]; tiled files are reduced to one cell.
pub fn read_field_file(path: &Path) -> Result<LoadedField> {
    let sp = StructuredPoints::read(path)?;
    let bad = |reason: String| Error::FieldFile {
        path: path.to_path_buf(),
        reason,
    };
    let meta = sp.metadata();
    let tile: usize = meta.get("tile").and_then(|t| t.parse().ok()).unwrap_or(1);
    let dim = if sp.dims[2] == 1 { 2 } else { 3 };
    let side = sp.dims[0];
    if sp.dims[1] != side || (dim == 3 && sp.dims[2] != side) {
        return Err(bad(format!("grid {:?} is not a square/cubic cell", sp.dims)));
    }
    if tile == 0 || side % tile != 0 {
        return Err(bad(format!("tile {tile} does not divide grid size {side}")));
    }
    let cells = side / tile;
    let mesh = PeriodicMesh::new(dim, cells + 1)?;
    let data = sp.field("phase").ok_or_else(|| bad("no `phase` field".into()))?;
    let values = (0..mesh.num_nodes())
        .map(|i| {
            let g = mesh.grid_index(i);
            data[g[0] + side * (g[1] + side * g[2])]
        })
        .collect();
    Ok(LoadedField {
        mesh,
        values,
        meta: FieldMeta {
            hash: meta.get("hash").cloned(),
            level: meta.get("level").and_then(|l| l.parse().ok()),
        },
    })
}

/// One row of the effective-tensor CSV.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TableRow {
    pub phase: usize,
    pub load: String,
    pub component: f64,
    pub value: f64,
    pub volume: f64,
}

/// Rows `(phase, load, component, value, volume)`: `component` is the
/// normalized `β^-2 C* A:A`, `value` the raw `C* A:A`.
pub fn table_rows(table: &EffectiveTensor) -> Vec<TableRow> {
    let mut rows = Vec::new();
    for phase in Phase::BOTH {
        for entry in &table.rows[phase.index()] {
            rows.push(TableRow {
                phase: phase.index(),
                load: entry.label.clone(),
                component: entry.normalized,
                value: entry.raw,
                volume: table.volumes[phase.index()],
            });
        }
    }
    rows
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

pub fn write_table_csv(path: &Path, table: &EffectiveTensor) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in table_rows(table) {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_table_csv(path: &Path) -> Result<Vec<TableRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<TableRow>, _>>()
        .map_err(|e| csv_err(path, e))
}

#[derive(Debug, serde::Serialize)]
struct LogRow {
    iter: usize,
    j: f64,
    m: f64,
    j0: f64,
    j1: f64,
    perimeter: f64,
    step: f64,
    projected_gradient: f64,
    predicted_decrease: f64,
    max_com: f64,
    cg_iterations: usize,
    evaluations: usize,
}

/// Human-readable iteration line: iter, J, M, J⁰, J¹, L^ε, max|c_i|, CG iterations.
pub fn log_line(entry: &IterationLog) -> String {
    let d = entry.detail.unwrap_or(crate::optimizer::EvalDetail {
        smooth_max: f64::NAN,
        cost0: f64::NAN,
        cost1: f64::NAN,
        perimeter: f64::NAN,
        cg_iterations: 0,
    });
    format!(
        "iter {:4}  J {:.8e}  M {:.6e}  J0 {:.6e}  J1 {:.6e}  L {:.6e}  com {:.1e}  cg {}",
        entry.iter,
        entry.value,
        d.smooth_max,
        d.cost0,
        d.cost1,
        d.perimeter,
        entry.constraint_residual,
        d.cg_iterations
    )
}

pub fn write_log_csv(path: &Path, log: &[IterationLog]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for e in log {
        let d = e.detail;
        w.serialize(LogRow {
            iter: e.iter,
            j: e.value,
            m: d.map_or(f64::NAN, |d| d.smooth_max),
            j0: d.map_or(f64::NAN, |d| d.cost0),
            j1: d.map_or(f64::NAN, |d| d.cost1),
            perimeter: d.map_or(f64::NAN, |d| d.perimeter),
            step: e.step,
            projected_gradient: e.projected_gradient,
            predicted_decrease: e.predicted_decrease,
            max_com: e.constraint_residual,
            cg_iterations: d.map_or(0, |d| d.cg_iterations),
            evaluations: e.evaluations,
        })
        .map_err(|err| csv_err(path, err))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Checkpoint path of schedule level `level` inside `dir`.
pub fn checkpoint_path(dir: &Path, level: usize, nodes_per_axis: usize) -> PathBuf {
    dir.join(format!("checkpoint_level{level}_n{nodes_per_axis}.vtk"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tile_one_has_canonical_values() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = PeriodicMesh::new(3, 5).unwrap();
        let v: Vec<f64> = (0..mesh.num_nodes()).map(|i| (i as f64).sin() / 3.0).collect();
        let path = dir.path().join("f.vtk");
        write_field_file(&path, &mesh, &v, &[], 1, &FieldMeta::default()).unwrap();
        let sp = StructuredPoints::read(&path).unwrap();
        assert_eq!(sp.dims, [4, 4, 4]);
        assert_eq!(sp.field("phase").unwrap(), v.as_slice());
        let back = read_field_file(&path).unwrap();
        assert_eq!(back.values, v);
        assert_eq!(back.mesh.nodes_per_axis(), 5);
    }

    #[test]
    fn tiled_constant_and_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = PeriodicMesh::new(2, 5).unwrap();
        let v = vec![0.25; mesh.num_nodes()];
        let path = dir.path().join("t.vtk");
        let meta = FieldMeta {
            hash: Some("abc123".into()),
            level: Some(2),
        };
        write_field_file(&path, &mesh, &v, &[("extra", &v)], 3, &meta).unwrap();
        let sp = StructuredPoints::read(&path).unwrap();
        assert_eq!(sp.dims, [12, 12, 1]);
        assert!(sp.field("phase").unwrap().iter().all(|&x| x == 0.25));
        assert_eq!(sp.fields.len(), 2);
        let back = read_field_file(&path).unwrap();
        assert_eq!(back.meta, meta);
        assert_eq!(back.values, v);
    }

    #[test]
    fn rejects_garbage() {
        assert!(StructuredPoints::parse("hello").is_err());
        assert!(StructuredPoints::parse("# vtk DataFile Version 3.0\nt\nBINARY\n").is_err());
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("missing").join("nope.vtk");
        assert!(read_field_file(&bad).is_err());
    }
}
