mod common;

use cellsplit::homogenize::effective_table;
use cellsplit::mesh::PeriodicMesh;
use cellsplit::output::{read_field_file, read_table_csv, write_cell_file, write_field_file, write_table_csv, FieldMeta};
use cellsplit::phase_field::Phase;
use cellsplit::postprocess::von_mises_fields;
use common::{equal_problem, mesh, random_values};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vtkio::model::{Attribute, DataSet, Piece};
use vtkio::Vtk;

/// Point scalars of a legacy structured-points file, parsed by vtkio.
fn vtkio_point_fields(path: &std::path::Path) -> (String, [f32; 3], Vec<(String, Vec<f64>)>) {
    let vtk = Vtk::import(path).expect("vtkio parses the file");
    let DataSet::ImageData { pieces, spacing, .. } = vtk.data else {
        panic!("expected structured points");
    };
    let Piece::Inline(piece) = &pieces[0] else {
        panic!("expected an inline piece");
    };
    let fields = piece
        .data
        .point
        .iter()
        .map(|a| match a {
            Attribute::DataArray(arr) => (arr.name.clone(), arr.data.clone().cast_into::<f64>().unwrap()),
            Attribute::Field { name, .. } => panic!("unexpected field attribute {name}"),
        })
        .collect();
    (vtk.title, spacing, fields)
}

#[test]
fn field_file_is_read_bit_exactly_by_vtkio() {
    for dim in [2, 3] {
        let m = mesh(dim, 6);
        let v = random_values(m.num_nodes(), 1.2, 11 + dim as u64);
        let extra: Vec<f64> = v.iter().map(|x| x * x).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.vtk");
        let meta = FieldMeta {
            hash: Some("abc123".into()),
            level: Some(2),
        };
        write_field_file(&path, &m, &v, &[("squared", &extra)], 1, &meta).unwrap();

        let (title, spacing, fields) = vtkio_point_fields(&path);
        assert!(title.contains("hash=abc123") && title.contains("level=2"), "{title}");
        assert!((spacing[0] as f64 - m.spacing()).abs() < 1e-7);
        assert_eq!(fields.len(), 2);
        assert_eq!(fields[0].0, "phase");
        assert_eq!(fields[1].0, "squared");
        for i in 0..m.num_nodes() {
            assert_eq!(fields[0].1[i].to_bits(), v[i].to_bits(), "node {i}");
            assert_eq!(fields[1].1[i].to_bits(), extra[i].to_bits(), "node {i}");
        }

        let back = read_field_file(&path).unwrap();
        assert_eq!(back.values, v);
        assert_eq!(back.meta, meta);
        assert_eq!(back.mesh.dim(), dim);
        assert_eq!(back.mesh.nodes_per_axis(), 6);
    }
}

#[test]
fn tiled_file_samples_like_the_single_cell() {
    let m = mesh(2, 9);
    let v = random_values(m.num_nodes(), 1.0, 5);
    let tile = 3;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiled.vtk");
    write_field_file(&path, &m, &v, &[], tile, &FieldMeta::default()).unwrap();

    let (_, _, fields) = vtkio_point_fields(&path);
    let tiled = &fields[0].1;
    let side = m.cells_per_axis() * tile;
    assert_eq!(tiled.len(), side * side);

    // The tiled grid is itself a periodic grid with `side` cells spanning `tile` unit cells.
    let big = PeriodicMesh::new(2, side + 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let x = [rng.random_range(0.0..tile as f64), rng.random_range(0.0..tile as f64), 0.0];
        let scaled = [x[0] / tile as f64, x[1] / tile as f64, 0.0];
        let a = big.sample(tiled, scaled);
        let b = m.sample(&v, [x[0] % 1.0, x[1] % 1.0, 0.0]);
        assert!((a - b).abs() < 1e-12, "x={x:?}: {a} vs {b}");
    }

    let back = read_field_file(&path).unwrap();
    assert_eq!(back.values, v);
}

#[test]
fn table_csv_round_trip() {
    let m = mesh(2, 9);
    let v = random_values(m.num_nodes(), 1.0, 3);
    let pb = equal_problem(2, &["A11", "A22", "A12"], 4.0, 0.0);
    let table = effective_table(&m, &v, &pb.materials, &pb.interp, &pb.loads[0], &pb.solver).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out/table.csv");
    write_table_csv(&path, &table).unwrap();

    let rows = read_table_csv(&path).unwrap();
    assert_eq!(rows.len(), 6);
    for row in &rows {
        let phase = Phase::BOTH[row.phase];
        let expected = table.component(phase, &row.load).unwrap();
        assert_eq!(row.component.to_bits(), expected.to_bits());
        assert_eq!(row.volume.to_bits(), table.volumes[row.phase].to_bits());
        let raw = table.rows[row.phase].iter().find(|e| e.label == row.load).unwrap().raw;
        assert_eq!(row.value.to_bits(), raw.to_bits());
    }
    let header = std::fs::read_to_string(&path).unwrap();
    assert!(header.starts_with("phase,load,component,value,volume"));
}

#[test]
fn von_mises_file_has_cell_centered_fields() {
    let m = mesh(2, 9);
    let v = random_values(m.num_nodes(), 1.0, 8);
    let pb = equal_problem(2, &["A11", "A22"], 4.0, 0.0);
    let fields = von_mises_fields(&m, &v, &pb).unwrap();
    assert_eq!(fields.len(), 8);
    for (name, values) in &fields {
        assert_eq!(values.len(), m.num_elements(), "{name}");
        if !name.starts_with("log10") {
            assert!(values.iter().all(|x| x.is_finite() && *x >= 0.0), "{name}");
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vm.vtk");
    let named: Vec<(&str, &[f64])> = fields.iter().map(|(n, v)| (n.as_str(), v.as_slice())).collect();
    write_cell_file(&path, &m, &named, 2, &FieldMeta::default()).unwrap();

    let vtk = Vtk::import(&path).unwrap();
    let DataSet::ImageData { origin, .. } = &vtk.data else { panic!() };
    assert!((origin[0] as f64 - 0.5 * m.spacing()).abs() < 1e-7);
    let (title, _, read) = vtkio_point_fields(&path);
    assert!(title.ends_with("cells"));
    assert_eq!(read.len(), fields.len());
    assert_eq!(read[0].0, "von_mises_phase0_A11");
    let side = 2 * m.cells_per_axis();
    for (i, x) in read[0].1.iter().enumerate() {
        let (a, b) = (i % side, i / side);
        let e = (a % m.cells_per_axis()) + m.cells_per_axis() * (b % m.cells_per_axis());
        assert_eq!(x.to_bits(), fields[0].1[e].to_bits());
    }
}

#[test]
fn malformed_field_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.vtk");
    std::fs::write(&path, "# vtk DataFile Version 3.0\nx\nASCII\nDATASET STRUCTURED_POINTS\nDIMENSIONS 4 3 1\n").unwrap();
    assert!(read_field_file(&path).is_err());
    assert!(read_field_file(&dir.path().join("missing.vtk")).is_err());
}
