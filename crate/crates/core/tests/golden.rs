//! Mesh snapshots compared against hand-written reference files.

use nrq_core::problem::{Domain, Mesh, MeshSnapshot};

fn golden(name: &str) -> MeshSnapshot {
    let path = format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn interval_mesh_matches_golden() {
    let mesh = Mesh::build(Domain::unit_interval(), &[5]).unwrap();
    assert_eq!(mesh.snapshot(), golden("mesh_interval_5.json"));
}

#[test]
fn square_mesh_matches_golden() {
    let mesh = Mesh::build(Domain::unit_square(), &[3]).unwrap();
    assert_eq!(mesh.snapshot(), golden("mesh_square_3x3.json"));
}

#[test]
fn snapshot_round_trips_through_json() {
    let snap = Mesh::build(Domain::unit_square(), &[4, 3])
        .unwrap()
        .snapshot();
    let text = serde_json::to_string(&snap).unwrap();
    assert_eq!(serde_json::from_str::<MeshSnapshot>(&text).unwrap(), snap);
}
