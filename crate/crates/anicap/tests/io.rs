use std::path::Path;

use anicap::io::{
    obj_string, off_string, parse_obj, parse_off, read_mesh, read_raw, read_triplets, write_mesh, write_triplets,
    IoError, Metadata, StateDump,
};
use anicap_core::config::make_config;
use anicap_core::linalg::SymBuilder;
use anicap_core::shapes::build_truncated_wulff;
use anicap_core::state::compute_state_with_normals;
use anicap_core::{Anisotropy, CapillaryMesh, VertexKind};

fn cap(w: f64, rings: usize) -> (Anisotropy, anicap_core::HalfSpaceConfig, anicap_core::shapes::WulffCap) {
    let a = Anisotropy::isotropic();
    let c = make_config(&a, w, 4000).unwrap();
    let cap = build_truncated_wulff(&a, &c, rings).unwrap();
    (a, c, cap)
}

fn meta() -> Metadata {
    let mut m = Metadata::new();
    m.insert("aniso".into(), "ellip:4,1,1".into());
    m.insert("omega0".into(), "-0.4".into());
    m
}

fn same_mesh(a: &CapillaryMesh, b: &CapillaryMesh) {
    assert_eq!(a.triangles(), b.triangles());
    assert_eq!(a.kinds(), b.kinds());
    assert_eq!(a.vertices(), b.vertices(), "coordinates must round-trip bit for bit");
}

#[test]
fn off_and_obj_round_trip_exactly() {
    let (_, _, cap) = cap(0.3, 6);
    let dir = tempfile::tempdir().unwrap();
    for name in ["cap.off", "cap.obj"] {
        let path = dir.path().join("nested").join(name);
        write_mesh(&path, &cap.mesh, &meta()).unwrap();
        let (back, m) = read_mesh(&path).unwrap();
        same_mesh(&cap.mesh, &back);
        assert_eq!(m, meta());
    }
}

#[test]
fn strings_carry_metadata_as_comments() {
    let (_, _, cap) = cap(0.0, 2);
    let off = off_string(&cap.mesh, &meta());
    assert!(off.starts_with("OFF"));
    assert!(off.contains("# omega0: -0.4"));
    let obj = obj_string(&cap.mesh, &meta());
    assert!(obj.contains("# aniso: ellip:4,1,1"));
    let raw = parse_obj(&obj, Path::new("x.obj")).unwrap();
    assert_eq!(raw.triangles.len(), cap.mesh.num_faces());
}

#[test]
fn near_wall_vertices_snap_on_read() {
    let text = "OFF\n4 2 0\n0 0 1e-14\n1 0 -1e-13\n0 1 0.5\n1 1 2e-13\n3 0 1 2\n3 1 3 2\n";
    let raw = parse_off(text, Path::new("x.off")).unwrap();
    let m = CapillaryMesh::new(raw.vertices, raw.triangles).unwrap();
    for v in [0, 1, 3] {
        assert_eq!(m.vertices()[v].z, 0.0);
    }
    // 0 and 3 are corners where the wall chain meets the off-wall vertex 2.
    assert_eq!(m.kind(1), VertexKind::Wall);
    assert_eq!(m.kind(0), VertexKind::Truncation);
}

#[test]
fn off_accepts_comments_and_face_colors() {
    let text = "# produced elsewhere\nOFF # header\n3 1 0\n0 0 0\n1 0 0\n0 1 1\n3 0 1 2 255 0 0\n";
    let raw = parse_off(text, Path::new("x.off")).unwrap();
    assert_eq!(raw.triangles, vec![[0, 1, 2]]);
    assert!(raw.metadata.is_empty());
}

#[test]
fn obj_handles_slashes_and_negative_indices() {
    let text = "v 0 0 0\nv 1 0 0\nv 0 1 1\nvn 0 0 1\nf 1/1/1 2//1 -1\n";
    let raw = parse_obj(text, Path::new("x.obj")).unwrap();
    assert_eq!(raw.triangles, vec![[0, 1, 2]]);
}

#[test]
fn parse_errors_name_the_line() {
    let cases = [
        ("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 1\n4 0 1 2 0\n", 6),
        ("OFF\n3 1 0\n0 0 0\n1 nan 0\n0 1 1\n3 0 1 2\n", 4),
        ("PLY\n", 1),
    ];
    for (text, line) in cases {
        match parse_off(text, Path::new("bad.off")) {
            Err(IoError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
    assert!(matches!(parse_obj("v 0 0 0\nf 1 2 3 4\n", Path::new("q.obj")), Err(IoError::Parse { .. })));
}

#[test]
fn unknown_extension_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_raw(&dir.path().join("m.stl")), Err(IoError::Extension { .. })));
    assert!(matches!(read_raw(&dir.path().join("m.off")), Err(IoError::Read { .. })));
}

#[test]
fn invalid_topology_is_a_mesh_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.off");
    std::fs::write(&path, "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 1\n3 0 1 7\n").unwrap();
    assert!(matches!(read_mesh(&path), Err(IoError::Mesh { .. })));
}

#[test]
fn triplets_round_trip() {
    let mut b = SymBuilder::new(3);
    b.add(0, 0, 2.0);
    b.add(0, 2, -0.125);
    b.add(1, 1, 1.0 / 3.0);
    let m = b.build();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out").join("q.txt");
    write_triplets(&path, &m).unwrap();
    let (dim, t) = read_triplets(&path).unwrap();
    assert_eq!(dim, 3);
    assert_eq!(t, m.triplets());
    assert_eq!(t.len(), m.nnz());
}

#[test]
fn state_dump_is_aligned_with_the_mesh() {
    let (a, c, cap) = cap(0.5, 6);
    let st = compute_state_with_normals(&cap.mesh, &cap.normals, &a, &c).unwrap();
    let d = StateDump::new(&st);
    let n = cap.mesh.num_vertices();
    assert_eq!(d.positions.len(), n);
    assert_eq!(d.normals.len(), n);
    assert_eq!(d.vertex_areas.len(), n);
    assert_eq!(d.kinds.iter().filter(|k| **k == "wall").count(), d.boundary.vertices.len());
    assert!(d.boundary.capillary_residual.iter().all(|r| r.abs() < 1e-12));
    let json = serde_json::to_value(&d).unwrap();
    assert!(json["boundary"]["conormal"].is_array());
}
