use fracpat_core::manifest::*;

#[test]
fn manifest_lists_existing_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.csv"), "t,x\n0,1\n").unwrap();
    let mut m = RunManifest::start("forward", "alpha = 0.5\n");
    assert_eq!(m.config_sha256.len(), 64);
    assert_eq!(m.version, env!("CARGO_PKG_VERSION"));
    m.add_output(dir.path(), "a.csv").unwrap();
    m.add_check("energy", true, "fine");
    let path = m.finish(dir.path()).unwrap();
    let back = RunManifest::read(&path).unwrap();
    assert_eq!(back, m);
    assert!(back.finished_unix.unwrap() >= back.started_unix);
    assert_eq!(back.outputs[0].bytes, 8);
    back.verify(dir.path()).unwrap();
}

#[test]
fn verification_catches_missing_empty_and_changed_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(RunManifest::start("x", "").add_output(p, "nope").is_err());

    std::fs::write(p.join("empty"), "").unwrap();
    let mut m = RunManifest::start("x", "");
    m.add_output(p, "empty").unwrap();
    assert!(m.verify(p).is_err());
    assert!(m.finish(p).is_err());

    std::fs::write(p.join("f"), "1").unwrap();
    let mut m = RunManifest::start("x", "");
    m.add_output(p, "f").unwrap();
    std::fs::write(p.join("f"), "2").unwrap();
    assert!(m.verify(p).is_err());
    std::fs::remove_file(p.join("f")).unwrap();
    assert!(m.verify(p).is_err());
}

#[test]
fn config_hash_tracks_content() {
    let a = RunManifest::start("x", "alpha = 0.5\n");
    let b = RunManifest::start("x", "alpha = 0.6\n");
    assert_ne!(a.config_sha256, b.config_sha256);
    assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}
