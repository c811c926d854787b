//! The generated header must compile as C and as C++.

use std::path::Path;
use std::process::Command;

fn compiles(compiler: &str, lang: &str) {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"segloc.h\"\nint main(void) { SeglocPose p; SeglocStatus s = segloc_fps(0, 0, 0, 0, 0); (void)p; return s == SEGLOC_STATUS_OK; }\n",
    )
    .unwrap();
    let out = Command::new(compiler).args(["-x", lang, "-fsyntax-only", "-Wall", "-Werror", "-I"]).arg(&include).arg(&src).output();
    match out {
        Ok(o) => assert!(o.status.success(), "{compiler}: {}", String::from_utf8_lossy(&o.stderr)),
        Err(e) => eprintln!("skipping {compiler}: {e}"),
    }
}

#[test]
fn header_compiles_as_c() {
    compiles("cc", "c");
}

#[test]
fn header_compiles_as_cpp() {
    compiles("c++", "c++");
}
