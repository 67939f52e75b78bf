//! Compiles `tests/c/smoke.c` against the generated header and the static
//! library, then runs it on a freshly written checkpoint.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

fn target_dir() -> PathBuf {
    // <target>/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ppm.h")).unwrap();
    for name in [
        "typedef struct PpmModel PpmModel;",
        "PPM_STATUS_CHECKSUM = 4",
        "ppm_model_load(const char *path, struct PpmModel **out)",
        "ppm_predict(",
        "ppm_prediction_events(",
        "ppm_damerau_levenshtein(",
        "ppm_last_error_message(void)",
    ] {
        assert!(header.contains(name), "header lacks {name:?}");
    }
}

#[test]
fn c_program_links_and_predicts() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libppm_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.ckpt");
    common::write_checkpoint(&ckpt);
    let exe = dir.path().join("smoke");

    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success(), "compiling smoke.c failed");

    let out = Command::new(&exe).arg(&ckpt).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        out.status.success(),
        "smoke failed: {stdout}{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout.contains("rank 1:"));
    assert!(stdout
        .trim_end()
        .ends_with(&format!("ok {}", env!("CARGO_PKG_VERSION"))));
}
