//! Compiles a C program against the generated header and the static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "qentropy.h"

int main(void) {
    double p[2] = {0.5, 0.5};
    QeProbVec *h = NULL;
    double h_q = 0.0;
    if (qe_prob_vec_new(p, 2, &h) != QE_STATUS_OK) return 1;
    if (qe_q_entropy(h, 0.5, &h_q) != QE_STATUS_OK) return 2;
    qe_prob_vec_free(h);
    if (fabs(h_q - 0.5857864376269049) > 1e-12) return 3;

    QeChain *c = NULL;
    if (qe_chain_from_json("{\"transition\":[[0.9,0.1],[0.1,0.9]],\"initial\":[1,0]}", &c) != QE_STATUS_OK) return 4;
    QeSecondLawRow rows[3];
    bool applicable = false;
    if (qe_second_law(c, 0.8, 3, rows, 3, &applicable) != QE_STATUS_OK || !applicable) return 5;
    qe_chain_free(c);

    double x = 0.0;
    if (qe_exp_q(-10.0, 0.5, &x) != QE_STATUS_DOMAIN) return 6;
    if (qe_last_error_message() == NULL) return 7;

    printf("%.10f %.10f\n", h_q, rows[0].slack);
    return 0;
}
"#;

fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().expect("test executable path");
    exe.parent().expect("deps directory").to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = artifact_dir().join("libqentropy_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    let bin = dir.path().join("client");
    std::fs::write(&src, PROGRAM).unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler");
    assert!(status.success(), "compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "client exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "0.5857864376 0.3882771904\n");
}
