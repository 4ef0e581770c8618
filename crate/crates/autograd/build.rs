use std::env;
use std::path::Path;

fn main() {
    println!("cargo:rerun-if-env-changed=OPENBLAS_LIB_DIR");

    let mut candidates: Vec<String> = Vec::new();
    if let Ok(dir) = env::var("OPENBLAS_LIB_DIR") {
        candidates.push(dir);
    }
    candidates.extend(
        [
            "/usr/lib/x86_64-linux-gnu/openblas-pthread",
            "/usr/lib/x86_64-linux-gnu/openblas-serial",
            "/usr/lib/x86_64-linux-gnu",
            "/usr/lib/openblas-base",
            "/usr/lib64",
            "/usr/local/lib",
        ]
        .iter()
        .map(|s| s.to_string()),
    );

    let dir = candidates
        .iter()
        .find(|d| {
            Path::new(d).join("libopenblas.so").exists() || Path::new(d).join("libopenblas.a").exists()
        })
        .unwrap_or_else(|| panic!("libopenblas not found; set OPENBLAS_LIB_DIR"));

    println!("cargo:rustc-link-search=native={dir}");
    println!("cargo:rustc-link-arg=-Wl,-rpath,{dir}");
    println!("cargo:rustc-link-lib=dylib=openblas");
}
