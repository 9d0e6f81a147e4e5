use std::process::Command;

fn main() {
    let describe = Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| format!("v{}-untracked", env!("CARGO_PKG_VERSION")));
    println!("cargo:rustc-env=LATFLOW_VERSION={describe}");
    println!("cargo:rerun-if-changed=../../.git/HEAD");
}
