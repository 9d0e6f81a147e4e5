//! Timestamped run directories. Every subcommand invocation gets a
//! fresh directory under the configured root holding the resolved
//! configuration, the build version string, the effective seeds, and
//! that run's metric files. Existing directories are never reused: a
//! second run in the same second gets a numeric suffix.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};

pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Creates `root/<unix-seconds>-<label>[-n]`, taking the first
    /// suffix that does not already exist.
    pub fn create(root: &Path, label: &str) -> Result<RunDir> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let stamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .expect("clock after epoch")
            .as_secs();
        for n in 0..10_000 {
            let name = if n == 0 {
                format!("{stamp}-{label}")
            } else {
                format!("{stamp}-{label}-{n}")
            };
            let path = root.join(name);
            match std::fs::create_dir(&path) {
                Ok(()) => {
                    let dir = RunDir { path };
                    dir.write("version.txt", &format!("{}\n", crate::VERSION))?;
                    return Ok(dir);
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => {
                    return Err(e).with_context(|| format!("creating {}", path.display()));
                }
            }
        }
        anyhow::bail!("no free run-directory suffix under {}", root.display());
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.path.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// Standard preamble: resolved config and the effective seed.
    pub fn write_preamble(&self, resolved_config: &str, seed_note: &str) -> Result<()> {
        self.write("config.resolved.toml", resolved_config)?;
        self.write("seeds.txt", seed_note)?;
        Ok(())
    }
}
