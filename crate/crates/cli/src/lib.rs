//! Command-line driver for the reconstruction engine: synthetic datasets,
//! FBP and Gaussian reconstructions, held-out evaluation and reports.
//!
//! Each subcommand is a plain function (`cmd_*`) so the same code paths
//! run from tests.

pub mod config;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod plots;
pub mod reconstruct;
pub mod report;
pub mod simulate;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::{EvalConfig, RunConfig};
pub use error::{CliError, CliResult};
pub use evaluate::{cmd_evaluate, MetricRow};
pub use reconstruct::{cmd_reconstruct, InitSource};
pub use report::cmd_report;
pub use simulate::{cmd_simulate, ManifestEntry};

pub fn case_dir_name(case: usize) -> String {
    format!("case_{case:04}")
}

pub fn views_dir_name(views: usize) -> String {
    format!("views_{views:02}")
}

/// Output directory built under a hidden sibling and moved into place on
/// `commit`, so a failed command leaves nothing behind.
pub(crate) struct Staging {
    target: PathBuf,
    tmp: PathBuf,
    committed: bool,
}

impl Staging {
    pub(crate) fn begin(target: &Path) -> CliResult<Self> {
        if target.exists() {
            let mut entries = fs::read_dir(target).map_err(|e| CliError::io(target, e))?;
            if entries.next().is_some() {
                return Err(CliError::Usage(format!(
                    "output directory {} exists and is not empty",
                    target.display()
                )));
            }
        }
        let name = target
            .file_name()
            .ok_or_else(|| CliError::Usage(format!("bad output path {}", target.display())))?
            .to_string_lossy()
            .into_owned();
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
        let tmp = parent.join(format!(".{name}.partial"));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| CliError::io(&tmp, e))?;
        }
        fs::create_dir(&tmp).map_err(|e| CliError::io(&tmp, e))?;
        Ok(Self {
            target: target.to_path_buf(),
            tmp,
            committed: false,
        })
    }

    pub(crate) fn path(&self) -> &Path {
        &self.tmp
    }

    pub(crate) fn commit(mut self) -> CliResult<PathBuf> {
        if self.target.exists() {
            fs::remove_dir(&self.target).map_err(|e| CliError::io(&self.target, e))?;
        }
        fs::rename(&self.tmp, &self.target).map_err(|e| CliError::io(&self.target, e))?;
        self.committed = true;
        Ok(self.target.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}

pub(crate) fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Runs `f` on a pool with `threads` workers (0 = rayon's default).
pub(crate) fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
