//! Output directory handling: the lock file, staged temp directories that are
//! renamed into place, and per-stage manifests.

use std::fs::{self, File, OpenOptions};
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{io_err, CliError, CliResult};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const LOCK_FILE: &str = ".lock";

pub struct Workspace {
    root: PathBuf,
    lock: PathBuf,
}

impl Workspace {
    /// Creates `root` if needed and takes the lock; fails if another run holds it.
    pub fn open(root: &Path) -> CliResult<Workspace> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        let lock = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => Ok(Workspace {
                root: root.to_path_buf(),
                lock,
            }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(format!(
                "{} exists; another run is active or a previous run was killed (remove it to continue)",
                lock.display()
            ))),
            Err(e) => Err(io_err(&lock, e)),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.root.join(stage)
    }

    /// Path to an artifact of a completed stage, or a prerequisite error.
    pub fn require(&self, stage: &str, file: &str) -> CliResult<PathBuf> {
        let dir = self.stage_dir(stage);
        if !dir.join("manifest.json").is_file() {
            return Err(CliError::Prerequisite(format!(
                "stage `{stage}` has not completed in {}",
                self.root.display()
            )));
        }
        let path = dir.join(file);
        if !path.exists() {
            return Err(CliError::Prerequisite(format!(
                "`{}` is missing from stage `{stage}`",
                path.display()
            )));
        }
        Ok(path)
    }

    pub fn has(&self, stage: &str, file: &str) -> bool {
        self.require(stage, file).is_ok()
    }

    pub fn begin(&self, stage: &str) -> CliResult<StageOutput> {
        let tmp = self.root.join(format!(".tmp-{stage}"));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| io_err(&tmp, e))?;
        }
        fs::create_dir_all(&tmp).map_err(|e| io_err(&tmp, e))?;
        Ok(StageOutput {
            stage: stage.to_string(),
            root: self.root.clone(),
            tmp,
            inputs: Vec::new(),
            committed: false,
        })
    }

    /// Manifest path recorded for `path`: relative to the output root when inside it.
    fn display_path(&self, path: &Path) -> String {
        relative_to(&self.root, path)
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

fn relative_to(root: &Path, path: &Path) -> String {
    let canon = |p: &Path| p.canonicalize().unwrap_or_else(|_| p.to_path_buf());
    let (r, p) = (canon(root), canon(path));
    match p.strip_prefix(&r) {
        Ok(rel) => rel.to_string_lossy().replace('\\', "/"),
        Err(_) => path.display().to_string(),
    }
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    stage: &'a str,
    seed: u64,
    inputs: Vec<FileDigest>,
    parameters: serde_json::Value,
    outputs: Vec<FileDigest>,
}

/// A stage's outputs being assembled in a hidden temp directory.
///
/// Dropping without [`StageOutput::commit`] removes everything written.
pub struct StageOutput {
    stage: String,
    root: PathBuf,
    tmp: PathBuf,
    inputs: Vec<PathBuf>,
    committed: bool,
}

impl StageOutput {
    pub fn path(&self, name: &str) -> PathBuf {
        self.tmp.join(name)
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }

    /// Writes the config and manifest, then swaps the temp directory into place.
    pub fn commit<P: Serialize>(mut self, ws: &Workspace, config: &RunConfig, parameters: &P) -> CliResult<()> {
        let cfg_path = self.path("run_config.toml");
        fs::write(&cfg_path, config.to_toml()?).map_err(|e| io_err(&cfg_path, e))?;

        let mut inputs = Vec::new();
        for p in &self.inputs {
            inputs.push(FileDigest {
                path: ws.display_path(p),
                sha256: sha256_file(p)?,
            });
        }
        let mut files = Vec::new();
        collect_files(&self.tmp, &mut files)?;
        files.sort();
        let mut outputs = Vec::new();
        for f in &files {
            outputs.push(FileDigest {
                path: relative_to(&self.tmp, f),
                sha256: sha256_file(f)?,
            });
        }
        let manifest = Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            stage: &self.stage,
            seed: config.seed,
            inputs,
            parameters: serde_json::to_value(parameters).map_err(|e| CliError::Io(e.to_string()))?,
            outputs,
        };
        self.write_json("manifest.json", &manifest)?;

        let target = self.root.join(&self.stage);
        let old = self.root.join(format!(".old-{}", self.stage));
        if old.exists() {
            fs::remove_dir_all(&old).map_err(|e| io_err(&old, e))?;
        }
        if target.exists() {
            fs::rename(&target, &old).map_err(|e| io_err(&target, e))?;
        }
        fs::rename(&self.tmp, &target).map_err(|e| io_err(&target, e))?;
        self.committed = true;
        if old.exists() {
            fs::remove_dir_all(&old).map_err(|e| io_err(&old, e))?;
        }
        Ok(())
    }
}

impl Drop for StageOutput {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| io_err(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}
