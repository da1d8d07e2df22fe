//! Run directories. Outputs are written into a hidden staging directory
//! under the output root and renamed into `<timestamp>-<hash8>/` only after
//! every output and the manifest are complete, so a failed command leaves no
//! partial run behind. `LATEST-<command>` files point at the newest run of
//! each command.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut h = Sha256::new();
    io::copy(&mut fs::File::open(path)?, &mut h)?;
    Ok(hex::encode(h.finalize()))
}

/// Content hashes of a file, or of every file below a directory keyed by
/// relative path.
pub fn hash_tree(path: &Path) -> io::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    if path.is_file() {
        out.insert(String::new(), sha256_file(path)?);
        return Ok(out);
    }
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(path).unwrap_or(&p).to_string_lossy().replace('\\', "/");
                out.insert(rel, sha256_file(&p)?);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    run_id: &'a str,
    command: &'a str,
    created_at: String,
    tool_version: &'static str,
    config: &'a RunConfig,
    inputs: &'a BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

/// A run being built in a staging directory.
pub struct RunBuilder {
    command: String,
    out_root: PathBuf,
    staging: PathBuf,
    inputs: BTreeMap<String, String>,
    committed: bool,
}

impl RunBuilder {
    pub fn start(out_root: &Path, command: &str) -> Result<Self, CliError> {
        fs::create_dir_all(out_root).map_err(|e| CliError::op(format!("cannot create {}: {e}", out_root.display())))?;
        let nonce = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or_default();
        let staging = out_root.join(format!(".staging-{command}-{}-{nonce}", std::process::id()));
        fs::create_dir(&staging).map_err(|e| CliError::op(format!("cannot create {}: {e}", staging.display())))?;
        Ok(Self { command: command.to_owned(), out_root: out_root.to_path_buf(), staging, inputs: BTreeMap::new(), committed: false })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.staging.join(rel)
    }

    /// Record the content hash of an input file or directory.
    pub fn record_input(&mut self, path: &Path) -> Result<(), CliError> {
        let hashes = hash_tree(path).map_err(|e| CliError::op(format!("cannot hash {}: {e}", path.display())))?;
        let base = path.display().to_string();
        for (rel, h) in hashes {
            let key = if rel.is_empty() { base.clone() } else { format!("{base}/{rel}") };
            self.inputs.insert(key, h);
        }
        Ok(())
    }

    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(CliError::op)?;
        }
        fs::write(&p, bytes).map_err(|e| CliError::op(format!("cannot write {}: {e}", p.display())))
    }

    /// Pretty JSON with a trailing newline.
    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(CliError::op)?;
        s.push('\n');
        self.write_bytes(rel, s.as_bytes())
    }

    /// Stream into a staged file.
    pub fn write_with(&self, rel: &str, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
        let p = self.path(rel);
        let file = fs::File::create(&p).map_err(|e| CliError::op(format!("cannot write {}: {e}", p.display())))?;
        let mut w = io::BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::op(format!("cannot write {}: {e}", p.display())))
    }

    /// Write the manifest, move the run into place and update the pointer.
    /// The short hash covers the command, resolved config and input hashes.
    pub fn commit(mut self, config: &RunConfig) -> Result<PathBuf, CliError> {
        let outputs = hash_tree(&self.staging).map_err(CliError::op)?;
        let config_json = serde_json::to_string(config).map_err(CliError::op)?;
        let mut h = Sha256::new();
        h.update(self.command.as_bytes());
        h.update([0]);
        h.update(config_json.as_bytes());
        for (k, v) in &self.inputs {
            h.update([0]);
            h.update(k.as_bytes());
            h.update([0]);
            h.update(v.as_bytes());
        }
        let short = &hex::encode(h.finalize())[..8];
        let now = chrono::Utc::now();
        let stamp = now.format("%Y%m%dT%H%M%S%3fZ").to_string();
        let mut run_id = format!("{stamp}-{short}");
        let mut n = 1;
        while self.out_root.join(&run_id).exists() {
            n += 1;
            run_id = format!("{stamp}-{short}-{n}");
        }
        let manifest = Manifest {
            run_id: &run_id,
            command: &self.command,
            created_at: now.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            tool_version: env!("CARGO_PKG_VERSION"),
            config,
            inputs: &self.inputs,
            outputs,
        };
        self.write_json(MANIFEST_FILE, &manifest)?;
        let dest = self.out_root.join(&run_id);
        fs::rename(&self.staging, &dest)
            .map_err(|e| CliError::op(format!("cannot move run into {}: {e}", dest.display())))?;
        self.committed = true;
        let pointer = latest_pointer(&self.out_root, &self.command);
        let tmp = self.out_root.join(format!(".LATEST-{}.tmp-{}", self.command, std::process::id()));
        fs::write(&tmp, format!("{run_id}\n")).and_then(|_| fs::rename(&tmp, &pointer)).map_err(CliError::op)?;
        Ok(dest)
    }
}

impl Drop for RunBuilder {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

pub fn latest_pointer(out_root: &Path, command: &str) -> PathBuf {
    out_root.join(format!("LATEST-{command}"))
}

/// Directory of the newest committed run of `command`.
pub fn latest_run(out_root: &Path, command: &str) -> Result<PathBuf, CliError> {
    let pointer = latest_pointer(out_root, command);
    let hint = format!("run `phyto {command}` first or pass --input");
    let id = fs::read_to_string(&pointer).map_err(|_| CliError::missing(&pointer, hint.clone()))?;
    let dir = out_root.join(id.trim());
    if !dir.is_dir() {
        return Err(CliError::missing(&dir, hint));
    }
    Ok(dir)
}

/// A file inside an upstream run; `explicit` overrides the pointer lookup.
pub fn upstream_file(
    out_root: &Path,
    command: &str,
    explicit: Option<&Path>,
    file: &str,
) -> Result<PathBuf, CliError> {
    let dir = match explicit {
        Some(d) => d.to_path_buf(),
        None => latest_run(out_root, command)?,
    };
    let p = dir.join(file);
    if !p.exists() {
        return Err(CliError::missing(&p, format!("expected output of `phyto {command}`")));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_moves_run_and_updates_pointer() {
        let root = tempfile::tempdir().unwrap();
        let input = root.path().join("in.txt");
        fs::write(&input, "abc").unwrap();
        let cfg = RunConfig::default();
        let mut run = RunBuilder::start(root.path(), "clean").unwrap();
        run.record_input(&input).unwrap();
        run.write_bytes("out.txt", b"hello").unwrap();
        let dir = run.commit(&cfg).unwrap();
        assert_eq!(latest_run(root.path(), "clean").unwrap(), dir);
        let m: serde_json::Value = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(m["outputs"]["out.txt"], sha256_file(&dir.join("out.txt")).unwrap());
        assert_eq!(m["inputs"][input.display().to_string()], sha256_file(&input).unwrap());
        assert_eq!(m["config"]["seed"], 0);
        let staged: Vec<_> = fs::read_dir(root.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with(".staging"))
            .collect();
        assert!(staged.is_empty());
    }

    #[test]
    fn dropped_run_leaves_nothing() {
        let root = tempfile::tempdir().unwrap();
        {
            let run = RunBuilder::start(root.path(), "train").unwrap();
            run.write_bytes("partial.bin", b"x").unwrap();
        }
        assert_eq!(fs::read_dir(root.path()).unwrap().count(), 0);
        assert!(matches!(latest_run(root.path(), "train"), Err(CliError::MissingUpstream { .. })));
    }

    #[test]
    fn same_inputs_in_same_instant_get_distinct_dirs() {
        let root = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let a = RunBuilder::start(root.path(), "x").unwrap().commit(&cfg).unwrap();
        let b = RunBuilder::start(root.path(), "x").unwrap().commit(&cfg).unwrap();
        assert_ne!(a, b);
    }
}
