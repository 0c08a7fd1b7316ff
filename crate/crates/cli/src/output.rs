//! Run directories: atomically written artifacts plus a checksummed manifest.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::invocation::Invocation;

pub const MANIFEST: &str = "manifest.json";
pub const ARTIFACT: &str = "scrambled-run";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact: String,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
    pub invocation: Invocation,
    pub files: Vec<FileEntry>,
}

/// Single writer for one run directory. The directory is created on first
/// write; a run dropped before [`RunDir::finish`] removes what it wrote.
pub struct RunDir {
    path: PathBuf,
    files: Vec<FileEntry>,
    created_dir: bool,
    finished: bool,
}

struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
    bytes: u64,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        self.bytes += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp-{}", std::process::id()));
    path.with_file_name(name)
}

/// Streams into a sibling temp file, then renames over `path`.
fn write_atomic<F>(path: &Path, fill: F) -> Result<(u64, String)>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let tmp = temp_path(path);
    let result = (|| {
        let file = File::create(&tmp)?;
        let mut w = HashingWriter {
            inner: BufWriter::new(file),
            hasher: Sha256::new(),
            bytes: 0,
        };
        fill(&mut w)?;
        w.flush()?;
        let HashingWriter { inner, hasher, bytes } = w;
        let file = inner.into_inner().map_err(|e| e.into_error())?;
        file.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok((bytes, hex::encode(hasher.finalize())))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(|e| CliError::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<(u64, String)> {
    let mut file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let bytes = io::copy(&mut file, &mut hasher).map_err(|e| CliError::io(path, e))?;
    Ok((bytes, hex::encode(hasher.finalize())))
}

impl RunDir {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        RunDir {
            path: path.into(),
            files: Vec::new(),
            created_dir: false,
            finished: false,
        }
    }

    fn ensure_dir(&mut self) -> Result<()> {
        if !self.path.is_dir() {
            fs::create_dir_all(&self.path).map_err(|e| CliError::io(&self.path, e))?;
            self.created_dir = true;
        }
        Ok(())
    }

    pub fn write_with<F>(&mut self, name: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> io::Result<()>,
    {
        self.ensure_dir()?;
        let (bytes, sha256) = write_atomic(&self.path.join(name), fill)?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry {
            name: name.to_string(),
            bytes,
            sha256,
        });
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        self.write_with(name, |w| w.write_all(text.as_bytes()))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("output serializes");
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Writes the manifest last, so a present manifest means a complete run.
    pub fn finish(mut self, invocation: Invocation, started_at: String) -> Result<PathBuf> {
        self.ensure_dir()?;
        self.files.sort_by(|a, b| a.name.cmp(&b.name));
        let manifest = Manifest {
            artifact: ARTIFACT.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            started_at,
            finished_at: now(),
            invocation,
            files: self.files.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(&self.path.join(MANIFEST), |w| w.write_all(text.as_bytes()))?;
        self.finished = true;
        Ok(self.path.clone())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if self.finished {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(self.path.join(&f.name));
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.path);
        }
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Manifest {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if manifest.artifact != ARTIFACT {
        return Err(CliError::Manifest {
            path: path.to_path_buf(),
            reason: format!("artifact is {:?}, expected {ARTIFACT:?}", manifest.artifact),
        });
    }
    Ok(manifest)
}

/// Recomputes every recorded checksum; returns the number of files checked.
pub fn verify(dir: &Path) -> Result<usize> {
    let manifest = read_manifest(&dir.join(MANIFEST))?;
    for entry in &manifest.files {
        if entry.name.contains(['/', '\\']) || entry.name == ".." {
            return Err(CliError::Manifest {
                path: dir.join(MANIFEST),
                reason: format!("file name {:?} escapes the run directory", entry.name),
            });
        }
        let (bytes, sha) = sha256_file(&dir.join(&entry.name))?;
        if sha != entry.sha256 || bytes != entry.bytes {
            return Err(CliError::ChecksumMismatch {
                file: entry.name.clone(),
                expected: entry.sha256.clone(),
                actual: sha,
            });
        }
    }
    Ok(manifest.files.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::Family;
    use crate::invocation::Task;

    fn invocation() -> Invocation {
        Invocation {
            task: Task::SpectrumGenerate {
                family: Family::Rem,
                n: 3,
                kind: None,
                marked: None,
                offset: 0.0,
                driver_scale: None,
            },
            gnuplot: false,
        }
    }

    #[test]
    fn manifest_checksums_validate_and_detect_tampering() {
        let tmp = tempfile::tempdir().unwrap();
        let mut run = RunDir::new(tmp.path().join("run"));
        run.write_text("a.csv", "x,y\n1,2\n").unwrap();
        run.write_json("b.json", &serde_json::json!({"k": 1})).unwrap();
        let dir = run.finish(invocation(), now()).unwrap();
        assert_eq!(verify(&dir).unwrap(), 2);
        let names: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 3, "temp files left behind: {names:?}");

        fs::write(dir.join("a.csv"), "x,y\n1,3\n").unwrap();
        assert!(matches!(verify(&dir), Err(CliError::ChecksumMismatch { .. })));
    }

    #[test]
    fn unfinished_run_leaves_nothing_behind() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        {
            let mut run = RunDir::new(&dir);
            run.write_text("a.csv", "x\n").unwrap();
            assert!(dir.join("a.csv").exists());
        }
        assert!(!dir.exists());
    }

    #[test]
    fn sha256_of_known_input() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("abc");
        fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap().1,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = RunDir::new(tmp.path()).finish(invocation(), now()).unwrap();
        let m = read_manifest(&dir.join(MANIFEST)).unwrap();
        assert_eq!(m.invocation, invocation());
        assert_eq!(m.version, env!("CARGO_PKG_VERSION"));
    }
}
