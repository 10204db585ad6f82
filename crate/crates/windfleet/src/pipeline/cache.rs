//! Content-addressed stage cache. Every stage output lives in a
//! directory named by the sha-256 of the stage's inputs (config slice
//! plus upstream digests), so mutating any input re-keys exactly the
//! downstream entries. A MANIFEST file written after the payload marks
//! an entry complete; directories are committed by rename so readers
//! never observe a half-written entry.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{PipelineError, Stage};

/// Hash of length-prefixed parts; prefixing keeps `["ab","c"]` and
/// `["a","bc"]` distinct.
pub(crate) fn digest_of(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(u64::try_from(part.len()).expect("part length").to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hex(&hasher.finalize())
}

pub(crate) fn digest_of_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub(crate) struct CacheStore {
    root: PathBuf,
}

impl CacheStore {
    pub fn open(root: PathBuf) -> Result<Self, PipelineError> {
        fs::create_dir_all(&root).map_err(|e| {
            PipelineError::Config(format!("cache dir {}: {e}", root.display()))
        })?;
        Ok(Self { root })
    }

    pub fn entry_dir(&self, stage: Stage, digest: &str) -> PathBuf {
        self.root.join(stage.label()).join(digest)
    }

    fn is_complete(dir: &Path) -> bool {
        dir.join("MANIFEST").is_file()
    }

    /// Returns the entry directory plus whether it was served from
    /// cache. On a miss (or `force`) `build` fills a work directory
    /// that is renamed into place after a MANIFEST is added.
    pub fn materialize<F>(
        &self,
        stage: Stage,
        digest: &str,
        force: bool,
        build: F,
    ) -> Result<(PathBuf, bool), PipelineError>
    where
        F: FnOnce(&Path) -> Result<(), PipelineError>,
    {
        let dir = self.entry_dir(stage, digest);
        if !force && Self::is_complete(&dir) {
            return Ok((dir, true));
        }
        let stage_dir = self.root.join(stage.label());
        let wip = stage_dir.join(format!(".wip-{digest}"));
        let io_err = |e: io::Error| PipelineError::Stage {
            stage,
            message: format!("cache {}: {e}", wip.display()),
        };
        if wip.exists() {
            fs::remove_dir_all(&wip).map_err(io_err)?;
        }
        fs::create_dir_all(&wip).map_err(io_err)?;
        match build(&wip) {
            Ok(()) => {}
            Err(e) => {
                let _ = fs::remove_dir_all(&wip);
                return Err(e);
            }
        }
        fs::write(wip.join("MANIFEST"), format!("{} {digest}\n", stage.label())).map_err(io_err)?;
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(io_err)?;
        }
        fs::rename(&wip, &dir).map_err(io_err)?;
        Ok((dir, false))
    }

    /// Entry for a stage that must already be cached (running with
    /// `--only` past its upstream).
    pub fn require(&self, stage: Stage, digest: &str) -> Result<PathBuf, PipelineError> {
        let dir = self.entry_dir(stage, digest);
        if Self::is_complete(&dir) {
            Ok(dir)
        } else {
            Err(PipelineError::Stage {
                stage,
                message: format!(
                    "no cached output for {} (digest {}); run the stage first",
                    stage.label(),
                    &digest[..12]
                ),
            })
        }
    }
}

/// Writes `bytes` to `path` through a sibling temp file and rename, so
/// a crash never leaves a torn file at the final name.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(parent)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = parent.join(format!(".tmp-{name}"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_are_stable_and_prefix_safe() {
        assert_eq!(digest_of(&["a", "bc"]).len(), 64);
        assert_ne!(digest_of(&["a", "bc"]), digest_of(&["ab", "c"]));
        assert_eq!(digest_of(&["x"]), digest_of(&["x"]));
    }

    #[test]
    fn materialize_hits_after_first_build() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CacheStore::open(tmp.path().join("cache")).unwrap();
        let digest = digest_of(&["unit"]);
        let mut builds = 0;
        for expect_hit in [false, true] {
            let (dir, hit) = store
                .materialize(Stage::Wind, &digest, false, |work| {
                    builds += 1;
                    fs::write(work.join("payload"), b"v1").unwrap();
                    Ok(())
                })
                .unwrap();
            assert_eq!(hit, expect_hit);
            assert_eq!(fs::read(dir.join("payload")).unwrap(), b"v1");
        }
        assert_eq!(builds, 1);
    }

    #[test]
    fn failed_build_leaves_no_entry() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CacheStore::open(tmp.path().join("cache")).unwrap();
        let digest = digest_of(&["boom"]);
        let err = store
            .materialize(Stage::Wind, &digest, false, |_| {
                Err(PipelineError::Stage { stage: Stage::Wind, message: "boom".into() })
            })
            .unwrap_err();
        assert!(err.to_string().contains("boom"));
        assert!(store.require(Stage::Wind, &digest).is_err());
    }

    #[test]
    fn force_rebuilds_in_place() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CacheStore::open(tmp.path().join("cache")).unwrap();
        let digest = digest_of(&["force"]);
        store
            .materialize(Stage::Wind, &digest, false, |work| {
                fs::write(work.join("payload"), b"old").unwrap();
                Ok(())
            })
            .unwrap();
        let (dir, hit) = store
            .materialize(Stage::Wind, &digest, true, |work| {
                fs::write(work.join("payload"), b"new").unwrap();
                Ok(())
            })
            .unwrap();
        assert!(!hit);
        assert_eq!(fs::read(dir.join("payload")).unwrap(), b"new");
    }
}
