//! Shallow fetches of git module sources into a local cache.
//!
//! Cache layout, under the cache root:
//!
//! ```text
//! git/<key>/            checkout of the source at the resolved commit
//! git/<key>/.git/
//! git/<key>.lock        held while a fetch is in progress
//! git/<key>.commit      resolved commit hash, written after a complete fetch
//! ```
//!
//! `<key>` is the first 16 hex digits of SHA-256 over `<url>#<revision>`
//! (`HEAD` when unpinned). Pinned checkouts are reused; unpinned sources are
//! fetched again on every resolution so they track the default branch.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant, SystemTime};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const LOCK_WAIT: Duration = Duration::from_secs(120);
const STALE_LOCK: Duration = Duration::from_secs(600);

/// Runs git with a fixed identity and no user configuration; returns trimmed stdout.
pub(crate) fn git(dir: Option<&Path>, args: &[&str], url: &str) -> Result<String> {
    let mut cmd = Command::new("git");
    if let Some(d) = dir {
        cmd.arg("-C").arg(d);
    }
    cmd.args(["-c", "user.name=evalkit", "-c", "user.email=evalkit@localhost", "-c", "init.defaultBranch=main"])
        .args(args)
        .env("GIT_TERMINAL_PROMPT", "0")
        .env("GIT_CONFIG_NOSYSTEM", "1");
    let out = cmd.output().map_err(|e| Error::Git {
        action: args.first().unwrap_or(&"").to_string(),
        url: url.to_string(),
        stderr: format!("cannot run git: {e}"),
    })?;
    if !out.status.success() {
        return Err(Error::Git {
            action: args.first().unwrap_or(&"").to_string(),
            url: url.to_string(),
            stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
        });
    }
    Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
}

pub fn cache_key(url: &str, revision: Option<&str>) -> String {
    let digest = Sha256::digest(format!("{url}#{}", revision.unwrap_or("HEAD")).as_bytes());
    hex::encode(&digest[..8])
}

struct LockGuard(PathBuf);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

fn acquire(lock: &Path) -> Result<LockGuard> {
    let start = Instant::now();
    loop {
        match OpenOptions::new().write(true).create_new(true).open(lock) {
            Ok(_) => return Ok(LockGuard(lock.to_path_buf())),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                let stale = std::fs::metadata(lock)
                    .and_then(|m| m.modified())
                    .ok()
                    .and_then(|t| SystemTime::now().duration_since(t).ok())
                    .is_some_and(|age| age > STALE_LOCK);
                if stale {
                    let _ = std::fs::remove_file(lock);
                    continue;
                }
                if start.elapsed() > LOCK_WAIT {
                    return Err(Error::io(
                        format!("timed out waiting for cache lock {}", lock.display()),
                        std::io::Error::from(std::io::ErrorKind::TimedOut),
                    ));
                }
                std::thread::sleep(Duration::from_millis(50));
            }
            Err(e) => return Err(Error::io(format!("cannot create lock {}", lock.display()), e)),
        }
    }
}

/// A fetched source: checkout directory and resolved commit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Checkout {
    pub dir: PathBuf,
    pub commit: String,
}

/// Fetches `url` at `revision` (default branch head when `None`) into the cache.
pub fn fetch(cache_root: &Path, url: &str, revision: Option<&str>) -> Result<Checkout> {
    let base = cache_root.join("git");
    std::fs::create_dir_all(&base).map_err(|e| Error::io(format!("cannot create {}", base.display()), e))?;
    let key = cache_key(url, revision);
    let dir = base.join(&key);
    let marker = base.join(format!("{key}.commit"));
    let _lock = acquire(&base.join(format!("{key}.lock")))?;

    if revision.is_some() {
        if let Ok(commit) = std::fs::read_to_string(&marker) {
            if dir.join(".git").exists() {
                return Ok(Checkout { dir, commit: commit.trim().to_string() });
            }
        }
    }
    let _ = std::fs::remove_file(&marker);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| Error::io(format!("cannot clear {}", dir.display()), e))?;
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(format!("cannot create {}", dir.display()), e))?;
    git(Some(&dir), &["init", "-q"], url)?;
    let want = revision.unwrap_or("HEAD");
    let shallow = git(Some(&dir), &["fetch", "-q", "--depth", "1", url, want], url);
    match shallow {
        Ok(_) => {
            git(Some(&dir), &["checkout", "-q", "--detach", "FETCH_HEAD"], url)?;
        }
        Err(shallow_err) => {
            // Some servers refuse shallow fetches of bare commit ids; fall back to a full fetch.
            let full = git(
                Some(&dir),
                &["fetch", "-q", url, "+refs/heads/*:refs/remotes/origin/*", "+refs/tags/*:refs/tags/*"],
                url,
            );
            if full.is_err() {
                return Err(shallow_err);
            }
            git(Some(&dir), &["checkout", "-q", "--detach", want], url)?;
        }
    }
    let commit = git(Some(&dir), &["rev-parse", "HEAD"], url)?;
    std::fs::write(&marker, &commit).map_err(|e| Error::io(format!("cannot write {}", marker.display()), e))?;
    Ok(Checkout { dir, commit })
}

/// Commit of the repository containing `dir`, if it is a git work tree with commits.
pub fn head_commit(dir: &Path) -> Option<String> {
    if !dir.join(".git").exists() {
        return None;
    }
    git(Some(dir), &["rev-parse", "HEAD"], &dir.display().to_string()).ok()
}
