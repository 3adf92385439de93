//! Output directories. Every artifact is recorded as it is written; `finish`
//! writes a `MANIFEST` listing each file with its SHA-256. A directory whose
//! MANIFEST matches the files on disk counts as complete.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "MANIFEST";

pub struct RunDir {
    root: PathBuf,
    files: BTreeSet<String>,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root,
            files: BTreeSet::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.files.insert(rel.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text)
    }

    /// Registers a file some other routine already wrote under the root.
    pub fn record(&mut self, rel: &str) {
        self.files.insert(rel.to_string());
    }

    pub fn finish(self) -> Result<()> {
        let mut listing = String::new();
        for rel in &self.files {
            let path = self.root.join(rel);
            let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            listing.push_str(&format!("{}  {rel}\n", sha256_hex(&bytes)));
        }
        let path = self.root.join(MANIFEST);
        fs::write(&path, listing).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// True when `dir/MANIFEST` exists, is non-empty and every listed file is
/// present with the recorded hash.
pub fn is_complete(dir: &Path) -> bool {
    let Ok(listing) = fs::read_to_string(dir.join(MANIFEST)) else {
        return false;
    };
    let mut any = false;
    for line in listing.lines() {
        let Some((hash, rel)) = line.split_once("  ") else {
            return false;
        };
        match fs::read(dir.join(rel)) {
            Ok(bytes) if sha256_hex(&bytes) == hash => any = true,
            _ => return false,
        }
    }
    any
}
