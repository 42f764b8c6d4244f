//! Output hygiene: every artifact is written to a temp sibling and
//! renamed into place, and gets a `<name>.manifest` describing exactly
//! which inputs and knobs produced it.

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

fn tmp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Writes via a temp file in the same directory plus a rename, so a
/// crashed run never leaves a half-written artifact under the real name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_sibling(path);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {} into place", tmp.display()))?;
    Ok(())
}

/// Runs a library save function against the temp name, then renames.
pub fn persist<E>(path: &Path, save: impl FnOnce(&Path) -> Result<(), E>) -> Result<()>
where
    E: std::error::Error + Send + Sync + 'static,
{
    let tmp = tmp_sibling(path);
    save(&tmp).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {} into place", tmp.display()))?;
    Ok(())
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex(&hasher.finalize()))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reproducibility record written beside each artifact: the command, the
/// effective knobs, and a digest of every input. Two runs with identical
/// manifests produce byte-identical artifacts.
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str) -> Manifest {
        let mut entries = BTreeMap::new();
        entries.insert("command".to_string(), command.to_string());
        entries.insert(
            "tool_version".to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        );
        Manifest { entries }
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Manifest {
        self.entries.insert(key.to_string(), value.to_string());
        self
    }

    /// Records an input file as `input.<name>` with its content digest.
    pub fn input(&mut self, name: &str, path: &Path) -> Result<&mut Manifest> {
        self.entries.insert(
            format!("input.{name}"),
            format!("sha256:{}", sha256_hex(path)?),
        );
        Ok(self)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.entries {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(value);
            out.push('\n');
        }
        out
    }

    /// Writes `<output>.manifest` next to the artifact.
    pub fn write_beside(&self, output: &Path) -> Result<PathBuf> {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest");
        let path = output.with_file_name(name);
        write_atomic(&path, self.render().as_bytes())?;
        Ok(path)
    }
}
