//! Key files: one line per instance, `instance_id SPACE sense_key
//! [SPACE sense_key ...]`.

use super::CorpusError;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

/// Instance id → accepted sense keys.
pub type KeyMap = BTreeMap<String, BTreeSet<String>>;

/// Parses a key file. Blank lines and lines without at least one key are
/// skipped with a warning rather than failing the run.
pub fn parse_key_file(r: impl BufRead) -> Result<(KeyMap, Vec<String>), CorpusError> {
    let mut keys = KeyMap::new();
    let mut warnings = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::BadKeyFile {
            line: i + 1,
            msg: e.to_string(),
        })?;
        let mut fields = line.split_whitespace();
        let Some(id) = fields.next() else { continue };
        let senses: BTreeSet<String> = fields.map(|s| s.to_string()).collect();
        if senses.is_empty() {
            warnings.push(format!(
                "key file line {}: no sense key for \"{id}\"; skipped",
                i + 1
            ));
            continue;
        }
        keys.entry(id.to_string()).or_default().extend(senses);
    }
    Ok((keys, warnings))
}

/// Writes keys in parse order (sorted by instance id), multi-keys
/// space-separated.
pub fn write_key_file(keys: &KeyMap, mut w: impl Write) -> std::io::Result<()> {
    for (id, senses) in keys {
        write!(w, "{id}")?;
        for sense in senses {
            write!(w, " {sense}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
