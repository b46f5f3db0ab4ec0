//! Layering a TOML config file over values built from command-line flags.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

/// Keys that select an enum variant. When the file names a different variant
/// than the flags, the file's table replaces the flag table instead of merging.
const TAGS: [&str; 2] = ["kind", "rule"];

pub fn merge(base: &mut Table, overlay: Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) if same_variant(b, &o) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn same_variant(base: &Table, overlay: &Table) -> bool {
    TAGS.iter().all(|t| match (base.get(*t), overlay.get(*t)) {
        (Some(a), Some(b)) => a == b,
        _ => true,
    })
}

/// `from_flags` with every value in the file at `path` taking precedence.
pub fn resolve<T: Serialize + DeserializeOwned>(from_flags: T, path: Option<&Path>) -> Result<T, String> {
    let Some(path) = path else { return Ok(from_flags) };
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let overlay: Table = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut base = Table::try_from(&from_flags).map_err(|e| format!("cannot encode flags: {e}"))?;
    merge(&mut base, overlay);
    Value::Table(base).try_into().map_err(|e| format!("{}: {e}", path.display()))
}
