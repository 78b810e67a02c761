//! Layered configuration: built-in defaults, then a `key = value` file with
//! `[sections]`, then `--set section.key=value` flags.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    text.parse::<Table>().with_context(|| format!("parsing config {}", path.display()))
}

/// Parses `a.b.c=value` into a nested single-entry table. The value is read
/// as a TOML literal when possible and as a bare string otherwise.
pub fn parse_assignment(text: &str) -> Result<Table> {
    let (path, raw) = text.split_once('=').ok_or_else(|| anyhow!("expected key=value, got {text:?}"))?;
    let keys: Vec<&str> = path.trim().split('.').map(str::trim).collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("empty key in {text:?}");
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let mut out = Value::Table(Table::new());
    let mut node = &mut out;
    for (i, key) in keys.iter().enumerate() {
        let next = if i + 1 == keys.len() { value.clone() } else { Value::Table(Table::new()) };
        let table = node.as_table_mut().expect("intermediate nodes are tables");
        node = table.entry(key.to_string()).or_insert(next);
    }
    match out {
        Value::Table(t) => Ok(t),
        _ => unreachable!(),
    }
}

/// Overlays `patch` onto `base`. Keys must already exist in `base`. Tables
/// are merged recursively, except tagged enums (tables with a `kind` key),
/// which are replaced whole.
pub fn merge(base: &mut Table, patch: &Table, prefix: &str) -> Result<()> {
    for (key, value) in patch {
        let name = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        let Some(slot) = base.get_mut(key) else {
            let mut known: Vec<&String> = base.keys().collect();
            known.sort();
            let known: Vec<&str> = known.iter().map(|s| s.as_str()).collect();
            bail!("unknown key {name:?} (expected one of: {})", known.join(", "));
        };
        match (slot, value) {
            (Value::Table(inner), Value::Table(p)) if !inner.contains_key("kind") => merge(inner, p, &name)?,
            (slot, value) => *slot = value.clone(),
        }
    }
    Ok(())
}

/// Applies every patch to `base` in order.
pub fn layered<T: Serialize + DeserializeOwned>(base: &T, patches: &[Table]) -> Result<T> {
    let mut table = Table::try_from(base).context("serializing defaults")?;
    for p in patches {
        merge(&mut table, p, "")?;
    }
    Value::Table(table).try_into().context("invalid configuration value")
}
