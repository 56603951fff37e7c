//! Plain-text `key=value` files shared by dataset manifests, cluster
//! profiles and index manifests.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// One `key = value` pair per line. Blank lines and lines starting with `#`
/// are skipped; surrounding whitespace is trimmed. Duplicate keys are an
/// error.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::usage(format!("line {}: expected key=value", lineno + 1)))?;
        let k = k.trim().to_string();
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::usage(format!("line {}: duplicate key {k:?}", lineno + 1)));
        }
    }
    Ok(out)
}

pub(crate) fn get_parsed<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    kv.get(key)
        .map(|v| v.parse::<T>().map_err(|e| Error::usage(format!("bad value for {key}: {e}"))))
        .transpose()
}

pub(crate) fn require<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    get_parsed(kv, key)?.ok_or_else(|| Error::usage(format!("missing key {key:?}")))
}
