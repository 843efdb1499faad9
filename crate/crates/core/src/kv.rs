//! Flat `key = value` text records shared by config files and manifests.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Key to (1-based line, value). Blank lines and `#` comments are skipped;
/// duplicate keys are rejected.
pub type Entries = BTreeMap<String, (usize, String)>;

pub fn parse(text: &str) -> Result<Entries> {
    let mut out = Entries::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| Error::parse(line, "expected 'key = value'"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::parse(line, "empty key"));
        }
        if out.insert(key.to_string(), (line, value.trim().to_string())).is_some() {
            return Err(Error::parse(line, format!("duplicate key '{key}'")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let e = parse("# c\n a = 1 \n\nb=x=y\n").unwrap();
        assert_eq!(e["a"], (2, "1".to_string()));
        assert_eq!(e["b"].1, "x=y");
        assert!(matches!(parse("a\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("a=1\na=2\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse(" = 3"), Err(Error::Parse { .. })));
    }
}
