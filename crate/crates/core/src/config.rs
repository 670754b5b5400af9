//! Plain `key = value` text files. `#` starts a comment.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    context: String,
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn parse(text: &str, context: impl Into<String>) -> Result<Self> {
        let context = context.into();
        let mut entries: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(
                    &context,
                    format!("line {}: expected `key = value`", lineno + 1),
                ));
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(Error::parse(&context, format!("line {}: empty key", lineno + 1)));
            }
            // later assignments win
            entries.retain(|(existing, _)| *existing != key);
            entries.push((key, v.trim().to_string()));
        }
        Ok(KeyValues { context, entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.display().to_string())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.iter().find(|(k, _)| *k == key).map(|(_, v)| v)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::parse(&self.context, format!("bad value for {key}: {v:?}")))
            })
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parsed(key)?
            .ok_or_else(|| Error::parse(&self.context, format!("missing key {key}")))
    }

    pub fn context(&self) -> &str {
        &self.context
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let kv = KeyValues::parse("a = 1\n# note\n\nb=two words # trailing\na = 3\n", "t").unwrap();
        assert_eq!(kv.get("b"), Some("two words"));
        assert_eq!(kv.require::<i32>("a").unwrap(), 3);
        assert_eq!(kv.parsed::<i32>("zzz").unwrap(), None);
        assert!(kv.require::<i32>("b").is_err());
        assert!(KeyValues::parse("novalue\n", "t").is_err());
    }
}
