//! Flat `key = value` run configs.
//!
//! Values are numbers, bare or quoted strings, booleans, or one-level array
//! literals `[a, b, c]`. Complex entries are written `1.5-2i`, `3i`, `-i`.
//! `#` starts a comment.

use ebe_core::algebra::C64;
use ebe_core::poly::CPoly;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Scalar(String),
    Array(Vec<String>),
}

/// Every config problem names the key it is about (or `line N` for syntax).
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key \"{}\": {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { key: key.to_string(), message: message.into() }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    entries: BTreeMap<String, Value>,
}

fn unquote(s: &str) -> String {
    let t = s.trim();
    if t.len() >= 2 && ((t.starts_with('"') && t.ends_with('"')) || (t.starts_with('\'') && t.ends_with('\''))) {
        t[1..t.len() - 1].to_string()
    } else {
        t.to_string()
    }
}

/// `a`, `a+bi`, `a-bi`, `bi`, `i`, `-i`.
pub fn parse_complex(s: &str) -> Option<C64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if t.is_empty() {
        return None;
    }
    if let Ok(x) = t.parse::<f64>() {
        return Some(C64::new(x, 0.0));
    }
    let body = t.strip_suffix('i')?;
    // split at the last sign that is not at the start or right after an exponent marker
    let bytes = body.as_bytes();
    let mut split = None;
    for p in (1..bytes.len()).rev() {
        if (bytes[p] == b'+' || bytes[p] == b'-') && !matches!(bytes[p - 1], b'e' | b'E') {
            split = Some(p);
            break;
        }
    }
    let imag = |s: &str| -> Option<f64> {
        match s {
            "" | "+" => Some(1.0),
            "-" => Some(-1.0),
            _ => s.parse().ok(),
        }
    };
    match split {
        Some(p) => Some(C64::new(body[..p].parse().ok()?, imag(&body[p..])?)),
        None => Some(C64::new(0.0, imag(body)?)),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(err(&format!("line {}", ln + 1), "expected `key = value`"));
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(err(&format!("line {}", ln + 1), "empty key"));
            }
            let v = v.trim();
            let value = if let Some(inner) = v.strip_prefix('[') {
                let Some(inner) = inner.strip_suffix(']') else {
                    return Err(err(&key, "unterminated array literal"));
                };
                let items: Vec<String> =
                    if inner.trim().is_empty() { Vec::new() } else { inner.split(',').map(unquote).collect() };
                if items.iter().any(|s| s.is_empty()) {
                    return Err(err(&key, "empty array element"));
                }
                Value::Array(items)
            } else {
                Value::Scalar(unquote(v))
            };
            if entries.insert(key.clone(), value).is_some() {
                return Err(err(&key, "duplicate key"));
            }
        }
        Ok(RunConfig { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    fn scalar(&self, key: &str) -> Result<Option<&str>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(Value::Scalar(s)) => Ok(Some(s)),
            Some(Value::Array(_)) => Err(err(key, "expected a scalar, found an array")),
        }
    }

    fn array(&self, key: &str) -> Result<Option<&[String]>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => Ok(Some(a)),
            Some(Value::Scalar(_)) => Err(err(key, "expected an array literal")),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.scalar(key)? {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| err(key, format!("not a number: {s}"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.scalar(key)? {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| err(key, format!("not a non-negative integer: {s}"))),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.scalar(key)? {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| err(key, format!("not a non-negative integer: {s}"))),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.scalar(key)? {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(s) => Err(err(key, format!("expected true or false, got {s}"))),
        }
    }

    pub fn str_opt(&self, key: &str) -> Result<Option<String>, ConfigError> {
        Ok(self.scalar(key)?.map(str::to_string))
    }

    /// A string that must be one of `choices`.
    pub fn choice_or(&self, key: &str, choices: &[&str], default: &str) -> Result<String, ConfigError> {
        let v = self.scalar(key)?.unwrap_or(default);
        if choices.contains(&v) {
            Ok(v.to_string())
        } else {
            Err(err(key, format!("expected one of {choices:?}, got {v}")))
        }
    }

    pub fn f64_array(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(a) = self.array(key)? else { return Ok(None) };
        a.iter()
            .map(|s| s.parse().map_err(|_| err(key, format!("not a number: {s}"))))
            .collect::<Result<_, _>>()
            .map(Some)
    }

    pub fn f64_array_req(&self, key: &str, len: usize) -> Result<Vec<f64>, ConfigError> {
        let v = self.f64_array(key)?.ok_or_else(|| err(key, "missing required key"))?;
        if v.len() != len {
            return Err(err(key, format!("expected {len} entries, found {}", v.len())));
        }
        Ok(v)
    }

    pub fn usize_array(&self, key: &str) -> Result<Option<Vec<usize>>, ConfigError> {
        let Some(a) = self.array(key)? else { return Ok(None) };
        a.iter()
            .map(|s| s.parse().map_err(|_| err(key, format!("not a non-negative integer: {s}"))))
            .collect::<Result<_, _>>()
            .map(Some)
    }

    pub fn str_array(&self, key: &str) -> Result<Option<Vec<String>>, ConfigError> {
        Ok(self.array(key)?.map(|a| a.to_vec()))
    }

    /// Coefficients in ascending powers of z.
    pub fn poly(&self, key: &str) -> Result<Option<CPoly>, ConfigError> {
        let Some(a) = self.array(key)? else { return Ok(None) };
        if a.is_empty() {
            return Err(err(key, "empty coefficient list"));
        }
        let c: Vec<C64> = a
            .iter()
            .map(|s| parse_complex(s).ok_or_else(|| err(key, format!("not a complex number: {s}"))))
            .collect::<Result<_, _>>()?;
        Ok(Some(CPoly::new(c)))
    }

    pub fn poly_req(&self, key: &str) -> Result<CPoly, ConfigError> {
        self.poly(key)?.ok_or_else(|| err(key, "missing required key"))
    }

    /// Fails on keys outside `allowed`, naming the first one.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(err(k, "unknown key for this scenario")),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_scalars_arrays_and_comments() {
        let c = RunConfig::parse("# run\nP = [1, 0, 2i]\nbox = [2, 0.05, 6] # trailing\nname = \"a b\"\nflag = true\n")
            .unwrap();
        assert_eq!(
            c.poly_req("P").unwrap(),
            CPoly::new(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 2.0)])
        );
        assert_eq!(c.f64_array_req("box", 3).unwrap(), vec![2.0, 0.05, 6.0]);
        assert_eq!(c.str_opt("name").unwrap().as_deref(), Some("a b"));
        assert!(c.bool_or("flag", false).unwrap());
        assert_eq!(c.f64_or("missing", 1.5).unwrap(), 1.5);
    }

    #[test]
    fn errors_name_the_key() {
        let c = RunConfig::parse("grid = 3\ntol = x").unwrap();
        assert_eq!(c.f64_array_req("grid", 3).unwrap_err().key, "grid");
        assert_eq!(c.f64_or("tol", 1.0).unwrap_err().key, "tol");
        assert_eq!(c.f64_array_req("box", 3).unwrap_err().key, "box");
        assert_eq!(RunConfig::parse("a = 1\na = 2").unwrap_err().key, "a");
        assert_eq!(RunConfig::parse("junk").unwrap_err().key, "line 1");
        assert_eq!(c.check_keys(&["grid"]).unwrap_err().key, "tol");
    }

    #[test]
    fn complex_literals() {
        let cases = [
            ("1", C64::new(1.0, 0.0)),
            ("-2.5e-3", C64::new(-2.5e-3, 0.0)),
            ("3i", C64::new(0.0, 3.0)),
            ("-i", C64::new(0.0, -1.0)),
            ("1-2i", C64::new(1.0, -2.0)),
            ("1e-2+1e+1i", C64::new(1e-2, 10.0)),
        ];
        for (s, v) in cases {
            assert_eq!(parse_complex(s), Some(v), "{s}");
        }
        assert_eq!(parse_complex("abc"), None);
    }
}
