//! Versioned JSON envelopes for everything written to disk.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

/// Implemented by types persisted as `{"format": .., "version": .., ...}`.
pub trait Artifact: Serialize + DeserializeOwned {
    const FORMAT: &'static str;
    const VERSION: u32;
}

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    format: &'a str,
    version: u32,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Deserialize)]
struct Envelope<T> {
    #[serde(flatten)]
    body: T,
}

pub fn to_json<T: Artifact>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(&EnvelopeRef {
        format: T::FORMAT,
        version: T::VERSION,
        body: value,
    })?)
}

/// Returns the `format` tag of a JSON artifact without decoding the body.
pub fn peek_format(json: &str) -> Result<String> {
    let header: Header = serde_json::from_str(json)?;
    Ok(header.format)
}

pub fn from_json<T: Artifact>(json: &str) -> Result<T> {
    let header: Header = serde_json::from_str(json)?;
    if header.format != T::FORMAT {
        return Err(Error::Format(format!(
            "expected {:?}, found {:?}",
            T::FORMAT,
            header.format
        )));
    }
    if header.version != T::VERSION {
        return Err(Error::Format(format!(
            "{} version {} is not supported (expected {})",
            T::FORMAT,
            header.version,
            T::VERSION
        )));
    }
    let env: Envelope<T> = serde_json::from_str(json)?;
    Ok(env.body)
}

pub fn save<T: Artifact>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut json = to_json(value)?;
    json.push('\n');
    std::fs::write(path, json).map_err(io_err(path))
}

pub fn load<T: Artifact>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    from_json(&std::fs::read_to_string(path).map_err(io_err(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Thing {
        x: f64,
    }

    impl Artifact for Thing {
        const FORMAT: &'static str = "thing";
        const VERSION: u32 = 2;
    }

    #[test]
    fn envelope_round_trip_and_checks() {
        let json = to_json(&Thing { x: 0.1 + 0.2 }).unwrap();
        assert_eq!(peek_format(&json).unwrap(), "thing");
        assert_eq!(from_json::<Thing>(&json).unwrap(), Thing { x: 0.1 + 0.2 });
        let other = json.replace("\"thing\"", "\"other\"");
        assert!(matches!(from_json::<Thing>(&other), Err(Error::Format(_))));
        let old = json.replace("\"version\": 2", "\"version\": 1");
        assert!(matches!(from_json::<Thing>(&old), Err(Error::Format(_))));
    }
}
