//! Version-tagged JSON checkpoints. Every tensor is stored with its shape.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ENCODER_FORMAT: &str = "codemix-encoder";
pub const MTL_FORMAT: &str = "codemix-mtl";
pub const SINGLE_FORMAT: &str = "codemix-single";
pub const NB_FORMAT: &str = "codemix-ngram-nb";
pub const VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a, T> {
    format: &'a str,
    version: u32,
    model: &'a T,
}

#[derive(Deserialize)]
struct OwnedEnvelope<T> {
    format: String,
    version: u32,
    model: T,
}

pub fn to_string<T: Serialize>(format: &str, model: &T) -> Result<String> {
    Ok(serde_json::to_string(&Envelope {
        format,
        version: VERSION,
        model,
    })?)
}

pub fn from_str<T: DeserializeOwned>(text: &str, format: &str) -> Result<T> {
    #[derive(Deserialize)]
    struct Header {
        format: String,
        version: u32,
    }
    let header: Header = serde_json::from_str(text)?;
    if header.format != format {
        return Err(Error::Format(format!("expected a `{format}` file, found `{}`", header.format)));
    }
    if header.version != VERSION {
        return Err(Error::Format(format!("{format} version {} (supported: {VERSION})", header.version)));
    }
    let env: OwnedEnvelope<T> = serde_json::from_str(text)?;
    debug_assert_eq!((env.format.as_str(), env.version), (format, VERSION));
    Ok(env.model)
}

pub fn save<T: Serialize>(path: impl AsRef<Path>, format: &str, model: &T) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_string(format, model)?).map_err(|e| Error::io(path, e))
}

pub fn load<T: DeserializeOwned>(path: impl AsRef<Path>, format: &str) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&text, format)
}
