//! HMZ1 model files.
//!
//! ```text
//! "HMZ1" | u32 header length | JSON header | records...
//! record = u32 name length | UTF-8 name | HTF blob
//! ```
//!
//! Records are written in [`ParamSet`] order but looked up by name on load.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::htf::{self, ByteReader};
use crate::model::params::{ArchConfig, HemisParams};
use crate::nn::ParamSet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"HMZ1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    dtype: String,
    arch: ArchConfig,
    modality_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel<T> {
    pub params: HemisParams<T>,
    pub modality_names: Vec<String>,
}

pub fn encode_model<T: Scalar>(params: &HemisParams<T>, modality_names: &[String]) -> Result<Vec<u8>> {
    params.validate()?;
    if modality_names.len() != params.arch.modalities {
        return Err(Error::InvalidArgument(format!(
            "{} modality names for {} modalities",
            modality_names.len(),
            params.arch.modalities
        )));
    }
    let header = serde_json::to_vec(&Header {
        format_version: FORMAT_VERSION,
        dtype: T::DTYPE.name().to_string(),
        arch: params.arch,
        modality_names: modality_names.to_vec(),
    })?;
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for (name, t) in params.named_tensors() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&htf::encode(t));
    }
    Ok(out)
}

pub fn decode_model<T: Scalar>(bytes: &[u8]) -> Result<SavedModel<T>> {
    let mut r = ByteReader::new(bytes);
    r.magic(MAGIC)?;
    let len = r.u32("header length")? as usize;
    let header: Header = serde_json::from_slice(r.take(len, "header")?)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(header.format_version));
    }
    if header.dtype != T::DTYPE.name() {
        return Err(Error::DtypeMismatch {
            found: if header.dtype == "f64" { "f64" } else { "f32" },
            requested: T::DTYPE.name(),
        });
    }
    header.arch.validate()?;
    if header.modality_names.len() != header.arch.modalities {
        return Err(Error::Malformed("modality names do not match the architecture".into()));
    }

    let mut records: HashMap<String, Tensor<T>> = HashMap::new();
    while !r.is_at_end() {
        let n = r.u32("record name length")? as usize;
        let name = std::str::from_utf8(r.take(n, "record name")?)
            .map_err(|_| Error::Malformed("record name is not UTF-8".into()))?
            .to_string();
        let t = htf::read_tensor(&mut r)?;
        if records.insert(name.clone(), t).is_some() {
            return Err(Error::Malformed(format!("duplicate record {name}")));
        }
    }

    let mut params = placeholder::<T>(header.arch)?;
    for (name, slot) in params.named_tensors_mut() {
        *slot = records.remove(&name).ok_or(Error::MissingEntry(name))?;
    }
    if let Some(extra) = records.keys().min() {
        return Err(Error::Malformed(format!("unexpected record {extra}")));
    }
    params.validate()?;
    Ok(SavedModel {
        params,
        modality_names: header.modality_names,
    })
}

// Correctly shaped zero parameters, overwritten record by record.
fn placeholder<T: Scalar>(arch: ArchConfig) -> Result<HemisParams<T>> {
    Ok(HemisParams::<T>::init(arch, &mut crate::rng::Rng::new(0))?.zeros_like())
}

pub fn save_model<T: Scalar>(
    params: &HemisParams<T>,
    modality_names: &[String],
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, encode_model(params, modality_names)?)?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<SavedModel<T>> {
    decode_model(&fs::read(path)?)
}
