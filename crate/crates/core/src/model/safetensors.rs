//! Minimal reader and writer for the safetensors container format.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use ndarray::{ArrayD, ArrayViewD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Serialize, Deserialize)]
struct TensorInfo {
    dtype: String,
    shape: Vec<usize>,
    data_offsets: (usize, usize),
}

pub fn serialize(tensors: &[(String, ArrayViewD<'_, f64>)], metadata: &BTreeMap<String, String>) -> Result<Vec<u8>> {
    let mut header = serde_json::Map::new();
    if !metadata.is_empty() {
        header.insert("__metadata__".into(), serde_json::to_value(metadata)?);
    }
    let mut data = Vec::new();
    for (name, t) in tensors {
        let start = data.len();
        for v in t.iter() {
            data.extend_from_slice(&v.to_le_bytes());
        }
        let info = TensorInfo {
            dtype: "F64".into(),
            shape: t.shape().to_vec(),
            data_offsets: (start, data.len()),
        };
        header.insert(name.clone(), serde_json::to_value(info)?);
    }
    let mut header = serde_json::to_string(&header)?.into_bytes();
    while header.len() % 8 != 0 {
        header.push(b' ');
    }
    let mut out = Vec::with_capacity(8 + header.len() + data.len());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&data);
    Ok(out)
}

pub fn save(path: &Path, tensors: &[(String, ArrayViewD<'_, f64>)], metadata: &BTreeMap<String, String>) -> Result<()> {
    util::write_bytes(path, &serialize(tensors, metadata)?)
}

pub struct Loaded {
    pub tensors: HashMap<String, ArrayD<f64>>,
    pub metadata: BTreeMap<String, String>,
}

pub fn deserialize(bytes: &[u8]) -> Result<Loaded> {
    let corrupt = |m: &str| Error::ArtifactCorrupt(format!("safetensors: {m}"));
    if bytes.len() < 8 {
        return Err(corrupt("file too short"));
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let body_start = 8usize
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("header overruns file"))?;
    let header: serde_json::Map<String, serde_json::Value> =
        serde_json::from_slice(&bytes[8..body_start]).map_err(|e| corrupt(&e.to_string()))?;
    let body = &bytes[body_start..];
    let mut tensors = HashMap::new();
    let mut metadata = BTreeMap::new();
    for (name, value) in header {
        if name == "__metadata__" {
            metadata = serde_json::from_value(value).map_err(|e| corrupt(&e.to_string()))?;
            continue;
        }
        let info: TensorInfo = serde_json::from_value(value).map_err(|e| corrupt(&e.to_string()))?;
        let (start, end) = info.data_offsets;
        let raw = body
            .get(start..end)
            .ok_or_else(|| corrupt(&format!("{name} out of bounds")))?;
        let count: usize = info.shape.iter().product();
        let values: Vec<f64> = match info.dtype.as_str() {
            "F64" if raw.len() == count * 8 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            "F32" if raw.len() == count * 4 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            other => return Err(corrupt(&format!("{name}: unsupported dtype {other} or size mismatch"))),
        };
        let array = ArrayD::from_shape_vec(IxDyn(&info.shape), values).map_err(|e| corrupt(&e.to_string()))?;
        tensors.insert(name, array);
    }
    Ok(Loaded { tensors, metadata })
}

pub fn load(path: &Path) -> Result<Loaded> {
    deserialize(&util::read_bytes(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn values_survive_bit_exact() {
        let a = array![[1.0, -2.5, f64::MIN_POSITIVE], [0.1, 1e300, -0.0]].into_dyn();
        let b = array![3.0f64].into_dyn();
        let mut meta = BTreeMap::new();
        meta.insert("format".to_string(), "test".to_string());
        let bytes = serialize(&[("a".into(), a.view()), ("b".into(), b.view())], &meta).unwrap();
        let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap());
        assert_eq!(header_len % 8, 0);
        let loaded = deserialize(&bytes).unwrap();
        assert_eq!(loaded.metadata, meta);
        let back = &loaded.tensors["a"];
        for (x, y) in back.iter().zip(a.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(loaded.tensors["b"], b);
    }

    #[test]
    fn truncated_files_are_corrupt() {
        let a = array![1.0f64, 2.0].into_dyn();
        let bytes = serialize(&[("a".into(), a.view())], &BTreeMap::new()).unwrap();
        assert!(matches!(
            deserialize(&bytes[..bytes.len() - 3]),
            Err(Error::ArtifactCorrupt(_))
        ));
        assert!(matches!(deserialize(&bytes[..4]), Err(Error::ArtifactCorrupt(_))));
    }
}
