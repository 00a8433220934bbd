use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use super::{ModelConfig, ModelError, Transformer};
use crate::tensor::Tensor;

const MAGIC: &str = "CASCADE-ASR-CHECKPOINT 1";

/// A model configuration, free-form metadata and named `f32` tensors.
///
/// On disk: a text header (magic line, the configuration as TOML, metadata
/// lines, one `name d0xd1 offset` line per tensor, `end <bytes>`) followed by
/// the little-endian `f32` blob. Values are stored as `f32`, so a round trip
/// is exact for parameters that are already `f32`-representable.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub meta: IndexMap<String, String>,
    pub tensors: IndexMap<String, Tensor>,
}

impl Checkpoint {
    pub fn from_model(model: &Transformer) -> Self {
        Checkpoint {
            config: model.config().clone(),
            meta: IndexMap::new(),
            tensors: model.params().iter().map(|(k, v)| (k.clone(), (**v).clone())).collect(),
        }
    }

    /// Rebuilds the model from the parameter tensors, ignoring any extra
    /// tensors such as optimizer state.
    pub fn to_model(&self) -> Result<Transformer, ModelError> {
        let params = Transformer::parameter_layout(&self.config)
            .into_iter()
            .filter_map(|(name, _)| self.tensors.get(&name).map(|t| (name, t.clone())))
            .collect();
        Transformer::from_parts(self.config.clone(), params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let config = toml::to_string(&self.config).expect("model config serializes");
        let mut header = format!("{MAGIC}\nconfig {}\n{config}", config.lines().count());
        if !config.ends_with('\n') {
            header.push('\n');
        }
        header.push_str(&format!("meta {}\n", self.meta.len()));
        for (k, v) in &self.meta {
            header.push_str(&format!("{k}={v}\n"));
        }
        header.push_str(&format!("tensors {}\n", self.tensors.len()));
        let mut offset = 0usize;
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            header.push_str(&format!("{name} {} {offset}\n", dims.join("x")));
            offset += 4 * t.len();
        }
        header.push_str(&format!("end {offset}\n"));
        let mut out = header.into_bytes();
        out.reserve(offset);
        for t in self.tensors.values() {
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    /// `origin` names the source in error messages.
    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self, ModelError> {
        let err = |message: String| ModelError::Checkpoint {
            path: origin.to_string(),
            message,
        };
        let mut pos = 0usize;
        let mut next_line = || -> Result<&str, ModelError> {
            let rest = &bytes[pos..];
            let nl = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| err("truncated header".into()))?;
            pos += nl + 1;
            std::str::from_utf8(&rest[..nl]).map_err(|_| err("header is not UTF-8".into()))
        };
        if next_line()? != MAGIC {
            return Err(err("not a checkpoint (bad magic line)".into()));
        }
        let count = |line: &str, key: &str| -> Result<usize, ModelError> {
            line.strip_prefix(key)
                .and_then(|n| n.trim().parse().ok())
                .ok_or_else(|| err(format!("expected `{key} <n>`, found `{line}`")))
        };
        let n = count(next_line()?, "config ")?;
        let mut config_text = String::new();
        for _ in 0..n {
            config_text.push_str(next_line()?);
            config_text.push('\n');
        }
        let config: ModelConfig = toml::from_str(&config_text).map_err(|e| err(format!("config: {e}")))?;
        let n = count(next_line()?, "meta ")?;
        let mut meta = IndexMap::new();
        for _ in 0..n {
            let line = next_line()?;
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("bad metadata line `{line}`")))?;
            meta.insert(k.to_string(), v.to_string());
        }
        let n = count(next_line()?, "tensors ")?;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let line = next_line()?;
            let parts: Vec<&str> = line.split(' ').collect();
            let parsed = (parts.len() == 3)
                .then(|| {
                    let shape: Option<Vec<usize>> = parts[1].split('x').map(|d| d.parse().ok()).collect();
                    Some((parts[0].to_string(), shape?, parts[2].parse::<usize>().ok()?))
                })
                .flatten();
            entries.push(parsed.ok_or_else(|| err(format!("bad tensor line `{line}`")))?);
        }
        let total = count(next_line()?, "end ")?;
        let blob = &bytes[pos..];
        if blob.len() != total {
            return Err(err(format!("blob holds {} bytes, header declares {total}", blob.len())));
        }
        let mut tensors = IndexMap::new();
        for (name, shape, offset) in entries {
            let len: usize = shape.iter().product();
            let end = offset + 4 * len;
            if end > total {
                return Err(err(format!("tensor {name} runs past the blob")));
            }
            let data = blob[offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| err(format!("tensor {name}: {e}")))?;
            tensors.insert(name, t);
        }
        Ok(Checkpoint { config, meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = fs::read(path).map_err(|e| ModelError::Checkpoint {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transformer::InputKind;

    #[test]
    fn round_trip_is_bit_exact() {
        let model = Transformer::new(ModelConfig::small(1, 8, 2, InputKind::Features, 6, 7), 3).unwrap();
        let mut ck = Checkpoint::from_model(&model);
        ck.meta.insert("step".into(), "12".into());
        ck.tensors.insert("adam.m.x".into(), Tensor::vector(vec![0.25, -1.5]).unwrap());
        let back = Checkpoint::from_bytes(&ck.to_bytes(), "mem").unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_model().unwrap(), model);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let model = Transformer::new(ModelConfig::small(1, 8, 2, InputKind::Tokens, 6, 7), 3).unwrap();
        let bytes = Checkpoint::from_model(&model).to_bytes();
        assert!(Checkpoint::from_bytes(b"hello\n", "x").is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1], "x").is_err());
        let mut ck = Checkpoint::from_model(&model);
        ck.tensors.shift_remove("dec.out.b");
        assert!(ck.to_model().is_err());
    }
}
