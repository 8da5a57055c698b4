//! Controller weight files.
//!
//! A file is a UTF-8 manifest of `key = value` lines opened by the magic
//! line `lde-weights` and closed by a line `end`, followed by every
//! parameter as a little-endian `f64` in [`Block::ORDER`](crate::neural::Block::ORDER)
//! (row-major within each block), followed by the 32-byte SHA-256 digest of
//! the parameter bytes.
//!
//! ```text
//! lde-weights
//! format_version = 1
//! H = 32
//! D = 30
//! N = 20
//! b = 5
//! seed = 7
//! params = 11272
//! order = W_f W_i W_c W_o b_f b_i b_c b_o W_F b_F W_C b_C
//! training_metadata = epochs_done=60
//! end
//! <params × 8 bytes><32-byte digest>
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{LdeError, Result};
use crate::neural::{Block, ControllerWeights, Dims};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "lde-weights";
const END: &[u8] = b"\nend\n";

#[derive(Clone, Debug, PartialEq)]
pub struct WeightFile {
    pub weights: ControllerWeights,
    pub bins: usize,
    pub seed: u64,
    /// Free-form single-line metadata, e.g. `epochs_done=12;alpha=0.005`.
    pub training_metadata: String,
}

impl WeightFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.weights.dims();
        let order: Vec<&str> = Block::ORDER.iter().map(|b| b.name()).collect();
        let meta = self.training_metadata.replace(['\n', '\r'], " ");
        let mut out = format!(
            "{MAGIC}\nformat_version = {FORMAT_VERSION}\nH = {}\nD = {}\nN = {}\nb = {}\nseed = {}\nparams = {}\norder = {}\ntraining_metadata = {meta}\nend\n",
            d.hidden,
            d.input,
            d.pop,
            self.bins,
            self.seed,
            d.param_count(),
            order.join(" "),
        )
        .into_bytes();
        let blob: Vec<u8> = self
            .weights
            .as_slice()
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        let digest = Sha256::digest(&blob);
        out.extend_from_slice(&blob);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .windows(END.len())
            .position(|w| w == END)
            .ok_or_else(|| LdeError::Parse("weight file header has no `end` line".into()))?;
        let header = std::str::from_utf8(&bytes[..split])
            .map_err(|_| LdeError::Parse("weight file header is not UTF-8".into()))?;
        let body = &bytes[split + END.len()..];

        let mut lines = header.lines();
        if lines.next() != Some(MAGIC) {
            return Err(LdeError::Parse("not an lde weight file".into()));
        }
        let mut fields = std::collections::HashMap::new();
        for line in lines {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| LdeError::Parse(format!("bad manifest line `{line}`")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<&String> {
            fields
                .get(k)
                .ok_or_else(|| LdeError::Parse(format!("manifest lacks `{k}`")))
        };
        let num = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| LdeError::Parse(format!("manifest `{k}` is not an integer")))
        };
        let version = num("format_version")?;
        if version != FORMAT_VERSION as u64 {
            return Err(LdeError::Parse(format!(
                "unsupported format_version {version}"
            )));
        }
        let dims = Dims::new(num("H")? as usize, num("D")? as usize, num("N")? as usize)?;
        let bins = num("b")? as usize;
        if dims.input != dims.pop + 2 * bins {
            return Err(LdeError::Parse(format!(
                "D = {} inconsistent with N = {} and b = {bins}",
                dims.input, dims.pop
            )));
        }
        let count = dims.param_count();
        if num("params")? as usize != count {
            return Err(LdeError::Parse(
                "parameter count disagrees with dims".into(),
            ));
        }
        if body.len() != count * 8 + 32 {
            return Err(LdeError::Parse(format!(
                "payload is {} bytes, expected {}",
                body.len(),
                count * 8 + 32
            )));
        }
        let (blob, digest) = body.split_at(count * 8);
        if Sha256::digest(blob).as_slice() != digest {
            return Err(LdeError::Parse("weight file checksum mismatch".into()));
        }
        let data = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let weights = ControllerWeights::from_flat(dims, data)?;
        if !weights.is_finite() {
            return Err(LdeError::NumericFailure(
                "weight file holds non-finite values".into(),
            ));
        }
        Ok(WeightFile {
            weights,
            bins,
            seed: num("seed")?,
            training_metadata: get("training_metadata")?.clone(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        WeightFile::from_bytes(&fs::read(path)?)
    }

    /// Value of `key` inside `training_metadata` (`k=v;k=v` form).
    pub fn metadata(&self, key: &str) -> Option<&str> {
        self.training_metadata
            .split(';')
            .filter_map(|kv| kv.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .map(|(_, v)| v.trim())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WeightFile {
        WeightFile {
            weights: ControllerWeights::init(Dims::for_population(6, 5, 2).unwrap(), 3),
            bins: 2,
            seed: 3,
            training_metadata: "epochs_done=4;alpha=0.005".into(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let wf = sample();
        let bytes = wf.to_bytes();
        let back = WeightFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, wf);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.metadata("epochs_done"), Some("4"));
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = sample().to_bytes();
        let n = bytes.len();
        bytes[n - 40] ^= 1;
        assert!(matches!(
            WeightFile::from_bytes(&bytes),
            Err(LdeError::Parse(_))
        ));
    }

    #[test]
    fn truncation_detected() {
        let bytes = sample().to_bytes();
        assert!(WeightFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(WeightFile::from_bytes(b"garbage").is_err());
    }
}
