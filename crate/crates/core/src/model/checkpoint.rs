//! Versioned JSON checkpoints: embedder weights, proxy bank, and the
//! training configuration that produced them.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::embedder::{Embedder, EmbedderConfig};
use super::{ProxyBank, TrainConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Row-major dense tensor payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl TensorData {
    fn from_array(a: &Array2<f64>) -> Self {
        TensorData {
            rows: a.nrows(),
            cols: a.ncols(),
            data: a.iter().cloned().collect(),
        }
    }

    fn to_array(&self) -> Result<Array2<f64>> {
        Array2::from_shape_vec((self.rows, self.cols), self.data.clone())
            .map_err(|e| Error::Config(format!("bad tensor shape in checkpoint: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    pub hidden_weight: Option<TensorData>,
    pub hidden_bias: Option<Vec<f64>>,
    pub out_weight: TensorData,
    pub out_bias: Vec<f64>,
    pub proxies: TensorData,
}

impl Checkpoint {
    pub fn from_parts(embedder: &Embedder, proxies: &ProxyBank, config: &TrainConfig) -> Self {
        let arch = embedder.config();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            input_dim: arch.input_dim,
            hidden_dim: arch.hidden_dim,
            embedding_dim: arch.embedding_dim,
            hidden_weight: embedder
                .hidden
                .as_ref()
                .map(|(w, _)| TensorData::from_array(w)),
            hidden_bias: embedder.hidden.as_ref().map(|(_, b)| b.to_vec()),
            out_weight: TensorData::from_array(&embedder.out_weight),
            out_bias: embedder.out_bias.to_vec(),
            proxies: TensorData::from_array(proxies.matrix()),
        }
    }

    pub fn into_parts(self) -> Result<(Embedder, ProxyBank, TrainConfig)> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let hidden = match (self.hidden_weight, self.hidden_bias) {
            (Some(w), Some(b)) => Some((w.to_array()?, Array1::from_vec(b))),
            (None, None) => None,
            _ => return Err(Error::config("checkpoint hidden layer is half-specified")),
        };
        let embedder = Embedder::from_parts(
            EmbedderConfig {
                input_dim: self.input_dim,
                hidden_dim: self.hidden_dim,
                embedding_dim: self.embedding_dim,
            },
            hidden,
            self.out_weight.to_array()?,
            Array1::from_vec(self.out_bias),
        )?;
        let proxies = ProxyBank::from_matrix(self.proxies.to_array()?)?;
        Ok((embedder, proxies, self.config))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn round_trip_preserves_parameters() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let embedder = Embedder::init(
            EmbedderConfig {
                input_dim: 6,
                hidden_dim: 4,
                embedding_dim: 5,
            },
            &mut rng,
        )
        .unwrap();
        let proxies = ProxyBank::init(3, 5, &mut rng);
        let config = TrainConfig::default();
        let checkpoint = Checkpoint::from_parts(&embedder, &proxies, &config);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        checkpoint.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(checkpoint, loaded);
        let (e2, p2, _) = loaded.into_parts().unwrap();
        assert_eq!(embedder, e2);
        assert_eq!(proxies.matrix(), p2.matrix());
    }
}
