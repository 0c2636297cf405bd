//! SRCK v1 checkpoint format: network config, training provenance, and
//! named parameter tensors, little-endian throughout.

use std::fs;
use std::path::Path;

use super::model::{NetworkConfig, SrNetwork};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const SRCK_MAGIC: [u8; 4] = *b"SRCK";
pub const SRCK_VERSION: u32 = 1;

/// How the stored parameters were produced. Distinguishes a source-domain
/// pre-train from a fine-tune with target-domain injection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Provenance {
    TrainedOnS,
    TrainedOnST,
    FineTunedDA(f32),
    TrainedOnO,
}

impl Provenance {
    pub fn code(self) -> u32 {
        match self {
            Provenance::TrainedOnS => 0,
            Provenance::TrainedOnST => 1,
            Provenance::FineTunedDA(_) => 2,
            Provenance::TrainedOnO => 3,
        }
    }

    pub fn fraction(self) -> f32 {
        match self {
            Provenance::FineTunedDA(p) => p,
            _ => 0.0,
        }
    }

    pub fn from_code(code: u32, fraction: f32) -> Result<Self> {
        match code {
            0 => Ok(Provenance::TrainedOnS),
            1 => Ok(Provenance::TrainedOnST),
            2 => Ok(Provenance::FineTunedDA(fraction)),
            3 => Ok(Provenance::TrainedOnO),
            _ => Err(Error::Data(format!("unknown provenance code {code}"))),
        }
    }

    pub fn label(self) -> String {
        match self {
            Provenance::TrainedOnS => "trained_on_s".into(),
            Provenance::TrainedOnST => "trained_on_st".into(),
            Provenance::FineTunedDA(p) => format!("fine_tuned_da_{p}"),
            Provenance::TrainedOnO => "trained_on_o".into(),
        }
    }
}

/// Serialized network parameters plus provenance. Tensors are f32 and in
/// the config's canonical parameter order with their canonical names.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub provenance: Provenance,
    pub train_seed: u64,
    pub epoch: u32,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn from_network(
        net: &SrNetwork<f32>,
        provenance: Provenance,
        train_seed: u64,
        epoch: u32,
    ) -> Checkpoint {
        let tensors = net
            .config
            .param_specs()
            .into_iter()
            .zip(&net.params)
            .map(|((name, _), t)| (name, t.clone()))
            .collect();
        Checkpoint {
            config: net.config,
            provenance,
            train_seed,
            epoch,
            tensors,
        }
    }

    /// Reconstruct the network at any scalar type (f32 is bit-exact; f64
    /// widens exactly).
    pub fn to_network<T: Scalar>(&self) -> Result<SrNetwork<T>> {
        self.validate_layout()?;
        SrNetwork::from_params(self.config, self.tensors.iter().map(|(_, t)| t.cast()).collect())
    }

    fn validate_layout(&self) -> Result<()> {
        let specs = self.config.param_specs();
        if specs.len() != self.tensors.len() {
            return Err(Error::Shape(format!(
                "checkpoint holds {} tensors, config expects {}",
                self.tensors.len(),
                specs.len()
            )));
        }
        for ((name, shape), (t_name, t)) in specs.iter().zip(&self.tensors) {
            if name != t_name {
                return Err(Error::Shape(format!(
                    "checkpoint tensor `{t_name}` where `{name}` was expected"
                )));
            }
            if t.shape() != *shape {
                return Err(Error::Shape(format!(
                    "checkpoint tensor `{t_name}` has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate_layout()?;
        let mut buf = Vec::new();
        buf.extend_from_slice(&SRCK_MAGIC);
        for v in [
            SRCK_VERSION,
            self.config.channels as u32,
            self.config.blocks as u32,
            self.config.attention_reduction as u32,
            self.config.scale as u32,
            self.config.kernel as u32,
            self.provenance.code(),
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&self.provenance.fraction().to_le_bytes());
        buf.extend_from_slice(&self.train_seed.to_le_bytes());
        buf.extend_from_slice(&self.epoch.to_le_bytes());
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            let shape = t.shape();
            buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for d in shape {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, &buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut cur = Cursor {
            buf: &buf,
            pos: 0,
            path,
        };
        let magic = cur.bytes(4)?;
        if magic != SRCK_MAGIC {
            return Err(Error::format(path, "bad magic bytes (expected SRCK)"));
        }
        let version = cur.u32()?;
        if version != SRCK_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let channels = cur.u32()? as usize;
        let blocks = cur.u32()? as usize;
        let attention_reduction = cur.u32()? as usize;
        let scale = cur.u32()? as usize;
        let kernel = cur.u32()? as usize;
        let config = NetworkConfig {
            channels,
            blocks,
            attention_reduction,
            scale,
            kernel,
        };
        config.validate().map_err(|e| Error::format(path, e.to_string()))?;
        let prov_code = cur.u32()?;
        let fraction = cur.f32()?;
        let provenance =
            Provenance::from_code(prov_code, fraction).map_err(|e| Error::format(path, e.to_string()))?;
        let train_seed = cur.u64()?;
        let epoch = cur.u32()?;
        let count = cur.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = cur.u32()? as usize;
            let name = String::from_utf8(cur.bytes(name_len)?.to_vec())
                .map_err(|_| Error::format(path, "tensor name is not UTF-8"))?;
            let ndim = cur.u32()? as usize;
            if ndim != 4 {
                return Err(Error::format(
                    path,
                    format!("tensor `{name}` has {ndim} dims, expected 4"),
                ));
            }
            let mut shape = [0usize; 4];
            for d in &mut shape {
                *d = cur.u32()? as usize;
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(cur.f32()?);
            }
            tensors.push((name, Tensor::from_vec(shape, data)?));
        }
        if cur.pos != buf.len() {
            return Err(Error::format(
                path,
                format!("{} trailing bytes after checkpoint", buf.len() - cur.pos),
            ));
        }
        let ck = Checkpoint {
            config,
            provenance,
            train_seed,
            epoch,
            tensors,
        };
        ck.validate_layout().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(ck)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(self.path, "truncated checkpoint file"));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
}
