//! Binary checkpoint container.
//!
//! Layout (little-endian): 8 magic bytes, `u32` format version, `u32`
//! section count, then per section a `u16` name length, the UTF-8 name, a
//! `u8` kind (0 = f64 array, 1 = u64 array, 2 = text), a `u64` element or
//! byte count and the payload. A SHA-256 digest of everything before it
//! closes the file.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::bank::{ParameterBank, Partition, Section};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::training::Adam;

pub const MAGIC: &[u8; 8] = b"CNFROMCK";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
enum Payload {
    F64(Vec<f64>),
    U64(Vec<u64>),
    Text(String),
}

/// Everything needed to resume or evaluate a run without the original config file.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub bank: ParameterBank,
    pub optimizer: Adam,
    /// Epochs completed.
    pub epoch: usize,
    /// Seed from which initialization and minibatch order derive.
    pub seed: u64,
    /// Free-form description of the producing stage.
    pub stage: String,
}

impl Checkpoint {
    fn sections(&self) -> Vec<(&'static str, Payload)> {
        let layout = self
            .bank
            .sections()
            .iter()
            .map(|s| format!("{} {} {} {}\n", s.name, s.partition.as_str(), s.rows, s.cols))
            .collect::<String>();
        let o = &self.optimizer;
        vec![
            ("config", Payload::Text(self.config.to_toml())),
            ("stage", Payload::Text(self.stage.clone())),
            ("bank.layout", Payload::Text(layout)),
            ("bank.latent_dim", Payload::U64(vec![self.bank.latent_dim() as u64])),
            ("bank.values", Payload::F64(self.bank.values().to_vec())),
            ("bank.beta0_mus", Payload::F64(self.bank.beta0_mus().to_vec())),
            ("optim.hyper", Payload::F64(vec![o.lr, o.beta1, o.beta2, o.eps])),
            ("optim.step", Payload::U64(vec![o.step])),
            ("optim.m", Payload::F64(o.m.clone())),
            ("optim.v", Payload::F64(o.v.clone())),
            ("run.counters", Payload::U64(vec![self.epoch as u64, self.seed])),
        ]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode(FORMAT_VERSION, &self.sections())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let sections = decode(bytes)?;
        let get = |name: &str| {
            sections
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, p)| p)
                .ok_or_else(|| Error::MalformedCheckpoint(format!("missing section {name}")))
        };
        let text = |name: &str| match get(name)? {
            Payload::Text(s) => Ok(s.clone()),
            _ => Err(Error::MalformedCheckpoint(format!("section {name} is not text"))),
        };
        let floats = |name: &str| match get(name)? {
            Payload::F64(v) => Ok(v.clone()),
            _ => Err(Error::MalformedCheckpoint(format!("section {name} is not f64"))),
        };
        let ints = |name: &str| match get(name)? {
            Payload::U64(v) => Ok(v.clone()),
            _ => Err(Error::MalformedCheckpoint(format!("section {name} is not u64"))),
        };
        let config = RunConfig::from_toml_str(&text("config")?, Path::new("<checkpoint>"))?;
        let latent_dim = *ints("bank.latent_dim")?
            .first()
            .ok_or_else(|| Error::MalformedCheckpoint("empty latent_dim".into()))? as usize;
        let mut layout = Vec::new();
        let mut offset = 0;
        for line in text("bank.layout")?.lines() {
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::MalformedCheckpoint(format!("bad layout line {line:?}"));
            if f.len() != 4 {
                return Err(bad());
            }
            let s = Section {
                name: f[0].to_string(),
                partition: Partition::parse(f[1]).ok_or_else(bad)?,
                rows: f[2].parse().map_err(|_| bad())?,
                cols: f[3].parse().map_err(|_| bad())?,
                offset,
            };
            offset += s.len();
            layout.push(s);
        }
        let bank = ParameterBank::from_parts(latent_dim, layout, floats("bank.values")?, floats("bank.beta0_mus")?)?;
        let hyper = floats("optim.hyper")?;
        let counters = ints("run.counters")?;
        if hyper.len() != 4 || counters.len() != 2 {
            return Err(Error::MalformedCheckpoint(
                "optimizer or counter section has wrong length".into(),
            ));
        }
        let optimizer = Adam {
            lr: hyper[0],
            beta1: hyper[1],
            beta2: hyper[2],
            eps: hyper[3],
            m: floats("optim.m")?,
            v: floats("optim.v")?,
            step: *ints("optim.step")?.first().unwrap_or(&0),
        };
        if optimizer.m.len() != bank.len() || optimizer.v.len() != bank.len() {
            return Err(Error::MalformedCheckpoint(
                "optimizer moments do not match the bank".into(),
            ));
        }
        Ok(Self {
            config,
            bank,
            optimizer,
            epoch: counters[0] as usize,
            seed: counters[1],
            stage: text("stage")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn encode(version: u32, sections: &[(&str, Payload)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    for (name, payload) in sections {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        match payload {
            Payload::F64(v) => {
                out.push(0);
                out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
            }
            Payload::U64(v) => {
                out.push(1);
                out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
            }
            Payload::Text(s) => {
                out.push(2);
                out.extend_from_slice(&(s.len() as u64).to_le_bytes());
                out.extend_from_slice(s.as_bytes());
            }
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::Checksum)?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn decode(bytes: &[u8]) -> Result<Vec<(String, Payload)>> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(if bytes.len() < MAGIC.len() && MAGIC.starts_with(bytes) {
            Error::Checksum
        } else {
            Error::BadMagic
        });
    }
    if bytes.len() < MAGIC.len() + 4 {
        return Err(Error::Checksum);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version < FORMAT_VERSION {
        return Err(Error::MigrationRequired {
            found: version,
            current: FORMAT_VERSION,
        });
    }
    if version > FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            current: FORMAT_VERSION,
        });
    }
    if bytes.len() < 16 + DIGEST_LEN {
        return Err(Error::Checksum);
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checksum);
    }
    let mut r = Reader { bytes: body, at: 12 };
    let count = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::MalformedCheckpoint("section name is not UTF-8".into()))?;
        let kind = r.take(1)?[0];
        let n = r.u64()? as usize;
        let payload = match kind {
            0 => Payload::F64(
                r.take(n.checked_mul(8).ok_or(Error::Checksum)?)?
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
            1 => Payload::U64(
                r.take(n.checked_mul(8).ok_or(Error::Checksum)?)?
                    .chunks_exact(8)
                    .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
            2 => Payload::Text(
                String::from_utf8(r.take(n)?.to_vec())
                    .map_err(|_| Error::MalformedCheckpoint(format!("section {name} is not UTF-8")))?,
            ),
            k => return Err(Error::MalformedCheckpoint(format!("unknown section kind {k}"))),
        };
        out.push((name, payload));
    }
    if r.at != body.len() {
        return Err(Error::MalformedCheckpoint("trailing bytes after sections".into()));
    }
    Ok(out)
}
