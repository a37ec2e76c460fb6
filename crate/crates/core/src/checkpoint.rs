//! Checkpoint container: a header followed by named ParamSets.
//!
//! Layout: magic `ACRDCKPT`, format version `u32 LE`, config hash `u64 LE`,
//! training step `u64 LE`, entry count `u32 LE`, then per entry a `u16 LE`
//! name length, the UTF-8 name, and one ParamSet record.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::funcapprox::{read_param_set_unchecked, write_param_set, MlpSpec, ParamSet};

const MAGIC: &[u8; 8] = b"ACRDCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub spec_hash: u64,
    pub params: ParamSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub step: u64,
    pub entries: Vec<CheckpointEntry>,
}

impl Checkpoint {
    pub fn new(config_hash: u64, step: u64) -> Self {
        Self {
            config_hash,
            step,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, spec_hash: u64, params: ParamSet) {
        self.entries.push(CheckpointEntry {
            name: name.into(),
            spec_hash,
            params,
        });
    }

    pub fn push_net(&mut self, name: impl Into<String>, spec: &MlpSpec, params: &ParamSet) {
        self.push(name, spec.spec_hash(), params.clone());
    }

    pub fn entry(&self, name: &str) -> Result<&CheckpointEntry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::format("checkpoint", format!("missing entry {name:?}")))
    }

    /// Parameters for `name`, checked against the network they must fit.
    pub fn net(&self, name: &str, spec: &MlpSpec) -> Result<ParamSet> {
        let e = self.entry(name)?;
        if e.spec_hash != spec.spec_hash() {
            return Err(Error::format(
                "checkpoint",
                format!("entry {name:?} was written for a different network shape"),
            ));
        }
        if e.params.len() != spec.param_count() {
            return Err(Error::dim("checkpoint entry", spec.param_count(), e.params.len()));
        }
        Ok(e.params.clone())
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let e = self.entry(name)?;
        match e.params.as_slice() {
            [v] => Ok(*v),
            other => Err(Error::dim("checkpoint scalar", 1, other.len())),
        }
    }

    pub fn push_scalar(&mut self, name: impl Into<String>, value: f64) {
        self.push(name, 0, ParamSet::from_vec(vec![value]));
    }

    /// Refuses checkpoints written under a different configuration.
    pub fn expect_config(&self, config_hash: u64) -> Result<()> {
        if self.config_hash != config_hash {
            return Err(Error::config(format!(
                "checkpoint config hash {:016x} does not match {:016x}",
                self.config_hash, config_hash
            )));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&self.config_hash.to_le_bytes())?;
        w.write_all(&self.step.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for e in &self.entries {
            let name = e.name.as_bytes();
            let len = u16::try_from(name.len()).map_err(|_| Error::format("checkpoint", "entry name too long"))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(name)?;
            write_param_set(w, e.spec_hash, &e.params)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = u32::from_le_bytes(read_n(r)?);
        if version != FORMAT_VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let config_hash = u64::from_le_bytes(read_n(r)?);
        let step = u64::from_le_bytes(read_n(r)?);
        let count = u32::from_le_bytes(read_n(r)?);
        let mut entries = Vec::with_capacity(count.min(1024) as usize);
        for _ in 0..count {
            let len = u16::from_le_bytes(read_n(r)?) as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::format("checkpoint", "entry name is not UTF-8"))?;
            let (spec_hash, params) = read_param_set_unchecked(r)?;
            entries.push(CheckpointEntry {
                name,
                spec_hash,
                params,
            });
        }
        Ok(Self {
            config_hash,
            step,
            entries,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_to(&mut bytes)?;
        // write-then-rename so readers never see a partial file
        let tmp = path.with_extension("partial");
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }
}

fn read_n<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcapprox::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip() {
        let spec = MlpSpec::with_hidden(2, &[3], 1, Activation::Identity).unwrap();
        let p = spec.init(&mut ChaCha8Rng::seed_from_u64(1));
        let mut c = Checkpoint::new(0xabcdef, 42);
        c.push_net("actor", &spec, &p);
        c.push_scalar("log_alpha", -0.5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        c.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.step, 42);
        assert_eq!(back.scalar("log_alpha").unwrap(), -0.5);
        let q = back.net("actor", &spec).unwrap();
        for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
            assert_eq!(*a as f32, *b as f32);
        }
        assert!(back.expect_config(0xabcdef).is_ok());
        assert!(back.expect_config(1).is_err());
    }

    #[test]
    fn rejects_wrong_shape_and_garbage() {
        let spec = MlpSpec::with_hidden(2, &[3], 1, Activation::Identity).unwrap();
        let other = MlpSpec::with_hidden(2, &[4], 1, Activation::Identity).unwrap();
        let mut c = Checkpoint::new(0, 0);
        c.push_net("w", &spec, &spec.zeros());
        assert!(c.net("w", &other).is_err());
        assert!(c.net("missing", &spec).is_err());
        assert!(Checkpoint::read_from(&mut &b"NOTACKPT...."[..]).is_err());
    }
}
