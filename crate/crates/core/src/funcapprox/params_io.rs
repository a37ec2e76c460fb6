//! ParamSet wire format: `spec_hash: u64 LE`, `len: u64 LE`, then `len`
//! little-endian `f32` values.

use std::io::{Read, Write};

use super::ParamSet;
use crate::error::{Error, Result};

pub fn write_param_set<W: Write>(w: &mut W, spec_hash: u64, params: &ParamSet) -> Result<()> {
    w.write_all(&spec_hash.to_le_bytes())?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(params.len() * 4);
    for v in params.as_slice() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads one ParamSet and checks it against the expected spec hash and length.
pub fn read_param_set<R: Read>(r: &mut R, spec_hash: u64, expected_len: usize) -> Result<ParamSet> {
    let (found, params) = read_param_set_unchecked(r)?;
    if found != spec_hash {
        return Err(Error::format(
            "param set",
            format!("spec hash {found:016x} does not match {spec_hash:016x}"),
        ));
    }
    if params.len() != expected_len {
        return Err(Error::dim("param set length", expected_len, params.len()));
    }
    Ok(params)
}

/// Reads one ParamSet and returns it with its stored spec hash.
pub fn read_param_set_unchecked<R: Read>(r: &mut R) -> Result<(u64, ParamSet)> {
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let hash = u64::from_le_bytes(word);
    r.read_exact(&mut word)?;
    let len = u64::from_le_bytes(word) as usize;
    if len > 1 << 32 {
        return Err(Error::format("param set", format!("implausible length {len}")));
    }
    let mut buf = vec![0u8; len * 4];
    r.read_exact(&mut buf)?;
    let values = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok((hash, ParamSet::from_vec(values)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcapprox::{Activation, MlpSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_at_f32_precision() {
        let spec = MlpSpec::with_hidden(3, &[4], 2, Activation::Identity).unwrap();
        let p = spec.init(&mut ChaCha8Rng::seed_from_u64(0));
        let mut bytes = Vec::new();
        write_param_set(&mut bytes, spec.spec_hash(), &p).unwrap();
        assert_eq!(bytes.len(), 16 + 4 * spec.param_count());
        let q = read_param_set(&mut bytes.as_slice(), spec.spec_hash(), spec.param_count()).unwrap();
        for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
            assert_eq!(*a as f32, *b as f32);
        }
        assert!(read_param_set(&mut bytes.as_slice(), 1, spec.param_count()).is_err());
    }
}
