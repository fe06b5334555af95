//! Binary policy checkpoints.
//!
//! Layout, little-endian:
//!
//! ```text
//! "EHFM" | version u32 | architecture u32 | flags u32 (bit 0 change, bit 1 label)
//! | window u64 | hidden_width u64 | hidden_layers u64 | gru_hidden u64
//! | strike f64 | vol f64 | dt f64            (zeros unless BSM)
//! | n_blocks u64 | per block: len u64, len × f64
//! ```

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::policy::{Architecture, DeltaPolicy, PolicyConfig};
use crate::error::{Error, Result};
use crate::nn::Parameterized;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EHFM";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(policy: &DeltaPolicy, mut w: W) -> Result<()> {
    let cfg = policy.config();
    let flags = cfg.include_change as u32 | (cfg.include_label as u32) << 1;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&cfg.architecture.tag().to_le_bytes())?;
    w.write_all(&flags.to_le_bytes())?;
    for v in [cfg.window, cfg.hidden_width, cfg.hidden_layers, cfg.gru_hidden] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    let (strike, vol, dt) = policy.bsm_parameters().unwrap_or((0.0, 0.0, 0.0));
    for v in [strike, vol, dt] {
        w.write_all(&v.to_le_bytes())?;
    }
    let blocks = policy.param_blocks();
    w.write_all(&(blocks.len() as u64).to_le_bytes())?;
    for (_, b) in blocks {
        w.write_all(&(b.len() as u64).to_le_bytes())?;
        for v in b {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format("checkpoint is truncated"),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array(r)?))
}

fn read_size<R: Read>(r: &mut R) -> Result<usize> {
    let v = read_u64(r)?;
    if v > 1 << 20 {
        return Err(Error::format(format!("implausible size {v} in checkpoint")));
    }
    Ok(v as usize)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<DeltaPolicy> {
    let magic: [u8; 4] = read_array(&mut r)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::format("not a policy checkpoint (bad magic)"));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }
    let architecture = Architecture::from_tag(read_u32(&mut r)?)?;
    let flags = read_u32(&mut r)?;
    if flags > 3 {
        return Err(Error::format(format!("unknown checkpoint flags {flags:#x}")));
    }
    let config = PolicyConfig {
        architecture,
        include_change: flags & 1 != 0,
        include_label: flags & 2 != 0,
        window: read_size(&mut r)?,
        hidden_width: read_size(&mut r)?,
        hidden_layers: read_size(&mut r)?,
        gru_hidden: read_size(&mut r)?,
    };
    let (strike, vol, dt) = (read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
    let mut policy = match architecture {
        Architecture::Bsm => DeltaPolicy::bsm(strike, vol, dt),
        _ => DeltaPolicy::new(&config, &mut ChaCha8Rng::seed_from_u64(0))
            .map_err(|e| Error::format(format!("checkpoint holds an invalid policy shape: {e}")))?,
    };
    let n_blocks = read_size(&mut r)?;
    let mut blocks = policy.param_blocks_mut();
    if n_blocks != blocks.len() {
        return Err(Error::format(format!(
            "checkpoint has {n_blocks} parameter blocks, the architecture needs {}",
            blocks.len()
        )));
    }
    for block in blocks.iter_mut() {
        let len = read_size(&mut r)?;
        if len != block.len() {
            return Err(Error::format("checkpoint parameter block has the wrong length"));
        }
        for v in block.iter_mut() {
            *v = read_f64(&mut r)?;
        }
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::format("trailing bytes after checkpoint"));
    }
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(p: &DeltaPolicy) -> (Vec<u8>, DeltaPolicy) {
        let mut buf = Vec::new();
        write_checkpoint(p, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        (buf, back)
    }

    #[test]
    fn exact_round_trip_for_every_architecture() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policies = [
            DeltaPolicy::bsm(100.0, 0.8944, 1.0 / 365.0),
            DeltaPolicy::new(&PolicyConfig { include_change: true, ..PolicyConfig::dense() }, &mut rng).unwrap(),
            DeltaPolicy::new(&PolicyConfig { include_label: true, ..PolicyConfig::gru() }, &mut rng).unwrap(),
        ];
        for p in &policies {
            let (buf, back) = round_trip(p);
            assert_eq!(&back, p);
            assert_eq!(&buf[8..12], &p.architecture().tag().to_le_bytes());
            let (again, _) = round_trip(&back);
            assert_eq!(buf, again);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let p = DeltaPolicy::new(&PolicyConfig::dense(), &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(Error::Format(_))));
        assert!(matches!(read_checkpoint(&buf[..buf.len() - 3]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad.push(0);
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(Error::Format(_))));
        // hidden width changed: block lengths no longer fit
        let mut bad = buf;
        bad[24] = 31;
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(Error::Format(_))));
    }
}
