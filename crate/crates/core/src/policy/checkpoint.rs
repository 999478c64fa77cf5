//! Binary checkpoint.
//!
//! ```text
//! magic     10 bytes  "XFOLIONET1"
//! version   u8
//! n_dims    u32 LE
//! dims      n_dims x u32 LE  (input, hidden..., outputs)
//! n_params  u64 LE
//! params    n_params x f64 LE
//! ```

use super::{NetError, PolicyNet, Result};

pub const CHECKPOINT_MAGIC: &[u8; 10] = b"XFOLIONET1";
pub const CHECKPOINT_VERSION: u8 = 1;

fn corrupt(msg: impl Into<String>) -> NetError {
    NetError::CorruptCheckpoint(msg.into())
}

pub fn encode_checkpoint(net: &PolicyNet) -> Vec<u8> {
    let dims = net.manifest();
    let mut out = Vec::with_capacity(23 + 4 * dims.len() + 8 * net.n_params());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(net.n_params() as u64).to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|end| *end <= self.bytes.len())
            .ok_or_else(|| corrupt(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<PolicyNet> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(10, "magic")? != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.take(1, "version")?[0];
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(format!(
            "unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let n_dims = r.u32("layer count")? as usize;
    if n_dims < 2 || n_dims > r.remaining() / 4 {
        return Err(corrupt(format!("implausible layer count {n_dims}")));
    }
    let dims = (0..n_dims)
        .map(|_| r.u32("layer dims").map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let n_params = u64::from_le_bytes(r.take(8, "parameter count")?.try_into().unwrap());
    if n_params != (r.remaining() / 8) as u64 || !r.remaining().is_multiple_of(8) {
        return Err(corrupt(format!(
            "parameter count {n_params} does not match {} payload bytes",
            r.remaining()
        )));
    }
    let params: Vec<f64> = r
        .take(r.remaining(), "parameters")?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(corrupt("non-finite parameter"));
    }
    // Bound the manifest before trusting it to size anything.
    let expected: Option<usize> = dims.windows(2).try_fold(0usize, |acc, w| {
        w[0].checked_add(1)?.checked_mul(w[1])?.checked_add(acc)
    });
    let value_head = dims[dims.len() - 2].checked_add(1);
    match (expected, value_head) {
        (Some(e), Some(v)) if e.checked_add(v) == Some(params.len()) => {}
        _ => return Err(corrupt("manifest does not match parameter count")),
    }
    PolicyNet::from_parts(&dims, params).map_err(|e| corrupt(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::NetConfig;

    fn net() -> PolicyNet {
        PolicyNet::init(&NetConfig {
            input_dim: 3,
            hidden: vec![4],
            n_outputs: 2,
            seed: 11,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let n = net();
        let back = decode_checkpoint(&encode_checkpoint(&n)).unwrap();
        assert_eq!(back, n);
        let x = [0.3, -0.1, 2.0];
        assert_eq!(back.forward(&x).unwrap(), n.forward(&x).unwrap());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.bin");
        net().save(&path).unwrap();
        assert_eq!(PolicyNet::load(&path).unwrap(), net());
    }

    #[test]
    fn truncated_is_corrupt() {
        let bytes = encode_checkpoint(&net());
        for cut in [0, 5, 11, 20, bytes.len() - 1] {
            assert!(matches!(
                decode_checkpoint(&bytes[..cut]),
                Err(NetError::CorruptCheckpoint(_))
            ));
        }
    }

    #[test]
    fn version_bump_reports_version() {
        let mut bytes = encode_checkpoint(&net());
        bytes[10] += 1;
        match decode_checkpoint(&bytes) {
            Err(NetError::CorruptCheckpoint(msg)) => assert!(msg.contains("version 2")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_width_manifest_rejected() {
        let mut bytes = encode_checkpoint(&net());
        // Hidden width lives at offset 10 + 1 + 4 + 4.
        bytes[19..23].copy_from_slice(&0u32.to_le_bytes());
        assert!(decode_checkpoint(&bytes).is_err());
    }
}
