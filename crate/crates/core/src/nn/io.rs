//! Binary weight format.
//!
//! ```text
//! "ASLW"            4 bytes magic
//! version           u32 LE
//! layer_count       u32 LE
//! per layer:
//!   in_dim          u32 LE
//!   out_dim         u32 LE
//!   activation      u8  (0 identity, 1 relu, 2 softmax)
//!   weights         in_dim * out_dim f64 LE, row-major (in_dim, out_dim)
//!   bias            out_dim f64 LE
//! ```

use std::fs;
use std::path::Path;

use super::{Activation, DenseLayer, Network, Tensor};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"ASLW";
pub const WEIGHTS_VERSION: u32 = 1;

pub fn encode_network(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        write_layer(&mut out, layer);
    }
    out
}

fn write_layer(out: &mut Vec<u8>, layer: &DenseLayer) {
    out.extend_from_slice(&(layer.in_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(layer.out_dim() as u32).to_le_bytes());
    out.push(layer.activation().tag());
    for v in layer.weights().data().iter().chain(layer.bias().data()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn decode_network(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader::new(bytes);
    let net = read_network(&mut r)?;
    r.finish()?;
    Ok(net)
}

pub(crate) fn read_network(r: &mut Reader<'_>) -> Result<Network> {
    let magic = r.take(4, "magic")?;
    if magic != WEIGHTS_MAGIC {
        return Err(r.error_at(r.pos - 4, "bad magic, expected \"ASLW\""));
    }
    let version = r.u32("version")?;
    if version != WEIGHTS_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: WEIGHTS_VERSION,
        });
    }
    let count = r.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let start = r.pos;
        let in_dim = r.u32("in_dim")? as usize;
        let out_dim = r.u32("out_dim")? as usize;
        let tag = r.u8("activation tag")?;
        let activation = Activation::from_tag(tag)
            .ok_or_else(|| r.error_at(r.pos - 1, format!("unknown activation tag {tag}")))?;
        if in_dim == 0 || out_dim == 0 {
            return Err(r.error_at(start, "layer with zero width"));
        }
        let weights = r.f64s(in_dim * out_dim, "weights")?;
        let bias = r.f64s(out_dim, "bias")?;
        let layer = DenseLayer::new(
            Tensor::matrix(in_dim, out_dim, weights)?,
            Tensor::vector(bias)?,
            activation,
        )?;
        layers.push(layer);
    }
    Network::new(layers).map_err(|e| r.error_at(r.pos, e.to_string()))
}

pub fn save_weights(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_network(net))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Network> {
    decode_network(&fs::read(path)?)
}

/// Bounds-checked little-endian cursor that reports the byte offset of
/// whatever it failed to read.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pub(crate) pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self {
            bytes,
            pos: 0,
            base: 0,
        }
    }

    /// Reader over a sub-slice that starts at `base` in the enclosing file,
    /// so reported offsets stay absolute.
    pub(crate) fn with_base(bytes: &'a [u8], base: usize) -> Self {
        Self {
            bytes,
            pos: 0,
            base,
        }
    }

    pub(crate) fn error_at(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.base + offset,
            message: message.into(),
        }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if n > remaining {
            return Err(self.error_at(
                self.pos,
                format!("truncated {what}: need {n} bytes, {remaining} left"),
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| self.error_at(self.pos, format!("{what} length overflows")))?;
        let raw = self.take(len, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.error_at(self.pos, "trailing bytes"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_net(seed: u64) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Network::random(
            &[3, 5, 2],
            &[Activation::Relu, Activation::Softmax],
            &mut rng,
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>()) {
            let net = sample_net(seed);
            let back = decode_network(&encode_network(&net)).unwrap();
            for (a, b) in net.layers().iter().zip(back.layers()) {
                prop_assert_eq!(a.activation(), b.activation());
                let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(a.weights()), bits(b.weights()));
                prop_assert_eq!(bits(a.bias()), bits(b.bias()));
            }
        }

        #[test]
        fn arbitrary_prefixes_never_panic(cut in 0usize..200) {
            let bytes = encode_network(&sample_net(1));
            let cut = cut.min(bytes.len() - 1);
            prop_assert!(decode_network(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn truncated_file_reports_offset() {
        let bytes = encode_network(&sample_net(2));
        let err = decode_network(&bytes[..bytes.len() - 3]).unwrap_err();
        match err {
            Error::Parse { offset, message } => {
                assert!(offset < bytes.len());
                assert!(message.contains("truncated"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let mut bytes = encode_network(&sample_net(3));
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            decode_network(&bytes),
            Err(Error::UnsupportedVersion {
                found: 7,
                supported: 1
            })
        ));
    }

    #[test]
    fn bad_magic_and_tag_are_rejected() {
        let mut bytes = encode_network(&sample_net(4));
        bytes[0] = b'X';
        assert!(matches!(
            decode_network(&bytes),
            Err(Error::Parse { offset: 0, .. })
        ));
        let mut bytes = encode_network(&sample_net(4));
        bytes[20] = 9; // first layer's activation tag
        assert!(matches!(
            decode_network(&bytes),
            Err(Error::Parse { offset: 20, .. })
        ));
    }

    #[test]
    fn save_and_load_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.aslw");
        let net = sample_net(5);
        save_weights(&net, &path).unwrap();
        assert_eq!(load_weights(&path).unwrap(), net);
    }
}
