//! Binary weights format: magic `AQNW`, version (u32 LE), layer count (u32
//! LE), then per layer a kind byte (0 = conv, 1 = fc), a dimension count and
//! dimensions (u32 LE each), weights then biases as f32 LE, row-major.
//! Convolution dimensions are `[filters, in_channels, field, pad, stride]`,
//! fully connected ones `[outputs, inputs]`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::{Layer, NnError, QNetwork, Result};

pub const MAGIC: &[u8; 4] = b"AQNW";
pub const VERSION: u32 = 1;

fn dims(layer: &Layer<f32>) -> (u8, Vec<u32>) {
    match layer {
        Layer::Conv(c) => (
            0,
            vec![
                c.spec.filters as u32,
                c.in_channels as u32,
                c.spec.field as u32,
                c.spec.pad as u32,
                c.spec.stride as u32,
            ],
        ),
        Layer::Linear(l) => (1, vec![l.outputs as u32, l.inputs as u32]),
    }
}

pub fn encode_weights(net: &QNetwork<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + net.parameter_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
    for layer in &net.layers {
        let (kind, dims) = dims(layer);
        out.push(kind);
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in layer.weight().iter().chain(layer.bias()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(NnError::Format(format!("truncated at byte {} (needed {n} more)", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, layer: usize) -> Result<Vec<f32>> {
        let raw = self.take(n * 4)?;
        let values: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if let Some((index, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(NnError::NonFinite { context: "stored weight", layer, index, value: *v as f64 });
        }
        Ok(values)
    }
}

/// Decodes parameters into `net`, which fixes the expected architecture.
pub fn decode_weights_into(bytes: &[u8], net: &mut QNetwork<f32>) -> Result<()> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NnError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    if count != net.layers.len() {
        return Err(NnError::Format(format!("file has {count} layers, network has {}", net.layers.len())));
    }
    for (i, layer) in net.layers.iter_mut().enumerate() {
        let (kind, expected) = dims(layer);
        let got_kind = r.take(1)?[0];
        let n = r.u32()? as usize;
        if n > 16 {
            return Err(NnError::Format(format!("layer {i}: implausible dimension count {n}")));
        }
        let got: Vec<u32> = (0..n).map(|_| r.u32()).collect::<Result<_>>()?;
        if got_kind != kind || got != expected {
            return Err(NnError::Format(format!(
                "layer {i}: file has kind {got_kind} dims {got:?}, network expects kind {kind} dims {expected:?}"
            )));
        }
        let (w, b) = layer.params_mut();
        let weights = r.f32s(w.len(), i)?;
        let biases = r.f32s(b.len(), i)?;
        w.copy_from_slice(&weights);
        b.copy_from_slice(&biases);
    }
    if r.pos != bytes.len() {
        return Err(NnError::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(())
}

pub fn save_weights(net: &QNetwork<f32>, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_weights(net))?;
    f.sync_all()?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>, net: &mut QNetwork<f32>) -> Result<()> {
    let bytes = fs::read(path)?;
    decode_weights_into(&bytes, net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::NetworkSpec;

    #[test]
    fn round_trip_is_bit_exact() {
        let net = QNetwork::<f32>::seeded(NetworkSpec::desk(), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        save_weights(&net, &path).unwrap();
        let mut back = QNetwork::zeros(NetworkSpec::desk()).unwrap();
        load_weights(&path, &mut back).unwrap();
        for (a, b) in net.layers.iter().zip(&back.layers) {
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a.weight()), bits(b.weight()));
            assert_eq!(bits(a.bias()), bits(b.bias()));
        }
    }

    #[test]
    fn header_layout() {
        let net = QNetwork::<f32>::zeros(NetworkSpec::desk()).unwrap();
        let bytes = encode_weights(&net);
        assert_eq!(&bytes[..4], b"AQNW");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 5);
        assert_eq!(bytes[12], 0);
        assert_eq!(bytes.len(), 12 + 5 * 5 + 4 * (3 * 5 + 2 * 2) + 4 * net.parameter_count());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let net = QNetwork::<f32>::seeded(NetworkSpec::desk(), 4).unwrap();
        let bytes = encode_weights(&net);
        let mut back = QNetwork::zeros(NetworkSpec::desk()).unwrap();
        let err = decode_weights_into(&bytes[..bytes.len() - 3], &mut back).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn nan_is_rejected() {
        let mut net = QNetwork::<f32>::zeros(NetworkSpec::desk()).unwrap();
        net.layers[2].params_mut().0[7] = f32::NAN;
        let bytes = encode_weights(&net);
        let mut back = QNetwork::zeros(NetworkSpec::desk()).unwrap();
        assert!(matches!(decode_weights_into(&bytes, &mut back), Err(NnError::NonFinite { layer: 2, .. })));
    }

    #[test]
    fn bad_magic_and_version() {
        let net = QNetwork::<f32>::zeros(NetworkSpec::desk()).unwrap();
        let mut bytes = encode_weights(&net);
        let mut back = QNetwork::zeros(NetworkSpec::desk()).unwrap();
        bytes[4] = 2;
        assert!(decode_weights_into(&bytes, &mut back).is_err());
        bytes[0] = b'X';
        assert!(decode_weights_into(&bytes, &mut back).is_err());
    }

    #[test]
    fn architecture_mismatch_is_rejected() {
        let net = QNetwork::<f32>::zeros(NetworkSpec::desk()).unwrap();
        let bytes = encode_weights(&net);
        let mut full = QNetwork::zeros(NetworkSpec::full()).unwrap();
        assert!(decode_weights_into(&bytes, &mut full).is_err());
    }
}
