//! Versioned little-endian binary model format.
//!
//! Layout: magic `GWNN`, version byte, loss byte, seed (u64), preset string,
//! layer count (u32), then per layer `n_in`, `n_out` (u32), activation byte
//! and the raw f64 weights and biases, then feature means, SDs and names.
//! Strings are a u32 byte length followed by UTF-8.

use std::path::Path;

use super::network::{Activation, Layer, Loss, NetworkModel};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GWNN";
pub const FORMAT_VERSION: u8 = 1;

fn act_code(a: Option<Activation>) -> u8 {
    match a {
        None => 0,
        Some(Activation::Rectifier) => 1,
        Some(Activation::Tanh) => 2,
        Some(Activation::Maxout) => 3,
    }
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len());
    buf.extend_from_slice(s.as_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode(model: &NetworkModel) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(FORMAT_VERSION);
    buf.push(match model.loss {
        Loss::CrossEntropy => 0,
        Loss::SquaredError => 1,
    });
    buf.extend_from_slice(&model.seed.to_le_bytes());
    put_str(&mut buf, &model.preset);
    put_u32(&mut buf, model.layers.len());
    for l in &model.layers {
        put_u32(&mut buf, l.n_in);
        put_u32(&mut buf, l.n_out);
        buf.push(act_code(l.activation));
        put_f64s(&mut buf, &l.w);
        put_f64s(&mut buf, &l.b);
    }
    put_f64s(&mut buf, &model.feature_mean);
    put_f64s(&mut buf, &model.feature_sd);
    put_u32(&mut buf, model.feature_names.len());
    for n in &model.feature_names {
        put_str(&mut buf, n);
    }
    buf
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.data.len() - self.pos < n {
            return Err(format!("truncated at byte {}", self.pos));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let bytes = self.take(n.checked_mul(8).ok_or("length overflow")?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn string(&mut self) -> std::result::Result<String, String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "invalid UTF-8 string".to_string())
    }
}

/// Decode a model; `path` is only used in error messages.
pub fn decode(data: &[u8], path: &Path) -> Result<NetworkModel> {
    if data.len() < 5 || &data[..4] != MAGIC {
        return Err(Error::format(path, "not a model file (bad magic)"));
    }
    if data[4] != FORMAT_VERSION {
        return Err(Error::ModelVersion {
            path: path.to_path_buf(),
            found: data[4],
            expected: FORMAT_VERSION,
        });
    }
    let mut r = Reader { data, pos: 5 };
    decode_body(&mut r).map_err(|m| Error::format(path, m))
}

fn decode_body(r: &mut Reader<'_>) -> std::result::Result<NetworkModel, String> {
    let loss = match r.u8()? {
        0 => Loss::CrossEntropy,
        1 => Loss::SquaredError,
        c => return Err(format!("unknown loss code {c}")),
    };
    let seed = r.u64()?;
    let preset = r.string()?;
    let n_layers = r.u32()?;
    if n_layers < 2 {
        return Err(format!("model has {n_layers} layers"));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let n_in = r.u32()?;
        let n_out = r.u32()?;
        let activation = match r.u8()? {
            0 => None,
            1 => Some(Activation::Rectifier),
            2 => Some(Activation::Tanh),
            3 => Some(Activation::Maxout),
            c => return Err(format!("unknown activation code {c}")),
        };
        let last = i + 1 == n_layers;
        if last != activation.is_none() || (last && n_out != 2) || n_in == 0 || n_out == 0 {
            return Err(format!("layer {i} has an invalid shape"));
        }
        if let Some(prev) = layers.last() {
            let prev: &Layer = prev;
            if prev.n_out != n_in {
                return Err(format!("layer {i} input size {n_in} does not match previous output {}", prev.n_out));
            }
        }
        let rows = activation.map_or(1, |a| a.channels()) * n_out;
        let w = r.f64s(rows * n_in)?;
        let b = r.f64s(rows)?;
        layers.push(Layer {
            n_in,
            n_out,
            activation,
            w,
            b,
        });
    }
    let p = layers[0].n_in;
    let feature_mean = r.f64s(p)?;
    let feature_sd = r.f64s(p)?;
    let n_names = r.u32()?;
    if n_names != 0 && n_names != p {
        return Err(format!("{n_names} feature names for {p} inputs"));
    }
    let feature_names = (0..n_names).map(|_| r.string()).collect::<std::result::Result<_, _>>()?;
    if r.pos != r.data.len() {
        return Err(format!("{} trailing bytes", r.data.len() - r.pos));
    }
    Ok(NetworkModel {
        layers,
        loss,
        feature_mean,
        feature_sd,
        feature_names,
        preset,
        seed,
    })
}

pub fn save_model(model: &NetworkModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<NetworkModel> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&data, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> NetworkModel {
        let mut m = NetworkModel::init(3, &[(4, Activation::Maxout), (2, Activation::Tanh)], Loss::SquaredError, 9).unwrap();
        m.feature_mean = vec![0.1, -0.2, 1.0 / 3.0];
        m.feature_sd = vec![1.0, 0.5, 2.0];
        m.feature_names = vec!["rs1".into(), "rs2".into(), "rs3".into()];
        m.preset = "5SNP".into();
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let back = decode(&encode(&m), Path::new("m.bin")).unwrap();
        assert_eq!(back, m);
        let x = [0.3, -1.0, 2.0];
        assert_eq!(back.predict_one(&x).to_bits(), m.predict_one(&x).to_bits());
    }

    #[test]
    fn version_mismatch_is_reported() {
        let mut b = encode(&model());
        b[4] = 7;
        match decode(&b, Path::new("m.bin")) {
            Err(Error::ModelVersion { found: 7, expected: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let b = encode(&model());
        assert!(matches!(decode(b"XXXX\x01", Path::new("m")), Err(Error::Format { .. })));
        assert!(matches!(decode(&b[..b.len() - 3], Path::new("m")), Err(Error::Format { .. })));
        let mut extra = b.clone();
        extra.push(0);
        assert!(matches!(decode(&extra, Path::new("m")), Err(Error::Format { .. })));
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.bin");
        let m = model();
        save_model(&m, &p).unwrap();
        assert_eq!(load_model(&p).unwrap(), m);
    }
}
