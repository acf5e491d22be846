//! `ASNN` network files: little-endian, parameters stored as `f32`.
//!
//! ```text
//! "ASNN" u32 layer_count
//! per layer: u32 rows (out), u32 cols (in), u8 activation, u8 has_norm,
//!            f32 weight[out*in] (row-major), f32 bias[out],
//!            [f32 gain[out], f32 offset[out]]
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use super::{Activation, Dense, LayerNorm, MlpNet, Scalar};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ASNN";
const MAX_DIM: u32 = 1 << 16;

pub fn write_asnn<T: Scalar, W: Write>(net: &MlpNet<T>, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(net.layers().len() as u32)?;
    let put = |w: &mut W, vals: &mut dyn Iterator<Item = &T>| -> Result<()> {
        for v in vals {
            w.write_f32::<LittleEndian>(v.as_f64() as f32)?;
        }
        Ok(())
    };
    for l in net.layers() {
        w.write_u32::<LittleEndian>(l.output_dim() as u32)?;
        w.write_u32::<LittleEndian>(l.input_dim() as u32)?;
        w.write_u8(l.activation.tag())?;
        w.write_u8(l.norm.is_some() as u8)?;
        put(&mut w, &mut l.weight.iter())?;
        put(&mut w, &mut l.bias.iter())?;
        if let Some(n) = &l.norm {
            put(&mut w, &mut n.gain.iter())?;
            put(&mut w, &mut n.offset.iter())?;
        }
    }
    Ok(())
}

fn read_vec<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut v = vec![0f32; n];
    r.read_f32_into::<LittleEndian>(&mut v)?;
    Ok(v)
}

pub fn read_asnn<R: Read>(mut r: R) -> Result<MlpNet<f32>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not an ASNN network file".into()));
    }
    let count = r.read_u32::<LittleEndian>()?;
    if count == 0 || count > 64 {
        return Err(Error::Format(format!("implausible layer count {count}")));
    }
    let mut layers = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let out = r.read_u32::<LittleEndian>()?;
        let fan_in = r.read_u32::<LittleEndian>()?;
        if out == 0 || out > MAX_DIM || fan_in == 0 || fan_in > MAX_DIM {
            return Err(Error::Format(format!("implausible layer shape {out}x{fan_in}")));
        }
        let activation = Activation::from_tag(r.read_u8()?)
            .ok_or_else(|| Error::Format("unknown activation tag".into()))?;
        let has_norm = match r.read_u8()? {
            0 => false,
            1 => true,
            t => return Err(Error::Format(format!("bad norm flag {t}"))),
        };
        let (o, i) = (out as usize, fan_in as usize);
        let weight = Array2::from_shape_vec((o, i), read_vec(&mut r, o * i)?)
            .map_err(|e| Error::Format(e.to_string()))?;
        let bias = Array1::from(read_vec(&mut r, o)?);
        let norm = if has_norm {
            Some(LayerNorm {
                gain: Array1::from(read_vec(&mut r, o)?),
                offset: Array1::from(read_vec(&mut r, o)?),
            })
        } else {
            None
        };
        layers.push(Dense {
            weight,
            bias,
            norm,
            activation,
        });
    }
    MlpNet::from_layers(layers)
}

/// Hex prefix of the SHA-256 of the network's `ASNN` encoding.
pub fn checksum_hex<T: Scalar>(net: &MlpNet<T>) -> String {
    let mut buf = Vec::new();
    write_asnn(net, &mut buf).expect("writing to memory");
    let digest = Sha256::digest(&buf);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn sample() -> MlpNet<f32> {
        let specs = [
            LayerSpec::new(5, true, Activation::Silu),
            LayerSpec::new(2, false, Activation::Tanh),
        ];
        MlpNet::new(3, &specs, &mut StdRng::seed_from_u64(11)).unwrap()
    }

    #[test]
    fn round_trip_is_exact_for_f32() {
        let net = sample();
        let mut buf = Vec::new();
        write_asnn(&net, &mut buf).unwrap();
        let back = read_asnn(buf.as_slice()).unwrap();
        assert_eq!(net, back);
        assert_eq!(checksum_hex(&net), checksum_hex(&back));
        assert_eq!(checksum_hex(&net).len(), 16);
    }

    #[test]
    fn checksum_tracks_parameters() {
        let mut net = sample();
        let before = checksum_hex(&net);
        net.tensors_mut()[1][0] += 0.5;
        assert_ne!(before, checksum_hex(&net));
    }

    #[test]
    fn corrupt_files_rejected() {
        let net = sample();
        let mut buf = Vec::new();
        write_asnn(&net, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_asnn(bad.as_slice()), Err(Error::Format(_))));
        assert!(read_asnn(&buf[..buf.len() - 3]).is_err());
        let mut bad_act = buf.clone();
        bad_act[16] = 9;
        assert!(matches!(read_asnn(bad_act.as_slice()), Err(Error::Format(_))));
    }
}
