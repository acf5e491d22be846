//! "ASFN" container: strategy tag, discount schedule, provenance, input scaling,
//! optional prototypes, then the critic and actor as embedded "ASNN" blobs.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::{Conditioning, FilterNets, GammaSchedule, PrototypeSet, Standardizer};
use crate::error::{Error, Result};
use crate::latent::SimilarityModel;
use crate::nn::{read_asnn, write_asnn};

const MAGIC: &[u8; 4] = b"ASFN";
const VERSION: u32 = 1;

fn write_f32s<W: Write>(w: &mut W, v: &[f32]) -> Result<()> {
    for &x in v {
        w.write_f32::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut v = vec![0f32; n];
    r.read_f32_into::<LittleEndian>(&mut v)?;
    Ok(v)
}

fn write_scale<W: Write>(w: &mut W, s: &Standardizer) -> Result<()> {
    w.write_u32::<LittleEndian>(s.dim() as u32)?;
    write_f32s(w, &s.mean)?;
    write_f32s(w, &s.scale)
}

fn read_scale<R: Read>(r: &mut R) -> Result<Standardizer> {
    let n = r.read_u32::<LittleEndian>()? as usize;
    if n > 1 << 16 {
        return Err(Error::Format(format!("implausible input width {n}")));
    }
    Ok(Standardizer {
        mean: read_f32s(r, n)?,
        scale: read_f32s(r, n)?,
    })
}

pub fn write_filter<W: Write>(nets: &FilterNets, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u8(nets.conditioning().tag())?;
    w.write_f64::<LittleEndian>(nets.gamma.start)?;
    w.write_f64::<LittleEndian>(nets.gamma.end)?;
    w.write_u64::<LittleEndian>(nets.gamma.anneal_steps)?;
    w.write_u64::<LittleEndian>(nets.steps_trained)?;
    w.write_f64::<LittleEndian>(nets.a_max)?;
    let checksum = nets.projector_checksum();
    w.write_u32::<LittleEndian>(checksum.len() as u32)?;
    w.write_all(checksum.as_bytes())?;
    write_scale(&mut w, nets.state_scale())?;
    write_scale(&mut w, nets.cond_scale())?;
    match nets.prototypes() {
        Some(p) => {
            w.write_u32::<LittleEndian>(p.len() as u32)?;
            w.write_u32::<LittleEndian>(p.dim() as u32)?;
            write_f32s(&mut w, &p.centers.iter().copied().collect::<Vec<_>>())?;
        }
        None => {
            w.write_u32::<LittleEndian>(0)?;
            w.write_u32::<LittleEndian>(0)?;
        }
    }
    write_asnn(nets.critic(), &mut w)?;
    write_asnn(nets.actor(), &mut w)?;
    Ok(())
}

/// Reads a filter and binds it to `similarity`, which must be the model it was
/// trained with (checked by checksum). Target networks restart as online copies.
pub fn read_filter<R: Read>(mut r: R, similarity: SimilarityModel) -> Result<FilterNets> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a filter checkpoint".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported filter checkpoint version {version}")));
    }
    let tag = r.read_u8()?;
    let conditioning =
        Conditioning::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown strategy tag {tag}")))?;
    let gamma = GammaSchedule {
        start: r.read_f64::<LittleEndian>()?,
        end: r.read_f64::<LittleEndian>()?,
        anneal_steps: r.read_u64::<LittleEndian>()?,
    };
    let steps_trained = r.read_u64::<LittleEndian>()?;
    let a_max = r.read_f64::<LittleEndian>()?;
    let len = r.read_u32::<LittleEndian>()? as usize;
    if len > 256 {
        return Err(Error::Format("implausible checksum length".into()));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    let stored = String::from_utf8(buf).map_err(|_| Error::Format("checksum is not utf-8".into()))?;
    if stored != similarity.checksum() {
        return Err(Error::ProvenanceMismatch {
            filter: stored,
            threshold: similarity.checksum(),
        });
    }
    let state_scale = read_scale(&mut r)?;
    let cond_scale = read_scale(&mut r)?;
    let k = r.read_u32::<LittleEndian>()? as usize;
    let dim = r.read_u32::<LittleEndian>()? as usize;
    if k * dim > 1 << 20 {
        return Err(Error::Format("implausible prototype table".into()));
    }
    let prototypes = if k > 0 {
        let centers = Array2::from_shape_vec((k, dim), read_f32s(&mut r, k * dim)?)
            .map_err(|e| Error::Format(e.to_string()))?;
        Some(PrototypeSet {
            centers,
            assignments: Vec::new(),
            objective_trace: Vec::new(),
        })
    } else {
        None
    };
    let critic = read_asnn(&mut r)?;
    let actor = read_asnn(&mut r)?;
    FilterNets::from_parts(
        conditioning,
        similarity,
        prototypes,
        state_scale,
        cond_scale,
        critic,
        actor,
        a_max,
        gamma,
        steps_trained,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::{FailureProjector, LatentVec};

    fn sample(c: Conditioning, proj: &FailureProjector) -> FilterNets {
        let sim = SimilarityModel::Projected(proj.clone());
        let (s, cd) = FilterNets::input_dims(c, &sim, 16).unwrap();
        let protos = (c == Conditioning::Zp).then(|| PrototypeSet {
            centers: Array2::from_shape_fn((9, 16), |(i, j)| ((i + 2 * j) as f32).sin()),
            assignments: vec![],
            objective_trace: vec![],
        });
        FilterNets::new(
            c,
            sim,
            protos,
            Standardizer::fit(Array2::from_shape_fn((4, s), |(i, j)| (i * j) as f32).view()),
            Standardizer::identity(cd),
            &[8],
            1.25,
            GammaSchedule {
                start: 0.85,
                end: 0.9999,
                anneal_steps: 80,
            },
            5,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_values() {
        let proj = FailureProjector::new_random(16, 2);
        for c in Conditioning::ALL {
            let nets = sample(c, &proj);
            let mut buf = Vec::new();
            write_filter(&nets, &mut buf).unwrap();
            let back = read_filter(buf.as_slice(), SimilarityModel::Projected(proj.clone())).unwrap();
            assert_eq!(back.conditioning(), c);
            assert_eq!(back.gamma, nets.gamma);
            let z = LatentVec(vec![0.05; 16]);
            let zc = LatentVec(vec![-0.02; 16]);
            assert_eq!(back.value(&z, &zc).unwrap(), nets.value(&z, &zc).unwrap());
        }
    }

    #[test]
    fn foreign_projector_rejected() {
        let nets = sample(Conditioning::Zz, &FailureProjector::new_random(16, 2));
        let mut buf = Vec::new();
        write_filter(&nets, &mut buf).unwrap();
        let other = SimilarityModel::Projected(FailureProjector::new_random(16, 3));
        assert!(matches!(read_filter(buf.as_slice(), other), Err(Error::ProvenanceMismatch { .. })));
    }
}
