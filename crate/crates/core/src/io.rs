//! SSVF1 binary dumps.
//!
//! Layout: `b"SSVF1"`, `u32 n`, `f64 L`, `u8 rank` (1 vector, 2 tensor),
//! `u8 mask flag`, then little-endian `f64` samples, x fastest, one full
//! component after another.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Profile;
use crate::grid::GridSpec;

pub const MAGIC: &[u8; 5] = b"SSVF1";

fn rank_of(c: usize) -> Result<u8> {
    match c {
        3 => Ok(1),
        9 => Ok(2),
        _ => Err(Error::Format(format!("SSVF1 stores 3 or 9 components, not {c}"))),
    }
}

pub fn write_profile<const C: usize, W: Write>(p: &Profile<C>, mut w: W) -> Result<()> {
    let rank = rank_of(C)?;
    let n = u32::try_from(p.grid.n).map_err(|_| Error::Format("n exceeds u32".into()))?;
    let mut buf = Vec::with_capacity(15 + 8 * C * p.grid.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&p.grid.half_width.to_le_bytes());
    buf.push(rank);
    buf.push(u8::from(p.masked));
    for c in p.comps.iter() {
        for v in c {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Read a dump. `gamma` and the origin mask radius are not stored in the
/// file; `None` selects the default mask of `2h`.
pub fn read_profile<const C: usize, R: Read>(mut r: R, mask_radius: Option<f64>, gamma: f64) -> Result<Profile<C>> {
    let rank = rank_of(C)?;
    let mut head = [0u8; 19];
    r.read_exact(&mut head)?;
    if &head[..5] != MAGIC {
        return Err(Error::Format("bad magic, expected SSVF1".into()));
    }
    let n = u32::from_le_bytes(head[5..9].try_into().expect("4 bytes")) as usize;
    let l = f64::from_le_bytes(head[9..17].try_into().expect("8 bytes"));
    if head[17] != rank {
        return Err(Error::Format(format!("rank {} in file, expected {rank}", head[17])));
    }
    let masked = match head[18] {
        0 => false,
        1 => true,
        f => return Err(Error::Format(format!("mask flag {f} is not 0 or 1"))),
    };
    let grid = match mask_radius {
        Some(m) => GridSpec::with_mask(l, n, m)?,
        None => GridSpec::new(l, n)?,
    };
    let mut bytes = vec![0u8; 8 * C * grid.len()];
    r.read_exact(&mut bytes)?;
    let mut p = Profile::<C>::zeros(grid, gamma);
    for (c, comp) in p.comps.iter_mut().enumerate() {
        let off = c * grid.len() * 8;
        for (i, v) in comp.iter_mut().enumerate() {
            let s = off + 8 * i;
            *v = f64::from_le_bytes(bytes[s..s + 8].try_into().expect("8 bytes"));
        }
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(Error::Format("trailing bytes after samples".into()));
    }
    p.masked = masked;
    Ok(p)
}

pub fn save<const C: usize>(p: &Profile<C>, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_profile(p, std::io::BufWriter::new(f))
}

pub fn load<const C: usize>(path: &Path, mask_radius: Option<f64>, gamma: f64) -> Result<Profile<C>> {
    let f = std::fs::File::open(path)?;
    read_profile(std::io::BufReader::new(f), mask_radius, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{TensorProfile, VectorProfile};

    #[test]
    fn round_trip_vector_and_tensor() {
        let g = GridSpec::new(3.0, 8).unwrap();
        let mut v = VectorProfile::from_fn(g, 0.5, |x, o| *o = [x[0], x[1] * x[2], 1e-300]);
        v.masked = true;
        let mut buf = Vec::new();
        write_profile(&v, &mut buf).unwrap();
        assert_eq!(buf.len(), 19 + 8 * 3 * g.len());
        assert_eq!(&buf[..5], b"SSVF1");
        let back: VectorProfile = read_profile(&buf[..], None, 0.5).unwrap();
        assert_eq!(back, v);

        let t = TensorProfile::from_fn(g, 0.5, |x, o| {
            for (ab, s) in o.iter_mut().enumerate() {
                *s = ab as f64 * x[2];
            }
        });
        let mut buf = Vec::new();
        write_profile(&t, &mut buf).unwrap();
        assert_eq!(buf[17], 2);
        let back: TensorProfile = read_profile(&buf[..], None, 0.5).unwrap();
        assert_eq!(back, t);
        assert!(read_profile::<3, _>(&buf[..], None, 0.5).is_err());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let g = GridSpec::new(3.0, 8).unwrap();
        let v = VectorProfile::zeros(g, 0.5);
        let mut buf = Vec::new();
        write_profile(&v, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_profile::<3, _>(&bad[..], None, 0.5), Err(Error::Format(_))));
        assert!(read_profile::<3, _>(&buf[..buf.len() - 1], None, 0.5).is_err());
    }
}
