//! Single-file binary container for trained posteriors.
//!
//! All integers and reals are little-endian. Layout:
//!
//! | bytes | field |
//! |---|---|
//! | 5 | magic `BMAL1` |
//! | 1 | format version (`1`) |
//! | 1 | method tag: 0 map, 1 dropout, 2 vi, 3 ensemble, 4 svgd |
//! | 4 | `input_dim` (u32) |
//! | 4 | number of hidden layers `L` (u32) |
//! | 4 L | hidden widths (u32 each) |
//! | 8 | architecture dropout rate (f64) |
//! | 8 | sampling dropout rate (f64, 0 unless dropout) |
//! | 4 | default number of inference samples (u32) |
//! | 4 | number of stored vectors `V` (u32) |
//! | 8 | first stochastic parameter index (u64, 0 unless vi) |
//! | 8 | vector length `P` (u64), equal to the architecture's parameter count |
//! | 8 V P | vectors of f64, one after another |
//! | 4 | CRC-32 (IEEE) of every byte after the magic and before the checksum |
//!
//! MAP and dropout store one vector, VI stores `mu` then `rho`, ensemble and
//! SVGD store one vector per particle.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::inference::{Approximation, GaussianVariationalParams, Method, Posterior};
use crate::network::{MlpArchitecture, ParameterParticle};

pub const MAGIC: &[u8; 5] = b"BMAL1";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelFileError {
    #[error("unrecognized format: missing BMAL1 magic")]
    BadMagic,
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u8),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

fn method_tag(m: Method) -> u8 {
    match m {
        Method::Map => 0,
        Method::Dropout => 1,
        Method::Vi => 2,
        Method::Ensemble => 3,
        Method::Svgd => 4,
    }
}

fn method_from_tag(t: u8) -> Option<Method> {
    Method::ALL.into_iter().find(|&m| method_tag(m) == t)
}

/// Serialises a posterior to the container format.
pub fn encode_posterior(post: &Posterior) -> Vec<u8> {
    let arch = &post.arch;
    let (rate, stochastic_from, vectors): (f64, usize, Vec<&[f64]>) = match &post.approx {
        Approximation::Map(p) => (0.0, 0, vec![p.as_slice()]),
        Approximation::Dropout { particle, rate } => (*rate, 0, vec![particle.as_slice()]),
        Approximation::Vi(vp) => (0.0, vp.stochastic_from, vec![&vp.mu, &vp.rho]),
        Approximation::Ensemble(ps) | Approximation::Svgd(ps) => {
            (0.0, 0, ps.iter().map(|p| p.as_slice()).collect())
        }
    };
    let len = arch.n_params();
    let mut out = Vec::with_capacity(64 + 8 * len * vectors.len());
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.push(method_tag(post.method()));
    out.extend_from_slice(&(arch.input_dim as u32).to_le_bytes());
    out.extend_from_slice(&(arch.hidden_sizes.len() as u32).to_le_bytes());
    for &h in &arch.hidden_sizes {
        out.extend_from_slice(&(h as u32).to_le_bytes());
    }
    out.extend_from_slice(&arch.dropout_rate.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(post.n_inference as u32).to_le_bytes());
    out.extend_from_slice(&(vectors.len() as u32).to_le_bytes());
    out.extend_from_slice(&(stochastic_from as u64).to_le_bytes());
    out.extend_from_slice(&(len as u64).to_le_bytes());
    for v in vectors {
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out[MAGIC.len()..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelFileError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ModelFileError::ShapeMismatch("file is truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelFileError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ModelFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelFileError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelFileError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn shape(msg: impl Into<String>) -> Error {
    ModelFileError::ShapeMismatch(msg.into()).into()
}

/// Parses and validates a container produced by [`encode_posterior`].
pub fn decode_posterior(bytes: &[u8]) -> Result<Posterior> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(ModelFileError::BadMagic.into());
    }
    if bytes.len() < MAGIC.len() + 1 {
        return Err(shape("file is truncated"));
    }
    let version = bytes[MAGIC.len()];
    if version != FORMAT_VERSION {
        return Err(ModelFileError::UnsupportedVersion(version).into());
    }
    if bytes.len() < MAGIC.len() + 1 + 4 {
        return Err(shape("file is truncated"));
    }
    let body_end = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[MAGIC.len()..body_end]);
    if stored != computed {
        return Err(ModelFileError::ChecksumMismatch { stored, computed }.into());
    }

    let mut r = Reader {
        buf: &bytes[..body_end],
        pos: MAGIC.len() + 1,
    };
    let tag = r.u8()?;
    let method = method_from_tag(tag).ok_or_else(|| shape(format!("unknown method tag {tag}")))?;
    let input_dim = r.u32()? as usize;
    let n_hidden = r.u32()? as usize;
    if n_hidden > (r.buf.len() - r.pos) / 4 {
        return Err(shape("hidden layer count exceeds file size"));
    }
    let hidden = (0..n_hidden)
        .map(|_| r.u32().map(|h| h as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let arch_rate = r.f64()?;
    let rate = r.f64()?;
    let n_inference = r.u32()? as usize;
    let n_vectors = r.u32()? as usize;
    let stochastic_from = r.u64()? as usize;
    let vector_len = r.u64()? as usize;

    let arch = MlpArchitecture::new(input_dim, hidden)
        .and_then(|a| a.with_dropout(arch_rate))
        .map_err(|e| shape(format!("invalid architecture: {e}")))?;
    if vector_len != arch.n_params() {
        return Err(shape(format!(
            "vectors hold {vector_len} values but the architecture has {} parameters",
            arch.n_params()
        )));
    }
    let payload = n_vectors
        .checked_mul(vector_len)
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| shape("payload size overflows"))?;
    if r.buf.len() - r.pos != payload {
        return Err(shape(format!(
            "expected {payload} payload bytes, found {}",
            r.buf.len() - r.pos
        )));
    }
    let mut vectors = (0..n_vectors)
        .map(|_| (0..vector_len).map(|_| r.f64()).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;

    let expect_vectors = |n: usize| -> Result<()> {
        if n_vectors == n {
            Ok(())
        } else {
            Err(shape(format!("{method} stores {n} vectors, found {n_vectors}")))
        }
    };
    let particle = |v: Vec<f64>| ParameterParticle::from_flat(&arch, v);
    let approx = match method {
        Method::Map => {
            expect_vectors(1)?;
            Approximation::Map(particle(vectors.remove(0))?)
        }
        Method::Dropout => {
            expect_vectors(1)?;
            if !(0.0..1.0).contains(&rate) {
                return Err(shape(format!("dropout rate {rate} outside [0, 1)")));
            }
            Approximation::Dropout {
                particle: particle(vectors.remove(0))?,
                rate,
            }
        }
        Method::Vi => {
            expect_vectors(2)?;
            let rho = vectors.pop().unwrap();
            let mu = vectors.pop().unwrap();
            Approximation::Vi(
                GaussianVariationalParams::new(mu, rho, stochastic_from)
                    .map_err(|e| shape(e.to_string()))?,
            )
        }
        Method::Ensemble | Method::Svgd => {
            if n_vectors == 0 {
                return Err(shape(format!("{method} posterior stores no particles")));
            }
            let ps = vectors.into_iter().map(particle).collect::<Result<Vec<_>>>()?;
            if method == Method::Ensemble {
                Approximation::Ensemble(ps)
            } else {
                Approximation::Svgd(ps)
            }
        }
    };
    Ok(Posterior {
        arch,
        approx,
        n_inference,
    })
}

/// Writes `post` to `path` through a temporary sibling file and a rename,
/// so readers never observe a partial file.
pub fn save_posterior(post: &Posterior, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_posterior(post);
    let mut tmp_name = path
        .file_name()
        .ok_or_else(|| Error::precondition(format!("{} is not a file path", path.display())))?
        .to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(format!("writing model {}", path.display()), e)
    })
}

pub fn load_posterior(path: impl AsRef<Path>) -> Result<Posterior> {
    let path = path.as_ref();
    let bytes =
        fs::read(path).map_err(|e| Error::io(format!("reading model {}", path.display()), e))?;
    decode_posterior(&bytes)
}
