//! Checkpoint format: a magic + version header, the model configuration,
//! the fixed FIR bank (when present), and a named-parameter list stored as
//! little-endian 32-bit floats.

use crate::array::Array;
use crate::error::{Error, Result};
use crate::fir::{FirBank, FirCoefficients};
use crate::model::{Model, ModelConfig, ModelKind};
use std::fs;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 4] = b"NSFC";
const VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format("checkpoint string is not UTF-8".into()))
    }
}

pub fn save_checkpoint(model: &Model<f32>, path: &Path) -> Result<()> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    let c = &model.config;
    w.str(c.kind.as_str());
    for v in [
        c.feat_dim,
        c.lstm_hidden,
        c.cond_width,
        c.blocks,
        c.stages,
        c.residual,
        c.skip,
        c.kernel,
        c.harmonics,
        c.frame_shift,
    ] {
        w.u32(v as u32);
    }
    w.u32(c.sample_rate);
    match &model.fir_bank {
        Some(bank) => {
            w.u32(4);
            for (name, coeffs) in bank.filters() {
                w.str(name);
                w.u32(coeffs.taps.len() as u32);
                for &t in &coeffs.taps {
                    w.f64(t);
                }
            }
        }
        None => w.u32(0),
    }
    w.u32(model.params.len() as u32);
    for (name, arr) in &model.params {
        w.str(name);
        w.u32(arr.rows() as u32);
        w.u32(arr.cols() as u32);
        for &v in arr.data() {
            w.f32(v);
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&w.buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model<f32>> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        buf: &bytes,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad checkpoint magic",
            path.display()
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let kind = ModelKind::parse(&r.str()?)?;
    let mut vals = [0usize; 10];
    for v in vals.iter_mut() {
        *v = r.u32()? as usize;
    }
    let sample_rate = r.u32()?;
    let config = ModelConfig {
        kind,
        feat_dim: vals[0],
        lstm_hidden: vals[1],
        cond_width: vals[2],
        blocks: vals[3],
        stages: vals[4],
        residual: vals[5],
        skip: vals[6],
        kernel: vals[7],
        harmonics: vals[8],
        frame_shift: vals[9],
        sample_rate,
    };
    let nfilters = r.u32()?;
    let fir_bank = if nfilters == 4 {
        let mut filters = Vec::new();
        for _ in 0..4 {
            let name = r.str()?;
            let ntaps = r.u32()? as usize;
            let mut taps = Vec::with_capacity(ntaps);
            for _ in 0..ntaps {
                taps.push(r.f64()?);
            }
            filters.push((name, FirCoefficients { taps }));
        }
        let find = |n: &str| -> Result<FirCoefficients> {
            filters
                .iter()
                .find(|(fname, _)| fname == n)
                .map(|(_, c)| c.clone())
                .ok_or_else(|| Error::Format(format!("checkpoint missing filter {n}")))
        };
        Some(FirBank {
            lp_voiced: find("lp_voiced")?,
            hp_voiced: find("hp_voiced")?,
            lp_unvoiced: find("lp_unvoiced")?,
            hp_unvoiced: find("hp_unvoiced")?,
        })
    } else if nfilters == 0 {
        None
    } else {
        return Err(Error::Format(format!(
            "checkpoint has {nfilters} filters, expected 0 or 4"
        )));
    };
    let nparams = r.u32()? as usize;
    let mut params = Vec::with_capacity(nparams);
    for _ in 0..nparams {
        let name = r.str()?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(r.f32()?);
        }
        params.push((name, Array::from_vec(rows, cols, data)?));
    }
    let model = Model::from_parts(config, params, fir_bank);
    model.check_layout()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn round_trip_is_bit_identical() {
        for kind in [ModelKind::BNsf, ModelKind::SNsf, ModelKind::HnNsf] {
            let dir = tempdir().unwrap();
            let path = dir.path().join("m.ckpt");
            let model = Model::<f32>::init(ModelConfig::reduced(kind, 2, 3), 9).unwrap();
            save_checkpoint(&model, &path).unwrap();
            let back = load_checkpoint(&path).unwrap();
            assert_eq!(back.config.kind, kind);
            assert_eq!(back.params.len(), model.params.len());
            for ((n1, a1), (n2, a2)) in model.params.iter().zip(back.params.iter()) {
                assert_eq!(n1, n2);
                assert_eq!(a1, a2);
            }
            assert_eq!(back.fir_bank.is_some(), kind == ModelKind::HnNsf);
        }
    }

    #[test]
    fn saved_files_are_deterministic() {
        let dir = tempdir().unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        let model = Model::<f32>::init(ModelConfig::reduced(ModelKind::HnNsf, 2, 2), 1).unwrap();
        save_checkpoint(&model, &a).unwrap();
        save_checkpoint(&model, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"JUNKJUNKJUNK").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
