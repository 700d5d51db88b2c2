//! Model files and training-dataset CSV.
//!
//! Model file layout, all integers and floats little-endian:
//!
//! | field                | type          |
//! |----------------------|---------------|
//! | magic `TALSTM1\0`    | 8 bytes       |
//! | version              | u32 (= 1)     |
//! | input dim, hidden, T | 3 x u32       |
//! | feature mean, std    | 4 x f64 each  |
//! | epochs               | u32           |
//! | learning rate, drop  | 2 x f64       |
//! | seed                 | u64           |
//! | loss trace           | u32 count + f64s |
//! | validation trace     | u32 count + f64s |
//! | parameters           | u64 count + f64s, tensors in declared order |

use std::fs;
use std::path::Path;

use super::{ModelDims, Normalization, TaLstmModel, TrainingMeta, WindowSeries, INPUT_DIM};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"TALSTM1\0";
pub const MODEL_VERSION: u32 = 1;

fn put_u32(b: &mut Vec<u8>, v: u32) {
    b.extend_from_slice(&v.to_le_bytes());
}
fn put_u64(b: &mut Vec<u8>, v: u64) {
    b.extend_from_slice(&v.to_le_bytes());
}
fn put_f64(b: &mut Vec<u8>, v: f64) {
    b.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn encode_model(m: &TaLstmModel) -> Vec<u8> {
    let d = m.dims();
    let mut b = Vec::with_capacity(64 + 8 * m.params.len());
    b.extend_from_slice(MODEL_MAGIC);
    put_u32(&mut b, MODEL_VERSION);
    put_u32(&mut b, INPUT_DIM as u32);
    put_u32(&mut b, d.hidden as u32);
    put_u32(&mut b, d.window as u32);
    m.norm.mean.iter().for_each(|v| put_f64(&mut b, *v));
    m.norm.std.iter().for_each(|v| put_f64(&mut b, *v));
    put_u32(&mut b, m.meta.epochs);
    put_f64(&mut b, m.meta.learning_rate);
    put_f64(&mut b, m.meta.drop_factor);
    put_u64(&mut b, m.meta.seed);
    for trace in [&m.meta.loss_trace, &m.meta.val_trace] {
        put_u32(&mut b, trace.len() as u32);
        trace.iter().for_each(|v| put_f64(&mut b, *v));
    }
    put_u64(&mut b, m.params.len() as u64);
    m.params.iter().for_each(|v| put_f64(&mut b, *v));
    b
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.at < n {
            return Err(Error::Model(format!("truncated model file while reading {what}")));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Model(format!("{what} count overflows")))?, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub(crate) fn decode_model(buf: &[u8], expected_window: Option<usize>) -> Result<TaLstmModel> {
    let mut r = Reader { buf, at: 0 };
    let magic = r.take(8, "magic")?;
    if magic != MODEL_MAGIC {
        return Err(Error::Model("bad magic: not a TALSTM1 model file".into()));
    }
    let version = r.u32("version")?;
    if version != MODEL_VERSION {
        return Err(Error::Model(format!(
            "unsupported model version {version}, expected {MODEL_VERSION}"
        )));
    }
    let input = r.u32("input dimension")? as usize;
    if input != INPUT_DIM {
        return Err(Error::Model(format!("input dimension {input}, expected {INPUT_DIM}")));
    }
    let hidden = r.u32("hidden size")? as usize;
    let window = r.u32("window length")? as usize;
    if let Some(t) = expected_window {
        if t != window {
            return Err(Error::Model(format!(
                "window length mismatch: model has T={window}, expected T={t}"
            )));
        }
    }
    if hidden == 0 || window == 0 {
        return Err(Error::Model("zero hidden size or window length".into()));
    }
    let mut norm = Normalization::default();
    for c in 0..INPUT_DIM {
        norm.mean[c] = r.f64("feature mean")?;
    }
    for c in 0..INPUT_DIM {
        norm.std[c] = r.f64("feature std")?;
    }
    let epochs = r.u32("epochs")?;
    let learning_rate = r.f64("learning rate")?;
    let drop_factor = r.f64("drop factor")?;
    let seed = r.u64("seed")?;
    let n = r.u32("loss trace length")? as usize;
    let loss_trace = r.f64s(n, "loss trace")?;
    let n = r.u32("validation trace length")? as usize;
    let val_trace = r.f64s(n, "validation trace")?;
    let np = r.u64("parameter count")? as usize;
    let params = r.f64s(np, "parameters")?;
    if r.at != buf.len() {
        return Err(Error::Model(format!("{} trailing bytes after parameters", buf.len() - r.at)));
    }
    if params.iter().any(|v| !v.is_finite()) {
        return Err(Error::Model("non-finite parameter in model file".into()));
    }
    let meta = TrainingMeta {
        epochs,
        learning_rate,
        drop_factor,
        seed,
        loss_trace,
        val_trace,
    };
    TaLstmModel::from_parts(ModelDims::new(hidden, window), params, norm, meta)
}

pub fn save_model(model: &TaLstmModel, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

/// Load a model; `expected_window` rejects files with a different `T`.
pub fn load_model(path: &Path, expected_window: Option<usize>) -> Result<TaLstmModel> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&buf, expected_window)
}

pub const DATASET_HEADER: [&str; 7] = ["n", "k", "l_x", "l_y", "D", "I", "theta"];

/// Write sequences of windows; each sequence restarts `n` at 1.
pub fn write_dataset_csv(path: &Path, sequences: &[Vec<WindowSeries>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(DATASET_HEADER).map_err(|e| csv_err(path, e))?;
    for seq in sequences {
        for (i, win) in seq.iter().enumerate() {
            for (k, (x, th)) in win.inputs.iter().zip(&win.targets).enumerate() {
                let rec = [
                    (i + 1).to_string(),
                    (k + 1).to_string(),
                    x[0].to_string(),
                    x[1].to_string(),
                    x[2].to_string(),
                    x[3].to_string(),
                    th.to_string(),
                ];
                w.write_record(&rec).map_err(|e| csv_err(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Read a dataset written by [`write_dataset_csv`].
pub fn read_dataset_csv(path: &Path) -> Result<Vec<Vec<WindowSeries>>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != DATASET_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {}", DATASET_HEADER.join(",")),
        });
    }
    let mut seqs: Vec<Vec<WindowSeries>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = |m: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: m,
        };
        let int = |j: usize| -> Result<usize> {
            rec.get(j)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| bad(format!("column {} is not a positive integer", DATASET_HEADER[j])))
        };
        let num = |j: usize| -> Result<f64> {
            let v: f64 = rec
                .get(j)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| bad(format!("column {} is not a number", DATASET_HEADER[j])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("column {} is not finite", DATASET_HEADER[j])))
            }
        };
        let (n, k) = (int(0)?, int(1)?);
        let x = [num(2)?, num(3)?, num(4)?, num(5)?];
        let theta = num(6)?;
        if n == 1 && k == 1 {
            seqs.push(Vec::new());
        }
        let seq = seqs.last_mut().ok_or_else(|| bad("dataset must start at n=1, k=1".into()))?;
        if k == 1 {
            if n != seq.len() + 1 {
                return Err(bad(format!("window index {n} out of order")));
            }
            seq.push(WindowSeries {
                n,
                inputs: Vec::new(),
                targets: Vec::new(),
            });
        }
        let win = seq.last_mut().ok_or_else(|| bad("window must start at k=1".into()))?;
        if win.n != n || k != win.targets.len() + 1 {
            return Err(bad(format!("step index k={k} out of order in window {n}")));
        }
        win.inputs.push(x);
        win.targets.push(theta);
    }
    Ok(seqs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_stable() {
        let m = TaLstmModel::new(ModelDims::new(3, 2), 0).unwrap();
        let b = encode_model(&m);
        assert_eq!(&b[..8], MODEL_MAGIC);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(b[20..24].try_into().unwrap()), 2);
        let back = decode_model(&b, Some(2)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn truncation_and_trailing_bytes_rejected() {
        let m = TaLstmModel::new(ModelDims::new(3, 2), 0).unwrap();
        let b = encode_model(&m);
        assert!(decode_model(&b[..b.len() - 3], None).unwrap_err().to_string().contains("truncated"));
        let mut extra = b.clone();
        extra.push(0);
        assert!(decode_model(&extra, None).is_err());
        let mut v = b;
        v[8] = 2;
        assert!(decode_model(&v, None).unwrap_err().to_string().contains("version"));
    }
}
