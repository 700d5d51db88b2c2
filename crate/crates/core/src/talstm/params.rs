//! Flat parameter storage with a named tensor layout.
//!
//! Every learnable tensor lives in one `Vec<f64>` in the order of
//! [`TENSORS`]. Matrices are row-major. LSTM blocks stack the four gates
//! in the order forget, input, output, candidate, and their input vector is
//! the concatenation `[h_prev, x]`.

use std::ops::Range;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::INPUT_DIM;

/// Shape parameters of a model. Attention, fusion and output-head widths
/// all equal `hidden`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub hidden: usize,
    pub window: usize,
}

impl ModelDims {
    pub fn new(hidden: usize, window: usize) -> Self {
        Self { hidden, window }
    }
    pub fn attn(&self) -> usize {
        self.hidden
    }
    pub fn fusion(&self) -> usize {
        self.hidden
    }
    pub fn head(&self) -> usize {
        self.hidden
    }
    /// Width of the fused decoder input `[Xbar flattened, g, Y]`.
    pub fn fusion_input(&self) -> usize {
        self.window * INPUT_DIM + self.hidden + self.window
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tensor {
    /// Encoder LSTM weights, `4H x (H + 4)`.
    EncW,
    EncB,
    /// Local attention `v_e`, `W_e`, `U_e`, `b_e`.
    AttEv,
    AttEw,
    AttEu,
    AttEb,
    /// Global attention `v_d`, `W_d`, `U_d`, `b_d`.
    AttDv,
    AttDw,
    AttDu,
    AttDb,
    /// Decoder input fusion `W_n`, `b'`.
    FuseW,
    FuseB,
    /// Decoder LSTM weights, `4H x (H + Q)`.
    DecW,
    DecB,
    /// Output head `W_y`, `b_w`, `V_y`, `b_y`.
    OutW,
    OutBw,
    OutV,
    OutBy,
}

pub const TENSORS: [Tensor; 18] = [
    Tensor::EncW,
    Tensor::EncB,
    Tensor::AttEv,
    Tensor::AttEw,
    Tensor::AttEu,
    Tensor::AttEb,
    Tensor::AttDv,
    Tensor::AttDw,
    Tensor::AttDu,
    Tensor::AttDb,
    Tensor::FuseW,
    Tensor::FuseB,
    Tensor::DecW,
    Tensor::DecB,
    Tensor::OutW,
    Tensor::OutBw,
    Tensor::OutV,
    Tensor::OutBy,
];

impl Tensor {
    pub fn name(self) -> &'static str {
        match self {
            Tensor::EncW => "enc.W",
            Tensor::EncB => "enc.b",
            Tensor::AttEv => "att_e.v",
            Tensor::AttEw => "att_e.W",
            Tensor::AttEu => "att_e.U",
            Tensor::AttEb => "att_e.b",
            Tensor::AttDv => "att_d.v",
            Tensor::AttDw => "att_d.W",
            Tensor::AttDu => "att_d.U",
            Tensor::AttDb => "att_d.b",
            Tensor::FuseW => "fuse.W",
            Tensor::FuseB => "fuse.b",
            Tensor::DecW => "dec.W",
            Tensor::DecB => "dec.b",
            Tensor::OutW => "out.W_y",
            Tensor::OutBw => "out.b_w",
            Tensor::OutV => "out.V_y",
            Tensor::OutBy => "out.b_y",
        }
    }

    pub fn is_bias(self) -> bool {
        matches!(
            self,
            Tensor::EncB | Tensor::AttEb | Tensor::AttDb | Tensor::FuseB | Tensor::DecB | Tensor::OutBw | Tensor::OutBy
        )
    }

    /// `(rows, cols)`; vectors are `(n, 1)`.
    pub fn shape(self, d: &ModelDims) -> (usize, usize) {
        let h = d.hidden;
        let a = d.attn();
        let q = d.fusion();
        let p = d.head();
        let t = d.window;
        match self {
            Tensor::EncW => (4 * h, h + INPUT_DIM),
            Tensor::EncB => (4 * h, 1),
            Tensor::AttEv => (a, 1),
            Tensor::AttEw => (a, 2 * h),
            Tensor::AttEu => (a, t + INPUT_DIM),
            Tensor::AttEb => (a, 1),
            Tensor::AttDv => (a, 1),
            Tensor::AttDw => (a, 2 * h),
            Tensor::AttDu => (a, h),
            Tensor::AttDb => (a, 1),
            Tensor::FuseW => (q, d.fusion_input()),
            Tensor::FuseB => (q, 1),
            Tensor::DecW => (4 * h, h + q),
            Tensor::DecB => (4 * h, 1),
            Tensor::OutW => (p, 2 * h),
            Tensor::OutBw => (p, 1),
            Tensor::OutV => (t, p),
            Tensor::OutBy => (t, 1),
        }
    }

    /// Fan-in used for the uniform initialization range.
    fn fan_in(self, d: &ModelDims) -> usize {
        match self {
            Tensor::EncB => Tensor::EncW.shape(d).1,
            Tensor::AttEv => d.attn(),
            Tensor::AttEb => Tensor::AttEu.shape(d).1 + 2 * d.hidden,
            Tensor::AttDv => d.attn(),
            Tensor::AttDb => 3 * d.hidden,
            Tensor::FuseB => d.fusion_input(),
            Tensor::DecB => Tensor::DecW.shape(d).1,
            Tensor::OutBw => 2 * d.hidden,
            Tensor::OutBy => d.head(),
            t => t.shape(d).1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub dims: ModelDims,
    offsets: [usize; 18],
    total: usize,
}

impl Layout {
    pub fn new(dims: ModelDims) -> Self {
        let mut offsets = [0; 18];
        let mut at = 0;
        for (i, t) in TENSORS.iter().enumerate() {
            offsets[i] = at;
            let (r, c) = t.shape(&dims);
            at += r * c;
        }
        Self {
            dims,
            offsets,
            total: at,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn range(&self, t: Tensor) -> Range<usize> {
        let i = t as usize;
        let (r, c) = t.shape(&self.dims);
        self.offsets[i]..self.offsets[i] + r * c
    }

    /// Seeded uniform initialization with the forget-gate bias at +1.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![0.0; self.total];
        for t in TENSORS {
            let bound = 1.0 / (t.fan_in(&self.dims) as f64).sqrt();
            for v in &mut p[self.range(t)] {
                *v = rng.random_range(-bound..bound);
            }
        }
        let h = self.dims.hidden;
        for t in [Tensor::EncB, Tensor::DecB] {
            let r = self.range(t);
            p[r.start..r.start + h].fill(1.0);
        }
        p
    }
}
