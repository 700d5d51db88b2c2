//! Single LSTM cell step with a cached backward pass.

/// Owned parameters of one LSTM cell. `w` is `4H x (H + input)` row-major
/// with gate blocks f, i, o, g; `b` has length `4H`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub hidden: usize,
    pub input: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            hidden,
            input,
            w: vec![0.0; 4 * hidden * (hidden + input)],
            b: vec![0.0; 4 * hidden],
        }
    }

    pub(crate) fn view(&self) -> LstmRef<'_> {
        LstmRef {
            hidden: self.hidden,
            input: self.input,
            w: &self.w,
            b: &self.b,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LstmRef<'a> {
    pub hidden: usize,
    pub input: usize,
    pub w: &'a [f64],
    pub b: &'a [f64],
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `(h, c)` after one step.
pub fn lstm_step(params: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (h, c, _) = step_cached(params.view(), x, h_prev, c_prev);
    (h, c)
}

#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    /// `[h_prev, x]`.
    pub hx: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub tc: Vec<f64>,
}

pub(crate) fn step_cached(p: LstmRef<'_>, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>, LstmCache) {
    let h = p.hidden;
    let n = h + p.input;
    debug_assert_eq!(x.len(), p.input);
    debug_assert_eq!(h_prev.len(), h);
    let mut hx = Vec::with_capacity(n);
    hx.extend_from_slice(h_prev);
    hx.extend_from_slice(x);
    let mut z = p.b.to_vec();
    for (r, zr) in z.iter_mut().enumerate() {
        let row = &p.w[r * n..(r + 1) * n];
        *zr += row.iter().zip(&hx).map(|(a, b)| a * b).sum::<f64>();
    }
    let f: Vec<f64> = z[0..h].iter().map(|&v| sigmoid(v)).collect();
    let i: Vec<f64> = z[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
    let o: Vec<f64> = z[2 * h..3 * h].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = z[3 * h..4 * h].iter().map(|&v| v.tanh()).collect();
    let c: Vec<f64> = (0..h).map(|j| f[j] * c_prev[j] + i[j] * g[j]).collect();
    let tc: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let hn: Vec<f64> = (0..h).map(|j| o[j] * tc[j]).collect();
    let cache = LstmCache {
        hx,
        c_prev: c_prev.to_vec(),
        f,
        i,
        o,
        g,
        tc,
    };
    (hn, c, cache)
}

/// Backward through one step. Accumulates into `dw`, `db` and returns
/// `(dh_prev, dc_prev, dx)`.
pub(crate) fn step_backward(
    p: LstmRef<'_>,
    cache: &LstmCache,
    dh: &[f64],
    dc_in: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = p.hidden;
    let n = h + p.input;
    let mut dz = vec![0.0; 4 * h];
    let mut dc_prev = vec![0.0; h];
    for j in 0..h {
        let (f, i, o, g, tc) = (cache.f[j], cache.i[j], cache.o[j], cache.g[j], cache.tc[j]);
        let dc = dc_in[j] + dh[j] * o * (1.0 - tc * tc);
        dz[j] = dc * cache.c_prev[j] * f * (1.0 - f);
        dz[h + j] = dc * g * i * (1.0 - i);
        dz[2 * h + j] = dh[j] * tc * o * (1.0 - o);
        dz[3 * h + j] = dc * i * (1.0 - g * g);
        dc_prev[j] = dc * f;
    }
    let mut dhx = vec![0.0; n];
    for (r, &d) in dz.iter().enumerate() {
        db[r] += d;
        if d == 0.0 {
            continue;
        }
        let row = &p.w[r * n..(r + 1) * n];
        let drow = &mut dw[r * n..(r + 1) * n];
        for c in 0..n {
            drow[c] += d * cache.hx[c];
            dhx[c] += d * row[c];
        }
    }
    let dx = dhx.split_off(h);
    (dhx, dc_prev, dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_parameters_closed_form() {
        let p = LstmParams::zeros(3, 2);
        let c_prev = [0.4, -1.2, 2.0];
        let (h, c) = lstm_step(&p, &[0.3, -0.7], &[0.1, 0.2, 0.3], &c_prev);
        for j in 0..3 {
            assert!((c[j] - 0.5 * c_prev[j]).abs() < 1e-15);
            assert!((h[j] - 0.5 * (0.5 * c_prev[j]).tanh()).abs() < 1e-15);
        }
        let (h, c) = lstm_step(&p, &[0.0, 0.0], &[0.0; 3], &[0.0; 3]);
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(c, vec![0.0; 3]);
    }

    /// Separate gate matrices, written out per gate without the stacked layout.
    fn reference_step(p: &LstmParams, x: &[f64], hp: &[f64], cp: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h = p.hidden;
        let n = h + p.input;
        let gate = |k: usize, j: usize| -> f64 {
            let row = k * h + j;
            let mut s = p.b[row];
            for c in 0..h {
                s += p.w[row * n + c] * hp[c];
            }
            for c in 0..p.input {
                s += p.w[row * n + h + c] * x[c];
            }
            s
        };
        let logistic = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut hs = vec![];
        let mut cs = vec![];
        for j in 0..h {
            let f = logistic(gate(0, j));
            let i = logistic(gate(1, j));
            let o = logistic(gate(2, j));
            let g = gate(3, j).tanh();
            let c = f * cp[j] + i * g;
            cs.push(c);
            hs.push(o * c.tanh());
        }
        (hs, cs)
    }

    #[test]
    fn matches_reference_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let mut p = LstmParams::zeros(4, 3);
            p.w.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
            p.b.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let hp: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cp: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (h, c) = lstm_step(&p, &x, &hp, &cp);
            let (hr, cr) = reference_step(&p, &x, &hp, &cp);
            for j in 0..4 {
                assert!((h[j] - hr[j]).abs() < 1e-14);
                assert!((c[j] - cr[j]).abs() < 1e-14);
                assert!(h[j].abs() < 1.0);
            }
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
