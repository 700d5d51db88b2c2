//! Forward and backward passes of the attention encoder-decoder.
//!
//! Per window `n` with normalized inputs `x_k` and scaled teacher series `y`:
//!
//! ```text
//! e_k  = v_e . tanh(W_e [he; ce] + U_e [y; x_k] + b_e)     a = softmax(e)
//! xb_k = a_k x_k          (he, ce) <- encoder LSTM over xb_1..xb_T
//! l_t  = v_d . tanh(W_d [hd; cd] + U_d he_t + b_d)         b = softmax(l)
//! g    = sum_t b_t he_t   u = W_n [xb; g; y] + b'
//! (hd, cd) <- decoder LSTM(u)   yhat = V_y (W_y [hd; cd] + b_w) + b_y
//! ```
//!
//! `yhat` of window `n` is the forecast of the teacher series of window
//! `n + 1`. The loss is the squared wrapped difference (period 2 in scaled
//! units) summed over forecast windows and averaged over `T`.

use super::lstm::{step_backward, step_cached, LstmCache, LstmRef};
use super::params::{Layout, Tensor};
use super::INPUT_DIM;

pub(crate) struct Net<'a> {
    pub l: &'a Layout,
    pub p: &'a [f64],
}

impl<'a> Net<'a> {
    pub fn new(l: &'a Layout, p: &'a [f64]) -> Self {
        debug_assert_eq!(p.len(), l.total());
        Self { l, p }
    }

    fn t(&self, t: Tensor) -> &'a [f64] {
        &self.p[self.l.range(t)]
    }

    fn enc(&self) -> LstmRef<'a> {
        LstmRef {
            hidden: self.l.dims.hidden,
            input: INPUT_DIM,
            w: self.t(Tensor::EncW),
            b: self.t(Tensor::EncB),
        }
    }

    fn dec(&self) -> LstmRef<'a> {
        LstmRef {
            hidden: self.l.dims.hidden,
            input: self.l.dims.fusion(),
            w: self.t(Tensor::DecW),
            b: self.t(Tensor::DecB),
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Wrap a scaled angle difference into `[-1, 1)`.
pub(crate) fn wrap2(d: f64) -> f64 {
    (d + 1.0).rem_euclid(2.0) - 1.0
}

fn matvec_acc(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), cols);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        out[r] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn matvec_t_acc(w: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let d = v[r];
        if d == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for c in 0..cols {
            out[c] += row[c] * d;
        }
    }
}

fn outer_acc(dw: &mut [f64], rows: usize, cols: usize, v: &[f64], x: &[f64]) {
    for r in 0..rows {
        let d = v[r];
        if d == 0.0 {
            continue;
        }
        let row = &mut dw[r * cols..(r + 1) * cols];
        for c in 0..cols {
            row[c] += d * x[c];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of the local-attention encoder for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeOut {
    /// Attention-weighted inputs, `T x 4` flattened row-major.
    pub xbar: Vec<f64>,
    pub he: Vec<f64>,
    pub ce: Vec<f64>,
    /// Local attention weights `a_k`.
    pub attention: Vec<f64>,
}

pub(crate) struct EncCache {
    s: Vec<f64>,
    yx: Vec<Vec<f64>>,
    tz: Vec<Vec<f64>>,
    a: Vec<f64>,
    x: Vec<[f64; INPUT_DIM]>,
    lstm: Vec<LstmCache>,
}

pub(crate) fn encode(net: &Net<'_>, x: &[[f64; INPUT_DIM]], y: &[f64], he: &[f64], ce: &[f64]) -> (EncodeOut, EncCache) {
    let d = net.l.dims;
    let (h, a_dim, t) = (d.hidden, d.attn(), d.window);
    debug_assert_eq!(x.len(), t);
    debug_assert_eq!(y.len(), t);
    let mut s = Vec::with_capacity(2 * h);
    s.extend_from_slice(he);
    s.extend_from_slice(ce);
    let mut base = net.t(Tensor::AttEb).to_vec();
    matvec_acc(net.t(Tensor::AttEw), a_dim, 2 * h, &s, &mut base);
    let v_e = net.t(Tensor::AttEv);
    let u_e = net.t(Tensor::AttEu);
    let mut yx = Vec::with_capacity(t);
    let mut tz = Vec::with_capacity(t);
    let mut e = Vec::with_capacity(t);
    for xk in x {
        let mut inp = Vec::with_capacity(t + INPUT_DIM);
        inp.extend_from_slice(y);
        inp.extend_from_slice(xk);
        let mut z = base.clone();
        matvec_acc(u_e, a_dim, t + INPUT_DIM, &inp, &mut z);
        z.iter_mut().for_each(|v| *v = v.tanh());
        e.push(dot(v_e, &z));
        yx.push(inp);
        tz.push(z);
    }
    let a = softmax(&e);
    let mut xbar = Vec::with_capacity(t * INPUT_DIM);
    for (k, xk) in x.iter().enumerate() {
        xbar.extend(xk.iter().map(|v| v * a[k]));
    }
    let enc = net.enc();
    let mut hs = he.to_vec();
    let mut cs = ce.to_vec();
    let mut lstm = Vec::with_capacity(t);
    for k in 0..t {
        let (hn, cn, cache) = step_cached(enc, &xbar[k * INPUT_DIM..(k + 1) * INPUT_DIM], &hs, &cs);
        hs = hn;
        cs = cn;
        lstm.push(cache);
    }
    let out = EncodeOut {
        xbar,
        he: hs,
        ce: cs,
        attention: a.clone(),
    };
    let cache = EncCache {
        s,
        yx,
        tz,
        a,
        x: x.to_vec(),
        lstm,
    };
    (out, cache)
}

/// Result of the global-attention decoder for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOut {
    pub hd: Vec<f64>,
    pub cd: Vec<f64>,
    /// Context vector `g` over stored encoder states.
    pub context: Vec<f64>,
    /// Global attention weights over windows `1..=n`.
    pub beta: Vec<f64>,
}

pub(crate) struct DecCache {
    sd: Vec<f64>,
    r: Vec<Vec<f64>>,
    beta: Vec<f64>,
    fin: Vec<f64>,
    lstm: LstmCache,
    hdcd: Vec<f64>,
    m: Vec<f64>,
}

pub(crate) fn decode(
    net: &Net<'_>,
    xbar: &[f64],
    enc_states: &[Vec<f64>],
    y: &[f64],
    hd: &[f64],
    cd: &[f64],
) -> (DecodeOut, DecCache, Vec<f64>) {
    let d = net.l.dims;
    let (h, a_dim) = (d.hidden, d.attn());
    let mut sd = Vec::with_capacity(2 * h);
    sd.extend_from_slice(hd);
    sd.extend_from_slice(cd);
    let mut base = net.t(Tensor::AttDb).to_vec();
    matvec_acc(net.t(Tensor::AttDw), a_dim, 2 * h, &sd, &mut base);
    let v_d = net.t(Tensor::AttDv);
    let u_d = net.t(Tensor::AttDu);
    let mut r = Vec::with_capacity(enc_states.len());
    let mut logits = Vec::with_capacity(enc_states.len());
    for he in enc_states {
        let mut q = base.clone();
        matvec_acc(u_d, a_dim, h, he, &mut q);
        q.iter_mut().for_each(|v| *v = v.tanh());
        logits.push(dot(v_d, &q));
        r.push(q);
    }
    let beta = softmax(&logits);
    let mut g = vec![0.0; h];
    for (b, he) in beta.iter().zip(enc_states) {
        for j in 0..h {
            g[j] += b * he[j];
        }
    }
    let mut fin = Vec::with_capacity(d.fusion_input());
    fin.extend_from_slice(xbar);
    fin.extend_from_slice(&g);
    fin.extend_from_slice(y);
    let mut u = net.t(Tensor::FuseB).to_vec();
    matvec_acc(net.t(Tensor::FuseW), d.fusion(), d.fusion_input(), &fin, &mut u);
    let (hn, cn, lstm) = step_cached(net.dec(), &u, hd, cd);

    let mut hdcd = Vec::with_capacity(2 * h);
    hdcd.extend_from_slice(&hn);
    hdcd.extend_from_slice(&cn);
    let mut m = net.t(Tensor::OutBw).to_vec();
    matvec_acc(net.t(Tensor::OutW), d.head(), 2 * h, &hdcd, &mut m);
    let mut yhat = net.t(Tensor::OutBy).to_vec();
    matvec_acc(net.t(Tensor::OutV), d.window, d.head(), &m, &mut yhat);

    let out = DecodeOut {
        hd: hn,
        cd: cn,
        context: g,
        beta: beta.clone(),
    };
    let cache = DecCache {
        sd,
        r,
        beta,
        fin,
        lstm,
        hdcd,
        m,
    };
    (out, cache, yhat)
}

pub(crate) struct WindowPass {
    enc: EncCache,
    dec: DecCache,
    pub yhat: Vec<f64>,
}

pub(crate) struct SequencePass {
    pub windows: Vec<WindowPass>,
    enc_states: Vec<Vec<f64>>,
}

/// Forward over a whole sequence from zero initial states.
pub(crate) fn forward_sequence(net: &Net<'_>, xs: &[Vec<[f64; INPUT_DIM]>], ys: &[Vec<f64>]) -> SequencePass {
    let h = net.l.dims.hidden;
    let (mut he, mut ce) = (vec![0.0; h], vec![0.0; h]);
    let (mut hd, mut cd) = (vec![0.0; h], vec![0.0; h]);
    let mut enc_states: Vec<Vec<f64>> = Vec::with_capacity(xs.len());
    let mut windows = Vec::with_capacity(xs.len());
    for (x, y) in xs.iter().zip(ys) {
        let (eo, ec) = encode(net, x, y, &he, &ce);
        enc_states.push(eo.he.clone());
        let (dout, dc, yhat) = decode(net, &eo.xbar, &enc_states, y, &hd, &cd);
        he = eo.he;
        ce = eo.ce;
        hd = dout.hd;
        cd = dout.cd;
        windows.push(WindowPass { enc: ec, dec: dc, yhat });
    }
    SequencePass { windows, enc_states }
}

/// Sum over forecast windows of the mean squared wrapped error.
pub(crate) fn sequence_loss(pass: &SequencePass, ys: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    for n in 0..pass.windows.len().saturating_sub(1) {
        let yhat = &pass.windows[n].yhat;
        let target = &ys[n + 1];
        let t = target.len() as f64;
        sum += yhat.iter().zip(target).map(|(p, q)| wrap2(p - q).powi(2)).sum::<f64>() / t;
    }
    sum
}

/// Accumulate `scale * d(sequence_loss)/d(params)` into `grad`.
pub(crate) fn backward_sequence(net: &Net<'_>, pass: &SequencePass, ys: &[Vec<f64>], scale: f64, grad: &mut [f64]) {
    let l = net.l;
    let d = l.dims;
    let (h, a_dim, t, q, p_dim) = (d.hidden, d.attn(), d.window, d.fusion(), d.head());
    let nwin = pass.windows.len();

    // Split the gradient buffer into per-tensor slices.
    let mut g_enc_w = vec![0.0; l.range(Tensor::EncW).len()];
    let mut g_enc_b = vec![0.0; l.range(Tensor::EncB).len()];
    let mut g_ae_v = vec![0.0; a_dim];
    let mut g_ae_w = vec![0.0; l.range(Tensor::AttEw).len()];
    let mut g_ae_u = vec![0.0; l.range(Tensor::AttEu).len()];
    let mut g_ae_b = vec![0.0; a_dim];
    let mut g_ad_v = vec![0.0; a_dim];
    let mut g_ad_w = vec![0.0; l.range(Tensor::AttDw).len()];
    let mut g_ad_u = vec![0.0; l.range(Tensor::AttDu).len()];
    let mut g_ad_b = vec![0.0; a_dim];
    let mut g_fu_w = vec![0.0; l.range(Tensor::FuseW).len()];
    let mut g_fu_b = vec![0.0; q];
    let mut g_dec_w = vec![0.0; l.range(Tensor::DecW).len()];
    let mut g_dec_b = vec![0.0; 4 * h];
    let mut g_out_w = vec![0.0; l.range(Tensor::OutW).len()];
    let mut g_out_bw = vec![0.0; p_dim];
    let mut g_out_v = vec![0.0; l.range(Tensor::OutV).len()];
    let mut g_out_by = vec![0.0; t];

    let w_e = net.t(Tensor::AttEw);
    let v_e = net.t(Tensor::AttEv);
    let v_d = net.t(Tensor::AttDv);
    let w_d = net.t(Tensor::AttDw);
    let u_d = net.t(Tensor::AttDu);
    let w_n = net.t(Tensor::FuseW);
    let w_y = net.t(Tensor::OutW);
    let v_y = net.t(Tensor::OutV);

    let mut dhe_acc = vec![vec![0.0; h]; nwin];
    let (mut dhe_next, mut dce_next) = (vec![0.0; h], vec![0.0; h]);
    let (mut dhd_next, mut dcd_next) = (vec![0.0; h], vec![0.0; h]);

    for n in (0..nwin).rev() {
        let wp = &pass.windows[n];
        let dc = &wp.dec;

        // Output head.
        let mut dhd = dhd_next.clone();
        let mut dcd = dcd_next.clone();
        if n + 1 < nwin {
            let target = &ys[n + 1];
            let dy: Vec<f64> = wp
                .yhat
                .iter()
                .zip(target)
                .map(|(p, q)| scale * 2.0 * wrap2(p - q) / t as f64)
                .collect();
            outer_acc(&mut g_out_v, t, p_dim, &dy, &dc.m);
            g_out_by.iter_mut().zip(&dy).for_each(|(g, v)| *g += v);
            let mut dm = vec![0.0; p_dim];
            matvec_t_acc(v_y, t, p_dim, &dy, &mut dm);
            outer_acc(&mut g_out_w, p_dim, 2 * h, &dm, &dc.hdcd);
            g_out_bw.iter_mut().zip(&dm).for_each(|(g, v)| *g += v);
            let mut dhdcd = vec![0.0; 2 * h];
            matvec_t_acc(w_y, p_dim, 2 * h, &dm, &mut dhdcd);
            for j in 0..h {
                dhd[j] += dhdcd[j];
                dcd[j] += dhdcd[h + j];
            }
        }

        // Decoder LSTM.
        let (mut dhd_prev, mut dcd_prev, du) = step_backward(net.dec(), &dc.lstm, &dhd, &dcd, &mut g_dec_w, &mut g_dec_b);

        // Fusion.
        outer_acc(&mut g_fu_w, q, d.fusion_input(), &du, &dc.fin);
        g_fu_b.iter_mut().zip(&du).for_each(|(g, v)| *g += v);
        let mut dfin = vec![0.0; d.fusion_input()];
        matvec_t_acc(w_n, q, d.fusion_input(), &du, &mut dfin);
        let dxbar_fuse = &dfin[..t * INPUT_DIM];
        let dg = &dfin[t * INPUT_DIM..t * INPUT_DIM + h];

        // Global attention over windows 0..=n.
        let states = &pass.enc_states[..=n];
        let dbeta: Vec<f64> = states.iter().map(|he| dot(dg, he)).collect();
        let sb: f64 = dc.beta.iter().zip(&dbeta).map(|(b, x)| b * x).sum();
        let mut dsd = vec![0.0; 2 * h];
        for (tau, he) in states.iter().enumerate() {
            let b = dc.beta[tau];
            for j in 0..h {
                dhe_acc[tau][j] += b * dg[j];
            }
            let dl = b * (dbeta[tau] - sb);
            if dl == 0.0 {
                continue;
            }
            let r = &dc.r[tau];
            let mut dq = vec![0.0; a_dim];
            for i in 0..a_dim {
                g_ad_v[i] += dl * r[i];
                dq[i] = dl * v_d[i] * (1.0 - r[i] * r[i]);
            }
            outer_acc(&mut g_ad_w, a_dim, 2 * h, &dq, &dc.sd);
            g_ad_b.iter_mut().zip(&dq).for_each(|(g, v)| *g += v);
            matvec_t_acc(w_d, a_dim, 2 * h, &dq, &mut dsd);
            outer_acc(&mut g_ad_u, a_dim, h, &dq, he);
            matvec_t_acc(u_d, a_dim, h, &dq, &mut dhe_acc[tau]);
        }
        for j in 0..h {
            dhd_prev[j] += dsd[j];
            dcd_prev[j] += dsd[h + j];
        }
        dhd_next = dhd_prev;
        dcd_next = dcd_prev;

        // Encoder LSTM, reverse over k.
        let ec = &wp.enc;
        let mut dh: Vec<f64> = dhe_acc[n].iter().zip(&dhe_next).map(|(a, b)| a + b).collect();
        let mut dcs = dce_next.clone();
        let mut dxbar = dxbar_fuse.to_vec();
        for k in (0..t).rev() {
            let (dhp, dcp, dx) = step_backward(net.enc(), &ec.lstm[k], &dh, &dcs, &mut g_enc_w, &mut g_enc_b);
            for c in 0..INPUT_DIM {
                dxbar[k * INPUT_DIM + c] += dx[c];
            }
            dh = dhp;
            dcs = dcp;
        }

        // Local attention.
        let da: Vec<f64> = (0..t)
            .map(|k| {
                (0..INPUT_DIM)
                    .map(|c| dxbar[k * INPUT_DIM + c] * ec.x[k][c])
                    .sum::<f64>()
            })
            .collect();
        let sa: f64 = ec.a.iter().zip(&da).map(|(a, b)| a * b).sum();
        let mut ds = vec![0.0; 2 * h];
        for k in 0..t {
            let de = ec.a[k] * (da[k] - sa);
            if de == 0.0 {
                continue;
            }
            let tz = &ec.tz[k];
            let mut dz = vec![0.0; a_dim];
            for i in 0..a_dim {
                g_ae_v[i] += de * tz[i];
                dz[i] = de * v_e[i] * (1.0 - tz[i] * tz[i]);
            }
            outer_acc(&mut g_ae_w, a_dim, 2 * h, &dz, &ec.s);
            outer_acc(&mut g_ae_u, a_dim, t + INPUT_DIM, &dz, &ec.yx[k]);
            g_ae_b.iter_mut().zip(&dz).for_each(|(g, v)| *g += v);
            matvec_t_acc(w_e, a_dim, 2 * h, &dz, &mut ds);
        }
        dhe_next = (0..h).map(|j| dh[j] + ds[j]).collect();
        dce_next = (0..h).map(|j| dcs[j] + ds[h + j]).collect();
    }

    let parts: [(Tensor, &Vec<f64>); 18] = [
        (Tensor::EncW, &g_enc_w),
        (Tensor::EncB, &g_enc_b),
        (Tensor::AttEv, &g_ae_v),
        (Tensor::AttEw, &g_ae_w),
        (Tensor::AttEu, &g_ae_u),
        (Tensor::AttEb, &g_ae_b),
        (Tensor::AttDv, &g_ad_v),
        (Tensor::AttDw, &g_ad_w),
        (Tensor::AttDu, &g_ad_u),
        (Tensor::AttDb, &g_ad_b),
        (Tensor::FuseW, &g_fu_w),
        (Tensor::FuseB, &g_fu_b),
        (Tensor::DecW, &g_dec_w),
        (Tensor::DecB, &g_dec_b),
        (Tensor::OutW, &g_out_w),
        (Tensor::OutBw, &g_out_bw),
        (Tensor::OutV, &g_out_v),
        (Tensor::OutBy, &g_out_by),
    ];
    for (tensor, g) in parts {
        let r = l.range(tensor);
        for (dst, src) in grad[r].iter_mut().zip(g.iter()) {
            *dst += src;
        }
    }
}
