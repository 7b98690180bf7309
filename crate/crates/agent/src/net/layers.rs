//! Forward and backward passes for the encoder layers on `[C][H][W]`
//! feature maps stored as flat `f64` slices.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }
}

/// Output shape of a 3×3, padding-1 convolution.
pub fn conv_out(input: Shape, c_out: usize, stride: usize) -> Shape {
    Shape {
        c: c_out,
        h: (input.h - 1) / stride + 1,
        w: (input.w - 1) / stride + 1,
    }
}

/// Range of output indices `o` for which `o*stride + k - 1` stays inside
/// `[0, n)`.
#[inline]
fn valid_range(n_in: usize, n_out: usize, stride: usize, k: usize) -> (usize, usize) {
    let lo = if k >= 1 { 0 } else { 1usize.div_ceil(stride) };
    // o*stride + k - 1 <= n_in - 1  =>  o <= (n_in - k) / stride
    let hi = if n_in >= k { ((n_in - k) / stride + 1).min(n_out) } else { 0 };
    (lo, hi.max(lo))
}

/// `out = conv3x3(input; weight, bias)`; weight layout `[co][ci][ky][kx]`.
pub fn conv3x3_forward(input: &[f64], ins: Shape, weight: &[f64], bias: &[f64], stride: usize, out: &mut [f64], outs: Shape) {
    let plane = outs.h * outs.w;
    for co in 0..outs.c {
        out[co * plane..(co + 1) * plane].fill(bias[co]);
    }
    for co in 0..outs.c {
        let o_plane = &mut out[co * plane..(co + 1) * plane];
        for ci in 0..ins.c {
            let i_plane = &input[ci * ins.h * ins.w..(ci + 1) * ins.h * ins.w];
            for ky in 0..3 {
                let (oy0, oy1) = valid_range(ins.h, outs.h, stride, ky);
                for kx in 0..3 {
                    let wv = weight[((co * ins.c + ci) * 3 + ky) * 3 + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (ox0, ox1) = valid_range(ins.w, outs.w, stride, kx);
                    for oy in oy0..oy1 {
                        let iy = oy * stride + ky - 1;
                        let orow = &mut o_plane[oy * outs.w..(oy + 1) * outs.w];
                        let irow = &i_plane[iy * ins.w..(iy + 1) * ins.w];
                        if stride == 1 {
                            let src = &irow[ox0 + kx - 1..ox1 + kx - 1];
                            for (o, i) in orow[ox0..ox1].iter_mut().zip(src) {
                                *o += wv * i;
                            }
                        } else {
                            for ox in ox0..ox1 {
                                orow[ox] += wv * irow[ox * stride + kx - 1];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates weight/bias gradients and, when `d_input` is given, the
/// input gradient.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward(
    input: &[f64],
    ins: Shape,
    weight: &[f64],
    stride: usize,
    d_out: &[f64],
    outs: Shape,
    d_weight: &mut [f64],
    d_bias: &mut [f64],
    mut d_input: Option<&mut [f64]>,
) {
    let plane = outs.h * outs.w;
    let iplane = ins.h * ins.w;
    for co in 0..outs.c {
        let g_plane = &d_out[co * plane..(co + 1) * plane];
        d_bias[co] += g_plane.iter().sum::<f64>();
        for ci in 0..ins.c {
            let i_plane = &input[ci * iplane..(ci + 1) * iplane];
            for ky in 0..3 {
                let (oy0, oy1) = valid_range(ins.h, outs.h, stride, ky);
                for kx in 0..3 {
                    let widx = ((co * ins.c + ci) * 3 + ky) * 3 + kx;
                    let wv = weight[widx];
                    let (ox0, ox1) = valid_range(ins.w, outs.w, stride, kx);
                    let mut acc = 0.0;
                    for oy in oy0..oy1 {
                        let iy = oy * stride + ky - 1;
                        let grow = &g_plane[oy * outs.w..(oy + 1) * outs.w];
                        let irow = &i_plane[iy * ins.w..(iy + 1) * ins.w];
                        if stride == 1 {
                            let src = &irow[ox0 + kx - 1..ox1 + kx - 1];
                            acc += grow[ox0..ox1].iter().zip(src).map(|(g, i)| g * i).sum::<f64>();
                        } else {
                            for ox in ox0..ox1 {
                                acc += grow[ox] * irow[ox * stride + kx - 1];
                            }
                        }
                    }
                    d_weight[widx] += acc;
                    if let Some(d_in) = d_input.as_deref_mut() {
                        let d_plane = &mut d_in[ci * iplane..(ci + 1) * iplane];
                        for oy in oy0..oy1 {
                            let iy = oy * stride + ky - 1;
                            let grow = &g_plane[oy * outs.w..(oy + 1) * outs.w];
                            let drow = &mut d_plane[iy * ins.w..(iy + 1) * ins.w];
                            for ox in ox0..ox1 {
                                drow[ox * stride + kx - 1] += wv * grow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub const GN_EPS: f64 = 1e-5;

/// Per-group statistics kept for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct GroupNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub fn group_norm_forward(
    x: &[f64],
    s: Shape,
    groups: usize,
    gamma: &[f64],
    beta: &[f64],
    out: &mut [f64],
) -> GroupNormCache {
    let per = s.c / groups;
    let plane = s.h * s.w;
    let n = (per * plane) as f64;
    let mut normalized = vec![0.0; x.len()];
    let mut inv_std = Vec::with_capacity(groups);
    for g in 0..groups {
        let range = g * per * plane..(g + 1) * per * plane;
        let xs = &x[range.clone()];
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + GN_EPS).sqrt();
        inv_std.push(inv);
        for (xh, v) in normalized[range].iter_mut().zip(xs) {
            *xh = (v - mean) * inv;
        }
    }
    for c in 0..s.c {
        let r = c * plane..(c + 1) * plane;
        for (o, xh) in out[r.clone()].iter_mut().zip(&normalized[r]) {
            *o = gamma[c] * xh + beta[c];
        }
    }
    GroupNormCache { normalized, inv_std }
}

#[allow(clippy::too_many_arguments)]
pub fn group_norm_backward(
    cache: &GroupNormCache,
    s: Shape,
    groups: usize,
    gamma: &[f64],
    d_out: &[f64],
    d_gamma: &mut [f64],
    d_beta: &mut [f64],
    d_x: &mut [f64],
) {
    let per = s.c / groups;
    let plane = s.h * s.w;
    let n = (per * plane) as f64;
    let mut dxh = vec![0.0; d_out.len()];
    for c in 0..s.c {
        let r = c * plane..(c + 1) * plane;
        let (mut dg, mut db) = (0.0, 0.0);
        for ((d, xh), o) in d_out[r.clone()].iter().zip(&cache.normalized[r.clone()]).zip(&mut dxh[r]) {
            dg += d * xh;
            db += d;
            *o = d * gamma[c];
        }
        d_gamma[c] += dg;
        d_beta[c] += db;
    }
    for g in 0..groups {
        let r = g * per * plane..(g + 1) * per * plane;
        let xh = &cache.normalized[r.clone()];
        let dx = &dxh[r.clone()];
        let mean_d = dx.iter().sum::<f64>() / n;
        let mean_dx = dx.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
        let inv = cache.inv_std[g];
        for ((o, d), h) in d_x[r].iter_mut().zip(dx).zip(xh) {
            *o = inv * (d - mean_d - h * mean_dx);
        }
    }
}

pub fn leaky_relu_inplace(x: &mut [f64], slope: f64) {
    for v in x {
        if *v < 0.0 {
            *v *= slope;
        }
    }
}

/// `d` is multiplied in place by the derivative at the pre-activation `pre`.
pub fn leaky_relu_backward(pre: &[f64], d: &mut [f64], slope: f64) {
    for (g, &p) in d.iter_mut().zip(pre) {
        if p < 0.0 {
            *g *= slope;
        }
    }
}

pub fn pool_out(s: Shape, k: usize) -> Shape {
    Shape {
        c: s.c,
        h: s.h / k,
        w: s.w / k,
    }
}

/// Non-overlapping max pooling; returns the argmax input index per output.
pub fn max_pool_forward(x: &[f64], s: Shape, k: usize, out: &mut [f64]) -> Vec<u32> {
    let os = pool_out(s, k);
    let mut arg = vec![0u32; os.len()];
    for c in 0..s.c {
        for oy in 0..os.h {
            for ox in 0..os.w {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for dy in 0..k {
                    for dx in 0..k {
                        let i = (c * s.h + oy * k + dy) * s.w + ox * k + dx;
                        if x[i] > best {
                            best = x[i];
                            best_i = i;
                        }
                    }
                }
                let o = (c * os.h + oy) * os.w + ox;
                out[o] = best;
                arg[o] = best_i as u32;
            }
        }
    }
    arg
}

pub fn max_pool_backward(arg: &[u32], d_out: &[f64], d_x: &mut [f64]) {
    d_x.fill(0.0);
    for (&i, &g) in arg.iter().zip(d_out) {
        d_x[i as usize] += g;
    }
}

/// `out = W·x + b` with `W` row-major `[out][in]`.
pub fn linear_forward(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (o, (row, bias)) in out.iter_mut().zip(w.chunks_exact(n_in).zip(b)) {
        *o = bias + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

/// Accumulates `dW += d_out ⊗ x`, `db += d_out`, `dx += Wᵀ d_out`.
pub fn linear_backward(w: &[f64], x: &[f64], d_out: &[f64], d_w: &mut [f64], d_b: &mut [f64], d_x: &mut [f64]) {
    let n_in = x.len();
    for (i, &g) in d_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        d_b[i] += g;
        let row = &w[i * n_in..(i + 1) * n_in];
        let drow = &mut d_w[i * n_in..(i + 1) * n_in];
        for ((dw, &xv), (dx, &wv)) in drow.iter_mut().zip(x).zip(d_x.iter_mut().zip(row)) {
            *dw += g * xv;
            *dx += g * wv;
        }
    }
}
