//! Scalar-loop reimplementations of every loss, written directly from the
//! formulas with explicit indices and no shared code with the library.
#![allow(dead_code)]

pub const NORM_EPS: f64 = 1e-8;
pub const STD_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
pub struct Dims {
    pub b: usize,
    pub p: usize,
    pub t: usize,
    pub d: usize,
}

impl Dims {
    pub fn at(&self, b: usize, p: usize, t: usize, i: usize) -> usize {
        ((b * self.p + p) * self.t + t) * self.d + i
    }

    pub fn len(&self) -> usize {
        self.b * self.p * self.t * self.d
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.b, self.p, self.t, self.d]
    }
}

fn log_sigmoid(x: f64) -> f64 {
    (1.0 / (1.0 + (-x).exp())).ln()
}

fn cosine(dims: Dims, s: &[f64], h: &[f64], b: usize, p: usize, t: usize) -> f64 {
    let (mut dot, mut ns, mut nh) = (0.0, 0.0, 0.0);
    for i in 0..dims.d {
        let (x, y) = (s[dims.at(b, p, t, i)], h[dims.at(b, p, t, i)]);
        dot += x * y;
        ns += x * x;
        nh += y * y;
    }
    dot / ((ns + NORM_EPS * NORM_EPS).sqrt() * (nh + NORM_EPS * NORM_EPS).sqrt())
}

/// Batch mean of `Σ_p Σ_t log σ(cos)`.
pub fn cos_term(dims: Dims, s: &[f64], h: &[f64]) -> f64 {
    let mut total = 0.0;
    for b in 0..dims.b {
        for p in 0..dims.p {
            for t in 0..dims.t {
                total += log_sigmoid(cosine(dims, s, h, b, p, t));
            }
        }
    }
    total / dims.b as f64
}

pub fn kd(dims: Dims, s: &[f64], h: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    for b in 0..dims.b {
        for p in 0..dims.p {
            for t in 0..dims.t {
                let mut l1 = 0.0;
                for i in 0..dims.d {
                    l1 += (h[dims.at(b, p, t, i)] - s[dims.at(b, p, t, i)]).abs();
                }
                total += l1 / dims.d as f64 - gamma * log_sigmoid(cosine(dims, s, h, b, p, t));
            }
        }
    }
    total / dims.b as f64
}

/// Barlow Twins on `[B, D]` row-major views.
pub fn bt(b: usize, d: usize, y1: &[f64], y2: &[f64], lambda: f64) -> f64 {
    let col_norm = |y: &[f64], j: usize| -> f64 {
        let mut s = 0.0;
        for r in 0..b {
            s += y[r * d + j] * y[r * d + j];
        }
        (s + NORM_EPS * NORM_EPS).sqrt()
    };
    let mut loss = 0.0;
    for i in 0..d {
        for j in 0..d {
            let mut num = 0.0;
            for r in 0..b {
                num += y1[r * d + i] * y2[r * d + j];
            }
            let c = num / (col_norm(y1, i) * col_norm(y2, j));
            if i == j {
                loss += (1.0 - c) * (1.0 - c);
            } else {
                loss += lambda * c * c;
            }
        }
    }
    loss
}

fn standardized(dims: Dims, x: &[f64], mean_only: bool) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for p in 0..dims.p {
        for t in 0..dims.t {
            for i in 0..dims.d {
                let mut mean = 0.0;
                for b in 0..dims.b {
                    mean += x[dims.at(b, p, t, i)];
                }
                mean /= dims.b as f64;
                let mut var = 0.0;
                for b in 0..dims.b {
                    let c = x[dims.at(b, p, t, i)] - mean;
                    var += c * c;
                }
                var /= dims.b as f64;
                let scale = if mean_only {
                    1.0
                } else {
                    1.0 / (var + STD_EPS).sqrt()
                };
                for b in 0..dims.b {
                    out[dims.at(b, p, t, i)] = (x[dims.at(b, p, t, i)] - mean) * scale;
                }
            }
        }
    }
    out
}

/// `[P, T, D, D]` row-major.
pub fn correlation(dims: Dims, a: &[f64], c: &[f64], mean_only: bool) -> Vec<f64> {
    let a = standardized(dims, a, mean_only);
    let c = standardized(dims, c, mean_only);
    let d = dims.d;
    let mut out = vec![0.0; dims.p * dims.t * d * d];
    for p in 0..dims.p {
        for t in 0..dims.t {
            for i in 0..d {
                for j in 0..d {
                    let mut s = 0.0;
                    for b in 0..dims.b {
                        s += a[dims.at(b, p, t, i)] * c[dims.at(b, p, t, j)];
                    }
                    out[((p * dims.t + t) * d + i) * d + j] = s / dims.b as f64;
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug)]
pub struct ClParts {
    pub cc_diag: f64,
    pub cc_offdiag: f64,
    pub sc: f64,
    pub cos: f64,
    pub total: f64,
}

pub fn cl(
    dims: Dims,
    s: &[f64],
    h: &[f64],
    gamma: f64,
    lambda_cc: f64,
    lambda_sc: f64,
    mean_only: bool,
) -> ClParts {
    let cc = correlation(dims, s, h, mean_only);
    let sc = correlation(dims, s, s, mean_only);
    let d = dims.d;
    let (mut diag, mut off, mut off_sc) = (0.0, 0.0, 0.0);
    for pt in 0..dims.p * dims.t {
        for i in 0..d {
            for j in 0..d {
                let k = (pt * d + i) * d + j;
                if i == j {
                    diag += (1.0 - cc[k]) * (1.0 - cc[k]);
                } else {
                    off += cc[k] * cc[k];
                    off_sc += sc[k] * sc[k];
                }
            }
        }
    }
    let frames = (dims.p * dims.t) as f64;
    let cc_diag = diag / frames;
    let cc_offdiag = lambda_cc * off / frames;
    let sc = lambda_sc * off_sc / frames;
    let cos = cos_term(dims, s, h);
    ClParts {
        cc_diag,
        cc_offdiag,
        sc,
        cos,
        total: cc_diag + cc_offdiag + sc - gamma * cos,
    }
}
