//! Soft-margin kernel SVM with kernel `exp(−ν‖x − y‖²)`, trained by
//! sequential minimal optimization with second-order working-set selection.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::numerics::Vector;

pub const KKT_TOL: f64 = 1e-5;
const TAU: f64 = 1e-12;
const CACHE_BYTES: usize = 256 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmSafeSet {
    pub support_vectors: Vec<Vector>,
    /// `αᵢ yᵢ` for each support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub nu: f64,
}

impl SvmSafeSet {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors.iter().zip(&self.coefficients).map(|(s, a)| a * rbf(s, x, self.nu)).sum::<f64>() + self.bias
    }

    pub fn classify(&self, x: &[f64]) -> i8 {
        svm_classify(self, x)
    }
}

pub fn rbf(a: &[f64], b: &[f64], nu: f64) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-nu * d).exp()
}

/// Sign of the decision value; zero counts as `+1`.
pub fn svm_classify(s: &SvmSafeSet, x: &[f64]) -> i8 {
    if s.decision(x) >= 0.0 {
        1
    } else {
        -1
    }
}

struct RowCache<'a> {
    points: &'a [Vector],
    nu: f64,
    rows: HashMap<usize, Vec<f64>>,
    order: std::collections::VecDeque<usize>,
    capacity: usize,
}

impl<'a> RowCache<'a> {
    fn new(points: &'a [Vector], nu: f64) -> Self {
        let per_row = points.len().max(1) * std::mem::size_of::<f64>();
        let capacity = (CACHE_BYTES / per_row).max(2);
        Self { points, nu, rows: HashMap::new(), order: Default::default(), capacity }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        if !self.rows.contains_key(&i) {
            if self.rows.len() >= self.capacity {
                if let Some(old) = self.order.pop_front() {
                    self.rows.remove(&old);
                }
            }
            let xi = &self.points[i];
            let r: Vec<f64> = self.points.iter().map(|xj| rbf(xi, xj, self.nu)).collect();
            self.rows.insert(i, r);
            self.order.push_back(i);
        }
        &self.rows[&i]
    }
}

/// Trains on `(x, ±1)` pairs. Both classes must be present.
pub fn fit_svm(points: &[(Vector, i8)], c: f64, nu: f64) -> Result<SvmSafeSet> {
    if !(c > 0.0) || !(nu > 0.0) {
        return Err(Error::PreconditionViolated("C and ν must be positive".into()));
    }
    if points.is_empty() {
        return Err(Error::SingleClassInput);
    }
    let n_x = points[0].0.len();
    for (x, l) in points {
        dim_check(x.len() == n_x, || "ragged SVM input".into())?;
        if *l != 1 && *l != -1 {
            return Err(Error::InvalidInput(format!("label {l} is not ±1")));
        }
    }
    let pos = points.iter().filter(|(_, l)| *l == 1).count();
    if pos == 0 || pos == points.len() {
        return Err(Error::SingleClassInput);
    }
    let xs: Vec<Vector> = points.iter().map(|(x, _)| x.clone()).collect();
    let y: Vec<f64> = points.iter().map(|(_, l)| f64::from(*l)).collect();
    let n = xs.len();
    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα − eᵀα
    let mut grad = vec![-1.0; n];
    let mut cache = RowCache::new(&xs, nu);
    let up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);
    let max_iter = 100_000usize.max(100 * n);
    let mut iter = 0;
    loop {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            if up(alpha[t], y[t]) && -y[t] * grad[t] > g_max {
                g_max = -y[t] * grad[t];
                i = t;
            }
        }
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            if low(alpha[t], y[t]) {
                g_min = g_min.min(-y[t] * grad[t]);
            }
        }
        if i == usize::MAX || g_max - g_min < KKT_TOL {
            break;
        }
        iter += 1;
        if iter > max_iter {
            return Err(Error::MaxIter(max_iter));
        }
        let ki: Vec<f64> = cache.row(i).to_vec();
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let b = g_max + y[t] * grad[t];
            if b <= 0.0 {
                continue;
            }
            let mut a = 2.0 - 2.0 * ki[t];
            if a <= 0.0 {
                a = TAU;
            }
            let v = -b * b / a;
            if v < best {
                best = v;
                j = t;
            }
        }
        if j == usize::MAX {
            break;
        }
        let kj: Vec<f64> = cache.row(j).to_vec();
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * ki[j];
        if y[i] != y[j] {
            let mut quad = 2.0 + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = 2.0 - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }
    // bias from free multipliers, or the midpoint of the feasible interval
    let mut free_sum = 0.0;
    let mut n_free = 0;
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += yg;
            n_free += 1;
        } else if (alpha[t] >= c && y[t] < 0.0) || (alpha[t] <= 0.0 && y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if n_free > 0 { free_sum / n_free as f64 } else { (ub + lb) / 2.0 };
    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.push(xs[t].clone());
            coefficients.push(alpha[t] * y[t]);
        }
    }
    Ok(SvmSafeSet { support_vectors, coefficients, bias: -rho, c, nu })
}
