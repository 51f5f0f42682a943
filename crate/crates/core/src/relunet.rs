//! Deep ReLU networks with uniform hidden width: evaluation, storage cost,
//! the lower bound on their number of affine regions, and the exact
//! network representation of an explicit MPC law.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::polytope::Polytope;
use crate::pwa::{dc_decompose, eval_pwa, normalize_domain, AffineTransform, ConvexPwa, PwaFunction};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    #[serde(rename = "W")]
    pub w: Matrix,
    pub b: Vector,
}

impl Layer {
    pub fn new(w: Matrix, b: Vector) -> Result<Self> {
        dim_check(w.rows() == b.len(), || format!("layer has {} rows and {} biases", w.rows(), b.len()))?;
        Ok(Self { w, b })
    }

    fn affine(&self, v: &[f64]) -> Vector {
        let mut out = self.w.matvec(v).expect("layer dimensions checked");
        out.iter_mut().zip(&self.b).for_each(|(o, b)| *o += b);
        out
    }
}

/// `L` hidden ReLU layers of width `M` followed by an affine output layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetJson", into = "NetJson")]
pub struct ReluNetwork {
    layers: Vec<Layer>,
    n_x: usize,
    n_u: usize,
    width: usize,
    depth: usize,
}

#[derive(Serialize, Deserialize)]
struct NetJson {
    layers: Vec<Layer>,
    n_x: usize,
    n_u: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "L")]
    l: usize,
}

impl TryFrom<NetJson> for ReluNetwork {
    type Error = Error;
    fn try_from(j: NetJson) -> Result<Self> {
        let net = ReluNetwork::new(j.layers)?;
        dim_check(net.n_x == j.n_x && net.n_u == j.n_u && net.width == j.m && net.depth == j.l, || "network header disagrees with its layers".into())?;
        Ok(net)
    }
}

impl From<ReluNetwork> for NetJson {
    fn from(n: ReluNetwork) -> Self {
        NetJson { n_x: n.n_x, n_u: n.n_u, m: n.width, l: n.depth, layers: n.layers }
    }
}

impl ReluNetwork {
    /// Checks the dimension chain `M×n_x`, `M×M`, …, `n_u×M`.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::InvalidInput("a network needs at least one hidden layer and an output layer".into()));
        }
        let n_x = layers[0].w.cols();
        let width = layers[0].w.rows();
        let depth = layers.len() - 1;
        for (l, layer) in layers.iter().enumerate().take(depth) {
            let cols = if l == 0 { n_x } else { width };
            dim_check(layer.w.rows() == width && layer.w.cols() == cols, || format!("hidden layer {} is {}x{}", l + 1, layer.w.rows(), layer.w.cols()))?;
        }
        let out = &layers[depth];
        dim_check(out.w.cols() == width, || format!("output layer has {} columns, width is {width}", out.w.cols()))?;
        let n_u = out.w.rows();
        Ok(Self { layers, n_x, n_u, width, depth })
    }

    /// Zero-initialized network of the given shape.
    pub fn zeros(n_x: usize, n_u: usize, width: usize, depth: usize) -> Result<Self> {
        let mut layers = Vec::with_capacity(depth + 1);
        for l in 0..depth {
            let cols = if l == 0 { n_x } else { width };
            layers.push(Layer::new(Matrix::zeros(width, cols), vec![0.0; width])?);
        }
        layers.push(Layer::new(Matrix::zeros(n_u, width), vec![0.0; n_u])?);
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vector> {
        dim_check(x.len() == self.n_x, || format!("input has length {}, expected {}", x.len(), self.n_x))?;
        let mut v = x.to_vec();
        for layer in &self.layers[..self.depth] {
            v = layer.affine(&v);
            v.iter_mut().for_each(|a| *a = a.max(0.0));
        }
        Ok(self.layers[self.depth].affine(&v))
    }

    /// Number of stored reals.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.rows() * l.w.cols() + l.b.len()).sum()
    }

    /// All weights and biases, layer by layer, each `W` row-major then `b`.
    pub fn params(&self) -> Vector {
        let mut p = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            p.extend_from_slice(l.w.as_slice());
            p.extend_from_slice(&l.b);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        dim_check(p.len() == self.param_count(), || format!("{} parameters for a network with {}", p.len(), self.param_count()))?;
        let mut at = 0;
        for l in &mut self.layers {
            let (r, c) = (l.w.rows(), l.w.cols());
            l.w = Matrix::from_row_major(r, c, p[at..at + r * c].to_vec())?;
            at += r * c;
            let nb = l.b.len();
            l.b.copy_from_slice(&p[at..at + nb]);
            at += nb;
        }
        Ok(())
    }
}

/// `α·((n_x+1)M + (L−1)(M+1)M + (M+1)n_u)` bytes.
pub fn memory_footprint_net(n: &ReluNetwork, alpha_bit: usize) -> usize {
    alpha_bit * param_count_formula(n.n_x, n.n_u, n.width, n.depth)
}

pub fn param_count_formula(n_x: usize, n_u: usize, m: usize, l: usize) -> usize {
    (n_x + 1) * m + (l - 1) * (m + 1) * m + (m + 1) * n_u
}

fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Lower bound on the maximal number of affine regions of a network with
/// `L` hidden layers of width `M ≥ n_x`:
/// `(∏_{l=1}^{L−1} ⌊M/n_x⌋^{n_x}) · Σ_{j=0}^{n_x} C(L, j)`.
pub fn region_lower_bound(n_x: usize, m: usize, l: usize) -> Result<BigUint> {
    if n_x == 0 || l == 0 {
        return Err(Error::PreconditionViolated("n_x and L must be positive".into()));
    }
    if m < n_x {
        return Err(Error::PreconditionViolated(format!("width {m} is smaller than the input dimension {n_x}")));
    }
    let per_layer = BigUint::from(m / n_x).pow(n_x as u32);
    let product = per_layer.pow((l - 1) as u32);
    let sum: BigUint = (0..=n_x).map(|j| binomial(l, j)).sum();
    Ok(product * sum)
}

/// Network of width `n_x + 1` and depth equal to the number of pieces that
/// computes `maxᵢ (aᵢ·x + bᵢ)` on the unit cube.
///
/// The first `n_x` units of every hidden layer pass `x` through (exact since
/// `x ≥ 0`). The last unit carries the running maximum: with `f̃ᵢ = fᵢ + c`
/// shifted to be at least 1 on the cube, `h₁ = f̃₁` and
/// `hₗ = ReLU(mₗ₋₁ − f̃ₗ)` so that `mₗ = max(mₗ₋₁, f̃ₗ) = f̃ₗ + hₗ` is affine
/// in the outputs of layer `l`.
pub fn build_max_network(pieces: &ConvexPwa) -> Result<ReluNetwork> {
    if pieces.is_empty() {
        return Err(Error::EmptyPieces);
    }
    let n = pieces.dim();
    let min_on_cube = pieces
        .pieces
        .iter()
        .map(|p| p.b + p.a.iter().map(|a| a.min(0.0)).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let c = (-min_on_cube).max(0.0) + 1.0;
    let shifted: Vec<(Vector, f64)> = pieces.pieces.iter().map(|p| (p.a.clone(), p.b + c)).collect();

    let mut layers = Vec::with_capacity(shifted.len() + 1);
    let mut w = Matrix::zeros(n + 1, n);
    let mut b = vec![0.0; n + 1];
    for j in 0..n {
        w[(j, j)] = 1.0;
        w[(n, j)] = shifted[0].0[j];
    }
    b[n] = shifted[0].1;
    layers.push(Layer::new(w, b)?);
    // m_{l−1} = p·x + p0 + h_{l−1}
    let (mut p, mut p0) = (vec![0.0; n], 0.0);
    for (a, off) in &shifted[1..] {
        let mut w = Matrix::identity(n + 1);
        for j in 0..n {
            w[(n, j)] = p[j] - a[j];
        }
        let mut b = vec![0.0; n + 1];
        b[n] = p0 - off;
        layers.push(Layer::new(w, b)?);
        p = a.clone();
        p0 = *off;
    }
    let mut w = Matrix::zeros(1, n + 1);
    for j in 0..n {
        w[(0, j)] = p[j];
    }
    w[(0, n)] = 1.0;
    layers.push(Layer::new(w, vec![p0 - c])?);
    ReluNetwork::new(layers)
}

/// Pair of max-networks per output with the normalizing transforms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactRepresentation {
    pub ax: AffineTransform,
    pub au: AffineTransform,
    /// `(γᵢ, ηᵢ)` networks for each output `i`.
    pub pairs: Vec<(ReluNetwork, ReluNetwork)>,
}

impl ExactRepresentation {
    /// `Au⁻¹(γ(Ax x) − η(Ax x))`
    pub fn eval(&self, x: &[f64]) -> Result<Vector> {
        let xh = self.ax.apply(x)?;
        let uh = self
            .pairs
            .iter()
            .map(|(g, e)| Ok(g.eval(&xh)?[0] - e.eval(&xh)?[0]))
            .collect::<Result<Vec<_>>>()?;
        self.au.apply_inverse(&uh)
    }

    /// Depths `(r_γ,i, r_η,i)` per output.
    pub fn depths(&self) -> Vec<(usize, usize)> {
        self.pairs.iter().map(|(g, e)| (g.depth(), e.depth())).collect()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.pairs.iter().flat_map(|(g, e)| [g.width(), e.width()]).collect()
    }
}

/// Normalizes `f` to the unit cube, splits each output into a difference
/// of convex functions and builds one max-network for each part.
pub fn exact_mpc_network(f: &PwaFunction, state_box: &Polytope, input_ranges: &[(f64, f64)]) -> Result<ExactRepresentation> {
    let norm = normalize_domain(f, state_box, input_ranges)?;
    let mut pairs = Vec::with_capacity(f.n_u());
    for i in 0..f.n_u() {
        let (gamma, eta) = dc_decompose(&norm.f_hat.output(i)?)?;
        pairs.push((build_max_network(&gamma)?, build_max_network(&eta)?));
    }
    Ok(ExactRepresentation { ax: norm.ax, au: norm.au, pairs })
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as f64;
    let (mut inv, mut f) = (0.0, 1.0 / b);
    while index > 0 {
        inv += f * (index % base as u64) as f64;
        index /= base as u64;
        f /= b;
    }
    inv
}

/// First `n` points (indices `1..=n`) of the Halton sequence in `[0,1)^dim`.
pub fn halton_points(n: usize, dim: usize) -> Result<Vec<Vector>> {
    dim_check(dim <= PRIMES.len(), || format!("Halton sequence supports up to {} dimensions", PRIMES.len()))?;
    Ok((1..=n as u64).map(|i| (0..dim).map(|d| radical_inverse(i, PRIMES[d])).collect()).collect())
}

pub fn unit_cube_vertices(dim: usize) -> Vec<Vector> {
    (0..1usize << dim).map(|mask| (0..dim).map(|j| ((mask >> j) & 1) as f64).collect()).collect()
}

/// Halton points plus all vertices of the unit cube.
pub fn unit_cube_grid(n: usize, dim: usize) -> Result<Vec<Vector>> {
    let mut pts = halton_points(n, dim)?;
    pts.extend(unit_cube_vertices(dim));
    Ok(pts)
}

/// Worst-case error of `approx` against `f`, sampled on the Halton grid of
/// the state box. Grid points outside the partition are skipped. Returns
/// the error and the number of points compared.
pub fn max_sampled_error<F>(f: &PwaFunction, approx: F, state_box: &Polytope, n: usize) -> Result<(f64, usize)>
where
    F: Fn(&[f64]) -> Result<Vector>,
{
    let (lo, hi) = state_box.as_box().ok_or_else(|| Error::InvalidInput("state set is not an axis-aligned box".into()))?;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for xi in unit_cube_grid(n, lo.len())? {
        let x: Vector = xi.iter().zip(lo.iter().zip(&hi)).map(|(s, (l, h))| l + s * (h - l)).collect();
        let Ok(u) = eval_pwa(f, &x) else { continue };
        let v = approx(&x)?;
        worst = u.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        count += 1;
    }
    Ok((worst, count))
}
