//! Band-limited scalar fields on the sphere.
//!
//! # Harmonic convention
//!
//! Real spherical harmonics, orthonormal in `L^2(S^2)` for the round area
//! form, without the Condon-Shortley phase. Coefficient `(l, m)` sits at
//! index `l^2 + l + m`. With `z = cos(theta)`, `phi` the longitude and
//! `N_lm = sqrt((2l+1)/(4 pi) (l-|m|)!/(l+|m|)!)`:
//!
//! ```text
//! Y_{l,0}  = N_l0 P_l(z)
//! Y_{l,m}  = sqrt(2) N_lm P_l^m(z) cos(m phi)    m > 0
//! Y_{l,-m} = sqrt(2) N_lm P_l^m(z) sin(m phi)    m > 0
//! ```
//!
//! where `P_l^m(z) = (1 - z^2)^{m/2} d^m P_l / dz^m`. The constant field 1
//! has the single coefficient `c_00 = sqrt(4 pi)`, and
//! `Delta Y_{l,m} = -l(l+1) Y_{l,m}`.
//!
//! Evaluation uses the polynomial extension `Y = q_l^m(z) T_m(x, y)` with
//! `T_m = sqrt(2) Re (x + iy)^m` (or `Im` for negative `m`), so surface
//! gradients are ambient gradients projected onto the tangent plane.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::sphere::{SpherePoint, Vec3};

#[inline]
pub fn harmonic_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

#[inline]
pub fn coefficient_count(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

/// Degree `l` of the coefficient at `index`.
#[inline]
pub fn degree_of(index: usize) -> usize {
    (index as f64).sqrt().floor() as usize
}

/// Values of every `Y_{l,m}` with `l <= l_max` at `p`, in index order.
pub fn harmonics(l_max: usize, p: &SpherePoint) -> Vec<f64> {
    let mut out = vec![0.0; coefficient_count(l_max)];
    eval_into(l_max, p.coords(), &mut out, None);
    out
}

/// Values and ambient gradients of the polynomial extensions. Project the
/// gradients onto the tangent plane to get surface gradients.
pub fn harmonics_with_gradients(l_max: usize, p: &SpherePoint) -> (Vec<f64>, Vec<Vec3>) {
    let n = coefficient_count(l_max);
    let mut vals = vec![0.0; n];
    let mut grads = vec![Vec3::zeros(); n];
    eval_into(l_max, p.coords(), &mut vals, Some(&mut grads));
    (vals, grads)
}

fn eval_into(l_max: usize, c: &Vec3, vals: &mut [f64], mut grads: Option<&mut [Vec3]>) {
    let (x, y, z) = (c.x, c.y, c.z);
    // Re/Im of (x + iy)^m
    let mut cm = vec![0.0; l_max + 1];
    let mut sm = vec![0.0; l_max + 1];
    cm[0] = 1.0;
    for m in 1..=l_max {
        cm[m] = x * cm[m - 1] - y * sm[m - 1];
        sm[m] = x * sm[m - 1] + y * cm[m - 1];
    }
    let mut q = vec![0.0; l_max + 1];
    let mut dq = vec![0.0; l_max + 1];
    let mut qmm = (0.25 / PI).sqrt();
    for m in 0..=l_max {
        if m > 0 {
            qmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
        }
        q[m] = qmm;
        dq[m] = 0.0;
        if m < l_max {
            let f = ((2 * m + 3) as f64).sqrt();
            q[m + 1] = f * z * qmm;
            dq[m + 1] = f * qmm;
        }
        for l in m + 2..=l_max {
            let a = alm(l, m);
            let a1 = alm(l - 1, m);
            q[l] = a * (z * q[l - 1] - q[l - 2] / a1);
            dq[l] = a * (q[l - 1] + z * dq[l - 1] - dq[l - 2] / a1);
        }
        let mf = m as f64;
        for l in m..=l_max {
            if m == 0 {
                let i = harmonic_index(l, 0);
                vals[i] = q[l];
                if let Some(g) = grads.as_deref_mut() {
                    g[i] = Vec3::new(0.0, 0.0, dq[l]);
                }
            } else {
                let s2 = std::f64::consts::SQRT_2;
                let ip = harmonic_index(l, m as i64);
                let im = harmonic_index(l, -(m as i64));
                vals[ip] = s2 * q[l] * cm[m];
                vals[im] = s2 * q[l] * sm[m];
                if let Some(g) = grads.as_deref_mut() {
                    g[ip] = s2
                        * Vec3::new(q[l] * mf * cm[m - 1], -q[l] * mf * sm[m - 1], dq[l] * cm[m]);
                    g[im] =
                        s2 * Vec3::new(q[l] * mf * sm[m - 1], q[l] * mf * cm[m - 1], dq[l] * sm[m]);
                }
            }
        }
    }
}

#[inline]
fn alm(l: usize, m: usize) -> f64 {
    let (l, m) = (l as f64, m as f64);
    ((4.0 * l * l - 1.0) / (l * l - m * m)).sqrt()
}

/// Real harmonic expansion `sum c_lm Y_lm` with band limit `l_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicField {
    l_max: usize,
    coeffs: Vec<f64>,
}

/// The conformal factor `rho` of the metric `e^{2 rho} g_0`.
pub type ConformalFactor = HarmonicField;

impl HarmonicField {
    pub fn new(l_max: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != coefficient_count(l_max) {
            return Err(VortexError::DimensionMismatch {
                expected: coefficient_count(l_max),
                found: coeffs.len(),
            });
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(VortexError::InvalidInput(format!(
                "coefficient {i} is not finite"
            )));
        }
        Ok(Self { l_max, coeffs })
    }

    pub fn zero(l_max: usize) -> Self {
        Self {
            l_max,
            coeffs: vec![0.0; coefficient_count(l_max)],
        }
    }

    /// The constant field `c`.
    pub fn constant(c: f64) -> Self {
        Self {
            l_max: 0,
            coeffs: vec![c * (4.0 * PI).sqrt()],
        }
    }

    /// Builds from `(l, m, c)` triples; repeated entries add up.
    pub fn from_triples(triples: &[(usize, i64, f64)]) -> Result<Self> {
        let l_max = triples.iter().map(|t| t.0).max().unwrap_or(0);
        let mut f = Self::zero(l_max);
        for &(l, m, c) in triples {
            if m.unsigned_abs() as usize > l {
                return Err(VortexError::InvalidInput(format!(
                    "harmonic order {m} exceeds degree {l}"
                )));
            }
            if !c.is_finite() {
                return Err(VortexError::InvalidInput(format!(
                    "coefficient ({l}, {m}) is not finite"
                )));
            }
            f.coeffs[harmonic_index(l, m)] += c;
        }
        Ok(f)
    }

    /// Parses the plain-text format: one `l m c` triple per line, blank lines
    /// and `#` comments ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut triples = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| VortexError::Parse {
                line: k + 1,
                message,
            };
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(err(format!(
                    "expected `l m c`, found {} fields",
                    parts.len()
                )));
            }
            let l: usize = parts[0].parse().map_err(|e| err(format!("degree: {e}")))?;
            let m: i64 = parts[1].parse().map_err(|e| err(format!("order: {e}")))?;
            let c: f64 = parts[2]
                .parse()
                .map_err(|e| err(format!("coefficient: {e}")))?;
            if m.unsigned_abs() as usize > l {
                return Err(err(format!("|m| = {} exceeds l = {l}", m.abs())));
            }
            triples.push((l, m, c));
        }
        Self::from_triples(&triples)
    }

    /// Inverse of [`HarmonicField::parse`]; zero coefficients are skipped.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# l m c\n");
        for l in 0..=self.l_max {
            for m in -(l as i64)..=(l as i64) {
                let c = self.coeffs[harmonic_index(l, m)];
                if c != 0.0 {
                    s.push_str(&format!("{l} {m} {c:e}\n"));
                }
            }
        }
        s
    }

    /// Random field with zero mean whose sup-norm, sampled on a Gauss grid of
    /// degree `4 l_max + 8`, equals `amplitude`. Coefficients are Gaussian
    /// with variance decaying like `1/(1+l)^2`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, l_max: usize, amplitude: f64) -> Self {
        let mut f = Self::zero(l_max);
        if l_max == 0 || amplitude == 0.0 {
            return f;
        }
        for i in 1..f.coeffs.len() {
            let l = degree_of(i) as f64;
            let g: f64 = rng.sample(StandardNormal);
            f.coeffs[i] = g / (1.0 + l);
        }
        let grid = QuadratureGrid::for_degree(4 * l_max + 8);
        let sup = grid
            .nodes()
            .iter()
            .map(|p| f.evaluate(p).abs())
            .fold(0.0, f64::max);
        if sup > 0.0 {
            f.scale(amplitude / sup);
        }
        f
    }

    #[inline]
    pub fn l_max(&self) -> usize {
        self.l_max
    }

    #[inline]
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, l: usize, m: i64) -> f64 {
        if l > self.l_max {
            0.0
        } else {
            self.coeffs[harmonic_index(l, m)]
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Whether only the `l = 0` coefficient is nonzero.
    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().skip(1).all(|&c| c == 0.0)
    }

    /// Mean value over the sphere.
    pub fn mean(&self) -> f64 {
        self.coeffs[0] / (4.0 * PI).sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.coeffs.iter_mut().for_each(|c| *c *= s);
    }

    /// `self + c` for a constant `c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut f = self.clone();
        f.coeffs[0] += c * (4.0 * PI).sqrt();
        f
    }

    pub fn evaluate(&self, p: &SpherePoint) -> f64 {
        let y = harmonics(self.l_max, p);
        dot(&self.coeffs, &y)
    }

    /// Round-metric surface gradient, tangent at `p`.
    pub fn surface_gradient(&self, p: &SpherePoint) -> Vec3 {
        self.value_and_gradient(p).1
    }

    pub fn value_and_gradient(&self, p: &SpherePoint) -> (f64, Vec3) {
        let (y, g) = harmonics_with_gradients(self.l_max, p);
        let v = dot(&self.coeffs, &y);
        let amb = self
            .coeffs
            .iter()
            .zip(&g)
            .fold(Vec3::zeros(), |acc, (c, gi)| acc + gi * *c);
        (v, p.project_tangent(&amb))
    }

    /// Round Laplacian, `c_lm -> -l(l+1) c_lm`.
    pub fn laplacian_round(&self) -> Self {
        let mut f = self.clone();
        for (i, c) in f.coeffs.iter_mut().enumerate() {
            let l = degree_of(i) as f64;
            *c *= -l * (l + 1.0);
        }
        f
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inverse round Laplacian on zero-mean fields: `c_lm -> -c_lm / (l(l+1))`
/// for `l >= 1`, and the mean is dropped.
pub fn inv_laplacian_round(f: &HarmonicField) -> HarmonicField {
    let mut g = f.clone();
    g.coeffs[0] = 0.0;
    for (i, c) in g.coeffs.iter_mut().enumerate().skip(1) {
        let l = degree_of(i) as f64;
        *c /= -l * (l + 1.0);
    }
    g
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, t);
            dp = d;
            let step = p / d;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, t);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_and_derivative(n: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (t * p1 - p0) / (t * t - 1.0))
}

/// Product rule: Gauss-Legendre in `cos(theta)` times uniform longitudes.
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    nodes: Vec<SpherePoint>,
    weights: Vec<f64>,
    degree: usize,
}

impl QuadratureGrid {
    /// `n_theta` Gauss nodes and `n_phi` uniform longitudes; exact for
    /// polynomials of degree `min(2 n_theta - 1, n_phi - 1)`.
    pub fn new(n_theta: usize, n_phi: usize) -> Self {
        let (zs, ws) = gauss_legendre(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (z, w) in zs.iter().zip(&ws) {
            let r = (1.0 - z * z).max(0.0).sqrt();
            for k in 0..n_phi {
                let phi = dphi * k as f64;
                nodes.push(SpherePoint::renormalized(Vec3::new(
                    r * phi.cos(),
                    r * phi.sin(),
                    *z,
                )));
                weights.push(w * dphi);
            }
        }
        Self {
            nodes,
            weights,
            degree: (2 * n_theta).saturating_sub(1).min(n_phi.saturating_sub(1)),
        }
    }

    /// Smallest grid exact to `degree`.
    pub fn for_degree(degree: usize) -> Self {
        Self::new(degree / 2 + 1, degree + 1)
    }

    pub fn nodes(&self) -> &[SpherePoint] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Polynomial degree integrated exactly.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(&SpherePoint) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }

    /// Orthogonal projection onto harmonics of degree `<= l_max`; exact when
    /// `f` is a polynomial with `deg f + l_max <= self.degree()`.
    pub fn project<F: Fn(&SpherePoint) -> f64>(&self, l_max: usize, f: F) -> HarmonicField {
        let values: Vec<f64> = self.nodes.iter().map(f).collect();
        self.project_values(l_max, &values)
    }

    /// [`QuadratureGrid::project`] from precomputed node values.
    pub fn project_values(&self, l_max: usize, values: &[f64]) -> HarmonicField {
        let mut c = vec![0.0; coefficient_count(l_max)];
        for ((p, w), v) in self.nodes.iter().zip(&self.weights).zip(values) {
            let fw = w * v;
            let y = harmonics(l_max, p);
            for (ci, yi) in c.iter_mut().zip(&y) {
                *ci += fw * yi;
            }
        }
        HarmonicField { l_max, coeffs: c }
    }
}

/// Auxiliary band limit used for `e^{2 rho}`.
#[inline]
pub fn aux_band_limit(l_max: usize) -> usize {
    2 * l_max + 8
}

/// `V_g`, the area of the sphere for `e^{2 rho} g_0`.
pub fn volume(rho: &ConformalFactor, grid: &QuadratureGrid) -> f64 {
    grid.integrate(|p| (2.0 * rho.evaluate(p)).exp())
}

/// Projection of `e^{2 rho}` onto degree `aux_band_limit(rho.l_max())`.
pub fn conformal_density(rho: &ConformalFactor) -> HarmonicField {
    let la = aux_band_limit(rho.l_max());
    let grid = QuadratureGrid::for_degree(2 * la);
    grid.project(la, |p| (2.0 * rho.evaluate(p)).exp())
}

/// The smallest eigenvalues of `-Delta_g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    pub requested: usize,
    pub l_solve: usize,
}

/// Galerkin approximation of the spectrum of `-Delta_g` for
/// `g = e^{2 rho} g_0` on harmonics of degree `<= l_solve`.
///
/// Solves `K u = lambda M u` with `K = diag(l(l+1))` and `M` the Gram matrix
/// of multiplication by the projected density `e^{2 rho}`.
pub fn laplace_spectrum(rho: &ConformalFactor, k: usize, l_solve: usize) -> Result<SpectrumReport> {
    let n = coefficient_count(l_solve);
    if k > n {
        return Err(VortexError::InvalidInput(format!(
            "{k} eigenvalues requested but the basis has {n} functions"
        )));
    }
    let density = conformal_density(rho);
    let grid = QuadratureGrid::for_degree(2 * l_solve + density.l_max());
    let mut mass = DMatrix::<f64>::zeros(n, n);
    for (p, w) in grid.nodes().iter().zip(grid.weights()) {
        let wd = w * density.evaluate(p);
        let y = harmonics(l_solve, p);
        for a in 0..n {
            let ya = wd * y[a];
            for b in a..n {
                mass[(a, b)] += ya * y[b];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            mass[(a, b)] = mass[(b, a)];
        }
    }
    let chol = mass
        .clone()
        .cholesky()
        .ok_or_else(|| VortexError::IndefiniteMass("Cholesky factorization failed".into()))?;
    let linv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| VortexError::IndefiniteMass("singular Cholesky factor".into()))?;
    let stiff: Vec<f64> = (0..n)
        .map(|i| {
            let l = degree_of(i) as f64;
            l * (l + 1.0)
        })
        .collect();
    let mut c = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for a in 0..=j {
                s += linv[(i, a)] * stiff[a] * linv[(j, a)];
            }
            c[(i, j)] = s;
            c[(j, i)] = s;
        }
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev.truncate(k);
    Ok(SpectrumReport {
        eigenvalues: ev,
        requested: k,
        l_solve,
    })
}
