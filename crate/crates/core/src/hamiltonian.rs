//! Energy, gradient and Hessian of the n-vortex Hamiltonian.
//!
//! For the metric `g = e^{2 rho} g_0`,
//!
//! ```text
//! H_g(z) = -(1/4pi) sum_{i<j} G_i G_j log |s_i - s_j|^2
//!          + (1/2pi) sum_i G_i^2 rho(s_i)
//!          - (sum_i G_i / V_g) sum_i G_i u(s_i),      u = Delta_0^{-1} e^{2 rho}
//! ```
//!
//! with the additive normalization constant of the Green function dropped.

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::exec::Execution;
use crate::spectral::{
    aux_band_limit, inv_laplacian_round, ConformalFactor, HarmonicField, QuadratureGrid,
};
use crate::sphere::{
    Configuration, SpherePoint, TangentBasis, Vec3, VorticityVector, COLLISION_EPS,
};

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Step of the central differences used for the conformal Hessian block.
pub const HESSIAN_FD_STEP: f64 = 1e-5;

/// Cached spectral data of a conformal metric.
#[derive(Clone, Debug)]
pub struct MetricContext {
    rho: ConformalFactor,
    grid: QuadratureGrid,
    volume: f64,
    aux: HarmonicField,
}

impl MetricContext {
    /// Projects `e^{2 rho}` to degree `2L + 8` on a grid exact to twice
    /// that degree, and inverts the round Laplacian on it.
    pub fn new(rho: ConformalFactor) -> Self {
        let la = aux_band_limit(rho.l_max());
        let grid = QuadratureGrid::for_degree(2 * la);
        let weight: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|p| (2.0 * rho.evaluate(p)).exp())
            .collect();
        let volume = grid.weights().iter().zip(&weight).map(|(w, e)| w * e).sum();
        let aux = if rho.is_constant() {
            HarmonicField::zero(0)
        } else {
            let density = grid.project_values(la, &weight);
            inv_laplacian_round(&density)
        };
        Self {
            rho,
            grid,
            volume,
            aux,
        }
    }

    /// The round metric.
    pub fn round() -> Self {
        Self::new(HarmonicField::zero(0))
    }

    pub fn rho(&self) -> &ConformalFactor {
        &self.rho
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    /// `V_g`.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Coefficients of `Delta_0^{-1} e^{2 rho}` (projected).
    pub fn aux(&self) -> &HarmonicField {
        &self.aux
    }

    pub fn is_round(&self) -> bool {
        self.rho.is_zero()
    }

    /// `e^{2 rho(p)}`.
    pub fn area_density(&self, p: &SpherePoint) -> f64 {
        (2.0 * self.rho.evaluate(p)).exp()
    }

    /// Self-energy of a vortex of strength `gamma` at `p` in a system of
    /// total vorticity `total`.
    fn self_potential(&self, p: &SpherePoint, gamma: f64, total: f64) -> f64 {
        let mut v = gamma * gamma / TWO_PI * self.rho.evaluate(p);
        if !self.aux.is_zero() {
            v -= total / self.volume * gamma * self.aux.evaluate(p);
        }
        v
    }

    fn self_gradient(&self, p: &SpherePoint, gamma: f64, total: f64) -> Vec3 {
        let mut g = self.rho.surface_gradient(p) * (gamma * gamma / TWO_PI);
        if !self.aux.is_zero() {
            g -= self.aux.surface_gradient(p) * (total / self.volume * gamma);
        }
        g
    }
}

/// Energy split into the pair interaction and the one-vortex terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    #[serde(rename = "H")]
    pub h: f64,
    pub interaction: f64,
    #[serde(rename = "self")]
    pub self_energy: f64,
}

fn check(z: &Configuration, gammas: &VorticityVector) -> Result<()> {
    if z.len() != gammas.len() {
        return Err(VortexError::DimensionMismatch {
            expected: gammas.len(),
            found: z.len(),
        });
    }
    if let Some((i, j, d)) = z.closest_pair() {
        if !(d >= COLLISION_EPS) {
            return Err(VortexError::Collision { i, j, distance: d });
        }
    }
    Ok(())
}

fn interaction(z: &Configuration, g: &[f64]) -> f64 {
    let p = z.points();
    let mut h = 0.0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            let r2 = (p[i].coords() - p[j].coords()).norm_squared();
            h -= g[i] * g[j] * r2.ln();
        }
    }
    h / FOUR_PI
}

/// Round-sphere energy.
pub fn energy_round(z: &Configuration, gammas: &VorticityVector) -> Result<f64> {
    check(z, gammas)?;
    Ok(interaction(z, gammas.as_slice()))
}

pub fn energy(
    z: &Configuration,
    gammas: &VorticityVector,
    ctx: &MetricContext,
) -> Result<EnergyReport> {
    check(z, gammas)?;
    let g = gammas.as_slice();
    let inter = interaction(z, g);
    let total = gammas.total();
    let self_energy = if ctx.rho.is_zero() {
        0.0
    } else {
        z.points()
            .iter()
            .zip(g)
            .map(|(p, &gi)| ctx.self_potential(p, gi, total))
            .sum()
    };
    Ok(EnergyReport {
        h: inter + self_energy,
        interaction: inter,
        self_energy,
    })
}

/// Energies of many configurations.
pub fn energies(
    zs: &[Configuration],
    gammas: &VorticityVector,
    ctx: &MetricContext,
    exec: Execution,
) -> Vec<Result<f64>> {
    exec.map(zs, |z| energy(z, gammas, ctx).map(|e| e.h))
}

/// Ambient gradient of the interaction in each `s_i` (not projected).
fn interaction_gradient_ambient(z: &Configuration, g: &[f64]) -> Vec<Vec3> {
    let p = z.points();
    let mut out = vec![Vec3::zeros(); p.len()];
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            let d = p[i].coords() - p[j].coords();
            let f = d * (-g[i] * g[j] * 2.0 / (FOUR_PI * d.norm_squared()));
            out[i] += f;
            out[j] -= f;
        }
    }
    out
}

/// Tangent gradient `grad_i H` at every vortex; pairing with a tangent
/// displacement gives the directional derivative.
pub fn grad(z: &Configuration, gammas: &VorticityVector, ctx: &MetricContext) -> Result<Vec<Vec3>> {
    check(z, gammas)?;
    let g = gammas.as_slice();
    let total = gammas.total();
    let amb = interaction_gradient_ambient(z, g);
    Ok(z.points()
        .iter()
        .zip(amb)
        .zip(g)
        .map(|((p, a), &gi)| {
            let mut v = p.project_tangent(&a);
            if !ctx.rho.is_zero() {
                v += ctx.self_gradient(p, gi, total);
            }
            v
        })
        .collect())
}

/// Gradient in the `2n` frame coordinates `(e1_0, e2_0, e1_1, ...)`.
pub fn grad_in_frames(
    z: &Configuration,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    frames: &[TangentBasis],
) -> Result<Vec<f64>> {
    Ok(grad(z, gammas, ctx)?
        .iter()
        .zip(frames)
        .flat_map(|(v, f)| f.coordinates(v))
        .collect())
}

/// Euclidean norm of the full gradient.
pub fn grad_norm(z: &Configuration, gammas: &VorticityVector, ctx: &MetricContext) -> Result<f64> {
    Ok(grad(z, gammas, ctx)?
        .iter()
        .map(|v| v.norm_squared())
        .sum::<f64>()
        .sqrt())
}

/// Hessian in the frames of [`tangent_basis`].
pub fn hessian(
    z: &Configuration,
    gammas: &VorticityVector,
    ctx: &MetricContext,
) -> Result<DMatrix<f64>> {
    hessian_in_frames(z, gammas, ctx, &z.frames())
}

/// Second derivative of `H(exp_{s_i}(a_i e1_i + b_i e2_i))` at zero, i.e.
/// the Riemannian Hessian of the round metric, in the given frames. The pair
/// interaction is differentiated analytically and the one-vortex terms by
/// central differences of their gradient with step [`HESSIAN_FD_STEP`].
pub fn hessian_in_frames(
    z: &Configuration,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    frames: &[TangentBasis],
) -> Result<DMatrix<f64>> {
    check(z, gammas)?;
    let n = z.len();
    let g = gammas.as_slice();
    let p = z.points();
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    let grad_amb = interaction_gradient_ambient(z, g);

    let e = |i: usize| [frames[i].e1, frames[i].e2];
    for i in 0..n {
        for j in i + 1..n {
            let d = p[i].coords() - p[j].coords();
            let r2 = d.norm_squared();
            let k = -g[i] * g[j] / FOUR_PI;
            let a: Matrix3<f64> =
                (Matrix3::identity() * (2.0 / r2) - d * d.transpose() * (4.0 / (r2 * r2))) * k;
            let (ei, ej) = (e(i), e(j));
            for (al, ua) in ei.iter().enumerate() {
                for (be, ub) in ei.iter().enumerate() {
                    h[(2 * i + al, 2 * i + be)] += ua.dot(&(a * ub));
                }
            }
            for (al, ua) in ej.iter().enumerate() {
                for (be, ub) in ej.iter().enumerate() {
                    h[(2 * j + al, 2 * j + be)] += ua.dot(&(a * ub));
                }
            }
            for (al, ua) in ei.iter().enumerate() {
                for (be, ub) in ej.iter().enumerate() {
                    let v = -ua.dot(&(a * ub));
                    h[(2 * i + al, 2 * j + be)] += v;
                    h[(2 * j + be, 2 * i + al)] += v;
                }
            }
        }
        let radial = p[i].coords().dot(&grad_amb[i]);
        h[(2 * i, 2 * i)] -= radial;
        h[(2 * i + 1, 2 * i + 1)] -= radial;
    }

    if !ctx.rho.is_zero() {
        let total = gammas.total();
        let t = HESSIAN_FD_STEP;
        for i in 0..n {
            let s = &p[i];
            let ei = e(i);
            let mut block = [[0.0; 2]; 2];
            for be in 0..2 {
                let plus = ei[be] * t;
                let minus = -ei[be] * t;
                let gp = ctx.self_gradient(&s.exp(&plus), g[i], total);
                let gm = ctx.self_gradient(&s.exp(&minus), g[i], total);
                for (al, ua) in ei.iter().enumerate() {
                    let jp = dexp(s, &plus, ua);
                    let jm = dexp(s, &minus, ua);
                    block[al][be] = (gp.dot(&jp) - gm.dot(&jm)) / (2.0 * t);
                }
            }
            let off = 0.5 * (block[0][1] + block[1][0]);
            h[(2 * i, 2 * i)] += block[0][0];
            h[(2 * i + 1, 2 * i + 1)] += block[1][1];
            h[(2 * i, 2 * i + 1)] += off;
            h[(2 * i + 1, 2 * i)] += off;
        }
    }
    Ok(h)
}

/// Derivative of `exp_s` at tangent vector `v` in direction `e`.
fn dexp(s: &SpherePoint, v: &Vec3, e: &Vec3) -> Vec3 {
    let r = v.norm();
    if r < 1e-300 {
        return *e;
    }
    let u = v / r;
    let along = e.dot(&u);
    let perp = e - u * along;
    (-s.coords() * r.sin() + u * r.cos()) * along + perp * (r.sin() / r)
}

/// Directional derivative `dH(w)` for tangent vectors `w_i`.
pub fn differential(
    z: &Configuration,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    w: &[Vec3],
) -> Result<f64> {
    Ok(grad(z, gammas, ctx)?
        .iter()
        .zip(w)
        .map(|(a, b)| a.dot(b))
        .sum())
}
