//! Commensurability, minimal symplectic action, thin vortices and the
//! `beta_i` / spectrum condition.

use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::hamiltonian::MetricContext;
use crate::spectral::laplace_spectrum;
use crate::sphere::VorticityVector;

/// Largest denominator tried during rational reconstruction.
pub const MAX_DENOMINATOR: i64 = 1_000_000;
pub const DEFAULT_TOL: f64 = 1e-9;
/// A convergent `p/q` of `x` only counts if `q^2 |x - p/q|` is below this;
/// every irrational has infinitely many convergents with `q^2 |x - p/q| < 1`,
/// so without the guard any real would look rational at denominator 10^6.
pub const SIGNIFICANCE: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommensurabilityResult {
    pub commensurable: bool,
    /// Common scale, when commensurable.
    pub beta: Option<f64>,
    /// `values[i] = beta * l[i]` with `gcd(l) = 1`.
    pub l: Vec<u64>,
    pub tolerance: f64,
}

/// First continued-fraction convergent of `x > 0` within `tol * x`.
pub fn rational_approximation(x: f64, tol: f64) -> Option<(i64, i64)> {
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a > 1e15 {
            break;
        }
        let ai = a as i128;
        let (h2, k2) = (ai * h1 + h0, ai * k1 + k0);
        if k2 > MAX_DENOMINATOR as i128 {
            break;
        }
        let err = (x - h2 as f64 / k2 as f64).abs();
        let q = k2 as f64;
        if err <= tol * x && q * q * err <= SIGNIFICANCE {
            return Some((h2 as i64, k2 as i64));
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a;
        if frac == 0.0 {
            break;
        }
        r = 1.0 / frac;
    }
    None
}

fn check_positive(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(VortexError::InvalidInput("empty value list".into()));
    }
    for (index, &value) in values.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(VortexError::InvalidVorticity {
                index,
                value,
                reason: "expected a positive value",
            });
        }
    }
    Ok(())
}

/// Decides whether all ratios `values[i] / values[0]` are rational.
pub fn commensurability(values: &[f64], tol: f64) -> Result<CommensurabilityResult> {
    check_positive(values)?;
    let not = CommensurabilityResult {
        commensurable: false,
        beta: None,
        l: Vec::new(),
        tolerance: tol,
    };
    let mut ratios = Vec::with_capacity(values.len());
    for v in values {
        let x = v / values[0];
        let r = if tol == 0.0 {
            exact_ratio(x)
        } else {
            rational_approximation(x, tol).map(|(p, q)| Ratio::new(p, q))
        };
        match r {
            Some(r) => ratios.push(r),
            None => return Ok(not),
        }
    }
    let (beta_r, l) = integer_coordinates(&ratios);
    let l: Vec<u64> = l.iter().map(|&x| x as u64).collect();
    // least-squares scale
    let num: f64 = values.iter().zip(&l).map(|(v, &li)| v * li as f64).sum();
    let den: f64 = l.iter().map(|&li| (li * li) as f64).sum();
    let beta = if tol == 0.0 {
        values[0] * *beta_r.numer() as f64 / *beta_r.denom() as f64
    } else {
        num / den
    };
    let ok = values
        .iter()
        .zip(&l)
        .all(|(v, &li)| (v - beta * li as f64).abs() <= tol.max(4.0 * f64::EPSILON) * v);
    if !ok {
        return Ok(not);
    }
    Ok(CommensurabilityResult {
        commensurable: true,
        beta: Some(beta),
        l,
        tolerance: tol,
    })
}

/// `x` as a fraction when it is exactly a ratio of small integers.
fn exact_ratio(x: f64) -> Option<Ratio<i64>> {
    rational_approximation(x, f64::EPSILON)
        .filter(|&(p, q)| p as f64 / q as f64 == x)
        .map(|(p, q)| Ratio::new(p, q))
}

/// For positive rationals `r_i`, returns `(beta, l)` with `r_i = beta l_i`,
/// `l_i` coprime integers.
fn integer_coordinates(r: &[Ratio<i64>]) -> (Ratio<i64>, Vec<i64>) {
    let lcm = r.iter().fold(1i64, |acc, x| acc.lcm(x.denom()));
    let ints: Vec<i64> = r.iter().map(|x| x.numer() * (lcm / x.denom())).collect();
    let g = ints.iter().fold(0i64, |acc, &x| acc.gcd(&x));
    (Ratio::new(g, lcm), ints.iter().map(|x| x / g).collect())
}

/// Exact-rational path: the highest common factor of positive rationals.
pub fn kappa_exact(values: &[Ratio<i64>]) -> Result<Ratio<i64>> {
    if values.is_empty() || values.iter().any(|v| *v <= Ratio::from_integer(0)) {
        return Err(VortexError::InvalidInput(
            "expected positive rationals".into(),
        ));
    }
    let (beta, l) = integer_coordinates(values);
    let g = l.iter().fold(0i64, |acc, &x| acc.gcd(&x));
    Ok(beta * g)
}

/// Highest common factor `beta * gcd(l)`, or `None` ("zero") when the
/// values are incommensurable.
pub fn kappa(values: &[f64], tol: f64) -> Result<Option<f64>> {
    let c = commensurability(values, tol)?;
    Ok(c.beta.map(|b| {
        let g = c.l.iter().fold(0u64, |acc, &x| acc.gcd(&x));
        b * g as f64
    }))
}

/// Minimal positive symplectic area of the product of spheres weighted by
/// `gammas`, each of area `area`.
pub fn minimal_action(gammas: &[f64], area: f64, tol: f64) -> Result<f64> {
    if !(area > 0.0) {
        return Err(VortexError::InvalidInput(format!(
            "area must be positive, got {area}"
        )));
    }
    Ok(kappa(gammas, tol)?.map_or(0.0, |k| k * area))
}

/// Whether vortex `k` is thin: `G_k <= kappa(G without k)`.
pub fn is_thin(k: usize, gammas: &VorticityVector, tol: f64) -> Result<bool> {
    let g = gammas.as_slice();
    check_positive(g)?;
    if g.len() < 2 || k >= g.len() {
        return Err(VortexError::InvalidInput(format!(
            "thinness needs an index below n >= 2 (k = {k}, n = {})",
            g.len()
        )));
    }
    let rest: Vec<f64> = g
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, v)| *v)
        .collect();
    Ok(match kappa(&rest, tol)? {
        Some(kp) => g[k] <= kp * (1.0 + tol.max(f64::EPSILON)),
        None => false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaValues {
    pub beta: Vec<f64>,
    pub mean_vorticity: f64,
}

/// `beta_i = -4 n pi mean(G) / (G_i V_g)`.
pub fn beta_values(gammas: &VorticityVector, volume: f64) -> Result<BetaValues> {
    if !(volume > 0.0) {
        return Err(VortexError::InvalidInput(format!(
            "volume must be positive, got {volume}"
        )));
    }
    let n = gammas.len() as f64;
    let mean = gammas.mean();
    Ok(BetaValues {
        beta: gammas
            .as_slice()
            .iter()
            .map(|g| -4.0 * n * std::f64::consts::PI * mean / (g * volume))
            .collect(),
        mean_vorticity: mean,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum P3Status {
    /// No `beta_i` lies in the computed spectrum.
    PassEmpty,
    /// The only common value is 0.
    PassZero,
    /// Some nonzero `beta_i` matches an eigenvalue.
    Fail { matches: Vec<(usize, f64)> },
    /// A positive `beta_i` exceeds the largest computed eigenvalue.
    Inconclusive { covered_max: f64 },
}

impl P3Status {
    pub fn passed(&self) -> bool {
        matches!(self, P3Status::PassEmpty | P3Status::PassZero)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct P3Report {
    pub status: P3Status,
    pub beta: BetaValues,
    pub eigenvalues: Vec<f64>,
    pub match_tol: f64,
}

/// Relative tolerance for matching `beta_i` against eigenvalues.
pub const P3_MATCH_TOL: f64 = 1e-6;

/// Compares `beta_i` with the `k_eigs` smallest eigenvalues of `-Delta_g`.
pub fn check_p3(gammas: &VorticityVector, ctx: &MetricContext, k_eigs: usize) -> Result<P3Report> {
    let k_eigs = k_eigs.max(1);
    let mut l_solve = 0;
    while (l_solve + 1) * (l_solve + 1) < k_eigs {
        l_solve += 1;
    }
    let spec = laplace_spectrum(ctx.rho(), k_eigs, l_solve + 4)?;
    let beta = beta_values(gammas, ctx.volume())?;
    let close = |b: f64, l: f64| (b - l).abs() <= P3_MATCH_TOL * b.abs().max(1.0);
    let mut matches = Vec::new();
    for (i, &b) in beta.beta.iter().enumerate() {
        for &l in &spec.eigenvalues {
            if close(b, l) {
                matches.push((i, l));
                break;
            }
        }
    }
    let top = spec.eigenvalues.last().copied().unwrap_or(0.0);
    let status = if matches
        .iter()
        .any(|&(i, _)| beta.beta[i].abs() > P3_MATCH_TOL)
    {
        P3Status::Fail {
            matches: matches
                .into_iter()
                .filter(|&(i, _)| beta.beta[i].abs() > P3_MATCH_TOL)
                .collect(),
        }
    } else if beta.beta.iter().any(|&b| b > top && !close(b, top)) {
        P3Status::Inconclusive { covered_max: top }
    } else if matches.is_empty() {
        P3Status::PassEmpty
    } else {
        P3Status::PassZero
    };
    Ok(P3Report {
        status,
        beta,
        eigenvalues: spec.eigenvalues,
        match_tol: P3_MATCH_TOL,
    })
}
