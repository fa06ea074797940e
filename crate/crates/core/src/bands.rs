//! Energy band `[c1, c2]` of a pinned vortex.
//!
//! For a vortex `k` pinned at `eta`, the inner value is the minimum of the
//! energy over the remaining vortices. `c1` and `c2` are the minimum and
//! maximum of the inner value over `eta`. Both are estimated on a Fibonacci
//! grid and then polished: `c1` by minimizing over all vortices, `c2` by a
//! compass search around the best node. Reported values are grid-certified
//! bounds: `c1` is an upper bound of the true minimum and `c2` a lower bound
//! of the true maximum, up to inner-solver accuracy.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::equilibria::same_up_to_relabeling;
use crate::error::{Result, VortexError};
use crate::exec::Execution;
use crate::hamiltonian::{energy, grad_in_frames, hessian_in_frames, MetricContext};
use crate::sphere::{chord_distance, Configuration, SpherePoint, Vec3, VorticityVector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandSettings {
    pub grid_size: usize,
    pub starts: usize,
    pub seed: u64,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub polish: bool,
    pub exec: Execution,
}

impl Default for BandSettings {
    fn default() -> Self {
        Self {
            grid_size: 2000,
            starts: 16,
            seed: 0,
            grad_tol: 1e-10,
            max_iters: 200,
            polish: true,
            exec: Execution::Parallel,
        }
    }
}

/// Result of one pinned minimization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerMin {
    pub value: f64,
    pub minimizer: Configuration,
    /// Spread of final energies among starts that landed in the best basin.
    pub dispersion: f64,
    /// Spread of final energies over all starts.
    pub spread: f64,
    pub converged: usize,
    /// Some start ended with a pair closer than 1e-6.
    pub near_collision: bool,
}

/// `n` quasi-uniform points (golden-angle spiral).
pub fn fibonacci_lattice(n: usize) -> Vec<SpherePoint> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            SpherePoint::renormalized(Vec3::new(r * phi.cos(), r * phi.sin(), z))
        })
        .collect()
}

fn require_positive(gammas: &VorticityVector) -> Result<()> {
    if let Some(index) = gammas.as_slice().iter().position(|&g| g <= 0.0) {
        return Err(VortexError::InvalidVorticity {
            index,
            value: gammas[index],
            reason: "energy bands need positive vorticities",
        });
    }
    Ok(())
}

struct LocalMin {
    z: Configuration,
    value: f64,
    converged: bool,
}

/// Damped Newton descent on the vortices listed in `free`.
fn minimize(
    z0: &Configuration,
    free: &[usize],
    gammas: &VorticityVector,
    ctx: &MetricContext,
    settings: &BandSettings,
) -> Result<LocalMin> {
    let mut z = z0.clone();
    let mut f = energy(&z, gammas, ctx)?.h;
    let m = 2 * free.len();
    let idx: Vec<usize> = free.iter().flat_map(|&i| [2 * i, 2 * i + 1]).collect();
    for _ in 0..settings.max_iters {
        let frames = z.frames();
        let gfull = grad_in_frames(&z, gammas, ctx, &frames)?;
        let g = DVector::from_iterator(m, idx.iter().map(|&i| gfull[i]));
        if g.norm() < settings.grad_tol {
            return Ok(LocalMin {
                z,
                value: f,
                converged: true,
            });
        }
        let hfull = hessian_in_frames(&z, gammas, ctx, &frames)?;
        let h = DMatrix::from_fn(m, m, |a, b| hfull[(idx[a], idx[b])]);
        let eig = SymmetricEigen::new(h.clone());
        let lmin = eig.eigenvalues.min();
        let scale = eig.eigenvalues.amax().max(1e-12);
        let shift = if lmin > 1e-8 * scale {
            0.0
        } else {
            -lmin + 1e-3 * scale
        };
        let shifted = &h + DMatrix::identity(m, m) * shift;
        let mut step = shifted
            .cholesky()
            .map(|c| c.solve(&(-&g)))
            .unwrap_or_else(|| -&g);
        let longest = step
            .as_slice()
            .chunks(2)
            .map(|c| c[0].hypot(c[1]))
            .fold(0.0, f64::max);
        if longest > 0.5 {
            step *= 0.5 / longest;
        }
        let slope = g.dot(&step);
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..50 {
            let mut delta = vec![0.0; 2 * z.len()];
            for (a, &i) in idx.iter().enumerate() {
                delta[i] = alpha * step[a];
            }
            if let Ok(zt) = z.displaced(&frames, &delta) {
                if let Ok(e) = energy(&zt, gammas, ctx) {
                    if e.h <= f + 1e-4 * alpha * slope {
                        z = zt;
                        f = e.h;
                        moved = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        if !moved {
            let gn = g.norm();
            return Ok(LocalMin {
                z,
                value: f,
                converged: gn < settings.grad_tol * 1e3,
            });
        }
    }
    Ok(LocalMin {
        z,
        value: f,
        converged: false,
    })
}

fn inner_starts(eta: &SpherePoint, k: usize, n: usize, rng: &mut ChaCha8Rng) -> Configuration {
    loop {
        let mut pts: Vec<SpherePoint> = Vec::with_capacity(n);
        for i in 0..n {
            pts.push(if i == k {
                *eta
            } else {
                SpherePoint::random(rng)
            });
        }
        let z = Configuration::new(pts);
        if let Ok(z) = z {
            if z.closest_pair().map_or(true, |p| p.2 > 0.2) {
                return z;
            }
        }
    }
}

fn seed_for(base: u64, node: u64, start: u64) -> u64 {
    base ^ node.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ start.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Multistart minimization of the energy with vortex `k` pinned at `eta`.
/// The first start places every free vortex at the antipode of `eta` spread
/// slightly apart; the others are random.
pub fn inner_min(
    eta: &SpherePoint,
    k: usize,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    settings: &BandSettings,
) -> Result<InnerMin> {
    inner_min_seeded(eta, k, gammas, ctx, settings, 0, None)
}

fn inner_min_seeded(
    eta: &SpherePoint,
    k: usize,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    settings: &BandSettings,
    node: u64,
    warm: Option<&Configuration>,
) -> Result<InnerMin> {
    require_positive(gammas)?;
    let n = gammas.len();
    if k >= n {
        return Err(VortexError::InvalidInput(format!(
            "pinned index {k} out of range for {n} vortices"
        )));
    }
    if n == 1 {
        let z = Configuration::new(vec![*eta])?;
        let value = energy(&z, gammas, ctx)?.h;
        return Ok(InnerMin {
            value,
            minimizer: z,
            dispersion: 0.0,
            spread: 0.0,
            converged: 1,
            near_collision: false,
        });
    }
    let free: Vec<usize> = (0..n).filter(|&i| i != k).collect();
    let mut results = Vec::with_capacity(settings.starts + 1);
    if let Some(w) = warm {
        let mut pts = w.points().to_vec();
        pts[k] = *eta;
        if let Ok(z) = Configuration::new(pts) {
            results.push(minimize(&z, &free, gammas, ctx, settings)?);
        }
    }
    for s in 0..settings.starts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_for(settings.seed, node, s as u64));
        let z0 = inner_starts(eta, k, n, &mut rng);
        results.push(minimize(&z0, &free, gammas, ctx, settings)?);
    }
    let best = results
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one start");
    let basin: Vec<f64> = results
        .iter()
        .filter(|r| same_up_to_relabeling(&r.z, &best.z, gammas, 1e-4))
        .map(|r| r.value)
        .collect();
    let spread_of = |v: &[f64]| {
        v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
    };
    let all: Vec<f64> = results.iter().map(|r| r.value).collect();
    Ok(InnerMin {
        value: best.value,
        minimizer: best.z.clone(),
        dispersion: spread_of(&basin),
        spread: spread_of(&all),
        converged: results.iter().filter(|r| r.converged).count(),
        near_collision: results
            .iter()
            .any(|r| r.z.closest_pair().is_some_and(|p| p.2 < 1e-6)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandNode {
    pub eta: SpherePoint,
    pub inner_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub k: usize,
    pub c1: f64,
    pub c2: f64,
    pub argmin_point: SpherePoint,
    pub argmax_point: SpherePoint,
    pub grid_size: usize,
    pub starts: usize,
    /// Largest per-node basin dispersion.
    pub dispersion: f64,
    pub near_collision: bool,
    pub nodes: Vec<BandNode>,
}

/// Evaluates the inner minimum over a Fibonacci grid and polishes both ends.
pub fn c1_c2(
    k: usize,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    settings: &BandSettings,
) -> Result<BandReport> {
    require_positive(gammas)?;
    let grid = fibonacci_lattice(settings.grid_size.max(1));
    let inner: Vec<InnerMin> = settings
        .exec
        .map_range(grid.len(), |i| {
            inner_min_seeded(&grid[i], k, gammas, ctx, settings, i as u64, None)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let (imin, imax) = {
        let mut lo = 0;
        let mut hi = 0;
        for i in 0..inner.len() {
            if inner[i].value < inner[lo].value {
                lo = i;
            }
            if inner[i].value > inner[hi].value {
                hi = i;
            }
        }
        (lo, hi)
    };
    let mut c1 = inner[imin].value;
    let mut argmin = grid[imin];
    let mut c2 = inner[imax].value;
    let mut argmax = grid[imax];
    let mut dispersion = inner.iter().map(|r| r.dispersion).fold(0.0, f64::max);
    let near_collision = inner.iter().any(|r| r.near_collision);

    if settings.polish && gammas.len() > 1 {
        let all: Vec<usize> = (0..gammas.len()).collect();
        let global = minimize(&inner[imin].minimizer, &all, gammas, ctx, settings)?;
        if global.value < c1 {
            c1 = global.value;
            argmin = *global.z.point(k);
        }
        let (v, p, d) = compass_max(
            &argmax,
            c2,
            &inner[imax].minimizer,
            k,
            gammas,
            ctx,
            settings,
            grid.len(),
        )?;
        c2 = v;
        argmax = p;
        dispersion = dispersion.max(d);
    }
    Ok(BandReport {
        k,
        c1,
        c2: c2.max(c1),
        argmin_point: argmin,
        argmax_point: argmax,
        grid_size: grid.len(),
        starts: settings.starts,
        dispersion,
        near_collision,
        nodes: grid
            .iter()
            .zip(&inner)
            .map(|(eta, r)| BandNode {
                eta: *eta,
                inner_min: r.value,
            })
            .collect(),
    })
}

/// Compass search maximizing the inner value in the tangent plane of the
/// current point; every trial is a full multistart solve.
#[allow(clippy::too_many_arguments)]
fn compass_max(
    start: &SpherePoint,
    value: f64,
    warm: &Configuration,
    k: usize,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    settings: &BandSettings,
    grid_size: usize,
) -> Result<(f64, SpherePoint, f64)> {
    let mut best = (value, *start, warm.clone());
    let mut dispersion: f64 = 0.0;
    let mut step = (4.0 * std::f64::consts::PI / grid_size as f64).sqrt();
    let mut counter = 0u64;
    while step > 1e-6 {
        let frame = crate::sphere::tangent_basis(&best.1);
        let dirs = [frame.e1, -frame.e1, frame.e2, -frame.e2];
        let trials: Vec<Result<(SpherePoint, InnerMin)>> = settings.exec.map(&dirs, |d| {
            let p = best.1.exp(&(d * step));
            inner_min_seeded(
                &p,
                k,
                gammas,
                ctx,
                settings,
                u64::MAX - counter,
                Some(&best.2),
            )
            .map(|r| (p, r))
        });
        counter += 1;
        let mut improved = false;
        for t in trials {
            let (p, r) = t?;
            dispersion = dispersion.max(r.dispersion);
            if r.value > best.0 {
                best = (r.value, p, r.minimizer);
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((best.0, best.1, dispersion))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationResult {
    pub point: Option<SpherePoint>,
    /// Re-evaluated inner minimum at `point`.
    pub inner_value: Option<f64>,
    /// `c < c1`: the level set is empty and any point qualifies.
    pub vacuous: bool,
}

/// A point `z_c` whose slice misses the level set `{H = c}`, i.e. whose
/// inner minimum exceeds `c`. Prefers the band maximizer, then the first
/// qualifying grid node.
pub fn separation_check(
    c: f64,
    k: usize,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    report: &BandReport,
    settings: &BandSettings,
) -> Result<SeparationResult> {
    if c < report.c1 {
        let p = report.nodes.first().map(|n| n.eta);
        let v = match p {
            Some(p) => Some(inner_min(&p, k, gammas, ctx, settings)?.value),
            None => None,
        };
        return Ok(SeparationResult {
            point: p,
            inner_value: v,
            vacuous: true,
        });
    }
    let mut candidates = vec![report.argmax_point];
    candidates.extend(
        report
            .nodes
            .iter()
            .filter(|n| n.inner_min > c)
            .map(|n| n.eta),
    );
    for p in candidates {
        let v = inner_min(&p, k, gammas, ctx, settings)?.value;
        if v > c {
            return Ok(SeparationResult {
                point: Some(p),
                inner_value: Some(v),
                vacuous: false,
            });
        }
    }
    Ok(SeparationResult {
        point: None,
        inner_value: None,
        vacuous: false,
    })
}

/// Chord distance from the pinned vortex to its nearest partner in the
/// inner minimizer.
pub fn nearest_partner(m: &InnerMin, k: usize) -> f64 {
    let z = &m.minimizer;
    (0..z.len())
        .filter(|&i| i != k)
        .map(|i| chord_distance(z.point(i), z.point(k)))
        .fold(f64::INFINITY, f64::min)
}
