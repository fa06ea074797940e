//! Fixed points of the Hamiltonian flow and collision-cluster diagnostics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Result, VortexError};
use crate::exec::Execution;
use crate::hamiltonian::{energy, grad_in_frames, grad_norm, hessian_in_frames, MetricContext};
use crate::sphere::{chord_distance, Configuration, VorticityVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub z: Configuration,
    pub energy: f64,
    pub grad_norm: f64,
    /// Ascending, in tangent-frame coordinates.
    pub hessian_eigenvalues: Vec<f64>,
    pub kernel_dim: usize,
    pub morse_index: usize,
    /// Number of starts that converged to this point.
    pub hits: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointSettings {
    pub starts: usize,
    pub seed: u64,
    pub newton_tol: f64,
    pub max_iters: usize,
    /// Starts with a pair closer than this are resampled.
    pub min_start_chord: f64,
    /// Two reports are merged when every vortex moved less than this.
    pub dedup_tol: f64,
    /// Relative kernel threshold: `|lambda| < kernel_rel_tol * max |lambda|`.
    pub kernel_rel_tol: f64,
    pub exec: Execution,
}

impl Default for FixedPointSettings {
    fn default() -> Self {
        Self {
            starts: 64,
            seed: 0,
            newton_tol: 1e-10,
            max_iters: 100,
            min_start_chord: 0.2,
            dedup_tol: 1e-6,
            kernel_rel_tol: 1e-6,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSearch {
    pub reports: Vec<FixedPointReport>,
    pub starts: usize,
    pub converged: usize,
    pub dropped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOutcome {
    pub z: Configuration,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

/// Newton iteration on the gradient in tangent-frame coordinates, with an
/// SVD pseudo-inverse (symmetry directions are null) and backtracking on
/// `|grad|^2`.
pub fn newton_refine(
    z0: &Configuration,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    tol: f64,
    max_iters: usize,
) -> Result<NewtonOutcome> {
    let mut z = z0.clone();
    let mut gn = grad_norm(&z, gammas, ctx)?;
    for it in 0..max_iters {
        if gn < tol {
            return Ok(NewtonOutcome {
                z,
                iterations: it,
                grad_norm: gn,
                converged: true,
            });
        }
        let frames = z.frames();
        let g = DVector::from_vec(grad_in_frames(&z, gammas, ctx, &frames)?);
        let h = hessian_in_frames(&z, gammas, ctx, &frames)?;
        let mut step = pinv_solve(&h, &g, 1e-12);
        step.neg_mut();
        // keep every vortex within a quarter turn
        let longest = step
            .as_slice()
            .chunks(2)
            .map(|c| c[0].hypot(c[1]))
            .fold(0.0, f64::max);
        if longest > 0.5 {
            step *= 0.5 / longest;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = step.iter().map(|s| s * alpha).collect();
            if let Ok(zt) = z.displaced(&frames, &trial) {
                if let Ok(gt) = grad_norm(&zt, gammas, ctx) {
                    if gt < gn {
                        accepted = Some((zt, gt));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((zt, gt)) => {
                z = zt;
                gn = gt;
            }
            None => {
                return Ok(NewtonOutcome {
                    z,
                    iterations: it,
                    grad_norm: gn,
                    converged: gn < tol,
                });
            }
        }
    }
    Ok(NewtonOutcome {
        z,
        iterations: max_iters,
        grad_norm: gn,
        converged: gn < tol,
    })
}

/// Least-squares minimum-norm solution of `A x = b` for symmetric `A`.
pub(crate) fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * rcond;
    svd.solve(b, eps)
        .unwrap_or_else(|_| DVector::zeros(b.len()))
}

/// Hessian spectrum with kernel and index counts.
pub fn analyze(
    z: &Configuration,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    kernel_rel_tol: f64,
) -> Result<(Vec<f64>, usize, usize)> {
    let h = hessian_in_frames(z, gammas, ctx, &z.frames())?;
    let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let scale = ev.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let tol = kernel_rel_tol * scale;
    let kernel = ev.iter().filter(|l| l.abs() <= tol).count();
    let index = ev.iter().filter(|&&l| l < -tol).count();
    Ok((ev, kernel, index))
}

/// Whether `a` and `b` agree up to relabeling vortices of equal vorticity.
pub fn same_up_to_relabeling(
    a: &Configuration,
    b: &Configuration,
    gammas: &VorticityVector,
    tol: f64,
) -> bool {
    let n = a.len();
    let mut used = vec![false; n];
    for i in 0..n {
        let found = (0..n).find(|&j| {
            !used[j] && gammas[i] == gammas[j] && chord_distance(a.point(i), b.point(j)) < tol
        });
        match found {
            Some(j) => used[j] = true,
            None => return false,
        }
    }
    true
}

fn random_start(rng: &mut ChaCha8Rng, n: usize, min_chord: f64) -> Configuration {
    Configuration::random(rng, n, min_chord)
}

/// Multistart Newton search for critical points of `H_g`.
///
/// Start `k` is drawn from a ChaCha8 stream seeded with `seed + k`, so the
/// result does not depend on the execution mode.
pub fn find_fixed_points(
    gammas: &VorticityVector,
    ctx: &MetricContext,
    settings: &FixedPointSettings,
) -> Result<FixedPointSearch> {
    let n = gammas.len();
    let outcomes = settings.exec.map_range(settings.starts, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed.wrapping_add(k as u64));
        let z0 = random_start(&mut rng, n, settings.min_start_chord);
        newton_refine(&z0, gammas, ctx, settings.newton_tol, settings.max_iters)
    });
    let mut found: Vec<(Configuration, usize)> = Vec::new();
    let mut converged = 0;
    for o in outcomes {
        let o = match o {
            Ok(o) if o.converged => o,
            Ok(_) | Err(VortexError::Collision { .. }) => continue,
            Err(e) => return Err(e),
        };
        converged += 1;
        match found
            .iter_mut()
            .find(|(z, _)| same_up_to_relabeling(z, &o.z, gammas, settings.dedup_tol))
        {
            Some(entry) => entry.1 += 1,
            None => found.push((o.z, 1)),
        }
    }
    let mut reports = settings
        .exec
        .map(&found, |(z, hits)| -> Result<FixedPointReport> {
            let (ev, kernel, index) = analyze(z, gammas, ctx, settings.kernel_rel_tol)?;
            Ok(FixedPointReport {
                energy: energy(z, gammas, ctx)?.h,
                grad_norm: grad_norm(z, gammas, ctx)?,
                hessian_eigenvalues: ev,
                kernel_dim: kernel,
                morse_index: index,
                hits: *hits,
                z: z.clone(),
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then_with(|| cmp_lex(&a.z.to_flat(), &b.z.to_flat()))
    });
    Ok(FixedPointSearch {
        reports,
        starts: settings.starts,
        converged,
        dropped: settings.starts - converged,
    })
}

fn cmp_lex(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// `Gamma(Lambda) = sum_{i != j in Lambda} G_i G_j` over ordered pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSum {
    pub indices: Vec<usize>,
    pub value: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub subsets: Vec<ClusterSum>,
    /// No subset sum vanishes.
    pub non_degenerate: bool,
}

pub const MAX_CLUSTER_VORTICES: usize = 20;
pub const CLUSTER_ZERO_TOL: f64 = 1e-12;

pub fn cluster_sum(gammas: &[f64], indices: &[usize]) -> f64 {
    let s: f64 = indices.iter().map(|&i| gammas[i]).sum();
    let q: f64 = indices.iter().map(|&i| gammas[i] * gammas[i]).sum();
    s * s - q
}

/// Every subset of at least two vortices with its pair sum; subsets are
/// listed by bitmask order.
pub fn cluster_vorticity_sums(gammas: &VorticityVector) -> Result<ClusterReport> {
    let n = gammas.len();
    if n > MAX_CLUSTER_VORTICES {
        return Err(VortexError::InvalidInput(format!(
            "subset enumeration limited to {MAX_CLUSTER_VORTICES} vortices, got {n}"
        )));
    }
    let g = gammas.as_slice();
    let mut subsets = Vec::new();
    for mask in 1u32..(1u32 << n) {
        if mask.count_ones() < 2 {
            continue;
        }
        let indices: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let value = cluster_sum(g, &indices);
        subsets.push(ClusterSum {
            degenerate: value.abs() < CLUSTER_ZERO_TOL,
            indices,
            value,
        });
    }
    let non_degenerate = subsets.iter().all(|s| !s.degenerate);
    Ok(ClusterReport {
        subsets,
        non_degenerate,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterEvent {
    pub time: f64,
    pub sample: usize,
    pub indices: Vec<usize>,
    pub gamma_sum: f64,
}

/// Reports each maximal group of mutually `eps`-close vortices at the sample
/// where it first appears (again after it breaks up).
pub fn cluster_monitor(traj: &Trajectory, gammas: &VorticityVector, eps: f64) -> Vec<ClusterEvent> {
    let mut events = Vec::new();
    let mut active: Vec<Vec<usize>> = Vec::new();
    for (k, z) in traj.states.iter().enumerate() {
        let n = z.len();
        let adj: Vec<Vec<bool>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| i != j && chord_distance(z.point(i), z.point(j)) < eps)
                    .collect()
            })
            .collect();
        let mut cliques = Vec::new();
        bron_kerbosch(&adj, Vec::new(), (0..n).collect(), Vec::new(), &mut cliques);
        cliques.retain(|c| c.len() >= 2);
        for c in &mut cliques {
            c.sort_unstable();
        }
        cliques.sort();
        for c in &cliques {
            if !active.contains(c) {
                events.push(ClusterEvent {
                    time: traj.times[k],
                    sample: k,
                    gamma_sum: cluster_sum(gammas.as_slice(), c),
                    indices: c.clone(),
                });
            }
        }
        active = cliques;
    }
    events
}

fn bron_kerbosch(
    adj: &[Vec<bool>],
    r: Vec<usize>,
    p: Vec<usize>,
    x: Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if p.is_empty() && x.is_empty() {
        out.push(r);
        return;
    }
    let mut p = p;
    let mut x = x;
    while let Some(&v) = p.first() {
        let mut r2 = r.clone();
        r2.push(v);
        let p2 = p.iter().copied().filter(|&u| adj[v][u]).collect();
        let x2 = x.iter().copied().filter(|&u| adj[v][u]).collect();
        bron_kerbosch(adj, r2, p2, x2, out);
        p.retain(|&u| u != v);
        x.push(v);
    }
}
