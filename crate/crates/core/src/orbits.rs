//! Periodic orbits: Poincaré returns, shooting refinement, choreography
//! checks and the reduced-vorticity test for non-identical vortices.
//!
//! Shooting integrates with RK4 at a fixed number of steps `N` chosen from
//! the initial period guess, so the discrete flow map is smooth in `(z, T)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    self, vector_field, IntegratorSettings, Method, Trajectory, TrajectoryStatus,
};
use crate::equilibria::pinv_solve;
use crate::error::VortexError;
use crate::exec::Execution;
use crate::hamiltonian::{energy, grad, MetricContext};
use crate::sphere::{chord_distance, Configuration, SpherePoint, Vec3, VorticityVector};

#[derive(Debug, Error)]
pub enum OrbitError {
    #[error("flow is not transverse to the section (normal rate {rate:e})")]
    NotTransverse { rate: f64 },
    #[error("no return to the section before t = {t_max}")]
    NoReturn { t_max: f64 },
    #[error("tangential crossing at t = {time}")]
    TangentialCrossing { time: f64 },
    #[error("shooting did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("shooting Jacobian is singular")]
    SingularJacobian,
    #[error("orbit residual {residual:e} exceeds tolerance {tol:e}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error(transparent)]
    Vortex(#[from] VortexError),
}

pub type OrbitResult<T> = std::result::Result<T, OrbitError>;

/// Affine section `(s_vortex - point) . normal = 0`, crossed in the direction
/// of increasing left-hand side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub vortex: usize,
    pub point: Vec3,
    pub normal: Vec3,
}

impl Section {
    /// Plane through `s_vortex` orthogonal to its velocity.
    pub fn through(
        z: &Configuration,
        gammas: &VorticityVector,
        ctx: &MetricContext,
        vortex: usize,
    ) -> OrbitResult<Self> {
        let x = vector_field(z, gammas, ctx)?;
        let v = x.get(vortex).ok_or_else(|| {
            VortexError::InvalidInput(format!("section vortex {vortex} out of range"))
        })?;
        let speed = v.norm();
        if speed < 1e-12 {
            return Err(OrbitError::NotTransverse { rate: speed });
        }
        Ok(Self {
            vortex,
            point: *z.point(vortex).coords(),
            normal: v / speed,
        })
    }

    pub fn value(&self, z: &Configuration) -> f64 {
        (z.point(self.vortex).coords() - self.point).dot(&self.normal)
    }

    fn rate(
        &self,
        z: &Configuration,
        gammas: &VorticityVector,
        ctx: &MetricContext,
    ) -> OrbitResult<f64> {
        Ok(vector_field(z, gammas, ctx)?[self.vortex].dot(&self.normal))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShootingSettings {
    /// Target RK4 step; the actual step is `T / N`.
    pub dt: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub fd_step: f64,
    /// Relative singular-value cutoff of the Gauss-Newton solve.
    pub rcond: f64,
    pub t_max: f64,
    pub floquet: bool,
    pub exec: Execution,
}

impl Default for ShootingSettings {
    fn default() -> Self {
        Self {
            dt: 2e-3,
            tol: 1e-9,
            max_iters: 20,
            fd_step: 1e-6,
            rcond: 1e-10,
            t_max: 1e3,
            floquet: true,
            exec: Execution::Parallel,
        }
    }
}

impl ShootingSettings {
    fn integrator(&self) -> IntegratorSettings {
        IntegratorSettings {
            dt: self.dt,
            method: Method::Rk4,
            collision_floor: 1e-8,
            ..Default::default()
        }
    }

    fn steps_for(&self, t: f64) -> usize {
        (t.abs() / self.dt).ceil().max(1.0) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareReturn {
    pub z: Configuration,
    pub time: f64,
}

fn rk4(
    z: &Configuration,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    h: f64,
) -> OrbitResult<Configuration> {
    let s = IntegratorSettings {
        method: Method::Rk4,
        ..Default::default()
    };
    Ok(dynamics::step(z, gammas, ctx, h, &s)?.0)
}

/// Integrates until the section is crossed again in the starting direction.
/// The crossing time is bisected to `1e-10`.
pub fn poincare_return(
    z: &Configuration,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    section: &Section,
    settings: &ShootingSettings,
) -> OrbitResult<PoincareReturn> {
    let rate = section.rate(z, gammas, ctx)?;
    if rate.abs() < 1e-10 {
        return Err(OrbitError::NotTransverse { rate });
    }
    let dir = rate.signum();
    let h = settings.dt;
    let mut t = 0.0;
    let mut cur = z.clone();
    let mut g = dir * section.value(&cur);
    let mut left_start = false;
    while t < settings.t_max {
        let next = rk4(&cur, gammas, ctx, h)?;
        let gn = dir * section.value(&next);
        if gn > 0.0 {
            left_start = true;
        }
        if left_start && g < 0.0 && gn >= 0.0 {
            let (mut a, mut b) = (0.0, h);
            while b - a > 1e-10 {
                let mid = 0.5 * (a + b);
                if dir * section.value(&rk4(&cur, gammas, ctx, mid)?) < 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let tau = 0.5 * (a + b);
            let hit = rk4(&cur, gammas, ctx, tau)?;
            let r = section.rate(&hit, gammas, ctx)?;
            if r.abs() < 1e-10 {
                return Err(OrbitError::TangentialCrossing { time: t + tau });
            }
            return Ok(PoincareReturn {
                z: hit,
                time: t + tau,
            });
        }
        cur = next;
        g = gn;
        t += h;
    }
    Err(OrbitError::NoReturn {
        t_max: settings.t_max,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub z0: Configuration,
    #[serde(rename = "T")]
    pub period: f64,
    /// `|phi_T(z0) - z0|` in ambient coordinates.
    pub residual: f64,
    pub energy: f64,
    pub floquet_moduli: Option<Vec<f64>>,
    /// RK4 steps per period used for shooting.
    pub steps: usize,
    pub iterations: usize,
}

fn shoot(
    z: &Configuration,
    t: f64,
    steps: usize,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    settings: &ShootingSettings,
) -> OrbitResult<Configuration> {
    Ok(dynamics::flow(
        z,
        gammas,
        ctx,
        &settings.integrator(),
        t,
        steps,
    )?)
}

fn flat(z: &Configuration) -> DVector<f64> {
    DVector::from_vec(z.to_flat())
}

struct Pinned<'a> {
    gammas: &'a VorticityVector,
    ctx: &'a MetricContext,
    section: Section,
    h_target: f64,
    steps: usize,
    settings: &'a ShootingSettings,
}

impl Pinned<'_> {
    /// Shooting residual, section and energy rows appended.
    fn residual(&self, z: &Configuration, t: f64) -> OrbitResult<DVector<f64>> {
        let end = shoot(z, t, self.steps, self.gammas, self.ctx, self.settings)?;
        let n3 = 3 * z.len();
        let mut r = DVector::zeros(n3 + 2);
        r.rows_mut(0, n3).copy_from(&(flat(&end) - flat(z)));
        r[n3] = self.section.value(z);
        r[n3 + 1] = energy(z, self.gammas, self.ctx)?.h - self.h_target;
        Ok(r)
    }
}

/// Gauss-Newton on `(z, T)` for `phi_T(z) = z`, with `z` kept on the section
/// through the guess and on the energy level of the guess.
pub fn refine_periodic(
    z_guess: &Configuration,
    t_guess: f64,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    settings: &ShootingSettings,
) -> OrbitResult<PeriodicOrbit> {
    if !(t_guess > 0.0 && t_guess.is_finite()) {
        return Err(VortexError::InvalidInput(format!(
            "period guess must be positive, got {t_guess}"
        ))
        .into());
    }
    let problem = Pinned {
        gammas,
        ctx,
        section: Section::through(z_guess, gammas, ctx, 0)?,
        h_target: energy(z_guess, gammas, ctx)?.h,
        steps: settings.steps_for(t_guess),
        settings,
    };
    let n = z_guess.len();
    let n3 = 3 * n;
    let mut z = z_guess.clone();
    let mut t = t_guess;
    let mut r = problem.residual(&z, t)?;
    let mut jac = DMatrix::zeros(n3 + 2, 2 * n + 1);
    for iter in 0..=settings.max_iters {
        let shoot_res = r.rows(0, n3).norm();
        let frames = z.frames();
        let eps = settings.fd_step;
        let cols: Vec<OrbitResult<DVector<f64>>> = settings.exec.map_range(2 * n + 1, |c| {
            let (zp, zm, tp, tm) = if c < 2 * n {
                let mut d = vec![0.0; 2 * n];
                d[c] = eps;
                let zp = z.displaced(&frames, &d)?;
                d[c] = -eps;
                (zp, z.displaced(&frames, &d)?, t, t)
            } else {
                (z.clone(), z.clone(), t + eps, t - eps)
            };
            Ok((problem.residual(&zp, tp)? - problem.residual(&zm, tm)?) / (2.0 * eps))
        });
        for (c, col) in cols.into_iter().enumerate() {
            jac.set_column(c, &col?);
        }
        if shoot_res < settings.tol && r[n3].abs() < settings.tol && r[n3 + 1].abs() < settings.tol
        {
            let floquet = settings.floquet.then(|| floquet_moduli(&jac, &frames));
            return Ok(PeriodicOrbit {
                z0: z,
                period: t,
                residual: shoot_res,
                energy: energy(z_guess, gammas, ctx)?.h + r[n3 + 1],
                floquet_moduli: floquet,
                steps: problem.steps,
                iterations: iter,
            });
        }
        if iter == settings.max_iters {
            break;
        }
        let step = pinv_solve(&jac, &(-&r), settings.rcond);
        if step.norm() == 0.0 || !step.iter().all(|x| x.is_finite()) {
            return Err(OrbitError::SingularJacobian);
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let delta: Vec<f64> = step.rows(0, 2 * n).iter().map(|x| alpha * x).collect();
            let tn = t + alpha * step[2 * n];
            if let Ok(zn) = z.displaced(&frames, &delta) {
                if let Ok(rn) = problem.residual(&zn, tn) {
                    if rn.norm() < r.norm() {
                        z = zn;
                        t = tn;
                        r = rn;
                        accepted = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(OrbitError::NotConverged {
        iterations: settings.max_iters,
        residual: r.rows(0, n3).norm(),
    })
}

/// Refines along `rho_k = (k / stages) rho`, `k = 1..=stages`, seeding each
/// stage with the previous orbit. Useful when the guess comes from the
/// round sphere.
pub fn refine_by_continuation(
    z_guess: &Configuration,
    t_guess: f64,
    gammas: &VorticityVector,
    rho: &crate::spectral::ConformalFactor,
    stages: usize,
    settings: &ShootingSettings,
) -> OrbitResult<PeriodicOrbit> {
    let stages = stages.max(1);
    let (mut z, mut t) = (z_guess.clone(), t_guess);
    let mut last = None;
    for k in 1..=stages {
        let mut r = rho.clone();
        r.scale(k as f64 / stages as f64);
        let orbit = refine_periodic(&z, t, gammas, &MetricContext::new(r), settings)?;
        z = orbit.z0.clone();
        t = orbit.period;
        last = Some(orbit);
    }
    Ok(last.expect("at least one stage"))
}

/// Moduli of the monodromy eigenvalues in frame coordinates at `z`.
fn floquet_moduli(jac: &DMatrix<f64>, frames: &[crate::sphere::TangentBasis]) -> Vec<f64> {
    let n = frames.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for c in 0..2 * n {
        let basis = frames[c / 2].vector(
            if c % 2 == 0 { 1.0 } else { 0.0 },
            if c % 2 == 0 { 0.0 } else { 1.0 },
        );
        for (i, f) in frames.iter().enumerate() {
            let col = Vec3::new(jac[(3 * i, c)], jac[(3 * i + 1, c)], jac[(3 * i + 2, c)])
                + if i == c / 2 { basis } else { Vec3::zeros() };
            let [a, b] = f.coordinates(&col);
            m[(2 * i, c)] = a;
            m[(2 * i + 1, c)] = b;
        }
    }
    let mut out: Vec<f64> = m.complex_eigenvalues().iter().map(|l| l.norm()).collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Samples the orbit at `samples` equally spaced times in `[0, T]`
/// (inclusive) using the shooting discretization.
pub fn sample_orbit(
    orbit: &PeriodicOrbit,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    samples: usize,
) -> OrbitResult<Trajectory> {
    sample_from(&orbit.z0, orbit.period, orbit.steps, gammas, ctx, samples)
}

fn sample_from(
    z0: &Configuration,
    period: f64,
    steps_hint: usize,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    samples: usize,
) -> OrbitResult<Trajectory> {
    let samples = samples.max(1);
    let per = steps_hint.div_ceil(samples).max(1);
    let h = period / (per * samples) as f64;
    let mut z = z0.clone();
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![z.clone()],
        h_log: vec![energy(&z, gammas, ctx)?.h],
        m_log: vec![dynamics::moment_map(&z, gammas)],
        status: TrajectoryStatus::Completed,
    };
    for k in 1..=samples {
        for _ in 0..per {
            z = rk4(&z, gammas, ctx, h)?;
        }
        traj.times.push(k as f64 * period / samples as f64);
        traj.h_log.push(energy(&z, gammas, ctx)?.h);
        traj.m_log.push(dynamics::moment_map(&z, gammas));
        traj.states.push(z.clone());
    }
    Ok(traj)
}

/// Residual recomputed with twice as many steps.
pub fn reverify_residual(
    orbit: &PeriodicOrbit,
    gammas: &VorticityVector,
    ctx: &MetricContext,
) -> OrbitResult<f64> {
    let s = ShootingSettings::default();
    let end = shoot(&orbit.z0, orbit.period, 2 * orbit.steps, gammas, ctx, &s)?;
    Ok((flat(&end) - flat(&orbit.z0)).norm())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChoreographySettings {
    pub samples: usize,
    pub tol: f64,
    /// Start of the sampled grid as a fraction of the period.
    pub phase: f64,
}

impl Default for ChoreographySettings {
    fn default() -> Self {
        Self {
            samples: 64,
            tol: 1e-6,
            phase: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoreographyReport {
    pub is_choreography: bool,
    /// Largest chord mismatch under `z_{i-1}(t) = z_i(t + T/n)`.
    pub forward_error: f64,
    /// Same with the labels traversed in the opposite order.
    pub backward_error: f64,
}

/// Checks whether all vortices run along one curve with time shifts `T/n`.
pub fn is_choreography(
    orbit: &PeriodicOrbit,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    settings: &ChoreographySettings,
) -> OrbitResult<ChoreographyReport> {
    let n = orbit.z0.len();
    let samples = settings.samples.max(1);
    let per_phase = orbit.steps.div_ceil(samples * n).max(1);
    let grid = samples * n;
    let start = if settings.phase != 0.0 {
        let t0 = settings.phase.rem_euclid(1.0) * orbit.period;
        shoot(
            &orbit.z0,
            t0,
            orbit.steps.max(1),
            gammas,
            ctx,
            &ShootingSettings::default(),
        )?
    } else {
        orbit.z0.clone()
    };
    let traj = sample_from(&start, orbit.period, per_phase * grid, gammas, ctx, grid)?;
    // traj.states[k] is z(k T / grid); the shift T/n is `samples` grid cells
    let at = |k: usize| &traj.states[k % grid];
    let mut fwd: f64 = 0.0;
    let mut bwd: f64 = 0.0;
    for j in 0..samples {
        let k = j * n;
        for i in 0..n {
            let shifted = at(k + samples);
            fwd = fwd.max(chord_distance(
                at(k).point((i + n - 1) % n),
                shifted.point(i),
            ));
            bwd = bwd.max(chord_distance(at(k).point((i + 1) % n), shifted.point(i)));
        }
    }
    Ok(ChoreographyReport {
        is_choreography: fwd.min(bwd) <= settings.tol,
        forward_error: fwd,
        backward_error: bwd,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum PerverseStatus {
    /// Every sampled reduced gradient is bounded away from zero.
    NotChoreography,
    /// Some sample has a reduced gradient below the threshold.
    Inconclusive,
    IdenticalVorticities,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerverseReport {
    pub status: PerverseStatus,
    pub reduced_vorticity: Vec<f64>,
    /// Vortices with `G_i = mean`, left out of the gradient.
    pub skipped: Vec<usize>,
    /// `sum_{i != j} G~_i G~_j`, which equals `-sum (G_i - mean)^2`.
    pub quadratic_form: f64,
    pub centered_square_sum: f64,
    pub min_gradient_norm: f64,
    pub gradient_norms: Vec<f64>,
}

/// Quadratic form of the reduced vorticity over ordered pairs.
pub fn reduced_quadratic_form(gammas: &[f64]) -> (f64, f64) {
    let mean = gammas.iter().sum::<f64>() / gammas.len() as f64;
    let red: Vec<f64> = gammas.iter().map(|g| g - mean).collect();
    let mut q = 0.0;
    for i in 0..red.len() {
        for j in 0..red.len() {
            if i != j {
                q += red[i] * red[j];
            }
        }
    }
    (q, red.iter().map(|x| x * x).sum())
}

/// Gradient of the energy with reduced vorticity `G_i - mean` along the
/// orbit. A choreography would make it vanish identically, so a positive
/// lower bound rules one out. The threshold is `1e3 * threshold_tol`.
pub fn perverse_test(
    orbit: &PeriodicOrbit,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    samples: usize,
    threshold_tol: f64,
) -> OrbitResult<PerverseReport> {
    let (q, sq) = reduced_quadratic_form(gammas.as_slice());
    let mean = gammas.mean();
    let red: Vec<f64> = gammas.as_slice().iter().map(|g| g - mean).collect();
    let zero = 1e-12 * gammas.as_slice().iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let skipped: Vec<usize> = (0..red.len()).filter(|&i| red[i].abs() <= zero).collect();
    let kept: Vec<usize> = (0..red.len()).filter(|&i| red[i].abs() > zero).collect();
    let mut report = PerverseReport {
        status: PerverseStatus::IdenticalVorticities,
        reduced_vorticity: red.clone(),
        skipped,
        quadratic_form: q,
        centered_square_sum: sq,
        min_gradient_norm: 0.0,
        gradient_norms: Vec::new(),
    };
    if kept.is_empty() {
        return Ok(report);
    }
    // zero-vorticity vortices do not act on the others
    let sub_gammas = VorticityVector::new(kept.iter().map(|&i| red[i]).collect())?;
    let traj = sample_orbit(orbit, gammas, ctx, samples)?;
    let norms: Vec<f64> = traj.states[..traj.states.len() - 1]
        .iter()
        .map(|z| {
            let sub = Configuration::new(kept.iter().map(|&i| *z.point(i)).collect())?;
            let g = grad(&sub, &sub_gammas, ctx)?;
            Ok(g.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt())
        })
        .collect::<crate::error::Result<_>>()?;
    report.min_gradient_norm = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    report.gradient_norms = norms;
    report.status = if report.min_gradient_norm > 1e3 * threshold_tol {
        PerverseStatus::NotChoreography
    } else {
        PerverseStatus::Inconclusive
    };
    Ok(report)
}

/// Angular rate of vortex `vortex` about `axis`, from the vector field.
pub fn angular_rate(
    z: &Configuration,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    axis: &Vec3,
    vortex: usize,
) -> crate::error::Result<f64> {
    let a = axis.normalize();
    let s = z.point(vortex).coords();
    let tangent = a.cross(s);
    let r2 = tangent.norm_squared();
    if r2 < 1e-24 {
        return Err(VortexError::Domain(
            "vortex lies on the rotation axis".into(),
        ));
    }
    Ok(vector_field(z, gammas, ctx)?[vortex].dot(&tangent) / r2)
}

/// Identical vortices on a regular polygon at colatitude `theta`, first one
/// at longitude 0.
pub fn polygon(n: usize, theta: f64) -> crate::error::Result<Configuration> {
    Configuration::new(
        (0..n)
            .map(|k| {
                SpherePoint::from_angles(theta, 2.0 * std::f64::consts::PI * k as f64 / n as f64)
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::HarmonicField;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn zonal(eps: f64) -> MetricContext {
        MetricContext::new(HarmonicField::from_triples(&[(2, 0, eps)]).unwrap())
    }

    fn quick() -> ShootingSettings {
        ShootingSettings {
            dt: 5e-3,
            ..Default::default()
        }
    }

    #[test]
    fn quadratic_form_examples() {
        let (q, sq) = reduced_quadratic_form(&[1.0, 2.0]);
        assert!((q + 0.5).abs() < 1e-15);
        assert!((q + sq).abs() < 1e-15);
        assert_eq!(reduced_quadratic_form(&[1.0, 1.0]).0, 0.0);
    }

    #[test]
    fn fixed_point_section_rejected() {
        let z = Configuration::new(vec![SpherePoint::north(), SpherePoint::south()]).unwrap();
        let g = VorticityVector::identical(2, 1.0).unwrap();
        assert!(matches!(
            Section::through(&z, &g, &MetricContext::round(), 0),
            Err(OrbitError::NotTransverse { .. })
        ));
    }

    #[test]
    fn relative_equilibrium_returns_to_start() {
        let ctx = zonal(0.1);
        let g = VorticityVector::identical(2, 1.0).unwrap();
        let z = polygon(2, 1.0).unwrap();
        let sec = Section::through(&z, &g, &ctx, 0).unwrap();
        let ret = poincare_return(&z, &g, &ctx, &sec, &quick()).unwrap();
        assert!(
            z.max_displacement(&ret.z) < 1e-8,
            "{}",
            z.max_displacement(&ret.z)
        );
        let omega = angular_rate(&z, &g, &ctx, &Vec3::z(), 0).unwrap();
        assert!((ret.time - 2.0 * PI / omega.abs()).abs() < 1e-6);
    }

    #[test]
    fn round_dipole_return_time_matches_rate() {
        let ctx = MetricContext::round();
        let g = VorticityVector::identical(2, 1.0).unwrap();
        let z = Configuration::new(vec![
            SpherePoint::from_angles(0.7, 0.2),
            SpherePoint::from_angles(1.9, 2.4),
        ])
        .unwrap();
        // rate about the vorticity axis from a short difference quotient
        let axis = (z.point(0).coords() + z.point(1).coords()).normalize();
        let dt = 1e-4;
        let s = IntegratorSettings {
            method: Method::Rk4,
            ..Default::default()
        };
        let zp = dynamics::flow(&z, &g, &ctx, &s, dt, 1).unwrap();
        let zm = dynamics::flow(&z, &g, &ctx, &s, -dt, 1).unwrap();
        let proj = |p: &SpherePoint| {
            let v = p.coords() - axis * axis.dot(p.coords());
            v.normalize()
        };
        let (a, b) = (proj(zm.point(0)), proj(zp.point(0)));
        let omega = a.cross(&b).dot(&axis).atan2(a.dot(&b)) / (2.0 * dt);
        let sec = Section::through(&z, &g, &ctx, 0).unwrap();
        let ret = poincare_return(&z, &g, &ctx, &sec, &quick()).unwrap();
        assert!(
            (ret.time - 2.0 * PI / omega.abs()).abs() < 1e-6,
            "{} vs {}",
            ret.time,
            2.0 * PI / omega.abs()
        );
    }

    #[test]
    fn relative_equilibrium_refines_quickly_and_is_choreography() {
        let ctx = zonal(0.1);
        let g = VorticityVector::identical(3, 1.0).unwrap();
        let z = polygon(3, 1.1).unwrap();
        let t = 2.0 * PI / angular_rate(&z, &g, &ctx, &Vec3::z(), 0).unwrap().abs();
        let orbit = refine_periodic(&z, t, &g, &ctx, &quick()).unwrap();
        assert!(orbit.iterations <= 3);
        assert!(orbit.residual < 1e-9);
        let half = reverify_residual(&orbit, &g, &ctx).unwrap();
        assert!(half < 2e-9, "{half}");
        let c = is_choreography(&orbit, &g, &ctx, &ChoreographySettings::default()).unwrap();
        assert!(c.is_choreography, "{c:?}");
        let shifted = ChoreographySettings {
            phase: 0.37,
            ..Default::default()
        };
        assert!(
            is_choreography(&orbit, &g, &ctx, &shifted)
                .unwrap()
                .is_choreography
        );
        let moduli = orbit.floquet_moduli.unwrap();
        assert_eq!(moduli.len(), 6);
    }

    #[test]
    fn round_dipole_off_axis_is_choreography() {
        let ctx = MetricContext::round();
        let g = VorticityVector::identical(2, 1.0).unwrap();
        let z = polygon(2, 0.9).unwrap();
        let t = 2.0 * PI / angular_rate(&z, &g, &ctx, &Vec3::z(), 0).unwrap().abs();
        let orbit = refine_periodic(&z, t, &g, &ctx, &quick()).unwrap();
        assert!(
            is_choreography(&orbit, &g, &ctx, &ChoreographySettings::default())
                .unwrap()
                .is_choreography
        );
    }

    #[test]
    fn unequal_pair_is_not_choreography() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ctx = MetricContext::new(HarmonicField::random(&mut rng, 2, 0.02));
        let g = VorticityVector::new(vec![1.0, 2.0]).unwrap();
        let z = Configuration::new(vec![
            SpherePoint::from_angles(0.6, 0.0),
            SpherePoint::from_angles(1.2, 2.5),
        ])
        .unwrap();
        let axis = z.point(0).coords() + z.point(1).coords() * 2.0;
        let t = 2.0 * PI
            / angular_rate(&z, &g, &MetricContext::round(), &axis, 0)
                .unwrap()
                .abs();
        let orbit = refine_periodic(&z, t, &g, &ctx, &quick()).unwrap();
        assert!(
            !is_choreography(&orbit, &g, &ctx, &ChoreographySettings::default())
                .unwrap()
                .is_choreography
        );
        let rep = perverse_test(&orbit, &g, &ctx, 64, 1e-9).unwrap();
        assert_eq!(rep.status, PerverseStatus::NotChoreography);
        assert!(rep.skipped.is_empty());
    }

    #[test]
    fn identical_vorticities_are_inapplicable() {
        let g = VorticityVector::identical(2, 1.0).unwrap();
        let orbit = PeriodicOrbit {
            z0: polygon(2, 1.0).unwrap(),
            period: 1.0,
            residual: 0.0,
            energy: 0.0,
            floquet_moduli: None,
            steps: 10,
            iterations: 0,
        };
        let rep = perverse_test(&orbit, &g, &MetricContext::round(), 8, 1e-9).unwrap();
        assert_eq!(rep.status, PerverseStatus::IdenticalVorticities);
        assert_eq!(rep.skipped, vec![0, 1]);
    }
}
