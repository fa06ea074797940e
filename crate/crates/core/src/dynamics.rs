//! Hamiltonian vector field and trajectory integration.
//!
//! The symplectic form is `Omega = sum_i G_i e^{2 rho(s_i)} omega_0` with
//! `omega_0(a, b) = s . (a x b)` (outward orientation). The field solving
//! `Omega(X, w) = dH(w)` is
//!
//! ```text
//! X_i = (grad_i H x s_i) / (G_i e^{2 rho(s_i)})
//! ```
//!
//! Reversing the orientation reverses time.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::exec::Execution;
use crate::hamiltonian::{energy, grad, MetricContext};
use crate::sphere::{Configuration, SpherePoint, Vec3, VorticityVector};

pub fn vector_field(
    z: &Configuration,
    gammas: &VorticityVector,
    ctx: &MetricContext,
) -> Result<Vec<Vec3>> {
    let g = grad(z, gammas, ctx)?;
    let round = ctx.is_round();
    Ok(z.points()
        .iter()
        .zip(g)
        .zip(gammas.as_slice())
        .map(|((p, gi), &gam)| {
            let w = if round {
                gam
            } else {
                gam * ctx.area_density(p)
            };
            gi.cross(p.coords()) / w
        })
        .collect())
}

/// `Omega(a, b)` for tangent vectors `a_i`, `b_i` at `z`.
pub fn symplectic_form(
    z: &Configuration,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    a: &[Vec3],
    b: &[Vec3],
) -> f64 {
    z.points()
        .iter()
        .zip(gammas.as_slice())
        .zip(a.iter().zip(b))
        .map(|((p, g), (x, y))| g * ctx.area_density(p) * p.coords().dot(&x.cross(y)))
        .sum()
}

/// `sum_i G_i s_i`, conserved on the round sphere.
pub fn moment_map(z: &Configuration, gammas: &VorticityVector) -> Vec3 {
    z.points()
        .iter()
        .zip(gammas.as_slice())
        .fold(Vec3::zeros(), |acc, (p, g)| acc + p.coords() * *g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Midpoint rule with the midpoint renormalized onto the sphere.
    ImplicitMidpoint,
    /// Symmetric triple-jump composition of [`Method::ImplicitMidpoint`]
    /// (fourth order).
    ImplicitMidpoint4,
    /// Classical RK4 followed by projection onto the sphere.
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSettings {
    pub dt: f64,
    pub method: Method,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub collision_floor: f64,
    /// Store every `record_every`-th step (the last step is always stored).
    pub record_every: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            method: Method::ImplicitMidpoint4,
            newton_tol: 1e-14,
            max_newton_iters: 50,
            collision_floor: 1e-8,
            record_every: 1,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(VortexError::InvalidInput(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.collision_floor > 0.0) {
            return Err(VortexError::InvalidInput(format!(
                "collision_floor must be positive, got {}",
                self.collision_floor
            )));
        }
        if self.record_every == 0 || self.max_newton_iters == 0 {
            return Err(VortexError::InvalidInput(
                "record_every and max_newton_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Completed,
    CollisionFloor {
        step: usize,
        time: f64,
        i: usize,
        j: usize,
        distance: f64,
    },
    NewtonFailure {
        step: usize,
        time: f64,
        residual: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Configuration>,
    pub h_log: Vec<f64>,
    /// Moment map at every sample; conserved only when `rho = 0`.
    pub m_log: Vec<Vec3>,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn completed(&self) -> bool {
        self.status == TrajectoryStatus::Completed
    }

    pub fn last(&self) -> &Configuration {
        self.states
            .last()
            .expect("trajectory has the initial state")
    }

    /// `max |H(t) - H(0)| / |H(0)|`.
    pub fn relative_energy_drift(&self) -> f64 {
        let h0 = self.h_log[0];
        self.h_log
            .iter()
            .map(|h| (h - h0).abs())
            .fold(0.0, f64::max)
            / h0.abs()
    }

    pub fn moment_drift(&self) -> f64 {
        let m0 = self.m_log[0];
        self.m_log
            .iter()
            .map(|m| (m - m0).norm())
            .fold(0.0, f64::max)
    }

    /// CSV with header `t,x0,y0,z0,...,H,Mx,My,Mz`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.states.first().map_or(0, |z| z.len());
        let mut head = vec!["t".to_string()];
        for i in 0..n {
            head.extend([format!("x{i}"), format!("y{i}"), format!("z{i}")]);
        }
        head.extend(["H", "Mx", "My", "Mz"].map(String::from));
        writeln!(w, "{}", head.join(","))?;
        for k in 0..self.times.len() {
            let mut row = vec![fmt(self.times[k])];
            for p in self.states[k].points() {
                let c = p.coords();
                row.extend([fmt(c.x), fmt(c.y), fmt(c.z)]);
            }
            let m = self.m_log[k];
            row.extend([fmt(self.h_log[k]), fmt(m.x), fmt(m.y), fmt(m.z)]);
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

/// One step of signed size `h`. Returns the new state and the final
/// implicit-solve residual (zero for RK4).
pub fn step(
    z: &Configuration,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    h: f64,
    settings: &IntegratorSettings,
) -> Result<(Configuration, f64)> {
    match settings.method {
        Method::Rk4 => Ok((rk4_step(z, gammas, ctx, h)?, 0.0)),
        Method::ImplicitMidpoint => midpoint_step(z, gammas, ctx, h, settings),
        Method::ImplicitMidpoint4 => {
            let c = 2f64.cbrt();
            let outer = 1.0 / (2.0 - c);
            let inner = -c / (2.0 - c);
            let (a, r1) = midpoint_step(z, gammas, ctx, outer * h, settings)?;
            let (b, r2) = midpoint_step(&a, gammas, ctx, inner * h, settings)?;
            let (d, r3) = midpoint_step(&b, gammas, ctx, outer * h, settings)?;
            Ok((d, r1.max(r2).max(r3)))
        }
    }
}

fn field_flat(s: &[Vec3], gammas: &VorticityVector, ctx: &MetricContext) -> Result<Vec<Vec3>> {
    let z = Configuration::new(
        s.iter()
            .map(|v| SpherePoint::new(*v))
            .collect::<Result<_>>()?,
    )?;
    vector_field(&z, gammas, ctx)
}

fn rk4_step(
    z: &Configuration,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    h: f64,
) -> Result<Configuration> {
    let s0: Vec<Vec3> = z.points().iter().map(|p| *p.coords()).collect();
    let add = |a: &[Vec3], k: &[Vec3], c: f64| -> Vec<Vec3> {
        a.iter().zip(k).map(|(x, y)| x + y * c).collect()
    };
    let k1 = field_flat(&s0, gammas, ctx)?;
    let k2 = field_flat(&add(&s0, &k1, h / 2.0), gammas, ctx)?;
    let k3 = field_flat(&add(&s0, &k2, h / 2.0), gammas, ctx)?;
    let k4 = field_flat(&add(&s0, &k3, h), gammas, ctx)?;
    let s1: Vec<Vec3> = (0..s0.len())
        .map(|i| s0[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0))
        .collect();
    Configuration::from_vectors(&s1)
}

/// Residual map `F(s1) = s1 - s0 - h X(normalize(s0 + s1))`.
fn midpoint_residual(
    s0: &[Vec3],
    s1: &[Vec3],
    gammas: &VorticityVector,
    ctx: &MetricContext,
    h: f64,
) -> Result<Vec<Vec3>> {
    let mid: Vec<Vec3> = s0.iter().zip(s1).map(|(a, b)| a + b).collect();
    let x = field_flat(&mid, gammas, ctx)?;
    Ok((0..s0.len()).map(|i| s1[i] - s0[i] - x[i] * h).collect())
}

fn midpoint_step(
    z: &Configuration,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    h: f64,
    settings: &IntegratorSettings,
) -> Result<(Configuration, f64)> {
    let s0: Vec<Vec3> = z.points().iter().map(|p| *p.coords()).collect();
    let n = s0.len();
    // explicit predictor
    let x0 = vector_field(z, gammas, ctx)?;
    let mut s1: Vec<Vec3> = (0..n).map(|i| s0[i] + x0[i] * h).collect();
    let mut res = f64::INFINITY;
    for _ in 0..settings.max_newton_iters {
        let r = midpoint_residual(&s0, &s1, gammas, ctx, h)?;
        let next: Vec<Vec3> = (0..n).map(|i| s1[i] - r[i]).collect();
        res = r.iter().map(|v| v.amax()).fold(0.0, f64::max);
        s1 = next;
        if res <= settings.newton_tol {
            return Ok((Configuration::from_vectors(&s1)?, res));
        }
        if !res.is_finite() {
            break;
        }
    }
    // fixed-point iteration stalled; Newton with a difference Jacobian
    let mut s1 = if res.is_finite() {
        s1
    } else {
        (0..n).map(|i| s0[i] + x0[i] * h).collect()
    };
    for _ in 0..settings.max_newton_iters {
        let r = midpoint_residual(&s0, &s1, gammas, ctx, h)?;
        res = r.iter().map(|v| v.amax()).fold(0.0, f64::max);
        if res <= settings.newton_tol {
            return Ok((Configuration::from_vectors(&s1)?, res));
        }
        let m = 3 * n;
        let mut jac = DMatrix::<f64>::zeros(m, m);
        let eps = 1e-7;
        for c in 0..m {
            let mut sp = s1.clone();
            let mut sm = s1.clone();
            sp[c / 3][c % 3] += eps;
            sm[c / 3][c % 3] -= eps;
            let rp = midpoint_residual(&s0, &sp, gammas, ctx, h)?;
            let rm = midpoint_residual(&s0, &sm, gammas, ctx, h)?;
            for row in 0..m {
                jac[(row, c)] = (rp[row / 3][row % 3] - rm[row / 3][row % 3]) / (2.0 * eps);
            }
        }
        let rhs = DVector::from_iterator(m, r.iter().flat_map(|v| [v.x, v.y, v.z]));
        let Some(delta) = jac.lu().solve(&rhs) else {
            break;
        };
        for c in 0..m {
            s1[c / 3][c % 3] -= delta[c];
        }
    }
    Err(VortexError::Domain(format!(
        "implicit midpoint solve did not converge (residual {res:e})"
    )))
}

/// Integrates from `z0` up to time `t_end > 0`.
///
/// The step is shrunk to `t_end / ceil(t_end / dt)` so the last sample sits
/// at `t_end`. Collisions below `collision_floor` and failed implicit solves
/// truncate the trajectory and set [`Trajectory::status`].
pub fn integrate(
    z0: &Configuration,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    settings: &IntegratorSettings,
    t_end: f64,
) -> Result<Trajectory> {
    settings.validate()?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(VortexError::InvalidInput(format!(
            "end time must be positive, got {t_end}"
        )));
    }
    let steps = (t_end / settings.dt).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![z0.clone()],
        h_log: vec![energy(z0, gammas, ctx)?.h],
        m_log: vec![moment_map(z0, gammas)],
        status: TrajectoryStatus::Completed,
    };
    if let Some((i, j, d)) = z0.closest_pair() {
        if d < settings.collision_floor {
            traj.status = TrajectoryStatus::CollisionFloor {
                step: 0,
                time: 0.0,
                i,
                j,
                distance: d,
            };
            return Ok(traj);
        }
    }
    let mut z = z0.clone();
    for k in 1..=steps {
        let t = k as f64 * h;
        let next = match step(&z, gammas, ctx, h, settings) {
            Ok((next, _)) => next,
            Err(VortexError::Domain(_)) => {
                let r = midpoint_residual_norm(&z, gammas, ctx, h);
                traj.status = TrajectoryStatus::NewtonFailure {
                    step: k,
                    time: t,
                    residual: r,
                };
                return Ok(traj);
            }
            Err(VortexError::Collision { i, j, distance }) => {
                traj.status = TrajectoryStatus::CollisionFloor {
                    step: k,
                    time: t,
                    i,
                    j,
                    distance,
                };
                return Ok(traj);
            }
            Err(e) => return Err(e),
        };
        if let Some((i, j, d)) = next.closest_pair() {
            if d < settings.collision_floor {
                traj.status = TrajectoryStatus::CollisionFloor {
                    step: k,
                    time: t,
                    i,
                    j,
                    distance: d,
                };
                return Ok(traj);
            }
        }
        z = next;
        if k % settings.record_every == 0 || k == steps {
            traj.times.push(t);
            traj.h_log.push(energy(&z, gammas, ctx)?.h);
            traj.m_log.push(moment_map(&z, gammas));
            traj.states.push(z.clone());
        }
    }
    Ok(traj)
}

fn midpoint_residual_norm(
    z: &Configuration,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    h: f64,
) -> f64 {
    let s0: Vec<Vec3> = z.points().iter().map(|p| *p.coords()).collect();
    midpoint_residual(&s0, &s0, gammas, ctx, h)
        .map(|r| r.iter().map(|v| v.amax()).fold(0.0, f64::max))
        .unwrap_or(f64::INFINITY)
}

/// Flow map `phi_t(z)` with a fixed number of steps; `t` may be negative.
pub fn flow(
    z: &Configuration,
    gammas: &VorticityVector,
    ctx: &MetricContext,
    settings: &IntegratorSettings,
    t: f64,
    steps: usize,
) -> Result<Configuration> {
    let h = t / steps.max(1) as f64;
    let mut z = z.clone();
    for _ in 0..steps.max(1) {
        z = step(&z, gammas, ctx, h, settings)?.0;
        if let Some((i, j, d)) = z.closest_pair() {
            if d < settings.collision_floor {
                return Err(VortexError::Collision { i, j, distance: d });
            }
        }
    }
    Ok(z)
}

/// Independent trajectories, one per start.
pub fn integrate_many(
    starts: &[Configuration],
    gammas: &VorticityVector,
    ctx: &MetricContext,
    settings: &IntegratorSettings,
    t_end: f64,
    exec: Execution,
) -> Vec<Result<Trajectory>> {
    exec.map(starts, |z| integrate(z, gammas, ctx, settings, t_end))
}
