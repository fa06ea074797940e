//! Liouville field of the identical dipole on the round sphere and its
//! transport to a small conformal deformation.
//!
//! On the prime meridian the field is `p d/dp` in the Archimedes chart
//! `(p, q) = (height, longitude)` at each vortex. Elsewhere it is pushed
//! forward by the rotation carrying the meridian representative of the same
//! energy onto the configuration. In closed form, with `c = s_1 . s_2`,
//!
//! ```text
//! v_1 = (s_2 - c s_1) / (1 - c),   v_2 = (s_1 - c s_2) / (1 - c)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

use crate::bands::fibonacci_lattice;
use crate::error::{Result, VortexError};
use crate::exec::Execution;
use crate::hamiltonian::{differential, energy, energy_round, MetricContext};
use crate::spectral::{
    aux_band_limit, inv_laplacian_round, volume, ConformalFactor, HarmonicField, QuadratureGrid,
};
use crate::sphere::{
    chord_distance, tangent_basis, Configuration, Rotation, SpherePoint, Vec3, VorticityVector,
};

/// Round-sphere minimum of the identical dipole.
pub const DIPOLE_MIN: f64 = -LN_2 / (2.0 * PI);

fn unit_pair() -> VorticityVector {
    VorticityVector::identical(2, 1.0).expect("nonzero")
}

/// Latitude of the meridian representative at level `alpha`:
/// `arccos(e^{-2 pi alpha} / 2)`.
pub fn meridian_latitude(alpha: f64) -> Result<f64> {
    let x = (-2.0 * PI * alpha).exp() / 2.0;
    if !(alpha > DIPOLE_MIN) || !(x > 0.0 && x < 1.0) {
        return Err(VortexError::Domain(format!(
            "level {alpha} is not above the dipole minimum {DIPOLE_MIN}"
        )));
    }
    Ok(x.acos())
}

/// The pair on the prime meridian, symmetric about the north pole, with
/// round energy `alpha`.
pub fn meridian_representative(alpha: f64) -> Result<Configuration> {
    meridian_latitude(alpha)?;
    // cos(lat) without the round trip through the angle, which loses the chord at large alpha
    let x = (-2.0 * PI * alpha).exp() / 2.0;
    let z = (1.0 - x * x).sqrt();
    Configuration::new(vec![
        SpherePoint::from_xyz(x, 0.0, z)?,
        SpherePoint::from_xyz(-x, 0.0, z)?,
    ])
}

/// `p d/dp` at `s` in the Archimedes chart.
fn height_field(s: &SpherePoint) -> Vec3 {
    let v = s.coords();
    // d s / d p at fixed longitude, times p
    let r2 = v.x * v.x + v.y * v.y;
    Vec3::new(-v.z * v.x * v.z / r2, -v.z * v.y * v.z / r2, v.z)
}

/// Chart components `(dp_1, dq_1, dp_2, dq_2)` of a tangent pair.
pub fn chart_components(z: &Configuration, v: &[Vec3; 2]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..2 {
        let s = z.point(i).coords();
        let r2 = s.x * s.x + s.y * s.y;
        out[2 * i] = v[i].z;
        out[2 * i + 1] = (s.x * v[i].y - s.y * v[i].x) / r2;
    }
    out
}

/// Right-handed frame `(u, m x u, m)` with `u` along `s_1 - s_2` and `m`
/// along `s_1 + s_2`.
fn pair_frame(z: &Configuration) -> Result<Rotation> {
    let (a, b) = (z.point(0).coords(), z.point(1).coords());
    let sum = a + b;
    let diff = a - b;
    if sum.norm() < 1e-12 || diff.norm() < 1e-12 {
        return Err(VortexError::Domain(
            "pair is antipodal or coincident".into(),
        ));
    }
    let u = diff.normalize();
    let m = sum.normalize();
    Ok(Rotation::from_frame(&u, &m.cross(&u)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipoleState {
    pub z: Configuration,
    pub alpha: f64,
    pub meridian_rep: Configuration,
    /// Rotation with `rot(meridian_rep) = z`.
    pub rot: Rotation,
}

impl DipoleState {
    pub fn new(z: &Configuration) -> Result<Self> {
        if z.len() != 2 {
            return Err(VortexError::DimensionMismatch {
                expected: 2,
                found: z.len(),
            });
        }
        let alpha = energy_round(z, &unit_pair())?;
        let rep = meridian_representative(alpha)?;
        let rot = pair_frame(z)?.compose(&pair_frame(&rep)?.inverse());
        Ok(Self {
            z: z.clone(),
            alpha,
            meridian_rep: rep,
            rot,
        })
    }
}

/// Liouville field at `z`, pushed forward from the meridian representative.
pub fn liouville_field(z: &Configuration) -> Result<[Vec3; 2]> {
    let st = DipoleState::new(z)?;
    let v1 = height_field(st.meridian_rep.point(0));
    let v2 = height_field(st.meridian_rep.point(1));
    Ok([st.rot.apply_vec(&v1), st.rot.apply_vec(&v2)])
}

/// Closed form of [`liouville_field`].
pub fn liouville_field_closed(z: &Configuration) -> [Vec3; 2] {
    let (a, b) = (z.point(0).coords(), z.point(1).coords());
    let c = a.dot(b);
    [(b - a * c) / (1.0 - c), (a - b * c) / (1.0 - c)]
}

fn round_form(z: &Configuration, x: &[Vec3; 2], y: &[Vec3; 2]) -> f64 {
    (0..2)
        .map(|i| z.point(i).coords().dot(&x[i].cross(&y[i])))
        .sum()
}

/// `dH(v) > 0` on the level `alpha` at random rotations of the representative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransversalityReport {
    pub alpha: f64,
    pub samples: usize,
    pub min_margin: f64,
    pub max_margin: f64,
    pub max_level_error: f64,
}

pub fn transversality(
    alpha: f64,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<TransversalityReport> {
    let rep = meridian_representative(alpha)?;
    let g = unit_pair();
    let ctx = MetricContext::round();
    let rows: Vec<Result<(f64, f64)>> = exec.map_range(samples, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let w = crate::sphere::rotate(&Rotation::random(&mut rng), &rep);
        let v = liouville_field(&w)?;
        Ok((
            differential(&w, &g, &ctx, &v)?,
            (energy_round(&w, &g)? - alpha).abs(),
        ))
    });
    let rows: Vec<(f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
    Ok(TransversalityReport {
        alpha,
        samples,
        min_margin: rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
        max_margin: rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max),
        max_level_error: rows.iter().map(|r| r.1).fold(0.0, f64::max),
    })
}

/// Field whose flow is tested in [`lie_derivative_check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestField {
    Liouville,
    /// Rigid rotation about the z axis; preserves the form.
    Rotation,
}

fn field(kind: TestField, z: &Configuration) -> Result<[Vec3; 2]> {
    match kind {
        TestField::Liouville => liouville_field(z),
        TestField::Rotation => Ok([
            Vec3::z().cross(z.point(0).coords()),
            Vec3::z().cross(z.point(1).coords()),
        ]),
    }
}

fn flow_field(kind: TestField, z: &Configuration, t: f64, steps: usize) -> Result<Configuration> {
    let h = t / steps as f64;
    let shift = |z: &Configuration, k: &[Vec3; 2], c: f64| {
        Configuration::from_vectors(&[
            z.point(0).coords() + k[0] * c,
            z.point(1).coords() + k[1] * c,
        ])
    };
    let mut z = z.clone();
    for _ in 0..steps {
        let k1 = field(kind, &z)?;
        let k2 = field(kind, &shift(&z, &k1, h / 2.0)?)?;
        let k3 = field(kind, &shift(&z, &k2, h / 2.0)?)?;
        let k4 = field(kind, &shift(&z, &k3, h)?)?;
        let mut acc = [Vec3::zeros(); 2];
        for i in 0..2 {
            acc[i] = (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) / 6.0;
        }
        z = shift(&z, &acc, h)?;
    }
    Ok(z)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LieRow {
    pub t: f64,
    /// `false` when `t` is past the escape time of the flow; the other
    /// fields are then NaN.
    pub defined: bool,
    /// Projection of `(phi_t^* Omega - Omega) / t` onto `Omega`.
    pub ratio: f64,
    /// Component of the same quantity orthogonal to `Omega`, relative to `|Omega|`.
    pub off_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LieReport {
    pub alpha: f64,
    pub field: TestField,
    pub samples: usize,
    /// Worst row over samples for each `t`.
    pub rows: Vec<LieRow>,
}

impl LieReport {
    /// `|ratio - target| <= 10 t` and `off_ratio <= 10 t` for every `t`.
    pub fn converges_to(&self, target: f64) -> bool {
        self.rows.iter().all(|r| {
            r.defined && (r.ratio - target).abs() <= 10.0 * r.t && r.off_ratio <= 10.0 * r.t
        })
    }
}

const FD_STEP: f64 = 1e-6;

/// `(phi_t^* Omega - Omega)(X_a, X_b) / t` and `Omega(X_a, X_b)` over the
/// six basis bivectors at `w`.
fn lie_components(kind: TestField, w: &Configuration, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let frames = w.frames();
    let substeps = 64;
    let end = flow_field(kind, w, t, substeps)?;
    let mut push = Vec::with_capacity(4);
    let mut basis = Vec::with_capacity(4);
    for c in 0..4 {
        let mut d = [0.0; 4];
        d[c] = FD_STEP;
        let zp = flow_field(kind, &w.displaced(&frames, &d)?, t, substeps)?;
        d[c] = -FD_STEP;
        let zm = flow_field(kind, &w.displaced(&frames, &d)?, t, substeps)?;
        let col: [Vec3; 2] = std::array::from_fn(|i| {
            let v = (zp.point(i).coords() - zm.point(i).coords()) / (2.0 * FD_STEP);
            end.point(i).project_tangent(&v)
        });
        push.push(col);
        let (a, b) = if c % 2 == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
        let mut e = [Vec3::zeros(); 2];
        e[c / 2] = frames[c / 2].vector(a, b);
        basis.push(e);
    }
    let mut dev = Vec::with_capacity(6);
    let mut omega = Vec::with_capacity(6);
    for a in 0..4 {
        for b in a + 1..4 {
            let o = round_form(w, &basis[a], &basis[b]);
            dev.push((round_form(&end, &push[a], &push[b]) - o) / t);
            omega.push(o);
        }
    }
    Ok((dev, omega))
}

/// Time at which the Liouville flow from level `alpha` reaches the pole
/// (heights grow like `e^t`).
pub fn escape_time(alpha: f64) -> Result<f64> {
    Ok(-meridian_latitude(alpha)?.sin().ln())
}

/// Finite-time test of `L_v Omega = Omega` on the level `alpha`.
pub fn lie_derivative_check(
    alpha: f64,
    samples: usize,
    t_steps: &[f64],
    kind: TestField,
    seed: u64,
    exec: Execution,
) -> Result<LieReport> {
    let rep = meridian_representative(alpha)?;
    let escape = escape_time(alpha)?;
    let states: Vec<Configuration> = (0..samples)
        .map(|k| {
            if k == 0 {
                rep.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
                crate::sphere::rotate(&Rotation::random(&mut rng), &rep)
            }
        })
        .collect();
    let mut rows = Vec::with_capacity(t_steps.len());
    for &t in t_steps {
        if kind == TestField::Liouville && t >= escape {
            rows.push(LieRow {
                t,
                defined: false,
                ratio: f64::NAN,
                off_ratio: f64::NAN,
            });
            continue;
        }
        let per: Vec<Result<LieRow>> = exec.map(&states, |w| lie_row(kind, w, t));
        let per: Vec<LieRow> = per.into_iter().collect::<Result<_>>()?;
        let worst = per
            .into_iter()
            .max_by(|a, b| {
                (a.ratio - 1.0)
                    .abs()
                    .max(a.off_ratio)
                    .total_cmp(&(b.ratio - 1.0).abs().max(b.off_ratio))
            })
            .unwrap_or(LieRow {
                t,
                defined: false,
                ratio: f64::NAN,
                off_ratio: f64::NAN,
            });
        rows.push(worst);
    }
    Ok(LieReport {
        alpha,
        field: kind,
        samples,
        rows,
    })
}

/// Single-state row of [`lie_derivative_check`].
pub fn lie_row(kind: TestField, w: &Configuration, t: f64) -> Result<LieRow> {
    let (dev, omega) = lie_components(kind, w, t)?;
    let oo: f64 = omega.iter().map(|x| x * x).sum();
    let ratio = dev.iter().zip(&omega).map(|(d, o)| d * o).sum::<f64>() / oo;
    let off = dev
        .iter()
        .zip(&omega)
        .map(|(d, o)| (d - ratio * o).powi(2))
        .sum::<f64>()
        .sqrt()
        / oo.sqrt();
    Ok(LieRow {
        t,
        defined: true,
        ratio,
        off_ratio: off,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoserSettings {
    pub steps: usize,
    pub tol: f64,
    pub residual_samples: usize,
    pub transversality_samples: usize,
    pub exclusion_grid: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for MoserSettings {
    fn default() -> Self {
        Self {
            steps: 32,
            tol: 1e-6,
            residual_samples: 200,
            transversality_samples: 1000,
            exclusion_grid: 2000,
            seed: 0,
            exec: Execution::Parallel,
        }
    }
}

/// Area-preserving map from the round sphere onto `e^{2 rho} g_0`, built as
/// the time-one flow of `X_t = -grad u / (1 + t f)` with `f = e^{2 rho} - 1`
/// and `Delta u = f`.
#[derive(Clone, Debug)]
pub struct MoserMap {
    rho: ConformalFactor,
    potential: HarmonicField,
    steps: usize,
}

impl MoserMap {
    /// `rho` must have volume `4 pi`; see [`volume_matched`].
    pub fn new(rho: &ConformalFactor, steps: usize) -> Self {
        let la = aux_band_limit(rho.l_max());
        let grid = QuadratureGrid::for_degree(2 * la);
        let f = grid.project(la, |p| (2.0 * rho.evaluate(p)).exp() - 1.0);
        Self {
            rho: rho.clone(),
            potential: inv_laplacian_round(&f),
            steps: steps.max(1),
        }
    }

    fn velocity(&self, p: &Vec3, t: f64) -> Vec3 {
        let s = SpherePoint::renormalized(*p);
        let f = (2.0 * self.rho.evaluate(&s)).exp() - 1.0;
        -self.potential.surface_gradient(&s) / (1.0 + t * f)
    }

    pub fn apply(&self, p: &SpherePoint) -> SpherePoint {
        let h = 1.0 / self.steps as f64;
        let mut x = *p.coords();
        for k in 0..self.steps {
            let t = k as f64 * h;
            let k1 = self.velocity(&x, t);
            let k2 = self.velocity(&(x + k1 * (h / 2.0)), t + h / 2.0);
            let k3 = self.velocity(&(x + k2 * (h / 2.0)), t + h / 2.0);
            let k4 = self.velocity(&(x + k3 * h), t + h);
            x = SpherePoint::renormalized(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
                .coords()
                .to_owned();
        }
        SpherePoint::renormalized(x)
    }

    pub fn apply_pair(&self, z: &Configuration) -> Result<Configuration> {
        Configuration::new(z.points().iter().map(|p| self.apply(p)).collect())
    }

    /// `|det(d phi) e^{2 rho(phi)} - 1|` at `p`.
    pub fn area_defect(&self, p: &SpherePoint) -> f64 {
        let h = 1e-5;
        let f = tangent_basis(p);
        let q = self.apply(p);
        let g = tangent_basis(&q);
        let col = |e: Vec3| {
            let d = self.apply(&p.exp(&(e * h))).coords() - self.apply(&p.exp(&(-e * h))).coords();
            g.coordinates(&(d / (2.0 * h)))
        };
        let [a, c] = col(f.e1);
        let [b, d] = col(f.e2);
        ((a * d - b * c) * (2.0 * self.rho.evaluate(&q)).exp() - 1.0).abs()
    }
}

/// `rho` shifted by a constant so that the area is `4 pi`.
pub fn volume_matched(rho: &ConformalFactor) -> ConformalFactor {
    let la = aux_band_limit(rho.l_max());
    let v = volume(rho, &QuadratureGrid::for_degree(2 * la));
    rho.shifted(-0.5 * (v / (4.0 * PI)).ln())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformedContactReport {
    pub status: ContactStatus,
    pub level: f64,
    pub volume_shift: f64,
    pub moser_residual: f64,
    pub samples: usize,
    /// Rotated meridian families on which the level was not found.
    pub unbracketed: usize,
    pub min_margin: f64,
    pub max_level_error: f64,
    /// Range of `H_g(phi(z), phi(-z))` over the exclusion grid.
    pub antipodal_range: (f64, f64),
    /// `level` lies outside `antipodal_range`.
    pub antipodal_excluded: bool,
}

/// Transversality of the transported Liouville field to `{H_g = c}`.
pub fn deformed_contact_check(
    rho: &ConformalFactor,
    c: f64,
    settings: &MoserSettings,
) -> Result<DeformedContactReport> {
    let matched = volume_matched(rho);
    let shift = matched.mean() - rho.mean();
    let map = MoserMap::new(&matched, settings.steps);
    let ctx = MetricContext::new(matched.clone());
    let g = unit_pair();
    let exec = settings.exec;

    let probe = fibonacci_lattice(settings.residual_samples.max(1));
    let moser_residual = exec
        .map(&probe, |p| map.area_defect(p))
        .into_iter()
        .fold(0.0, f64::max);

    let pulled =
        |z: &Configuration| -> Result<f64> { Ok(energy(&map.apply_pair(z)?, &g, &ctx)?.h) };

    let rows: Vec<Result<Option<(f64, f64)>>> =
        exec.map_range(settings.transversality_samples, |k| {
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed.wrapping_add(k as u64));
            let rot = Rotation::random(&mut rng);
            let at = |colat: f64| -> Result<Configuration> {
                Ok(crate::sphere::rotate(
                    &rot,
                    &Configuration::new(vec![
                        SpherePoint::from_angles(colat, 0.0),
                        SpherePoint::from_angles(colat, PI),
                    ])?,
                ))
            };
            // energy decreases in the half-angle between the pair
            let (mut lo, mut hi) = (1e-6, PI / 2.0 - 1e-9);
            if pulled(&at(lo)?)? < c || pulled(&at(hi)?)? > c {
                return Ok(None);
            }
            while hi - lo > 1e-13 {
                let mid = 0.5 * (lo + hi);
                if pulled(&at(mid)?)? > c {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let w = at(0.5 * (lo + hi))?;
            let v = liouville_field(&w)?;
            let h = 1e-6;
            let frames = w.frames();
            let step = |s: f64| -> Result<Configuration> {
                let d: Vec<f64> = (0..2)
                    .flat_map(|i| frames[i].coordinates(&(v[i] * s)))
                    .collect();
                w.displaced(&frames, &d)
            };
            let margin = (pulled(&step(h)?)? - pulled(&step(-h)?)?) / (2.0 * h);
            Ok(Some((margin, (pulled(&w)? - c).abs())))
        });
    let rows: Vec<Option<(f64, f64)>> = rows.into_iter().collect::<Result<_>>()?;
    let unbracketed = rows.iter().filter(|r| r.is_none()).count();
    let rows: Vec<(f64, f64)> = rows.into_iter().flatten().collect();
    let min_margin = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let max_level_error = rows.iter().map(|r| r.1).fold(0.0, f64::max);

    let grid = fibonacci_lattice(settings.exclusion_grid.max(1));
    let anti: Vec<f64> = exec
        .map(&grid, |p| {
            let pair = Configuration::new(vec![map.apply(p), map.apply(&p.antipode())])?;
            Ok(energy(&pair, &g, &ctx)?.h)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let range = (
        anti.iter().cloned().fold(f64::INFINITY, f64::min),
        anti.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let excluded = c < range.0 || c > range.1;

    let status = if moser_residual > settings.tol {
        ContactStatus::Inconclusive
    } else if min_margin > 0.0 && excluded && unbracketed == 0 {
        ContactStatus::Pass
    } else {
        ContactStatus::Fail
    };
    Ok(DeformedContactReport {
        status,
        level: c,
        volume_shift: shift,
        moser_residual,
        samples: rows.len(),
        unbracketed,
        min_margin,
        max_level_error,
        antipodal_range: range,
        antipodal_excluded: excluded,
    })
}

/// Largest chord between the pair and its image under the Moser map.
pub fn moser_displacement(map: &MoserMap, z: &Configuration) -> Result<f64> {
    let img = map.apply_pair(z)?;
    Ok((0..z.len())
        .map(|i| chord_distance(z.point(i), img.point(i)))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::rotate;

    #[test]
    fn representative_examples() {
        assert!((meridian_latitude(0.0).unwrap() - PI / 3.0).abs() < 1e-15);
        assert!(meridian_representative(DIPOLE_MIN).is_err());
        assert!(meridian_representative(DIPOLE_MIN - 0.1).is_err());
        for k in 0..100 {
            let alpha = DIPOLE_MIN + 1e-3 + 0.02 * k as f64;
            let z = meridian_representative(alpha).unwrap();
            assert!((energy_round(&z, &unit_pair()).unwrap() - alpha).abs() < 1e-10);
        }
        let mut last = 0.0;
        for e in [1e-2, 1e-4, 1e-6, 1e-8] {
            let z = meridian_representative(DIPOLE_MIN + e).unwrap();
            let d = chord_distance(z.point(0), z.point(1));
            assert!(d > last && d < 2.0);
            last = d;
        }
        assert!(2.0 - last < 1e-6);
    }

    #[test]
    fn field_on_meridian_is_height_times_dp() {
        let z = meridian_representative(0.3).unwrap();
        let v = liouville_field(&z).unwrap();
        let comp = chart_components(&z, &v);
        let p = z.point(0).coords().z;
        for (a, b) in comp.iter().zip([p, 0.0, p, 0.0]) {
            assert!((a - b).abs() < 1e-12, "{comp:?}");
        }
    }

    #[test]
    fn field_matches_closed_form_and_is_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let z = Configuration::random(&mut rng, 2, 0.1);
            if chord_distance(z.point(0), z.point(1)) > 1.99 {
                continue;
            }
            let v = liouville_field(&z).unwrap();
            let w = liouville_field_closed(&z);
            for i in 0..2 {
                assert!((v[i] - w[i]).norm() < 1e-10);
            }
            let r = Rotation::random(&mut rng);
            let vr = liouville_field(&rotate(&r, &z)).unwrap();
            for i in 0..2 {
                assert!((vr[i] - r.apply_vec(&v[i])).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn antipodal_pair_is_rejected() {
        let z = Configuration::new(vec![SpherePoint::north(), SpherePoint::south()]).unwrap();
        assert!(liouville_field(&z).is_err());
    }

    #[test]
    fn transversality_positive() {
        for alpha in [0.0, 0.2, 0.5] {
            let r = transversality(alpha, 200, 3, Execution::Parallel).unwrap();
            assert!(r.min_margin > 0.0);
            assert!(r.max_level_error < 1e-10);
        }
    }

    #[test]
    fn lie_derivative_ratio_and_control() {
        let ts = [2e-3, 1e-3, 1e-4];
        let v = lie_derivative_check(0.3, 4, &ts, TestField::Liouville, 5, Execution::Parallel)
            .unwrap();
        assert!(v.converges_to(1.0), "{v:?}");
        for r in &v.rows {
            assert!((r.ratio - r.t.exp_m1() / r.t).abs() < 1e-4, "{r:?}");
        }
        let far = lie_derivative_check(
            0.3,
            2,
            &[1e-2],
            TestField::Liouville,
            5,
            Execution::Parallel,
        )
        .unwrap();
        assert!(!far.rows[0].defined);
        assert!((escape_time(0.3).unwrap() - 2.9e-3).abs() < 1e-4);
        let c =
            lie_derivative_check(0.3, 4, &ts, TestField::Rotation, 5, Execution::Parallel).unwrap();
        assert!(c.converges_to(0.0), "{c:?}");
        assert!(!c.converges_to(1.0));
    }

    #[test]
    fn lie_row_is_rotation_invariant() {
        let rep = meridian_representative(0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = rotate(&Rotation::random(&mut rng), &rep);
        let a = lie_row(TestField::Liouville, &rep, 1e-3).unwrap();
        let b = lie_row(TestField::Liouville, &w, 1e-3).unwrap();
        assert!((a.ratio - b.ratio).abs() < 1e-6);
    }

    #[test]
    fn zero_rho_moser_is_identity() {
        let map = MoserMap::new(&HarmonicField::zero(2), 32);
        let z = meridian_representative(0.1).unwrap();
        assert!(moser_displacement(&map, &z).unwrap() < 1e-15);
    }

    #[test]
    fn moser_transports_area() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = volume_matched(&HarmonicField::random(&mut rng, 2, 0.05));
        let map = MoserMap::new(&rho, 32);
        for p in fibonacci_lattice(50) {
            assert!(map.area_defect(&p) < 1e-6);
        }
    }

    #[test]
    fn deformed_check_small_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rho = HarmonicField::random(&mut rng, 2, 0.02);
        let s = MoserSettings {
            transversality_samples: 50,
            exclusion_grid: 200,
            residual_samples: 50,
            ..Default::default()
        };
        let r = deformed_contact_check(&rho, 0.3, &s).unwrap();
        assert_eq!(r.status, ContactStatus::Pass, "{r:?}");
        assert!(r.max_level_error < 1e-9);

        let c = 0.5 * (r.antipodal_range.0 + r.antipodal_range.1);
        let v = deformed_contact_check(&rho, c, &s).unwrap();
        assert!(!v.antipodal_excluded);
        assert_ne!(v.status, ContactStatus::Pass);
    }
}
