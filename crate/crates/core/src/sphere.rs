//! Geometry on the unit sphere embedded in R^3.
//!
//! Points are unit 3-vectors. Tangent vectors at a point `p` are 3-vectors
//! orthogonal to `p`; the area form is `omega(a, b) = p . (a x b)` (outward
//! normal orientation).

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};

pub type Vec3 = Vector3<f64>;

/// Smallest chord distance still treated as collision-free.
pub const COLLISION_EPS: f64 = 1e-14;

/// A point of the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 3]", try_from = "[f64; 3]")]
pub struct SpherePoint(Vec3);

impl SpherePoint {
    /// Normalizes `v` onto the sphere.
    pub fn new(v: Vec3) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(VortexError::InvalidInput(format!(
                "cannot project {v:?} onto the sphere"
            )));
        }
        Ok(Self(v / n))
    }

    pub fn from_xyz(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::new(Vec3::new(x, y, z))
    }

    /// Point at colatitude `theta` and longitude `phi`.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self(Vec3::new(st * cp, st * sp, ct))
    }

    pub fn north() -> Self {
        Self(Vec3::z())
    }

    pub fn south() -> Self {
        Self(-Vec3::z())
    }

    /// Uniformly distributed random point.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let v = Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            if let Ok(p) = Self::new(v) {
                return p;
            }
        }
    }

    #[inline]
    pub fn coords(&self) -> &Vec3 {
        &self.0
    }

    #[inline]
    pub fn dot(&self, other: &SpherePoint) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn antipode(&self) -> Self {
        Self(-self.0)
    }

    /// Colatitude in [0, pi].
    pub fn colatitude(&self) -> f64 {
        self.0.z.clamp(-1.0, 1.0).acos()
    }

    pub fn longitude(&self) -> f64 {
        self.0.y.atan2(self.0.x)
    }

    /// Removes the normal component of `v`.
    #[inline]
    pub fn project_tangent(&self, v: &Vec3) -> Vec3 {
        v - self.0 * self.0.dot(v)
    }

    /// Exponential map of the round metric: follows the great circle leaving
    /// `self` with initial velocity `v` (tangent) for unit time.
    pub fn exp(&self, v: &Vec3) -> Self {
        let v = self.project_tangent(v);
        let r = v.norm();
        if r < 1e-300 {
            return *self;
        }
        let moved = self.0 * r.cos() + v * (r.sin() / r);
        Self(moved / moved.norm())
    }

    /// Renormalizes a perturbed copy of the coordinates.
    pub fn renormalized(v: Vec3) -> Self {
        Self(v / v.norm())
    }
}

impl From<SpherePoint> for [f64; 3] {
    fn from(p: SpherePoint) -> Self {
        [p.0.x, p.0.y, p.0.z]
    }
}

impl TryFrom<[f64; 3]> for SpherePoint {
    type Error = VortexError;
    fn try_from(a: [f64; 3]) -> Result<Self> {
        Self::new(Vec3::new(a[0], a[1], a[2]))
    }
}

/// Euclidean distance between two points of the sphere, in [0, 2].
#[inline]
pub fn chord_distance(a: &SpherePoint, b: &SpherePoint) -> f64 {
    (a.0 - b.0).norm()
}

/// An orthonormal frame of the tangent plane at `base`, with
/// `e1 x e2 = base`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentBasis {
    pub base: SpherePoint,
    pub e1: Vec3,
    pub e2: Vec3,
}

impl TangentBasis {
    /// Tangent vector with frame coordinates `(a, b)`.
    #[inline]
    pub fn vector(&self, a: f64, b: f64) -> Vec3 {
        self.e1 * a + self.e2 * b
    }

    /// Frame coordinates of a (tangent) vector.
    #[inline]
    pub fn coordinates(&self, v: &Vec3) -> [f64; 2] {
        [self.e1.dot(v), self.e2.dot(v)]
    }
}

/// Deterministic tangent frame at `p`.
///
/// `e1` is the Gram-Schmidt projection of the coordinate axis least aligned
/// with `p` (smallest `|p_k|`, lowest index on ties). The frame jumps where
/// the least aligned axis changes, i.e. on the planes `|x| = |y|`,
/// `|y| = |z|` and `|x| = |z|`.
pub fn tangent_basis(p: &SpherePoint) -> TangentBasis {
    let c = p.coords();
    let a = [c.x.abs(), c.y.abs(), c.z.abs()];
    let mut k = 0;
    for i in 1..3 {
        if a[i] < a[k] {
            k = i;
        }
    }
    let mut axis = Vec3::zeros();
    axis[k] = 1.0;
    let e1 = (axis - c * c[k]).normalize();
    let e2 = c.cross(&e1);
    TangentBasis { base: *p, e1, e2 }
}

/// A proper rotation of R^3.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    /// Validates `R^T R = I` and `det R = 1` within 1e-10.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let defect = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if !(defect <= 1e-10) || !((det - 1.0).abs() <= 1e-10) {
            return Err(VortexError::InvalidRotation { defect, det });
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Right-handed rotation by `angle` about `axis`.
    pub fn about_axis(axis: &Vec3, angle: f64) -> Self {
        let u = axis.normalize();
        let (s, c) = angle.sin_cos();
        let k = Matrix3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0);
        Self(Matrix3::identity() + k * s + k * k * (1.0 - c))
    }

    /// Haar-uniform random rotation (from a normalized Gaussian quaternion).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        Self(Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ))
    }

    /// Rotation whose columns are the orthonormal right-handed frame `(a, b, a x b)`.
    pub(crate) fn from_frame(a: &Vec3, b: &Vec3) -> Self {
        let c = a.cross(b);
        Self(Matrix3::from_columns(&[*a, *b, c]))
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    #[inline]
    pub fn apply(&self, p: &SpherePoint) -> SpherePoint {
        SpherePoint::renormalized(self.0 * p.0)
    }

    #[inline]
    pub fn apply_vec(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Self(self.0 * other.0)
    }
}

/// Nonzero circulations of the vortices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct VorticityVector(Vec<f64>);

impl VorticityVector {
    pub fn new(gammas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() {
            return Err(VortexError::InvalidInput("no vortices".into()));
        }
        for (index, &value) in gammas.iter().enumerate() {
            if !value.is_finite() || value == 0.0 {
                return Err(VortexError::InvalidVorticity {
                    index,
                    value,
                    reason: "vorticities must be finite and nonzero",
                });
            }
        }
        Ok(Self(gammas))
    }

    pub fn identical(n: usize, gamma: f64) -> Result<Self> {
        Self::new(vec![gamma; n])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.total() / self.len() as f64
    }

    pub fn all_positive(&self) -> bool {
        self.0.iter().all(|&g| g > 0.0)
    }

    pub fn all_identical(&self) -> bool {
        self.0.iter().all(|&g| g == self.0[0])
    }
}

impl TryFrom<Vec<f64>> for VorticityVector {
    type Error = VortexError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<VorticityVector> for Vec<f64> {
    fn from(v: VorticityVector) -> Self {
        v.0
    }
}

impl std::ops::Index<usize> for VorticityVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A collision-free configuration of vortex positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SpherePoint>", into = "Vec<SpherePoint>")]
pub struct Configuration(Vec<SpherePoint>);

impl Configuration {
    /// Rejects configurations with a pair closer than [`COLLISION_EPS`].
    pub fn new(points: Vec<SpherePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(VortexError::InvalidInput("empty configuration".into()));
        }
        let z = Self(points);
        if let Some((i, j, d)) = z.closest_pair() {
            if !(d >= COLLISION_EPS) {
                return Err(VortexError::Collision { i, j, distance: d });
            }
        }
        Ok(z)
    }

    /// Builds from raw vectors, normalizing each.
    pub fn from_vectors(vs: &[Vec3]) -> Result<Self> {
        Self::new(
            vs.iter()
                .map(|v| SpherePoint::new(*v))
                .collect::<Result<_>>()?,
        )
    }

    /// Uniform random configuration with all chord distances above `min_chord`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, min_chord: f64) -> Self {
        loop {
            let pts: Vec<_> = (0..n).map(|_| SpherePoint::random(rng)).collect();
            let z = Self(pts);
            match z.closest_pair() {
                Some((_, _, d)) if d < min_chord.max(COLLISION_EPS) => continue,
                _ => return z,
            }
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[SpherePoint] {
        &self.0
    }

    #[inline]
    pub fn point(&self, i: usize) -> &SpherePoint {
        &self.0[i]
    }

    /// `(i, j, distance)` of the closest pair, `None` for a single vortex.
    pub fn closest_pair(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..self.0.len() {
            for j in i + 1..self.0.len() {
                let d = chord_distance(&self.0[i], &self.0[j]);
                if best.map_or(true, |b| d < b.2) {
                    best = Some((i, j, d));
                }
            }
        }
        best
    }

    pub fn frames(&self) -> Vec<TangentBasis> {
        self.0.iter().map(tangent_basis).collect()
    }

    /// Moves every vortex along the great circle given by its frame
    /// coordinates `(delta[2i], delta[2i+1])`.
    pub fn displaced(&self, frames: &[TangentBasis], delta: &[f64]) -> Result<Self> {
        if delta.len() != 2 * self.len() {
            return Err(VortexError::DimensionMismatch {
                expected: 2 * self.len(),
                found: delta.len(),
            });
        }
        let pts = self
            .0
            .iter()
            .zip(frames)
            .enumerate()
            .map(|(i, (p, f))| p.exp(&f.vector(delta[2 * i], delta[2 * i + 1])))
            .collect();
        Self::new(pts)
    }

    /// Flattened ambient coordinates `(x_0, y_0, z_0, x_1, ...)`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|p| [p.0.x, p.0.y, p.0.z]).collect()
    }

    pub fn from_flat(v: &[f64]) -> Result<Self> {
        if v.len() % 3 != 0 || v.is_empty() {
            return Err(VortexError::InvalidInput(format!(
                "flat coordinate list of length {}",
                v.len()
            )));
        }
        Self::new(
            v.chunks(3)
                .map(|c| SpherePoint::new(Vec3::new(c[0], c[1], c[2])))
                .collect::<Result<_>>()?,
        )
    }

    /// Largest chord distance between corresponding vortices.
    pub fn max_displacement(&self, other: &Configuration) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| chord_distance(a, b))
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<SpherePoint>> for Configuration {
    type Error = VortexError;
    fn try_from(v: Vec<SpherePoint>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Configuration> for Vec<SpherePoint> {
    fn from(z: Configuration) -> Self {
        z.0
    }
}

/// Applies `r` to every vortex.
pub fn rotate(r: &Rotation, z: &Configuration) -> Configuration {
    Configuration(z.0.iter().map(|p| r.apply(p)).collect())
}

/// Validating variant of [`rotate`] for raw matrices.
pub fn rotate_matrix(m: &Matrix3<f64>, z: &Configuration) -> Result<Configuration> {
    Ok(rotate(&Rotation::new(*m)?, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chord_examples() {
        let n = SpherePoint::north();
        let s = SpherePoint::south();
        assert_abs_diff_eq!(chord_distance(&n, &s), 2.0, epsilon = 1e-15);
        assert_eq!(chord_distance(&n, &n), 0.0);
        let x = SpherePoint::from_xyz(1.0, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(chord_distance(&n, &x), 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn chord_matches_dot_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a = SpherePoint::random(&mut rng);
            let b = SpherePoint::random(&mut rng);
            let d = chord_distance(&a, &b);
            assert_abs_diff_eq!(d * d, 2.0 * (1.0 - a.dot(&b)), epsilon = 1e-12);
            assert_eq!(d, chord_distance(&b, &a));
        }
    }

    #[test]
    fn rotation_examples() {
        let x = SpherePoint::from_xyz(1.0, 0.0, 0.0).unwrap();
        let z = Configuration::new(vec![x, SpherePoint::north()]).unwrap();
        assert_eq!(rotate(&Rotation::identity(), &z), z);
        let half = Rotation::about_axis(&Vec3::z(), std::f64::consts::PI);
        let rz = rotate(&half, &z);
        assert_abs_diff_eq!(rz.point(0).coords().x, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rz.point(0).coords().y, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_non_rotations() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = -1.0;
        assert!(matches!(
            Rotation::new(m),
            Err(VortexError::InvalidRotation { .. })
        ));
        let scaled = Matrix3::identity() * 1.01;
        assert!(Rotation::new(scaled).is_err());
    }

    #[test]
    fn rotation_preserves_chords() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let r = Rotation::random(&mut rng);
            assert!(Rotation::new(*r.matrix()).is_ok());
            let z = Configuration::random(&mut rng, 2, 0.0);
            let rz = rotate(&r, &z);
            // direct arithmetic oracle
            let a = z.point(0).coords();
            let b = z.point(1).coords();
            let before = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt();
            let after = chord_distance(rz.point(0), rz.point(1));
            assert_abs_diff_eq!(before, after, epsilon = 1e-12);
        }
    }

    #[test]
    fn north_pole_frame_spans_xy() {
        let f = tangent_basis(&SpherePoint::north());
        assert_abs_diff_eq!(f.e1.z, 0.0);
        assert_abs_diff_eq!(f.e2.z, 0.0);
        assert_abs_diff_eq!(f.e1, Vec3::x(), epsilon = 1e-15);
        assert_abs_diff_eq!(f.e2, Vec3::y(), epsilon = 1e-15);
    }

    #[test]
    fn frame_invariants_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let p = SpherePoint::random(&mut rng);
            let f = tangent_basis(&p);
            let c = p.coords();
            assert!(f.e1.dot(c).abs() < 1e-14);
            assert!(f.e2.dot(c).abs() < 1e-14);
            assert!(f.e1.dot(&f.e2).abs() < 1e-14);
            assert!((f.e1.norm() - 1.0).abs() < 1e-14);
            assert!((f.e2.norm() - 1.0).abs() < 1e-14);
            assert!((f.e1.cross(&f.e2) - c).norm() < 1e-14);
        }
    }

    #[test]
    fn frame_continuous_away_from_cut() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut checked = 0;
        while checked < 500 {
            let p = SpherePoint::random(&mut rng);
            let c = p.coords().abs();
            let gaps = [(c.x - c.y).abs(), (c.y - c.z).abs(), (c.x - c.z).abs()];
            if gaps.iter().any(|&g| g < 1e-3) {
                continue;
            }
            let q = p.exp(&tangent_basis(&p).vector(3e-7, -5e-7));
            assert!(chord_distance(&p, &q) < 1e-6);
            let (fp, fq) = (tangent_basis(&p), tangent_basis(&q));
            assert!((fp.e1 - fq.e1).norm() < 1e-4);
            assert!((fp.e2 - fq.e2).norm() < 1e-4);
            checked += 1;
        }
    }

    #[test]
    fn rejects_collisions_and_zero_vorticity() {
        let p = SpherePoint::north();
        assert!(matches!(
            Configuration::new(vec![p, p]),
            Err(VortexError::Collision { .. })
        ));
        assert!(VorticityVector::new(vec![1.0, 0.0]).is_err());
        assert!(VorticityVector::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn exp_map_moves_along_great_circle() {
        let p = SpherePoint::north();
        let q = p.exp(&Vec3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0));
        assert_abs_diff_eq!(*q.coords(), Vec3::x(), epsilon = 1e-15);
    }
}
