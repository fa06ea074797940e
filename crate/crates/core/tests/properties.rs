use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nvortex::bands::{c1_c2, inner_min, separation_check, BandSettings};
use nvortex::contact::{
    liouville_field, meridian_representative, transversality, volume_matched, MoserMap, DIPOLE_MIN,
};
use nvortex::dynamics::{flow, integrate, symplectic_form, vector_field, IntegratorSettings};
use nvortex::equilibria::{
    analyze, find_fixed_points, newton_refine, same_up_to_relabeling, FixedPointSettings,
};
use nvortex::hamiltonian::{energy, energy_round, grad, grad_norm, hessian};
use nvortex::invariants::{check_p3, kappa, minimal_action};
use nvortex::orbits::{
    angular_rate, is_choreography, polygon, reduced_quadratic_form, refine_periodic,
    reverify_residual, sample_orbit, ChoreographySettings, ShootingSettings,
};
use nvortex::spectral::{
    coefficient_count, harmonics, inv_laplacian_round, laplace_spectrum, volume,
};
use nvortex::sphere::{chord_distance, rotate, tangent_basis, Vec3};
use nvortex::{
    Configuration, Execution, HarmonicField, MetricContext, QuadratureGrid, Rotation, SpherePoint,
    VorticityVector,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_metric(seed: u64, l_max: usize, amplitude: f64) -> MetricContext {
    MetricContext::new(HarmonicField::random(&mut rng(seed), l_max, amplitude))
}

fn random_tangent(z: &Configuration, r: &mut ChaCha8Rng) -> Vec<Vec3> {
    z.points()
        .iter()
        .map(|p| p.project_tangent(SpherePoint::random(r).coords()))
        .collect()
}

fn round_ring(n: usize, theta: f64) -> (Configuration, VorticityVector) {
    (
        polygon(n, theta).unwrap(),
        VorticityVector::identical(n, 1.0).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotations_preserve_chords(seed in any::<u64>(), n in 2usize..6) {
        let mut r = rng(seed);
        let z = Configuration::random(&mut r, n, 0.0);
        let rot = Rotation::random(&mut r);
        let w = rotate(&rot, &z);
        for i in 0..n {
            for j in 0..n {
                let d = chord_distance(z.point(i), z.point(j)) - chord_distance(w.point(i), w.point(j));
                prop_assert!(d.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn chord_squared_is_dot_identity(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b) = (SpherePoint::random(&mut r), SpherePoint::random(&mut r));
        prop_assert!((chord_distance(&a, &b).powi(2) - 2.0 * (1.0 - a.dot(&b))).abs() < 1e-12);
    }

    #[test]
    fn quadrature_is_orthonormal(i in 0usize..49, j in 0usize..49) {
        let grid = QuadratureGrid::for_degree(12);
        let v = grid.integrate(|p| {
            let y = harmonics(6, p);
            y[i] * y[j]
        });
        let want = if i == j { 1.0 } else { 0.0 };
        prop_assert!((v - want).abs() < 1e-10);
    }

    #[test]
    fn zero_mean_fields_invert_the_laplacian(seed in any::<u64>(), l_max in 1usize..8) {
        let f = HarmonicField::random(&mut rng(seed), l_max, 1.0);
        let back = inv_laplacian_round(&f.laplacian_round());
        for (a, b) in back.coeffs().iter().zip(f.coeffs()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn volume_scales_under_homothety(seed in any::<u64>(), c in -1.0f64..1.0) {
        let rho = HarmonicField::random(&mut rng(seed), 3, 0.3);
        let grid = QuadratureGrid::for_degree(28);
        let (v0, v1) = (volume(&rho, &grid), volume(&rho.shifted(c), &grid));
        prop_assert!((v1 - (2.0 * c).exp() * v0).abs() < 1e-10 * v1.max(1.0));
    }

    #[test]
    fn round_energy_is_exact_at_zero_rho(seed in any::<u64>(), n in 2usize..6) {
        let mut r = rng(seed);
        let z = Configuration::random(&mut r, n, 0.1);
        let g = VorticityVector::new((0..n).map(|k| 0.5 + k as f64).collect()).unwrap();
        prop_assert_eq!(energy(&z, &g, &MetricContext::round()).unwrap().h, energy_round(&z, &g).unwrap());
    }

    #[test]
    fn quadratic_form_identity(g in prop::collection::vec(-5.0f64..5.0, 2..9)) {
        let (q, sq) = reduced_quadratic_form(&g);
        prop_assert!((q + sq).abs() < 1e-12 * sq.max(1.0));
    }

    #[test]
    fn meridian_representative_has_its_level(alpha in DIPOLE_MIN + 1e-6..3.0) {
        let z = meridian_representative(alpha).unwrap();
        let h = energy_round(&z, &VorticityVector::identical(2, 1.0).unwrap()).unwrap();
        prop_assert!((h - alpha).abs() < 1e-10);
    }

    #[test]
    fn liouville_field_is_equivariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let z = Configuration::random(&mut r, 2, 0.05);
        prop_assume!(chord_distance(z.point(0), z.point(1)) < 1.99);
        let rot = Rotation::random(&mut r);
        let v = liouville_field(&z).unwrap();
        let w = liouville_field(&rotate(&rot, &z)).unwrap();
        for i in 0..2 {
            prop_assert!((rot.apply_vec(&v[i]) - w[i]).norm() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn derivatives_ignore_constant_shifts(seed in any::<u64>(), c in -1.0f64..1.0) {
        let rho = HarmonicField::random(&mut rng(seed), 3, 0.3);
        let a = MetricContext::new(rho.clone());
        let b = MetricContext::new(rho.shifted(c));
        let z = Configuration::random(&mut rng(seed ^ 1), 3, 0.2);
        let g = VorticityVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        for (x, y) in grad(&z, &g, &a).unwrap().iter().zip(grad(&z, &g, &b).unwrap()) {
            prop_assert!((x - y).norm() < 1e-10);
        }
        let d = hessian(&z, &g, &a).unwrap() - hessian(&z, &g, &b).unwrap();
        prop_assert!(d.amax() < 1e-10);
    }

    #[test]
    fn gradient_matches_energy_differences(seed in any::<u64>()) {
        let ctx = random_metric(seed, 3, 0.3);
        let mut r = rng(seed ^ 2);
        let z = Configuration::random(&mut r, 3, 0.2);
        let g = VorticityVector::new(vec![1.0, -0.5, 2.0]).unwrap();
        let gr = grad(&z, &g, &ctx).unwrap();
        let frames = z.frames();
        let h = 1e-5;
        for c in 0..6 {
            let mut d = vec![0.0; 6];
            d[c] = h;
            let zp = z.displaced(&frames, &d).unwrap();
            d[c] = -h;
            let zm = z.displaced(&frames, &d).unwrap();
            let fd = (energy(&zp, &g, &ctx).unwrap().h - energy(&zm, &g, &ctx).unwrap().h) / (2.0 * h);
            let e = frames[c / 2].vector(if c % 2 == 0 { 1.0 } else { 0.0 }, if c % 2 == 0 { 0.0 } else { 1.0 });
            prop_assert!((fd - gr[c / 2].dot(&e)).abs() < 1e-6);
        }
    }

    #[test]
    fn energy_grows_at_collisions(seed in any::<u64>()) {
        let ctx = random_metric(seed, 2, 0.2);
        let mut r = rng(seed ^ 3);
        let p = SpherePoint::random(&mut r);
        let other = p.antipode();
        let b = tangent_basis(&p);
        let g = VorticityVector::new(vec![1.0, 1.5, 1.0]).unwrap();
        let mut last = f64::NEG_INFINITY;
        for k in 1..12 {
            let eps = 0.5f64.powi(k);
            let z = Configuration::new(vec![p, p.exp(&(b.e1 * eps)), other]).unwrap();
            let h = energy(&z, &g, &ctx).unwrap().h;
            prop_assert!(h > last);
            last = h;
        }
    }

    #[test]
    fn vector_field_is_hamiltonian(seed in any::<u64>()) {
        let ctx = random_metric(seed, 3, 0.3);
        let mut r = rng(seed ^ 4);
        let z = Configuration::random(&mut r, 4, 0.2);
        let g = VorticityVector::new(vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let x = vector_field(&z, &g, &ctx).unwrap();
        let gr = grad(&z, &g, &ctx).unwrap();
        for _ in 0..4 {
            let w = random_tangent(&z, &mut r);
            let dh: f64 = gr.iter().zip(&w).map(|(a, b)| a.dot(b)).sum();
            prop_assert!((symplectic_form(&z, &g, &ctx, &x, &w) - dh).abs() < 1e-10 * dh.abs().max(1.0));
        }
    }

    #[test]
    fn kappa_times_area_is_minimal_action(a in 1u32..50, b in 1u32..50, c in 1u32..50, area in 0.5f64..20.0) {
        let g = [a as f64, b as f64, c as f64];
        let k = kappa(&g, 1e-9).unwrap().unwrap();
        prop_assert!((minimal_action(&g, area, 1e-9).unwrap() - k * area).abs() < 1e-12 * k * area);
    }

    #[test]
    fn p3_status_survives_homothety(seed in any::<u64>(), c in -0.5f64..0.5) {
        let rho = HarmonicField::random(&mut rng(seed), 2, 0.2);
        let g = VorticityVector::new(vec![1.0, 2.0, 4.0]).unwrap();
        let a = check_p3(&g, &MetricContext::new(rho.clone()), 16).unwrap();
        let b = check_p3(&g, &MetricContext::new(rho.shifted(c)), 16).unwrap();
        prop_assert_eq!(a.status.passed(), b.status.passed());
    }

    #[test]
    fn moser_map_transports_area(seed in any::<u64>()) {
        let rho = volume_matched(&HarmonicField::random(&mut rng(seed), 2, 0.05));
        let map = MoserMap::new(&rho, 32);
        let mut r = rng(seed ^ 5);
        for _ in 0..5 {
            prop_assert!(map.area_defect(&SpherePoint::random(&mut r)) < 1e-6);
        }
    }
}

#[test]
fn round_spectrum_multiplicities() {
    let ev = laplace_spectrum(&HarmonicField::zero(0), 36, 8)
        .unwrap()
        .eigenvalues;
    let want: Vec<f64> = (0..6usize)
        .flat_map(|l| std::iter::repeat_n((l * (l + 1)) as f64, 2 * l + 1))
        .collect();
    assert_eq!(ev.len(), want.len());
    for (a, b) in ev.iter().zip(&want) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    assert_eq!(coefficient_count(5), 36);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn trajectories_ignore_constant_shifts(seed in any::<u64>(), c in -1.0f64..1.0) {
        let rho = HarmonicField::random(&mut rng(seed), 2, 0.3);
        let z = Configuration::random(&mut rng(seed ^ 6), 3, 0.3);
        let g = VorticityVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        // the shifted metric runs the same path with time scaled by e^{2c}
        let scale = (2.0 * c).exp();
        let s = IntegratorSettings { dt: 1e-2, ..Default::default() };
        let sb = IntegratorSettings { dt: 1e-2 * scale, ..s };
        let a = integrate(&z, &g, &MetricContext::new(rho.clone()), &s, 2.0).unwrap();
        let b = integrate(&z, &g, &MetricContext::new(rho.shifted(c)), &sb, 2.0 * scale).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.states.iter().zip(&b.states) {
            prop_assert!(x.max_displacement(y) < 1e-9);
        }
    }

    #[test]
    fn forward_then_backward_returns(seed in any::<u64>()) {
        let ctx = random_metric(seed, 2, 0.3);
        let z = Configuration::random(&mut rng(seed ^ 7), 3, 0.3);
        let g = VorticityVector::new(vec![1.0, -1.0, 2.0]).unwrap();
        let s = IntegratorSettings { dt: 1e-2, ..Default::default() };
        let there = flow(&z, &g, &ctx, &s, 3.0, 300).unwrap();
        let back = flow(&there, &g, &ctx, &s, -3.0, 300).unwrap();
        prop_assert!(back.max_displacement(&z) < 1e-7);
    }

    #[test]
    fn energy_is_conserved(seed in any::<u64>()) {
        let ctx = random_metric(seed, 3, 0.3);
        let z = Configuration::random(&mut rng(seed ^ 8), 3, 0.3);
        let g = VorticityVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        let s = IntegratorSettings { dt: 1e-3, record_every: 100, ..Default::default() };
        let traj = integrate(&z, &g, &ctx, &s, 5.0).unwrap();
        prop_assume!(traj.completed());
        prop_assert!(traj.relative_energy_drift() < 1e-8);
    }

    #[test]
    fn fixed_points_reverify(seed in any::<u64>()) {
        let ctx = random_metric(seed, 2, 0.2);
        let g = VorticityVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        let s = FixedPointSettings { starts: 8, seed, ..Default::default() };
        for rep in find_fixed_points(&g, &ctx, &s).unwrap().reports {
            prop_assert!(grad_norm(&rep.z, &g, &ctx).unwrap() < s.newton_tol);
        }
    }

    #[test]
    fn round_fixed_points_are_rotation_closed(seed in any::<u64>()) {
        let ctx = MetricContext::round();
        let g = VorticityVector::identical(3, 1.0).unwrap();
        let s = FixedPointSettings { starts: 8, seed, ..Default::default() };
        let mut r = rng(seed);
        for rep in find_fixed_points(&g, &ctx, &s).unwrap().reports {
            let moved = rotate(&Rotation::random(&mut r), &rep.z);
            let out = newton_refine(&moved, &g, &ctx, s.newton_tol, s.max_iters).unwrap();
            prop_assert!(out.converged && out.iterations <= 2);
        }
    }

    #[test]
    fn relabelled_fixed_points_are_merged(seed in any::<u64>()) {
        let ctx = random_metric(seed, 2, 0.2);
        let g = VorticityVector::new(vec![1.0, 1.0, 2.0]).unwrap();
        let reports = find_fixed_points(&g, &ctx, &FixedPointSettings { starts: 12, seed, ..Default::default() })
            .unwrap()
            .reports;
        for (i, a) in reports.iter().enumerate() {
            let swapped = Configuration::new(vec![*a.z.point(1), *a.z.point(0), *a.z.point(2)]).unwrap();
            prop_assert!(same_up_to_relabeling(&a.z, &swapped, &g, 1e-9));
            for b in &reports[i + 1..] {
                prop_assert!(!same_up_to_relabeling(&a.z, &b.z, &g, 1e-6));
            }
        }
    }

    #[test]
    fn transversality_margin_is_positive(alpha in DIPOLE_MIN + 0.05..2.0, seed in any::<u64>()) {
        let r = transversality(alpha, 100, seed, Execution::Parallel).unwrap();
        prop_assert!(r.min_margin > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]

    #[test]
    fn ring_orbits_reverify(n in 2usize..4, theta in 0.6f64..1.2) {
        let (z, g) = round_ring(n, theta);
        let ctx = MetricContext::round();
        let w = angular_rate(&z, &g, &ctx, &Vec3::z(), 0).unwrap();
        let s = ShootingSettings::default();
        let orbit = refine_periodic(&z, 2.0 * PI / w.abs(), &g, &ctx, &s).unwrap();
        prop_assert!(reverify_residual(&orbit, &g, &ctx).unwrap() < 2.0 * s.tol);
        let traj = sample_orbit(&orbit, &g, &ctx, 64).unwrap();
        let e0 = traj.h_log[0];
        prop_assert!(traj.h_log.iter().all(|h| (h - e0).abs() < 1e-10 * e0.abs().max(1.0)));
        let base = is_choreography(&orbit, &g, &ctx, &ChoreographySettings::default()).unwrap();
        for phase in [0.13, 0.5] {
            let shifted = ChoreographySettings { phase, ..Default::default() };
            prop_assert_eq!(is_choreography(&orbit, &g, &ctx, &shifted).unwrap().is_choreography, base.is_choreography);
        }
    }

    #[test]
    fn band_minimum_is_the_lowest_minimum(seed in any::<u64>()) {
        let ctx = random_metric(seed, 2, 0.2);
        let g = VorticityVector::new(vec![1.0, 2.0, 1.5]).unwrap();
        let s = BandSettings { grid_size: 60, starts: 6, ..Default::default() };
        let band = c1_c2(0, &g, &ctx, &s).unwrap();
        let fp = FixedPointSettings { starts: 32, seed, ..Default::default() };
        let fps = find_fixed_points(&g, &ctx, &fp).unwrap();
        let tol = 1e-8 + band.dispersion;
        for r in fps.reports.iter().filter(|r| r.morse_index == 0) {
            prop_assert!(band.c1 <= r.energy + tol, "c1 {} above a minimum at {}", band.c1, r.energy);
        }
        // the band minimizer is itself a minimum-type fixed point at level c1
        let m = inner_min(&band.argmin_point, 0, &g, &ctx, &s).unwrap();
        let out = newton_refine(&m.minimizer, &g, &ctx, fp.newton_tol, fp.max_iters).unwrap();
        prop_assert!(out.converged);
        let (_, _, index) = analyze(&out.z, &g, &ctx, fp.kernel_rel_tol).unwrap();
        prop_assert_eq!(index, 0);
        prop_assert!((energy(&out.z, &g, &ctx).unwrap().h - band.c1).abs() < tol);
    }

    #[test]
    fn refined_grids_do_not_raise_c1(seed in any::<u64>()) {
        let ctx = random_metric(seed, 2, 0.2);
        let g = VorticityVector::new(vec![1.0, 2.0]).unwrap();
        let coarse = c1_c2(0, &g, &ctx, &BandSettings { grid_size: 30, starts: 4, ..Default::default() }).unwrap();
        let fine = c1_c2(0, &g, &ctx, &BandSettings { grid_size: 120, starts: 8, ..Default::default() }).unwrap();
        prop_assert!(fine.c1 <= coarse.c1 + 1e-9 + coarse.dispersion.max(fine.dispersion));
    }

    #[test]
    fn separation_points_clear_the_level(seed in any::<u64>(), frac in 0.05f64..0.95) {
        let ctx = random_metric(seed, 2, 0.2);
        let g = VorticityVector::new(vec![1.0, 1.0]).unwrap();
        let s = BandSettings { grid_size: 60, starts: 6, ..Default::default() };
        let band = c1_c2(0, &g, &ctx, &s).unwrap();
        let c = band.c1 + frac * (band.c2 - band.c1);
        let sep = separation_check(c, 0, &g, &ctx, &band, &s).unwrap();
        if let Some(p) = sep.point {
            prop_assert!(inner_min(&p, 0, &g, &ctx, &s).unwrap().value > c);
        }
    }
}
