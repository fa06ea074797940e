use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;

use nvortex::bands::{c1_c2, separation_check, BandReport, BandSettings, SeparationResult};
use nvortex::contact::{
    deformed_contact_check, lie_derivative_check, transversality, ContactStatus,
    DeformedContactReport, LieReport, MoserSettings, TestField, TransversalityReport,
};
use nvortex::dynamics::{integrate, TrajectoryStatus};
use nvortex::equilibria::{
    cluster_vorticity_sums, find_fixed_points, ClusterReport, FixedPointSettings,
};
use nvortex::invariants::{
    check_p3, commensurability, is_thin, kappa, minimal_action, CommensurabilityResult, P3Report,
};
use nvortex::orbits::{
    angular_rate, is_choreography, perverse_test, refine_by_continuation, refine_periodic,
    reverify_residual, sample_orbit, ChoreographyReport, ChoreographySettings, PeriodicOrbit,
    PerverseReport, ShootingSettings,
};
use nvortex::spectral::laplace_spectrum;
use nvortex::sphere::Vec3;
use nvortex::{Execution, SpectrumReport};

use crate::artifact::Artifacts;
use crate::config::{LoadedConfig, OrbitGuess};
use crate::error::CliError;

fn field_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

pub fn simulate(cfg: &LoadedConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let gammas = cfg.vorticities()?;
    let ctx = cfg.context()?;
    let z0 = cfg.initial(gammas.len())?;
    let settings = cfg.integrator()?;
    let t_end = cfg.config.simulate.t_end;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(field_err("simulate.t_end", "must be a positive number"));
    }
    let traj = integrate(&z0, &gammas, &ctx, &settings, t_end)?;
    let status = serde_json::to_string(&traj.status).expect("status serializes");
    out.csv("simulate.csv", &[format!("status {status}")], |w| {
        traj.write_csv(w)
    })?;
    match traj.status {
        TrajectoryStatus::Completed => Ok(()),
        _ => Err(CliError::Status(format!("trajectory truncated: {status}"))),
    }
}

pub fn fixed_points(cfg: &LoadedConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let gammas = cfg.vorticities()?;
    let ctx = cfg.context()?;
    let s = &cfg.config.fixed_points;
    let settings = FixedPointSettings {
        starts: s.starts,
        seed: cfg.config.seed,
        newton_tol: s.newton_tol,
        max_iters: s.max_iters,
        min_start_chord: s.min_start_chord,
        dedup_tol: s.dedup_tol,
        kernel_rel_tol: s.kernel_rel_tol,
        exec: Execution::Parallel,
    };
    if settings.starts == 0 {
        return Err(field_err("fixed_points.starts", "must be at least 1"));
    }
    let search = find_fixed_points(&gammas, &ctx, &settings)?;
    out.json("fixed_points.json", &search)
}

#[derive(Serialize)]
struct VorticityReport {
    vorticities: Vec<f64>,
    volume: f64,
    p1: ClusterReport,
    commensurability: Option<CommensurabilityResult>,
    kappa: Option<f64>,
    minimal_action: Option<f64>,
    thin: Option<Vec<bool>>,
    p3: P3Report,
    warnings: Vec<String>,
}

/// Integer coordinates above this make the rational detection fragile.
const FRAGILE_COORDINATE: u64 = 1000;

pub fn vorticity_report(cfg: &LoadedConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let gammas = cfg.vorticities()?;
    let ctx = cfg.context()?;
    let s = &cfg.config.vorticity_report;
    if !(s.tol >= 0.0 && s.tol < 1.0) {
        return Err(field_err("vorticity_report.tol", "must lie in [0, 1)"));
    }
    if s.k_eigs == 0 {
        return Err(field_err("vorticity_report.k_eigs", "must be at least 1"));
    }
    let g = gammas.as_slice();
    let p1 = cluster_vorticity_sums(&gammas).map_err(|e| field_err("vorticities", e))?;
    let mut warnings = Vec::new();
    let (comm, kap, action, thin) = if gammas.all_positive() {
        let c = commensurability(g, s.tol)?;
        let kap = kappa(g, s.tol)?;
        let action = minimal_action(g, ctx.volume(), s.tol)?;
        let thin = if g.len() >= 2 {
            Some(
                (0..g.len())
                    .map(|k| is_thin(k, &gammas, s.tol))
                    .collect::<Result<Vec<_>, _>>()?,
            )
        } else {
            None
        };
        if c.l.iter().any(|&l| l > FRAGILE_COORDINATE) {
            warnings.push(format!(
                "integer coordinates up to {} at tolerance {:e}; thinness may flip under small changes of the vorticities",
                c.l.iter().max().unwrap_or(&0),
                s.tol
            ));
        }
        if thin.as_ref().is_some_and(|t| t.iter().any(|x| !x)) && !c.commensurable {
            warnings.push("incommensurable vorticities: every thinness verdict rests on the rational detection".into());
        }
        (Some(c), kap, Some(action), thin)
    } else {
        warnings.push(
            "vorticities are not all positive; commensurability, action and thinness skipped"
                .into(),
        );
        (None, None, None, None)
    };
    let p3 = check_p3(&gammas, &ctx, s.k_eigs)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    out.json(
        "vorticity_report.json",
        &VorticityReport {
            vorticities: g.to_vec(),
            volume: ctx.volume(),
            p1,
            commensurability: comm,
            kappa: kap,
            minimal_action: action,
            thin,
            p3,
            warnings,
        },
    )
}

#[derive(Serialize)]
struct LevelSeparation {
    level: f64,
    #[serde(flatten)]
    result: SeparationResult,
}

#[derive(Serialize)]
struct BandSummary {
    k: usize,
    c1: f64,
    c2: f64,
    argmin_point: nvortex::SpherePoint,
    argmax_point: nvortex::SpherePoint,
    grid_size: usize,
    starts: usize,
    dispersion: f64,
    near_collision: bool,
    separations: Vec<LevelSeparation>,
}

impl BandSummary {
    fn new(r: &BandReport, separations: Vec<LevelSeparation>) -> Self {
        Self {
            k: r.k,
            c1: r.c1,
            c2: r.c2,
            argmin_point: r.argmin_point,
            argmax_point: r.argmax_point,
            grid_size: r.grid_size,
            starts: r.starts,
            dispersion: r.dispersion,
            near_collision: r.near_collision,
            separations,
        }
    }
}

pub fn energy_band(cfg: &LoadedConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let gammas = cfg.vorticities()?;
    let ctx = cfg.context()?;
    let s = &cfg.config.energy_band;
    if s.k >= gammas.len() {
        return Err(field_err(
            "energy_band.k",
            format!("index {} out of range for {} vortices", s.k, gammas.len()),
        ));
    }
    if !gammas.all_positive() {
        return Err(field_err(
            "vorticities",
            "the energy band needs positive vorticities",
        ));
    }
    if s.grid_size == 0 || s.starts == 0 {
        return Err(field_err(
            "energy_band",
            "grid_size and starts must be at least 1",
        ));
    }
    let settings = BandSettings {
        grid_size: s.grid_size,
        starts: s.starts,
        seed: cfg.config.seed,
        grad_tol: s.grad_tol,
        max_iters: s.max_iters,
        polish: s.polish,
        exec: Execution::Parallel,
    };
    let report = c1_c2(s.k, &gammas, &ctx, &settings)?;
    let separations = s
        .levels
        .iter()
        .map(|&c| {
            separation_check(c, s.k, &gammas, &ctx, &report, &settings)
                .map(|result| LevelSeparation { level: c, result })
        })
        .collect::<Result<Vec<_>, _>>()?;
    out.csv("energy_band.csv", &[format!("k {}", s.k)], |w| {
        writeln!(w, "x,y,z,inner_min")?;
        for n in &report.nodes {
            let c = n.eta.coords();
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e}",
                c.x, c.y, c.z, n.inner_min
            )?;
        }
        Ok(())
    })?;
    out.json("energy_band.json", &BandSummary::new(&report, separations))
}

#[derive(Serialize)]
struct OrbitReport {
    orbit: PeriodicOrbit,
    /// Residual re-measured with half the step.
    half_step_residual: f64,
    choreography: ChoreographyReport,
    perverse: Option<PerverseReport>,
}

pub fn orbit(cfg: &LoadedConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let gammas = cfg.vorticities()?;
    let rho = cfg.rho()?;
    let ctx = nvortex::MetricContext::new(rho.clone());
    let z0 = cfg.initial(gammas.len())?;
    let s = &cfg.config.orbit;
    if s.samples < 2 {
        return Err(field_err("orbit.samples", "must be at least 2"));
    }
    if s.continuation_stages == 0 {
        return Err(field_err("orbit.continuation_stages", "must be at least 1"));
    }
    if let Some(p) = s.period {
        if !(p > 0.0 && p.is_finite()) {
            return Err(field_err("orbit.period", "must be a positive number"));
        }
    }
    let period = match (s.guess, s.period) {
        (_, Some(p)) => p,
        (OrbitGuess::Initial, None) => {
            return Err(field_err(
                "orbit.period",
                "required when guess = \"initial\"",
            ))
        }
        (OrbitGuess::RelativeEquilibrium, None) => {
            let axis = Vec3::new(s.axis[0], s.axis[1], s.axis[2]);
            if !(axis.norm() > 0.0) {
                return Err(field_err("orbit.axis", "must be nonzero"));
            }
            // the guess is built on the round sphere when continuing
            let guess_ctx = if s.continuation_stages > 1 {
                nvortex::MetricContext::round()
            } else {
                ctx.clone()
            };
            let w = angular_rate(&z0, &gammas, &guess_ctx, &axis, 0)?;
            if !(w.abs() > 1e-12) {
                return Err(field_err(
                    "orbit.axis",
                    "the initial configuration does not rotate about this axis",
                ));
            }
            2.0 * PI / w.abs()
        }
    };
    let settings = ShootingSettings {
        dt: s.dt,
        tol: s.tol,
        max_iters: s.max_iters,
        ..Default::default()
    };
    if !(settings.dt > 0.0 && settings.tol > 0.0) {
        return Err(field_err("orbit", "dt and tol must be positive"));
    }
    let orbit = if s.continuation_stages > 1 {
        refine_by_continuation(&z0, period, &gammas, &rho, s.continuation_stages, &settings)?
    } else {
        refine_periodic(&z0, period, &gammas, &ctx, &settings)?
    };
    let half_step_residual = reverify_residual(&orbit, &gammas, &ctx)?;
    let choreography = is_choreography(
        &orbit,
        &gammas,
        &ctx,
        &ChoreographySettings {
            tol: s.choreography_tol,
            ..Default::default()
        },
    )?;
    let perverse = if gammas.all_identical() {
        None
    } else {
        Some(perverse_test(&orbit, &gammas, &ctx, s.samples, s.tol)?)
    };
    let traj = sample_orbit(&orbit, &gammas, &ctx, s.samples)?;
    let head = serde_json::json!({ "T": orbit.period, "residual": orbit.residual, "energy": orbit.energy });
    out.csv("orbit.csv", &[head.to_string()], |w| traj.write_csv(w))?;
    out.json(
        "orbit.json",
        &OrbitReport {
            orbit,
            half_step_residual,
            choreography,
            perverse,
        },
    )
}

#[derive(Serialize)]
struct ContactReport {
    transversality: Vec<TransversalityReport>,
    liouville: LieReport,
    rotation_control: LieReport,
    deformed: Option<DeformedContactReport>,
}

pub fn contact(cfg: &LoadedConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let s = &cfg.config.contact;
    let seed = cfg.config.seed;
    if s.samples == 0 || s.lie_samples == 0 {
        return Err(field_err(
            "contact",
            "samples and lie_samples must be at least 1",
        ));
    }
    if s.t_steps.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(field_err("contact.t_steps", "every step must be positive"));
    }
    let transversality = s
        .levels
        .iter()
        .map(|&a| {
            transversality(a, s.samples, seed, Execution::Parallel)
                .map_err(|e| field_err("contact.levels", e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let lie = |kind| {
        lie_derivative_check(
            s.lie_level,
            s.lie_samples,
            &s.t_steps,
            kind,
            seed,
            Execution::Parallel,
        )
        .map_err(|e| field_err("contact.lie_level", e))
    };
    let liouville = lie(TestField::Liouville)?;
    let rotation_control = lie(TestField::Rotation)?;
    let deformed = match s.deformed_level {
        Some(c) => {
            let rho = cfg.rho()?;
            let settings = MoserSettings {
                steps: s.moser_steps.max(1),
                seed,
                ..Default::default()
            };
            Some(deformed_contact_check(&rho, c, &settings)?)
        }
        None => None,
    };
    let inconclusive = deformed
        .as_ref()
        .is_some_and(|d| d.status == ContactStatus::Inconclusive);
    out.json(
        "contact.json",
        &ContactReport {
            transversality,
            liouville,
            rotation_control,
            deformed,
        },
    )?;
    if inconclusive {
        return Err(CliError::Status(
            "deformed contact check is inconclusive".into(),
        ));
    }
    Ok(())
}

pub fn spectrum(cfg: &LoadedConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let s = &cfg.config.spectrum;
    if s.k == 0 {
        return Err(field_err("spectrum.k", "must be at least 1"));
    }
    let l_solve = s.l_solve.unwrap_or_else(|| {
        let mut l = 0;
        while (l + 1) * (l + 1) < s.k {
            l += 1;
        }
        l + 4
    });
    let report: SpectrumReport =
        laplace_spectrum(&cfg.rho()?, s.k, l_solve).map_err(|e| field_err("spectrum", e))?;
    out.json("spectrum.json", &report)
}
