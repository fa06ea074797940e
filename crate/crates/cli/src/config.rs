//! Experiment configuration (TOML) and its validation.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use nvortex::dynamics::IntegratorSettings;
use nvortex::{Configuration, HarmonicField, MetricContext, SpherePoint, VorticityVector};

use crate::error::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub vorticities: Vec<f64>,
    #[serde(default)]
    pub metric: MetricSection,
    pub initial: Option<InitialSection>,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub fixed_points: FixedPointSection,
    #[serde(default)]
    pub vorticity_report: VorticityReportSection,
    #[serde(default)]
    pub energy_band: EnergyBandSection,
    #[serde(default)]
    pub orbit: OrbitSection,
    #[serde(default)]
    pub contact: ContactSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub plot: PlotSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomMetric {
    pub l_max: usize,
    pub amplitude: f64,
}

/// At most one source; none means the round sphere.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSection {
    pub coefficients: Option<Vec<(usize, i64, f64)>>,
    pub file: Option<PathBuf>,
    pub random: Option<RandomMetric>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomStart {
    #[serde(default = "default_min_chord")]
    pub min_chord: f64,
}

fn default_min_chord() -> f64 {
    0.2
}

/// Exactly one of `points`, `angles` or `random`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub points: Option<Vec<[f64; 3]>>,
    /// `[colatitude, longitude]` pairs in radians.
    pub angles: Option<Vec<[f64; 2]>>,
    pub random: Option<RandomStart>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub t_end: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { t_end: 10.0 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointSection {
    pub starts: usize,
    pub newton_tol: f64,
    pub max_iters: usize,
    pub min_start_chord: f64,
    pub dedup_tol: f64,
    pub kernel_rel_tol: f64,
}

impl Default for FixedPointSection {
    fn default() -> Self {
        let d = nvortex::equilibria::FixedPointSettings::default();
        Self {
            starts: d.starts,
            newton_tol: d.newton_tol,
            max_iters: d.max_iters,
            min_start_chord: d.min_start_chord,
            dedup_tol: d.dedup_tol,
            kernel_rel_tol: d.kernel_rel_tol,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VorticityReportSection {
    pub tol: f64,
    pub k_eigs: usize,
}

impl Default for VorticityReportSection {
    fn default() -> Self {
        Self {
            tol: nvortex::invariants::DEFAULT_TOL,
            k_eigs: 25,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyBandSection {
    pub k: usize,
    pub grid_size: usize,
    pub starts: usize,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub polish: bool,
    /// Levels `c` for the separation check.
    pub levels: Vec<f64>,
}

impl Default for EnergyBandSection {
    fn default() -> Self {
        let d = nvortex::bands::BandSettings::default();
        Self {
            k: 0,
            grid_size: d.grid_size,
            starts: d.starts,
            grad_tol: d.grad_tol,
            max_iters: d.max_iters,
            polish: d.polish,
            levels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitGuess {
    /// `[initial]` with the given `period`.
    Initial,
    /// `[initial]` with the period of its rotation about `axis`.
    RelativeEquilibrium,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitSection {
    pub guess: OrbitGuess,
    pub period: Option<f64>,
    pub axis: [f64; 3],
    pub continuation_stages: usize,
    pub dt: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub samples: usize,
    pub choreography_tol: f64,
}

impl Default for OrbitSection {
    fn default() -> Self {
        let d = nvortex::orbits::ShootingSettings::default();
        Self {
            guess: OrbitGuess::RelativeEquilibrium,
            period: None,
            axis: [0.0, 0.0, 1.0],
            continuation_stages: 1,
            dt: d.dt,
            tol: d.tol,
            max_iters: d.max_iters,
            samples: 256,
            choreography_tol: 1e-6,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactSection {
    pub levels: Vec<f64>,
    pub samples: usize,
    pub lie_level: f64,
    pub lie_samples: usize,
    pub t_steps: Vec<f64>,
    /// Level for the deformed check against `[metric]`; skipped when absent.
    pub deformed_level: Option<f64>,
    pub moser_steps: usize,
}

impl Default for ContactSection {
    fn default() -> Self {
        Self {
            levels: vec![0.0, 0.2, 0.5],
            samples: 1000,
            lie_level: 0.3,
            lie_samples: 8,
            t_steps: vec![2e-3, 1e-3, 1e-4],
            deformed_level: None,
            moser_steps: 32,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub k: usize,
    pub l_solve: Option<usize>,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            k: 9,
            l_solve: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotSection {
    pub input: Option<PathBuf>,
    pub size: u32,
    /// Viewing direction; the visible hemisphere faces it.
    pub view: [f64; 3],
}

impl Default for PlotSection {
    fn default() -> Self {
        Self {
            input: None,
            size: 640,
            view: [1.0, 1.0, 1.0],
        }
    }
}

/// A parsed config together with the digest of its source text.
#[derive(Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub sha256: String,
    pub base_dir: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    parse(&text, path.parent().unwrap_or(Path::new(".")))
}

pub fn parse(text: &str, base_dir: &Path) -> Result<LoadedConfig, CliError> {
    let config: ExperimentConfig =
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(LoadedConfig {
        config,
        sha256: sha256_hex(text.as_bytes()),
        base_dir: base_dir.to_path_buf(),
    })
}

fn field_err(field: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {e}"))
}

impl LoadedConfig {
    pub fn vorticities(&self) -> Result<VorticityVector, CliError> {
        if self.config.vorticities.is_empty() {
            return Err(field_err(
                "vorticities",
                "at least one vorticity is required",
            ));
        }
        VorticityVector::new(self.config.vorticities.clone())
            .map_err(|e| field_err("vorticities", e))
    }

    pub fn rho(&self) -> Result<HarmonicField, CliError> {
        let m = &self.config.metric;
        let sources = [
            m.coefficients.is_some(),
            m.file.is_some(),
            m.random.is_some(),
        ];
        if sources.iter().filter(|&&s| s).count() > 1 {
            return Err(field_err(
                "metric",
                "give at most one of coefficients, file, random",
            ));
        }
        if let Some(c) = &m.coefficients {
            return HarmonicField::from_triples(c).map_err(|e| field_err("metric.coefficients", e));
        }
        if let Some(f) = &m.file {
            let path = self.base_dir.join(f);
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(path.clone(), e))?;
            return HarmonicField::parse(&text).map_err(|e| field_err("metric.file", e));
        }
        if let Some(r) = &m.random {
            if !(r.amplitude >= 0.0 && r.amplitude.is_finite()) {
                return Err(field_err(
                    "metric.random.amplitude",
                    "must be a finite non-negative number",
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
            return Ok(HarmonicField::random(&mut rng, r.l_max, r.amplitude));
        }
        Ok(HarmonicField::zero(0))
    }

    pub fn context(&self) -> Result<MetricContext, CliError> {
        Ok(MetricContext::new(self.rho()?))
    }

    pub fn initial(&self, n: usize) -> Result<Configuration, CliError> {
        let Some(init) = &self.config.initial else {
            return Err(field_err("initial", "section is required for this command"));
        };
        let sources = [
            init.points.is_some(),
            init.angles.is_some(),
            init.random.is_some(),
        ];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(field_err(
                "initial",
                "give exactly one of points, angles, random",
            ));
        }
        let z = if let Some(p) = &init.points {
            let pts = p
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    SpherePoint::from_xyz(v[0], v[1], v[2])
                        .map_err(|e| field_err(&format!("initial.points[{i}]"), e))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Configuration::new(pts).map_err(|e| field_err("initial.points", e))?
        } else if let Some(a) = &init.angles {
            Configuration::new(
                a.iter()
                    .map(|v| SpherePoint::from_angles(v[0], v[1]))
                    .collect(),
            )
            .map_err(|e| field_err("initial.angles", e))?
        } else {
            let r = init.random.as_ref().expect("checked above");
            if !(r.min_chord >= 0.0 && r.min_chord < 1.0) {
                return Err(field_err("initial.random.min_chord", "must lie in [0, 1)"));
            }
            // offset so the start does not reuse the metric stream
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(1));
            Configuration::random(&mut rng, n, r.min_chord)
        };
        if z.len() != n {
            return Err(field_err(
                "initial",
                format!("{} points for {n} vorticities", z.len()),
            ));
        }
        Ok(z)
    }

    pub fn integrator(&self) -> Result<IntegratorSettings, CliError> {
        let s = self.config.integrator;
        s.validate().map_err(|e| field_err("integrator", e))?;
        Ok(s)
    }
}
