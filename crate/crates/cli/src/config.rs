//! Simulation configuration: a single TOML file, validated at load time.

use dvft::rod::{InitialCondition, Potential, RodConfig, RodGrid, UniformMaterial};
use dvft::so3::{exp, Rotation};
use dvft::variational::SolverOptions;
use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub steps: usize,
    pub grid: GridSection,
    pub material: MaterialSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub ds: f64,
    pub dt: f64,
    /// Number of elements of a closed rod (`i − j` taken mod `2·s_period`).
    pub s_period: Option<usize>,
    /// Number of elements of an open rod; ignored when `s_period` is set.
    pub length: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    pub rho: f64,
    #[serde(rename = "J")]
    pub inertia: [f64; 3],
    #[serde(rename = "C1")]
    pub c1: [[f64; 3]; 3],
    #[serde(rename = "C2")]
    pub c2: [[f64; 3]; 3],
    #[serde(default)]
    pub e: [f64; 3],
    #[serde(default)]
    pub potential: PotentialSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialSection {
    #[default]
    None,
    Linear { g: [f64; 3] },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSection {
    Rest {
        #[serde(default)]
        r: [f64; 3],
        /// Rotation vector of the common frame.
        #[serde(default)]
        rotation: [f64; 3],
    },
    Translating { w: [f64; 3] },
    Perturbed {
        amplitude: f64,
        seed: u64,
        #[serde(default)]
        w: [f64; 3],
    },
    /// A CSV file in the trajectory format (`s` and `t` columns are ignored),
    /// relative to the config file.
    Table { path: PathBuf },
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection::Rest {
            r: [0.0; 3],
            rotation: [0.0; 3],
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    SolverOptions::default().tolerance
}

fn default_max_iter() -> usize {
    SolverOptions::default().max_iter
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_trajectory")]
    pub trajectory: PathBuf,
    #[serde(default = "default_report")]
    pub report: PathBuf,
}

fn default_trajectory() -> PathBuf {
    "trajectory.csv".into()
}

fn default_report() -> PathBuf {
    "conservation.json".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            trajectory: default_trajectory(),
            report: default_report(),
        }
    }
}

/// Everything needed to run a simulation.
#[derive(Debug)]
pub struct LoadedConfig {
    pub steps: usize,
    pub grid: RodGrid,
    pub length: usize,
    pub material: UniformMaterial,
    pub potential: Potential,
    pub initial: InitialCondition,
    pub solver: SolverOptions,
    pub output: OutputSection,
}

fn mat3(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| m[r][c])
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Header shared by trajectory files and initial-condition tables.
pub const CSV_HEADER: [&str; 16] = [
    "i", "j", "s", "t", "rx", "ry", "rz", "R00", "R01", "R02", "R10", "R11", "R12", "R20", "R21", "R22",
];

fn read_table(path: &Path) -> Result<Vec<((i64, i64), RodConfig)>, ConfigError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| invalid(format!("initial.path: {e}")))?;
    let headers = reader.headers().map_err(|e| invalid(format!("initial.path: {e}")))?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(invalid("initial.path: unexpected CSV header"));
    }
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| invalid(format!("initial.path: {e}")))?;
        let num = |k: usize| -> Result<f64, ConfigError> {
            rec[k]
                .trim()
                .parse::<f64>()
                .map_err(|_| invalid(format!("initial.path: row {}: bad value in column {}", line + 1, CSV_HEADER[k])))
        };
        let int = |k: usize| -> Result<i64, ConfigError> {
            rec[k]
                .trim()
                .parse::<i64>()
                .map_err(|_| invalid(format!("initial.path: row {}: bad integer in column {}", line + 1, CSV_HEADER[k])))
        };
        let r = Vector3::new(num(4)?, num(5)?, num(6)?);
        let m = Matrix3::from_fn(|a, b| num(7 + 3 * a + b).unwrap_or(f64::NAN));
        let rot = Rotation::from_matrix(m)
            .map_err(|e| invalid(format!("initial.path: row {}: {e}", line + 1)))?;
        rows.push(((int(0)?, int(1)?), RodConfig::new(r, rot)));
    }
    Ok(rows)
}

impl SimulationConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Validates every section; `base_dir` resolves relative table paths.
    pub fn load(self, base_dir: &Path) -> Result<LoadedConfig, ConfigError> {
        let g = &self.grid;
        let grid = RodGrid::new(g.ds, g.dt, g.s_period).map_err(|e| invalid(format!("grid: {e}")))?;
        let length = match (g.s_period, g.length) {
            (Some(m), _) => m,
            (None, Some(l)) if l > 0 => l,
            _ => return Err(invalid("grid.length: required (and positive) for open rods")),
        };
        let m = &self.material;
        let material = UniformMaterial::new(
            m.rho,
            Vector3::from(m.inertia),
            mat3(&m.c1),
            mat3(&m.c2),
            Vector3::from(m.e),
        )
        .map_err(|e| invalid(e.to_string().trim_start_matches("invalid material: ").to_string()))?;
        let potential = match m.potential {
            PotentialSection::None => Potential::None,
            PotentialSection::Linear { g } => {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(invalid("material.potential.g not finite"));
                }
                Potential::Linear(Vector3::from(g))
            }
        };
        let initial = match &self.initial {
            InitialSection::Rest { r, rotation } => InitialCondition::Rest {
                r: Vector3::from(*r),
                rot: exp(&Vector3::from(*rotation)),
            },
            InitialSection::Translating { w } => InitialCondition::Translating { w: Vector3::from(*w) },
            InitialSection::Perturbed { amplitude, seed, w } => {
                if !(*amplitude >= 0.0 && amplitude.is_finite()) {
                    return Err(invalid("initial.amplitude must be nonnegative"));
                }
                InitialCondition::Perturbed {
                    amplitude: *amplitude,
                    seed: *seed,
                    w: Vector3::from(*w),
                }
            }
            InitialSection::Table { path } => InitialCondition::Table(read_table(&base_dir.join(path))?),
        };
        if !(self.solver.tol > 0.0) {
            return Err(invalid("solver.tol must be positive"));
        }
        if self.solver.max_iter == 0 {
            return Err(invalid("solver.max_iter must be positive"));
        }
        let solver = SolverOptions {
            tolerance: self.solver.tol,
            max_iter: self.solver.max_iter,
            ..SolverOptions::default()
        };
        Ok(LoadedConfig {
            steps: self.steps,
            grid,
            length,
            material,
            potential,
            initial,
            solver,
            output: self.output,
        })
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    SimulationConfig::from_toml(&text)?.load(base)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
steps = 3
[grid]
ds = 0.1
dt = 0.02
s_period = 8
[material]
rho = 1.0
J = [1.0, 1.0, 1.0]
C1 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
C2 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
"#;

    #[test]
    fn defaults_and_sections() {
        let cfg = SimulationConfig::from_toml(BASE).unwrap().load(Path::new(".")).unwrap();
        assert_eq!(cfg.length, 8);
        assert!(matches!(cfg.potential, Potential::None));
        assert!(matches!(cfg.initial, InitialCondition::Rest { .. }));
        assert_eq!(cfg.output.trajectory, PathBuf::from("trajectory.csv"));
        let text = format!("{BASE}[material.potential]\nkind = \"linear\"\ng = [0.0, 0.0, -9.81]\n");
        let cfg = SimulationConfig::from_toml(&text).unwrap().load(Path::new(".")).unwrap();
        assert!(matches!(cfg.potential, Potential::Linear(_)));
    }

    #[test]
    fn rejects_bad_material_and_unknown_keys() {
        let text = BASE.replace("C1 = [[1.0, 0.0, 0.0]", "C1 = [[1.0, 0.5, 0.0]");
        let err = SimulationConfig::from_toml(&text).unwrap().load(Path::new(".")).unwrap_err();
        assert_eq!(err.to_string(), "material.C1 not symmetric");
        let text = format!("{BASE}bogus = 1\n");
        assert!(matches!(SimulationConfig::from_toml(&text), Err(ConfigError::Parse(_))));
        let text = BASE.replace("s_period = 8", "");
        let err = SimulationConfig::from_toml(&text).unwrap().load(Path::new(".")).unwrap_err();
        assert!(err.to_string().starts_with("grid.length"));
    }
}
