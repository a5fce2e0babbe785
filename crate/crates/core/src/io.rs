//! Model files in, CSV tables out.
//!
//! A model file is TOML with a fixed set of keys; unknown keys are rejected.
//! See `docs/model-format.md` for the grammar. Output tables write every float
//! as `{:.16e}` (17 significant digits), which reloads bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregator::Aggregator;
use crate::error::{DpError, Result};
use crate::families::{
    Additive, AdditiveParams, Ambiguity, AmbiguityParams, EpsteinZin, EzParams, EzRegime, Family, NarrowFraming,
    NarrowFramingParams, RiskSensitive, RiskSensitiveParams,
};
use crate::model::{ModelBuilder, ModelSpec};
use crate::solver::{residual_ratios, SolveReport, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::unbounded::WeightSpec;

/// Version written by [`save_model`] and the only one accepted by [`parse_model`].
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub grids: Grids,
    #[serde(default)]
    pub feasibility: Feasibility,
    /// `successor[s][a]`; omitted means `successor(s, a) = a`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub successor: Option<Vec<Vec<usize>>>,
    /// `kernel[z][z']`, rows summing to one.
    pub kernel: Vec<Vec<f64>>,
    /// `reward[s][a][z]`.
    pub reward: Vec<Vec<Vec<f64>>>,
    /// `gamble_utility[s][a][z]`, used by narrow framing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamble_utility: Option<Vec<Vec<Vec<f64>>>>,
    pub family: FamilyBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightBlock>,
    #[serde(default)]
    pub solver: SolverBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    pub s: Vec<f64>,
    pub z: Vec<f64>,
    pub a: Vec<f64>,
}

/// `"all"` or a list of allowed `[s, a]` index pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Feasibility {
    Keyword(String),
    Pairs(Vec<[usize; 2]>),
}

impl Default for Feasibility {
    fn default() -> Self {
        Feasibility::Keyword("all".to_string())
    }
}

impl Feasibility {
    fn table(&self, n_s: usize, n_a: usize) -> Result<Vec<Vec<bool>>> {
        match self {
            Feasibility::Keyword(k) if k == "all" => Ok(vec![vec![true; n_a]; n_s]),
            Feasibility::Keyword(k) => Err(DpError::Parse(format!(
                "feasibility must be \"all\" or a list of [s, a] pairs, got \"{k}\""
            ))),
            Feasibility::Pairs(pairs) => {
                let mut table = vec![vec![false; n_a]; n_s];
                for &[s, a] in pairs {
                    if s >= n_s || a >= n_a {
                        return Err(DpError::InvalidModel(format!(
                            "feasible pair [{s}, {a}] is out of range for {n_s} states and {n_a} actions"
                        )));
                    }
                    table[s][a] = true;
                }
                Ok(table)
            }
        }
    }

    fn from_table(table: &[Vec<bool>]) -> Self {
        if table.iter().flatten().all(|&f| f) {
            return Feasibility::default();
        }
        let pairs = table
            .iter()
            .enumerate()
            .flat_map(|(s, row)| row.iter().enumerate().filter(|(_, &f)| f).map(move |(a, _)| [s, a]))
            .collect();
        Feasibility::Pairs(pairs)
    }
}

/// Preference family and its parameters, selected by `name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilyBlock {
    Additive {
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eps_margin: Option<f64>,
    },
    EpsteinZin {
        beta: f64,
        rho: f64,
        gamma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        regime: Option<EzRegime>,
    },
    RiskSensitive {
        beta: f64,
        theta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
    },
    Ambiguity {
        beta: f64,
        rho: f64,
        gamma: f64,
        eta: f64,
        /// `kernels[theta][z][z']`.
        kernels: Vec<Vec<Vec<f64>>>,
        /// `mu[z][theta]`.
        mu: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
    },
    NarrowFraming {
        beta: f64,
        rho: f64,
        gamma: f64,
    },
}

impl FamilyBlock {
    pub fn build(&self) -> Result<Family> {
        Ok(match self.clone() {
            FamilyBlock::Additive { beta, eps_margin } => Additive::new(AdditiveParams { beta, eps_margin })?.into(),
            FamilyBlock::EpsteinZin {
                beta,
                rho,
                gamma,
                delta,
                regime,
            } => EpsteinZin::new(EzParams {
                beta,
                rho,
                gamma,
                delta,
                regime,
            })?
            .into(),
            FamilyBlock::RiskSensitive { beta, theta, delta } => {
                RiskSensitive::new(RiskSensitiveParams { beta, theta, delta })?.into()
            }
            FamilyBlock::Ambiguity {
                beta,
                rho,
                gamma,
                eta,
                kernels,
                mu,
                delta,
            } => Ambiguity::new(AmbiguityParams {
                beta,
                rho,
                gamma,
                eta,
                kernels,
                mu,
                delta,
            })?
            .into(),
            FamilyBlock::NarrowFraming { beta, rho, gamma } => {
                NarrowFraming::new(NarrowFramingParams { beta, rho, gamma })?.into()
            }
        })
    }

    /// Replaces the bracket slack (the strict margin for the additive family).
    /// Narrow framing derives its bracket from a root search and ignores it.
    pub fn set_delta(&mut self, value: f64) {
        match self {
            FamilyBlock::Additive { eps_margin, .. } => *eps_margin = Some(value),
            FamilyBlock::EpsteinZin { delta, .. }
            | FamilyBlock::RiskSensitive { delta, .. }
            | FamilyBlock::Ambiguity { delta, .. } => *delta = Some(value),
            FamilyBlock::NarrowFraming { .. } => {}
        }
    }

    /// EZ parameters when this is an Epstein-Zin block.
    pub fn ez_params(&self) -> Option<EzParams> {
        match *self {
            FamilyBlock::EpsteinZin {
                beta,
                rho,
                gamma,
                delta,
                regime,
            } => Some(EzParams {
                beta,
                rho,
                gamma,
                delta,
                regime,
            }),
            _ => None,
        }
    }
}

/// Weight function and growth constants for the weighted solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightBlock {
    /// One entry per state, ordered `s * n_z + z`.
    pub kappa: Vec<f64>,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub c: f64,
    pub d: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl From<&WeightBlock> for WeightSpec {
    fn from(w: &WeightBlock) -> Self {
        WeightSpec {
            kappa: w.kappa.clone(),
            big_m: w.m,
            l: w.l,
            c: w.c,
            d: w.d,
            delta: w.delta,
        }
    }
}

impl From<&WeightSpec> for WeightBlock {
    fn from(w: &WeightSpec) -> Self {
        WeightBlock {
            kappa: w.kappa.clone(),
            l: w.l,
            m: w.big_m,
            c: w.c,
            d: w.d,
            delta: w.delta,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    /// Overrides the family's bracket slack.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Seed for the sampled assumption checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SolverBlock {
    pub fn tol(&self) -> f64 {
        self.tol.unwrap_or(DEFAULT_TOL)
    }

    pub fn max_iter(&self) -> usize {
        self.max_iter.unwrap_or(DEFAULT_MAX_ITER)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// A validated model file.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: ModelSpec,
    pub family: Family,
    pub weight: Option<WeightSpec>,
    pub solver: SolverBlock,
    /// The document as read, kept for saving and for parameter overrides.
    pub file: ModelFile,
}

impl LoadedModel {
    /// Rebuilds the family with a new bracket slack.
    pub fn override_delta(&mut self, delta: f64) -> Result<()> {
        self.file.family.set_delta(delta);
        self.family = self.file.family.build()?;
        Ok(())
    }
}

impl ModelFile {
    /// Describes an in-memory model.
    pub fn from_parts(
        model: &ModelSpec,
        family: FamilyBlock,
        weight: Option<&WeightSpec>,
        solver: SolverBlock,
    ) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            grids: Grids {
                s: model.s_grid().to_vec(),
                z: model.z_grid().to_vec(),
                a: model.a_grid().to_vec(),
            },
            feasibility: Feasibility::from_table(&model.feasibility_table()),
            successor: (!model.has_identity_successor()).then(|| model.successor_table()),
            kernel: model.kernel_table(),
            reward: model.reward_table(),
            gamble_utility: model.gamble_table(),
            family,
            weight: weight.map(WeightBlock::from),
            solver,
        }
    }

    /// Validates every invariant and builds the model objects.
    pub fn resolve(self) -> Result<LoadedModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(DpError::Parse(format!(
                "unsupported format_version {}, expected {FORMAT_VERSION}",
                self.format_version
            )));
        }
        let (n_s, n_a) = (self.grids.s.len(), self.grids.a.len());
        let feasible = self.feasibility.table(n_s, n_a)?;
        let mut builder = ModelBuilder::new(self.grids.s.clone(), self.grids.z.clone(), self.grids.a.clone())
            .kernel(self.kernel.clone())
            .reward(self.reward.clone())
            .feasible(feasible);
        if let Some(succ) = &self.successor {
            builder = builder.successor(succ.clone());
        }
        if let Some(g) = &self.gamble_utility {
            builder = builder.gamble_utility(g.clone());
        }
        let model = builder.build()?;

        let mut block = self.family.clone();
        if let Some(delta) = self.solver.delta {
            block.set_delta(delta);
        }
        let family = block.build()?;
        family.validate(&model)?;

        let weight = match &self.weight {
            None => None,
            Some(w) => {
                let spec = WeightSpec::from(w);
                let Family::EpsteinZin(ez) = &family else {
                    return Err(DpError::Regime(
                        "a weight block needs the epstein-zin family with 1 < rho < gamma".to_string(),
                    ));
                };
                if ez.regime() != EzRegime::ConcaveMinThetaAboveOne {
                    return Err(DpError::Regime(format!(
                        "a weight block needs 1 < rho < gamma, found regime {}",
                        ez.regime().label()
                    )));
                }
                spec.validate(model.n_states(), ez.beta(), ez.theta())?;
                Some(spec)
            }
        };

        Ok(LoadedModel {
            model,
            family,
            weight,
            solver: self.solver.clone(),
            file: ModelFile { family: block, ..self },
        })
    }
}

/// Parses a model document without touching the file system.
pub fn parse_model(text: &str) -> Result<LoadedModel> {
    let file: ModelFile = toml::from_str(text).map_err(|e| DpError::Parse(e.to_string()))?;
    file.resolve()
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LoadedModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DpError::Io(format!("{}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| match e {
        DpError::Parse(msg) => DpError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn model_to_string(file: &ModelFile) -> Result<String> {
    toml::to_string(file).map_err(|e| DpError::Io(format!("cannot serialize model: {e}")))
}

pub fn save_model(path: impl AsRef<Path>, file: &ModelFile) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_string(file)?).map_err(|e| DpError::Io(format!("{}: {e}", path.display())))
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn label(x: f64) -> String {
    format!("{x}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DpError {
    DpError::Io(format!("{}: {e}", path.display()))
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Writes `values.csv`, `policy.csv` and `diagnostics.csv` into `dir`, creating it if needed.
pub fn export_report<A: Aggregator>(
    report: &SolveReport,
    agg: A,
    model: &ModelSpec,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let v_hat = report.fixed_point.values();
    let original = agg.to_original_units(v_hat)?;
    let (s_grid, z_grid, a_grid) = (model.s_grid(), model.z_grid(), model.a_grid());

    write_table(
        &dir.join("values.csv"),
        &["s_label", "z_label", "v_transformed", "v_original_units"],
        (0..model.n_states()).map(|x| {
            let (s, z) = model.split(x);
            vec![label(s_grid[s]), label(z_grid[z]), float(v_hat[x]), float(original[x])]
        }),
    )?;
    write_table(
        &dir.join("policy.csv"),
        &["s_label", "z_label", "action_label"],
        report.policy.iter().enumerate().map(|(x, &a)| {
            let (s, z) = model.split(x);
            vec![label(s_grid[s]), label(z_grid[z]), label(a_grid[a])]
        }),
    )?;
    let estimate = report.contraction_estimate.map(float).unwrap_or_default();
    write_table(
        &dir.join("diagnostics.csv"),
        &["iteration", "residual", "residual_ratio", "contraction_estimate"],
        report.residuals.iter().enumerate().map(|(i, &r)| {
            let ratio = match i {
                0 => String::new(),
                _ => residual_ratios(&report.residuals[i - 1..=i])
                    .first()
                    .map(|&q| float(q))
                    .unwrap_or_default(),
            };
            vec![(i + 1).to_string(), float(r), ratio, estimate.clone()]
        }),
    )
}

/// Reads the `v_transformed` column of a `values.csv`.
pub fn read_values(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| io_err(path, e))?;
            rec.get(2)
                .ok_or_else(|| DpError::Parse(format!("{}: missing v_transformed column", path.display())))?
                .parse::<f64>()
                .map_err(|e| DpError::Parse(format!("{}: {e}", path.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{value_function_iteration, SolveOptions};

    const TWO_STATE: &str = r#"
format_version = 1
successor = [[0, 1], [1, 0]]
kernel = [[1.0]]
reward = [[[0.0], [1.0]], [[2.0], [0.0]]]

[grids]
s = [0.0, 1.0]
z = [0.0]
a = [0.0, 1.0]

[family]
name = "additive"
beta = 0.5
"#;

    fn ez_file(rho: f64, gamma: f64) -> String {
        format!(
            r#"
format_version = 1
kernel = [[0.5, 0.5], [0.2, 0.8]]
reward = [[[0.5, 0.7], [0.6, 0.4]], [[0.9, 0.3], [0.8, 1.1]]]

[grids]
s = [1.0, 2.0]
z = [0.0, 1.0]
a = [1.0, 2.0]

[family]
name = "epstein-zin"
beta = 0.9
rho = {rho}
gamma = {gamma}
"#
        )
    }

    #[test]
    fn two_state_round_trip() {
        let loaded = parse_model(TWO_STATE).unwrap();
        assert_eq!(loaded.model.n_states(), 2);
        let text = model_to_string(&loaded.file).unwrap();
        let again = parse_model(&text).unwrap();
        assert_eq!(again.model, loaded.model);
        assert_eq!(again.family, loaded.family);
        assert_eq!(model_to_string(&again.file).unwrap(), text);
    }

    #[test]
    fn bad_kernel_row_is_named() {
        let text = TWO_STATE.replace("kernel = [[1.0]]", "kernel = [[0.99]]");
        let err = parse_model(&text).unwrap_err();
        assert!(matches!(err, DpError::InvalidModel(_)));
        assert!(err.to_string().contains("row 0"), "{err}");
    }

    #[test]
    fn ez_rho_one_rejected() {
        let err = parse_model(&ez_file(1.0, 2.0)).unwrap_err();
        assert!(matches!(err, DpError::Regime(_)));
        assert!(err.to_string().contains("rho = 1"), "{err}");
        assert!(parse_model(&ez_file(0.5, 2.0)).is_ok());
    }

    #[test]
    fn unknown_keys_and_versions_rejected() {
        let err = parse_model(&TWO_STATE.replace("beta = 0.5", "beta = 0.5\nbogus = 1")).unwrap_err();
        assert!(matches!(err, DpError::Parse(_)), "{err}");
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = parse_model(&TWO_STATE.replace("format_version = 1", "format_version = 2")).unwrap_err();
        assert!(matches!(err, DpError::Parse(_)));
        let err = parse_model(&TWO_STATE.replace("[grids]", "extra = 3\n[grids]")).unwrap_err();
        assert!(err.to_string().contains("extra"), "{err}");
    }

    #[test]
    fn feasibility_pairs() {
        let text = TWO_STATE.replace("kernel =", "feasibility = [[0, 0], [0, 1], [1, 1]]\nkernel =");
        let loaded = parse_model(&text).unwrap();
        assert!(!loaded.model.is_feasible(1, 0));
        let again = parse_model(&model_to_string(&loaded.file).unwrap()).unwrap();
        assert_eq!(again.model, loaded.model);
        let bad = TWO_STATE.replace("kernel =", "feasibility = [[2, 0]]\nkernel =");
        assert!(parse_model(&bad).unwrap_err().to_string().contains("[2, 0]"));
    }

    #[test]
    fn delta_override_rebuilds_family() {
        let mut loaded = parse_model(&ez_file(0.5, 2.0)).unwrap();
        let before = loaded.family.bracket(&loaded.model).unwrap();
        loaded.override_delta(0.01).unwrap();
        let after = loaded.family.bracket(&loaded.model).unwrap();
        assert_ne!(before, after);
    }

    #[test]
    fn export_tables() {
        let loaded = parse_model(&ez_file(0.5, 2.0)).unwrap();
        let report = value_function_iteration(&loaded.model, &loaded.family, &SolveOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_report(&report, &loaded.family, &loaded.model, dir.path()).unwrap();

        let back = read_values(dir.path().join("values.csv")).unwrap();
        assert_eq!(back, report.fixed_point.values());

        let values = fs::read_to_string(dir.path().join("values.csv")).unwrap();
        let mut lines = values.lines();
        assert_eq!(lines.next(), Some("s_label,z_label,v_transformed,v_original_units"));
        for line in lines {
            let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            // gamma = 2: v = v_hat^(1 / (1 - gamma)).
            assert!((cols[3] - cols[2].powf(-1.0)).abs() <= 1e-12 * cols[3].abs());
        }

        let diag = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
        assert_eq!(diag.lines().count() - 1, report.residuals.len());
        let policy = fs::read_to_string(dir.path().join("policy.csv")).unwrap();
        assert_eq!(policy.lines().count(), 1 + loaded.model.n_states());
    }
}
