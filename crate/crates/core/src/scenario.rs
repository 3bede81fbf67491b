//! Declarative experiment runner: explore, learn, eavesdrop, attack, detect.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::adversary::{
    eavesdrop_identify, exact_model, worst_case_model, AttackPlan, DistortionSign,
    IdentificationMethod, IdentifiedModel, ModelOrigin, ZetaSignal,
};
use crate::data::{build_data_matrices, check_rank, DataMatrices, Mode, Quadrature, RankReport};
use crate::detector::{calibrate, detect, Alarm, DEFAULT_MARGIN, DEFAULT_PERSISTENCE};
use crate::error::{Error, Result};
use crate::learner::{
    arrl, nominal_rl, run_iteration_report, GainResult, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::numerics::{from_rows, kleinman_solve, spectral_abscissa, to_rows, CostSpec};
use crate::plant::{
    compute_cost, consensus_initial_state, make_sum_of_sinusoids,
    multi_agent_benchmark_with_input_gain, simulate, CamouflageGain, CamouflageMap, Channels,
    ExplorationSignal, LtiModel, SimOptions, TrajectoryLog,
};
use crate::textfmt::{matrix_to_csv, read_matrix_file};

/// A matrix given either as `s` (meaning `s·I`) or as explicit rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scaled(f64),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn to_matrix(&self, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Scaled(s) => {
                if !s.is_finite() {
                    return Err(Error::invalid(format!("{what}: non-finite scale")));
                }
                Ok(DMatrix::identity(rows, cols) * *s)
            }
            MatrixSpec::Rows(r) => {
                let m = from_rows(r).map_err(|e| Error::invalid(format!("{what}: {e}")))?;
                if m.shape() != (rows, cols) {
                    return Err(Error::invalid(format!(
                        "{what} must be {rows}×{cols}, got {}×{}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                Ok(m)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantSpec {
    /// Six-agent consensus plant with `B = input_gain·I₆`.
    Builtin {
        #[serde(default = "one")]
        input_gain: f64,
    },
    /// Matrix CSV files; relative paths are resolved against the config file.
    Files { a: PathBuf, b: PathBuf },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub q: MatrixSpec,
    pub r: MatrixSpec,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            q: MatrixSpec::Scaled(10.0),
            r: MatrixSpec::Scaled(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationConfig {
    pub terms_per_channel: usize,
    /// Sup-norm cap per channel.
    pub amplitude: f64,
    /// Frequency band in rad/s.
    pub freq_min: f64,
    pub freq_max: f64,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            terms_per_channel: 100,
            amplitude: 1.0,
            freq_min: 0.1,
            freq_max: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CamouflageConfig {
    pub gain: CamouflageGain,
    #[serde(default = "unit_matrix")]
    pub mixing: MatrixSpec,
    /// Defaults to the tightest admissible bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

fn unit_matrix() -> MatrixSpec {
    MatrixSpec::Scaled(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub mode: Mode,
    /// Window length in log steps.
    pub window_steps: usize,
    pub windows: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub k0: MatrixSpec,
    pub quadrature: Quadrature,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Nominal,
            window_steps: 1,
            windows: 114,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            k0: MatrixSpec::Scaled(0.0),
            quadrature: Quadrature::Auto,
        }
    }
}

/// Which model the attacker compensates with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackModelSource {
    /// Identified from the eavesdropped exploration log.
    #[default]
    Eavesdropped,
    /// The true plant.
    Exact,
    /// The plant distorted by the frozen, scaled camouflage gain.
    WorstCase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ZetaSpec {
    Uniform(ZetaSignal),
    PerChannel(Vec<ZetaSignal>),
}

impl Default for ZetaSpec {
    fn default() -> Self {
        ZetaSpec::Uniform(ZetaSignal::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub onset: f64,
    pub zeta: ZetaSpec,
    pub model: AttackModelSource,
    pub identification: IdentificationMethod,
    pub eps_sc: f64,
    pub sign: DistortionSign,
    /// Time at which the camouflage gain is frozen for the worst-case model.
    pub freeze_time: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            onset: 5.0,
            zeta: ZetaSpec::default(),
            model: AttackModelSource::Eavesdropped,
            identification: IdentificationMethod::IntegralRegression,
            eps_sc: 2.0,
            sign: DistortionSign::Minus,
            freeze_time: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSpec {
    /// Calibration window on the attack-free twin run.
    pub calibration: [f64; 2],
    pub margin: f64,
    pub persistence: usize,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self {
            calibration: [4.0, 5.0],
            margin: DEFAULT_MARGIN,
            persistence: DEFAULT_PERSISTENCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    pub dt: f64,
    /// Exploration ends (and control starts) at this time.
    pub exploration: f64,
    /// End of the run.
    pub horizon: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            exploration: 2.0,
            horizon: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub plant: PlantSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    pub cost: CostConfig,
    pub exploration: ExplorationConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub camouflage: Option<CamouflageConfig>,
    pub learner: LearnerConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackConfig>,
    pub detector: DetectorSpec,
    pub timing: TimingConfig,
    /// Cost evaluation windows; defaults to five seconds from attack onset.
    pub cost_windows: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            seed: 7,
            plant: PlantSpec::Builtin { input_gain: 1.0 },
            x0: None,
            cost: CostConfig::default(),
            exploration: ExplorationConfig::default(),
            camouflage: None,
            learner: LearnerConfig::default(),
            attack: None,
            detector: DetectorSpec::default(),
            timing: TimingConfig::default(),
            cost_windows: Vec::new(),
            output_dir: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Reads a config file, resolving relative plant paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let PlantSpec::Files { a, b } = &mut cfg.plant {
            for p in [a, b] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Checks the config and materializes its objects.
    pub fn validate(&self) -> Result<Prepared> {
        let t = &self.timing;
        if !(t.dt > 0.0 && t.dt.is_finite()) {
            return Err(Error::invalid("timing.dt must be positive"));
        }
        let on_grid = |v: f64| ((v / t.dt) - (v / t.dt).round()).abs() < 1e-6;
        if !(t.exploration >= t.dt && t.horizon > t.exploration)
            || !on_grid(t.exploration)
            || !on_grid(t.horizon)
        {
            return Err(Error::invalid(
                "timing: need dt ≤ exploration < horizon, both multiples of dt",
            ));
        }

        let model = match &self.plant {
            PlantSpec::Builtin { input_gain } => {
                if !(*input_gain > 0.0) {
                    return Err(Error::invalid("plant.input_gain must be positive"));
                }
                multi_agent_benchmark_with_input_gain(*input_gain).0
            }
            PlantSpec::Files { a, b } => LtiModel::new(read_matrix_file(a)?, read_matrix_file(b)?)?,
        };
        let (n, m) = (model.n(), model.m());
        let x0 = match (&self.x0, &self.plant) {
            (Some(v), _) => {
                if v.len() != n {
                    return Err(Error::invalid(format!("x0 must have {n} entries")));
                }
                DVector::from_column_slice(v)
            }
            (None, PlantSpec::Builtin { .. }) => consensus_initial_state(),
            (None, PlantSpec::Files { .. }) => {
                return Err(Error::invalid("x0 is required for a plant read from files"))
            }
        };
        let cost = CostSpec::new(
            self.cost.q.to_matrix(n, n, "cost.q")?,
            self.cost.r.to_matrix(m, m, "cost.r")?,
        )?;

        let e = &self.exploration;
        let nyquist = std::f64::consts::PI / t.dt;
        if e.freq_max >= nyquist {
            return Err(Error::invalid(format!(
                "exploration.freq_max must stay below π/dt = {nyquist:.1} rad/s"
            )));
        }
        let exploration = make_sum_of_sinusoids(
            self.seed,
            m,
            e.terms_per_channel,
            e.amplitude,
            (e.freq_min, e.freq_max),
        )?;

        let camouflage = match &self.camouflage {
            None => None,
            Some(c) => {
                let mixing = c.mixing.to_matrix(m, n, "camouflage.mixing")?;
                let map = match c.gamma {
                    Some(g) => CamouflageMap::new(c.gain, mixing, g)?,
                    None => CamouflageMap::with_tight_bound(c.gain, mixing)?,
                };
                if map.gain() != &CamouflageGain::Zero {
                    map.ensure_nonvanishing(0.0, t.exploration, t.dt / 10.0)?;
                }
                Some(map)
            }
        };

        let l = &self.learner;
        if l.mode == Mode::Arrl && camouflage.is_none() {
            return Err(Error::invalid(
                "learner.mode = arrl requires a camouflage section",
            ));
        }
        if l.window_steps == 0 || l.windows == 0 {
            return Err(Error::invalid("learner windows must be non-empty"));
        }
        let steps = (t.exploration / t.dt).round() as usize;
        if l.window_steps * l.windows > steps {
            return Err(Error::invalid(format!(
                "learner needs {} exploration steps, exploration has {steps}",
                l.window_steps * l.windows
            )));
        }
        let k0 = l.k0.to_matrix(m, n, "learner.k0")?;

        if let Some(a) = &self.attack {
            if !(a.onset >= t.exploration && a.onset <= t.horizon) {
                return Err(Error::invalid(
                    "attack.onset must lie after exploration and within the horizon",
                ));
            }
            if a.model == AttackModelSource::WorstCase && camouflage.is_none() {
                return Err(Error::invalid(
                    "attack.model = worst_case requires a camouflage section",
                ));
            }
            if let ZetaSpec::PerChannel(v) = &a.zeta {
                if v.len() != m {
                    return Err(Error::invalid(format!("attack.zeta needs {m} channels")));
                }
            }
            let [c0, c1] = self.detector.calibration;
            if !(c0 >= t.exploration && c1 >= c0 && c1 <= t.horizon) {
                return Err(Error::invalid(
                    "detector.calibration must lie in the control phase",
                ));
            }
            if !(self.detector.margin > 0.0) || self.detector.persistence == 0 {
                return Err(Error::invalid(
                    "detector margin and persistence must be positive",
                ));
            }
        }
        for w in &self.cost_windows {
            if !(w[0] >= t.exploration && w[1] >= w[0] && w[1] <= t.horizon) {
                return Err(Error::invalid("cost windows must lie in the control phase"));
            }
        }
        Ok(Prepared {
            model,
            cost,
            x0,
            exploration,
            camouflage,
            k0,
        })
    }
}

/// Objects materialized from a valid config.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub model: LtiModel,
    pub cost: CostSpec,
    pub x0: DVector<f64>,
    pub exploration: ExplorationSignal,
    pub camouflage: Option<CamouflageMap>,
    pub k0: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Config,
    Exploration,
    Data,
    Learning,
    Oracle,
    Identification,
    Control,
    Detection,
    Output,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("phase serializes");
        write!(f, "{}", s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{phase} phase failed: {source}")]
pub struct ScenarioError {
    pub phase: Phase,
    #[source]
    pub source: Error,
}

trait Tag<T> {
    fn during(self, phase: Phase) -> std::result::Result<T, ScenarioError>;
}

impl<T> Tag<T> for Result<T> {
    fn during(self, phase: Phase) -> std::result::Result<T, ScenarioError> {
        self.map_err(|source| ScenarioError { phase, source })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleGap {
    pub max_abs: f64,
    pub relative_frobenius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceSummary {
    pub converged: bool,
    pub iterations: usize,
    pub p_changes: Vec<f64>,
    pub condition_numbers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentificationSummary {
    pub origin: ModelOrigin,
    pub relative_error_a: f64,
    pub relative_error_b: f64,
    pub fit_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackSummary {
    pub onset: f64,
    /// `sup ‖x̄_attacked − x̄_twin‖_∞` over the control phase.
    pub measured_gap: f64,
    /// `sup ‖x_attacked − x_twin‖_∞` over the control phase.
    pub actual_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostWindow {
    pub start: f64,
    pub end: f64,
    pub unattacked: f64,
    pub attacked: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectorSummary {
    pub threshold: f64,
    pub arm_time: f64,
    pub persistence: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub mode: Mode,
    pub gain: Vec<Vec<f64>>,
    pub oracle_gain: Option<Vec<Vec<f64>>>,
    pub oracle_gap: Option<OracleGap>,
    pub rank_nominal: RankReport,
    pub rank_arrl: Option<RankReport>,
    pub convergence: ConvergenceSummary,
    pub identification: Option<IdentificationSummary>,
    pub attack: Option<AttackSummary>,
    pub costs: Vec<CostWindow>,
    pub detector: Option<DetectorSummary>,
    pub alarm: Option<Alarm>,
    /// Alarm raised on the attack-free twin (a false positive).
    pub twin_alarm: Option<Alarm>,
    pub files: Vec<String>,
}

impl ScenarioReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Everything a run produced, for programmatic inspection.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub prepared: Prepared,
    pub exploration_log: TrajectoryLog,
    pub data: DataMatrices,
    pub gain: GainResult,
    pub oracle_gain: Option<DMatrix<f64>>,
    pub identified: Option<IdentifiedModel>,
    /// Closed-loop phase with the attack (if any).
    pub control_log: TrajectoryLog,
    /// Closed-loop phase without attack.
    pub twin_log: Option<TrajectoryLog>,
    pub detector_threshold: Option<f64>,
}

struct Outputs {
    dir: Option<PathBuf>,
    files: Vec<String>,
}

impl Outputs {
    fn write(&mut self, name: &str, contents: &str) -> std::result::Result<(), ScenarioError> {
        if let Some(dir) = &self.dir {
            fs::write(dir.join(name), contents)
                .map_err(Error::from)
                .during(Phase::Output)?;
            self.files.push(name.to_string());
        }
        Ok(())
    }
}

/// Runs the configured pipeline. Artifacts are written to `output_dir`
/// (when set) as soon as each phase finishes.
pub fn run_scenario(config: &ScenarioConfig) -> std::result::Result<ScenarioRun, ScenarioError> {
    let prepared = config.validate().during(Phase::Config)?;
    let Prepared {
        model,
        cost,
        x0,
        exploration,
        camouflage,
        k0,
    } = &prepared;
    let t = &config.timing;

    let mut out = Outputs {
        dir: config.output_dir.clone(),
        files: Vec::new(),
    };
    if let Some(dir) = &out.dir {
        fs::create_dir_all(dir)
            .map_err(Error::from)
            .during(Phase::Output)?;
    }
    out.write("config.json", &config.to_json())?;

    info!("{}: exploring for {} s", config.name, t.exploration);
    let channels = Channels {
        exploration: Some(exploration),
        camouflage: camouflage.as_ref(),
        ..Default::default()
    };
    let exploration_log = simulate(model, &channels, x0, &SimOptions::new(t.exploration, t.dt))
        .during(Phase::Exploration)?;
    out.write("exploration.csv", &exploration_log.to_csv())?;

    let lc = &config.learner;
    let with_psi = lc.mode == Mode::Arrl;
    let data = build_data_matrices(
        &exploration_log,
        lc.window_steps as f64 * t.dt,
        lc.windows,
        with_psi,
        lc.quadrature,
    )
    .during(Phase::Data)?;
    out.write("data_matrices.csv", &data.to_csv())?;
    let rank_nominal = check_rank(&data, Mode::Nominal);
    let rank_arrl = with_psi.then(|| check_rank(&data, Mode::Arrl));

    if k0.amax() == 0.0 && spectral_abscissa(model.a()).during(Phase::Learning)? >= 0.0 {
        warn!("K0 = 0 on a plant that is not Hurwitz; policy iteration may fail");
    }
    let learned = match lc.mode {
        Mode::Nominal => nominal_rl(&data, cost, k0, lc.tol, lc.max_iter),
        Mode::Arrl => arrl(&data, cost, k0, lc.tol, lc.max_iter),
    };
    let gain = match learned {
        Ok(g) => g,
        Err(Error::LearnerNoConvergence(partial)) => {
            let rep = run_iteration_report(&partial, None);
            out.write("learner_report.txt", &rep.text)?;
            out.write("iterations.csv", &rep.csv)?;
            return Err(ScenarioError {
                phase: Phase::Learning,
                source: Error::LearnerNoConvergence(partial),
            });
        }
        Err(e) => {
            return Err(ScenarioError {
                phase: Phase::Learning,
                source: e,
            })
        }
    };

    let oracle_gain = oracle(model, cost, k0, &gain.k_final);
    let iteration_report = run_iteration_report(&gain, oracle_gain.as_ref());
    out.write("learner_report.txt", &iteration_report.text)?;
    out.write("iterations.csv", &iteration_report.csv)?;
    out.write("gain.csv", &matrix_to_csv(&gain.k_final))?;
    out.write("value.csv", &matrix_to_csv(&gain.p_final))?;
    let oracle_gap = oracle_gain.as_ref().map(|o| OracleGap {
        max_abs: (&gain.k_final - o).amax(),
        relative_frobenius: (&gain.k_final - o).norm() / o.norm().max(f64::MIN_POSITIVE),
    });
    if let Some(o) = &oracle_gain {
        out.write("oracle_gain.csv", &matrix_to_csv(o))?;
    }

    let identified = match &config.attack {
        None => None,
        Some(a) => Some(
            match a.model {
                AttackModelSource::Eavesdropped => {
                    eavesdrop_identify(&exploration_log, a.identification)
                }
                AttackModelSource::Exact => Ok(exact_model(model)),
                AttackModelSource::WorstCase => worst_case_model(
                    model,
                    camouflage.as_ref().expect("validated"),
                    a.freeze_time,
                    a.eps_sc,
                    a.sign,
                ),
            }
            .during(Phase::Identification)?,
        ),
    };
    if let Some(id) = &identified {
        if let Some(dir) = &out.dir {
            id.write_files(dir, "identified").during(Phase::Output)?;
            out.files.push("identified_a.csv".into());
            out.files.push("identified_b.csv".into());
        }
    }

    let x_start = exploration_log.x.last().expect("non-empty log").clone();
    let control_opts = SimOptions::new(t.horizon - t.exploration, t.dt)
        .starting_at(t.exploration)
        .without_integrals();
    let k = &gain.k_final;
    let plain = Channels {
        controller_gain: Some(k),
        ..Default::default()
    };
    let twin_log = simulate(model, &plain, &x_start, &control_opts).during(Phase::Control)?;

    let mut report = ScenarioReport {
        name: config.name.clone(),
        mode: lc.mode,
        gain: to_rows(&gain.k_final),
        oracle_gain: oracle_gain.as_ref().map(to_rows),
        oracle_gap,
        rank_nominal,
        rank_arrl,
        convergence: ConvergenceSummary {
            converged: gain.converged,
            iterations: gain.iterates.len(),
            p_changes: gain.iterates.iter().filter_map(|i| i.p_change).collect(),
            condition_numbers: gain.condition_numbers.clone(),
        },
        identification: identified.as_ref().map(|id| {
            let (ea, eb) = id.relative_error(model);
            IdentificationSummary {
                origin: id.mode,
                relative_error_a: ea,
                relative_error_b: eb,
                fit_residual: id.fit_residual,
            }
        }),
        attack: None,
        costs: Vec::new(),
        detector: None,
        alarm: None,
        twin_alarm: None,
        files: Vec::new(),
    };

    let (control_log, twin) = match (&config.attack, &identified) {
        (Some(a), Some(id)) => {
            let m = model.m();
            let zeta = match &a.zeta {
                ZetaSpec::Uniform(z) => vec![*z; m],
                ZetaSpec::PerChannel(v) => v.clone(),
            };
            let plan = AttackPlan::new(a.onset, zeta, id.clone()).during(Phase::Control)?;
            let attacked = Channels {
                attack: Some(&plan),
                ..plain
            };
            let log = simulate(model, &attacked, &x_start, &control_opts).during(Phase::Control)?;
            let sup_gap = |f: &dyn Fn(usize) -> f64| (0..log.len()).map(f).fold(0.0, f64::max);
            report.attack = Some(AttackSummary {
                onset: a.onset,
                measured_gap: sup_gap(&|i| (&log.xbar[i] - &twin_log.xbar[i]).amax()),
                actual_gap: sup_gap(&|i| (&log.x[i] - &twin_log.x[i]).amax()),
            });

            let ds = &config.detector;
            let det = calibrate(
                &twin_log,
                (ds.calibration[0], ds.calibration[1]),
                ds.margin,
                ds.persistence,
            )
            .during(Phase::Detection)?;
            report.detector = Some(DetectorSummary {
                threshold: det.threshold,
                arm_time: det.arm_time,
                persistence: det.persistence,
            });
            report.alarm = detect(&log, &det);
            report.twin_alarm = detect(&twin_log, &det);
            (log, Some((twin_log, det.threshold)))
        }
        _ => (twin_log, None),
    };

    let windows: Vec<[f64; 2]> = if !config.cost_windows.is_empty() {
        config.cost_windows.clone()
    } else if let Some(a) = &config.attack {
        vec![[a.onset, (a.onset + 5.0).min(t.horizon)]]
    } else {
        Vec::new()
    };
    for [s, e] in windows {
        let (unattacked, attacked) = match &twin {
            Some((tw, _)) => (
                compute_cost(tw, cost, s, e).during(Phase::Control)?,
                Some(compute_cost(&control_log, cost, s, e).during(Phase::Control)?),
            ),
            None => (
                compute_cost(&control_log, cost, s, e).during(Phase::Control)?,
                None,
            ),
        };
        report.costs.push(CostWindow {
            start: s,
            end: e,
            unattacked,
            attacked,
        });
    }

    out.write("control.csv", &control_log.to_csv())?;
    if let Some((tw, _)) = &twin {
        out.write("twin.csv", &tw.to_csv())?;
    }

    let (twin_log, detector_threshold) = match twin {
        Some((tw, th)) => (Some(tw), Some(th)),
        None => (None, None),
    };
    let mut run = ScenarioRun {
        report,
        prepared: prepared.clone(),
        exploration_log,
        data,
        gain,
        oracle_gain,
        identified,
        control_log,
        twin_log,
        detector_threshold,
    };
    if let Some(dir) = out.dir.clone() {
        let plots = crate::plots::emit_plots(&run, &dir).during(Phase::Output)?;
        out.files.extend(plots);
        out.files.push("report.json".into());
        run.report.files = out.files.clone();
        out.write("report.json", &run.report.to_json())?;
    }
    Ok(run)
}

/// Model-based optimal gain, started from the first stabilizing candidate
/// among `0`, `K0` and the learned gain.
fn oracle(
    model: &LtiModel,
    cost: &CostSpec,
    k0: &DMatrix<f64>,
    learned: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let zero = DMatrix::zeros(model.m(), model.n());
    for start in [&zero, k0, learned] {
        match kleinman_solve(model, cost, start, 1e-12, 100) {
            Ok(trace) => return Some(trace.gain(model, cost)),
            Err(Error::NotStabilizing { .. }) => continue,
            Err(e) => {
                warn!("oracle solve failed: {e}");
                return None;
            }
        }
    }
    warn!("no stabilizing starting gain for the oracle");
    None
}

/// Names of the built-in scenarios.
pub const BUILTIN_SCENARIOS: [&str; 4] = [
    "nominal_attack",
    "arrl_attack",
    "reference_nominal",
    "reference_arrl",
];

fn standard_camouflage() -> CamouflageConfig {
    CamouflageConfig {
        gain: CamouflageGain::SinCos {
            scale: 0.3,
            offset: 0.02,
        },
        mixing: MatrixSpec::Scaled(1.0),
        gamma: None,
    }
}

/// Built-in scenario configs.
///
/// `nominal_attack` / `arrl_attack` run the six-agent plant with `B = I₆`:
/// explore for 2 s, control from 2 s, attack at 5 s with `ζ = 1`. The
/// nominal attacker uses its eavesdropped model; the camouflaged one ends up
/// with `A − 2·f(0)·I₆`. `reference_*` are pure learning runs on
/// `B = 5·I₆`, the configuration whose optimal gain is the reference table.
pub fn builtin_scenario(name: &str) -> Option<ScenarioConfig> {
    let base = ScenarioConfig {
        name: name.to_string(),
        learner: LearnerConfig {
            k0: MatrixSpec::Scaled(1.0),
            ..Default::default()
        },
        ..Default::default()
    };
    let cfg = match name {
        "nominal_attack" => ScenarioConfig {
            attack: Some(AttackConfig::default()),
            ..base
        },
        "arrl_attack" => ScenarioConfig {
            camouflage: Some(standard_camouflage()),
            learner: LearnerConfig {
                mode: Mode::Arrl,
                ..base.learner.clone()
            },
            attack: Some(AttackConfig {
                model: AttackModelSource::WorstCase,
                ..Default::default()
            }),
            ..base
        },
        "reference_nominal" => ScenarioConfig {
            plant: PlantSpec::Builtin {
                input_gain: crate::plant::REFERENCE_INPUT_GAIN,
            },
            ..base
        },
        "reference_arrl" => ScenarioConfig {
            plant: PlantSpec::Builtin {
                input_gain: crate::plant::REFERENCE_INPUT_GAIN,
            },
            camouflage: Some(standard_camouflage()),
            learner: LearnerConfig {
                mode: Mode::Arrl,
                ..base.learner.clone()
            },
            ..base
        },
        _ => return None,
    };
    Some(cfg)
}
