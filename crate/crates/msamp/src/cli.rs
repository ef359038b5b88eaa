//! Experiment harness behind the `msamp` binary: sweep specs, the CSV
//! emitters for each subcommand, and the deterministic worker-pool plumbing.
//!
//! Every table starts with `# msamp v… config_hash=… seed=…` so a result file
//! identifies the exact configuration that produced it. All randomness is
//! keyed by (seed, grid index, trial index), so reruns are byte-identical
//! regardless of `--threads`.

use rayon::prelude::*;
use serde::Deserialize;

use crate::amp::{run_amp, AmpOptions};
use crate::detection::{
    asymptotic_detection, genie_mmse_asymptotic, genie_mmse_empirical, score_instance,
    ChannelErrorCounts, RateCounts,
};
use crate::dictionary::{sample_haar_unitary, DictionaryKind, SemiUnitaryDictionary};
use crate::error::{Error, Result};
use crate::linalg::{hermitianize, CMat};
use crate::model::{sample_signals, synthesize_observation, wyner_covariances, SystemConfig};
use crate::oracle::{
    dice_start_is_full_rank, moment_labels, residual_moments, run_householder_dice,
    run_residual_dynamics,
};
use crate::rng::{standard_complex_matrix, stream};
use crate::state_evolution::run_state_evolution;
use crate::stats::ScalarStat;
use crate::validate::{run_criterion, CriterionReport, CRITERIA};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn provenance(cfg: &SystemConfig) -> String {
    format!("# msamp v{VERSION} config_hash={} seed={}\n", cfg.hash(), cfg.seed)
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.10e}")
    }
}

fn opt_stat(s: &Option<ScalarStat>) -> (String, String) {
    match s {
        Some(stat) => (fmt(stat.mean), fmt(stat.se)),
        None => ("nan".into(), "nan".into()),
    }
}

/// Mean and across-trial standard error of a per-trial series; the SE needs
/// at least two trials.
fn series_stat(values: &[f64]) -> (String, String) {
    match values.len() {
        0 => ("nan".into(), "nan".into()),
        1 => (fmt(values[0]), "nan".into()),
        _ => {
            let stat = ScalarStat::from_batches(values);
            (fmt(stat.mean), fmt(stat.se))
        }
    }
}

// ------------------------------------------------------------ experiment spec

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    /// Single run of the base config.
    None,
    /// Cartesian grid of activity levels across sources.
    Lambda(Vec<f64>),
    /// One shared detection threshold per point.
    Nu(Vec<f64>),
    /// Dictionary row counts (loads α stay fixed).
    DictionarySize(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricSet {
    pub detection: bool,
    pub estimation: bool,
    pub genie: bool,
}

impl Default for MetricSet {
    fn default() -> Self {
        MetricSet { detection: true, estimation: true, genie: true }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub sweep: SweepAxis,
    pub trials: usize,
    pub metrics: MetricSet,
    pub dict_kinds: Vec<DictionaryKind>,
}

#[derive(Deserialize)]
struct SpecExtras {
    sweep: Option<String>,
    #[serde(default)]
    sweep_values: Vec<f64>,
    trials: Option<usize>,
    metrics: Option<Vec<String>>,
    dict_kinds: Option<Vec<String>>,
}

impl ExperimentSpec {
    /// Single-point spec over the base config's own dictionary kind.
    pub fn single(base: SystemConfig) -> Self {
        let kind = base.dict_kind;
        ExperimentSpec {
            base,
            sweep: SweepAxis::None,
            trials: 1,
            metrics: MetricSet::default(),
            dict_kinds: vec![kind],
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let base = SystemConfig::from_toml_str(text)?;
        let extras: SpecExtras = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;

        let sweep = match extras.sweep.as_deref().unwrap_or("none") {
            "none" => SweepAxis::None,
            "lambda" => SweepAxis::Lambda(extras.sweep_values.clone()),
            "nu" => SweepAxis::Nu(extras.sweep_values.clone()),
            "l" => SweepAxis::DictionarySize(
                extras
                    .sweep_values
                    .iter()
                    .map(|&v| {
                        if v < 1.0 || v.fract() != 0.0 {
                            Err(Error::Config(format!("l sweep value {v} is not a positive integer")))
                        } else {
                            Ok(v as usize)
                        }
                    })
                    .collect::<Result<_>>()?,
            ),
            other => {
                return Err(Error::Config(format!(
                    "unknown sweep axis {other:?}; expected none, lambda, nu, or l"
                )))
            }
        };

        let metrics = match &extras.metrics {
            None => MetricSet::default(),
            Some(names) => {
                let mut m = MetricSet { detection: false, estimation: false, genie: false };
                for name in names {
                    match name.as_str() {
                        "detection" => m.detection = true,
                        "estimation" => m.estimation = true,
                        "genie" => m.genie = true,
                        other => {
                            return Err(Error::Config(format!(
                                "unknown metric {other:?}; expected detection, estimation, or genie"
                            )))
                        }
                    }
                }
                m
            }
        };

        let dict_kinds = match &extras.dict_kinds {
            None => vec![base.dict_kind],
            Some(names) => names.iter().map(|n| n.parse()).collect::<Result<_>>()?,
        };

        let spec = ExperimentSpec {
            base,
            sweep,
            trials: extras.trials.unwrap_or(1),
            metrics,
            dict_kinds,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        self.base.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be ≥ 1".into()));
        }
        if self.dict_kinds.is_empty() {
            return Err(Error::Config("dict_kinds must be nonempty".into()));
        }
        let empty = match &self.sweep {
            SweepAxis::None => false,
            SweepAxis::Lambda(v) => v.is_empty(),
            SweepAxis::Nu(v) => v.is_empty(),
            SweepAxis::DictionarySize(v) => v.is_empty(),
        };
        if empty {
            return Err(Error::Config("sweep_values must be nonempty".into()));
        }
        Ok(())
    }

    /// Grid-value column names for the CSV header.
    fn grid_columns(&self) -> Vec<String> {
        match &self.sweep {
            SweepAxis::None => vec![],
            SweepAxis::Lambda(_) => {
                (1..=self.base.sources()).map(|u| format!("lambda{u}")).collect()
            }
            SweepAxis::Nu(_) => vec!["nu".into()],
            SweepAxis::DictionarySize(_) => vec!["l".into()],
        }
    }

    /// Expand the sweep into (grid-value cells, config) points in a fixed
    /// order; configs inherit everything else from the base.
    fn expand(&self) -> Result<Vec<(Vec<String>, SystemConfig)>> {
        let base = &self.base;
        let points = match &self.sweep {
            SweepAxis::None => vec![(vec![], base.clone())],
            SweepAxis::Lambda(values) => {
                let u = base.sources();
                let total = values.len().pow(u as u32);
                let mut out = Vec::with_capacity(total);
                for flat in 0..total {
                    let mut cfg = base.clone();
                    let mut rem = flat;
                    let mut cells = Vec::with_capacity(u);
                    for lam in cfg.lambda.iter_mut() {
                        let v = values[rem % values.len()];
                        rem /= values.len();
                        *lam = v;
                        cells.push(format!("{v}"));
                    }
                    out.push((cells, cfg));
                }
                out
            }
            SweepAxis::Nu(values) => values
                .iter()
                .map(|&v| {
                    let mut cfg = base.clone();
                    cfg.nu.iter_mut().for_each(|nu| *nu = v);
                    (vec![format!("{v}")], cfg)
                })
                .collect(),
            SweepAxis::DictionarySize(values) => values
                .iter()
                .map(|&l| {
                    let mut cfg = base.clone();
                    cfg.l = l;
                    (vec![format!("{l}")], cfg)
                })
                .collect(),
        };
        for (_, cfg) in &points {
            cfg.validate()?;
        }
        Ok(points)
    }
}

// -------------------------------------------------------------------- cmd_run

/// Run `body` on a rayon pool with the requested worker count (0 = default).
pub fn with_pool<T: Send>(threads: usize, body: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(body))
}

struct PointOutcome {
    rows: Vec<Vec<String>>,
}

pub fn cmd_run(spec: &ExperimentSpec, threads: usize) -> Result<String> {
    spec.check()?;
    let points = spec.expand()?;

    let mut header: Vec<String> = vec!["dict".into()];
    header.extend(spec.grid_columns());
    if spec.metrics.detection {
        for c in [
            "beta_e_md", "beta_e_md_se", "beta_inf_md", "beta_inf_md_se", "beta_e_fa",
            "beta_e_fa_se", "beta_inf_fa", "beta_inf_fa_se",
        ] {
            header.push(c.into());
        }
    }
    if spec.metrics.estimation {
        for c in [
            "mse_e_d", "mse_e_d_se", "mse_inf_d", "mse_inf_d_se", "pow_e_fa", "pow_e_fa_se",
            "pow_inf_fa", "pow_inf_fa_se",
        ] {
            header.push(c.into());
        }
    }
    if spec.metrics.genie {
        for c in ["genie_emp", "genie_emp_se", "genie_inf"] {
            header.push(c.into());
        }
    }

    let outcomes: Vec<Result<PointOutcome>> = with_pool(threads, || {
        points
            .par_iter()
            .enumerate()
            .map(|(pi, (cells, cfg))| run_point(spec, pi, cells, cfg))
            .collect()
    })?;

    let mut out = provenance(&spec.base);
    out.push_str(&format!(
        "# trials={} points={} kinds={}\n",
        spec.trials,
        points.len(),
        spec.dict_kinds.iter().map(|k| k.to_string()).collect::<Vec<_>>().join("+")
    ));
    out.push_str(&header.join(","));
    out.push('\n');
    for outcome in outcomes {
        for row in outcome?.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }
    Ok(out)
}

fn run_point(
    spec: &ExperimentSpec,
    pi: usize,
    cells: &[String],
    cfg: &SystemConfig,
) -> Result<PointOutcome> {
    let with_point = |e: Error| Error::Config(format!("grid point {pi}: {e}"));
    let se = run_state_evolution(cfg).map_err(with_point)?;
    let c_phi: Vec<CMat> =
        (0..cfg.sources()).map(|u| hermitianize(se.c_phi(u, cfg.t, cfg.t))).collect();

    let need_asym = spec.metrics.detection || spec.metrics.estimation;
    let asym = if need_asym {
        Some(asymptotic_detection(cfg, &c_phi, cfg.mc_samples).map_err(with_point)?)
    } else {
        None
    };
    let genie_inf = if spec.metrics.genie {
        Some(genie_mmse_asymptotic(cfg).map_err(with_point)?)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(spec.dict_kinds.len());
    for kind in &spec.dict_kinds {
        let mut cfg_k = cfg.clone();
        cfg_k.dict_kind = *kind;

        let mut rates = RateCounts::default();
        let mut errors = ChannelErrorCounts::default();
        let mut mse_series = Vec::new();
        let mut pow_series = Vec::new();
        let mut genie_series = Vec::new();

        for trial in 0..spec.trials {
            let scope = format!("cli/p{pi}/{kind}/t{trial}");
            let dicts: Vec<SemiUnitaryDictionary> = (0..cfg_k.sources())
                .map(|u| {
                    SemiUnitaryDictionary::build(
                        *kind,
                        cfg_k.l,
                        cfg_k.n_u(u),
                        cfg_k.seed,
                        &format!("{scope}/dict/u{u}"),
                    )
                })
                .collect::<Result<_>>()
                .map_err(with_point)?;
            let signals = sample_signals(&cfg_k, &scope).map_err(with_point)?;
            let (y, _) =
                synthesize_observation(&cfg_k, &dicts, &signals, &scope).map_err(with_point)?;

            if need_asym {
                let traj =
                    run_amp(&y, &dicts, &cfg_k, &se, AmpOptions::default()).map_err(with_point)?;
                let (r, e) =
                    score_instance(&cfg_k, &c_phi, &traj.last().r, &signals).map_err(with_point)?;
                if let Some(v) = e.mse_detected() {
                    mse_series.push(v);
                }
                if let Some(v) = e.power_per_false_alarm() {
                    pow_series.push(v);
                }
                rates.merge(&r);
                errors.merge(&e);
            }
            if spec.metrics.genie {
                if let Some(v) =
                    genie_mmse_empirical(&y, &dicts, &cfg_k, &signals).map_err(with_point)?
                {
                    genie_series.push(v);
                }
            }
        }

        let mut row: Vec<String> = vec![kind.to_string()];
        row.extend(cells.iter().cloned());
        if spec.metrics.detection {
            let asym = asym.as_ref().expect("asymptotics computed");
            for (e, i) in [(rates.md_rate(), &asym.md), (rates.fa_rate(), &asym.fa)] {
                let (m, s) = opt_stat(&e);
                row.push(m);
                row.push(s);
                let (m, s) = opt_stat(i);
                row.push(m);
                row.push(s);
            }
        }
        if spec.metrics.estimation {
            let asym = asym.as_ref().expect("asymptotics computed");
            // pooled point estimate, across-trial spread
            let (_, mse_se) = series_stat(&mse_series);
            row.push(errors.mse_detected().map_or("nan".into(), fmt));
            row.push(mse_se);
            let (m, s) = opt_stat(&asym.mse_detected);
            row.push(m);
            row.push(s);
            let (_, pow_se) = series_stat(&pow_series);
            row.push(errors.power_per_false_alarm().map_or("nan".into(), fmt));
            row.push(pow_se);
            let (m, s) = opt_stat(&asym.power_false_alarm);
            row.push(m);
            row.push(s);
        }
        if spec.metrics.genie {
            let (m, s) = series_stat(&genie_series);
            row.push(m);
            row.push(s);
            row.push(fmt(genie_inf.expect("genie asymptotic computed")));
        }
        rows.push(row);
    }
    Ok(PointOutcome { rows })
}

// --------------------------------------------------------------------- cmd_se

pub fn cmd_se(cfg: &SystemConfig) -> Result<String> {
    cfg.validate()?;
    let se = run_state_evolution(cfg)?;
    Ok(provenance(cfg) + &se.csv_string())
}

// ----------------------------------------------------------------- cmd_oracle

/// Default comparison setup: small two-source system with enough columns for
/// the lazy construction's frame budget at T = 2.
pub fn default_oracle_config(seed: u64) -> SystemConfig {
    SystemConfig {
        l: 48,
        f: 2,
        t: 2,
        noise_var: 0.1,
        seed,
        mc_samples: 40_000,
        dict_kind: DictionaryKind::DenseHaar,
        alpha: vec![1.0, 1.0],
        lambda: vec![0.3, 0.2],
        nu: vec![1.0, 1.0],
        sigma: wyner_covariances(2, 1, 0.5, None).expect("diagonal covariances"),
    }
}

/// Paired-moment comparison of the direct rotation dynamics against the lazy
/// equivalent over `trials` seeds. One CSV row per moment.
pub fn cmd_oracle(cfg: &SystemConfig, trials: usize, threads: usize) -> Result<String> {
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::Config("trials must be ≥ 1".into()));
    }
    let se = run_state_evolution(cfg)?;

    let samples: Vec<Option<(Vec<f64>, Vec<f64>)>> = with_pool(threads, || {
        (0..trials)
            .into_par_iter()
            .map(|trial| -> Result<Option<(Vec<f64>, Vec<f64>)>> {
                let scope = format!("oracle/t{trial}");
                let signals = sample_signals(cfg, &scope)?;
                if !dice_start_is_full_rank(&signals, cfg.f) {
                    return Ok(None);
                }
                let mut noise_rng = stream(cfg.seed, &format!("{scope}/noise"));
                let noise = standard_complex_matrix(cfg.l, cfg.f, &mut noise_rng)
                    .scale(cfg.noise_var.sqrt());
                let unitaries: Vec<CMat> = (0..cfg.sources())
                    .map(|u| {
                        let mut rng = stream(cfg.seed, &format!("{scope}/rot/u{u}"));
                        sample_haar_unitary(cfg.n_u(u), &mut rng)
                    })
                    .collect::<Result<_>>()?;
                let alg = run_residual_dynamics(cfg, &se, &signals, &noise, &unitaries)?;
                let mf = run_householder_dice(cfg, &se, &signals, &noise, &scope)?;
                Ok(Some((residual_moments(&alg, &signals), residual_moments(&mf, &signals))))
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let used: Vec<&(Vec<f64>, Vec<f64>)> = samples.iter().flatten().collect();
    if used.len() < 2 {
        return Err(Error::Config(format!(
            "only {} usable seeds out of {trials}; increase --trials",
            used.len()
        )));
    }

    let labels = moment_labels(cfg.sources(), cfg.t);
    let dim = used[0].0.len();
    debug_assert_eq!(labels.len(), dim);
    let n = used.len() as f64;

    let mut out = provenance(cfg);
    out.push_str(&format!("# trials={} used={}\n", trials, used.len()));
    out.push_str("moment,value_a,value_b,se,pass\n");
    for i in 0..dim {
        let mean_a = used.iter().map(|(a, _)| a[i]).sum::<f64>() / n;
        let mean_b = used.iter().map(|(_, b)| b[i]).sum::<f64>() / n;
        let dvar = used
            .iter()
            .map(|(a, b)| {
                let d = (a[i] - b[i]) - (mean_a - mean_b);
                d * d
            })
            .sum::<f64>()
            / (n - 1.0);
        let se_diff = (dvar / n).sqrt();
        let pass = (mean_a - mean_b).abs() <= 3.0 * se_diff + 1e-3;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            labels[i],
            fmt(mean_a),
            fmt(mean_b),
            fmt(se_diff),
            pass
        ));
    }
    Ok(out)
}

// --------------------------------------------------------------- cmd_validate

/// Run the listed self-checks (all when empty); the bool is the overall
/// verdict.
pub fn cmd_validate(criteria: &[usize]) -> Result<(String, bool)> {
    for &c in criteria {
        if c == 0 || c > CRITERIA {
            return Err(Error::Config(format!("criterion {c} out of range 1..={CRITERIA}")));
        }
    }
    let indices: Vec<usize> =
        if criteria.is_empty() { (1..=CRITERIA).collect() } else { criteria.to_vec() };
    let reports: Vec<CriterionReport> = indices.iter().map(|&i| run_criterion(i)).collect();
    let passed = reports.iter().filter(|r| r.passed).count();
    let mut text = String::new();
    for r in &reports {
        text.push_str(&r.line());
        text.push('\n');
    }
    text.push_str(&format!("{passed}/{} criteria passed\n", reports.len()));
    Ok((text, passed == reports.len()))
}

// ------------------------------------------------------------- cmd_gen_config

pub fn cmd_gen_config() -> String {
    concat!(
        "# msamp experiment configuration — flat keys, TOML syntax\n",
        "\n",
        "# system\n",
        "l = 1024            # dictionary rows (observation dimension)\n",
        "u = 2               # number of sources\n",
        "f = 4               # channel columns per row (antennas)\n",
        "t = 8               # AMP / state-evolution iterations\n",
        "noise_var = 0.1     # complex noise variance\n",
        "seed = 1            # master seed; every stream derives from it\n",
        "mc_samples = 100000 # Monte Carlo draws inside state evolution\n",
        "dict_kind = \"haar\"  # haar | fourier\n",
        "alpha = [1.0, 1.0]  # load N_u/L per source, each >= 1\n",
        "lambda = [0.1, 0.1] # activity probability per source\n",
        "nu = [1.0, 1.0]     # detection threshold per source\n",
        "# per-source diagonal channel covariance, f entries each\n",
        "sigma_diag = [[1.0, 1.0, 0.5, 0.5], [0.5, 0.5, 1.0, 1.0]]\n",
        "\n",
        "# experiment\n",
        "sweep = \"lambda\"    # none | lambda (per-source grid) | nu | l\n",
        "sweep_values = [0.05, 0.1, 0.2]\n",
        "trials = 1          # AMP instances per grid point\n",
        "metrics = [\"detection\", \"estimation\", \"genie\"]\n",
        "dict_kinds = [\"haar\"]\n",
    )
    .to_string()
}
