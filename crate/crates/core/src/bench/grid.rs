use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{solve_lrmc, LrmcConfig};
use crate::error::{Error, Result};
use crate::masked::MaskedMatrix;
use crate::objectives::{RelaxationSpec, WeightRule};
use crate::solver::{solve_pmc, CompletionResult, SolverConfig};

use super::metrics::{rae, rse, sample_mask};
use super::synthetic::{generate_synthetic, QuarticCoefficient, SyntheticSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Nuclear-norm completion of the data matrix itself.
    #[serde(rename = "LRMC")]
    Lrmc,
    /// Schatten-p surrogate in feature space.
    #[serde(rename = "NLMC")]
    Nlmc,
    /// Truncated Schatten-p surrogate.
    #[serde(rename = "PMC-S")]
    PmcS,
    /// Weighted Schatten-p surrogate, linear weights.
    #[serde(rename = "PMC-W")]
    PmcW,
    /// Weighted Schatten-p surrogate, inverse-sigma weights.
    #[serde(rename = "PMC-W1")]
    PmcW1,
}

impl Method {
    pub const BUILT_IN: [Method; 4] = [Method::Lrmc, Method::Nlmc, Method::PmcS, Method::PmcW];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Lrmc => "LRMC",
            Method::Nlmc => "NLMC",
            Method::PmcS => "PMC-S",
            Method::PmcW => "PMC-W",
            Method::PmcW1 => "PMC-W1",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [Method::Lrmc, Method::Nlmc, Method::PmcS, Method::PmcW, Method::PmcW1]
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Solver settings shared by every method in a run.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSettings {
    /// Base PMC configuration; its relaxation exponent `p` is kept and the
    /// relaxation kind is set per method.
    pub solver: SolverConfig,
    /// Truncation for PMC-S; `None` means the row count.
    pub truncation: Option<usize>,
    pub inverse_sigma_eps: f64,
    pub lrmc: LrmcConfig,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            truncation: None,
            inverse_sigma_eps: 1e-6,
            lrmc: LrmcConfig::default(),
        }
    }
}

impl MethodSettings {
    pub fn pmc_config(&self, method: Method, rows: usize, cols: usize) -> Option<SolverConfig> {
        let p = self.solver.relaxation.p;
        let relaxation = match method {
            Method::Lrmc => return None,
            Method::Nlmc => RelaxationSpec::schatten(p),
            Method::PmcS => {
                let s = self.truncation.unwrap_or(rows).min(cols.saturating_sub(1));
                RelaxationSpec::truncated(p, s)
            }
            Method::PmcW => RelaxationSpec::weighted(p, WeightRule::Linear),
            Method::PmcW1 => RelaxationSpec::weighted(
                p,
                WeightRule::InverseSigma {
                    eps: self.inverse_sigma_eps,
                },
            ),
        };
        Some(SolverConfig {
            relaxation,
            ..self.solver.clone()
        })
    }

    pub fn complete(&self, method: Method, input: &MaskedMatrix) -> Result<CompletionResult> {
        match self.pmc_config(method, input.nrows(), input.ncols()) {
            None => solve_lrmc(input, &self.lrmc),
            Some(cfg) => solve_pmc(input, &cfg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Rse,
    Rae,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Rse => "rse",
            Metric::Rae => "rae",
        }
    }

    pub fn eval(&self, truth: &DMatrix<f64>, est: &DMatrix<f64>, mask: &DMatrix<bool>) -> Result<f64> {
        match self {
            Metric::Rse => rse(truth, est, mask),
            Metric::Rae => rae(truth, est, mask),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub methods: Vec<Method>,
    pub rhos: Vec<f64>,
    /// Columns per manifold.
    pub ns: Vec<usize>,
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
    pub quartic: QuarticCoefficient,
    pub metric: Metric,
    /// Record wall time per solve; off gives byte-reproducible tables.
    pub record_time: bool,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.rhos.is_empty() || self.ns.is_empty() || self.trials == 0 {
            return Err(Error::Config("grid needs methods, rhos, ns and trials >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub method: String,
    pub rho: f64,
    pub n: usize,
    pub k: usize,
    pub trial: usize,
    pub metric_name: String,
    pub metric_value: f64,
    pub seconds: f64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one (ρ, n, trial) cell; shared by every method in the cell.
pub fn trial_seed(base: u64, rho_index: usize, n_index: usize, trial: usize) -> u64 {
    let mut s = splitmix(base);
    for v in [rho_index, n_index, trial] {
        s = splitmix(s ^ v as u64);
    }
    s
}

/// Ground truth and mask for one grid cell.
pub fn grid_instance(
    spec: &GridSpec,
    rho: f64,
    n: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, DMatrix<bool>)> {
    let synth = SyntheticSpec {
        quartic: spec.quartic,
        ..SyntheticSpec::new(spec.d, spec.m, n, spec.k, seed)
    };
    let x = generate_synthetic(&synth)?.x;
    let mask = sample_mask(x.nrows(), x.ncols(), rho, splitmix(seed))?;
    Ok((x, mask))
}

struct Job {
    method_index: usize,
    rho_index: usize,
    n_index: usize,
    trial: usize,
}

/// Run every method on every (ρ, n, trial) cell.
///
/// `on_row` sees rows as they finish (in completion order); the returned
/// table is sorted by (method, ρ, n, trial) in the order they were given.
/// A failed solve yields a row with metric `failed` and value NaN.
pub fn run_grid<F>(
    spec: &GridSpec,
    settings: &MethodSettings,
    workers: usize,
    on_row: F,
) -> Result<Vec<ResultRow>>
where
    F: Fn(&ResultRow) + Sync,
{
    spec.validate()?;
    let mut jobs = Vec::new();
    for method_index in 0..spec.methods.len() {
        for rho_index in 0..spec.rhos.len() {
            for n_index in 0..spec.ns.len() {
                for trial in 0..spec.trials {
                    jobs.push(Job {
                        method_index,
                        rho_index,
                        n_index,
                        trial,
                    });
                }
            }
        }
    }
    let run_job = |job: &Job| -> ResultRow {
        let method = spec.methods[job.method_index];
        let rho = spec.rhos[job.rho_index];
        let n = spec.ns[job.n_index];
        let seed = trial_seed(spec.seed, job.rho_index, job.n_index, job.trial);
        let start = Instant::now();
        let outcome = grid_instance(spec, rho, n, seed).and_then(|(truth, mask)| {
            let input = MaskedMatrix::from_ground_truth(&truth, mask.clone())?;
            let result = settings.complete(method, &input)?;
            spec.metric.eval(&truth, &result.x_hat, &mask)
        });
        let seconds = if spec.record_time {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        let (metric_name, metric_value) = match outcome {
            Ok(v) => (spec.metric.name().to_string(), v),
            Err(e) => {
                log::warn!("{} rho={rho} n={n} trial={} failed: {e}", method.name(), job.trial);
                ("failed".to_string(), f64::NAN)
            }
        };
        let row = ResultRow {
            method: method.name().to_string(),
            rho,
            n,
            k: spec.k,
            trial: job.trial,
            metric_name,
            metric_value,
            seconds,
        };
        on_row(&row);
        row
    };

    let rows: Vec<(usize, ResultRow)> = if workers <= 1 {
        jobs.iter().enumerate().map(|(i, j)| (i, run_job(j))).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().enumerate().map(|(i, j)| (i, run_job(j))).collect())
    };
    // jobs were enumerated in (method, ρ, n, trial) order
    let mut rows = rows;
    rows.sort_by_key(|(i, _)| *i);
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

const CSV_HEADER: [&str; 8] = [
    "method",
    "rho",
    "n",
    "k",
    "trial",
    "metric_name",
    "metric_value",
    "seconds",
];

pub fn write_rows_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Config(format!("writing result table: {e}"));
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.rho.to_string(),
            r.n.to_string(),
            r.k.to_string(),
            r.trial.to_string(),
            r.metric_name.clone(),
            r.metric_value.to_string(),
            format!("{:.6}", r.seconds),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Config(format!("writing result table: {e}")))?;
    Ok(())
}

/// Per-method series of the mean metric, one file against ρ and one
/// against n: `<method>_vs_rho.csv` (`n,rho,mean,count`) and
/// `<method>_vs_n.csv` (`rho,n,mean,count`). Failed rows are skipped.
pub fn write_plot_data(rows: &[ResultRow], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut acc: BTreeMap<&str, BTreeMap<CellKey, (f64, usize)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric_value.is_finite()) {
        let e = acc
            .entry(r.method.as_str())
            .or_default()
            .entry((r.rho.to_bits(), r.n))
            .or_insert((0.0, 0));
        e.0 += r.metric_value;
        e.1 += 1;
    }
    for (method, cells) in &acc {
        let mut by_rho: Vec<(usize, f64, f64, usize)> = cells
            .iter()
            .map(|(&(rb, n), &(s, c))| (n, f64::from_bits(rb), s / c as f64, c))
            .collect();
        by_rho.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut text = String::from("n,rho,mean,count\n");
        for (n, rho, mean, c) in &by_rho {
            text.push_str(&format!("{n},{rho},{mean},{c}\n"));
        }
        write_file(&dir.join(format!("{method}_vs_rho.csv")), &text)?;

        by_rho.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let mut text = String::from("rho,n,mean,count\n");
        for (n, rho, mean, c) in &by_rho {
            text.push_str(&format!("{rho},{n},{mean},{c}\n"));
        }
        write_file(&dir.join(format!("{method}_vs_n.csv")), &text)?;
    }
    Ok(())
}

/// `(ρ as bits, n)`.
type CellKey = (u64, usize);

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Median of the finite values; NaN when none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec(methods: Vec<Method>, trials: usize) -> GridSpec {
        GridSpec {
            methods,
            rhos: vec![0.6],
            ns: vec![12],
            d: 1,
            m: 4,
            k: 1,
            trials,
            seed: 5,
            quartic: QuarticCoefficient::D,
            metric: Metric::Rse,
            record_time: false,
        }
    }

    fn fast_settings() -> MethodSettings {
        let mut s = MethodSettings::default();
        s.solver.t_max = 20;
        s.lrmc.max_iters = 50;
        s
    }

    #[test]
    fn one_cell_one_row() {
        let rows = run_grid(&tiny_spec(vec![Method::Lrmc], 1), &fast_settings(), 1, |_| {}).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].metric_name, "rse");
    }

    #[test]
    fn deterministic_and_ordered() {
        let spec = tiny_spec(vec![Method::PmcW, Method::Lrmc], 3);
        let a = run_grid(&spec, &fast_settings(), 1, |_| {}).unwrap();
        let b = run_grid(&spec, &fast_settings(), 2, |_| {}).unwrap();
        assert_eq!(a, b);
        let order: Vec<(&str, usize)> = a.iter().map(|r| (r.method.as_str(), r.trial)).collect();
        assert_eq!(
            order,
            vec![("PMC-W", 0), ("PMC-W", 1), ("PMC-W", 2), ("LRMC", 0), ("LRMC", 1), ("LRMC", 2)]
        );
    }

    #[test]
    fn single_trial_matches_direct_solve() {
        let spec = tiny_spec(vec![Method::PmcS], 1);
        let settings = fast_settings();
        let rows = run_grid(&spec, &settings, 1, |_| {}).unwrap();
        let (truth, mask) = grid_instance(&spec, 0.6, 12, trial_seed(5, 0, 0, 0)).unwrap();
        let input = MaskedMatrix::from_ground_truth(&truth, mask.clone()).unwrap();
        let res = settings.complete(Method::PmcS, &input).unwrap();
        assert_eq!(rows[0].metric_value, rse(&truth, &res.x_hat, &mask).unwrap());
    }

    #[test]
    fn failures_recorded_and_grid_continues() {
        let mut spec = tiny_spec(vec![Method::Lrmc], 1);
        spec.rhos = vec![0.001, 0.6];
        let rows = run_grid(&spec, &fast_settings(), 1, |_| {}).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].metric_name, "failed");
        assert!(rows[0].metric_value.is_nan());
        assert_eq!(rows[1].metric_name, "rse");
    }

    #[test]
    fn csv_and_plot_output() {
        let rows = run_grid(&tiny_spec(vec![Method::Lrmc], 2), &fast_settings(), 1, |_| {}).unwrap();
        let mut buf = Vec::new();
        write_rows_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,rho,n,k,trial,metric_name,metric_value,seconds\n"));
        assert_eq!(text.lines().count(), 3);
        let dir = tempfile::tempdir().unwrap();
        write_plot_data(&rows, dir.path()).unwrap();
        let series = fs::read_to_string(dir.path().join("LRMC_vs_rho.csv")).unwrap();
        assert_eq!(series.lines().count(), 2);
        assert!(dir.path().join("LRMC_vs_n.csv").exists());
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Lrmc, Method::Nlmc, Method::PmcS, Method::PmcW, Method::PmcW1] {
            assert_eq!(Method::parse(m.name()).unwrap(), m);
        }
        assert!(Method::parse("SVM").is_err());
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[f64::NAN]).is_nan());
    }
}
