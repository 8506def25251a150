//! Monte Carlo trials and parameter sweeps.
//!
//! Every trial is a pure function of its derived seed, so sweep results do
//! not depend on worker count or completion order.

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::cluster::{build_anchor, ClusterConfig};
use crate::eigen::{top_eigenpairs, EigOptions, Eigenspace};
use crate::error::{Error, Result};
use crate::model::{mix_seed, Instance, ModelParams};
use crate::permutation::hamming_loss;
use crate::sync::{anchored_estimate, compute_diagnostics, vanilla_estimate, Anchor, Diagnostics, EstimateSet, Method};

pub const RAW_HEADER: &str =
    "sigma,trial,method,loss,failed,gap,anchor_err,blockwise_err,global_err,eig_ms,cluster_ms,round_ms";
pub const SUMMARY_HEADER: &str = "sigma,method,mean,median,q1,q3,min,max,std,n_ok,n_fail";

/// Solver settings shared by every trial.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolverConfig {
    pub eig: EigOptions,
    pub cluster: ClusterConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub eig_ms: f64,
    pub cluster_ms: f64,
    pub round_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub sigma_index: usize,
    pub sigma: f64,
    pub trial: usize,
    pub seed: u64,
    pub loss_vanilla: Option<f64>,
    pub loss_anchored: Option<f64>,
    pub diagnostics: Option<Diagnostics>,
    /// Set when the eigensolver gave up; the trial is excluded from statistics.
    pub failure: Option<String>,
    pub eig_iters: usize,
    pub times: StageTimes,
}

impl TrialResult {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn loss(&self, method: Method) -> Option<f64> {
        match method {
            Method::Vanilla => self.loss_vanilla,
            Method::Anchored => self.loss_anchored,
        }
    }
}

fn eig_options(seed: u64, cfg: &SolverConfig) -> EigOptions {
    EigOptions { seed: mix_seed(&[seed, 1]), ..cfg.eig }
}

fn cluster_config(seed: u64, cfg: &SolverConfig) -> ClusterConfig {
    ClusterConfig { seed: mix_seed(&[seed, 2]), ..cfg.cluster }
}

/// Output of [`solve`].
#[derive(Debug, Clone)]
pub struct Solution {
    pub eigenspace: Eigenspace,
    pub anchor: Option<Anchor>,
    pub estimates: EstimateSet,
}

/// Runs one estimator on a stored instance. Solver seeds are derived from
/// the instance seed exactly as in [`run_trial`].
pub fn solve(inst: &Instance, method: Method, cfg: &SolverConfig) -> Result<Solution> {
    let seed = inst.params().seed;
    let eigenspace = top_eigenpairs(inst, inst.d(), &eig_options(seed, cfg))?;
    let (anchor, estimates) = match method {
        Method::Vanilla => (None, vanilla_estimate(&eigenspace)?),
        Method::Anchored => {
            let anchor = build_anchor(&eigenspace, &cluster_config(seed, cfg))?;
            let est = anchored_estimate(&eigenspace, &anchor)?;
            (Some(anchor), est)
        }
    };
    Ok(Solution { eigenspace, anchor, estimates })
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs generate → eigenspace → (anchor) → estimates → losses for one
/// parameter set.
pub fn run_trial(params: &ModelParams, methods: &[Method], collect_diagnostics: bool, cfg: &SolverConfig) -> Result<TrialResult> {
    let mut result = TrialResult {
        sigma_index: 0,
        sigma: params.sigma,
        trial: 0,
        seed: params.seed,
        loss_vanilla: None,
        loss_anchored: None,
        diagnostics: None,
        failure: None,
        eig_iters: 0,
        times: StageTimes::default(),
    };
    let inst = Instance::generate(params)?;
    let truth = inst.truth().ok_or(Error::MissingTruth)?;

    let t = Instant::now();
    let es = match top_eigenpairs(&inst, params.d, &eig_options(params.seed, cfg)) {
        Ok(es) => es,
        Err(err @ Error::NoConvergence { .. }) => {
            result.failure = Some(err.to_string());
            result.times.eig_ms = elapsed_ms(t);
            return Ok(result);
        }
        Err(err) => return Err(err),
    };
    result.eig_iters = es.iterations;
    result.times.eig_ms = elapsed_ms(t);

    let anchor = if methods.contains(&Method::Anchored) || collect_diagnostics {
        let t = Instant::now();
        let anchor = build_anchor(&es, &cluster_config(params.seed, cfg))?;
        result.times.cluster_ms = elapsed_ms(t);
        Some(anchor)
    } else {
        None
    };

    let t = Instant::now();
    for &method in methods {
        match method {
            Method::Vanilla => {
                let est = vanilla_estimate(&es)?;
                result.loss_vanilla = Some(hamming_loss(&est.perms, truth)?);
            }
            Method::Anchored => {
                let est = anchored_estimate(&es, anchor.as_ref().expect("anchor built"))?;
                result.loss_anchored = Some(hamming_loss(&est.perms, truth)?);
            }
        }
    }
    result.times.round_ms = elapsed_ms(t);

    if collect_diagnostics {
        result.diagnostics = Some(compute_diagnostics(&es, truth, anchor.as_ref())?);
    }
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    /// `sigma` and `seed` are overridden per trial.
    pub base: ModelParams,
    pub sigma_grid: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub collect_diagnostics: bool,
    pub parallelism: usize,
    pub master_seed: u64,
    pub solver: SolverConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParams("trials must be at least 1".into()));
        }
        if self.sigma_grid.is_empty() {
            return Err(Error::InvalidParams("sigma grid is empty".into()));
        }
        if self.sigma_grid.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidParams("sigma values must be finite and >= 0".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParams("no methods selected".into()));
        }
        self.base.validate()
    }

    /// Seed of trial `t` at grid point `i`.
    pub fn trial_seed(&self, sigma_index: usize, trial: usize) -> u64 {
        mix_seed(&[self.master_seed, sigma_index as u64, trial as u64])
    }
}

/// Runs every `(σ, trial)` cell on a pool of `spec.parallelism` workers and
/// returns the results ordered by `(σ index, trial)` with their summary.
pub fn run_sweep(spec: &SweepSpec) -> Result<(Vec<TrialResult>, SweepSummary)> {
    spec.validate()?;
    let mut methods = spec.methods.clone();
    methods.sort();
    methods.dedup();

    let tasks: Vec<(usize, usize)> =
        (0..spec.sigma_grid.len()).flat_map(|i| (0..spec.trials).map(move |t| (i, t))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidParams(e.to_string()))?;
    let results: Vec<TrialResult> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(i, t)| {
                let params = ModelParams { sigma: spec.sigma_grid[i], seed: spec.trial_seed(i, t), ..spec.base };
                let mut r = run_trial(&params, &methods, spec.collect_diagnostics, &spec.solver)?;
                r.sigma_index = i;
                r.trial = t;
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let summary = summarize(&results, &methods)?;
    Ok((results, summary))
}

/// Order statistics of a set of losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossStats {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    /// Sample standard deviation (`n − 1` denominator; 0 for one value).
    pub std: f64,
}

/// Quantile of sorted data by linear interpolation between closest ranks
/// (the inclusive "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl LossStats {
    pub fn from_losses(losses: &[f64]) -> Result<Self> {
        if losses.is_empty() {
            return Err(Error::EmptyCell("no successful trials".into()));
        }
        let mut sorted = losses.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len() as f64;
        let mean = losses.iter().sum::<f64>() / m;
        let std = if losses.len() > 1 {
            (losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            mean: mean.clamp(sorted[0], sorted[sorted.len() - 1]),
            median: quantile_sorted(&sorted, 0.5),
            q1: quantile_sorted(&sorted, 0.25),
            q3: quantile_sorted(&sorted, 0.75),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            std,
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }

    /// Tukey whisker ends: the data range clipped to `1.5·IQR` beyond the box.
    pub fn whiskers(&self) -> (f64, f64) {
        let iqr = self.iqr();
        (self.min.max(self.q1 - 1.5 * iqr), self.max.min(self.q3 + 1.5 * iqr))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub sigma_index: usize,
    pub sigma: f64,
    pub method: Method,
    /// `None` when every trial in the cell failed.
    pub stats: Option<LossStats>,
    pub n_ok: usize,
    pub n_fail: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub cells: Vec<CellSummary>,
}

impl SweepSummary {
    pub fn cell(&self, sigma_index: usize, method: Method) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.sigma_index == sigma_index && c.method == method)
    }

    /// True when every cell has at least one successful trial.
    pub fn all_cells_ok(&self) -> bool {
        self.cells.iter().all(|c| c.n_ok > 0)
    }
}

/// Aggregates per-trial losses by `(σ index, method)`.
pub fn summarize(results: &[TrialResult], methods: &[Method]) -> Result<SweepSummary> {
    if results.is_empty() {
        return Err(Error::EmptyCell("no trial results".into()));
    }
    let mut grid: Vec<(usize, f64)> = results.iter().map(|r| (r.sigma_index, r.sigma)).collect();
    grid.sort_by(|a, b| a.0.cmp(&b.0));
    grid.dedup_by_key(|g| g.0);

    let mut cells = Vec::new();
    for &(i, sigma) in &grid {
        let in_cell: Vec<&TrialResult> = results.iter().filter(|r| r.sigma_index == i).collect();
        for &method in methods {
            let losses: Vec<f64> = in_cell.iter().filter_map(|r| r.loss(method)).collect();
            let n_fail = in_cell.iter().filter(|r| r.failed()).count();
            let stats = if losses.is_empty() { None } else { Some(LossStats::from_losses(&losses)?) };
            cells.push(CellSummary { sigma_index: i, sigma, method, stats, n_ok: losses.len(), n_fail });
        }
    }
    Ok(SweepSummary { cells })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Raw per-trial CSV, one row per `(trial, method)`. Timing columns are
/// written only when `include_timings` is set, so default output is a pure
/// function of the sweep spec.
pub fn write_raw_csv<W: Write>(results: &[TrialResult], methods: &[Method], include_timings: bool, mut w: W) -> Result<()> {
    writeln!(w, "{RAW_HEADER}")?;
    for r in results {
        let dg = r.diagnostics.as_ref();
        for &method in methods {
            let times = if include_timings {
                format!("{},{},{}", r.times.eig_ms, r.times.cluster_ms, r.times.round_ms)
            } else {
                ",,".to_string()
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.sigma,
                r.trial,
                method,
                opt(r.loss(method)),
                u8::from(r.failed()),
                opt(dg.and_then(|d| d.gap)),
                opt(dg.and_then(|d| d.anchor_err)),
                opt(dg.map(|d| d.blockwise_err)),
                opt(dg.map(|d| d.global_err)),
                times
            )?;
        }
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(summary: &SweepSummary, mut w: W) -> Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for c in &summary.cells {
        let stats = match &c.stats {
            Some(s) => format!("{},{},{},{},{},{},{}", s.mean, s.median, s.q1, s.q3, s.min, s.max, s.std),
            None => ",,,,,,".to_string(),
        };
        writeln!(w, "{},{},{},{},{}", c.sigma, c.method, stats, c.n_ok, c.n_fail)?;
    }
    Ok(())
}

/// Fixed-width text table of a summary.
pub fn format_summary_table(summary: &SweepSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>5} {:>5}",
        "sigma", "method", "mean", "median", "q1", "q3", "min", "max", "ok", "fail"
    );
    for c in &summary.cells {
        let _ = write!(out, "{:>8.4} {:>9}", c.sigma, c.method.as_str());
        match &c.stats {
            Some(s) => {
                let _ = write!(
                    out,
                    " {:>9.5} {:>9.5} {:>9.5} {:>9.5} {:>9.5} {:>9.5}",
                    s.mean, s.median, s.q1, s.q3, s.min, s.max
                );
            }
            None => {
                let _ = write!(out, " {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}", "-", "-", "-", "-", "-", "-");
            }
        }
        let _ = writeln!(out, " {:>5} {:>5}", c.n_ok, c.n_fail);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(sigma_index: usize, trial: usize, v: Option<f64>, a: Option<f64>) -> TrialResult {
        TrialResult {
            sigma_index,
            sigma: 1.0 + sigma_index as f64,
            trial,
            seed: 0,
            loss_vanilla: v,
            loss_anchored: a,
            diagnostics: None,
            failure: if v.is_none() && a.is_none() { Some("x".into()) } else { None },
            eig_iters: 0,
            times: StageTimes::default(),
        }
    }

    #[test]
    fn quantiles_follow_type_seven() {
        let s = LossStats::from_losses(&[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (0.0, 0.5, 1.0));
        let s = LossStats::from_losses(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (2.0, 3.0, 4.0));
        let s = LossStats::from_losses(&[0.3]).unwrap();
        assert_eq!((s.mean, s.median, s.q1, s.q3, s.min, s.max, s.std), (0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.0));
        let s = LossStats::from_losses(&[0.2; 7]).unwrap();
        assert!(s.q1 == s.median && s.median == s.q3 && s.q3 == s.mean);
        assert!(LossStats::from_losses(&[]).is_err());
    }

    #[test]
    fn whiskers_clip_to_fences() {
        let s = LossStats::from_losses(&[0.0, 1.0, 1.0, 1.0, 1.0, 10.0]).unwrap();
        let (lo, hi) = s.whiskers();
        assert_eq!(lo, 1.0 - 1.5 * s.iqr());
        assert!(hi < 10.0);
    }

    #[test]
    fn summary_counts_failures() {
        let results = vec![
            fake(0, 0, Some(0.1), Some(0.0)),
            fake(0, 1, None, None),
            fake(1, 0, None, None),
        ];
        let s = summarize(&results, &Method::ALL).unwrap();
        assert_eq!(s.cells.len(), 4);
        let c = s.cell(0, Method::Vanilla).unwrap();
        assert_eq!((c.n_ok, c.n_fail), (1, 1));
        assert_eq!(c.stats.unwrap().mean, 0.1);
        let c = s.cell(1, Method::Anchored).unwrap();
        assert_eq!((c.n_ok, c.n_fail), (0, 1));
        assert!(c.stats.is_none());
        assert!(!s.all_cells_ok());
        assert!(summarize(&[], &Method::ALL).is_err());
    }

    #[test]
    fn csv_shapes() {
        let results = vec![fake(0, 0, Some(0.25), Some(0.0))];
        let s = summarize(&results, &Method::ALL).unwrap();
        let mut raw = Vec::new();
        write_raw_csv(&results, &Method::ALL, false, &mut raw).unwrap();
        let raw = String::from_utf8(raw).unwrap();
        assert_eq!(raw, format!("{RAW_HEADER}\n1,0,vanilla,0.25,0,,,,,,,\n1,0,anchored,0,0,,,,,,,\n"));
        let mut sum = Vec::new();
        write_summary_csv(&s, &mut sum).unwrap();
        let sum = String::from_utf8(sum).unwrap();
        assert_eq!(sum.lines().count(), 3);
        assert!(sum.contains("\n1,vanilla,0.25,0.25,0.25,0.25,0.25,0.25,0,1,0\n"));
        assert!(format_summary_table(&s).contains("anchored"));
    }

    #[test]
    fn noiseless_trial_is_exact_and_repeatable() {
        let params = ModelParams::new(24, 2, 1.0, 0.0, 5);
        let cfg = SolverConfig::default();
        let a = run_trial(&params, &Method::ALL, true, &cfg).unwrap();
        assert_eq!(a.loss_vanilla, Some(0.0));
        assert_eq!(a.loss_anchored, Some(0.0));
        let b = run_trial(&params, &Method::ALL, true, &cfg).unwrap();
        assert_eq!(a.loss_vanilla, b.loss_vanilla);
        assert_eq!(a.diagnostics, b.diagnostics);
    }

    #[test]
    fn eigensolver_failure_is_recorded() {
        let params = ModelParams::new(300, 2, 0.5, 3.0, 5);
        let mut cfg = SolverConfig::default();
        cfg.eig.max_iter = Some(1);
        cfg.eig.tol = 1e-15;
        let r = run_trial(&params, &Method::ALL, false, &cfg).unwrap();
        assert!(r.failed());
        assert!(r.loss_vanilla.is_none() && r.loss_anchored.is_none());
    }

    #[test]
    fn sweep_single_trial() {
        let spec = SweepSpec {
            base: ModelParams::new(32, 2, 0.5, 0.0, 0),
            sigma_grid: vec![0.2],
            trials: 1,
            methods: Method::ALL.to_vec(),
            collect_diagnostics: false,
            parallelism: 1,
            master_seed: 9,
            solver: SolverConfig::default(),
        };
        let (results, summary) = run_sweep(&spec).unwrap();
        assert_eq!(results.len(), 1);
        for c in &summary.cells {
            let s = c.stats.unwrap();
            assert_eq!(s.mean, results[0].loss(c.method).unwrap());
            assert!(s.q1 == s.median && s.median == s.q3);
        }
        let bad = SweepSpec { trials: 0, ..spec.clone() };
        assert!(run_sweep(&bad).is_err());
        let bad = SweepSpec { sigma_grid: vec![], ..spec };
        assert!(run_sweep(&bad).is_err());
    }
}
