//! Phase diagrams of empirical recovery over `(Δ, N)` grids, heatmap
//! output, and the single-instance solve / certify entry points used by
//! the CLI.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::geometry::{euclidean_distances, sample_planted, squared_distances, ClusterInstance, ClusteringAssignment, Distribution};
use crate::heuristics::{self, HeuristicMethod};
use crate::kmeans_lp::{certify_kmeans_lp, solve_kmeans_lp, INTEGRALITY_TOL};
use crate::kmedian::{certify_kmedian_sweep, solve_kmedian_lp};
use crate::lp::LpStatus;
use crate::primal_dual::{bisect_z, pd_recovery_check};
use crate::rng;
use crate::sdp::{self, AdmmConfig, SOLUTION_TOL};

/// SDP cells above this many points are skipped by default.
pub const SDP_MAX_N: usize = 120;
const WILSON_Z: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    KmedianLp,
    KmeansLp,
    KmeansSdp,
    Heuristic(HeuristicMethod),
    PrimalDual,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::KmedianLp => f.write_str("kmedian-lp"),
            Self::KmeansLp => f.write_str("kmeans-lp"),
            Self::KmeansSdp => f.write_str("kmeans-sdp"),
            Self::Heuristic(h) => h.fmt(f),
            Self::PrimalDual => f.write_str("primal-dual"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "kmedian-lp" => Self::KmedianLp,
            "kmeans-lp" => Self::KmeansLp,
            "kmeans-sdp" => Self::KmeansSdp,
            "primal-dual" => Self::PrimalDual,
            other => Self::Heuristic(other.parse().map_err(|_| Error::invalid(format!("unknown method `{other}`")))?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuccessCriterion {
    /// Integral and equal to the planted partition.
    PlantedRecovery,
    /// Integral, any partition.
    IntegralityOnly,
}

impl FromStr for SuccessCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "planted" | "planted-recovery" => Ok(Self::PlantedRecovery),
            "integral" | "integrality-only" => Ok(Self::IntegralityOnly),
            _ => Err(Error::invalid(format!("unknown success criterion `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub integral: bool,
    pub recovered: bool,
    /// False only for an SDP solve that hit its iteration limit.
    pub converged: bool,
    /// For fractional k-means solutions: whether every planted
    /// within-cluster entry is in the support.
    pub support_contains_planted: Option<bool>,
}

fn support_contains_blocks(x: &[f64], planted: &ClusteringAssignment, tol: f64) -> bool {
    let n = planted.len();
    let l = &planted.labels;
    (0..n).all(|i| (0..n).all(|j| l[i] != l[j] || x[i * n + j] > tol))
}

/// Solve `instance` with `method` and score it against the planted
/// partition. `seed` drives the randomized heuristics only.
pub fn evaluate(method: Method, instance: &ClusterInstance, seed: u64, admm: &AdmmConfig) -> Result<TrialOutcome> {
    let planted = instance.planted();
    let k = instance.k;
    Ok(match method {
        Method::KmedianLp => {
            let r = solve_kmedian_lp(&euclidean_distances(&instance.points), k)?;
            TrialOutcome { integral: r.integral, recovered: r.recovers(&planted), converged: true, support_contains_planted: None }
        }
        Method::KmeansLp => {
            let r = solve_kmeans_lp(&squared_distances(&instance.points), k)?;
            TrialOutcome {
                integral: r.integral,
                recovered: r.recovers(&planted),
                converged: true,
                support_contains_planted: (!r.integral).then(|| support_contains_blocks(&r.z, &planted, INTEGRALITY_TOL)),
            }
        }
        Method::KmeansSdp => {
            let s = sdp::solve_sdp_admm(&squared_distances(&instance.points), k, admm)?;
            let decoded = s.decode(k);
            TrialOutcome {
                integral: decoded.is_some(),
                recovered: decoded.is_some_and(|a| a.same_partition(&planted)),
                converged: s.converged,
                support_contains_planted: s.decode(k).is_none().then(|| support_contains_blocks(&s.x, &planted, SOLUTION_TOL)),
            }
        }
        Method::Heuristic(h) => {
            let r = heuristics::run_heuristic(&instance.points, k, h, seed)?.score(&planted);
            TrialOutcome { integral: true, recovered: r.recovered_planted, converged: true, support_contains_planted: None }
        }
        Method::PrimalDual => match bisect_z(&euclidean_distances(&instance.points), k)? {
            Some((_, run)) => TrialOutcome {
                integral: true,
                recovered: run.assignment.same_partition(&planted),
                converged: true,
                support_contains_planted: None,
            },
            None => TrialOutcome { converged: true, ..TrialOutcome::default() },
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagramConfig {
    pub method: Method,
    pub m: usize,
    pub k: usize,
    pub deltas: Vec<f64>,
    /// Total point counts `N`; each cluster gets `⌊N/k⌋` points.
    pub ns: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub distribution: Distribution,
    pub sdp_max_n: usize,
    /// Stop starting new trials once this much wall time has passed; cells
    /// left unfinished are marked incomplete.
    pub time_budget: Option<Duration>,
    pub admm: AdmmConfig,
    pub exec: Execution,
}

impl PhaseDiagramConfig {
    /// Two clusters in `R³`, `2 ≤ Δ ≤ 3.5`, `4 ≤ N ≤ 50`.
    pub fn two_cluster_grid(method: Method) -> Self {
        Self {
            method,
            m: 3,
            k: 2,
            deltas: (0..=15).map(|i| 2.0 + 0.1 * i as f64).collect(),
            ns: (2..=25).map(|i| 2 * i).collect(),
            trials: 10,
            master_seed: 0,
            distribution: Distribution::UniformBall,
            sdp_max_n: SDP_MAX_N,
            time_budget: None,
            admm: AdmmConfig::default(),
            exec: Execution::default(),
        }
    }

    /// Three clusters in `R³`, `2 ≤ Δ ≤ 3.5`, `6 ≤ N ≤ 42`.
    pub fn three_cluster_grid(method: Method) -> Self {
        Self { k: 3, ns: (2..=14).map(|i| 3 * i).collect(), ..Self::two_cluster_grid(method) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub delta: f64,
    pub n_total: usize,
    pub trials: usize,
    pub planted: usize,
    pub integral: usize,
    pub nonconverged: usize,
    pub fractional: usize,
    /// Fractional k-means solutions whose support contains every planted
    /// block.
    pub fractional_with_blocks: usize,
    pub complete: bool,
    pub skipped: Option<String>,
}

impl Cell {
    pub fn successes(&self, criterion: SuccessCriterion) -> usize {
        match criterion {
            SuccessCriterion::PlantedRecovery => self.planted,
            SuccessCriterion::IntegralityOnly => self.integral,
        }
    }

    pub fn fraction(&self, criterion: SuccessCriterion) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes(criterion) as f64 / self.trials as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagramGrid {
    pub method: String,
    pub m: usize,
    pub k: usize,
    pub deltas: Vec<f64>,
    pub ns: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    /// Row-major: `cells[i·|ns| + j]` is `(deltas[i], ns[j])`.
    pub cells: Vec<Cell>,
    /// Events worth a look, such as a fractional k-median LP solution.
    pub notable: Vec<String>,
}

impl PhaseDiagramGrid {
    pub fn cell(&self, delta_idx: usize, n_idx: usize) -> &Cell {
        &self.cells[delta_idx * self.ns.len() + n_idx]
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(|c| c.complete)
    }

    /// `delta,N,trials,successes,wilson_lo,wilson_hi`, one row per cell in
    /// grid order.
    pub fn to_csv(&self, criterion: SuccessCriterion) -> String {
        let mut out = String::from("delta,N,trials,successes,wilson_lo,wilson_hi\n");
        for c in &self.cells {
            let s = c.successes(criterion);
            let (lo, hi) = wilson_interval(s, c.trials);
            let _ = writeln!(out, "{},{},{},{},{:.6},{:.6}", fmt_delta(c.delta), c.n_total, c.trials, s, lo, hi);
        }
        out
    }

    /// Binary 8-bit PGM: rows are Δ descending, columns N ascending, pixel
    /// `round(255·fraction)`.
    pub fn to_pgm(&self, criterion: SuccessCriterion) -> Vec<u8> {
        let (w, h) = (self.ns.len(), self.deltas.len());
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        for (row, col) in self.raster_order() {
            out.push(gray(self.cell(row, col).fraction(criterion)));
        }
        out
    }

    pub fn to_svg(&self, criterion: SuccessCriterion) -> String {
        const CELL: usize = 24;
        const LEFT: usize = 56;
        const BOTTOM: usize = 40;
        let (w, h) = (self.ns.len(), self.deltas.len());
        let (width, height) = (LEFT + w * CELL + 8, 24 + h * CELL + BOTTOM);
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#);
        let _ = writeln!(s, r#"<text x="{}" y="14" text-anchor="middle">{} ({:?})</text>"#, width / 2, self.method, criterion);
        let rows: Vec<usize> = self.delta_rows_descending();
        for (r, &di) in rows.iter().enumerate() {
            let y = 24 + r * CELL;
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, LEFT - 4, y + CELL / 2 + 3, fmt_delta(self.deltas[di]));
            for (c, _) in self.ns.iter().enumerate() {
                let v = gray(self.cell(di, c).fraction(criterion));
                let _ = writeln!(s, r#"<rect x="{}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({v},{v},{v})"/>"#, LEFT + c * CELL);
            }
        }
        let base = 24 + h * CELL;
        for (c, n) in self.ns.iter().enumerate() {
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{n}</text>"#, LEFT + c * CELL + CELL / 2, base + 12);
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">N</text>"#, LEFT + w * CELL / 2, base + 30);
        let _ = writeln!(s, r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">Δ</text>"#, 24 + h * CELL / 2, 24 + h * CELL / 2);
        s.push_str("</svg>\n");
        s
    }

    fn delta_rows_descending(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = (0..self.deltas.len()).collect();
        rows.sort_by(|&a, &b| self.deltas[b].total_cmp(&self.deltas[a]).then(a.cmp(&b)));
        rows
    }

    fn raster_order(&self) -> Vec<(usize, usize)> {
        let mut cols: Vec<usize> = (0..self.ns.len()).collect();
        cols.sort_by_key(|&c| (self.ns[c], c));
        self.delta_rows_descending().into_iter().flat_map(|r| cols.iter().map(move |&c| (r, c))).collect()
    }

    /// Mean success fraction over the lowest and highest quarter of Δ rows
    /// (at least one row each).
    pub fn quartile_trend(&self, criterion: SuccessCriterion) -> (f64, f64) {
        let mut rows = self.delta_rows_descending();
        rows.reverse();
        let q = (rows.len() / 4).max(1);
        let mean = |rs: &[usize]| {
            let fr: Vec<f64> = rs
                .iter()
                .flat_map(|&r| (0..self.ns.len()).map(move |c| (r, c)))
                .map(|(r, c)| self.cell(r, c))
                .filter(|c| c.trials > 0)
                .map(|c| c.fraction(criterion))
                .collect();
            if fr.is_empty() {
                0.0
            } else {
                fr.iter().sum::<f64>() / fr.len() as f64
            }
        };
        (mean(&rows[..q]), mean(&rows[rows.len() - q..]))
    }
}

fn gray(fraction: f64) -> u8 {
    (255.0 * fraction.clamp(0.0, 1.0)).round() as u8
}

fn fmt_delta(d: f64) -> String {
    let s = format!("{d:.6}");
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').unwrap_or(s).to_string()
}

/// Wilson score interval at 95%; `(0, 1)` when there are no trials.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Seed of trial `t` in cell `(i, j)`.
pub fn trial_seed(master: u64, method: Method, delta_idx: usize, n_idx: usize, trial: usize) -> u64 {
    rng::derive_seed(master, &[rng::label_key(&method.to_string()), delta_idx as u64, n_idx as u64, trial as u64])
}

enum Job {
    Skip(String),
    Run,
}

pub fn run_phase_diagram(cfg: &PhaseDiagramConfig) -> Result<PhaseDiagramGrid> {
    if cfg.trials == 0 || cfg.deltas.is_empty() || cfg.ns.is_empty() {
        return Err(Error::invalid("phase diagram needs trials, Δ values and N values"));
    }
    if cfg.k == 0 || cfg.m == 0 {
        return Err(Error::invalid("need k ≥ 1 and m ≥ 1"));
    }
    let (rows, cols) = (cfg.deltas.len(), cfg.ns.len());
    let plans: Vec<Job> = (0..rows * cols)
        .map(|c| {
            let n_total = cfg.ns[c % cols];
            let delta = cfg.deltas[c / cols];
            if n_total / cfg.k == 0 {
                Job::Skip(format!("N = {n_total} is smaller than k = {}", cfg.k))
            } else if cfg.method == Method::KmeansSdp && n_total > cfg.sdp_max_n {
                Job::Skip(format!("SDP skipped above N = {} (solver time budget)", cfg.sdp_max_n))
            } else if delta < 2.0 {
                Job::Skip(format!("Δ = {delta} is below 2"))
            } else {
                Job::Run
            }
        })
        .collect();
    let start = Instant::now();
    let jobs: Vec<(usize, usize)> = (0..rows * cols)
        .filter(|&c| matches!(plans[c], Job::Run))
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let results = map_indexed(cfg.exec, jobs.len(), |idx| {
        if cfg.time_budget.is_some_and(|b| start.elapsed() > b) {
            return None;
        }
        let (c, t) = jobs[idx];
        let (di, ni) = (c / cols, c % cols);
        let seed = trial_seed(cfg.master_seed, cfg.method, di, ni, t);
        let n = cfg.ns[ni] / cfg.k;
        let outcome = sample_planted(cfg.m, cfg.k, n, cfg.deltas[di], cfg.distribution, seed)
            .and_then(|inst| evaluate(cfg.method, &inst, seed, &cfg.admm));
        Some(outcome.map_err(|e| e.to_string()))
    });

    let mut cells: Vec<Cell> = (0..rows * cols)
        .map(|c| Cell {
            delta: cfg.deltas[c / cols],
            n_total: cfg.ns[c % cols],
            trials: 0,
            planted: 0,
            integral: 0,
            nonconverged: 0,
            fractional: 0,
            fractional_with_blocks: 0,
            complete: true,
            skipped: match &plans[c] {
                Job::Skip(reason) => Some(reason.clone()),
                Job::Run => None,
            },
        })
        .collect();
    let mut notable = Vec::new();
    for (&(c, t), res) in jobs.iter().zip(results) {
        let cell = &mut cells[c];
        let Some(res) = res else {
            cell.complete = false;
            continue;
        };
        cell.trials += 1;
        match res {
            Ok(o) => {
                cell.planted += usize::from(o.integral && o.recovered);
                cell.integral += usize::from(o.integral);
                cell.nonconverged += usize::from(!o.converged);
                if let Some(blocks) = o.support_contains_planted {
                    cell.fractional += 1;
                    cell.fractional_with_blocks += usize::from(blocks);
                }
                if cfg.method == Method::KmedianLp && !o.integral {
                    notable.push(format!("fractional k-median LP solution at Δ = {}, N = {}, trial {t}", fmt_delta(cell.delta), cell.n_total));
                }
            }
            Err(e) => notable.push(format!("trial failed at Δ = {}, N = {}, trial {t}: {e}", fmt_delta(cell.delta), cell.n_total)),
        }
    }
    Ok(PhaseDiagramGrid {
        method: cfg.method.to_string(),
        m: cfg.m,
        k: cfg.k,
        deltas: cfg.deltas.clone(),
        ns: cfg.ns.clone(),
        trials: cfg.trials,
        master_seed: cfg.master_seed,
        cells,
        notable,
    })
}

/// Write `path` as PGM and the same path with an `.svg` extension.
pub fn render_heatmap(grid: &PhaseDiagramGrid, criterion: SuccessCriterion, path: &Path) -> Result<()> {
    std::fs::write(path, grid.to_pgm(criterion))?;
    std::fs::write(path.with_extension("svg"), grid.to_svg(criterion))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    #[serde(serialize_with = "method_name")]
    pub method: Method,
    pub status: String,
    pub integral: bool,
    pub recovered_planted: bool,
    pub objective: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assignment: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Value>,
}

fn method_name<S: serde::Serializer>(m: &Method, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(m)
}

impl SolveReport {
    /// The solver stopped without meeting its own convergence test.
    pub fn non_converged(&self) -> bool {
        self.status == "not-converged"
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub seed: u64,
    pub admm: AdmmConfig,
    /// Record wall time (makes the report non-reproducible).
    pub timing: bool,
    /// Attach the method's certificate summary.
    pub certify: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { seed: 0, admm: AdmmConfig::default(), timing: true, certify: false }
    }
}

fn lp_status(s: LpStatus) -> String {
    match s {
        LpStatus::Optimal => "optimal",
        LpStatus::Infeasible => "infeasible",
        LpStatus::Unbounded => "unbounded",
    }
    .to_string()
}

pub fn run_solve(instance: &ClusterInstance, method: Method, opts: &SolveOptions) -> Result<SolveReport> {
    instance.validate()?;
    let planted = instance.planted();
    let k = instance.k;
    let start = Instant::now();
    let mut report = match method {
        Method::KmedianLp => {
            let r = solve_kmedian_lp(&euclidean_distances(&instance.points), k)?;
            SolveReport {
                method,
                status: lp_status(r.status),
                integral: r.integral,
                recovered_planted: r.recovers(&planted),
                objective: r.objective,
                wall_time_s: None,
                assignment: r.assignment.as_ref().map(|a| a.canonical_labels()),
                certificate: None,
            }
        }
        Method::KmeansLp => {
            let r = solve_kmeans_lp(&squared_distances(&instance.points), k)?;
            SolveReport {
                method,
                status: lp_status(r.status),
                integral: r.integral,
                recovered_planted: r.recovers(&planted),
                objective: r.cost,
                wall_time_s: None,
                assignment: r.assignment.as_ref().map(|a| a.canonical_labels()),
                certificate: None,
            }
        }
        Method::KmeansSdp => {
            let s = sdp::solve_sdp_admm(&squared_distances(&instance.points), k, &opts.admm)?;
            let decoded = s.decode(k);
            SolveReport {
                method,
                status: if s.converged { "converged" } else { "not-converged" }.to_string(),
                integral: decoded.is_some(),
                recovered_planted: decoded.as_ref().is_some_and(|a| a.same_partition(&planted)),
                objective: s.objective,
                wall_time_s: None,
                assignment: decoded.map(|a| a.canonical_labels()),
                certificate: None,
            }
        }
        Method::Heuristic(h) => {
            let r = heuristics::run_heuristic(&instance.points, k, h, opts.seed)?.score(&planted);
            SolveReport {
                method,
                status: "completed".to_string(),
                integral: true,
                recovered_planted: r.recovered_planted,
                objective: r.cost,
                wall_time_s: None,
                assignment: Some(r.assignment.canonical_labels()),
                certificate: None,
            }
        }
        Method::PrimalDual => {
            let rec = pd_recovery_check(instance, &planted)?;
            let run = crate::primal_dual::primal_dual(&euclidean_distances(&instance.points), rec.z_used)?;
            SolveReport {
                method,
                status: "completed".to_string(),
                integral: run.medians.len() == k,
                recovered_planted: rec.recovered,
                objective: run.cost,
                wall_time_s: None,
                assignment: Some(run.assignment.canonical_labels()),
                certificate: None,
            }
        }
    };
    if opts.timing {
        report.wall_time_s = Some(start.elapsed().as_secs_f64());
    }
    if opts.certify {
        report.certificate = Some(run_certify(instance, method)?);
    }
    Ok(report)
}

/// Certificate JSON for the planted partition.
pub fn run_certify(instance: &ClusterInstance, method: Method) -> Result<Value> {
    instance.validate()?;
    let planted = instance.planted();
    Ok(match method {
        Method::KmedianLp => serde_json::to_value(certify_kmedian_sweep(instance, &planted)?)?,
        Method::KmeansLp => serde_json::to_value(certify_kmeans_lp(&squared_distances(&instance.points), &planted)?)?,
        Method::KmeansSdp => {
            let (cert, verdict) = sdp::certify_instance(instance)?;
            let sep = sdp::check_average_separation_points(&instance.points, &planted)?;
            let mut v = serde_json::to_value(cert.summary())?;
            v["valid"] = json!(verdict.valid);
            v["unique"] = json!(verdict.unique);
            v["average_separation"] = serde_json::to_value(&sep)?;
            v["failures"] = json!(verdict.report.failures);
            v
        }
        Method::PrimalDual => serde_json::to_value(pd_recovery_check(instance, &planted)?)?,
        Method::Heuristic(_) => return Err(Error::invalid(format!("{method} has no certificate"))),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialReport {
    pub groups: usize,
    pub delta: f64,
    pub d_far: f64,
    pub n: usize,
    pub m: usize,
    /// Absent when `lloyd_trials` is 0.
    pub lloyd: Option<heuristics::LloydFailureRate>,
    /// On `relaxation_trials` fresh instances: k-median LP certified and
    /// planted, and primal-dual recovery.
    pub relaxation_trials: usize,
    pub kmedian_recovered: usize,
    pub primal_dual_recovered: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversarialConfig {
    pub groups: usize,
    pub delta: f64,
    pub d_far: f64,
    pub n: usize,
    pub m: usize,
    pub lloyd_trials: usize,
    pub relaxation_trials: usize,
    pub seed: u64,
}

pub fn run_adversarial(cfg: &AdversarialConfig, exec: Execution) -> Result<AdversarialReport> {
    let lloyd = match cfg.lloyd_trials {
        0 => None,
        t => Some(heuristics::lloyd_failure_rate_with(cfg.groups, cfg.delta, cfg.d_far, cfg.n, cfg.m, t, cfg.seed, exec)?),
    };
    let outcomes = map_indexed(exec, cfg.relaxation_trials, |t| -> Result<(bool, bool)> {
        let seed = rng::derive_seed(cfg.seed, &[rng::label_key("adversarial-relaxation"), t as u64]);
        let inst = heuristics::adversarial_instance(cfg.groups, cfg.delta, cfg.d_far, cfg.n, cfg.m, seed)?;
        let planted = inst.planted();
        let cert = certify_kmedian_sweep(&inst, &planted)?;
        let lp = solve_kmedian_lp(&euclidean_distances(&inst.points), inst.k)?;
        let pd = pd_recovery_check(&inst, &planted)?;
        Ok((cert.certified && lp.integral && lp.recovers(&planted), pd.recovered))
    });
    let (mut km, mut pd) = (0, 0);
    for o in outcomes {
        let (a, b) = o?;
        km += usize::from(a);
        pd += usize::from(b);
    }
    Ok(AdversarialReport {
        groups: cfg.groups,
        delta: cfg.delta,
        d_far: cfg.d_far,
        n: cfg.n,
        m: cfg.m,
        lloyd,
        relaxation_trials: cfg.relaxation_trials,
        kmedian_recovered: km,
        primal_dual_recovered: pd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn tiny(method: Method) -> PhaseDiagramConfig {
        PhaseDiagramConfig {
            deltas: vec![2.2, 3.4],
            ns: vec![6, 10],
            trials: 3,
            ..PhaseDiagramConfig::two_cluster_grid(method)
        }
    }

    fn synthetic(counts: &[usize], trials: usize) -> PhaseDiagramGrid {
        let deltas = vec![2.0, 3.0];
        let ns = vec![4, 8];
        let cells = counts
            .iter()
            .enumerate()
            .map(|(c, &s)| Cell {
                delta: deltas[c / 2],
                n_total: ns[c % 2],
                trials,
                planted: s,
                integral: s,
                nonconverged: 0,
                fractional: 0,
                fractional_with_blocks: 0,
                complete: true,
                skipped: None,
            })
            .collect();
        PhaseDiagramGrid { method: "test".into(), m: 3, k: 2, deltas, ns, trials, master_seed: 0, cells, notable: Vec::new() }
    }

    #[test]
    fn method_names_round_trip() {
        for s in ["kmedian-lp", "kmeans-lp", "kmeans-sdp", "lloyd", "kmeanspp", "kmeanspp-over:2", "primal-dual"] {
            assert_eq!(s.parse::<Method>().unwrap().to_string(), s);
        }
        assert!("simplex".parse::<Method>().is_err());
    }

    #[test]
    fn wilson_examples() {
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
        let (lo, hi) = wilson_interval(5, 10);
        assert_abs_diff_eq!(lo + hi, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lo, 0.236590, epsilon = 1e-6);
        let (lo, hi) = wilson_interval(10, 10);
        assert!(lo > 0.69);
        assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn heatmap_extremes() {
        let all = synthetic(&[4, 4, 4, 4], 4);
        assert!(all.to_pgm(SuccessCriterion::PlantedRecovery)[11..].iter().all(|&b| b == 255));
        let none = synthetic(&[0, 0, 0, 0], 4);
        assert!(none.to_pgm(SuccessCriterion::PlantedRecovery)[11..].iter().all(|&b| b == 0));
    }

    #[test]
    fn heatmap_checkerboard_bytes() {
        // Cells (Δ=2, N=4), (Δ=2, N=8), (Δ=3, N=4), (Δ=3, N=8).
        let grid = synthetic(&[4, 0, 0, 4], 4);
        let mut expected = b"P5\n2 2\n255\n".to_vec();
        // Top row is Δ = 3.
        expected.extend_from_slice(&[0, 255, 255, 0]);
        assert_eq!(grid.to_pgm(SuccessCriterion::PlantedRecovery), expected);
        let svg = grid.to_svg(SuccessCriterion::PlantedRecovery);
        assert_eq!(svg.matches("<rect").count(), 4);
        assert!(svg.contains(">N</text>") && svg.contains(">Δ</text>"));
    }

    #[test]
    fn csv_layout() {
        let grid = synthetic(&[4, 0, 2, 4], 4);
        let csv = grid.to_csv(SuccessCriterion::PlantedRecovery);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "delta,N,trials,successes,wilson_lo,wilson_hi");
        assert_eq!(lines.len(), 5);
        assert!(lines[3].starts_with("3,4,4,2,"));
    }

    #[test]
    fn quartile_trend_orders_rows() {
        let grid = synthetic(&[0, 1, 4, 3], 4);
        let (low, high) = grid.quartile_trend(SuccessCriterion::PlantedRecovery);
        assert_abs_diff_eq!(low, 0.125);
        assert_abs_diff_eq!(high, 0.875);
    }

    #[test]
    fn phase_diagram_is_deterministic_and_ordered() {
        let cfg = tiny(Method::KmedianLp);
        let a = run_phase_diagram(&cfg).unwrap();
        let b = run_phase_diagram(&PhaseDiagramConfig { exec: Execution::Sequential, ..cfg.clone() }).unwrap();
        assert_eq!(a.to_csv(SuccessCriterion::PlantedRecovery), b.to_csv(SuccessCriterion::PlantedRecovery));
        assert!(a.is_complete());
        for c in &a.cells {
            assert!(c.integral >= c.planted);
            assert_eq!(c.trials, 3);
        }
    }

    #[test]
    fn sdp_cells_above_the_cap_are_skipped() {
        let cfg = PhaseDiagramConfig { deltas: vec![4.0], ns: vec![4], trials: 1, sdp_max_n: 3, ..tiny(Method::KmeansSdp) };
        let grid = run_phase_diagram(&cfg).unwrap();
        assert!(grid.cells[0].skipped.is_some());
        assert_eq!(grid.cells[0].trials, 0);
    }

    #[test]
    fn exhausted_budget_marks_cells_incomplete() {
        let cfg = PhaseDiagramConfig { time_budget: Some(Duration::ZERO), ..tiny(Method::KmeansLp) };
        std::thread::sleep(Duration::from_millis(2));
        let grid = run_phase_diagram(&cfg).unwrap();
        assert!(!grid.is_complete());
    }

    #[test]
    fn solve_reports() {
        let inst = sample_planted(3, 2, 4, 6.0, Distribution::UniformBall, 1).unwrap();
        let opts = SolveOptions { timing: false, ..SolveOptions::default() };
        let r = run_solve(&inst, Method::KmeansSdp, &opts).unwrap();
        assert!(r.recovered_planted && r.integral);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains(r#""method":"kmeans-sdp""#));
        assert!(!json.contains("wall_time"));
        // k-means LP at Δ = 3 usually stays fractional.
        let fractional = (0..5)
            .filter(|&s| {
                let inst = sample_planted(3, 2, 20, 3.0, Distribution::UniformBall, s).unwrap();
                !run_solve(&inst, Method::KmeansLp, &opts).unwrap().integral
            })
            .count();
        assert!(fractional >= 3, "{fractional}/5 fractional");
    }

    #[test]
    fn certify_json_shapes() {
        let inst = sample_planted(3, 2, 6, 6.0, Distribution::UniformBall, 2).unwrap();
        let v = run_certify(&inst, Method::KmeansSdp).unwrap();
        for key in ["z", "alpha", "min_eig_Q", "nullspace_dim", "min_beta", "dual_objective"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["valid"], json!(true));
        assert!(run_certify(&inst, Method::Heuristic(HeuristicMethod::Kmeanspp)).is_err());
        let _ = run_certify(&inst, Method::KmedianLp).unwrap();
        let _ = run_certify(&inst, Method::KmeansLp).unwrap();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn wilson_brackets_the_estimate(trials in 1usize..200, frac in 0.0f64..=1.0) {
            let s = ((trials as f64) * frac).floor() as usize;
            let (lo, hi) = wilson_interval(s, trials);
            let p = s as f64 / trials as f64;
            prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
            prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }
    }
}
