//! Lloyd's algorithm, kmeans++ seeding with optional overseeding and
//! greedy pruning, and the far-group instances on which they fail.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::geometry::{dist2, sample_offsets, ClusterInstance, ClusteringAssignment, Distribution};
use crate::rng;

pub const DEFAULT_MAX_ITER: usize = 1000;
/// Default distance from the far ball to each of the two close ones, as a
/// multiple of `delta`.
pub const DEFAULT_FAR_FACTOR: f64 = 25.0;
/// Minimum center distance between groups, as a multiple of
/// `max(delta, D_far)`.
pub const GROUP_SPACING: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeuristicMethod {
    LloydUniform,
    Kmeanspp,
    /// Seed `⌈c·k⌉` centers by D² sampling, prune back to `k`.
    KmeansppOverseeded(f64),
}

impl fmt::Display for HeuristicMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LloydUniform => f.write_str("lloyd"),
            Self::Kmeanspp => f.write_str("kmeanspp"),
            Self::KmeansppOverseeded(c) => write!(f, "kmeanspp-over:{c}"),
        }
    }
}

impl FromStr for HeuristicMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lloyd" | "lloyd-uniform" => Ok(Self::LloydUniform),
            "kmeanspp" => Ok(Self::Kmeanspp),
            _ => {
                let c = s
                    .strip_prefix("kmeanspp-over:")
                    .and_then(|c| c.parse::<f64>().ok())
                    .ok_or_else(|| Error::invalid(format!("unknown heuristic `{s}`")))?;
                if !(c >= 1.0) {
                    return Err(Error::invalid(format!("overseeding factor must be ≥ 1, got {c}")));
                }
                Ok(Self::KmeansppOverseeded(c))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicRun {
    pub method: HeuristicMethod,
    pub iterations: usize,
    pub assignment: ClusteringAssignment,
    /// Centroid-form cost `∑‖x − μ‖²` of the final assignment.
    pub cost: f64,
    /// Cost after every mean update; `iterations` is its length.
    pub costs: Vec<f64>,
    pub recovered_planted: bool,
    /// Some cluster went empty and its center was moved to the farthest
    /// point.
    pub repaired: bool,
    /// Initial center indices (seeding output, after pruning).
    pub init: Vec<usize>,
}

impl HeuristicRun {
    pub fn score(mut self, planted: &ClusteringAssignment) -> Self {
        self.recovered_planted = self.assignment.same_partition(planted);
        self
    }
}

fn nearest(x: &[f64], centers: &[Vec<f64>], current: Option<usize>) -> usize {
    // Keep the current center unless another one is strictly closer.
    let mut best = current.unwrap_or(0);
    let mut best_d = dist2(x, &centers[best]);
    for (c, y) in centers.iter().enumerate() {
        let d = dist2(x, y);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn means<P: AsRef<[f64]>>(points: &[P], labels: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let m = points[0].as_ref().len();
    let mut sums = vec![vec![0.0; m]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(p.as_ref()).for_each(|(s, x)| *s += x);
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    (sums, counts)
}

fn centroid_cost<P: AsRef<[f64]>>(points: &[P], labels: &[usize], centers: &[Vec<f64>]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| dist2(p.as_ref(), &centers[l])).sum()
}

/// Lloyd iterations from explicit initial centers. Stops when the
/// assignment repeats or after `max_iter` assignment steps.
pub fn lloyd<P: AsRef<[f64]>>(points: &[P], k: usize, init_centers: &[Vec<f64>], max_iter: usize) -> Result<HeuristicRun> {
    let big_n = points.len();
    if k == 0 || k > big_n {
        return Err(Error::invalid(format!("need 1 ≤ k ≤ N, got k = {k}, N = {big_n}")));
    }
    if init_centers.len() != k {
        return Err(Error::invalid(format!("{} initial centers for k = {k}", init_centers.len())));
    }
    let mut centers = init_centers.to_vec();
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p.as_ref(), &centers, None)).collect();
    let mut costs = Vec::new();
    let mut repaired = false;
    loop {
        let (mut next, counts) = means(points, &labels, k);
        costs.push(centroid_cost(points, &labels, &next));
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..big_n)
                .max_by(|&i, &j| {
                    let di = dist2(points[i].as_ref(), &next[labels[i]]);
                    let dj = dist2(points[j].as_ref(), &next[labels[j]]);
                    di.total_cmp(&dj).then(j.cmp(&i))
                })
                .expect("nonempty");
            next[c] = points[far].as_ref().to_vec();
            repaired = true;
        }
        centers = next;
        if costs.len() >= max_iter {
            break;
        }
        let relabel: Vec<usize> =
            points.iter().zip(&labels).map(|(p, &l)| nearest(p.as_ref(), &centers, Some(l))).collect();
        if relabel == labels {
            break;
        }
        labels = relabel;
    }
    let cost = *costs.last().expect("one iteration");
    Ok(HeuristicRun {
        method: HeuristicMethod::LloydUniform,
        iterations: costs.len(),
        assignment: ClusteringAssignment { k, labels, medoids: None },
        cost,
        costs,
        recovered_planted: false,
        repaired,
        init: Vec::new(),
    })
}

/// `count` distinct indices chosen uniformly.
pub fn uniform_seed<R: Rng + ?Sized>(n: usize, count: usize, rng: &mut R) -> Vec<usize> {
    rand::seq::index::sample(rng, n, count.min(n)).into_vec()
}

/// D² seeding: the first center uniform, each next one with probability
/// proportional to its squared distance to the nearest chosen center.
pub fn kmeanspp_seed<P: AsRef<[f64]>>(points: &[P], count: usize, seed: u64) -> Result<Vec<usize>> {
    let mut r = rng::stream(seed, &[rng::label_key("kmeanspp")]);
    if points.is_empty() || count == 0 || count > points.len() {
        return Err(Error::invalid(format!("cannot seed {count} centers from {} points", points.len())));
    }
    let first = r.random_range(0..points.len());
    Ok(kmeanspp_seed_from(points, count, first, &mut r))
}

/// D² seeding with the first center fixed. Once every remaining point
/// coincides with a chosen center the rest are drawn uniformly from the
/// unchosen indices.
pub fn kmeanspp_seed_from<P: AsRef<[f64]>, R: Rng + ?Sized>(points: &[P], count: usize, first: usize, rng: &mut R) -> Vec<usize> {
    let n = points.len();
    let count = count.min(n);
    let mut chosen = vec![first];
    let mut taken = vec![false; n];
    taken[first] = true;
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p.as_ref(), points[first].as_ref())).collect();
    while chosen.len() < count {
        let weights: Vec<f64> = d2.iter().zip(&taken).map(|(&d, &t)| if t { 0.0 } else { d }).collect();
        let next = match WeightedIndex::new(&weights) {
            Ok(w) => w.sample(rng),
            Err(_) => {
                let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        taken[next] = true;
        chosen.push(next);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p.as_ref(), points[next].as_ref()));
        }
    }
    chosen
}

/// `∑_x min_{c∈Z} ‖x − c‖²` for fixed center points.
fn facility_cost<P: AsRef<[f64]>>(points: &[P], centers: &[usize]) -> f64 {
    points
        .iter()
        .map(|p| centers.iter().map(|&c| dist2(p.as_ref(), points[c].as_ref())).fold(f64::INFINITY, f64::min))
        .sum()
}

/// Greedily drop the center whose removal raises the cost least until `k`
/// remain. Ties remove the lowest point index. The survivors keep their
/// input order.
pub fn prune_centers<P: AsRef<[f64]>>(points: &[P], centers: &[usize], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > centers.len() {
        return Err(Error::invalid(format!("cannot prune {} centers to {k}", centers.len())));
    }
    let mut keep = centers.to_vec();
    while keep.len() > k {
        let mut best: Option<(f64, usize, usize)> = None;
        for pos in 0..keep.len() {
            let rest: Vec<usize> = keep.iter().enumerate().filter(|&(i, _)| i != pos).map(|(_, &c)| c).collect();
            let cost = facility_cost(points, &rest);
            let better = match best {
                None => true,
                Some((bc, _, bidx)) => cost < bc || (cost == bc && keep[pos] < bidx),
            };
            if better {
                best = Some((cost, pos, keep[pos]));
            }
        }
        let (_, pos, _) = best.expect("nonempty");
        keep.remove(pos);
    }
    Ok(keep)
}

/// Seed with `method` and run Lloyd from those centers.
pub fn run_heuristic<P: AsRef<[f64]>>(points: &[P], k: usize, method: HeuristicMethod, seed: u64) -> Result<HeuristicRun> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 ≤ k ≤ N, got k = {k}, N = {n}")));
    }
    let init = match method {
        HeuristicMethod::LloydUniform => {
            let mut r = rng::stream(seed, &[rng::label_key("lloyd")]);
            uniform_seed(n, k, &mut r)
        }
        HeuristicMethod::Kmeanspp => kmeanspp_seed(points, k, seed)?,
        HeuristicMethod::KmeansppOverseeded(c) => {
            let count = ((c * k as f64).ceil() as usize).clamp(k, n);
            prune_centers(points, &kmeanspp_seed(points, count, seed)?, k)?
        }
    };
    let centers: Vec<Vec<f64>> = init.iter().map(|&i| points[i].as_ref().to_vec()).collect();
    let mut run = lloyd(points, k, &centers, DEFAULT_MAX_ITER)?;
    run.method = method;
    run.init = init;
    Ok(run)
}

/// `l` far-apart groups of three unit balls `(A_i, B_i, C_i)`: `A_i` and
/// `B_i` have centers `delta` apart, `C_i` sits at distance `d_far` from
/// both. Cluster `3i` is `A_i`, `3i + 1` is `B_i`, `3i + 2` is `C_i`.
pub fn adversarial_instance(l: usize, delta: f64, d_far: f64, n: usize, m: usize, seed: u64) -> Result<ClusterInstance> {
    if l == 0 || n == 0 {
        return Err(Error::invalid("need at least one group and one point per ball"));
    }
    if m < 2 {
        return Err(Error::invalid("the group layout needs m ≥ 2"));
    }
    if !(delta > 2.0) || !(d_far > delta / 2.0) {
        return Err(Error::invalid(format!("need delta > 2 and D_far > delta/2, got {delta}, {d_far}")));
    }
    let height = (d_far * d_far - delta * delta / 4.0).sqrt();
    // Group extent along the first axis is `delta`, so this spacing keeps
    // every cross-group center pair at least GROUP_SPACING·max apart.
    let spacing = GROUP_SPACING * delta.max(d_far) + 2.0 * (delta + d_far);
    let mut centers = Vec::with_capacity(3 * l);
    for g in 0..l {
        let base = g as f64 * spacing;
        for (x, y) in [(0.0, 0.0), (delta, 0.0), (delta / 2.0, height)] {
            let mut c = vec![0.0; m];
            c[0] = base + x;
            c[1] = y;
            centers.push(c);
        }
    }
    let offsets = sample_offsets(m, 3 * l, n, 1.0, Distribution::UniformBall, seed);
    ClusterInstance::from_offsets(centers, &offsets, 1.0, seed)
}

/// Group of cluster `a` and whether it is the far ball.
fn group_of(a: usize) -> (usize, bool) {
    (a / 3, a % 3 == 2)
}

/// The initialization the failure argument is about: some group has two
/// centers in its far ball and one among its two close balls.
pub fn has_trapping_init(instance: &ClusterInstance, init: &[usize]) -> bool {
    let l = instance.k / 3;
    let mut far = vec![0usize; l];
    let mut close = vec![0usize; l];
    for &i in init {
        let (g, is_far) = group_of(instance.points[i].a);
        if is_far {
            far[g] += 1;
        } else {
            close[g] += 1;
        }
    }
    (0..l).any(|g| far[g] == 2 && close[g] == 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LloydFailureRate {
    pub groups: usize,
    pub trials: usize,
    pub failures: usize,
    pub rate: f64,
    /// Binomial standard error of `rate`.
    pub sigma: f64,
    /// `1 − (7/9)^l`.
    pub lower_bound: f64,
    /// Trials starting from a trapping initialization, and how many of
    /// those still recovered the planted clustering (expected: none).
    pub trapped: usize,
    pub trapped_recovered: usize,
    pub repaired: usize,
}

pub fn lloyd_failure_rate(l: usize, delta: f64, d_far: f64, n: usize, trials: usize, seed: u64) -> Result<LloydFailureRate> {
    lloyd_failure_rate_with(l, delta, d_far, n, 3, trials, seed, Execution::default())
}

/// One adversarial instance, `trials` uniform initializations of Lloyd.
#[allow(clippy::too_many_arguments)]
pub fn lloyd_failure_rate_with(
    l: usize,
    delta: f64,
    d_far: f64,
    n: usize,
    m: usize,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<LloydFailureRate> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let instance = adversarial_instance(l, delta, d_far, n, m, seed)?;
    let planted = instance.planted();
    let runs = map_indexed(exec, trials, |t| {
        let trial_seed = rng::derive_seed(seed, &[rng::label_key("lloyd-trial"), t as u64]);
        run_heuristic(&instance.points, instance.k, HeuristicMethod::LloydUniform, trial_seed).map(|r| r.score(&planted))
    });
    let mut out = LloydFailureRate {
        groups: l,
        trials,
        failures: 0,
        rate: 0.0,
        sigma: 0.0,
        lower_bound: 1.0 - (7.0f64 / 9.0).powi(l as i32),
        trapped: 0,
        trapped_recovered: 0,
        repaired: 0,
    };
    for run in runs {
        let run = run?;
        out.failures += usize::from(!run.recovered_planted);
        out.repaired += usize::from(run.repaired);
        if has_trapping_init(&instance, &run.init) {
            out.trapped += 1;
            out.trapped_recovered += usize::from(run.recovered_planted);
        }
    }
    out.rate = out.failures as f64 / trials as f64;
    out.sigma = (out.rate * (1.0 - out.rate) / trials as f64).sqrt();
    Ok(out)
}

/// Fraction of kmeans++ seedings of `⌈c·3l⌉` centers on the adversarial
/// family that leave some group with exactly one center in `A_i ∪ B_i`.
pub fn kmeanspp_single_close_rate(l: usize, c: f64, delta: f64, n: usize, m: usize, trials: usize, seed: u64) -> Result<f64> {
    let instance = adversarial_instance(l, delta, DEFAULT_FAR_FACTOR * delta, n, m, seed)?;
    let count = ((c * instance.k as f64).ceil() as usize).min(instance.num_points());
    let hits = map_indexed(Execution::default(), trials, |t| {
        let s = rng::derive_seed(seed, &[rng::label_key("kmeanspp-trial"), t as u64]);
        kmeanspp_seed(&instance.points, count, s).map(|init| {
            let mut close = vec![0usize; l];
            for &i in &init {
                let (g, far) = group_of(instance.points[i].a);
                if !far {
                    close[g] += 1;
                }
            }
            close.contains(&1)
        })
    });
    let mut count_hits = 0;
    for h in hits {
        count_hits += usize::from(h?);
    }
    Ok(count_hits as f64 / trials as f64)
}
