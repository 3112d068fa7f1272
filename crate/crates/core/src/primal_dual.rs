//! Jain–Vazirani primal-dual k-median, simulated event by event.
//!
//! All unfrozen `α_j` rise together with time `t`. A point `j` pays
//! `β_ij = (α_j − d(i, j))₊` toward every candidate median `i`; a
//! candidate opens once its payments reach `z`, and every unfrozen point
//! within reach of an open median freezes. After the growth phase,
//! tentative medians that share a paying point are pruned, lowest index
//! first.
//!
//! Event times are computed exactly from the piecewise-linear payment
//! functions; nothing is discretized.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{euclidean_distances, ClusterInstance, ClusteringAssignment, DistanceMatrix};
use crate::kmedian::certify_kmedian_sweep;

/// Payments below this fraction of `max(1, d_max)` count as zero when
/// deciding whether two medians share a contributor.
const CONTRIBUTION_TOL: f64 = 1e-12;
const BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PdEventKind {
    /// `point` became reachable from the already open `median`.
    Freeze,
    /// `point` was paid off and opened as a tentative median.
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdEvent {
    pub time: f64,
    pub kind: PdEventKind,
    pub point: usize,
    pub median: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdState {
    pub z: f64,
    /// Final `α_j`: the time point `j` froze.
    pub alpha: Vec<f64>,
    /// Median that froze each point.
    pub frozen_by: Vec<usize>,
    /// Tentative medians `T` in opening order.
    pub tentative: Vec<usize>,
    pub events: Vec<PdEvent>,
}

impl PdState {
    /// `β_ij` with the final `α`.
    pub fn beta(&self, d: &DistanceMatrix, i: usize, j: usize) -> f64 {
        (self.alpha[j] - d.get(i, j)).max(0.0)
    }

    pub fn events_csv(&self) -> String {
        let mut out = String::from("time,event,point,median\n");
        for e in &self.events {
            let kind = match e.kind {
                PdEventKind::Freeze => "freeze",
                PdEventKind::Open => "open",
            };
            let _ = writeln!(out, "{},{kind},{},{}", crate::geometry::fmt17(e.time), e.point, e.median);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalDualResult {
    /// Final medians `T'`, ascending.
    pub medians: Vec<usize>,
    /// Each point labelled by its nearest final median; `medoids` holds
    /// `medians`.
    pub assignment: ClusteringAssignment,
    pub cost: f64,
    /// Pruning removed at least one tentative median.
    pub pruning_needed: bool,
    pub state: PdState,
}

/// Earliest `τ ≥ t` with `c + ∑_{d∈ds} (τ − d)₊ ≥ z`; `ds` sorted, with at
/// least one entry.
fn payoff_time(c: f64, ds: &[f64], z: f64, t: f64) -> f64 {
    let active = ds.iter().filter(|&&d| d < t).count();
    let paid_now = c + ds[..active].iter().map(|d| t - d).sum::<f64>();
    if paid_now >= z {
        return t;
    }
    let mut prefix = 0.0;
    for q in 0..ds.len() {
        prefix += ds[q];
        let tau = (z - c + prefix) / (q + 1) as f64;
        let next = ds.get(q + 1).copied().unwrap_or(f64::INFINITY);
        if tau <= next {
            return tau.max(ds[q]).max(t);
        }
    }
    unreachable!("the last segment has unbounded slope")
}

pub fn primal_dual(d: &DistanceMatrix, z: f64) -> Result<PrimalDualResult> {
    let n = d.size();
    if n == 0 {
        return Err(Error::invalid("no points"));
    }
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::invalid(format!("need a finite z ≥ 0, got {z}")));
    }
    if d.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut alpha = vec![f64::NAN; n];
    let mut frozen_by = vec![usize::MAX; n];
    let mut unfrozen = vec![true; n];
    let mut open = vec![false; n];
    let mut tentative = Vec::new();
    let mut events = Vec::new();
    let mut t = 0.0f64;
    let mut remaining = n;

    while remaining > 0 {
        // (time, kind, index, median); freezes order before openings.
        let mut next: Option<(f64, PdEventKind, usize, usize)> = None;
        let mut offer = |cand: (f64, PdEventKind, usize, usize)| {
            let better = match next {
                None => true,
                Some(b) => (cand.0, cand.1 as u8, cand.2) < (b.0, b.1 as u8, b.2),
            };
            if better {
                next = Some(cand);
            }
        };
        for j in (0..n).filter(|&j| unfrozen[j]) {
            if let Some((dist, i)) = tentative.iter().map(|&i| (d.get(i, j), i)).min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))) {
                offer((dist.max(t), PdEventKind::Freeze, j, i));
            }
        }
        for i in (0..n).filter(|&i| !open[i]) {
            let mut c = 0.0;
            let mut ds = Vec::with_capacity(remaining);
            for j in 0..n {
                if unfrozen[j] {
                    ds.push(d.get(i, j));
                } else {
                    c += (alpha[j] - d.get(i, j)).max(0.0);
                }
            }
            ds.sort_by(f64::total_cmp);
            offer((payoff_time(c, &ds, z, t), PdEventKind::Open, i, i));
        }
        let (time, kind, idx, median) = next.expect("an unfrozen point always yields an event");
        t = time;
        match kind {
            PdEventKind::Freeze => {
                alpha[idx] = t;
                frozen_by[idx] = median;
                unfrozen[idx] = false;
                remaining -= 1;
                events.push(PdEvent { time: t, kind, point: idx, median });
            }
            PdEventKind::Open => {
                open[idx] = true;
                tentative.push(idx);
                events.push(PdEvent { time: t, kind, point: idx, median: idx });
                for j in 0..n {
                    if unfrozen[j] && d.get(idx, j) <= t {
                        alpha[j] = t;
                        frozen_by[j] = idx;
                        unfrozen[j] = false;
                        remaining -= 1;
                        events.push(PdEvent { time: t, kind: PdEventKind::Freeze, point: j, median: idx });
                    }
                }
            }
        }
    }

    let state = PdState { z, alpha, frozen_by, tentative, events };
    let eps = CONTRIBUTION_TOL * d.max_abs().max(1.0);
    let mut pool = state.tentative.clone();
    pool.sort_unstable();
    let mut medians = Vec::new();
    let mut pruning_needed = false;
    while let Some(&i) = pool.first() {
        medians.push(i);
        let payers: Vec<usize> = (0..n).filter(|&j| state.beta(d, i, j) > eps).collect();
        let before = pool.len();
        pool.retain(|&h| h != i && !payers.iter().any(|&j| state.beta(d, h, j) > eps));
        pruning_needed |= pool.len() + 1 < before;
    }
    let labels: Vec<usize> = (0..n)
        .map(|j| {
            (0..medians.len())
                .min_by(|&a, &b| d.get(medians[a], j).total_cmp(&d.get(medians[b], j)).then(a.cmp(&b)))
                .expect("at least one median")
        })
        .collect();
    let cost = labels.iter().enumerate().map(|(j, &l)| d.get(medians[l], j)).sum();
    Ok(PrimalDualResult {
        assignment: ClusteringAssignment { k: medians.len(), labels, medoids: Some(medians.clone()) },
        medians,
        cost,
        pruning_needed,
        state,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualFeasibility {
    pub holds: bool,
    /// `max_{t, i} ∑_j β_ij(t) − z` over event times.
    pub payment_excess: f64,
    /// `max_{t, i, j} α_j(t) − β_ij(t) − d(i, j)`.
    pub edge_excess: f64,
}

/// Replay the event log: at every event time, `α_j(t) = min(α_j, t)` and
/// `β_ij(t) = (α_j(t) − d(i, j))₊` must satisfy both dual constraints.
pub fn check_dual_feasibility(d: &DistanceMatrix, state: &PdState) -> DualFeasibility {
    let n = d.size();
    let tol = 1e-9 * (1.0 + state.z + d.max_abs());
    let mut payment: f64 = f64::NEG_INFINITY;
    let mut edge: f64 = f64::NEG_INFINITY;
    let mut times: Vec<f64> = state.events.iter().map(|e| e.time).collect();
    times.dedup();
    for &t in &times {
        let a: Vec<f64> = state.alpha.iter().map(|&x| x.min(t)).collect();
        for i in 0..n {
            let mut paid = 0.0;
            for j in 0..n {
                let b = (a[j] - d.get(i, j)).max(0.0);
                paid += b;
                edge = edge.max(a[j] - b - d.get(i, j));
            }
            payment = payment.max(paid - state.z);
        }
    }
    DualFeasibility { holds: payment <= tol && edge <= tol, payment_excess: payment, edge_excess: edge }
}

/// Smallest reached `z` giving exactly `k` final medians, by bisection on
/// `z ∈ [0, N·d_max]`. `None` if no probed `z` hits `k`.
pub fn bisect_z(d: &DistanceMatrix, k: usize) -> Result<Option<(f64, PrimalDualResult)>> {
    let n = d.size();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 ≤ k ≤ N, got k = {k}, N = {n}")));
    }
    let (mut lo, mut hi) = (0.0, n as f64 * d.max_abs() + 1.0);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let run = primal_dual(d, mid)?;
        let got = run.medians.len();
        if got == k {
            return Ok(Some((mid, run)));
        }
        if got > k {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdRecovery {
    /// The k-median certificate sweep certified the assignment.
    pub certified: bool,
    pub recovered: bool,
    /// `n_j α_j − OPT_j`, common to every cluster.
    pub z_used: f64,
    pub pruning_needed: bool,
    pub medians: Vec<usize>,
    /// The final medians are exactly the per-cluster medoids.
    pub medoids_match: bool,
}

/// Run the primal-dual algorithm at the `z` of the equal-slack k-median
/// certificate for `assignment`.
pub fn pd_recovery_check(instance: &ClusterInstance, assignment: &ClusteringAssignment) -> Result<PdRecovery> {
    let cert = certify_kmedian_sweep(instance, assignment)?;
    if !cert.slack.is_finite() {
        return Err(Error::invalid("no anchor available to derive z"));
    }
    let z = cert.slack.max(0.0);
    let run = primal_dual(&euclidean_distances(&instance.points), z)?;
    let mut medians = run.medians.clone();
    medians.sort_unstable();
    let mut medoids = cert.medoids.clone();
    medoids.sort_unstable();
    Ok(PdRecovery {
        certified: cert.certified,
        recovered: run.assignment.k == assignment.k && run.assignment.same_partition(assignment),
        z_used: z,
        pruning_needed: run.pruning_needed,
        medoids_match: medians == medoids,
        medians: run.medians,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_planted, Distribution, SquareMatrix};
    use crate::kmedian::solve_kmedian_lp;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn two_points(gap: f64) -> DistanceMatrix {
        SquareMatrix::from_fn(2, |i, j| if i == j { 0.0 } else { gap })
    }

    #[test]
    fn zero_cost_opens_everything() {
        let run = primal_dual(&two_points(3.0), 0.0).unwrap();
        assert_eq!(run.medians, vec![0, 1]);
        assert_eq!(run.cost, 0.0);
        assert!(!run.pruning_needed);
    }

    #[test]
    fn huge_cost_opens_one() {
        let run = primal_dual(&two_points(3.0), 1e6).unwrap();
        assert_eq!(run.medians, vec![0]);
        assert_abs_diff_eq!(run.cost, 3.0);
        // Both points reach z together; the tie opens index 0 and freezes 1.
        assert_abs_diff_eq!(run.state.alpha[1], (1e6 + 3.0) / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn payoff_time_walks_breakpoints() {
        assert_abs_diff_eq!(payoff_time(0.0, &[0.0], 2.0, 0.0), 2.0);
        assert_abs_diff_eq!(payoff_time(0.0, &[0.0, 1.0], 3.0, 0.0), 2.0);
        assert_abs_diff_eq!(payoff_time(0.0, &[0.0, 5.0], 3.0, 0.0), 3.0);
        assert_abs_diff_eq!(payoff_time(4.0, &[0.0], 3.0, 1.5), 1.5);
    }

    #[test]
    fn rejects_negative_cost() {
        assert!(primal_dual(&two_points(1.0), -1.0).is_err());
    }

    #[test]
    fn event_log_csv() {
        let run = primal_dual(&two_points(2.0), 0.5).unwrap();
        let csv = run.state.events_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("time,event,point,median"));
        assert_eq!(lines.next(), Some("5.0000000000000000e-1,open,0,0"));
        assert_eq!(csv.lines().count(), 1 + run.state.events.len());
    }

    #[test]
    fn certified_instance_is_recovered_without_pruning() {
        let mut ok = 0;
        for seed in 0..4 {
            let inst = sample_planted(3, 2, 30, 2.5, Distribution::UniformBall, seed).unwrap();
            let rec = pd_recovery_check(&inst, &inst.planted()).unwrap();
            if rec.certified {
                assert!(rec.recovered, "seed {seed}: {rec:?}");
                assert!(!rec.pruning_needed);
                assert!(rec.medoids_match);
                ok += 1;
            }
        }
        assert!(ok >= 2);
    }

    #[test]
    fn singleton_clusters() {
        let inst = sample_planted(2, 2, 1, 10.0, Distribution::UniformBall, 0).unwrap();
        let rec = pd_recovery_check(&inst, &inst.planted()).unwrap();
        assert!(rec.recovered && !rec.pruning_needed);
    }

    #[test]
    fn weak_duality_against_the_lp() {
        let inst = sample_planted(2, 2, 6, 2.6, Distribution::UniformBall, 3).unwrap();
        let d = euclidean_distances(&inst.points);
        let lp = solve_kmedian_lp(&d, 2).unwrap();
        let (z, run) = bisect_z(&d, 2).unwrap().expect("bisection reaches k = 2");
        let bound = run.state.alpha.iter().sum::<f64>() - 2.0 * z;
        assert!(bound <= lp.objective + 1e-7, "{bound} > {}", lp.objective);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn duals_stay_feasible(seed in 0u64..100_000, z in 0.0f64..15.0, delta in 2.0f64..4.0) {
            let inst = sample_planted(2, 2, 5, delta, Distribution::UniformBall, seed).unwrap();
            let d = euclidean_distances(&inst.points);
            let run = primal_dual(&d, z).unwrap();
            let feas = check_dual_feasibility(&d, &run.state);
            prop_assert!(feas.holds, "{feas:?}");
            // Frozen α never exceeds the distance to the median that froze it.
            for j in 0..d.size() {
                prop_assert!(run.state.alpha[j] + 1e-12 >= d.get(run.state.frozen_by[j], j));
            }
            prop_assert!(!run.medians.is_empty());
        }

        #[test]
        fn lp_bound_holds_for_any_z(seed in 0u64..100_000, z in 0.0f64..10.0) {
            let inst = sample_planted(2, 2, 4, 2.5, Distribution::UniformBall, seed).unwrap();
            let d = euclidean_distances(&inst.points);
            let run = primal_dual(&d, z).unwrap();
            let lp = solve_kmedian_lp(&d, 2).unwrap();
            prop_assert!(run.state.alpha.iter().sum::<f64>() - 2.0 * z <= lp.objective + 1e-7);
        }
    }
}
