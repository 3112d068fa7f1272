//! The k-median LP and its cluster-constant dual certificate.
//!
//! The LP has `N²` assignment variables `z_pq` ("q is served by p") and `N`
//! opening variables `y_p`. The certificate fixes the dual `α` to be
//! constant on each cluster, with all `n_j α_j − OPT_j` equal, and checks
//! the resulting inequality against every candidate center `s ∈ P`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, euclidean_distances, ClusterInstance, ClusteringAssignment, DistanceMatrix};
use crate::lp::{self, Basis, LpOptions, LpProblem, LpStatus, Pricing, VarStatus};

/// Number of nearest candidate medians per point in the first restricted LP.
const INITIAL_CANDIDATES: usize = 16;
const MAX_PRICING_ROUNDS: usize = 60;
/// `lhs ≥ max_rhs` is accepted up to this relative rounding slack.
const CERT_ROUNDING: f64 = 1e-12;

pub fn lp_options() -> LpOptions {
    LpOptions { pricing: Pricing::DantzigBland, ..LpOptions::default() }
}

/// The compiled LP together with its variable maps. `pairs[t] = (p, q)` is
/// the pair behind variable `t`; `y_p` lives at `y_offset + p`.
#[derive(Debug, Clone)]
pub struct KMedianLpEncoding {
    pub n_points: usize,
    pub k: usize,
    pub pairs: Vec<(usize, usize)>,
    pub y_offset: usize,
    pub problem: LpProblem,
}

impl KMedianLpEncoding {
    pub fn z_var(&self, p: usize, q: usize) -> Option<usize> {
        // The full encoding is p-major; restricted ones are searched.
        if self.pairs.len() == self.n_points * self.n_points {
            Some(p * self.n_points + q)
        } else {
            self.pairs.iter().position(|&pq| pq == (p, q))
        }
    }

    pub fn y_var(&self, p: usize) -> usize {
        self.y_offset + p
    }
}

/// Full LP: `∑_p z_pq = 1 ∀q`, `z_pq ≤ y_p ∀p,q`, `∑ y = k`, box `[0, 1]`.
pub fn build_kmedian_lp(d: &DistanceMatrix, k: usize) -> Result<KMedianLpEncoding> {
    let n = d.size();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|p| (0..n).map(move |q| (p, q))).collect();
    encode(d, k, pairs)
}

fn encode(d: &DistanceMatrix, k: usize, pairs: Vec<(usize, usize)>) -> Result<KMedianLpEncoding> {
    let n = d.size();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 ≤ k ≤ N, got k = {k}, N = {n}")));
    }
    let mut problem = LpProblem::new();
    for &(p, q) in &pairs {
        problem.add_var(d.get(p, q), 0.0, 1.0, format!("z_{p}_{q}"));
    }
    let y_offset = pairs.len();
    for p in 0..n {
        problem.add_var(0.0, 0.0, 1.0, format!("y_{p}"));
    }
    let mut serve: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (t, &(_, q)) in pairs.iter().enumerate() {
        serve[q].push((t, 1.0));
    }
    for (q, row) in serve.into_iter().enumerate() {
        problem.add_eq(row, 1.0, format!("assign_{q}"));
    }
    for (t, &(p, q)) in pairs.iter().enumerate() {
        problem.add_ub(vec![(t, 1.0), (y_offset + p, -1.0)], 0.0, format!("open_{p}_{q}"));
    }
    problem.add_eq((0..n).map(|p| (y_offset + p, 1.0)).collect(), k as f64, "count");
    Ok(KMedianLpEncoding { n_points: n, k, pairs, y_offset, problem })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMedianLpResult {
    pub status: LpStatus,
    pub objective: f64,
    /// Dense `z[p·N + q]`.
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub integral: bool,
    pub assignment: Option<ClusteringAssignment>,
    pub pricing_rounds: usize,
    pub lp_iterations: usize,
}

impl KMedianLpResult {
    pub fn recovers(&self, planted: &ClusteringAssignment) -> bool {
        self.assignment.as_ref().is_some_and(|a| a.same_partition(planted))
    }
}

/// Solve the full LP by pricing: start from each point's nearest candidate
/// medians plus a feasible spread-out `k`-set, then add every missing
/// `z_pq` with negative reduced cost `d(p,q) − u_q` until none is left.
pub fn solve_kmedian_lp(d: &DistanceMatrix, k: usize) -> Result<KMedianLpResult> {
    solve_kmedian_lp_with(d, k, &lp_options())
}

pub fn solve_kmedian_lp_with(d: &DistanceMatrix, k: usize, opts: &LpOptions) -> Result<KMedianLpResult> {
    let n = d.size();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 ≤ k ≤ N, got k = {k}, N = {n}")));
    }
    let mut member = vec![false; n * n];
    let spread = farthest_first(d, k);
    for q in 0..n {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d.get(a, q).total_cmp(&d.get(b, q)).then(a.cmp(&b)));
        for &p in order.iter().take(INITIAL_CANDIDATES.min(n)).chain(&spread) {
            member[p * n + q] = true;
        }
    }
    let mut iterations = 0;
    let mut previous: Option<(Vec<(usize, usize)>, Basis)> = None;
    for round in 1..=MAX_PRICING_ROUNDS {
        let pairs: Vec<(usize, usize)> =
            (0..n).flat_map(|p| (0..n).map(move |q| (p, q))).filter(|&(p, q)| member[p * n + q]).collect();
        let enc = encode(d, k, pairs)?;
        let sol = match &previous {
            Some((old_pairs, old_basis)) => {
                let start = extend_basis(n, old_pairs, old_basis, &enc.pairs);
                lp::solve_lp_warm(&enc.problem, opts, &start)?
            }
            None => lp::solve_lp_with(&enc.problem, opts)?,
        };
        iterations += sol.iterations;
        if sol.status != LpStatus::Optimal {
            return Ok(KMedianLpResult {
                status: sol.status,
                objective: f64::NAN,
                z: Vec::new(),
                y: Vec::new(),
                integral: false,
                assignment: None,
                pricing_rounds: round,
                lp_iterations: iterations,
            });
        }
        let scale = 1.0 + d.max_abs();
        let mut added = 0;
        for p in 0..n {
            for q in 0..n {
                if !member[p * n + q] && d.get(p, q) - sol.duals_eq[q] < -1e-9 * scale {
                    member[p * n + q] = true;
                    added += 1;
                }
            }
        }
        if added == 0 {
            let mut z = vec![0.0; n * n];
            for (t, &(p, q)) in enc.pairs.iter().enumerate() {
                z[p * n + q] = sol.x[t];
            }
            let y = sol.x[enc.y_offset..].to_vec();
            return Ok(finish(n, k, sol.objective, z, y, round, iterations));
        }
        previous = Some((enc.pairs, sol.basis));
    }
    // Pricing did not settle; fall back to the full model.
    let enc = build_kmedian_lp(d, k)?;
    let sol = lp::solve_lp_with(&enc.problem, opts)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Numerical(format!("full k-median LP returned {:?}", sol.status)));
    }
    let z = sol.x[..n * n].to_vec();
    let y = sol.x[n * n..].to_vec();
    Ok(finish(n, k, sol.objective, z, y, MAX_PRICING_ROUNDS + 1, iterations + sol.iterations))
}

/// Carry a basis over to a larger pair set: new `z_pq` sit at zero and the
/// slacks of their `z_pq ≤ y_p` rows are basic, which stays primal feasible.
fn extend_basis(n: usize, old_pairs: &[(usize, usize)], old: &Basis, pairs: &[(usize, usize)]) -> Basis {
    let n_eq = n + 1;
    let mut index = vec![usize::MAX; n * n];
    for (t, &(p, q)) in old_pairs.iter().enumerate() {
        index[p * n + q] = t;
    }
    let y_old = old_pairs.len();
    let mut structural = Vec::with_capacity(pairs.len() + n);
    let mut slack_basic = Vec::with_capacity(pairs.len());
    let mut artificial_basic = old.artificial_basic[..n_eq].to_vec();
    for &(p, q) in pairs {
        match index[p * n + q] {
            usize::MAX => {
                structural.push(VarStatus::AtLower);
                slack_basic.push(true);
                artificial_basic.push(false);
            }
            t => {
                structural.push(old.structural[t]);
                slack_basic.push(old.slack_basic[t]);
                artificial_basic.push(old.artificial_basic[n_eq + t]);
            }
        }
    }
    structural.extend_from_slice(&old.structural[y_old..]);
    Basis { structural, slack_basic, artificial_basic }
}

fn finish(n: usize, k: usize, objective: f64, z: Vec<f64>, y: Vec<f64>, rounds: usize, iters: usize) -> KMedianLpResult {
    let tol = 1e-6;
    let integral = lp::is_integral(&z, tol) && lp::is_integral(&y, tol);
    let assignment = if integral { decode(n, k, &z, &y) } else { None };
    KMedianLpResult {
        status: LpStatus::Optimal,
        objective,
        z,
        y,
        integral,
        assignment,
        pricing_rounds: rounds,
        lp_iterations: iters,
    }
}

/// Medoids are the open points (ascending); cluster `c` is everything
/// served by the `c`-th medoid.
pub fn decode(n: usize, k: usize, z: &[f64], y: &[f64]) -> Option<ClusteringAssignment> {
    let medoids: Vec<usize> = (0..n).filter(|&p| y[p] > 0.5).collect();
    if medoids.len() != k {
        return None;
    }
    let mut labels = vec![usize::MAX; n];
    for (c, &p) in medoids.iter().enumerate() {
        for q in 0..n {
            if z[p * n + q] > 0.5 {
                labels[q] = c;
            }
        }
    }
    if labels.contains(&usize::MAX) {
        return None;
    }
    let a = ClusteringAssignment { k, labels, medoids: Some(medoids) };
    a.validate().ok().map(|_| a)
}

/// Greedy farthest-first traversal from point 0.
fn farthest_first(d: &DistanceMatrix, k: usize) -> Vec<usize> {
    let n = d.size();
    let mut chosen = vec![0];
    let mut near: Vec<f64> = (0..n).map(|q| d.get(0, q)).collect();
    while chosen.len() < k {
        let next = (0..n).fold(0, |best, q| if near[q] > near[best] { q } else { best });
        chosen.push(next);
        near.iter_mut().enumerate().for_each(|(q, v)| *v = v.min(d.get(next, q)));
    }
    chosen
}

/// `(argmin_p ∑_q d(p,q), min)` over the cluster, ties to the lowest index.
pub fn opt_and_medoid<P: AsRef<[f64]>>(points: &[P], members: &[usize]) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    for &p in &sorted {
        let s: f64 = sorted.iter().map(|&q| dist(points[p].as_ref(), points[q].as_ref())).sum();
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((p, s));
        }
    }
    best.ok_or(Error::EmptyCluster(0))
}

/// `P^{(α)}(y) = ∑_i ∑_{x∈A_i} (α_i − d(y, x))₊`.
pub fn contribution_function<P: AsRef<[f64]>>(points: &[P], clusters: &[Vec<usize>], alphas: &[f64], y: &[f64]) -> f64 {
    clusters
        .iter()
        .zip(alphas)
        .map(|(members, &a)| members.iter().map(|&q| (a - dist(y, points[q].as_ref())).max(0.0)).sum::<f64>())
        .sum()
}

/// Solve `n_1α_1 − OPT_1 = … = n_kα_k − OPT_k` with `mean(α) = anchor`.
pub fn solve_equal_slack_alphas(opts: &[f64], sizes: &[usize], anchor: f64) -> Result<Vec<f64>> {
    if opts.len() != sizes.len() || opts.is_empty() {
        return Err(Error::Dimension("one OPT and one size per cluster".into()));
    }
    if sizes.contains(&0) {
        return Err(Error::EmptyCluster(sizes.iter().position(|&s| s == 0).unwrap_or(0)));
    }
    let k = opts.len() as f64;
    let inv: f64 = sizes.iter().map(|&s| 1.0 / s as f64).sum();
    let base: f64 = opts.iter().zip(sizes).map(|(o, &s)| o / s as f64).sum();
    let slack = (k * anchor - base) / inv;
    Ok(opts.iter().zip(sizes).map(|(o, &s)| (slack + o) / s as f64).collect())
}

/// Per-cluster medoids, OPTs and sizes of a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCosts {
    pub medoids: Vec<usize>,
    pub opts: Vec<f64>,
    pub sizes: Vec<usize>,
}

pub fn cluster_costs<P: AsRef<[f64]>>(points: &[P], assignment: &ClusteringAssignment) -> Result<ClusterCosts> {
    assignment.validate()?;
    let mut out = ClusterCosts { medoids: Vec::new(), opts: Vec::new(), sizes: Vec::new() };
    for members in assignment.clusters() {
        let (m, o) = opt_and_medoid(points, &members)?;
        out.medoids.push(m);
        out.opts.push(o);
        out.sizes.push(members.len());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub holds: bool,
    /// `min_{i≠j} d(c_i, c_j) − 2r` from the planted centers.
    pub theta: f64,
    /// `Θ − (OPT_max − OPT_min)/n`.
    pub slack_gap: f64,
}

fn check_shapes(instance: &ClusterInstance, assignment: &ClusteringAssignment) -> Result<()> {
    if assignment.len() != instance.num_points() || assignment.k != instance.k {
        return Err(Error::Dimension("assignment does not match the instance".into()));
    }
    assignment.validate()
}

pub fn check_separation(instance: &ClusterInstance, assignment: &ClusteringAssignment) -> Result<SeparationReport> {
    check_shapes(instance, assignment)?;
    let costs = cluster_costs(&instance.points, assignment)?;
    let theta = if instance.k > 1 { instance.min_center_distance() - 2.0 * instance.radius } else { f64::INFINITY };
    let hi = costs.opts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = costs.opts.iter().cloned().fold(f64::INFINITY, f64::min);
    let gap = theta - (hi - lo) / instance.n as f64;
    Ok(SeparationReport { holds: theta > 0.0 && gap > 0.0, theta, slack_gap: gap })
}

/// 16 logarithmically spaced radii in `[10⁻³, 1]`.
pub fn default_tau_grid() -> Vec<f64> {
    (0..16).map(|t| 10f64.powf(-3.0 + 3.0 * t as f64 / 15.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterDominanceReport {
    pub holds: bool,
    /// Smallest working grid radius per cluster, if any.
    pub witness_tau: Vec<Option<f64>>,
}

/// Sample-level center dominance: for every cluster `j` some grid radius
/// `τ` must have (i) every sample point of `A_j` within `τ` of the ball
/// center outside `B_{α_i + r}(c_i)` for every `i ≠ j`, (ii) the
/// contribution maximum over `A_j ∖ B_τ(c_j)` strictly below the maximum
/// over `A_j ∩ B_τ(c_j)`, and (iii) `A_j ∩ B_τ(c_j)` nonempty.
pub fn check_center_dominance(
    instance: &ClusterInstance,
    assignment: &ClusteringAssignment,
    alphas: &[f64],
    tau_grid: &[f64],
) -> Result<CenterDominanceReport> {
    check_shapes(instance, assignment)?;
    if tau_grid.is_empty() {
        return Err(Error::EmptyTauGrid);
    }
    if alphas.len() != instance.k {
        return Err(Error::Dimension("one α per cluster".into()));
    }
    let clusters = assignment.clusters();
    let pts = &instance.points;
    let mut grid = tau_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut witness = Vec::with_capacity(instance.k);
    for (j, members) in clusters.iter().enumerate() {
        let c = &instance.centers[j];
        let contrib: Vec<(f64, f64)> = members
            .iter()
            .map(|&p| (dist(pts[p].as_ref(), c), contribution_function(pts, &clusters, alphas, pts[p].as_ref())))
            .collect();
        let exclusive = |x: &[f64]| {
            (0..instance.k).filter(|&i| i != j).all(|i| dist(x, &instance.centers[i]) > alphas[i] + instance.radius)
        };
        let found = grid.iter().copied().find(|&tau| {
            let inside: Vec<usize> = (0..members.len()).filter(|&t| contrib[t].0 <= tau).collect();
            if inside.is_empty() {
                return false;
            }
            if !inside.iter().all(|&t| exclusive(pts[members[t]].as_ref())) {
                return false;
            }
            let max_in = inside.iter().map(|&t| contrib[t].1).fold(f64::NEG_INFINITY, f64::max);
            let max_out = (0..members.len())
                .filter(|&t| contrib[t].0 > tau)
                .map(|t| contrib[t].1)
                .fold(f64::NEG_INFINITY, f64::max);
            max_out < max_in
        });
        witness.push(found);
    }
    Ok(CenterDominanceReport { holds: witness.iter().all(Option::is_some), witness_tau: witness })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMedianCheck {
    pub certified: bool,
    /// `(1/k) ∑ (n_i α_i − OPT_i)`.
    pub lhs: f64,
    pub max_rhs: f64,
    pub argmax_point: usize,
}

/// Check the cluster-constant dual inequality at every `s ∈ P`.
pub fn certify_kmedian<P: AsRef<[f64]>>(
    points: &[P],
    assignment: &ClusteringAssignment,
    alphas: &[f64],
) -> Result<KMedianCheck> {
    if points.len() != assignment.len() {
        return Err(Error::Dimension("assignment does not match the points".into()));
    }
    let costs = cluster_costs(points, assignment)?;
    certify_with_costs(points, assignment, &costs, alphas)
}

fn certify_with_costs<P: AsRef<[f64]>>(
    points: &[P],
    assignment: &ClusteringAssignment,
    costs: &ClusterCosts,
    alphas: &[f64],
) -> Result<KMedianCheck> {
    if alphas.len() != assignment.k {
        return Err(Error::Dimension("one α per cluster".into()));
    }
    let k = assignment.k as f64;
    let lhs = costs.sizes.iter().zip(&costs.opts).zip(alphas).map(|((&s, o), a)| s as f64 * a - o).sum::<f64>() / k;
    let clusters = assignment.clusters();
    let (argmax_point, max_rhs) = (0..points.len())
        .map(|s| (s, contribution_function(points, &clusters, alphas, points[s].as_ref())))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    let certified = lhs >= max_rhs - CERT_ROUNDING * (1.0 + lhs.abs());
    Ok(KMedianCheck { certified, lhs, max_rhs, argmax_point })
}

/// The cluster-constant dual: one α per cluster plus the bookkeeping used to
/// derive it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMedianCertificate {
    pub certified: bool,
    pub anchor: f64,
    pub alphas: Vec<f64>,
    pub theta: f64,
    pub witness_tau: Vec<Option<f64>>,
    pub lhs: f64,
    pub max_rhs: f64,
    pub medoids: Vec<usize>,
    pub opts: Vec<f64>,
    /// Common value of `n_j α_j − OPT_j`.
    pub slack: f64,
    pub center_dominance: bool,
    pub separation: bool,
}

impl KMedianCertificate {
    pub fn margin(&self) -> f64 {
        self.lhs - self.max_rhs
    }
}

pub const ANCHOR_POINTS: usize = 32;

/// Anchors evenly spaced over `(1 + 10⁻⁶, 1 + Θ − 10⁻⁶)`.
pub fn anchor_grid(theta: f64) -> Vec<f64> {
    let (lo, hi) = (1.0 + 1e-6, 1.0 + theta - 1e-6);
    if !(hi > lo) {
        return Vec::new();
    }
    (0..ANCHOR_POINTS).map(|t| lo + (hi - lo) * t as f64 / (ANCHOR_POINTS - 1) as f64).collect()
}

/// Sweep equal-slack α over the anchor grid. Certified if any anchor
/// certifies; the reported anchor is the median certifying one (margins at
/// certifying anchors are rounding-level, so the middle of the certifying
/// run is kept), otherwise the anchor with the largest `lhs − max_rhs`.
pub fn certify_kmedian_sweep(instance: &ClusterInstance, assignment: &ClusteringAssignment) -> Result<KMedianCertificate> {
    check_shapes(instance, assignment)?;
    let sep = check_separation(instance, assignment)?;
    let costs = cluster_costs(&instance.points, assignment)?;
    let theta = if sep.theta.is_finite() { sep.theta } else { 1.0 };
    let mut tried = Vec::new();
    for anchor in anchor_grid(theta) {
        let alphas = solve_equal_slack_alphas(&costs.opts, &costs.sizes, anchor)?;
        let check = certify_with_costs(&instance.points, assignment, &costs, &alphas)?;
        tried.push((anchor, alphas, check));
    }
    let certifying: Vec<usize> = (0..tried.len()).filter(|&t| tried[t].2.certified).collect();
    let pick = if certifying.is_empty() {
        (0..tried.len()).max_by(|&a, &b| {
            let (ma, mb) = (tried[a].2.lhs - tried[a].2.max_rhs, tried[b].2.lhs - tried[b].2.max_rhs);
            ma.total_cmp(&mb).then(b.cmp(&a))
        })
    } else {
        Some(certifying[(certifying.len() - 1) / 2])
    };
    let best = pick.map(|t| tried.swap_remove(t));
    let Some((anchor, alphas, check)) = best else {
        return Ok(KMedianCertificate {
            certified: false,
            anchor: f64::NAN,
            alphas: Vec::new(),
            theta: sep.theta,
            witness_tau: vec![None; instance.k],
            lhs: f64::NAN,
            max_rhs: f64::NAN,
            medoids: costs.medoids,
            opts: costs.opts,
            slack: f64::NAN,
            center_dominance: false,
            separation: sep.holds,
        });
    };
    let cd = check_center_dominance(instance, assignment, &alphas, &default_tau_grid())?;
    let slack = costs.sizes[0] as f64 * alphas[0] - costs.opts[0];
    Ok(KMedianCertificate {
        certified: check.certified,
        anchor,
        alphas,
        theta: sep.theta,
        witness_tau: cd.witness_tau,
        lhs: check.lhs,
        max_rhs: check.max_rhs,
        medoids: costs.medoids,
        opts: costs.opts,
        slack,
        center_dominance: cd.holds,
        separation: sep.holds,
    })
}

/// Convenience: LP solve on an instance's plain distance matrix.
pub fn solve_instance(instance: &ClusterInstance) -> Result<KMedianLpResult> {
    solve_kmedian_lp(&euclidean_distances(&instance.points), instance.k)
}
