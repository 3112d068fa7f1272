//! The k-means LP, its distance-dominance necessary condition and the
//! scalar ξ-window dual certificate.
//!
//! Variables are `z_pq` with `∑_q z_pq = 1` for every `p`, `z_pq ≤ z_pp`,
//! `∑_p z_pp = k` and costs `d²(p, q)`. The planted solution puts
//! `1/|C_p|` on every pair inside a cluster, so the LP value is
//! `∑_t (1/|A_t|) ∑_{i,j∈A_t} d²`, twice the centroid k-means cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{squared_distances, ClusterInstance, ClusteringAssignment, SquaredDistanceMatrix};
use crate::lp::{self, Basis, LpOptions, LpProblem, LpStatus, VarStatus};

const INITIAL_CANDIDATES: usize = 16;
const MAX_PRICING_ROUNDS: usize = 60;
/// Strict inequalities on squared distances.
pub const STRICT_TOL: f64 = 1e-10;
/// Entry tolerance for broad-sense integrality.
pub const INTEGRALITY_TOL: f64 = 1e-6;

/// Compiled LP. `pairs[t] = (p, q)` is the pair behind variable `t`;
/// `off_diag[s]` is the variable index behind `≤` row `s`.
#[derive(Debug, Clone)]
pub struct KMeansLpEncoding {
    pub n_points: usize,
    pub k: usize,
    pub pairs: Vec<(usize, usize)>,
    pub off_diag: Vec<usize>,
    pub problem: LpProblem,
}

impl KMeansLpEncoding {
    pub fn z_var(&self, p: usize, q: usize) -> Option<usize> {
        if self.pairs.len() == self.n_points * self.n_points {
            Some(p * self.n_points + q)
        } else {
            self.pairs.iter().position(|&pq| pq == (p, q))
        }
    }
}

pub fn build_kmeans_lp(d: &SquaredDistanceMatrix, k: usize) -> Result<KMeansLpEncoding> {
    let n = d.size();
    encode(d, k, (0..n).flat_map(|p| (0..n).map(move |q| (p, q))).collect())
}

/// `pairs` must contain every diagonal pair.
fn encode(d: &SquaredDistanceMatrix, k: usize, pairs: Vec<(usize, usize)>) -> Result<KMeansLpEncoding> {
    let n = d.size();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 ≤ k ≤ N, got k = {k}, N = {n}")));
    }
    let mut problem = LpProblem::new();
    let mut diag = vec![usize::MAX; n];
    for (t, &(p, q)) in pairs.iter().enumerate() {
        problem.add_var(d.get(p, q), 0.0, 1.0, format!("z_{p}_{q}"));
        if p == q {
            diag[p] = t;
        }
    }
    if diag.contains(&usize::MAX) {
        return Err(Error::invalid("restricted k-means LP must keep every z_pp"));
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (t, &(p, _)) in pairs.iter().enumerate() {
        rows[p].push((t, 1.0));
    }
    for (p, row) in rows.into_iter().enumerate() {
        problem.add_eq(row, 1.0, format!("assign_{p}"));
    }
    problem.add_eq(diag.iter().map(|&t| (t, 1.0)).collect(), k as f64, "count");
    let mut off_diag = Vec::new();
    for (t, &(p, q)) in pairs.iter().enumerate() {
        if p != q {
            problem.add_ub(vec![(t, 1.0), (diag[p], -1.0)], 0.0, format!("open_{p}_{q}"));
            off_diag.push(t);
        }
    }
    Ok(KMeansLpEncoding { n_points: n, k, pairs, off_diag, problem })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansLpResult {
    pub status: LpStatus,
    /// Raw LP value `∑ d² z`.
    pub objective: f64,
    /// `objective / 2`, comparable with `kmeans_cost`.
    pub cost: f64,
    /// Dense `z[p·N + q]`.
    pub z: Vec<f64>,
    /// Entries in `{0, 1/|C_p|}` with consistent supports.
    pub integral: bool,
    pub assignment: Option<ClusteringAssignment>,
    pub pricing_rounds: usize,
    pub lp_iterations: usize,
}

impl KMeansLpResult {
    pub fn recovers(&self, planted: &ClusteringAssignment) -> bool {
        self.assignment.as_ref().is_some_and(|a| a.same_partition(planted))
    }
}

pub fn solve_kmeans_lp(d: &SquaredDistanceMatrix, k: usize) -> Result<KMeansLpResult> {
    solve_kmeans_lp_with(d, k, &crate::kmedian::lp_options())
}

/// Column generation: start from each point's nearest neighbours, the
/// diagonal and the blocks of a Voronoi partition around a farthest-first
/// `k`-set (which keeps the restricted LP feasible), then add each missing
/// `z_pq` whose reduced cost `d²(p,q) − u_p` is negative.
pub fn solve_kmeans_lp_with(d: &SquaredDistanceMatrix, k: usize, opts: &LpOptions) -> Result<KMeansLpResult> {
    let n = d.size();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 ≤ k ≤ N, got k = {k}, N = {n}")));
    }
    let mut member = vec![false; n * n];
    let seeds = farthest_first(d, k);
    let cell: Vec<usize> = (0..n)
        .map(|q| (0..k).min_by(|&a, &b| d.get(seeds[a], q).total_cmp(&d.get(seeds[b], q))).unwrap_or(0))
        .collect();
    for p in 0..n {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d.get(p, a).total_cmp(&d.get(p, b)).then(a.cmp(&b)));
        for &q in order.iter().take(INITIAL_CANDIDATES.min(n)) {
            member[p * n + q] = true;
        }
        member[p * n + p] = true;
        for q in 0..n {
            if cell[q] == cell[p] {
                member[p * n + q] = true;
            }
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
            return Ok(KMeansLpResult {
                status: sol.status,
                objective: f64::NAN,
                cost: f64::NAN,
                z: Vec::new(),
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
                if !member[p * n + q] && d.get(p, q) - sol.duals_eq[p] < -1e-9 * scale {
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
            return Ok(finish(n, k, sol.objective, z, round, iterations));
        }
        previous = Some((enc.pairs, sol.basis));
    }
    let enc = build_kmeans_lp(d, k)?;
    let sol = lp::solve_lp_with(&enc.problem, opts)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Numerical(format!("full k-means LP returned {:?}", sol.status)));
    }
    Ok(finish(n, k, sol.objective, sol.x, MAX_PRICING_ROUNDS + 1, iterations + sol.iterations))
}

/// New `z_pq` enter at zero with their `z_pq ≤ z_pp` slack basic.
fn extend_basis(n: usize, old_pairs: &[(usize, usize)], old: &Basis, pairs: &[(usize, usize)]) -> Basis {
    let n_eq = n + 1;
    let mut var_of = vec![usize::MAX; n * n];
    let mut row_of = vec![usize::MAX; n * n];
    let mut s = 0;
    for (t, &(p, q)) in old_pairs.iter().enumerate() {
        var_of[p * n + q] = t;
        if p != q {
            row_of[p * n + q] = s;
            s += 1;
        }
    }
    let mut structural = Vec::with_capacity(pairs.len());
    let mut slack_basic = Vec::new();
    let mut artificial_basic = old.artificial_basic[..n_eq].to_vec();
    for &(p, q) in pairs {
        let key = p * n + q;
        structural.push(match var_of[key] {
            usize::MAX => VarStatus::AtLower,
            t => old.structural[t],
        });
        if p != q {
            match row_of[key] {
                usize::MAX => {
                    slack_basic.push(true);
                    artificial_basic.push(false);
                }
                r => {
                    slack_basic.push(old.slack_basic[r]);
                    artificial_basic.push(old.artificial_basic[n_eq + r]);
                }
            }
        }
    }
    Basis { structural, slack_basic, artificial_basic }
}

fn farthest_first(d: &SquaredDistanceMatrix, k: usize) -> Vec<usize> {
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

fn finish(n: usize, k: usize, objective: f64, z: Vec<f64>, rounds: usize, iters: usize) -> KMeansLpResult {
    let assignment = decode_broad_sense(n, k, &z, INTEGRALITY_TOL);
    KMeansLpResult {
        status: LpStatus::Optimal,
        objective,
        cost: objective / 2.0,
        z,
        integral: assignment.is_some(),
        assignment,
        pricing_rounds: rounds,
        lp_iterations: iters,
    }
}

/// Partition behind a broad-sense integral `z`: row `p` must be `1/|S_p|`
/// on its support `S_p` and zero elsewhere, supports of one block must
/// coincide, and there must be exactly `k` blocks.
pub fn decode_broad_sense(n: usize, k: usize, z: &[f64], tol: f64) -> Option<ClusteringAssignment> {
    if z.len() != n * n {
        return None;
    }
    let supports: Vec<Vec<usize>> = (0..n).map(|p| (0..n).filter(|&q| z[p * n + q] > tol).collect()).collect();
    for (p, sup) in supports.iter().enumerate() {
        if !sup.contains(&p) {
            return None;
        }
        let v = 1.0 / sup.len() as f64;
        if sup.iter().any(|&q| (z[p * n + q] - v).abs() > tol) {
            return None;
        }
    }
    let mut labels = vec![usize::MAX; n];
    let mut next = 0;
    for p in 0..n {
        if labels[p] != usize::MAX {
            continue;
        }
        for &q in &supports[p] {
            if supports[q] != supports[p] {
                return None;
            }
            labels[q] = next;
        }
        next += 1;
    }
    if next != k {
        return None;
    }
    ClusteringAssignment::new(labels, k).ok()
}

pub fn solve_instance(instance: &ClusterInstance) -> Result<KMeansLpResult> {
    solve_kmeans_lp(&squared_distances(&instance.points), instance.k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub p: usize,
    pub q: usize,
    pub r: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceDominance {
    pub holds: bool,
    /// First `p` (ascending) with `d(p,q) ≥ d(p,r)`, `q` its farthest
    /// cluster mate and `r` its nearest outsider.
    pub violating: Option<Triple>,
}

fn check_square(d: &SquaredDistanceMatrix, assignment: &ClusteringAssignment) -> Result<()> {
    if d.size() != assignment.len() {
        return Err(Error::Dimension(format!("{} points but {} labels", d.size(), assignment.len())));
    }
    assignment.validate()
}

/// Every within-cluster squared distance strictly below every cross-cluster
/// one from the same point, up to [`STRICT_TOL`].
pub fn check_distance_dominance(d: &SquaredDistanceMatrix, assignment: &ClusteringAssignment) -> Result<DistanceDominance> {
    check_square(d, assignment)?;
    let n = d.size();
    let labels = &assignment.labels;
    for p in 0..n {
        let inside = (0..n).filter(|&q| labels[q] == labels[p]).max_by(|&a, &b| d.get(p, a).total_cmp(&d.get(p, b)).then(b.cmp(&a)));
        let outside = (0..n).filter(|&r| labels[r] != labels[p]).min_by(|&a, &b| d.get(p, a).total_cmp(&d.get(p, b)).then(a.cmp(&b)));
        if let (Some(q), Some(r)) = (inside, outside) {
            if d.get(p, q) + STRICT_TOL >= d.get(p, r) {
                return Ok(DistanceDominance { holds: false, violating: Some(Triple { p, q, r }) });
            }
        }
    }
    Ok(DistanceDominance { holds: true, violating: None })
}

/// Per-point quantities of the cluster-constant dual and the resulting
/// window for `ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiWindow {
    pub m_in: Vec<f64>,
    /// `+∞` when `p` is alone in the instance's only cluster.
    pub m_out: Vec<f64>,
    pub avg: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl XiWindow {
    pub fn is_empty(&self) -> bool {
        !(self.lower <= self.upper)
    }

    /// Interior point used by the certificate: the midpoint, or `lower + 1`
    /// when the window is unbounded above.
    pub fn pick(&self) -> Option<f64> {
        if self.is_empty() {
            None
        } else if self.upper.is_finite() {
            Some(0.5 * (self.lower + self.upper))
        } else {
            Some(self.lower + 1.0)
        }
    }

    /// `α_p = avg(p) + ξ/|C_p|` for a chosen `ξ`.
    pub fn alphas(&self, xi: f64, sizes: &[usize], labels: &[usize]) -> Vec<f64> {
        self.avg.iter().zip(labels).map(|(a, &l)| a + xi / sizes[l] as f64).collect()
    }
}

/// `|C_p|·(m_in − avg) ≤ ξ ≤ |C_p|·(m_out − avg)` for every `p`; with equal
/// cluster sizes `n` this is `[n·max(m_in − avg), n·min(m_out − avg)]`.
pub fn xi_window(d: &SquaredDistanceMatrix, assignment: &ClusteringAssignment) -> Result<XiWindow> {
    check_square(d, assignment)?;
    let n = d.size();
    let labels = &assignment.labels;
    let sizes = assignment.sizes();
    let mut w = XiWindow {
        m_in: vec![0.0; n],
        m_out: vec![f64::INFINITY; n],
        avg: vec![0.0; n],
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };
    for p in 0..n {
        let size = sizes[labels[p]] as f64;
        let mut sum = 0.0;
        for q in 0..n {
            let v = d.get(p, q);
            if labels[q] == labels[p] {
                sum += v;
                w.m_in[p] = w.m_in[p].max(v);
            } else {
                w.m_out[p] = w.m_out[p].min(v);
            }
        }
        w.avg[p] = sum / size;
        w.lower = w.lower.max(size * (w.m_in[p] - w.avg[p]));
        w.upper = w.upper.min(size * (w.m_out[p] - w.avg[p]));
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansLpCertificate {
    pub certified: bool,
    pub xi: Option<f64>,
    pub window: XiWindow,
    pub distance_dominance: DistanceDominance,
}

/// Certified when the ξ-window is nonempty; `ξ` is its midpoint.
pub fn certify_kmeans_lp(d: &SquaredDistanceMatrix, assignment: &ClusteringAssignment) -> Result<KMeansLpCertificate> {
    let window = xi_window(d, assignment)?;
    let distance_dominance = check_distance_dominance(d, assignment)?;
    let xi = window.pick();
    Ok(KMeansLpCertificate { certified: xi.is_some(), xi, window, distance_dominance })
}

/// `(Δ − 2)² − 4`: the feasibility margin of the ξ-window once the boundary
/// averages equalize. Positive exactly for `Δ > 4`.
pub fn boundary_margin(delta: f64) -> f64 {
    (delta - 2.0).powi(2) - 4.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{brute_force_optimum, kmeans_cost, sample_planted, Distribution, Objective};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x, 0.0]).collect()
    }

    #[test]
    fn singletons_cost_nothing() {
        let pts = line(&[0.0, 1.0, 3.0]);
        let r = solve_kmeans_lp(&squared_distances(&pts), 3).unwrap();
        assert_abs_diff_eq!(r.objective, 0.0, epsilon = 1e-12);
        for p in 0..3 {
            for q in 0..3 {
                assert_abs_diff_eq!(r.z[p * 3 + q], if p == q { 1.0 } else { 0.0 }, epsilon = 1e-9);
            }
        }
        assert!(r.integral);
    }

    #[test]
    fn two_far_pairs_split_in_halves() {
        let pts = line(&[0.0, 1.0, 100.0, 101.0]);
        let r = solve_kmeans_lp(&squared_distances(&pts), 2).unwrap();
        let expect = [[0.5, 0.5, 0.0, 0.0], [0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5], [0.0, 0.0, 0.5, 0.5]];
        for p in 0..4 {
            for q in 0..4 {
                assert_abs_diff_eq!(r.z[p * 4 + q], expect[p][q], epsilon = 1e-9);
            }
        }
        assert!(r.integral);
        assert_abs_diff_eq!(r.cost, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn far_planted_matches_brute_force() {
        let inst = sample_planted(3, 2, 4, 5.0, Distribution::UniformBall, 3).unwrap();
        let r = solve_instance(&inst).unwrap();
        assert!(r.recovers(&inst.planted()));
        let (_, opt) = brute_force_optimum(&inst.points, 2, Objective::Kmeans).unwrap();
        assert_abs_diff_eq!(r.cost, opt, epsilon = 1e-7);
    }

    #[test]
    fn restricted_and_full_models_agree() {
        let inst = sample_planted(2, 2, 6, 2.4, Distribution::UniformBall, 5).unwrap();
        let d = squared_distances(&inst.points);
        let restricted = solve_kmeans_lp(&d, 2).unwrap();
        let full = lp::solve_lp_with(&build_kmeans_lp(&d, 2).unwrap().problem, &crate::kmedian::lp_options()).unwrap();
        assert_abs_diff_eq!(restricted.objective, full.objective, epsilon = 1e-8);
    }

    #[test]
    fn restricted_model_must_keep_the_diagonal() {
        let d = squared_distances(&line(&[0.0, 1.0]));
        assert!(encode(&d, 1, vec![(0, 0), (0, 1), (1, 0)]).is_err());
    }

    #[test]
    fn singleton_clusters_dominate_vacuously() {
        let pts = line(&[0.0, 5.0]);
        let a = ClusteringAssignment::new(vec![0, 1], 2).unwrap();
        let r = check_distance_dominance(&squared_distances(&pts), &a).unwrap();
        assert!(r.holds);
        assert!(r.violating.is_none());
    }

    #[test]
    fn colinear_dominance_witness() {
        let pts = line(&[0.0, 1.0, 1.5]);
        let a = ClusteringAssignment::new(vec![0, 0, 1], 2).unwrap();
        let d = squared_distances(&pts);
        let r = check_distance_dominance(&d, &a).unwrap();
        assert!(!r.holds);
        assert_eq!(r.violating, Some(Triple { p: 1, q: 0, r: 2 }));
        // The window is empty at the witness.
        assert!(xi_window(&d, &a).unwrap().is_empty());
    }

    #[test]
    fn far_pairs_have_a_wide_window() {
        let pts = line(&[0.0, 1.0, 100.0, 101.0]);
        let a = ClusteringAssignment::new(vec![0, 0, 1, 1], 2).unwrap();
        let c = certify_kmeans_lp(&squared_distances(&pts), &a).unwrap();
        assert!(c.certified);
        // m_in − avg = 1/2 for every point, m_out − avg = 99² − 1/2.
        assert_abs_diff_eq!(c.window.lower, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.window.upper, 2.0 * (99.0f64.powi(2) - 0.5), epsilon = 1e-9);
        assert_abs_diff_eq!(c.xi.unwrap(), 0.5 * (c.window.lower + c.window.upper), epsilon = 1e-9);
    }

    #[test]
    fn singleton_window() {
        let pts = line(&[0.0, 2.0, 7.0]);
        let a = ClusteringAssignment::new(vec![0, 1, 2], 3).unwrap();
        let w = xi_window(&squared_distances(&pts), &a).unwrap();
        assert_eq!(w.lower, 0.0);
        assert_abs_diff_eq!(w.upper, 4.0, epsilon = 1e-12);
        assert!(w.m_in.iter().chain(&w.avg).all(|&v| v == 0.0));
    }

    #[test]
    fn certified_alphas_are_dual_feasible() {
        let inst = sample_planted(3, 2, 10, 4.6, Distribution::UniformBall, 4).unwrap();
        let d = squared_distances(&inst.points);
        let a = inst.planted();
        let c = certify_kmeans_lp(&d, &a).unwrap();
        assert!(c.certified);
        let alphas = c.window.alphas(c.xi.unwrap(), &a.sizes(), &a.labels);
        for p in 0..d.size() {
            assert!(alphas[p] + 1e-9 >= c.window.m_in[p]);
            assert!(alphas[p] <= c.window.m_out[p] + 1e-9);
        }
    }

    #[test]
    fn planted_far_apart_certified_and_solved() {
        let inst = sample_planted(3, 2, 15, 4.5, Distribution::UniformBall, 7).unwrap();
        let d = squared_distances(&inst.points);
        let planted = inst.planted();
        let c = certify_kmeans_lp(&d, &planted).unwrap();
        assert!(c.certified);
        let r = solve_kmeans_lp(&d, 2).unwrap();
        assert!(r.recovers(&planted));
        assert_abs_diff_eq!(r.cost, kmeans_cost(&inst.points, &planted).unwrap(), epsilon = 1e-7);
    }

    fn dominance_failures(delta: f64, n: usize, seeds: u64) -> usize {
        (0..seeds)
            .filter(|&s| {
                let inst = sample_planted(3, 2, n, delta, Distribution::UniformBall, s).unwrap();
                !check_distance_dominance(&squared_distances(&inst.points), &inst.planted()).unwrap().holds
            })
            .count()
    }

    #[test]
    fn dominance_failure_rates_below_four() {
        // Independent simulation (400 trials each): 0.135 at (3.5, 20),
        // 0.59 at (3.5, 50), 1.0 at (3.0, 50), 0.0 at (4.0, 50).
        assert_eq!(dominance_failures(3.5, 20, 20), 1);
        assert_eq!(dominance_failures(3.0, 50, 20), 20);
        assert_eq!(dominance_failures(4.0, 50, 20), 0);
    }

    #[test]
    fn boundary_margin_values() {
        assert_eq!(boundary_margin(4.0), 0.0);
        assert_eq!(boundary_margin(5.0), 5.0);
        assert_eq!(boundary_margin(3.0), -3.0);
    }

    #[test]
    fn decode_rejects_inconsistent_supports() {
        // Row 0 claims {0,1}, row 1 claims {1,2}.
        let z = vec![0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 1.0];
        assert!(decode_broad_sense(3, 2, &z, 1e-9).is_none());
        let z = vec![0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 1.0];
        let a = decode_broad_sense(3, 2, &z, 1e-9).unwrap();
        assert_eq!(a.labels, vec![0, 0, 1]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn planted_recovery_implies_dominance(seed in 0u64..10_000, delta in 2.2f64..5.0) {
            let inst = sample_planted(2, 2, 5, delta, Distribution::UniformBall, seed).unwrap();
            let d = squared_distances(&inst.points);
            let r = solve_kmeans_lp(&d, 2).unwrap();
            if r.recovers(&inst.planted()) {
                prop_assert!(check_distance_dominance(&d, &inst.planted()).unwrap().holds);
            }
        }

        #[test]
        fn certified_means_lp_optimal(seed in 0u64..10_000, delta in 3.5f64..6.0) {
            let inst = sample_planted(2, 2, 5, delta, Distribution::UniformBall, seed).unwrap();
            let d = squared_distances(&inst.points);
            let planted = inst.planted();
            if certify_kmeans_lp(&d, &planted).unwrap().certified {
                let r = solve_kmeans_lp(&d, 2).unwrap();
                prop_assert!((r.cost - kmeans_cost(&inst.points, &planted).unwrap()).abs() <= 1e-7);
            }
        }
    }
}
