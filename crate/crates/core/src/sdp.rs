//! The k-means SDP: explicit dual certificate, average-separation checks,
//! closed-form margins and a consensus-ADMM solver.
//!
//! The primal is `max −tr(DX)` over `X ⪰ 0`, `X ≥ 0`, `X1 = 1`,
//! `tr X = k`. The planted optimum is `X = (1/n)∑_a 1_a1_aᵀ`; its dual
//! certificate is `(z, α, β, Q)` with
//! `Q = zI + ½∑α_i(e_i1ᵀ + 1e_iᵀ) − ½β + D ⪰ 0` and `β ≥ 0`, `β^(a,a) = 0`.
//!
//! Clusters need not be stored contiguously; every block quantity is
//! indexed by original point index and resolved through the assignment.

use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::geometry::{centroids, dist2, squared_distances, ClusterInstance, ClusteringAssignment, SquaredDistanceMatrix};
use crate::kmeans_lp::decode_broad_sense;
use crate::linalg::{self, eigh_with, max_rayleigh_perp_ones, nullspace_dimension_of, SymmetricMatrix};

/// Entry tolerance used when decoding an ADMM iterate as a partition matrix.
pub const SOLUTION_TOL: f64 = 1e-4;

/// Per-cluster sums of the squared-distance matrix.
struct Blocks {
    n: usize,
    k: usize,
    label: Vec<usize>,
    /// `row[p * k + b] = ∑_{q∈b} D_pq`.
    row: Vec<f64>,
    /// `total[a * k + b] = 1ᵀD^(a,b)1`.
    total: Vec<f64>,
}

impl Blocks {
    fn new(d: &SquaredDistanceMatrix, assignment: &ClusteringAssignment) -> Result<Self> {
        let big_n = d.size();
        if assignment.len() != big_n {
            return Err(Error::Dimension(format!("{} labels for {big_n} points", assignment.len())));
        }
        assignment.validate()?;
        let k = assignment.k;
        let sizes = assignment.sizes();
        let n = sizes[0];
        if sizes.iter().any(|&s| s != n) {
            return Err(Error::UnequalClusters);
        }
        let label = assignment.labels.clone();
        let mut row = vec![0.0; big_n * k];
        for p in 0..big_n {
            for (q, &v) in d.row(p).iter().enumerate() {
                row[p * k + label[q]] += v;
            }
        }
        let mut total = vec![0.0; k * k];
        for p in 0..big_n {
            for b in 0..k {
                total[label[p] * k + b] += row[p * k + b];
            }
        }
        Ok(Self { n, k, label, row, total })
    }

    fn row(&self, p: usize, b: usize) -> f64 {
        self.row[p * self.k + b]
    }

    fn total(&self, a: usize, b: usize) -> f64 {
        self.total[a * self.k + b]
    }

    /// Left-hand side of the average-separation inequality for a cross
    /// pair `p ∈ a`, `q ∈ b`, written in distances only.
    fn margin(&self, d: &SquaredDistanceMatrix, p: usize, q: usize) -> f64 {
        let (a, b) = (self.label[p], self.label[q]);
        let nf = self.n as f64;
        2.0 * d.get(p, q) - (self.row(p, b) + self.row(q, a) + self.row(p, a) + self.row(q, b)) / nf
            + (self.total(a, b) + 0.5 * (self.total(a, a) + self.total(b, b))) / (nf * nf)
    }

    fn alpha(&self, p: usize, z: f64) -> f64 {
        let a = self.label[p];
        let nf = self.n as f64;
        -z / nf + self.total(a, a) / (nf * nf) - 2.0 * self.row(p, a) / nf
    }
}

/// The assembled dual certificate and its spectral diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpCertificate {
    pub z: f64,
    pub alpha: Vec<f64>,
    pub q: SymmetricMatrix,
    /// Zero on within-cluster pairs.
    pub beta: SymmetricMatrix,
    pub min_eig_q: f64,
    /// Smallest eigenvalue of `Q` on the orthogonal complement of the
    /// cluster indicators.
    pub min_eig_complement: f64,
    pub nullspace_dim: usize,
    pub min_beta: f64,
    pub dual_objective: f64,
}

/// The JSON dump shape: scalars and `α` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub z: f64,
    pub alpha: Vec<f64>,
    #[serde(rename = "min_eig_Q")]
    pub min_eig_q: f64,
    pub nullspace_dim: usize,
    pub min_beta: f64,
    pub dual_objective: f64,
}

impl SdpCertificate {
    pub fn summary(&self) -> CertificateSummary {
        CertificateSummary {
            z: self.z,
            alpha: self.alpha.clone(),
            min_eig_q: self.min_eig_q,
            nullspace_dim: self.nullspace_dim,
            min_beta: self.min_beta,
            dual_objective: self.dual_objective,
        }
    }
}

/// `−(1/n)∑_a 1ᵀD^(a,a)1`, the SDP objective at the planted solution.
pub fn planted_objective(d: &SquaredDistanceMatrix, assignment: &ClusteringAssignment) -> Result<f64> {
    let blocks = Blocks::new(d, assignment)?;
    Ok(-(0..blocks.k).map(|a| blocks.total(a, a)).sum::<f64>() / blocks.n as f64)
}

pub fn build_certificate(d: &SquaredDistanceMatrix, assignment: &ClusteringAssignment, z: f64) -> Result<SdpCertificate> {
    build_certificate_with(d, assignment, z, &Tolerances::default())
}

pub fn build_certificate_with(
    d: &SquaredDistanceMatrix,
    assignment: &ClusteringAssignment,
    z: f64,
    tol: &Tolerances,
) -> Result<SdpCertificate> {
    let blocks = Blocks::new(d, assignment)?;
    let big_n = d.size();
    let nf = blocks.n as f64;
    let label = &blocks.label;
    let alpha: Vec<f64> = (0..big_n).map(|p| blocks.alpha(p, z)).collect();
    let q = SymmetricMatrix::from_fn(big_n, |p, s| {
        let (a, b) = (label[p], label[s]);
        if a == b {
            let diag = if p == s { z } else { 0.0 };
            diag + 0.5 * (alpha[p] + alpha[s]) + d.get(p, s)
        } else {
            (blocks.row(p, b) + blocks.row(s, a)) / nf - d.get(p, s) - blocks.total(a, b) / (nf * nf)
        }
    });
    // β from the two expressions for the off-diagonal blocks of Q.
    let beta = SymmetricMatrix::from_fn(big_n, |p, s| {
        if label[p] == label[s] {
            0.0
        } else {
            2.0 * (0.5 * (alpha[p] + alpha[s]) + d.get(p, s) - q.get(p, s))
        }
    });
    let min_beta = cross_minimum(&beta, label).map_or(f64::INFINITY, |(v, _, _)| v);
    let dual_objective = blocks.k as f64 * z + alpha.iter().sum::<f64>();
    let spectrum = Spectrum::of(&q, assignment, tol)?;
    Ok(SdpCertificate {
        z,
        alpha,
        q,
        beta,
        min_eig_q: spectrum.min_eig,
        min_eig_complement: spectrum.min_eig_complement,
        nullspace_dim: spectrum.nullspace_dim,
        min_beta,
        dual_objective,
    })
}

fn cross_minimum(m: &SymmetricMatrix, label: &[usize]) -> Option<(f64, usize, usize)> {
    let mut best: Option<(f64, usize, usize)> = None;
    for p in 0..label.len() {
        for s in p + 1..label.len() {
            if label[p] != label[s] {
                let v = m.get(p, s);
                if best.is_none_or(|(b, _, _)| v < b) {
                    best = Some((v, p, s));
                }
            }
        }
    }
    best
}

struct Spectrum {
    min_eig: f64,
    min_eig_complement: f64,
    nullspace_dim: usize,
}

impl Spectrum {
    fn of(q: &SymmetricMatrix, assignment: &ClusteringAssignment, tol: &Tolerances) -> Result<Self> {
        let eig = eigh_with(q, tol)?;
        let nullspace_dim = nullspace_dimension_of(&eig, tol.nullspace_rel);
        // Lift the indicator directions above the rest of the spectrum; the
        // smallest eigenvalue left is the one on the complement.
        let shift = 2.0 * (1.0 + q.frobenius());
        let clusters = assignment.clusters();
        let lifted = SymmetricMatrix::from_fn(q.order(), |i, j| {
            let a = assignment.labels[i];
            let same = a == assignment.labels[j];
            q.get(i, j) + if same { shift / clusters[a].len() as f64 } else { 0.0 }
        });
        let lifted = eigh_with(&lifted, tol)?;
        Ok(Self { min_eig: eig.min(), min_eig_complement: lifted.min(), nullspace_dim })
    }
}

/// `4 max_a max_{x⊥1} xᵀM_aM_aᵀx / xᵀx` from point coordinates.
pub fn z_star<P: AsRef<[f64]>>(points: &[P], assignment: &ClusteringAssignment) -> Result<f64> {
    if assignment.len() != points.len() {
        return Err(Error::Dimension(format!("{} labels for {} points", assignment.len(), points.len())));
    }
    let mut best: f64 = 0.0;
    for members in assignment.clusters() {
        let gram = SymmetricMatrix::from_fn(members.len(), |i, j| {
            let (x, y) = (points[members[i]].as_ref(), points[members[j]].as_ref());
            x.iter().zip(y).map(|(u, v)| u * v).sum()
        });
        best = best.max(max_rayleigh_perp_ones(&gram)?);
    }
    Ok(4.0 * best)
}

/// The same quantity from squared distances: on `x ⊥ 1`,
/// `xᵀM_aM_aᵀx = −½ xᵀD^(a,a)x`.
pub fn z_star_from_distances(d: &SquaredDistanceMatrix, assignment: &ClusteringAssignment) -> Result<f64> {
    if assignment.len() != d.size() {
        return Err(Error::Dimension(format!("{} labels for {} points", assignment.len(), d.size())));
    }
    let mut best: f64 = 0.0;
    for members in assignment.clusters() {
        let g = SymmetricMatrix::from_fn(members.len(), |i, j| -0.5 * d.get(members[i], members[j]));
        best = best.max(max_rayleigh_perp_ones(&g)?);
    }
    Ok(4.0 * best)
}

/// Outcome of an average-separation check. `worst_margin` is
/// `min LHS − z*/n` over cross pairs; `worst_pair` holds the point indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageSeparation {
    pub holds: bool,
    /// Worst margin within tolerance of zero: neither clearly held nor
    /// clearly violated.
    pub boundary: bool,
    pub worst_margin: f64,
    pub worst_pair: Option<(usize, usize)>,
    pub z_star: f64,
    /// Every cross-pair margin, row-major over point indices (zero on
    /// within-cluster pairs).
    #[serde(skip)]
    pub margins: Vec<f64>,
}

fn separation_verdict(margins: Vec<f64>, label: &[usize], z_star: f64, scale: f64, tol: &Tolerances) -> AverageSeparation {
    let big_n = label.len();
    let mut worst = f64::INFINITY;
    let mut worst_pair = None;
    for p in 0..big_n {
        for q in p + 1..big_n {
            if label[p] != label[q] && margins[p * big_n + q] < worst {
                worst = margins[p * big_n + q];
                worst_pair = Some((p, q));
            }
        }
    }
    let eps = tol.strict_sq_dist * scale.max(1.0);
    AverageSeparation {
        holds: worst > eps,
        boundary: worst.abs() <= eps,
        worst_margin: worst,
        worst_pair,
        z_star,
        margins,
    }
}

pub fn check_average_separation_matrix(d: &SquaredDistanceMatrix, assignment: &ClusteringAssignment) -> Result<AverageSeparation> {
    let tol = Tolerances::default();
    let blocks = Blocks::new(d, assignment)?;
    let zs = z_star_from_distances(d, assignment)?;
    let big_n = d.size();
    let rhs = zs / blocks.n as f64;
    let mut margins = vec![0.0; big_n * big_n];
    for p in 0..big_n {
        for q in 0..big_n {
            if blocks.label[p] != blocks.label[q] {
                margins[p * big_n + q] = blocks.margin(d, p, q) - rhs;
            }
        }
    }
    Ok(separation_verdict(margins, &blocks.label, zs, d.max_abs(), &tol))
}

/// Point form: `2‖x_r−x_s‖² − ‖x_r−x_b‖² − ‖x_s−x_a‖² − ‖x_r−x_a‖² −
/// ‖x_s−x_b‖² + ‖x_a−x_b‖² > z*/n` with `x_a`, `x_b` the cluster means.
pub fn check_average_separation_points<P: AsRef<[f64]>>(
    points: &[P],
    assignment: &ClusteringAssignment,
) -> Result<AverageSeparation> {
    let tol = Tolerances::default();
    if assignment.len() != points.len() {
        return Err(Error::Dimension(format!("{} labels for {} points", assignment.len(), points.len())));
    }
    assignment.validate()?;
    let sizes = assignment.sizes();
    if sizes.iter().any(|&s| s != sizes[0]) {
        return Err(Error::UnequalClusters);
    }
    let means = centroids(points, assignment);
    let zs = z_star(points, assignment)?;
    let rhs = zs / sizes[0] as f64;
    let label = &assignment.labels;
    let big_n = points.len();
    // ‖x_p − x_c‖² for every point and cluster mean.
    let to_mean: Vec<Vec<f64>> = points.iter().map(|x| means.iter().map(|c| dist2(x.as_ref(), c)).collect()).collect();
    let mut scale: f64 = 0.0;
    let mut margins = vec![0.0; big_n * big_n];
    for r in 0..big_n {
        for s in 0..big_n {
            let (a, b) = (label[r], label[s]);
            if a == b {
                continue;
            }
            let drs = dist2(points[r].as_ref(), points[s].as_ref());
            scale = scale.max(drs);
            margins[r * big_n + s] = 2.0 * drs - to_mean[r][b] - to_mean[s][a] - to_mean[r][a] - to_mean[s][b]
                + dist2(&means[a], &means[b])
                - rhs;
        }
    }
    Ok(separation_verdict(margins, label, zs, scale, &tol))
}

/// Minimum of the average-separation LHS over two unit balls whose centers
/// are `Δ` apart and coincide with the cluster means.
pub fn separation_lhs_minimum(delta: f64) -> f64 {
    if delta <= 4.0 {
        delta * delta / 2.0 - 4.0
    } else {
        (delta - 2.0).powi(2)
    }
}

/// Sufficient center separation for SDP tightness. `finite` is
/// `√(8(1+s)²θ/m + 8)`; `limit` is the `n → ∞` value `2√2(1+√(θ/m))`.
/// They are different bounds and are reported side by side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpThreshold {
    pub finite: f64,
    pub limit: f64,
}

pub fn sdp_threshold(m: usize, theta: f64, s: f64) -> SdpThreshold {
    let r = theta / m as f64;
    SdpThreshold {
        finite: (8.0 * (1.0 + s).powi(2) * r + 8.0).sqrt(),
        limit: 2.0 * std::f64::consts::SQRT_2 * (1.0 + r.sqrt()),
    }
}

/// A dual-feasibility violation: cluster pair `(a, b)`, within-cluster
/// positions `(r, s)` and the underlying point indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaViolation {
    pub a: usize,
    pub b: usize,
    pub r: usize,
    pub s: usize,
    pub points: (usize, usize),
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// `max_a ‖Q1_a‖_∞ / ‖Q‖_max`.
    pub q_ones_residual: f64,
    /// `max |Q − Q(z, α, β, D)|`, the recomputed-assembly mismatch.
    pub assembly_residual: f64,
    pub min_eig_q: f64,
    pub min_eig_complement: f64,
    pub nullspace_dim: usize,
    pub min_beta: f64,
    pub dual_objective: f64,
    pub primal_objective: f64,
    pub violating: Option<BetaViolation>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateVerdict {
    /// The planted assignment is SDP-optimal.
    pub valid: bool,
    /// ...and the unique optimum (`dim null Q = k`).
    pub unique: bool,
    pub report: CertificateReport,
}

pub fn verify_certificate(
    cert: &SdpCertificate,
    d: &SquaredDistanceMatrix,
    assignment: &ClusteringAssignment,
) -> Result<CertificateVerdict> {
    verify_certificate_with(cert, d, assignment, &Tolerances::default())
}

/// Recomputes every condition from `(z, α, β)` and `D`; the stored
/// diagnostics in `cert` are not trusted.
pub fn verify_certificate_with(
    cert: &SdpCertificate,
    d: &SquaredDistanceMatrix,
    assignment: &ClusteringAssignment,
    tol: &Tolerances,
) -> Result<CertificateVerdict> {
    let big_n = d.size();
    if cert.alpha.len() != big_n || cert.q.order() != big_n || cert.beta.order() != big_n {
        return Err(Error::Dimension("certificate does not match the distance matrix".into()));
    }
    let primal_objective = planted_objective(d, assignment)?;
    let label = &assignment.labels;
    let k = assignment.k;
    let mut failures = Vec::new();

    let q = SymmetricMatrix::from_fn(big_n, |p, s| {
        let diag = if p == s { cert.z } else { 0.0 };
        diag + 0.5 * (cert.alpha[p] + cert.alpha[s]) - 0.5 * cert.beta.get(p, s) + d.get(p, s)
    });
    let assembly_residual = (0..big_n)
        .flat_map(|p| (p..big_n).map(move |s| (p, s)))
        .map(|(p, s)| (q.get(p, s) - cert.q.get(p, s)).abs())
        .fold(0.0, f64::max);
    let q_scale = q.max_abs().max(f64::MIN_POSITIVE);
    if assembly_residual > tol.q_ones_rel * q_scale {
        failures.push(format!("stored Q differs from its assembly by {assembly_residual:.3e}"));
    }

    let mut q_ones: f64 = 0.0;
    for p in 0..big_n {
        let mut sums = vec![0.0; k];
        for s in 0..big_n {
            sums[label[s]] += q.get(p, s);
        }
        q_ones = sums.iter().fold(q_ones, |m, v| m.max(v.abs()));
    }
    let q_ones_residual = q_ones / q_scale;
    if q_ones_residual > tol.q_ones_rel {
        failures.push(format!("Q·1_a residual {q_ones_residual:.3e} exceeds {:.0e}", tol.q_ones_rel));
    }

    let beta_tol = tol.beta_rel * d.max_abs().max(1.0);
    let mut diag_beta: f64 = 0.0;
    for p in 0..big_n {
        for s in p..big_n {
            if label[p] == label[s] {
                diag_beta = diag_beta.max(cert.beta.get(p, s).abs());
            }
        }
    }
    if diag_beta > beta_tol {
        failures.push(format!("within-cluster β reaches {diag_beta:.3e}"));
    }
    let positions = positions(assignment);
    let cross = cross_minimum(&cert.beta, label);
    let min_beta = cross.map_or(f64::INFINITY, |(v, _, _)| v);
    let violating = match cross {
        Some((v, p, s)) if v < -beta_tol => {
            failures.push(format!("β < 0 at points ({p}, {s}): {v:.6e}"));
            Some(BetaViolation { a: label[p], b: label[s], r: positions[p], s: positions[s], points: (p, s), beta: v })
        }
        _ => None,
    };

    let dual_objective = k as f64 * cert.z + cert.alpha.iter().sum::<f64>();
    let gap = (dual_objective - primal_objective).abs() / primal_objective.abs().max(1.0);
    if gap > tol.dual_objective_rel {
        failures.push(format!("dual objective {dual_objective} ≠ planted objective {primal_objective}"));
    }

    let spectrum = Spectrum::of(&q, assignment, tol)?;
    if spectrum.min_eig < -tol.psd_rel * q.max_abs() {
        failures.push(format!("Q is not PSD: λ_min = {:.6e}", spectrum.min_eig));
    }
    let valid = failures.is_empty();
    let unique = valid && spectrum.nullspace_dim == k;
    Ok(CertificateVerdict {
        valid,
        unique,
        report: CertificateReport {
            q_ones_residual,
            assembly_residual,
            min_eig_q: spectrum.min_eig,
            min_eig_complement: spectrum.min_eig_complement,
            nullspace_dim: spectrum.nullspace_dim,
            min_beta,
            dual_objective,
            primal_objective,
            violating,
            failures,
        },
    })
}

fn positions(assignment: &ClusteringAssignment) -> Vec<usize> {
    let mut next = vec![0; assignment.k];
    assignment
        .labels
        .iter()
        .map(|&a| {
            next[a] += 1;
            next[a] - 1
        })
        .collect()
}

/// Build the certificate at `z = z* + margin·(1 + z*)` and verify it.
pub fn certify_instance(instance: &ClusterInstance) -> Result<(SdpCertificate, CertificateVerdict)> {
    let tol = Tolerances::default();
    let assignment = instance.planted();
    let d = squared_distances(&instance.points);
    let zs = z_star(&instance.points, &assignment)?;
    let cert = build_certificate_with(&d, &assignment, zs + tol.z_margin_rel * (1.0 + zs), &tol)?;
    let verdict = verify_certificate_with(&cert, &d, &assignment, &tol)?;
    Ok((cert, verdict))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub rho: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self { rho: 1.0, tol: 1e-6, max_iter: 50_000 }
    }
}

/// Distances of the returned `X` to each constraint set, plus the ADMM
/// consensus gap. All Frobenius norms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AdmmResiduals {
    pub affine: f64,
    pub nonneg: f64,
    pub psd: f64,
    pub consensus: f64,
}

impl AdmmResiduals {
    pub fn max(&self) -> f64 {
        self.affine.max(self.nonneg).max(self.psd).max(self.consensus)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub size: usize,
    /// Row-major `N×N`.
    pub x: Vec<f64>,
    /// `−tr(DX)`.
    pub objective: f64,
    pub residuals: AdmmResiduals,
    pub iterations: usize,
    pub converged: bool,
}

impl SdpSolution {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.size + j]
    }

    /// Largest entrywise deviation from `(1/|A_a|) 1_a1_aᵀ`.
    pub fn distance_to(&self, assignment: &ClusteringAssignment) -> f64 {
        let sizes = assignment.sizes();
        let l = &assignment.labels;
        let mut worst: f64 = 0.0;
        for i in 0..self.size {
            for j in 0..self.size {
                let target = if l[i] == l[j] { 1.0 / sizes[l[i]] as f64 } else { 0.0 };
                worst = worst.max((self.get(i, j) - target).abs());
            }
        }
        worst
    }

    pub fn recovers(&self, planted: &ClusteringAssignment) -> bool {
        planted.len() == self.size && self.distance_to(planted) <= SOLUTION_TOL
    }

    /// The partition the iterate encodes, if it is a normalized block
    /// matrix within [`SOLUTION_TOL`].
    pub fn decode(&self, k: usize) -> Option<ClusteringAssignment> {
        decode_broad_sense(self.size, k, &self.x, SOLUTION_TOL)
    }
}

/// Projection onto `{X = Xᵀ, X1 = 1, tr X = k}`.
///
/// The correction is `½(λ1ᵀ + 1λᵀ) + μI`; the `(N+1)` multipliers have a
/// closed form because `1` and `I` interact only through `1ᵀλ`.
fn project_affine(y: &[f64], n: usize, k: f64, out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = 0.5 * (y[i * n + j] + y[j * n + i]);
        }
    }
    if n == 1 {
        out[0] = 1.0;
        return;
    }
    let nf = n as f64;
    let r: Vec<f64> = (0..n).map(|i| 1.0 - out[i * n..(i + 1) * n].iter().sum::<f64>()).collect();
    let t = k - (0..n).map(|i| out[i * n + i]).sum::<f64>();
    let sum_r: f64 = r.iter().sum();
    let s = (sum_r - t) / (nf - 1.0);
    let mu = (t - s) / nf;
    let lambda: Vec<f64> = r.iter().map(|ri| (2.0 / nf) * (ri - 0.5 * s - mu)).collect();
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] += 0.5 * (lambda[i] + lambda[j]);
        }
        out[i * n + i] += mu;
    }
}

fn frob_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn frob(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct Iterate {
    z: Vec<f64>,
    residual: f64,
    consensus: f64,
}

/// Three-set consensus ADMM on `min tr(DX)` over the affine set, the
/// nonnegative orthant and the PSD cone. Single-threaded; the PSD step
/// warm-starts Jacobi from the previous eigenvectors.
pub fn solve_sdp_admm(d: &SquaredDistanceMatrix, k: usize, cfg: &AdmmConfig) -> Result<SdpSolution> {
    let n = d.size();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 ≤ k ≤ N, got k = {k}, N = {n}")));
    }
    if !(cfg.rho > 0.0) || !(cfg.tol > 0.0) {
        return Err(Error::invalid("ADMM needs rho > 0 and tol > 0"));
    }
    if d.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let tol = Tolerances::default();
    let kf = k as f64;
    let nn = n * n;
    let cost: Vec<f64> = d.as_slice().iter().map(|v| v / cfg.rho).collect();
    let mut z = vec![0.0; nn];
    (0..n).for_each(|i| z[i * n + i] = kf / n as f64);
    let mut u = [vec![0.0; nn], vec![0.0; nn], vec![0.0; nn]];
    let mut x = [vec![0.0; nn], vec![0.0; nn], vec![0.0; nn]];
    let mut buf = vec![0.0; nn];
    let mut warm: Option<Vec<f64>> = None;
    let mut best: Option<Iterate> = None;
    let mut iterations = 0;
    let mut converged = false;

    for it in 1..=cfg.max_iter {
        iterations = it;
        for t in 0..nn {
            buf[t] = z[t] - u[0][t] - cost[t];
        }
        project_affine(&buf, n, kf, &mut x[0]);
        for t in 0..nn {
            x[1][t] = (z[t] - u[1][t]).max(0.0);
        }
        for t in 0..nn {
            buf[t] = z[t] - u[2][t];
        }
        let (proj, vecs) = linalg::psd_project_dense(&buf, n, warm.as_deref(), &tol);
        x[2] = proj;
        warm = Some(vecs);

        let z_old = std::mem::take(&mut z);
        z = (0..nn).map(|t| (x[0][t] + u[0][t] + x[1][t] + u[1][t] + x[2][t] + u[2][t]) / 3.0).collect();
        let mut primal: f64 = 0.0;
        for i in 0..3 {
            for t in 0..nn {
                u[i][t] += x[i][t] - z[t];
            }
            primal = primal.max(frob_diff(&x[i], &z));
        }
        let dual = cfg.rho * 3f64.sqrt() * frob_diff(&z, &z_old);
        let residual = primal.max(dual);
        let scale = 1.0 + frob(&z);
        if best.as_ref().is_none_or(|b| residual / scale < b.residual) {
            best = Some(Iterate { z: z.clone(), residual: residual / scale, consensus: primal });
        }
        if residual <= cfg.tol * scale {
            converged = true;
            best = Some(Iterate { z: z.clone(), residual: residual / scale, consensus: primal });
            break;
        }
    }
    let best = best.expect("at least one iteration");
    let xz = best.z;
    let mut proj = vec![0.0; nn];
    project_affine(&xz, n, kf, &mut proj);
    let affine = frob_diff(&xz, &proj);
    let nonneg = xz.iter().map(|v| v.min(0.0).powi(2)).sum::<f64>().sqrt();
    let (psd_part, _) = linalg::psd_project_dense(&xz, n, warm.as_deref(), &tol);
    let psd = frob_diff(&xz, &psd_part);
    let objective = -xz.iter().zip(d.as_slice()).map(|(a, b)| a * b).sum::<f64>();
    Ok(SdpSolution {
        size: n,
        x: xz,
        objective,
        residuals: AdmmResiduals { affine, nonneg, psd, consensus: best.consensus },
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_planted, Distribution, SquareMatrix};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn planted(delta: f64, m: usize, k: usize, n: usize, seed: u64) -> ClusterInstance {
        sample_planted(m, k, n, delta, Distribution::UniformBall, seed).unwrap()
    }

    fn certify_at(instance: &ClusterInstance, z: f64) -> (SdpCertificate, CertificateVerdict) {
        let a = instance.planted();
        let d = squared_distances(&instance.points);
        let cert = build_certificate(&d, &a, z).unwrap();
        let v = verify_certificate(&cert, &d, &a).unwrap();
        (cert, v)
    }

    #[test]
    fn two_singletons_certificate() {
        let pts = vec![vec![0.0], vec![3.0]];
        let a = ClusteringAssignment::new(vec![0, 1], 2).unwrap();
        let d = squared_distances(&pts);
        let cert = build_certificate(&d, &a, 0.5).unwrap();
        assert_abs_diff_eq!(cert.dual_objective, 0.0, epsilon = 1e-12);
        // Q·1_a = 0 with singleton clusters leaves Q = 0.
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(cert.q.get(i, j), 0.0, epsilon = 1e-12);
            }
        }
        assert!(verify_certificate(&cert, &d, &a).unwrap().valid);
    }

    #[test]
    fn q_annihilates_indicators_for_any_z() {
        let inst = planted(2.5, 2, 3, 5, 1);
        let a = inst.planted();
        let d = squared_distances(&inst.points);
        for z in [-3.0, 0.0, 1.7, 40.0] {
            let cert = build_certificate(&d, &a, z).unwrap();
            let v = verify_certificate(&cert, &d, &a).unwrap();
            assert!(v.report.q_ones_residual < 1e-10, "z = {z}: {}", v.report.q_ones_residual);
            let primal = planted_objective(&d, &a).unwrap();
            assert!((cert.dual_objective - primal).abs() <= 1e-9 * primal.abs());
        }
    }

    #[test]
    fn delta_six_certificate_is_unique() {
        let inst = planted(6.0, 3, 2, 10, 4);
        let zs = z_star(&inst.points, &inst.planted()).unwrap();
        let (cert, v) = certify_at(&inst, zs + 1.0);
        assert!(cert.min_eig_complement > 0.0);
        assert_eq!(cert.nullspace_dim, 2);
        assert!(cert.min_beta > 0.0);
        assert!(v.valid && v.unique, "{:?}", v.report.failures);
    }

    #[test]
    fn beta_matches_separation_margin() {
        let inst = planted(3.0, 3, 2, 6, 8);
        let a = inst.planted();
        let d = squared_distances(&inst.points);
        let z = 0.9;
        let cert = build_certificate(&d, &a, z).unwrap();
        let sep = check_average_separation_matrix(&d, &a).unwrap();
        let n = 6.0;
        for (p, q) in [(0, 7), (3, 11), (5, 6)] {
            let lhs = sep.margins[p * 12 + q] + sep.z_star / n;
            assert_abs_diff_eq!(cert.beta.get(p, q), 2.0 * (lhs - z / n), epsilon = 1e-10);
        }
    }

    #[test]
    fn z_star_examples() {
        let one = vec![vec![1.0, 2.0], vec![5.0, 5.0]];
        let a = ClusteringAssignment::new(vec![0, 1], 2).unwrap();
        assert_eq!(z_star(&one, &a).unwrap(), 0.0);
        let pair = vec![vec![0.0, 0.0], vec![3.0, 4.0]];
        let a = ClusteringAssignment::new(vec![0, 0], 1).unwrap();
        assert_abs_diff_eq!(z_star(&pair, &a).unwrap(), 2.0 * 25.0, epsilon = 1e-9);
        let d = squared_distances(&pair);
        assert_abs_diff_eq!(z_star_from_distances(&d, &a).unwrap(), 50.0, epsilon = 1e-9);
    }

    #[test]
    fn z_star_scales_like_the_second_moment() {
        // n = 50 uniform points in the unit ball of R³: z* ≈ 4 n θ / m with
        // θ = 3/5, and below the concentration bound with s = 1.
        let inst = planted(10.0, 3, 1, 50, 2);
        let zs = z_star(&inst.points, &inst.planted()).unwrap();
        let expected = 4.0 * 50.0 * 0.6 / 3.0;
        assert!(zs > 0.8 * expected && zs < 4.0 * 0.6 * 4.0 * 50.0 / 3.0, "z* = {zs}");
    }

    #[test]
    fn z_star_is_translation_invariant_per_cluster() {
        let inst = planted(3.0, 3, 2, 7, 5);
        let a = inst.planted();
        let base = z_star(&inst.points, &a).unwrap();
        let mut shifted = inst.points.clone();
        for p in shifted.iter_mut().filter(|p| p.a == 1) {
            p.x.iter_mut().for_each(|v| *v += 17.0);
        }
        assert_abs_diff_eq!(z_star(&shifted, &a).unwrap(), base, epsilon = 1e-8 * (1.0 + base));
    }

    #[test]
    fn separation_examples() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        let a = ClusteringAssignment::new(vec![0, 1], 2).unwrap();
        let sep = check_average_separation_points(&pts, &a).unwrap();
        assert!(sep.holds);
        assert_abs_diff_eq!(sep.worst_margin, 4.0, epsilon = 1e-12);

        // The same point in both clusters.
        let pts = vec![vec![0.0], vec![1.0], vec![1.0], vec![5.0]];
        let a = ClusteringAssignment::new(vec![0, 0, 1, 1], 2).unwrap();
        assert!(!check_average_separation_points(&pts, &a).unwrap().holds);
        let d = squared_distances(&pts);
        assert!(!check_average_separation_matrix(&d, &a).unwrap().holds);
    }

    #[test]
    fn separation_holds_at_four_point_six() {
        let held = (0..10)
            .filter(|&s| {
                let inst = planted(4.6, 3, 2, 40, s);
                check_average_separation_points(&inst.points, &inst.planted()).unwrap().holds
            })
            .count();
        assert!(held >= 9, "held on {held}/10");
    }

    #[test]
    fn unequal_sizes_are_rejected() {
        let pts = vec![vec![0.0], vec![1.0], vec![9.0]];
        let a = ClusteringAssignment::new(vec![0, 0, 1], 2).unwrap();
        let d = squared_distances(&pts);
        assert!(matches!(build_certificate(&d, &a, 1.0), Err(Error::UnequalClusters)));
    }

    #[test]
    fn closed_form_margin() {
        assert_abs_diff_eq!(separation_lhs_minimum(2.0 * std::f64::consts::SQRT_2), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(separation_lhs_minimum(4.0), 4.0);
        assert_abs_diff_eq!(separation_lhs_minimum(4.0 + 1e-12), 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(separation_lhs_minimum(6.0), 16.0);
    }

    #[test]
    fn thresholds() {
        let t = sdp_threshold(1, 1.0, 0.0);
        assert_abs_diff_eq!(t.finite, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.limit, 4.0 * std::f64::consts::SQRT_2, epsilon = 1e-12);
        let t = sdp_threshold(3, 0.0, 0.0);
        assert_abs_diff_eq!(t.finite, 2.0 * std::f64::consts::SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(t.limit, 2.0 * std::f64::consts::SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(sdp_threshold(3, 0.6, 0.0).finite, 9.6f64.sqrt(), epsilon = 1e-12);
        assert!((sdp_threshold(3, 0.6, 0.0).finite - 3.098).abs() < 1e-3);
        assert_abs_diff_eq!(sdp_threshold(3, 1.0 / 3.0 * 3.0, 0.0).limit, 2.0 * std::f64::consts::SQRT_2 * (1.0 + (1.0f64 / 3.0).sqrt()), epsilon = 1e-12);
    }

    #[test]
    fn low_z_breaks_psd() {
        let inst = planted(3.2, 3, 2, 10, 3);
        let zs = z_star(&inst.points, &inst.planted()).unwrap();
        let (_, v) = certify_at(&inst, 0.4 * zs);
        assert!(!v.valid);
        assert!(v.report.min_eig_q < 0.0);
    }

    #[test]
    fn swapped_labels_name_a_negative_beta() {
        let inst = planted(5.0, 3, 2, 8, 6);
        let mut labels = inst.planted().labels;
        labels.swap(0, 8);
        let a = ClusteringAssignment::new(labels, 2).unwrap();
        let d = squared_distances(&inst.points);
        let zs = z_star(&inst.points, &a).unwrap();
        let cert = build_certificate(&d, &a, zs * (1.0 + 1e-6) + 1e-6).unwrap();
        let v = verify_certificate(&cert, &d, &a).unwrap();
        assert!(!v.valid);
        let bad = v.report.violating.expect("named violation");
        assert_ne!(bad.a, bad.b);
        assert!(bad.beta < 0.0);
    }

    #[test]
    fn tampered_alpha_is_caught() {
        let inst = planted(6.0, 3, 2, 6, 1);
        let a = inst.planted();
        let d = squared_distances(&inst.points);
        let mut cert = build_certificate(&d, &a, 10.0).unwrap();
        cert.alpha[3] += 0.1;
        assert!(!verify_certificate(&cert, &d, &a).unwrap().valid);
    }

    #[test]
    fn affine_projection_is_feasible_and_idempotent() {
        let n = 5;
        let y: Vec<f64> = (0..n * n).map(|t| ((t * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let mut x = vec![0.0; n * n];
        project_affine(&y, n, 2.0, &mut x);
        for i in 0..n {
            assert_abs_diff_eq!(x[i * n..(i + 1) * n].iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            for j in 0..n {
                assert_abs_diff_eq!(x[i * n + j], x[j * n + i], epsilon = 1e-14);
            }
        }
        assert_abs_diff_eq!((0..n).map(|i| x[i * n + i]).sum::<f64>(), 2.0, epsilon = 1e-12);
        let mut again = vec![0.0; n * n];
        project_affine(&x, n, 2.0, &mut again);
        assert!(frob_diff(&x, &again) < 1e-12);
    }

    #[test]
    fn admm_k_equals_n_gives_identity() {
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        let d = squared_distances(&pts);
        let sol = solve_sdp_admm(&d, 3, &AdmmConfig::default()).unwrap();
        assert!(sol.converged);
        let id = ClusteringAssignment::new(vec![0, 1, 2], 3).unwrap();
        assert!(sol.distance_to(&id) < 1e-4);
        assert!(sol.objective.abs() < 1e-4);
    }

    #[test]
    fn admm_two_far_singletons() {
        let d = SquareMatrix::from_fn(2, |i, j| if i == j { 0.0 } else { 100.0 });
        let sol = solve_sdp_admm(&d, 2, &AdmmConfig::default()).unwrap();
        let id = ClusteringAssignment::new(vec![0, 1], 2).unwrap();
        assert!(sol.recovers(&id));
    }

    #[test]
    fn admm_recovers_planted_blocks() {
        let inst = planted(5.0, 3, 2, 8, 0);
        let a = inst.planted();
        let d = squared_distances(&inst.points);
        let sol = solve_sdp_admm(&d, 2, &AdmmConfig::default()).unwrap();
        assert!(sol.converged, "{:?} after {}", sol.residuals, sol.iterations);
        assert!(sol.distance_to(&a) < 1e-4, "{}", sol.distance_to(&a));
        let target = planted_objective(&d, &a).unwrap();
        assert!((sol.objective - target).abs() < 1e-4 * target.abs());
        assert!(sol.decode(2).unwrap().same_partition(&a));
    }

    #[test]
    fn admm_rejects_bad_config() {
        let d = SquareMatrix::zeros(3);
        assert!(solve_sdp_admm(&d, 0, &AdmmConfig::default()).is_err());
        assert!(solve_sdp_admm(&d, 2, &AdmmConfig { rho: 0.0, ..AdmmConfig::default() }).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn matrix_and_point_forms_agree(seed in 0u64..100_000, n in 1usize..6, k in 2usize..4, delta in 2.0f64..5.0) {
            let inst = planted(delta, 2, k, n, seed);
            let a = inst.planted();
            let d = squared_distances(&inst.points);
            let by_matrix = check_average_separation_matrix(&d, &a).unwrap();
            let by_points = check_average_separation_points(&inst.points, &a).unwrap();
            for (x, y) in by_matrix.margins.iter().zip(&by_points.margins) {
                prop_assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
            }
            prop_assert_eq!(by_matrix.holds, by_points.holds);
        }

        #[test]
        fn dual_objective_does_not_depend_on_z(seed in 0u64..100_000, z1 in -5.0f64..50.0, z2 in -5.0f64..50.0) {
            let inst = planted(3.0, 3, 2, 4, seed);
            let a = inst.planted();
            let d = squared_distances(&inst.points);
            let o1 = build_certificate(&d, &a, z1).unwrap().dual_objective;
            let o2 = build_certificate(&d, &a, z2).unwrap().dual_objective;
            prop_assert!((o1 - o2).abs() <= 1e-9 * (1.0 + o1.abs()));
        }
    }
}
