//! Planted ball instances, distance matrices, clustering objectives and the
//! exhaustive oracles used to check the relaxations on small inputs.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Rotationally symmetric offset distributions supported by the sampler.
///
/// Other symmetric laws can be added by implementing another arm of
/// [`sample_offset`]; the rest of the crate only sees the offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    /// Uniform in the ball of the given radius.
    UniformBall,
    /// Uniform direction, radius uniform on `[0, radius]` (density
    /// concentrated towards the center).
    UniformSphereScaled,
}

impl Distribution {
    pub fn name(self) -> &'static str {
        match self {
            Distribution::UniformBall => "uniform-ball",
            Distribution::UniformSphereScaled => "uniform-sphere-scaled",
        }
    }

    /// `E‖x − c‖²` for a unit-radius cluster in `R^m`.
    pub fn second_moment(self, m: usize) -> f64 {
        let m = m as f64;
        match self {
            Distribution::UniformBall => m / (m + 2.0),
            Distribution::UniformSphereScaled => 1.0 / 3.0,
        }
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-ball" => Ok(Distribution::UniformBall),
            "uniform-sphere-scaled" => Ok(Distribution::UniformSphereScaled),
            other => Err(Error::UnknownDistribution(other.to_string())),
        }
    }
}

/// A point tagged with its planted cluster `a` and within-cluster index `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub a: usize,
    pub i: usize,
    pub x: Vec<f64>,
}

impl AsRef<[f64]> for LabeledPoint {
    fn as_ref(&self) -> &[f64] {
        &self.x
    }
}

/// `k` unit balls in `R^m` with `n` points sampled in each.
///
/// Points are stored cluster-major: point `(a, i)` sits at index `a·n + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterInstance {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub radius: f64,
    pub centers: Vec<Vec<f64>>,
    pub points: Vec<LabeledPoint>,
    pub seed: u64,
}

impl ClusterInstance {
    /// Assemble an instance from centers and center-free offsets
    /// (`offsets[a][i]`), translating each offset by its center.
    pub fn from_offsets(
        centers: Vec<Vec<f64>>,
        offsets: &[Vec<Vec<f64>>],
        radius: f64,
        seed: u64,
    ) -> Result<Self> {
        let k = centers.len();
        if k == 0 || offsets.len() != k {
            return Err(Error::invalid("need one offset list per center"));
        }
        let m = centers[0].len();
        let n = offsets[0].len();
        if m == 0 || n == 0 {
            return Err(Error::invalid("k·n must be positive and m ≥ 1"));
        }
        let mut points = Vec::with_capacity(k * n);
        for (a, (c, offs)) in centers.iter().zip(offsets).enumerate() {
            if c.len() != m || offs.len() != n {
                return Err(Error::Dimension(format!("cluster {a} has inconsistent shape")));
            }
            for (i, o) in offs.iter().enumerate() {
                if o.len() != m {
                    return Err(Error::Dimension(format!("offset ({a},{i}) has dim {}", o.len())));
                }
                let x = c.iter().zip(o).map(|(ci, oi)| ci + oi).collect();
                points.push(LabeledPoint { a, i, x });
            }
        }
        Ok(Self { m, k, n, radius, centers, points, seed })
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn point(&self, idx: usize) -> &[f64] {
        &self.points[idx].x
    }

    pub fn planted(&self) -> ClusteringAssignment {
        ClusteringAssignment {
            k: self.k,
            labels: self.points.iter().map(|p| p.a).collect(),
            medoids: None,
        }
    }

    pub fn min_center_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..self.k {
            for b in a + 1..self.k {
                best = best.min(dist(&self.centers[a], &self.centers[b]));
            }
        }
        best
    }

    /// Check the structural invariants: shape, labels and every point inside
    /// its ball (no tolerance).
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 || self.m == 0 {
            return Err(Error::invalid("m, k and n must be positive"));
        }
        if self.centers.len() != self.k || self.points.len() != self.k * self.n {
            return Err(Error::invalid("N must equal k·n with k centers"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid("radius must be positive"));
        }
        for (idx, p) in self.points.iter().enumerate() {
            if p.a != idx / self.n || p.i != idx % self.n {
                return Err(Error::invalid(format!("point {idx} is out of cluster-major order")));
            }
            if p.x.len() != self.m || p.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Dimension(format!("point {idx} has wrong dimension or non-finite coordinates")));
            }
            if dist(&p.x, &self.centers[p.a]) > self.radius {
                return Err(Error::invalid(format!("point {idx} lies outside its ball")));
            }
        }
        Ok(())
    }

    /// JSON with every real printed to 17 significant digits.
    pub fn to_json(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{{\"m\":{},\"k\":{},\"n\":{},\"radius\":{},\"centers\":[",
            self.m,
            self.k,
            self.n,
            fmt17(self.radius)
        );
        for (a, c) in self.centers.iter().enumerate() {
            if a > 0 {
                s.push(',');
            }
            push_vec(&mut s, c);
        }
        s.push_str("],\"points\":[");
        for (idx, p) in self.points.iter().enumerate() {
            if idx > 0 {
                s.push(',');
            }
            let _ = write!(s, "{{\"a\":{},\"i\":{},\"x\":", p.a, p.i);
            push_vec(&mut s, &p.x);
            s.push('}');
        }
        let _ = write!(s, "],\"seed\":{}}}", self.seed);
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: ClusterInstance = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }
}

/// Format a real with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_vec(s: &mut String, v: &[f64]) {
    s.push('[');
    for (j, x) in v.iter().enumerate() {
        if j > 0 {
            s.push(',');
        }
        s.push_str(&fmt17(*x));
    }
    s.push(']');
}

#[inline]
pub fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub fn dist(x: &[f64], y: &[f64]) -> f64 {
    dist2(x, y).sqrt()
}

/// One offset drawn from `distribution` in `R^m`: a Gaussian direction
/// normalized onto the sphere, times the radial law.
pub fn sample_offset<R: Rng + ?Sized>(
    m: usize,
    radius: f64,
    distribution: Distribution,
    rng: &mut R,
) -> Vec<f64> {
    let mut dir: Vec<f64> = loop {
        let v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
        let norm2: f64 = v.iter().map(|x| x * x).sum();
        if norm2 > 0.0 {
            let inv = norm2.sqrt().recip();
            break v.into_iter().map(|x| x * inv).collect();
        }
    };
    let u: f64 = rng.random();
    let r = match distribution {
        Distribution::UniformBall => radius * u.powf(1.0 / m as f64),
        Distribution::UniformSphereScaled => radius * u,
    };
    // Guard the closed ball against rounding in the normalization.
    let r = r * (1.0 - 4.0 * f64::EPSILON);
    dir.iter_mut().for_each(|x| *x *= r);
    dir
}

/// Offsets for every cluster, each cluster drawn from its own sub-stream
/// `(seed, a)`.
pub fn sample_offsets(
    m: usize,
    k: usize,
    n: usize,
    radius: f64,
    distribution: Distribution,
    seed: u64,
) -> Vec<Vec<Vec<f64>>> {
    (0..k)
        .map(|a| {
            let mut r = rng::stream(seed, &[a as u64]);
            (0..n).map(|_| sample_offset(m, radius, distribution, &mut r)).collect()
        })
        .collect()
}

/// Centers with minimum pairwise distance `delta`: a regular simplex with
/// edge `delta` when `k ≤ m + 1`, otherwise the first `k` nodes of a cubic
/// grid with spacing `delta`.
pub fn center_layout(m: usize, k: usize, delta: f64) -> Vec<Vec<f64>> {
    if k <= m + 1 {
        simplex_vertices(m, k, delta)
    } else {
        let side = (1..).find(|s: &usize| s.pow(m.min(64) as u32) >= k).unwrap_or(k);
        (0..k)
            .map(|idx| {
                let mut rest = idx;
                (0..m)
                    .map(|_| {
                        let c = rest % side;
                        rest /= side;
                        c as f64 * delta
                    })
                    .collect()
            })
            .collect()
    }
}

fn simplex_vertices(m: usize, k: usize, edge: f64) -> Vec<Vec<f64>> {
    if k == 1 {
        return vec![vec![0.0; m]];
    }
    // Centered standard basis vectors of R^k span a (k-1)-dim subspace;
    // express them in an orthonormal basis of it.
    let kf = k as f64;
    let centered: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| if i == j { 1.0 - 1.0 / kf } else { -1.0 / kf }).collect())
        .collect();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k - 1);
    for v in centered.iter().take(k - 1) {
        let mut w = v.clone();
        for b in &basis {
            let proj: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
            w.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        w.iter_mut().for_each(|x| *x /= norm);
        basis.push(w);
    }
    let scale = edge / std::f64::consts::SQRT_2;
    centered
        .iter()
        .map(|v| {
            let mut c = vec![0.0; m];
            for (slot, b) in c.iter_mut().zip(&basis) {
                *slot = scale * v.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            }
            c
        })
        .collect()
}

/// Sample a planted instance: `k` unit balls at pairwise distance `≥ delta`
/// (exactly `delta` for the simplex layout), `n` points in each.
pub fn sample_planted(
    m: usize,
    k: usize,
    n: usize,
    delta: f64,
    distribution: Distribution,
    seed: u64,
) -> Result<ClusterInstance> {
    if k == 0 || n == 0 {
        return Err(Error::invalid("k·n must be positive"));
    }
    if m == 0 {
        return Err(Error::invalid("m must be at least 1"));
    }
    if !(delta >= 2.0) || !delta.is_finite() {
        return Err(Error::invalid(format!("delta must be ≥ 2, got {delta}")));
    }
    let centers = center_layout(m, k, delta);
    let offsets = sample_offsets(m, k, n, 1.0, distribution, seed);
    ClusterInstance::from_offsets(centers, &offsets, 1.0, seed)
}

/// Row-major symmetric `N×N` matrix of pairwise (squared or plain)
/// distances.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    size: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(size: usize) -> Self {
        Self { size, data: vec![0.0; size * size] }
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(size);
        for i in 0..size {
            for j in 0..size {
                m.data[i * size + j] = f(i, j);
            }
        }
        m
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.size + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.size..(i + 1) * self.size]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// The `n×n` block `(a, b)` for clusters stored contiguously with `n`
    /// points each.
    pub fn block(&self, a: usize, b: usize, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n * n);
        for r in 0..n {
            let row = self.row(a * n + r);
            out.extend_from_slice(&row[b * n..(b + 1) * n]);
        }
        out
    }
}

/// Squared Euclidean distances `D_{pq} = ‖x_p − x_q‖²`.
pub type SquaredDistanceMatrix = SquareMatrix;

/// Plain Euclidean distances, used by the k-median relaxation.
pub type DistanceMatrix = SquareMatrix;

pub fn squared_distances<P: AsRef<[f64]>>(points: &[P]) -> SquaredDistanceMatrix {
    let n = points.len();
    let mut d = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in i + 1..n {
            let v = dist2(points[i].as_ref(), points[j].as_ref());
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    d
}

pub fn euclidean_distances<P: AsRef<[f64]>>(points: &[P]) -> DistanceMatrix {
    let sq = squared_distances(points);
    let n = sq.size();
    SquareMatrix::from_fn(n, |i, j| sq.get(i, j).sqrt())
}

/// A partition of the `N` points into `k` labelled clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusteringAssignment {
    pub k: usize,
    pub labels: Vec<usize>,
    /// One point index per cluster, k-median only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub medoids: Option<Vec<usize>>,
}

impl ClusteringAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        let a = Self { k, labels, medoids: None };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        let mut sizes = vec![0usize; self.k];
        for &l in &self.labels {
            if l >= self.k {
                return Err(Error::invalid(format!("label {l} out of range for k = {}", self.k)));
            }
            sizes[l] += 1;
        }
        if let Some(pos) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::EmptyCluster(pos));
        }
        if let Some(med) = &self.medoids {
            if med.len() != self.k || med.iter().enumerate().any(|(c, &p)| self.labels.get(p) != Some(&c)) {
                return Err(Error::invalid("medoids must be one member per cluster"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member indices of every cluster, ascending.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (p, &l) in self.labels.iter().enumerate() {
            out[l].push(p);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        self.labels.iter().for_each(|&l| sizes[l] += 1);
        sizes
    }

    /// Labels renumbered by first appearance, so equal partitions compare
    /// equal regardless of label names.
    pub fn canonical_labels(&self) -> Vec<usize> {
        let mut map = vec![usize::MAX; self.k];
        let mut next = 0;
        self.labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect()
    }

    pub fn same_partition(&self, other: &ClusteringAssignment) -> bool {
        self.labels.len() == other.labels.len() && self.canonical_labels() == other.canonical_labels()
    }
}

fn check_assignment<P: AsRef<[f64]>>(points: &[P], assignment: &ClusteringAssignment) -> Result<()> {
    if points.len() != assignment.labels.len() {
        return Err(Error::Dimension(format!(
            "{} points but {} labels",
            points.len(),
            assignment.labels.len()
        )));
    }
    assignment.validate()
}

/// `∑_j min_{p∈A_j} ∑_{q∈A_j} d(p, q)`: every cluster served by its best
/// in-cluster medoid.
pub fn kmedian_cost<P: AsRef<[f64]>>(points: &[P], assignment: &ClusteringAssignment) -> Result<f64> {
    check_assignment(points, assignment)?;
    Ok(assignment
        .clusters()
        .iter()
        .map(|members| {
            members
                .iter()
                .map(|&p| members.iter().map(|&q| dist(points[p].as_ref(), points[q].as_ref())).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        })
        .sum())
}

pub fn centroids<P: AsRef<[f64]>>(points: &[P], assignment: &ClusteringAssignment) -> Vec<Vec<f64>> {
    let m = points.first().map_or(0, |p| p.as_ref().len());
    let mut sums = vec![vec![0.0; m]; assignment.k];
    let mut counts = vec![0usize; assignment.k];
    for (p, &l) in points.iter().zip(&assignment.labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(p.as_ref()).for_each(|(s, x)| *s += x);
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    sums
}

/// k-means cost via centroids: `∑_t ∑_{x∈A_t} ‖x − c_t‖²`.
pub fn kmeans_cost<P: AsRef<[f64]>>(points: &[P], assignment: &ClusteringAssignment) -> Result<f64> {
    check_assignment(points, assignment)?;
    let cents = centroids(points, assignment);
    Ok(points
        .iter()
        .zip(&assignment.labels)
        .map(|(p, &l)| dist2(p.as_ref(), &cents[l]))
        .sum())
}

/// k-means cost via the pairwise identity `∑_t (1/(2|A_t|)) ∑_{i,j∈A_t} d²`.
pub fn kmeans_cost_pairwise<P: AsRef<[f64]>>(points: &[P], assignment: &ClusteringAssignment) -> Result<f64> {
    check_assignment(points, assignment)?;
    Ok(assignment
        .clusters()
        .iter()
        .map(|members| {
            let s: f64 = members
                .iter()
                .flat_map(|&i| members.iter().map(move |&j| (i, j)))
                .map(|(i, j)| dist2(points[i].as_ref(), points[j].as_ref()))
                .sum();
            0.5 * s / members.len() as f64
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Kmedian,
    Kmeans,
}

/// Stirling number of the second kind `S(n, k)`, saturating.
pub fn stirling2(n: usize, k: usize) -> u128 {
    let mut row = vec![0u128; k + 1];
    row[0] = 1;
    for i in 1..=n {
        for j in (1..=k.min(i)).rev() {
            row[j] = (j as u128).saturating_mul(row[j]).saturating_add(row[j - 1]);
        }
        row[0] = 0;
    }
    row[k]
}

pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Globally optimal partition into exactly `k` nonempty clusters by
/// enumerating every set partition (restricted growth strings).
pub fn brute_force_optimum<P: AsRef<[f64]>>(
    points: &[P],
    k: usize,
    objective: Objective,
) -> Result<(ClusteringAssignment, f64)> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 ≤ k ≤ N, got k = {k}, N = {n}")));
    }
    let count = stirling2(n, k);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge { partitions: count, limit: BRUTE_FORCE_LIMIT });
    }
    let d = match objective {
        Objective::Kmedian => euclidean_distances(points),
        Objective::Kmeans => squared_distances(points),
    };
    let mut best_cost = f64::INFINITY;
    let mut best = Vec::new();
    for_each_partition(n, k, |labels| {
        let c = partition_cost(&d, labels, k, objective);
        if c < best_cost {
            best_cost = c;
            best = labels.to_vec();
        }
    });
    Ok((ClusteringAssignment { k, labels: best, medoids: None }, best_cost))
}

fn partition_cost(d: &SquareMatrix, labels: &[usize], k: usize, objective: Objective) -> f64 {
    let mut members = vec![Vec::new(); k];
    for (p, &l) in labels.iter().enumerate() {
        members[l].push(p);
    }
    members
        .iter()
        .map(|ms| match objective {
            Objective::Kmedian => ms
                .iter()
                .map(|&p| ms.iter().map(|&q| d.get(p, q)).sum::<f64>())
                .fold(f64::INFINITY, f64::min),
            Objective::Kmeans => {
                let s: f64 = ms.iter().flat_map(|&i| ms.iter().map(move |&j| d.get(i, j))).sum();
                0.5 * s / ms.len() as f64
            }
        })
        .sum()
}

/// Visit every partition of `0..n` into exactly `k` nonempty blocks, as
/// restricted growth strings in lexicographic order.
pub fn for_each_partition(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k == 0 || k > n {
        return;
    }
    let mut labels = vec![0usize; n];
    // prefix_max[i] = max label among labels[0..i]
    fn rec(pos: usize, used: usize, n: usize, k: usize, labels: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        if pos == n {
            if used == k {
                visit(labels);
            }
            return;
        }
        // Remaining slots must be able to open the missing blocks.
        if k - used > n - pos {
            return;
        }
        let top = if used < k { used } else { used - 1 };
        for l in 0..=top {
            labels[pos] = l;
            rec(pos + 1, used.max(l + 1), n, k, labels, visit);
        }
    }
    labels[0] = 0;
    rec(1, 1, n, k, &mut labels, &mut visit);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pts(v: &[[f64; 2]]) -> Vec<Vec<f64>> {
        v.iter().map(|p| p.to_vec()).collect()
    }

    #[test]
    fn two_centers_at_requested_distance() {
        let inst = sample_planted(3, 2, 1, 4.0, Distribution::UniformBall, 7).unwrap();
        inst.validate().unwrap();
        assert_abs_diff_eq!(inst.min_center_distance(), 4.0, epsilon = 1e-12);
        assert_eq!(inst.num_points(), 2);
    }

    #[test]
    fn simplex_layout_is_equilateral() {
        for (m, k) in [(3, 4), (2, 3), (5, 3), (1, 2)] {
            let c = center_layout(m, k, 2.5);
            for a in 0..k {
                for b in a + 1..k {
                    assert_abs_diff_eq!(dist(&c[a], &c[b]), 2.5, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn grid_layout_keeps_min_separation() {
        let c = center_layout(2, 7, 3.0);
        let mut best = f64::INFINITY;
        for a in 0..7 {
            for b in a + 1..7 {
                best = best.min(dist(&c[a], &c[b]));
            }
        }
        assert!(best >= 3.0 - 1e-12);
    }

    #[test]
    fn figure_family_instance_shape() {
        let inst = sample_planted(3, 2, 25, 3.5, Distribution::UniformBall, 1).unwrap();
        inst.validate().unwrap();
        assert_eq!(inst.num_points(), 50);
        assert_abs_diff_eq!(inst.min_center_distance(), 3.5, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(sample_planted(3, 0, 5, 3.0, Distribution::UniformBall, 0).is_err());
        assert!(sample_planted(3, 2, 0, 3.0, Distribution::UniformBall, 0).is_err());
        assert!(sample_planted(3, 2, 5, 1.5, Distribution::UniformBall, 0).is_err());
        assert!(matches!("gaussian".parse::<Distribution>(), Err(Error::UnknownDistribution(_))));
        assert_eq!("uniform-sphere-scaled".parse::<Distribution>().unwrap(), Distribution::UniformSphereScaled);
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_planted(2, 3, 10, 2.5, Distribution::UniformBall, 11).unwrap();
        let b = sample_planted(2, 3, 10, 2.5, Distribution::UniformBall, 11).unwrap();
        assert_eq!(a, b);
        let c = sample_planted(2, 3, 10, 2.5, Distribution::UniformBall, 12).unwrap();
        assert_ne!(a, c);
    }

    // E‖mean − c‖² = θ/n = 0.05 in R² with n = 10, so the bound 3/√10 is
    // about four rms deviations. Seed is fixed.
    #[test]
    fn cluster_means_stay_near_centers() {
        let inst = sample_planted(2, 3, 10, 2.5, Distribution::UniformBall, 11).unwrap();
        let cents = centroids(&inst.points, &inst.planted());
        for (c, center) in cents.iter().zip(&inst.centers) {
            assert!(dist(c, center) <= 3.0 / 10f64.sqrt());
        }
    }

    #[test]
    fn json_round_trip_uses_17_digits() {
        let inst = sample_planted(3, 2, 3, 2.5, Distribution::UniformSphereScaled, 5).unwrap();
        let text = inst.to_json();
        assert!(text.contains("\"radius\":1.0000000000000000e0"));
        let back = ClusterInstance::from_json(&text).unwrap();
        assert_eq!(back, inst);
        assert!(ClusterInstance::from_json("{\"m\":1").is_err());
    }

    #[test]
    fn squared_distance_basics() {
        let d = squared_distances(&pts(&[[0.0, 0.0], [3.0, 4.0]]));
        assert_eq!(d.get(0, 1), 25.0);
        assert_eq!(d.get(1, 0), 25.0);
        assert_eq!(d.get(0, 0), 0.0);
        let e = euclidean_distances(&pts(&[[0.0, 0.0], [3.0, 4.0]]));
        assert_eq!(e.get(0, 1), 5.0);
    }

    #[test]
    fn block_accessor() {
        let p = pts(&[[0.0, 0.0], [1.0, 0.0], [5.0, 0.0], [7.0, 0.0]]);
        let d = squared_distances(&p);
        assert_eq!(d.block(0, 1, 2), vec![25.0, 49.0, 16.0, 36.0]);
    }

    #[test]
    fn costs_on_two_points() {
        let p = pts(&[[0.0, 0.0], [2.0, 0.0]]);
        let one = ClusteringAssignment::new(vec![0, 0], 1).unwrap();
        assert_abs_diff_eq!(kmeans_cost(&p, &one).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(kmeans_cost_pairwise(&p, &one).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(kmedian_cost(&p, &one).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn empty_cluster_is_an_error() {
        let p = pts(&[[0.0, 0.0], [2.0, 0.0]]);
        let bad = ClusteringAssignment { k: 3, labels: vec![0, 1], medoids: None };
        assert!(matches!(kmeans_cost(&p, &bad), Err(Error::EmptyCluster(2))));
        assert!(ClusteringAssignment::new(vec![0, 2], 3).is_err());
    }

    #[test]
    fn stirling_numbers() {
        assert_eq!(stirling2(8, 2), 127);
        assert_eq!(stirling2(4, 2), 7);
        assert_eq!(stirling2(5, 3), 25);
        let mut count = 0;
        for_each_partition(8, 2, |_| count += 1);
        assert_eq!(count, 127);
        let mut count = 0;
        for_each_partition(6, 3, |l| {
            assert_eq!(l[0], 0);
            count += 1
        });
        assert_eq!(count, stirling2(6, 3));
    }

    #[test]
    fn brute_force_two_far_pairs() {
        let p = pts(&[[0.0, 0.0], [10.0, 0.0], [0.5, 0.0], [10.5, 0.0]]);
        for obj in [Objective::Kmeans, Objective::Kmedian] {
            let (a, _) = brute_force_optimum(&p, 2, obj).unwrap();
            assert_eq!(a.canonical_labels(), vec![0, 1, 0, 1]);
        }
    }

    #[test]
    fn brute_force_enforces_limit() {
        let p: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        assert!(matches!(brute_force_optimum(&p, 3, Objective::Kmeans), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn brute_force_beats_every_bipartition() {
        let inst = sample_planted(2, 2, 4, 2.0, Distribution::UniformBall, 3).unwrap();
        for obj in [Objective::Kmeans, Objective::Kmedian] {
            let (_, best) = brute_force_optimum(&inst.points, 2, obj).unwrap();
            let mut seen = 0;
            for_each_partition(8, 2, |labels| {
                seen += 1;
                let a = ClusteringAssignment::new(labels.to_vec(), 2).unwrap();
                let c = match obj {
                    Objective::Kmeans => kmeans_cost(&inst.points, &a).unwrap(),
                    Objective::Kmedian => kmedian_cost(&inst.points, &a).unwrap(),
                };
                assert!(best <= c + 1e-12);
            });
            assert_eq!(seen, 127);
        }
    }

    #[test]
    fn brute_force_recovers_well_separated_planted() {
        let inst = sample_planted(3, 2, 4, 6.0, Distribution::UniformBall, 9).unwrap();
        for obj in [Objective::Kmeans, Objective::Kmedian] {
            let (a, _) = brute_force_optimum(&inst.points, 2, obj).unwrap();
            assert!(a.same_partition(&inst.planted()));
        }
    }

    #[test]
    fn offsets_are_translated_not_resampled() {
        // Rotation covariance: rotating offsets and centers commutes with
        // sampling because offsets are generated center-free.
        let offsets = sample_offsets(2, 2, 5, 1.0, Distribution::UniformBall, 4);
        let centers = center_layout(2, 2, 3.0);
        let (s, c) = (0.6f64, 0.8f64);
        let rot = |v: &Vec<f64>| vec![c * v[0] - s * v[1], s * v[0] + c * v[1]];
        let plain = ClusterInstance::from_offsets(centers.clone(), &offsets, 1.0, 4).unwrap();
        let rotated_offsets: Vec<Vec<Vec<f64>>> =
            offsets.iter().map(|cl| cl.iter().map(rot).collect()).collect();
        let rotated = ClusterInstance::from_offsets(centers.iter().map(rot).collect(), &rotated_offsets, 1.0, 4)
            .unwrap();
        for (p, q) in plain.points.iter().zip(&rotated.points) {
            let r = rot(&p.x);
            assert_abs_diff_eq!(r[0], q.x[0], epsilon = 1e-12);
            assert_abs_diff_eq!(r[1], q.x[1], epsilon = 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn pairwise_identity_holds(seed in 0u64..10_000, n in 1usize..6) {
            let inst = sample_planted(3, 2, n, 2.2, Distribution::UniformBall, seed).unwrap();
            let a = inst.planted();
            let c1 = kmeans_cost(&inst.points, &a).unwrap();
            let c2 = kmeans_cost_pairwise(&inst.points, &a).unwrap();
            prop_assert!((c1 - c2).abs() <= 1e-10 * (1.0 + c1.abs()));
        }

        #[test]
        fn squared_distances_match_naive_loop(seed in 0u64..10_000) {
            let inst = sample_planted(4, 1, 5, 2.0, Distribution::UniformBall, seed).unwrap();
            let d = squared_distances(&inst.points);
            for i in 0..5 {
                for j in 0..5 {
                    let mut acc = 0.0;
                    for t in 0..4 {
                        let diff = inst.points[i].x[t] - inst.points[j].x[t];
                        acc += diff * diff;
                    }
                    prop_assert!((d.get(i, j) - acc).abs() <= 1e-12);
                    prop_assert_eq!(d.get(i, j), d.get(j, i));
                }
            }
        }
    }
}
