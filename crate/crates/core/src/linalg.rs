//! Dense symmetric linear algebra: cyclic Jacobi eigendecomposition, PSD
//! projection, Rayleigh quotients orthogonal to the all-ones vector and
//! nullspace counting.

use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};

/// Symmetric matrix stored as its packed upper triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

#[inline]
fn packed(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * n - i + 1) / 2 + (j - i)
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * (n + 1) / 2] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Build from `f(i, j)` evaluated on the upper triangle only.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.data[packed(n, i, j)] = f(i, j);
            }
        }
        m
    }

    /// Read the upper triangle of a row-major dense matrix.
    pub fn from_dense_upper(n: usize, a: &[f64]) -> Self {
        Self::from_fn(n, |i, j| a[i * n + j])
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[packed(self.n, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let idx = packed(self.n, i, j);
        self.data[idx] = v;
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.get(i, j);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        a
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in i..self.n {
                let v = self.get(i, j);
                s += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        s.sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum()).collect()
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `self + c·11ᵀ`.
    pub fn add_constant(&self, c: f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|v| v + c).collect() }
    }

    /// `PAP` with `P = I − 11ᵀ/n`.
    pub fn project_perp_ones(&self) -> Self {
        let n = self.n;
        let nf = n as f64;
        let row: Vec<f64> = (0..n).map(|i| (0..n).map(|j| self.get(i, j)).sum::<f64>() / nf).collect();
        let tot = row.iter().sum::<f64>() / nf;
        Self::from_fn(n, |i, j| self.get(i, j) - row[i] - row[j] + tot)
    }
}

/// Eigenvalues ascending with matching orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    /// Row-major `n×n`; column `k` is the eigenvector of `values[k]`.
    pub vectors: Vec<f64>,
}

impl EigenDecomposition {
    pub fn order(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        let n = self.order();
        (0..n).map(|i| self.vectors[i * n + k]).collect()
    }

    /// `V f(Λ) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymmetricMatrix {
        let n = self.order();
        let w: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        SymmetricMatrix::from_fn(n, |i, j| {
            (0..n).map(|k| self.vectors[i * n + k] * w[k] * self.vectors[j * n + k]).sum()
        })
    }

    pub fn reconstruct(&self) -> SymmetricMatrix {
        self.reconstruct_with(|l| l)
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

pub fn eigh(a: &SymmetricMatrix) -> Result<EigenDecomposition> {
    eigh_with(a, &Tolerances::default())
}

pub fn eigh_with(a: &SymmetricMatrix, tol: &Tolerances) -> Result<EigenDecomposition> {
    if a.order() == 0 {
        return Err(Error::invalid("eigh needs order ≥ 1"));
    }
    if a.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (values, vectors) = jacobi_dense(a.to_dense(), a.order(), None, tol);
    Ok(EigenDecomposition { values, vectors })
}

/// Jacobi on a row-major dense symmetric matrix. With `warm = Some(V0)` the
/// matrix is first rotated into the basis `V0` (orthonormal columns), which
/// makes repeated decompositions of slowly changing matrices cheap.
pub fn jacobi_dense(
    mut a: Vec<f64>,
    n: usize,
    warm: Option<&[f64]>,
    tol: &Tolerances,
) -> (Vec<f64>, Vec<f64>) {
    let frob = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut v = match warm {
        Some(v0) => {
            a = congruence(&a, v0, n);
            v0.to_vec()
        }
        None => {
            let mut id = vec![0.0; n * n];
            (0..n).for_each(|i| id[i * n + i] = 1.0);
            id
        }
    };
    let threshold = tol.jacobi_offdiag_rel * frob;
    for _ in 0..tol.jacobi_max_sweeps {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| 2.0 * a[p * n + q] * a[p * n + q])
            .sum::<f64>()
            .sqrt();
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    let np = c * arp - s * arq;
                    let nq = s * arp + c * arq;
                    a[r * n + p] = np;
                    a[p * n + r] = np;
                    a[r * n + q] = nq;
                    a[q * n + r] = nq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for r in 0..n {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = c * vrp - s * vrq;
                    v[r * n + q] = s * vrp + c * vrq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[x * n + x].total_cmp(&a[y * n + y]).then(x.cmp(&y)));
    let values = order.iter().map(|&k| a[k * n + k]).collect();
    let mut vectors = vec![0.0; n * n];
    for (new, &old) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + new] = v[r * n + old];
        }
    }
    (values, vectors)
}

/// `Vᵀ A V` for dense row-major `n×n` inputs.
fn congruence(a: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    let mut av = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik != 0.0 {
                let row = &v[k * n..(k + 1) * n];
                let out = &mut av[i * n..(i + 1) * n];
                out.iter_mut().zip(row).for_each(|(o, x)| *o += aik * x);
            }
        }
    }
    let mut out = vec![0.0; n * n];
    for k in 0..n {
        let vrow = &v[k * n..(k + 1) * n];
        let avrow = &av[k * n..(k + 1) * n];
        for i in 0..n {
            let vki = vrow[i];
            if vki != 0.0 {
                let o = &mut out[i * n..(i + 1) * n];
                o.iter_mut().zip(avrow).for_each(|(o, x)| *o += vki * x);
            }
        }
    }
    // Symmetrize away rounding.
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (out[i * n + j] + out[j * n + i]);
            out[i * n + j] = m;
            out[j * n + i] = m;
        }
    }
    out
}

/// Nearest PSD matrix in Frobenius norm: clamp the spectrum at zero.
pub fn psd_project(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    Ok(eigh(a)?.reconstruct_with(|l| l.max(0.0)))
}

/// Dense PSD projection that also returns the eigenvectors for warm
/// starting the next call.
pub fn psd_project_dense(a: &[f64], n: usize, warm: Option<&[f64]>, tol: &Tolerances) -> (Vec<f64>, Vec<f64>) {
    let (vals, vecs) = jacobi_dense(a.to_vec(), n, warm, tol);
    let mut out = vec![0.0; n * n];
    for (k, &l) in vals.iter().enumerate() {
        if l <= 0.0 {
            continue;
        }
        let col: Vec<f64> = (0..n).map(|r| vecs[r * n + k]).collect();
        for i in 0..n {
            let f = l * col[i];
            if f != 0.0 {
                let o = &mut out[i * n..(i + 1) * n];
                o.iter_mut().zip(&col).for_each(|(o, c)| *o += f * c);
            }
        }
    }
    (out, vecs)
}

/// `max_{x⊥1} xᵀGx / xᵀx`, the top eigenvalue of `PGP`.
pub fn max_rayleigh_perp_ones(g: &SymmetricMatrix) -> Result<f64> {
    if g.order() <= 1 {
        return Ok(0.0);
    }
    Ok(eigh(&g.project_perp_ones())?.max())
}

/// Eigenvalues with `|λ| ≤ tol·max(1, λ_max)`.
pub fn nullspace_dimension(a: &SymmetricMatrix, tol: f64) -> Result<usize> {
    Ok(nullspace_dimension_of(&eigh(a)?, tol))
}

pub fn nullspace_dimension_of(eig: &EigenDecomposition, tol: f64) -> usize {
    let cut = tol * eig.max().max(1.0);
    eig.values.iter().filter(|l| l.abs() <= cut).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(n: usize, seed: u64) -> SymmetricMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SymmetricMatrix::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    fn check_invariants(a: &SymmetricMatrix, e: &EigenDecomposition) {
        let n = a.order();
        let rec = e.reconstruct();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((rec.get(i, j) - a.get(i, j)).abs());
            }
        }
        assert!(worst <= 1e-9 * (1.0 + a.max_abs()), "reconstruction {worst}");
        for p in 0..n {
            for q in 0..n {
                let dot: f64 = (0..n).map(|r| e.vectors[r * n + p] * e.vectors[r * n + q]).sum();
                let want = if p == q { 1.0 } else { 0.0 };
                assert!((dot - want).abs() <= 1e-9);
            }
        }
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    /// Number of eigenvalues below `x`, from the inertia of `A − xI`.
    fn count_below(a: &SymmetricMatrix, x: f64) -> usize {
        let n = a.order();
        let mut m = a.to_dense();
        for i in 0..n {
            m[i * n + i] -= x;
        }
        // Symmetric Gaussian elimination without pivoting; generic shifts
        // keep the pivots away from zero.
        let mut neg = 0;
        for k in 0..n {
            let piv = m[k * n + k];
            if piv < 0.0 {
                neg += 1;
            }
            for i in k + 1..n {
                let f = m[i * n + k] / piv;
                for j in k + 1..n {
                    m[i * n + j] -= f * m[k * n + j];
                }
            }
        }
        neg
    }

    fn det_cofactor(a: &[Vec<f64>]) -> f64 {
        let n = a.len();
        if n == 1 {
            return a[0][0];
        }
        (0..n)
            .map(|c| {
                let minor: Vec<Vec<f64>> =
                    a[1..].iter().map(|row| row.iter().enumerate().filter(|&(j, _)| j != c).map(|(_, &v)| v).collect()).collect();
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                sign * a[0][c] * det_cofactor(&minor)
            })
            .sum()
    }

    #[test]
    fn diagonal_input() {
        let e = eigh(&SymmetricMatrix::diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_by_two() {
        let a = SymmetricMatrix::from_fn(2, |i, j| if i == j { 2.0 } else { 1.0 });
        let e = eigh(&a).unwrap();
        assert_abs_diff_eq!(e.values[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], 3.0, epsilon = 1e-14);
        check_invariants(&a, &e);
    }

    #[test]
    fn rejects_non_finite() {
        let mut a = SymmetricMatrix::identity(3);
        a.set(0, 1, f64::NAN);
        assert!(matches!(eigh(&a), Err(Error::NonFinite)));
    }

    #[test]
    fn inertia_brackets_every_eigenvalue() {
        let a = random_sym(8, 42);
        let e = eigh(&a).unwrap();
        check_invariants(&a, &e);
        for &l in &e.values {
            let below = count_below(&a, l - 1e-7);
            let above = count_below(&a, l + 1e-7);
            assert_eq!(above - below, 1, "eigenvalue {l}");
        }
    }

    #[test]
    fn determinant_and_trace() {
        for n in 1..=6 {
            let a = random_sym(n, 100 + n as u64);
            let e = eigh(&a).unwrap();
            let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a.get(i, j)).collect()).collect();
            let det = det_cofactor(&rows);
            let prod: f64 = e.values.iter().product();
            assert!((det - prod).abs() <= 1e-9 * (1.0 + det.abs()));
            let sum: f64 = e.values.iter().sum();
            assert!((sum - a.trace()).abs() <= 1e-9 * (1.0 + a.trace().abs()));
        }
    }

    #[test]
    fn warm_start_matches_cold() {
        let a = random_sym(12, 3);
        let tol = Tolerances::default();
        let (v0, basis) = jacobi_dense(a.to_dense(), 12, None, &tol);
        let b = SymmetricMatrix::from_fn(12, |i, j| a.get(i, j) + if i == j { 1e-3 } else { 0.0 });
        let (v1, _) = jacobi_dense(b.to_dense(), 12, Some(&basis), &tol);
        for (x, y) in v0.iter().zip(&v1) {
            assert_abs_diff_eq!(x + 1e-3, y, epsilon = 1e-10);
        }
    }

    #[test]
    fn psd_projection_examples() {
        let p = psd_project(&SymmetricMatrix::diag(&[1.0, -1.0])).unwrap();
        assert_abs_diff_eq!(p.get(0, 0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(1, 1), 0.0, epsilon = 1e-15);
        let g = SymmetricMatrix::from_fn(3, |i, j| [[2.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 2.0]][i][j]);
        let q = psd_project(&g).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(q.get(i, j), g.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn psd_projection_beats_every_clamped_spectrum() {
        let a = random_sym(6, 17);
        let e = eigh(&a).unwrap();
        let p = psd_project(&a).unwrap();
        let dist = |b: &SymmetricMatrix| {
            (0..6).flat_map(|i| (0..6).map(move |j| (i, j))).map(|(i, j)| (a.get(i, j) - b.get(i, j)).powi(2)).sum::<f64>()
        };
        let best = dist(&p);
        let pe = eigh(&p).unwrap();
        assert!(pe.min() >= -1e-9 * a.max_abs());
        // Every spectrum with entries in {0, λ⁺, |λ|} is PSD in the same basis.
        for code in 0..3usize.pow(6) {
            let mut c = code;
            let mu: Vec<f64> = e
                .values
                .iter()
                .map(|&l| {
                    let pick = c % 3;
                    c /= 3;
                    [0.0, l.max(0.0), l.abs()][pick]
                })
                .collect();
            let cand = EigenDecomposition { values: mu, vectors: e.vectors.clone() }.reconstruct_with(|l| l);
            assert!(best <= dist(&cand) + 1e-12);
        }
    }

    #[test]
    fn rayleigh_examples() {
        let ones = SymmetricMatrix::from_fn(4, |_, _| 1.0);
        assert_abs_diff_eq!(max_rayleigh_perp_ones(&ones).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(max_rayleigh_perp_ones(&SymmetricMatrix::identity(5)).unwrap(), 1.0, epsilon = 1e-14);
        assert_eq!(max_rayleigh_perp_ones(&SymmetricMatrix::identity(1)).unwrap(), 0.0);
    }

    #[test]
    fn rayleigh_matches_random_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let m: Vec<[f64; 2]> = (0..5).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let g = SymmetricMatrix::from_fn(5, |i, j| m[i][0] * m[j][0] + m[i][1] * m[j][1]);
        let ours = max_rayleigh_perp_ones(&g).unwrap();
        let project = |x: &mut [f64]| {
            let mean = x.iter().sum::<f64>() / 5.0;
            x.iter_mut().for_each(|v| *v -= mean);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= norm);
        };
        let mut best = f64::NEG_INFINITY;
        let mut best_x = vec![0.0; 5];
        for _ in 0..1_000_000 {
            let mut x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            project(&mut x);
            let r = g.quadratic_form(&x);
            if r > best {
                best = r;
                best_x = x;
            }
        }
        assert!(best <= ours + 1e-12);
        // Polish the best sample by projected power steps on G + I.
        let mut x = best_x;
        for _ in 0..2000 {
            let mut y = g.matvec(&x);
            y.iter_mut().zip(&x).for_each(|(a, b)| *a += b);
            project(&mut y);
            x = y;
        }
        assert!((g.quadratic_form(&x) - ours).abs() <= 1e-6);
    }

    #[test]
    fn nullspace_examples() {
        assert_eq!(nullspace_dimension(&SymmetricMatrix::identity(5), 1e-8).unwrap(), 0);
        let ones = SymmetricMatrix::from_fn(4, |_, _| 1.0);
        assert_eq!(nullspace_dimension(&ones, 1e-8).unwrap(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn eigh_invariants(seed in 0u64..1_000_000, n in 1usize..10) {
            let a = random_sym(n, seed);
            let e = eigh(&a).unwrap();
            check_invariants(&a, &e);
            let sum: f64 = e.values.iter().sum();
            prop_assert!((sum - a.trace()).abs() <= 1e-9 * (1.0 + a.frobenius()));
        }

        #[test]
        fn rayleigh_ignores_constant_shift(seed in 0u64..1_000_000, c in -5.0f64..5.0) {
            let a = random_sym(6, seed);
            let g = SymmetricMatrix::from_fn(6, |i, j| (0..6).map(|k| a.get(i, k) * a.get(j, k)).sum());
            let r0 = max_rayleigh_perp_ones(&g).unwrap();
            let r1 = max_rayleigh_perp_ones(&g.add_constant(c)).unwrap();
            prop_assert!((r0 - r1).abs() <= 1e-9 * (1.0 + r0.abs()));
        }
    }
}
