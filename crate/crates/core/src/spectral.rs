//! Numerical estimates of the two phase parameters of a kernel `P`:
//!
//! * `ρ = limsup_n p⁽ⁿ⁾(x, x)^{1/n}`, the convergence parameter;
//! * `θ = lim_n ‖(Pᵀ)ⁿ‖^{1/n}` with `‖A‖ = sup_x Σ_y |a_xy|`, i.e. the growth
//!   rate of the largest column sum of `Pⁿ`.
//!
//! Generic kernels are iterated with sparse products. For the biased walk on
//! the homogeneous tree both quantities depend on the depth only, so the
//! radial recursions in [`TreeRadial`] give the infinite-tree values exactly
//! at `O(n_max²)` cost.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::graph::Kernel;
use crate::linalg::SparseMatrix;
use crate::scalar::Scalar;

/// Values below this are treated as underflow.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// `v_n = max_x Σ_y p⁽ⁿ⁾(y, x)`, extrapolated by `v_n / v_{n-1}`.
    Theta,
    /// `r_n = p⁽ⁿ⁾(x, x)` at even `n`, extrapolated by `√(r_n / r_{n-2})`.
    Rho,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPoint<T> {
    pub n: usize,
    pub value: T,
    pub root_estimate: Option<T>,
    pub ratio_estimate: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate<T> {
    pub kind: EstimatorKind,
    pub points: Vec<SpectralPoint<T>>,
    pub extrapolated: T,
    pub n_max: usize,
}

impl<T: Scalar> SpectralEstimate<T> {
    fn from_values(kind: EstimatorKind, values: Vec<(usize, T)>, n_max: usize) -> Result<Self> {
        let floor = T::lit(UNDERFLOW_FLOOR);
        let mut points: Vec<SpectralPoint<T>> = Vec::with_capacity(values.len());
        for (i, &(n, value)) in values.iter().enumerate() {
            let root_estimate = (n > 0 && value > T::zero()).then(|| value.powf(T::one() / T::from_count(n as u64)));
            let ratio_estimate = (i > 0 && values[i - 1].1 > floor).then(|| {
                let (prev_n, prev) = values[i - 1];
                let r = value / prev;
                let gap = n - prev_n;
                if gap == 1 {
                    r
                } else {
                    r.powf(T::one() / T::from_count(gap as u64))
                }
            });
            points.push(SpectralPoint {
                n,
                value,
                root_estimate,
                ratio_estimate,
            });
        }
        let extrapolated = points
            .iter()
            .rev()
            .find_map(|p| p.ratio_estimate)
            .ok_or_else(|| Error::TruncationTooShallow("all values below the underflow floor".into()))?;
        Ok(Self {
            kind,
            points,
            extrapolated,
            n_max,
        })
    }

    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.points.iter().map(|p| p.value)
    }

    pub fn value_at(&self, n: usize) -> Option<T> {
        self.points.iter().find(|p| p.n == n).map(|p| p.value)
    }
}

fn check_underflow<T: Scalar>(v: T, n: usize) -> Result<()> {
    if v < T::lit(UNDERFLOW_FLOOR) {
        return Err(Error::TruncationTooShallow(format!(
            "all tracked values underflow at step {n}"
        )));
    }
    Ok(())
}

/// Multi-source BFS distance to the nearest lossy vertex (`usize::MAX` if
/// the kernel is stochastic).
fn distance_to_boundary<T: Scalar>(kernel: &Kernel<T>) -> Vec<usize> {
    let g = kernel.graph();
    let mut dist = vec![usize::MAX; g.len()];
    let mut queue = VecDeque::new();
    for x in kernel.lossy_vertices() {
        dist[x] = 0;
        queue.push_back(x);
    }
    while let Some(x) = queue.pop_front() {
        for &y in g.neighbors(x) {
            if dist[y] == usize::MAX {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    dist
}

/// Column sums `w_n = (Pᵀ)ⁿ 𝟏` for `n = 0..=n_max`.
pub fn column_sum_iterates<T: Scalar>(kernel: &Kernel<T>, n_max: usize) -> Vec<Vec<T>> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut w = vec![T::one(); kernel.len()];
    out.push(w.clone());
    for _ in 0..n_max {
        w = kernel.matrix().vec_mul(&w);
        out.push(w.clone());
    }
    out
}

/// `θ̂` for a finite kernel. When the kernel has lossy rows (a truncation
/// of a larger graph) only vertices at distance `≥ n_max + 2` from every
/// lossy row are tracked; if none remain the estimate is refused.
pub fn theta_estimate<T: Scalar>(kernel: &Kernel<T>, n_max: usize) -> Result<SpectralEstimate<T>> {
    if n_max < 2 {
        return Err(Error::InvalidParameter(format!("n_max must be >= 2, got {n_max}")));
    }
    let guard = distance_to_boundary(kernel);
    let tracked: Vec<usize> = (0..kernel.len()).filter(|&x| guard[x] >= n_max + 2).collect();
    if tracked.is_empty() {
        return Err(Error::TruncationTooShallow(format!(
            "no vertex lies {} steps away from the truncation boundary",
            n_max + 2
        )));
    }
    theta_over(kernel, n_max, &tracked)
}

/// `θ̂` over every vertex, ignoring the guard band. Appropriate for kernels
/// whose lossy rows are genuine (a restriction `p_Λ` rather than a
/// truncation).
pub fn theta_estimate_unguarded<T: Scalar>(kernel: &Kernel<T>, n_max: usize) -> Result<SpectralEstimate<T>> {
    if n_max < 2 {
        return Err(Error::InvalidParameter(format!("n_max must be >= 2, got {n_max}")));
    }
    let all: Vec<usize> = (0..kernel.len()).collect();
    theta_over(kernel, n_max, &all)
}

fn theta_over<T: Scalar>(kernel: &Kernel<T>, n_max: usize, tracked: &[usize]) -> Result<SpectralEstimate<T>> {
    let mut w = vec![T::one(); kernel.len()];
    let mut values = vec![(0, T::one())];
    for n in 1..=n_max {
        w = kernel.matrix().vec_mul(&w);
        let v = tracked.iter().map(|&x| w[x]).fold(T::zero(), T::max);
        check_underflow(v, n)?;
        values.push((n, v));
    }
    SpectralEstimate::from_values(EstimatorKind::Theta, values, n_max)
}

/// Return probabilities `p⁽²ʲ⁾(x, x)` by iterating `δ_x Pⁿ`.
pub fn rho_estimate<T: Scalar>(kernel: &Kernel<T>, x: usize, n_max: usize) -> Result<SpectralEstimate<T>> {
    if n_max < 4 || n_max % 2 != 0 {
        return Err(Error::InvalidParameter(format!("n_max must be even and >= 4, got {n_max}")));
    }
    if x >= kernel.len() {
        return Err(Error::InvalidParameter(format!("vertex {x} out of range")));
    }
    let guard = distance_to_boundary(kernel);
    if guard[x] < n_max + 2 {
        return Err(Error::TruncationTooShallow(format!(
            "vertex {x} is {} steps from the truncation boundary, need {}",
            guard[x],
            n_max + 2
        )));
    }
    let mut u = vec![T::zero(); kernel.len()];
    u[x] = T::one();
    let mut values = vec![(0, T::one())];
    for n in 1..=n_max {
        u = kernel.matrix().vec_mul(&u);
        if n % 2 == 0 {
            values.push((n, u[x]));
        }
    }
    reliable_prefix(&mut values);
    SpectralEstimate::from_values(EstimatorKind::Rho, values, n_max)
}

// Keep values up to the last one above the underflow floor.
fn reliable_prefix<T: Scalar>(values: &mut Vec<(usize, T)>) {
    let floor = T::lit(UNDERFLOW_FLOOR);
    if let Some(last) = values.iter().rposition(|&(_, v)| v > floor) {
        values.truncate(last + 1);
    }
}

/// Radial projection of the biased walk on the homogeneous tree of degree
/// `n + 1` (outward weight `p` beyond depth 1, `1/(n+1)` from the root,
/// `1 - n p` inward).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeRadial<T> {
    pub n: usize,
    pub p: T,
}

impl<T: Scalar> TreeRadial<T> {
    pub fn new(n: usize, p: T) -> Result<Self> {
        let nt = T::from_count(n as u64);
        if n < 2 {
            return Err(Error::InvalidParameter(format!("tree needs n >= 2, got {n}")));
        }
        if !(p >= T::zero() && p <= T::one() / nt) {
            return Err(Error::InvalidParameter(format!("p = {p} outside [0, 1/{n}]")));
        }
        Ok(Self { n, p })
    }

    fn weights(&self) -> (T, T, T) {
        let nt = T::from_count(self.n as u64);
        let inward = T::one() - nt * self.p;
        (nt, inward, T::one() / (nt + T::one()))
    }

    /// Column sums `w_k(m)` by depth `m` for `k = 0..=n_max`, exact on the
    /// infinite tree for depths `m ≤ n_max + 2`.
    pub fn column_sums(&self, n_max: usize) -> Vec<Vec<T>> {
        let len = 2 * n_max + 4;
        let (nt, inward, from_root) = self.weights();
        let mut w = vec![T::one(); len];
        let mut out = vec![w[..=n_max + 2].to_vec()];
        for _ in 0..n_max {
            let at = |w: &[T], m: usize| if m < len { w[m] } else { T::zero() };
            let mut next = vec![T::zero(); len];
            next[0] = (nt + T::one()) * inward * at(&w, 1);
            next[1] = w[0] * from_root + nt * inward * at(&w, 2);
            for m in 2..len {
                next[m] = self.p * w[m - 1] + nt * inward * at(&w, m + 1);
            }
            w = next;
            out.push(w[..=n_max + 2].to_vec());
        }
        out
    }

    /// `θ̂` from the radial column-sum recursion.
    pub fn theta_estimate(&self, n_max: usize) -> Result<SpectralEstimate<T>> {
        if n_max < 2 {
            return Err(Error::InvalidParameter(format!("n_max must be >= 2, got {n_max}")));
        }
        let mut values = Vec::with_capacity(n_max + 1);
        for (k, w) in self.column_sums(n_max).into_iter().enumerate() {
            let v = w.into_iter().fold(T::zero(), T::max);
            check_underflow(v, k)?;
            values.push((k, v));
        }
        SpectralEstimate::from_values(EstimatorKind::Theta, values, n_max)
    }

    /// Return probabilities to the root of the radial birth–death chain.
    pub fn return_probabilities(&self, n_max: usize) -> Vec<T> {
        let len = n_max / 2 + 2;
        let (nt, inward, _) = self.weights();
        let out_w = nt * self.p;
        let mut u = vec![T::zero(); len];
        u[0] = T::one();
        let mut returns = vec![T::one()];
        for _ in 0..n_max {
            let mut next = vec![T::zero(); len];
            next[1] += u[0];
            for m in 1..len {
                if u[m] == T::zero() {
                    continue;
                }
                next[m - 1] += u[m] * inward;
                if m + 1 < len {
                    next[m + 1] += u[m] * out_w;
                }
            }
            u = next;
            returns.push(u[0]);
        }
        returns
    }

    pub fn rho_estimate(&self, n_max: usize) -> Result<SpectralEstimate<T>> {
        if n_max < 4 || n_max % 2 != 0 {
            return Err(Error::InvalidParameter(format!("n_max must be even and >= 4, got {n_max}")));
        }
        let r = self.return_probabilities(n_max);
        let mut values: Vec<(usize, T)> = (0..=n_max).step_by(2).map(|n| (n, r[n])).collect();
        reliable_prefix(&mut values);
        SpectralEstimate::from_values(EstimatorKind::Rho, values, n_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeClosedForms<T> {
    pub rho: T,
    pub theta_lo: T,
    pub theta_hi: T,
}

/// Closed-form `ρ` and bounds on `θ` for the biased walk on the tree of
/// degree `n + 1`. `θ` is exact (`theta_lo == theta_hi`) for
/// `p ≥ 1/(n+1)`.
pub fn tree_closed_forms<T: Scalar>(n: usize, p: T) -> Result<TreeClosedForms<T>> {
    TreeRadial::new(n, p)?;
    let nt = T::from_count(n as u64);
    let one = T::one();
    let two = T::lit(2.0);
    let rho = if p <= one / (two * nt) {
        one
    } else {
        two * (nt * p * (one - nt * p)).sqrt()
    };
    let uniform = one / (nt + one);
    let eps = T::epsilon() * T::lit(16.0);
    let (theta_lo, theta_hi) = if (p - uniform).abs() <= eps {
        (one, one)
    } else {
        let lo = nt - (nt * nt - one) * p;
        if p > uniform {
            (lo, lo)
        } else {
            (lo, (nt + one) * (one - nt * p))
        }
    };
    Ok(TreeClosedForms { rho, theta_lo, theta_hi })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaSign {
    /// `ν ≥ νP` everywhere checked: `θ ≤ 1`.
    AtMostOne,
    /// `ν ≤ νP` everywhere checked: `θ ≥ 1`.
    AtLeastOne,
    /// Both inequalities hold: `θ = 1`.
    EqualOne,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunctionVerdict<T> {
    pub sign: ThetaSign,
    /// `max ν / min ν` over the support of `ν`.
    pub comparability: T,
}

/// Compares `ν(x)` with `(νP)(x) = Σ_y ν(y) p(y, x)` on `checked` (all
/// vertices when `None`).
///
/// A positive `ν` with `ν ≥ νP` keeps `‖(Pᵀ)ⁿ‖` bounded by the
/// comparability constant, so `θ ≤ 1`; the reverse inequality gives
/// `θ ≥ 1`.
pub fn theta_sign_via_test_function<T: Scalar>(
    kernel: &Kernel<T>,
    nu: &[T],
    checked: Option<&[usize]>,
) -> Result<TestFunctionVerdict<T>> {
    if nu.len() != kernel.len() {
        return Err(Error::Mismatch("test function length vs kernel size".into()));
    }
    if nu.iter().any(|&v| !(v >= T::zero()) || !v.is_finite()) {
        return Err(Error::InvalidParameter("test function must be finite and nonnegative".into()));
    }
    let support: Vec<T> = nu.iter().copied().filter(|&v| v > T::zero()).collect();
    if support.is_empty() {
        return Err(Error::InvalidParameter("test function is identically zero".into()));
    }
    let max = support.iter().copied().fold(T::zero(), T::max);
    let min = support.iter().copied().fold(T::infinity(), T::min);
    let image = kernel.matrix().vec_mul(nu);
    let all: Vec<usize>;
    let checked = match checked {
        Some(c) => c,
        None => {
            all = (0..kernel.len()).collect();
            &all
        }
    };
    let tol = T::lit(1e-12);
    let mut super_ok = true;
    let mut sub_ok = true;
    for &x in checked {
        let slack = tol * (T::one() + nu[x].abs());
        if nu[x] + slack < image[x] {
            super_ok = false;
        }
        if nu[x] > image[x] + slack {
            sub_ok = false;
        }
    }
    let sign = match (super_ok, sub_ok) {
        (true, true) => ThetaSign::EqualOne,
        (true, false) => ThetaSign::AtMostOne,
        (false, true) => ThetaSign::AtLeastOne,
        (false, false) => ThetaSign::Inconclusive,
    };
    Ok(TestFunctionVerdict {
        sign,
        comparability: max / min,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerronBounds<T> {
    pub lower: T,
    pub upper: T,
    pub iterations: usize,
}

/// Spectral radius of a finite nonnegative matrix through the
/// Collatz–Wielandt bounds of power iteration on `A + I` (the shift makes
/// the iteration aperiodic). `upper` is always a valid upper bound.
pub fn perron_root<T: Scalar>(a: &SparseMatrix<T>, tol: T, max_iter: usize) -> PerronBounds<T> {
    let n = a.dim();
    if n == 0 {
        return PerronBounds {
            lower: T::zero(),
            upper: T::zero(),
            iterations: 0,
        };
    }
    let mut x = vec![T::one(); n];
    let mut bounds = PerronBounds {
        lower: T::zero(),
        upper: T::infinity(),
        iterations: 0,
    };
    for it in 1..=max_iter {
        let ax = a.mul_vec(&x);
        let mut lo = T::infinity();
        let mut hi = T::zero();
        for i in 0..n {
            let r = ax[i] / x[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        bounds = PerronBounds {
            lower: bounds.lower.max(lo),
            upper: bounds.upper.min(hi),
            iterations: it,
        };
        if bounds.upper - bounds.lower <= tol * (T::one() + bounds.upper) {
            break;
        }
        let y: Vec<T> = ax.iter().zip(&x).map(|(&p, &q)| p + q).collect();
        let norm = y.iter().copied().fold(T::zero(), T::max);
        x = y.into_iter().map(|v| v / norm).collect();
    }
    bounds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use std::sync::Arc;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn doubly_stochastic_theta_is_one() {
        let k = Kernel::<f64>::simple(Arc::new(Graph::lattice_torus(1, 7).unwrap()));
        let est = theta_estimate(&k, 10).unwrap();
        assert!(est.values().all(|v| v == 1.0));
        assert_eq!(est.extrapolated, 1.0);
    }

    #[test]
    fn self_loop_rho_is_one() {
        let g = Arc::new(Graph::custom(vec![vec![0]], 0).unwrap());
        let k = Kernel::<f64>::from_rows(g, vec![vec![(0, 1.0)]]).unwrap();
        let est = rho_estimate(&k, 0, 8).unwrap();
        assert_eq!(est.extrapolated, 1.0);
    }

    #[test]
    fn rho_needs_even_n_max() {
        let k = Kernel::<f64>::simple(Arc::new(Graph::lattice_torus(1, 7).unwrap()));
        assert!(rho_estimate(&k, 0, 5).is_err());
        assert!(rho_estimate(&k, 0, 2).is_err());
        assert!(theta_estimate(&k, 1).is_err());
    }

    #[test]
    fn shallow_truncation_is_refused() {
        let g = Arc::new(Graph::tree(2, 5).unwrap());
        let k = Kernel::<f64>::biased_tree(g, 0.45).unwrap();
        assert!(matches!(theta_estimate(&k, 10), Err(Error::TruncationTooShallow(_))));
        assert!(matches!(rho_estimate(&k, 0, 10), Err(Error::TruncationTooShallow(_))));
    }

    #[test]
    fn closed_form_rows() {
        let c = tree_closed_forms(2, 1.0 / 3.0).unwrap();
        assert!(close(c.rho, 2.0 * 2f64.sqrt() / 3.0, 1e-15));
        assert_eq!((c.theta_lo, c.theta_hi), (1.0, 1.0));
        let c = tree_closed_forms(2, 0.45).unwrap();
        assert!(close(c.rho, 0.6, 1e-12));
        assert!(close(c.theta_lo, 0.65, 1e-12) && close(c.theta_hi, 0.65, 1e-12));
        let c = tree_closed_forms(2, 0.1).unwrap();
        assert_eq!(c.rho, 1.0);
        assert!(close(c.theta_lo, 1.7, 1e-12) && close(c.theta_hi, 2.4, 1e-12));
        assert!(tree_closed_forms(2, 0.6).is_err());
        assert!(tree_closed_forms(2, -0.1).is_err());
    }

    #[test]
    fn closed_forms_consistent() {
        for i in 0..=200 {
            let p = 0.5 * i as f64 / 200.0;
            let c = tree_closed_forms(2, p).unwrap();
            assert!(c.theta_lo <= c.theta_hi + 1e-12);
            assert!(c.rho <= 1.0 && c.rho >= 0.0);
        }
        // continuity of ρ at p = 1/(2n)
        let left = tree_closed_forms(3, 1.0 / 6.0).unwrap().rho;
        let right = tree_closed_forms(3, 1.0 / 6.0 + 1e-9).unwrap().rho;
        assert!(close(left, right, 1e-6));
    }

    #[test]
    fn radial_theta_for_biased_tree() {
        let est = TreeRadial::new(2, 0.45).unwrap().theta_estimate(40).unwrap();
        assert!(close(est.extrapolated, 0.65, 1e-12));
        let est = TreeRadial::new(2, 1.0 / 3.0).unwrap().theta_estimate(40).unwrap();
        assert!(close(est.extrapolated, 1.0, 1e-12));
    }

    #[test]
    fn radial_theta_inside_bounds_below_uniform() {
        let est = TreeRadial::new(2, 0.1).unwrap().theta_estimate(200).unwrap();
        assert!(est.extrapolated >= 1.7 - 1e-9 && est.extrapolated <= 2.4 + 1e-9, "{}", est.extrapolated);
    }

    #[test]
    fn radial_rho() {
        let est = TreeRadial::new(2, 0.45).unwrap().rho_estimate(2000).unwrap();
        assert!(close(est.extrapolated, 0.6, 0.03), "{}", est.extrapolated);
        let est = TreeRadial::new(2, 0.1).unwrap().rho_estimate(400).unwrap();
        assert!(close(est.extrapolated, 1.0, 1e-6), "{}", est.extrapolated);
    }

    #[test]
    fn dense_truncation_matches_radial_recursion() {
        let depth = 12;
        let n_max = 8;
        let g = Arc::new(Graph::tree(2, depth).unwrap());
        let k = Kernel::<f64>::biased_tree(g.clone(), 0.45).unwrap();
        let dense = column_sum_iterates(&k, n_max);
        let radial = TreeRadial::new(2, 0.45).unwrap().column_sums(n_max);
        for n in 0..=n_max {
            for x in 0..g.len() {
                let m = g.dist(x);
                // exact while the boundary at `depth` is out of reach
                if m + n < depth && m <= n_max + 2 {
                    assert!((dense[n][x] - radial[n][m]).abs() < 1e-10, "n={n} m={m}");
                }
            }
        }
        let guarded = theta_estimate(&k, 2).unwrap();
        let rad = TreeRadial::new(2, 0.45).unwrap().theta_estimate(2).unwrap();
        assert!(close(guarded.extrapolated, rad.extrapolated, 1e-10));
    }

    #[test]
    fn test_function_on_doubly_stochastic() {
        let k = Kernel::<f64>::simple(Arc::new(Graph::lattice_torus(2, 4).unwrap()));
        let v = theta_sign_via_test_function(&k, &vec![1.0; 16], None).unwrap();
        assert_eq!(v.sign, ThetaSign::EqualOne);
        assert_eq!(v.comparability, 1.0);
    }

    #[test]
    fn test_function_mixed_is_inconclusive() {
        let k = Kernel::<f64>::simple(Arc::new(Graph::lattice_torus(1, 6).unwrap()));
        let mut nu = vec![1.0; 6];
        nu[2] = 2.0;
        let v = theta_sign_via_test_function(&k, &nu, None).unwrap();
        assert_eq!(v.sign, ThetaSign::Inconclusive);
        assert_eq!(v.comparability, 2.0);
        assert!(theta_sign_via_test_function(&k, &[0.0; 6], None).is_err());
        assert!(theta_sign_via_test_function(&k, &[-1.0; 6], None).is_err());
    }

    #[test]
    fn perron_root_of_stochastic_and_restricted() {
        let g = Arc::new(Graph::lattice_torus(1, 5).unwrap());
        let k = Kernel::<f64>::simple(g);
        let b = perron_root(&k.transpose_matrix(), 1e-12, 10_000);
        assert!(close(b.upper, 1.0, 1e-12));
        // path of 3 sites with weights 1/2: radius cos(pi/4)
        let r = crate::graph::Region::from_vertices(5, [0, 1, 2]).unwrap();
        let kr = k.restrict(&r).unwrap();
        let b = perron_root(&kr.transpose_matrix(), 1e-12, 100_000);
        assert!(close(b.upper, (std::f64::consts::PI / 4.0).cos(), 1e-9), "{b:?}");
        assert!(b.lower <= b.upper);
    }
}
