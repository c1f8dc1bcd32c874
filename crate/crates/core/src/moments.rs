//! First and second moments of the branching random walk with immortal
//! particles (constant profile `c ≡ λ`, floor `k`, death factor `γ`) on a
//! finite region `Λ`.
//!
//! With `ξ = η - k𝟏` and `s(x) = Σ_z p_Λ(z, x)`:
//!
//! ```text
//! ṁ(x)      = λ (P_Λᵀ m)(x) - γ m(x) + kλ s(x)
//! Ċ(x, y)   = -2γ C(x, y) + λ [(P_Λᵀ C)(x, y) + (C P_Λ)(x, y)] + F(x, y)
//! F(x, y)   = λk [m(x) s(y) + m(y) s(x)]
//!           + δ_xy [λ (k s(x) + (P_Λᵀ m)(x)) + γ m(x)]
//! ```
//!
//! and `E[η(x)] = m(x) + k`, `E[η(x)²] = C(x, x) + 2k m(x) + k²`. All vectors
//! here are indexed by the position of a vertex in [`MomentSystem::vertices`].

use crate::error::{Error, Result};
use crate::graph::{Kernel, Region};
use crate::linalg::{condition_number, DenseMatrix, SparseMatrix};
use crate::scalar::Scalar;
use crate::spectral::perron_root;

/// Default bound on `|Λ|` for pair systems.
pub const DEFAULT_PAIR_BUDGET: usize = 200 * 200;

const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct MomentSystem<T> {
    vertices: Vec<usize>,
    /// `p_Λ` in local coordinates.
    p: SparseMatrix<T>,
    pt: SparseMatrix<T>,
    col_sums: Vec<T>,
    lambda: T,
    gamma: T,
    floor: u32,
    theta_hat: T,
    pair_budget: usize,
}

impl<T: Scalar> MomentSystem<T> {
    pub fn new(kernel: &Kernel<T>, region: &Region, lambda: T, gamma: T, floor: u32) -> Result<Self> {
        if region.universe() != kernel.len() {
            return Err(Error::Mismatch("region and kernel sizes differ".into()));
        }
        if region.is_empty() {
            return Err(Error::EmptyRegion);
        }
        if !lambda.is_finite() || !(lambda > T::zero()) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        if !gamma.is_finite() || gamma < T::zero() {
            return Err(Error::InvalidParameter(format!("gamma must be nonnegative, got {gamma}")));
        }
        let vertices: Vec<usize> = region.iter().collect();
        let mut local = vec![usize::MAX; kernel.len()];
        for (i, &v) in vertices.iter().enumerate() {
            local[v] = i;
        }
        let rows = vertices
            .iter()
            .map(|&x| {
                kernel
                    .row(x)
                    .iter()
                    .filter(|&&(y, _)| region.contains(y))
                    .map(|&(y, w)| (local[y], w))
                    .collect()
            })
            .collect();
        let p = SparseMatrix::from_rows(rows);
        let pt = p.transpose();
        let col_sums = p.column_sums();
        let theta_hat = perron_root(&pt, T::lit(1e-12), 100_000).upper;
        Ok(Self {
            vertices,
            p,
            pt,
            col_sums,
            lambda,
            gamma,
            floor,
            theta_hat,
            pair_budget: DEFAULT_PAIR_BUDGET,
        })
    }

    pub fn with_pair_budget(mut self, entries: usize) -> Self {
        self.pair_budget = entries;
        self
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn floor(&self) -> u32 {
        self.floor
    }

    /// `p_Λ` in local coordinates.
    pub fn kernel_matrix(&self) -> &SparseMatrix<T> {
        &self.p
    }

    /// Upper bound on the spectral radius of `P_Λᵀ`.
    pub fn theta_hat(&self) -> T {
        self.theta_hat
    }

    pub fn stable(&self) -> bool {
        self.gamma > self.lambda * self.theta_hat * (T::one() + T::lit(1e-9))
    }

    /// `f(x) = kλ Σ_y p_Λ(y, x)`.
    pub fn forcing(&self) -> Vec<T> {
        let kl = T::from_count(self.floor as u64) * self.lambda;
        self.col_sums.iter().map(|&s| kl * s).collect()
    }

    /// Picks the entries of a full-graph vector that belong to `Λ`.
    pub fn localize<V: Copy>(&self, full: &[V]) -> Vec<V> {
        self.vertices.iter().map(|&x| full[x]).collect()
    }

    /// `ξ₀ = η₀ - k𝟏` on `Λ` from a full-graph occupancy.
    pub fn xi_from_occupancy(&self, eta: &[u32]) -> Result<Vec<T>> {
        self.vertices
            .iter()
            .map(|&x| {
                eta[x]
                    .checked_sub(self.floor)
                    .map(|v| T::from_count(v as u64))
                    .ok_or(Error::FloorViolation { site: x, floor: self.floor })
            })
            .collect()
    }

    fn first_rhs(&self, m: &[T], out: &mut [T]) {
        let ptm = self.pt.mul_vec(m);
        let kl = T::from_count(self.floor as u64) * self.lambda;
        for x in 0..m.len() {
            out[x] = self.lambda * ptm[x] - self.gamma * m[x] + kl * self.col_sums[x];
        }
    }

    // Joint right-hand side for [m; C] with C stored row-major.
    fn pair_rhs(&self, y: &[T], out: &mut [T]) {
        let n = self.len();
        let (m, c) = y.split_at(n);
        let (dm, dc) = out.split_at_mut(n);
        self.first_rhs(m, dm);
        let ptm = self.pt.mul_vec(m);
        let lambda = self.lambda;
        let k = T::from_count(self.floor as u64);
        let two_gamma = self.gamma + self.gamma;
        for x in 0..n {
            for yy in 0..n {
                let mut acc = -two_gamma * c[x * n + yy];
                let mut flow = T::zero();
                // (Pᵀ C)(x, y) = Σ_z p(z, x) C(z, y)
                for &(z, w) in self.pt.row(x) {
                    flow += w * c[z * n + yy];
                }
                // (C P)(x, y) = Σ_z C(x, z) p(z, y)
                for &(z, w) in self.pt.row(yy) {
                    flow += w * c[x * n + z];
                }
                acc += lambda * flow;
                acc += lambda * k * (m[x] * self.col_sums[yy] + m[yy] * self.col_sums[x]);
                if x == yy {
                    acc += lambda * (k * self.col_sums[x] + ptm[x]) + self.gamma * m[x];
                }
                dc[x * n + yy] = acc;
            }
        }
    }

    fn step_bound(&self) -> T {
        T::lit(0.1) / (self.lambda + self.gamma)
    }

    pub fn first_moment(&self, xi0: &[T], t_grid: &[T]) -> Result<MomentPath<T>> {
        check_vec(xi0, self.len(), "xi0")?;
        if xi0.iter().any(|&v| v < T::zero()) {
            return Err(Error::InvalidParameter("xi0 must be nonnegative".into()));
        }
        let values = integrate(|y, out| self.first_rhs(y, out), xi0, t_grid, self.step_bound())?;
        Ok(MomentPath {
            times: t_grid.to_vec(),
            values,
        })
    }

    pub fn second_moment(&self, xi0: &[T], t_grid: &[T]) -> Result<SecondMomentPath<T>> {
        let n = self.len();
        self.check_budget()?;
        check_vec(xi0, n, "xi0")?;
        if xi0.iter().any(|&v| v < T::zero()) {
            return Err(Error::InvalidParameter("xi0 must be nonnegative".into()));
        }
        let mut y0 = xi0.to_vec();
        for x in 0..n {
            for y in 0..n {
                y0.push(xi0[x] * xi0[y]);
            }
        }
        let states = integrate(|y, out| self.pair_rhs(y, out), &y0, t_grid, self.step_bound())?;
        let (m, c) = states
            .into_iter()
            .map(|mut s| {
                let c = s.split_off(n);
                (s, c)
            })
            .unzip();
        Ok(SecondMomentPath {
            n,
            times: t_grid.to_vec(),
            m,
            c,
        })
    }

    fn check_budget(&self) -> Result<()> {
        let needed = self.len() * self.len();
        if needed > self.pair_budget {
            return Err(Error::Budget {
                needed,
                budget: self.pair_budget,
            });
        }
        Ok(())
    }

    fn check_stable(&self) -> Result<()> {
        if !self.stable() {
            return Err(Error::Unstable {
                gamma: self.gamma.as_f64(),
                bound: (self.lambda * self.theta_hat).as_f64(),
            });
        }
        Ok(())
    }

    /// `m∞ = (γI - λP_Λᵀ)⁻¹ f` and `U₁ = max m∞ + k`.
    pub fn steady_first_moment(&self) -> Result<FirstSteadyState<T>> {
        self.check_stable()?;
        let n = self.len();
        let mut a = DenseMatrix::zeros(n, n);
        for x in 0..n {
            a[(x, x)] = self.gamma;
            for &(z, w) in self.pt.row(x) {
                a[(x, z)] -= self.lambda * w;
            }
        }
        let lu = a.lu()?;
        let cond = condition_number(&a, &lu);
        if !(cond.as_f64() <= CONDITION_LIMIT) {
            return Err(Error::IllConditioned(cond.as_f64()));
        }
        let m = lu.solve(&self.forcing());
        let k = T::from_count(self.floor as u64);
        let u1 = m.iter().copied().fold(T::zero(), T::max) + k;
        Ok(FirstSteadyState { m, u1, condition: cond })
    }

    /// Both steady states. The pair equation `K C + C Kᵀ = F(m∞)` with
    /// `K = γI - λP_Λᵀ` is solved by the convergent splitting
    /// `2γ C = F + λ (P_ΛᵀC + C P_Λ)`.
    pub fn steady_state(&self) -> Result<SteadyState<T>> {
        let first = self.steady_first_moment()?;
        self.check_budget()?;
        let n = self.len();
        let m = &first.m;
        // F(m∞) equals the pair right-hand side at C = 0.
        let mut y = m.clone();
        y.extend(std::iter::repeat_n(T::zero(), n * n));
        let mut rhs = vec![T::zero(); n + n * n];
        self.pair_rhs(&y, &mut rhs);
        let forcing: Vec<T> = rhs[n..].to_vec();
        let two_gamma = self.gamma + self.gamma;
        let contraction = (self.lambda * self.theta_hat / self.gamma).as_f64();
        let tol = T::epsilon() * T::lit(16.0);
        let max_iter = ((40.0 / (1.0 - contraction).max(1e-6)) as usize).clamp(1000, 2_000_000);
        let mut c = vec![T::zero(); n * n];
        let mut next = vec![T::zero(); n * n];
        let mut converged = false;
        for _ in 0..max_iter {
            let mut diff = T::zero();
            let mut scale = T::zero();
            for x in 0..n {
                for yy in 0..n {
                    let mut flow = T::zero();
                    for &(z, w) in self.pt.row(x) {
                        flow += w * c[z * n + yy];
                    }
                    for &(z, w) in self.pt.row(yy) {
                        flow += w * c[x * n + z];
                    }
                    let v = (forcing[x * n + yy] + self.lambda * flow) / two_gamma;
                    diff = diff.max((v - c[x * n + yy]).abs());
                    scale = scale.max(v.abs());
                    next[x * n + yy] = v;
                }
            }
            std::mem::swap(&mut c, &mut next);
            if diff <= tol * (T::one() + scale) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence("pair steady state".into()));
        }
        let k = T::from_count(self.floor as u64);
        let u2 = (0..n)
            .map(|x| c[x * n + x] + (k + k) * m[x] + k * k)
            .fold(T::zero(), T::max);
        Ok(SteadyState {
            m: first.m,
            c,
            u1: first.u1,
            u2,
            condition: first.condition,
        })
    }
}

fn check_vec<T: Scalar>(v: &[T], n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::Mismatch(format!("{what} has length {} but the region has {n} sites", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what.into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentPath<T> {
    pub times: Vec<T>,
    /// `m(t, ·)` for each grid time.
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> MomentPath<T> {
    /// `E[η_t] = m(t, ·) + k`.
    pub fn occupancy_means(&self, floor: u32) -> Vec<Vec<T>> {
        let k = T::from_count(floor as u64);
        self.values.iter().map(|v| v.iter().map(|&m| m + k).collect()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondMomentPath<T> {
    pub n: usize,
    pub times: Vec<T>,
    pub m: Vec<Vec<T>>,
    /// `C(t, ·, ·)` row-major.
    pub c: Vec<Vec<T>>,
}

impl<T: Scalar> SecondMomentPath<T> {
    pub fn at(&self, i: usize, x: usize, y: usize) -> T {
        self.c[i][x * self.n + y]
    }

    /// `Var[ξ_t(x)] = C(t, x, x) - m(t, x)²`.
    pub fn variance(&self, i: usize, x: usize) -> T {
        self.at(i, x, x) - self.m[i][x] * self.m[i][x]
    }

    pub fn max_asymmetry(&self) -> T {
        let n = self.n;
        let mut worst = T::zero();
        for c in &self.c {
            for x in 0..n {
                for y in 0..x {
                    worst = worst.max((c[x * n + y] - c[y * n + x]).abs());
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstSteadyState<T> {
    pub m: Vec<T>,
    /// `max_x m∞(x) + k`.
    pub u1: T,
    pub condition: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState<T> {
    pub m: Vec<T>,
    pub c: Vec<T>,
    pub u1: T,
    /// `max_x C∞(x, x) + 2k m∞(x) + k²`.
    pub u2: T,
    pub condition: T,
}

/// Adaptive classical RK4 with step-doubling error control for the
/// autonomous system `ẏ = rhs(y)`, reporting the state at each grid time.
pub fn integrate<T, F>(rhs: F, y0: &[T], t_grid: &[T], h_max: T) -> Result<Vec<Vec<T>>>
where
    T: Scalar,
    F: Fn(&[T], &mut [T]),
{
    let mut prev = T::zero();
    for &t in t_grid {
        if !t.is_finite() || t < prev {
            return Err(Error::InvalidParameter("time grid must be finite, nonnegative and nondecreasing".into()));
        }
        prev = t;
    }
    let dim = y0.len();
    let rtol = T::lit(1e-11).max(T::epsilon() * T::lit(100.0));
    let atol = rtol * T::lit(1e-2);
    let h_min = h_max * T::lit(1e-9);
    let mut y = y0.to_vec();
    let mut t = T::zero();
    let mut h = h_max;
    let mut out = Vec::with_capacity(t_grid.len());
    let mut scratch = Rk4Scratch::new(dim);
    let mut full = vec![T::zero(); dim];
    let mut half = vec![T::zero(); dim];
    let mut mid = vec![T::zero(); dim];
    for &target in t_grid {
        while t < target {
            let h_try = h.min(target - t);
            rk4_step(&rhs, &y, h_try, &mut full, &mut scratch);
            let hh = h_try / T::lit(2.0);
            rk4_step(&rhs, &y, hh, &mut mid, &mut scratch);
            rk4_step(&rhs, &mid, hh, &mut half, &mut scratch);
            let mut err = T::zero();
            for i in 0..dim {
                let sc = atol + rtol * half[i].abs().max(y[i].abs());
                err = err.max((half[i] - full[i]).abs() / sc);
            }
            if !err.is_finite() {
                return Err(Error::NonFinite("integrator state".into()));
            }
            if err <= T::one() || h_try <= h_min {
                // local extrapolation of the two estimates
                for i in 0..dim {
                    y[i] = half[i] + (half[i] - full[i]) / T::lit(15.0);
                }
                t = if h_try == target - t { target } else { t + h_try };
                let grow = if err > T::zero() {
                    T::lit(0.9) * err.powf(T::lit(-0.2))
                } else {
                    T::lit(4.0)
                };
                if h_try == h {
                    h = (h * grow.min(T::lit(4.0))).min(h_max);
                }
            } else {
                h = h_try * (T::lit(0.9) * err.powf(T::lit(-0.2))).max(T::lit(0.1));
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

struct Rk4Scratch<T> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
}

impl<T: Scalar> Rk4Scratch<T> {
    fn new(dim: usize) -> Self {
        Self {
            k1: vec![T::zero(); dim],
            k2: vec![T::zero(); dim],
            k3: vec![T::zero(); dim],
            k4: vec![T::zero(); dim],
            tmp: vec![T::zero(); dim],
        }
    }
}

fn rk4_step<T: Scalar, F: Fn(&[T], &mut [T])>(rhs: &F, y: &[T], h: T, out: &mut [T], s: &mut Rk4Scratch<T>) {
    let half = h / T::lit(2.0);
    rhs(y, &mut s.k1);
    for i in 0..y.len() {
        s.tmp[i] = y[i] + half * s.k1[i];
    }
    rhs(&s.tmp, &mut s.k2);
    for i in 0..y.len() {
        s.tmp[i] = y[i] + half * s.k2[i];
    }
    rhs(&s.tmp, &mut s.k3);
    for i in 0..y.len() {
        s.tmp[i] = y[i] + h * s.k3[i];
    }
    rhs(&s.tmp, &mut s.k4);
    let sixth = h / T::lit(6.0);
    for i in 0..y.len() {
        out[i] = y[i] + sixth * (s.k1[i] + (s.k2[i] + s.k3[i]) * T::lit(2.0) + s.k4[i]);
    }
}

/// `Σ_n e^{-s} sⁿ/n! Qⁿ v`, truncated once the remaining Poisson mass drops
/// below `1e-12` or at `n = s + 12√s + 20`.
pub fn poisson_apply<T: Scalar>(q: &SparseMatrix<T>, s: T, v: &[T]) -> Vec<T> {
    let s64 = s.as_f64();
    let cap = (s64 + 12.0 * s64.sqrt() + 20.0).ceil() as usize;
    let log_s = s64.ln();
    let mut log_fact = 0.0f64;
    let mut mass = 0.0f64;
    let mut power = v.to_vec();
    let mut acc = vec![T::zero(); v.len()];
    for n in 0..=cap {
        if n > 0 {
            power = q.mul_vec(&power);
            log_fact += (n as f64).ln();
        }
        let log_w = if s64 == 0.0 {
            if n == 0 { 0.0 } else { f64::NEG_INFINITY }
        } else {
            -s64 + n as f64 * log_s - log_fact
        };
        let w = log_w.exp();
        mass += w;
        let wt = T::lit(w);
        for (a, &p) in acc.iter_mut().zip(&power) {
            *a += wt * p;
        }
        if 1.0 - mass < 1e-12 && (n as f64) >= s64 {
            break;
        }
    }
    acc
}

const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Evaluates
/// `u(t) = e^{βt} q_t φ + ∫₀ᵗ e^{β(t-s)} q_{t-s} f(s) ds`,
/// where `q_t = Σ_n e^{-λt}(λt)ⁿ/n! Qⁿ`, by Poisson-series truncation and
/// composite 8-point Gauss–Legendre quadrature. `q` acts on the right:
/// `(q_t φ)(x) = Σ_y q_t(x, y) φ(y)`.
pub fn explicit_solution<T, F>(q: &SparseMatrix<T>, lambda: T, beta: T, phi: &[T], f: F, t: T) -> Result<Vec<T>>
where
    T: Scalar,
    F: Fn(T) -> Vec<T>,
{
    if !(t >= T::zero()) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("t must be finite and nonnegative, got {t}")));
    }
    check_vec(phi, q.dim(), "phi")?;
    let growth = (beta * t).exp();
    let mut u: Vec<T> = poisson_apply(q, lambda * t, phi).into_iter().map(|v| v * growth).collect();
    if t == T::zero() {
        return Ok(u);
    }
    let panels = ((2.0 * (lambda.as_f64() + beta.as_f64().abs()) * t.as_f64()).ceil() as usize).max(4);
    let width = t / T::from_count(panels as u64);
    let half = width / T::lit(2.0);
    for p in 0..panels {
        let centre = width * T::from_count(p as u64) + half;
        for (&node, &weight) in GL8_NODES.iter().zip(&GL8_WEIGHTS) {
            for sign in [-1.0, 1.0] {
                let s = centre + half * T::lit(sign * node);
                let fs = f(s);
                check_vec(&fs, q.dim(), "forcing")?;
                let lag = t - s;
                let scale = (beta * lag).exp() * half * T::lit(weight);
                for (a, v) in u.iter_mut().zip(poisson_apply(q, lambda * lag, &fs)) {
                    *a += scale * v;
                }
            }
        }
    }
    Ok(u)
}

/// `‖(P_Λᵀ)ⁿ 𝟏‖_∞` for `n = 1..=n_max`: the largest column sum of `P_Λⁿ`.
pub fn transpose_power_norms<T: Scalar>(p: &SparseMatrix<T>, n_max: usize) -> Vec<T> {
    let pt = p.transpose();
    let mut v = vec![T::one(); p.dim()];
    (0..n_max)
        .map(|_| {
            v = pt.mul_vec(&v);
            v.iter().copied().fold(T::zero(), T::max)
        })
        .collect()
}

/// `‖Bⁿ 𝟏‖_∞` for `n = 1..=n_max`, where `B` is the pair operator
/// `(B v)(x, y) = ½ Σ_{x₁} p(x₁, x) v(x₁, y) + ½ Σ_{y₁} p(y₁, y) v(x, y₁)`.
pub fn pair_power_norms<T: Scalar>(p: &SparseMatrix<T>, n_max: usize) -> Vec<T> {
    let n = p.dim();
    let pt = p.transpose();
    let half = T::lit(0.5);
    let mut v = vec![T::one(); n * n];
    let mut next = vec![T::zero(); n * n];
    (0..n_max)
        .map(|_| {
            for x in 0..n {
                for y in 0..n {
                    let mut acc = T::zero();
                    for &(z, w) in pt.row(x) {
                        acc += w * v[z * n + y];
                    }
                    for &(z, w) in pt.row(y) {
                        acc += w * v[x * n + z];
                    }
                    next[x * n + y] = half * acc;
                }
            }
            std::mem::swap(&mut v, &mut next);
            v.iter().copied().fold(T::zero(), T::max)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use std::sync::Arc;

    fn two_site() -> Kernel<f64> {
        Kernel::simple(Arc::new(Graph::lattice_torus(1, 2).unwrap()))
    }

    fn system(lambda: f64, gamma: f64, k: u32) -> MomentSystem<f64> {
        let k2 = two_site();
        MomentSystem::new(&k2, &Region::all(2), lambda, gamma, k).unwrap()
    }

    #[test]
    fn zero_start_zero_floor_stays_zero() {
        let s = system(0.5, 1.0, 0);
        let path = s.first_moment(&[0.0, 0.0], &[0.0, 1.0, 5.0]).unwrap();
        assert!(path.values.iter().flatten().all(|&v| v == 0.0));
        let st = s.steady_state().unwrap();
        assert!(st.m.iter().chain(&st.c).all(|&v| v == 0.0));
    }

    #[test]
    fn two_site_steady_state() {
        let s = system(0.5, 1.0, 1);
        assert!(s.stable());
        let st = s.steady_first_moment().unwrap();
        for &v in &st.m {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!((st.u1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn transient_reaches_steady_state() {
        let s = system(0.5, 1.0, 1);
        let st = s.steady_state().unwrap();
        let path = s.second_moment(&[2.0, 0.0], &[50.0]).unwrap();
        for x in 0..2 {
            assert!((path.m[0][x] - st.m[x]).abs() < 1e-8);
        }
        for (a, b) in path.c[0].iter().zip(&st.c) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn brw_total_mass_on_torus() {
        let k = Kernel::<f64>::simple(Arc::new(Graph::lattice_torus(1, 9).unwrap()));
        let s = MomentSystem::new(&k, &Region::all(9), 1.7, 1.0, 0).unwrap();
        let mut xi = vec![0.0; 9];
        xi[0] = 3.0;
        xi[4] = 1.0;
        let path = s.first_moment(&xi, &[0.5, 2.0, 4.0]).unwrap();
        for (t, m) in path.times.iter().zip(&path.values) {
            let total: f64 = m.iter().sum();
            let exact = 4.0 * (0.7 * t).exp();
            assert!((total - exact).abs() < 1e-9 * exact);
        }
    }

    #[test]
    fn unstable_refused() {
        // θ = 1 on the two-site torus, so λ = γ sits on the boundary
        let s = system(1.0, 1.0, 1);
        assert!(!s.stable());
        assert!(matches!(s.steady_state(), Err(Error::Unstable { .. })));
        assert!(matches!(system(2.0, 1.0, 0).steady_first_moment(), Err(Error::Unstable { .. })));
    }

    #[test]
    fn budget_enforced() {
        let s = system(0.5, 1.0, 1).with_pair_budget(3);
        assert!(matches!(s.second_moment(&[0.0, 0.0], &[1.0]), Err(Error::Budget { needed: 4, budget: 3 })));
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = system(0.5, 1.0, 1);
        assert!(matches!(s.first_moment(&[f64::NAN, 0.0], &[1.0]), Err(Error::NonFinite(_))));
        assert!(s.first_moment(&[0.0], &[1.0]).is_err());
        assert!(s.first_moment(&[0.0, 0.0], &[2.0, 1.0]).is_err());
        let k = two_site();
        assert!(MomentSystem::new(&k, &Region::all(2), 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn explicit_solution_on_doubly_stochastic_kernel() {
        let k = Kernel::<f64>::simple(Arc::new(Graph::lattice_torus(1, 5).unwrap()));
        let q = k.transpose_matrix();
        let u = explicit_solution(&q, 1.5, -0.3, &[1.0; 5], |_| vec![0.0; 5], 2.0).unwrap();
        for v in u {
            assert!((v - (-0.6f64).exp()).abs() < 1e-12);
        }
        assert!(explicit_solution(&q, 1.5, -0.3, &[1.0; 5], |_| vec![0.0; 5], -1.0).is_err());
    }

    #[test]
    fn explicit_solution_matches_integrator() {
        let s = system(0.5, 1.0, 2);
        let f = s.forcing();
        let q = s.kernel_matrix().transpose();
        let phi = [3.0, 0.0];
        let u = explicit_solution(&q, 0.5, -0.5, &phi, |_| f.clone(), 3.0).unwrap();
        let m = s.first_moment(&phi, &[3.0]).unwrap();
        for x in 0..2 {
            assert!((u[x] - m.values[0][x]).abs() < 1e-9);
        }
    }

    #[test]
    fn poisson_series_sums_to_one() {
        let p = SparseMatrix::from_rows(vec![vec![(0, 1.0f64)]]);
        for s in [0.0, 0.1, 5.0, 300.0] {
            let v = poisson_apply(&p, s, &[1.0]);
            assert!((v[0] - 1.0).abs() < 1e-10, "s = {s}: {}", v[0]);
        }
    }

    #[test]
    fn pair_norms_on_stochastic_kernel_are_one() {
        let k = Kernel::<f64>::simple(Arc::new(Graph::lattice_torus(1, 6).unwrap()));
        for v in pair_power_norms(k.matrix(), 5).into_iter().chain(transpose_power_norms(k.matrix(), 5)) {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn f32_first_moment() {
        let k = Kernel::<f32>::simple(Arc::new(Graph::lattice_torus(1, 2).unwrap()));
        let s = MomentSystem::new(&k, &Region::all(2), 0.5f32, 1.0, 1).unwrap();
        let path = s.first_moment(&[0.0, 0.0], &[30.0]).unwrap();
        assert!((path.values[0][0] - 1.0).abs() < 1e-4);
    }
}
