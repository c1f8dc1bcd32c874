//! Independent oracles for the integration tests: a dense matrix
//! exponential, the exact generator of a small capped particle system, and
//! the moment equations obtained by applying that generator to monomials.

#![allow(dead_code)]

use std::collections::HashMap;

pub type Dense = Vec<Vec<f64>>;

pub fn identity(n: usize) -> Dense {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let m = b[0].len();
    let mut c = vec![vec![0.0; m]; n];
    for i in 0..n {
        for (k, &aik) in a[i].iter().enumerate() {
            if aik != 0.0 {
                for j in 0..m {
                    c[i][j] += aik * b[k][j];
                }
            }
        }
    }
    c
}

fn norm1(a: &Dense) -> f64 {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j].abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `exp(t A)` by scaling to norm below 1/2, a 30-term Taylor sum and
/// repeated squaring.
pub fn expm(a: &Dense, t: f64) -> Dense {
    let n = a.len();
    let norm = norm1(a) * t.abs();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scale = t / 2f64.powi(squarings as i32);
    let s: Dense = a.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
    let mut sum = identity(n);
    let mut term = identity(n);
    for k in 1..=30 {
        term = matmul(&term, &s);
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v /= k as f64;
            }
        }
        for i in 0..n {
            for j in 0..n {
                sum[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        sum = matmul(&sum, &sum);
    }
    sum
}

pub fn vecmat(v: &[f64], a: &Dense) -> Vec<f64> {
    let mut out = vec![0.0; a[0].len()];
    for (i, &vi) in v.iter().enumerate() {
        for (j, &aij) in a[i].iter().enumerate() {
            out[j] += vi * aij;
        }
    }
    out
}

pub fn matvec(a: &Dense, v: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

/// Capped particle system on a small graph with kernel `p`: a particle at
/// `x` dies at rate `gamma (η(x) - floor)⁺`, and births `x → y` occur at
/// rate `η(x) p(x, y) c(η(y))`. States are all vectors with entries in
/// `floor..=cap`; `c(cap)` must be 0 so the cap is never crossed.
pub struct Ctmc {
    pub states: Vec<Vec<u32>>,
    pub index: HashMap<Vec<u32>, usize>,
    pub q: Dense,
}

pub fn capped_generator(p: &Dense, c: impl Fn(u32) -> f64, gamma: f64, floor: u32, cap: u32) -> Ctmc {
    assert_eq!(c(cap), 0.0, "rate at the cap must vanish");
    let n = p.len();
    let mut states = vec![vec![floor; n]];
    for x in 0..n {
        let mut next = Vec::new();
        for s in &states {
            for v in floor..=cap {
                let mut s2 = s.clone();
                s2[x] = v;
                next.push(s2);
            }
        }
        states = next;
    }
    let index: HashMap<Vec<u32>, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let mut q = vec![vec![0.0; states.len()]; states.len()];
    for (i, s) in states.iter().enumerate() {
        let mut add = |t: Vec<u32>, rate: f64| {
            if rate > 0.0 {
                let j = index[&t];
                q[i][j] += rate;
                q[i][i] -= rate;
            }
        };
        for x in 0..n {
            if s[x] > floor {
                let mut t = s.clone();
                t[x] -= 1;
                add(t, gamma * (s[x] - floor) as f64);
            }
            for y in 0..n {
                let rate = s[x] as f64 * p[x][y] * c(s[y]);
                if rate > 0.0 {
                    let mut t = s.clone();
                    t[y] += 1;
                    add(t, rate);
                }
            }
        }
    }
    Ctmc { states, index, q }
}

/// Monomials of degree at most two in `η(0), …, η(n-1)`: the constant,
/// then `η(i)`, then `η(i) η(j)` for `i ≤ j`.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    pub n: usize,
    pub monos: Vec<(Option<usize>, Option<usize>)>,
}

impl MonomialBasis {
    pub fn new(n: usize) -> Self {
        let mut monos = vec![(None, None)];
        monos.extend((0..n).map(|i| (Some(i), None)));
        for i in 0..n {
            for j in i..n {
                monos.push((Some(i), Some(j)));
            }
        }
        Self { n, monos }
    }

    pub fn len(&self) -> usize {
        self.monos.len()
    }

    pub fn linear(&self, i: usize) -> usize {
        1 + i
    }

    pub fn quadratic(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.monos.iter().position(|&m| m == (Some(i), Some(j))).unwrap()
    }

    pub fn evaluate(&self, eta: &[f64]) -> Vec<f64> {
        self.monos
            .iter()
            .map(|&(a, b)| a.map_or(1.0, |i| eta[i]) * b.map_or(1.0, |j| eta[j]))
            .collect()
    }
}

/// Matrix `A` with `d/dt E[φ(η_t)] = A E[φ(η_t)]` for the monomial basis
/// `φ`, for the branching walk with constant breeding rate `lambda`,
/// immortal floor `floor` and death factor `gamma`. Built by applying the
/// generator to each monomial; every jump rate is affine in `η`.
pub fn moment_generator(p: &Dense, lambda: f64, gamma: f64, floor: u32) -> (MonomialBasis, Dense) {
    let n = p.len();
    let basis = MonomialBasis::new(n);
    let k = floor as f64;
    // (jump vector, affine rate as [const, coef_0, …, coef_{n-1}])
    let mut jumps: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for x in 0..n {
        let mut e = vec![0.0; n];
        e[x] = -1.0;
        let mut r = vec![0.0; n + 1];
        r[0] = -gamma * k;
        r[1 + x] = gamma;
        jumps.push((e, r));
        for y in 0..n {
            if p[x][y] > 0.0 {
                let mut e = vec![0.0; n];
                e[y] = 1.0;
                let mut r = vec![0.0; n + 1];
                r[1 + x] = lambda * p[x][y];
                jumps.push((e, r));
            }
        }
    }
    let mut a = vec![vec![0.0; basis.len()]; basis.len()];
    for (row, &(ma, mb)) in basis.monos.iter().enumerate() {
        for (e, r) in &jumps {
            // increment f(η + e) - f(η) as an affine polynomial [const, lin…]
            let mut inc = vec![0.0; n + 1];
            match (ma, mb) {
                (None, None) => {}
                (Some(i), None) => inc[0] += e[i],
                (Some(i), Some(j)) => {
                    inc[0] += e[i] * e[j];
                    inc[1 + j] += e[i];
                    inc[1 + i] += e[j];
                }
                (None, Some(_)) => unreachable!(),
            }
            // rate × increment
            a[row][0] += r[0] * inc[0];
            for i in 0..n {
                a[row][basis.linear(i)] += r[0] * inc[1 + i] + r[1 + i] * inc[0];
                for j in 0..n {
                    let q = basis.quadratic(i, j);
                    a[row][q] += r[1 + i] * inc[1 + j];
                }
            }
        }
    }
    (basis, a)
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
