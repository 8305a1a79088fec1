//! Empirical measures on the real line.
//!
//! An [`EmpiricalMeasure`] is a uniform-weight atomic measure stored as a
//! sorted sample list. All measure functionals used by the drift and cost
//! machinery evaluate against this representation: alpha-moments, the
//! alpha-norm, order-p Wasserstein distances by quantile coupling, and
//! relative entropy between finite distributions.

use crate::error::{CoreError, Result};

/// Uniform-weight empirical measure: sorted finite samples, each with mass 1/n.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    samples: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Build a measure from raw values. Sorts a copy; rejects empty or
    /// non-finite input.
    pub fn from_samples(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(CoreError::EmptyInput);
        }
        for &v in values {
            if !v.is_finite() {
                return Err(CoreError::NonFiniteValue(v));
            }
        }
        let mut samples = values.to_vec();
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { samples })
    }

    /// Point mass at `c`.
    pub fn dirac(c: f64) -> Result<Self> {
        Self::from_samples(&[c])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor forbids empty measures
    }

    /// Sorted sample slice.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Population variance (1/n normalisation).
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / self.samples.len() as f64
    }

    /// Right-continuous quantile function Q(u) = inf { x : F(x) >= u }.
    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.samples.len();
        if u <= 0.0 {
            return self.samples[0];
        }
        let idx = (u * n as f64).ceil() as usize;
        self.samples[idx.clamp(1, n) - 1]
    }

    /// Compress to `q` uniform-mass atoms placed at the block means of the
    /// quantile blocks. Mean-preserving; d_1 error is bounded by the average
    /// within-block spread. Returns a clone when q >= n.
    pub fn compress(&self, q: usize) -> Self {
        let n = self.samples.len();
        if q == 0 || q >= n {
            return self.clone();
        }
        let mut atoms = Vec::with_capacity(q);
        for b in 0..q {
            let lo = b * n / q;
            let hi = (b + 1) * n / q;
            let block = &self.samples[lo..hi.max(lo + 1)];
            atoms.push(block.iter().sum::<f64>() / block.len() as f64);
        }
        Self { samples: atoms }
    }
}

/// alpha-th absolute moment: (1/n) sum |y_i|^alpha.
pub fn alpha_moment(m: &EmpiricalMeasure, alpha: f64) -> Result<f64> {
    if alpha < 1.0 {
        return Err(CoreError::AlphaOutOfRange(alpha));
    }
    let pow = AlphaPow::new(alpha);
    Ok(m.samples().iter().map(|&y| pow.abs_pow(y)).sum::<f64>() / m.len() as f64)
}

/// alpha-norm of the measure: alpha_moment^(1/alpha).
pub fn alpha_norm(m: &EmpiricalMeasure, alpha: f64) -> Result<f64> {
    let mom = alpha_moment(m, alpha)?;
    Ok(AlphaPow::new(alpha).root(mom))
}

/// |v|^alpha and v^(1/alpha) with fast paths for alpha = 1 and 2. These sit
/// in the innermost drift loops, where powf dominates the runtime otherwise.
#[derive(Debug, Clone, Copy)]
pub struct AlphaPow {
    alpha: f64,
    kind: AlphaKind,
}

#[derive(Debug, Clone, Copy)]
enum AlphaKind {
    One,
    Two,
    General,
}

impl AlphaPow {
    pub fn new(alpha: f64) -> Self {
        let kind = if alpha == 1.0 {
            AlphaKind::One
        } else if alpha == 2.0 {
            AlphaKind::Two
        } else {
            AlphaKind::General
        };
        Self { alpha, kind }
    }

    #[inline]
    pub fn abs_pow(&self, v: f64) -> f64 {
        match self.kind {
            AlphaKind::One => v.abs(),
            AlphaKind::Two => v * v,
            AlphaKind::General => v.abs().powf(self.alpha),
        }
    }

    /// v^(1/alpha) for v >= 0.
    #[inline]
    pub fn root(&self, v: f64) -> f64 {
        match self.kind {
            AlphaKind::One => v,
            AlphaKind::Two => v.sqrt(),
            AlphaKind::General => v.powf(1.0 / self.alpha),
        }
    }
}

/// Order-p Wasserstein distance via quantile coupling:
/// d_p^p = \int_0^1 |Q_1(u) - Q_2(u)|^p du, evaluated exactly on the merged
/// quantile breakpoints. For equal sample counts this is the sorted-matching
/// average.
pub fn wasserstein(m1: &EmpiricalMeasure, m2: &EmpiricalMeasure, order: f64) -> Result<f64> {
    if order < 1.0 {
        return Err(CoreError::OrderOutOfRange(order));
    }
    let a = m1.samples();
    let b = m2.samples();
    let (na, nb) = (a.len(), b.len());
    let pow = AlphaPow::new(order);

    if na == nb {
        let total: f64 = a.iter().zip(b.iter()).map(|(&x, &y)| pow.abs_pow(x - y)).sum();
        return Ok(pow.root(total / na as f64));
    }

    // Unequal sizes: walk the merged breakpoints u = i/na and u = j/nb.
    let mut total = 0.0;
    let mut u = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < na && j < nb {
        let ua = (i + 1) as f64 / na as f64;
        let ub = (j + 1) as f64 / nb as f64;
        let next = ua.min(ub);
        total += pow.abs_pow(a[i] - b[j]) * (next - u);
        u = next;
        if ua <= next + 1e-15 {
            i += 1;
        }
        if ub <= next + 1e-15 {
            j += 1;
        }
    }
    Ok(pow.root(total.max(0.0)))
}

/// Ground-truth discrete optimal transport for small supports: replicate each
/// side to lcm(n1, n2) unit atoms and solve the assignment problem exactly.
/// Independent of the quantile-coupling route above.
pub fn wasserstein_lp_oracle(
    m1: &EmpiricalMeasure,
    m2: &EmpiricalMeasure,
    order: f64,
) -> Result<f64> {
    if order < 1.0 {
        return Err(CoreError::OrderOutOfRange(order));
    }
    let (n1, n2) = (m1.len(), m2.len());
    if n1 > 8 {
        return Err(CoreError::SupportTooLarge(n1));
    }
    if n2 > 8 {
        return Err(CoreError::SupportTooLarge(n2));
    }
    let l = lcm(n1, n2);
    let mut left = Vec::with_capacity(l);
    let mut right = Vec::with_capacity(l);
    for &x in m1.samples() {
        for _ in 0..l / n1 {
            left.push(x);
        }
    }
    for &y in m2.samples() {
        for _ in 0..l / n2 {
            right.push(y);
        }
    }
    let pow = AlphaPow::new(order);
    let cost: Vec<Vec<f64>> = left
        .iter()
        .map(|&x| right.iter().map(|&y| pow.abs_pow(x - y)).collect())
        .collect();
    let min_total = hungarian_min_cost(&cost);
    Ok(pow.root((min_total / l as f64).max(0.0)))
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(mut a: usize, mut b: usize) -> usize {
        while b != 0 {
            let t = a % b;
            a = b;
            b = t;
        }
        a
    }
    a / gcd(a, b) * b
}

/// Exact minimum-cost perfect assignment (Kuhn-Munkres with potentials, O(n^3)).
fn hungarian_min_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut assignment = vec![0usize; n + 1]; // assignment[col] = row
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        assignment[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = assignment[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[assignment[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assignment[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assignment[j0] = assignment[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[assignment[j] - 1][j - 1]).sum()
}

/// Finite distribution over labelled outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    labels: Vec<usize>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(labels: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(CoreError::EmptyInput);
        }
        if labels.len() != probs.len() {
            return Err(CoreError::MismatchedSupport);
        }
        let mut sum = 0.0;
        for &p in &probs {
            if !p.is_finite() {
                return Err(CoreError::NonFiniteValue(p));
            }
            if p < 0.0 {
                return Err(CoreError::InvalidParams(format!("negative probability {p}")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(CoreError::InvalidParams(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self { labels, probs })
    }

    /// Distribution on labels 0..k-1.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let labels = (0..probs.len()).collect();
        Self::new(labels, probs)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Relative entropy H(mu | nu) = sum mu_i log(mu_i / nu_i), with the
/// conventions 0 log(0/q) = 0 and +infinity when mu charges a nu-null point.
pub fn relative_entropy(mu: &DiscreteDistribution, nu: &DiscreteDistribution) -> Result<f64> {
    if mu.labels() != nu.labels() {
        return Err(CoreError::MismatchedSupport);
    }
    let mut h = 0.0;
    for (&p, &q) in mu.probs().iter().zip(nu.probs()) {
        if p > 0.0 {
            if q == 0.0 {
                return Ok(f64::INFINITY);
            }
            h += p * (p / q).ln();
        }
    }
    Ok(h)
}
