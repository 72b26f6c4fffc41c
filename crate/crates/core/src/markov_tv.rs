//! Total variation distance and mixing times of small discrete chains.
//!
//! Ground truth for the mixing machinery: the diffusion chain itself is
//! continuous and its TV distance intractable, so the radius criterion in
//! [`crate::mixing`] is a surrogate. Here everything is exact.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

const NORM_TOL: f64 = 1e-12;
/// Largest support accepted by [`tv_distance_bruteforce`].
pub const BRUTE_FORCE_MAX: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("distribution needs at least one state"));
        }
        if probs.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::invalid("probabilities must be finite and nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Point mass on `state`.
    pub fn delta(n: usize, state: usize) -> Result<Self> {
        if state >= n {
            return Err(Error::invalid(format!("state {state} outside 0..{n}")));
        }
        let mut probs = vec![0.0; n];
        probs[state] = 1.0;
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("distribution needs at least one state"));
        }
        Ok(Self { probs: vec![1.0 / n as f64; n] })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// `½ Σ |μ(x) − ν(x)|`
pub fn tv_distance(mu: &DiscreteDistribution, nu: &DiscreteDistribution) -> Result<f64> {
    check_dim(mu.len(), nu.len())?;
    Ok(half_l1(mu.probs(), nu.probs()))
}

fn half_l1(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// `max_A |μ(A) − ν(A)|` over all `2^n` events.
pub fn tv_distance_bruteforce(mu: &DiscreteDistribution, nu: &DiscreteDistribution) -> Result<f64> {
    check_dim(mu.len(), nu.len())?;
    let n = mu.len();
    if n > BRUTE_FORCE_MAX {
        return Err(Error::invalid(format!("support {n} is too large for event enumeration (max {BRUTE_FORCE_MAX})")));
    }
    let diff: Vec<f64> = mu.probs().iter().zip(nu.probs()).map(|(a, b)| a - b).collect();
    let mut best: f64 = 0.0;
    for mask in 0u32..(1 << n) {
        let mut s = 0.0;
        for (i, d) in diff.iter().enumerate() {
            if mask & (1 << i) != 0 {
                s += d;
            }
        }
        best = best.max(s.abs());
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteChain {
    /// Row-stochastic transition matrix, row-major.
    p: Vec<Vec<f64>>,
}

impl DiscreteChain {
    pub fn new(p: Vec<Vec<f64>>) -> Result<Self> {
        let n = p.len();
        if n == 0 {
            return Err(Error::invalid("chain needs at least one state"));
        }
        for (i, row) in p.iter().enumerate() {
            check_dim(n, row.len())?;
            if row.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::invalid(format!("row {i} has a negative or non-finite entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > NORM_TOL {
                return Err(Error::invalid(format!("row {i} sums to {total}, not 1")));
            }
        }
        Ok(Self { p })
    }

    pub fn states(&self) -> usize {
        self.p.len()
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.p
    }

    /// `μP`
    pub fn step(&self, mu: &[f64]) -> Vec<f64> {
        let n = self.states();
        let mut out = vec![0.0; n];
        for (i, &m) in mu.iter().enumerate() {
            if m != 0.0 {
                for (o, &pij) in out.iter_mut().zip(&self.p[i]) {
                    *o += m * pij;
                }
            }
        }
        out
    }

    /// Power iteration from `pi0` until successive iterates differ by at
    /// most 1e−12 in TV. `None` if that does not happen within `budget`.
    pub fn stationary(&self, pi0: &DiscreteDistribution, budget: usize) -> Result<Option<DiscreteDistribution>> {
        check_dim(self.states(), pi0.len())?;
        let mut pi = pi0.probs().to_vec();
        for _ in 0..budget {
            let next = self.step(&pi);
            let moved = half_l1(&pi, &next);
            pi = next;
            if moved <= NORM_TOL {
                let total: f64 = pi.iter().sum();
                pi.iter_mut().for_each(|v| *v /= total);
                return Ok(Some(DiscreteDistribution { probs: pi }));
            }
        }
        Ok(None)
    }

    /// `d(t) = max_x ‖P^t(x,·) − π‖_TV` for `t = 0..=t_max`.
    pub fn distance_curve(&self, pi: &DiscreteDistribution, t_max: usize) -> Result<Vec<f64>> {
        check_dim(self.states(), pi.len())?;
        let n = self.states();
        let mut rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut r = vec![0.0; n];
                r[i] = 1.0;
                r
            })
            .collect();
        let mut out = Vec::with_capacity(t_max + 1);
        for t in 0..=t_max {
            if t > 0 {
                rows = rows.iter().map(|r| self.step(r)).collect();
            }
            out.push(rows.iter().map(|r| half_l1(r, pi.probs())).fold(0.0, f64::max));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum MixingTime {
    Mixed {
        t_mix: usize,
        stationary: Vec<f64>,
    },
    /// `d(t) > ε` for every `t ≤ budget`.
    NotMixed {
        budget: usize,
        last_distance: f64,
    },
    /// Power iteration did not settle within the budget.
    NoStationary {
        budget: usize,
    },
}

impl MixingTime {
    pub fn t_mix(&self) -> Option<usize> {
        match self {
            MixingTime::Mixed { t_mix, .. } => Some(*t_mix),
            _ => None,
        }
    }
}

pub const DEFAULT_EPSILON: f64 = 0.25;

/// `t_mix(ε) = min{t : d(t) ≤ ε}`, with `π` found by power iteration from
/// `pi0`.
pub fn chain_mixing_time(
    chain: &DiscreteChain,
    pi0: &DiscreteDistribution,
    epsilon: f64,
    budget: usize,
) -> Result<MixingTime> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon must lie in (0, 1)"));
    }
    let Some(pi) = chain.stationary(pi0, budget)? else {
        return Ok(MixingTime::NoStationary { budget });
    };
    let curve = chain.distance_curve(&pi, budget)?;
    match curve.iter().position(|&d| d <= epsilon) {
        Some(t_mix) => Ok(MixingTime::Mixed { t_mix, stationary: pi.probs }),
        None => Ok(MixingTime::NotMixed { budget, last_distance: *curve.last().expect("non-empty") }),
    }
}

/// Random walk on `Z_n` with increment law `μ`: `P(x, x + k) = μ(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclicWalk {
    /// `increments[k]` is the probability of stepping by `+k (mod n)`.
    pub increments: DiscreteDistribution,
}

impl CyclicWalk {
    pub fn new(increments: DiscreteDistribution) -> Self {
        Self { increments }
    }

    /// Build from `(offset, probability)` pairs; offsets are taken mod `n`.
    pub fn from_offsets(n: usize, offsets: &[(i64, f64)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("group order must be positive"));
        }
        let mut probs = vec![0.0; n];
        for &(k, p) in offsets {
            probs[k.rem_euclid(n as i64) as usize] += p;
        }
        Ok(Self::new(DiscreteDistribution::new(probs)?))
    }

    pub fn order(&self) -> usize {
        self.increments.len()
    }

    pub fn chain(&self) -> DiscreteChain {
        let n = self.order();
        let mu = self.increments.probs();
        let p = (0..n).map(|x| (0..n).map(|y| mu[(y + n - x) % n]).collect()).collect();
        DiscreteChain { p }
    }

    /// Walk with `μ̂(k) = μ(−k)`.
    pub fn reversed(&self) -> Self {
        let n = self.order();
        let mu = self.increments.probs();
        let probs = (0..n).map(|k| mu[(n - k) % n]).collect();
        Self::new(DiscreteDistribution { probs })
    }

    /// Recover the increment law of a circulant chain; other chains are not
    /// group walks.
    pub fn from_chain(chain: &DiscreteChain) -> Result<Self> {
        let n = chain.states();
        let mu = chain.matrix()[0].clone();
        for (x, row) in chain.matrix().iter().enumerate() {
            for (y, &v) in row.iter().enumerate() {
                if (v - mu[(y + n - x) % n]).abs() > NORM_TOL {
                    return Err(Error::invalid("chain is not a random walk on Z_n"));
                }
            }
        }
        Ok(Self::new(DiscreteDistribution::new(mu)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversalCheck {
    pub forward: MixingTime,
    pub reversed: MixingTime,
    pub equal: bool,
}

/// Mixing times of a group walk and of its time reversal.
pub fn time_reversal_check(chain: &DiscreteChain, epsilon: f64, budget: usize) -> Result<ReversalCheck> {
    let walk = CyclicWalk::from_chain(chain)?;
    let n = walk.order();
    let start = DiscreteDistribution::delta(n, 0)?;
    // π is uniform for every group walk; starting power iteration from a
    // point mass still exercises the search.
    let forward = chain_mixing_time(chain, &start, epsilon, budget)?;
    let reversed = chain_mixing_time(&walk.reversed().chain(), &start, epsilon, budget)?;
    let equal = forward.t_mix() == reversed.t_mix();
    Ok(ReversalCheck { forward, reversed, equal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, tag};
    use rand::Rng;

    fn dist(v: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn tv_examples() {
        let a = dist(&[0.5, 0.5]);
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(tv_distance(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(tv_distance(&a, &dist(&[0.75, 0.25])).unwrap(), 0.25);
        assert!(tv_distance(&a, &dist(&[1.0])).is_err());
        let (mu, nu) = (dist(&[0.2, 0.3, 0.5]), dist(&[0.5, 0.3, 0.2]));
        assert!((tv_distance_bruteforce(&mu, &nu).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(tv_distance_bruteforce(&mu, &mu).unwrap(), 0.0);
        let big = DiscreteDistribution::uniform(21).unwrap();
        assert!(tv_distance_bruteforce(&big, &big).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(DiscreteDistribution::new(vec![]).is_err());
        assert!(DiscreteChain::new(vec![vec![0.5, 0.4], vec![0.0, 1.0]]).is_err());
        assert!(DiscreteChain::new(vec![vec![1.0]]).is_ok());
    }

    fn random_dist<R: Rng>(rng: &mut R, n: usize) -> DiscreteDistribution {
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let total: f64 = w.iter().sum();
        let mut probs: Vec<f64> = w.iter().map(|v| v / total).collect();
        let rest: f64 = probs[1..].iter().sum();
        probs[0] = 1.0 - rest;
        DiscreteDistribution::new(probs).unwrap()
    }

    #[test]
    fn bruteforce_agrees_on_random_pairs() {
        let mut rng = rng::stream(1, tag::PROBE, 0);
        for _ in 0..200 {
            let n = rng.random_range(1..=12);
            let (mu, nu) = (random_dist(&mut rng, n), random_dist(&mut rng, n));
            let a = tv_distance(&mu, &nu).unwrap();
            let b = tv_distance_bruteforce(&mu, &nu).unwrap();
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn one_step_and_never_mixing() {
        let pi = vec![0.2, 0.5, 0.3];
        let chain = DiscreteChain::new(vec![pi.clone(); 3]).unwrap();
        let start = DiscreteDistribution::uniform(3).unwrap();
        assert_eq!(chain_mixing_time(&chain, &start, 0.25, 100).unwrap().t_mix(), Some(1));
        let id = DiscreteChain::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let res = chain_mixing_time(&id, &DiscreteDistribution::uniform(2).unwrap(), 0.25, 50).unwrap();
        assert!(matches!(res, MixingTime::NotMixed { budget: 50, .. }));
        // Period-2 flip never settles under power iteration from a point mass.
        let flip = DiscreteChain::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let res = chain_mixing_time(&flip, &DiscreteDistribution::delta(2, 0).unwrap(), 0.25, 50).unwrap();
        assert_eq!(res, MixingTime::NoStationary { budget: 50 });
    }

    #[test]
    fn two_state_closed_form() {
        let (p, q) = (0.1, 0.2);
        let chain = DiscreteChain::new(vec![vec![1.0 - p, p], vec![q, 1.0 - q]]).unwrap();
        // d(t) = max(p, q)/(p + q) · |1 − p − q|^t
        let lambda: f64 = 1.0 - p - q;
        let c = p.max(q) / (p + q);
        let expect = (0..).find(|&t| c * lambda.abs().powi(t) <= 0.25).unwrap() as usize;
        let got = chain_mixing_time(&chain, &DiscreteDistribution::delta(2, 0).unwrap(), 0.25, 1000).unwrap();
        assert_eq!(got.t_mix(), Some(expect));
        let pi = DiscreteDistribution::new(vec![q / (p + q), p / (p + q)]).unwrap();
        for (t, d) in chain.distance_curve(&pi, 30).unwrap().iter().enumerate() {
            assert!((d - c * lambda.powi(t as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn reversal_on_z5() {
        let walk = CyclicWalk::from_offsets(5, &[(1, 0.6), (2, 0.4)]).unwrap();
        let check = time_reversal_check(&walk.chain(), 0.25, 1000).unwrap();
        assert!(check.equal);
        let manual = CyclicWalk::from_offsets(5, &[(-1, 0.6), (-2, 0.4)]).unwrap();
        assert_eq!(walk.reversed(), manual);
        let uniform = CyclicWalk::new(DiscreteDistribution::uniform(5).unwrap());
        let check = time_reversal_check(&uniform.chain(), 0.25, 100).unwrap();
        assert_eq!(check.forward.t_mix(), Some(1));
        assert_eq!(check.reversed.t_mix(), Some(1));
        let not_group = DiscreteChain::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        assert!(time_reversal_check(&not_group, 0.25, 100).is_err());
    }

    #[test]
    fn decay_and_submultiplicativity() {
        let chains = [
            DiscreteChain::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap(),
            CyclicWalk::from_offsets(7, &[(0, 0.2), (1, 0.5), (3, 0.3)]).unwrap().chain(),
            DiscreteChain::new(vec![vec![0.5, 0.5, 0.0], vec![0.1, 0.6, 0.3], vec![0.3, 0.0, 0.7]]).unwrap(),
        ];
        for chain in &chains {
            let n = chain.states();
            let start = DiscreteDistribution::uniform(n).unwrap();
            let res = chain_mixing_time(chain, &start, 0.25, 2000).unwrap();
            let MixingTime::Mixed { t_mix, stationary } = res else { panic!("should mix") };
            let pi = DiscreteDistribution::new(stationary).unwrap();
            let curve = chain.distance_curve(&pi, 6 * t_mix.max(1)).unwrap();
            for w in curve[1..].windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            for l in 1..=5 {
                assert!(curve[l * t_mix] <= 0.5f64.powi(l as i32) + 1e-12);
            }
        }
    }
}
