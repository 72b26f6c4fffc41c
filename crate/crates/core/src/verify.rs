//! Self-checks behind `bdk verify-geometry` and `bdk verify-mixing`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{estimate_radius, hemisphere_slab_fraction, random_projection_check, unit_sphere_volume_area};
use crate::markov_tv::{
    chain_mixing_time, time_reversal_check, tv_distance, tv_distance_bruteforce, CyclicWalk, DiscreteChain,
    DiscreteDistribution, MixingTime, DEFAULT_EPSILON,
};
use crate::rng::{self, tag};
use crate::trajectory::sample_starts;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: String,
    pub expected: String,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, observed: impl Into<String>, expected: impl Into<String>, pass: bool) -> Self {
        Self { name: name.into(), observed: observed.into(), expected: expected.into(), pass }
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

/// Fixed-width table, one row per check.
pub fn render_table(checks: &[Check]) -> String {
    let w = checks.iter().map(|c| c.name.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<w$}  {:<4}  {:<28}  expected\n", "check", "ok", "observed");
    for c in checks {
        let ok = if c.pass { "pass" } else { "FAIL" };
        out += &format!("{:<w$}  {:<4}  {:<28}  {}\n", c.name, ok, c.observed, c.expected);
    }
    out
}

/// Radius law, hemisphere slabs, ball volumes and random projections.
pub fn verify_geometry(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (i, d) in [12_288usize, 196_608].into_iter().enumerate() {
        let x = sample_starts(seed.wrapping_add(i as u64), 1000, d);
        let est = estimate_radius(x.view())?;
        let root = (d as f64).sqrt();
        let rel = (est.r - root).abs() / root;
        out.push(Check::new(
            format!("radius d={d}"),
            format!("{:.2} (se {:.3})", est.r, est.std_error),
            format!("{root:.2} within 1%"),
            rel < 0.01,
        ));
    }
    for c in [2.0, 4.0] {
        let s = hemisphere_slab_fraction(50, c, 200_000, seed)?;
        out.push(Check::new(
            format!("hemisphere slab d=50 c={c}"),
            format!("{:.5} (se {:.5})", s.fraction, s.std_error),
            format!("<= {:.5} + 3 se", s.bound),
            s.fraction <= s.bound + 3.0 * s.std_error,
        ));
    }
    for (d, v, a) in [
        (2usize, std::f64::consts::PI, 2.0 * std::f64::consts::PI),
        (3, 4.0 * std::f64::consts::PI / 3.0, 4.0 * std::f64::consts::PI),
    ] {
        let (vv, aa) = unit_sphere_volume_area(d)?;
        let err = (vv - v).abs().max((aa - a).abs());
        out.push(Check::new(format!("ball volume/area d={d}"), format!("err {err:.1e}"), "<= 1e-12", err <= 1e-12));
    }
    let vols: Vec<f64> = (20..=300).map(|d| unit_sphere_volume_area(d).map(|p| p.0)).collect::<Result<_>>()?;
    let monotone = vols.windows(2).all(|w| w[1] < w[0]);
    out.push(Check::new(
        "ball volume monotone d>=20",
        format!("V(300) = {:.1e}", vols[vols.len() - 1]),
        "decreasing, -> 0",
        monotone && vols[vols.len() - 1] < 1e-100,
    ));
    let p = random_projection_check(2000, 1000, 2000, 0.5, seed)?;
    out.push(Check::new(
        "projection d=2000 k=1000 eps=0.5",
        format!("fail rate {:.4}", p.failure_rate),
        format!("<= {:.4}", p.bound.min(1.0)),
        p.failure_rate <= p.bound,
    ));
    Ok(out)
}

fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Result<DiscreteDistribution> {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    DiscreteDistribution::new(w.iter().map(|v| v / s).collect())
}

/// Two-state chain `[[1−p, p], [q, 1−q]]`: `d(t) = |1−p−q|^t·max(p,q)/(p+q)`.
pub fn two_state_closed_form(p: f64, q: f64, epsilon: f64) -> usize {
    let lambda = (1.0 - p - q).abs();
    let c = p.max(q) / (p + q);
    (0..).find(|&t| lambda.powi(t as i32) * c <= epsilon).expect("geometric decay")
}

/// TV oracle, two-state closed form, degenerate chains, submultiplicativity
/// and time reversal on `Z_5`.
pub fn verify_mixing(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = rng::stream(seed, tag::PROBE, 7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=12);
        let mu = random_distribution(&mut rng, n)?;
        let nu = random_distribution(&mut rng, n)?;
        worst = worst.max((tv_distance(&mu, &nu)? - tv_distance_bruteforce(&mu, &nu)?).abs());
    }
    out.push(Check::new("tv = event max (1000 pairs)", format!("max diff {worst:.1e}"), "<= 1e-12", worst <= 1e-12));

    let (p, q) = (0.1, 0.2);
    let chain = DiscreteChain::new(vec![vec![1.0 - p, p], vec![q, 1.0 - q]])?;
    let got = chain_mixing_time(&chain, &DiscreteDistribution::uniform(2)?, DEFAULT_EPSILON, 1000)?.t_mix();
    let want = two_state_closed_form(p, q, DEFAULT_EPSILON);
    out.push(Check::new("two-state t_mix", format!("{got:?}"), format!("{want}"), got == Some(want)));

    let pi = vec![0.2, 0.3, 0.5];
    let jump = DiscreteChain::new(vec![pi.clone(), pi.clone(), pi])?;
    let got = chain_mixing_time(&jump, &DiscreteDistribution::uniform(3)?, DEFAULT_EPSILON, 100)?.t_mix();
    out.push(Check::new("uniform-jump t_mix", format!("{got:?}"), "1", got == Some(1)));

    let id = DiscreteChain::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]])?;
    let got = chain_mixing_time(&id, &DiscreteDistribution::delta(2, 0)?, DEFAULT_EPSILON, 100)?;
    out.push(Check::new(
        "identity chain",
        match &got {
            MixingTime::Mixed { t_mix, .. } => format!("mixed at {t_mix}"),
            _ => "not mixed".into(),
        },
        "not mixed",
        got.t_mix().is_none(),
    ));

    let lazy = CyclicWalk::from_offsets(7, &[(0, 0.5), (1, 0.3), (-1, 0.2)])?.chain();
    let start = DiscreteDistribution::delta(7, 0)?;
    let t = chain_mixing_time(&lazy, &start, DEFAULT_EPSILON, 1000)?.t_mix().unwrap_or(0);
    let curve = lazy.distance_curve(&DiscreteDistribution::uniform(7)?, 4 * t.max(1))?;
    let sub = t > 0 && (1..=4).all(|l| curve[l * t] <= 0.5f64.powi(l as i32) + 1e-15);
    out.push(Check::new("d(l t_mix) <= 2^-l, l=1..4", format!("t_mix {t}"), "holds", sub));

    let walk = CyclicWalk::from_offsets(5, &[(1, 0.6), (2, 0.4)])?;
    let rc = time_reversal_check(&walk.chain(), DEFAULT_EPSILON, 1000)?;
    out.push(Check::new(
        "Z_5 walk vs reversal",
        format!("{:?} / {:?}", rc.forward.t_mix(), rc.reversed.t_mix()),
        "equal",
        rc.equal && rc.forward.t_mix().is_some(),
    ));
    Ok(out)
}
