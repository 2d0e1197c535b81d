//! Per-head distributions and closed-form log-density, entropy and KL, with
//! gradients in each head's natural parameters: `(α, β)` for Beta heads and
//! the logits for categorical heads.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::action::{CompoundAction, HeadKind, HeadValue};
use crate::error::{Error, Result};
use crate::special::{digamma, ln_beta, trigamma};

/// Beta draws are kept this far from the interval ends.
pub const BETA_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Head {
    Beta { alpha: f64, beta: f64 },
    Categorical { probs: Vec<f64>, log_probs: Vec<f64> },
}

impl Head {
    pub fn beta(alpha: f64, beta: f64) -> Self {
        Head::Beta { alpha, beta }
    }

    /// Normalized exponentials of `logits`.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        let log_probs: Vec<f64> = logits.iter().map(|z| z - lse).collect();
        Head::Categorical {
            probs: log_probs.iter().map(|l| l.exp()).collect(),
            log_probs,
        }
    }

    pub fn from_probs(probs: Vec<f64>) -> Self {
        Head::Categorical {
            log_probs: probs.iter().map(|p| p.ln()).collect(),
            probs,
        }
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            Head::Beta { .. } => HeadKind::Beta,
            Head::Categorical { probs, .. } => HeadKind::Categorical(probs.len()),
        }
    }

    pub fn log_prob(&self, value: HeadValue) -> Result<f64> {
        match (self, value) {
            (&Head::Beta { alpha, beta }, HeadValue::Unit(x)) => {
                if !(x > 0.0 && x < 1.0) {
                    return Err(Error::Domain {
                        context: "Beta log_prob",
                        value: x,
                    });
                }
                Ok((alpha - 1.0) * x.ln() + (beta - 1.0) * (-x).ln_1p() - ln_beta(alpha, beta))
            }
            (Head::Categorical { log_probs, .. }, HeadValue::Category(i)) => log_probs
                .get(i)
                .copied()
                .ok_or_else(|| Error::Config(format!("category {i} out of {}", log_probs.len()))),
            _ => Err(Error::Config("sample kind does not match head kind".into())),
        }
    }

    pub fn entropy(&self) -> f64 {
        match *self {
            Head::Beta { alpha: a, beta: b } => {
                ln_beta(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) + (a + b - 2.0) * digamma(a + b)
            }
            Head::Categorical { ref probs, ref log_probs } => -probs
                .iter()
                .zip(log_probs)
                .filter(|(&p, _)| p > 0.0)
                .map(|(p, l)| p * l)
                .sum::<f64>(),
        }
    }

    /// KL(self ‖ other).
    pub fn kl(&self, other: &Head) -> Result<f64> {
        match (self, other) {
            (&Head::Beta { alpha: a, beta: b }, &Head::Beta { alpha: a0, beta: b0 }) => Ok(ln_beta(a0, b0)
                - ln_beta(a, b)
                + (a - a0) * digamma(a)
                + (b - b0) * digamma(b)
                + (a0 - a + b0 - b) * digamma(a + b)),
            (Head::Categorical { probs: p, log_probs: lp }, Head::Categorical { log_probs: lq, .. })
                if p.len() == lq.len() =>
            {
                Ok(p.iter()
                    .zip(lp.iter().zip(lq))
                    .filter(|(&pi, _)| pi > 0.0)
                    .map(|(pi, (a, b))| pi * (a - b))
                    .sum())
            }
            _ => Err(Error::Config("KL between mismatched heads".into())),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HeadValue {
        match *self {
            Head::Beta { alpha, beta } => {
                let x: f64 = Beta::new(alpha, beta).expect("positive shape parameters").sample(rng);
                HeadValue::Unit(x.clamp(BETA_CLAMP, 1.0 - BETA_CLAMP))
            }
            Head::Categorical { ref probs, .. } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, &p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return HeadValue::Category(i);
                    }
                }
                // rounding left u above the total; take the last live category
                HeadValue::Category(probs.iter().rposition(|&p| p > 0.0).unwrap_or(0))
            }
        }
    }

    fn add_log_prob_grad(&self, value: HeadValue, scale: f64, out: &mut [f64]) {
        match (self, value) {
            (&Head::Beta { alpha: a, beta: b }, HeadValue::Unit(x)) => {
                let dab = digamma(a + b);
                out[0] += scale * (x.ln() - digamma(a) + dab);
                out[1] += scale * ((-x).ln_1p() - digamma(b) + dab);
            }
            (Head::Categorical { probs, .. }, HeadValue::Category(i)) => {
                for (j, (o, p)) in out.iter_mut().zip(probs).enumerate() {
                    *o += scale * (f64::from(u8::from(i == j)) - p);
                }
            }
            _ => unreachable!("checked by log_prob"),
        }
    }

    fn add_entropy_grad(&self, scale: f64, out: &mut [f64]) {
        match *self {
            Head::Beta { alpha: a, beta: b } => {
                let tab = (a + b - 2.0) * trigamma(a + b);
                out[0] += scale * (tab - (a - 1.0) * trigamma(a));
                out[1] += scale * (tab - (b - 1.0) * trigamma(b));
            }
            Head::Categorical { ref probs, ref log_probs } => {
                let h = self.entropy();
                for (o, (&p, &l)) in out.iter_mut().zip(probs.iter().zip(log_probs)) {
                    if p > 0.0 {
                        *o -= scale * p * (l + h);
                    }
                }
            }
        }
    }

    fn add_kl_grad(&self, old: &Head, scale: f64, out: &mut [f64]) -> Result<()> {
        match (self, old) {
            (&Head::Beta { alpha: a, beta: b }, &Head::Beta { alpha: a0, beta: b0 }) => {
                let t = (a0 - a + b0 - b) * trigamma(a + b);
                out[0] += scale * ((a - a0) * trigamma(a) + t);
                out[1] += scale * ((b - b0) * trigamma(b) + t);
                Ok(())
            }
            (Head::Categorical { probs, log_probs }, Head::Categorical { log_probs: lq, .. }) => {
                let kl = self.kl(old)?;
                for (o, (&p, (&lp, &lq))) in out.iter_mut().zip(probs.iter().zip(log_probs.iter().zip(lq))) {
                    if p > 0.0 {
                        *o += scale * p * (lp - lq - kl);
                    }
                }
                Ok(())
            }
            _ => Err(Error::Config("KL between mismatched heads".into())),
        }
    }
}

/// One distribution per policy head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSet {
    pub heads: Vec<Head>,
}

impl DistributionSet {
    pub fn new(heads: Vec<Head>) -> Self {
        DistributionSet { heads }
    }

    pub fn kinds(&self) -> Vec<HeadKind> {
        self.heads.iter().map(Head::kind).collect()
    }

    /// Total width of the natural-parameter layout used by the gradient
    /// helpers (2 per Beta head, `k` per categorical head).
    pub fn width(&self) -> usize {
        self.heads.iter().map(|h| h.kind().width()).sum()
    }

    fn check_len(&self, n: usize, context: &'static str) -> Result<()> {
        if n == self.heads.len() {
            Ok(())
        } else {
            Err(Error::Shape {
                context,
                expected: self.heads.len(),
                actual: n,
            })
        }
    }

    pub fn log_prob(&self, action: &CompoundAction) -> Result<f64> {
        self.check_len(action.values.len(), "log_prob")?;
        self.heads
            .iter()
            .zip(&action.values)
            .map(|(h, &v)| h.log_prob(v))
            .sum()
    }

    pub fn entropy(&self) -> f64 {
        self.heads.iter().map(Head::entropy).sum()
    }

    /// Σ over heads of KL(self ‖ other).
    pub fn kl(&self, other: &DistributionSet) -> Result<f64> {
        self.check_len(other.heads.len(), "kl")?;
        self.heads.iter().zip(&other.heads).map(|(p, q)| p.kl(q)).sum()
    }

    /// Draws one value per head and caches the joint log-probability.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CompoundAction {
        let values: Vec<HeadValue> = self.heads.iter().map(|h| h.sample(rng)).collect();
        let mut action = CompoundAction::new(values);
        action.log_prob = self.log_prob(&action).expect("samples lie in the support");
        action
    }

    fn for_each_slot(&self, mut f: impl FnMut(usize, std::ops::Range<usize>)) {
        let mut off = 0;
        for (i, h) in self.heads.iter().enumerate() {
            let w = h.kind().width();
            f(i, off..off + w);
            off += w;
        }
    }

    /// Adds `scale · ∂ log_prob(action) / ∂(natural params)` into `out`.
    pub fn add_log_prob_grad(&self, action: &CompoundAction, scale: f64, out: &mut [f64]) -> Result<()> {
        self.check_len(action.values.len(), "log_prob_grad")?;
        self.log_prob(action)?;
        self.for_each_slot(|i, r| self.heads[i].add_log_prob_grad(action.values[i], scale, &mut out[r]));
        Ok(())
    }

    /// Adds `scale · ∂ entropy / ∂(natural params)` into `out`.
    pub fn add_entropy_grad(&self, scale: f64, out: &mut [f64]) {
        self.for_each_slot(|i, r| self.heads[i].add_entropy_grad(scale, &mut out[r]));
    }

    /// Adds `scale · ∂ KL(self ‖ old) / ∂(natural params of self)` into `out`.
    pub fn add_kl_grad(&self, old: &DistributionSet, scale: f64, out: &mut [f64]) -> Result<()> {
        self.check_len(old.heads.len(), "kl_grad")?;
        let mut res = Ok(());
        self.for_each_slot(|i, r| {
            if res.is_ok() {
                res = self.heads[i].add_kl_grad(&old.heads[i], scale, &mut out[r]);
            }
        });
        res
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn uniform6() -> Head {
        Head::from_logits(&[0.0; 6])
    }

    #[test]
    fn log_prob_examples() {
        assert!(Head::beta(1.0, 1.0).log_prob(HeadValue::Unit(0.3)).unwrap().abs() < 1e-12);
        assert!(Head::beta(2.0, 1.0).log_prob(HeadValue::Unit(0.5)).unwrap().abs() < 1e-12);
        let l = uniform6().log_prob(HeadValue::Category(4)).unwrap();
        assert!((l - (1.0f64 / 6.0).ln()).abs() < 1e-12);
        assert!(matches!(
            Head::beta(2.0, 2.0).log_prob(HeadValue::Unit(1.0)),
            Err(Error::Domain { .. })
        ));
        assert!(Head::beta(2.0, 2.0).log_prob(HeadValue::Unit(0.0)).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert!(Head::beta(1.0, 1.0).entropy().abs() < 1e-12);
        assert!((uniform6().entropy() - 6f64.ln()).abs() < 1e-12);
        assert_eq!(Head::from_probs(vec![1.0, 0.0, 0.0]).entropy(), 0.0);
    }

    #[test]
    fn kl_examples() {
        let p = Head::from_probs(vec![0.5, 0.5]);
        assert_eq!(p.kl(&p).unwrap(), 0.0);
        let q = Head::from_probs(vec![0.9, 0.1]);
        let expected = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        assert!((p.kl(&q).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.510_825_623_765_990_7).abs() < 1e-12);
        let b = Head::beta(1.0 + LN2, 1.0 + LN2);
        assert!(b.kl(&b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn shift_invariance() {
        let a = Head::from_logits(&[0.3, -1.2, 2.0]);
        let b = Head::from_logits(&[10.3, 8.8, 12.0]);
        let (Head::Categorical { probs: pa, .. }, Head::Categorical { probs: pb, .. }) = (a, b) else {
            unreachable!()
        };
        for (x, y) in pa.iter().zip(&pb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = Head::beta(1.0, 1.0);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| match u.sample(&mut rng) {
                HeadValue::Unit(x) => x,
                _ => unreachable!(),
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01);
        let d = Head::from_probs(vec![1.0, 0.0, 0.0, 0.0]);
        for _ in 0..1000 {
            assert_eq!(d.sample(&mut rng), HeadValue::Category(0));
        }
        let set = DistributionSet::new(vec![Head::beta(2.0, 3.0), uniform6()]);
        let a = set.sample(&mut ChaCha8Rng::seed_from_u64(9));
        let b = set.sample(&mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!((a.log_prob - set.log_prob(&a).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn extreme_beta_samples_have_finite_log_prob() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for h in [Head::beta(1.0, 5000.0), Head::beta(4000.0, 1.0), Head::beta(1.0001, 1.0001)] {
            for _ in 0..2000 {
                assert!(h.log_prob(h.sample(&mut rng)).unwrap().is_finite());
            }
        }
    }

    fn random_head(rng: &mut ChaCha8Rng) -> Head {
        if rng.random_bool(0.5) {
            Head::beta(1.0 + rng.random::<f64>() * 6.0, 1.0 + rng.random::<f64>() * 6.0)
        } else {
            let logits: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            Head::from_logits(&logits)
        }
    }

    #[test]
    fn kl_is_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10_000 {
            let p = random_head(&mut rng);
            let mut q = random_head(&mut rng);
            while q.kind() != p.kind() {
                q = random_head(&mut rng);
            }
            assert!(p.kl(&q).unwrap() >= -1e-12);
        }
    }

    // Monte-Carlo checks: E[−log p] = H and E_p[log p − log q] = KL, within
    // three standard errors.
    #[test]
    fn entropy_and_kl_match_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 1_000_000;
        for _ in 0..4 {
            let p = random_head(&mut rng);
            let mut q = random_head(&mut rng);
            while q.kind() != p.kind() {
                q = random_head(&mut rng);
            }
            let (mut s_h, mut s_h2, mut s_k, mut s_k2) = (0.0, 0.0, 0.0, 0.0);
            for _ in 0..n {
                let v = p.sample(&mut rng);
                let lp = p.log_prob(v).unwrap();
                let k = lp - q.log_prob(v).unwrap();
                s_h -= lp;
                s_h2 += lp * lp;
                s_k += k;
                s_k2 += k * k;
            }
            let nf = n as f64;
            let (mh, mk) = (s_h / nf, s_k / nf);
            let se_h = ((s_h2 / nf - mh * mh) / nf).sqrt();
            let se_k = ((s_k2 / nf - mk * mk) / nf).sqrt();
            // the clamp shifts the Beta support negligibly; allow a tiny floor
            assert!((mh - p.entropy()).abs() <= 3.0 * se_h + 1e-4, "{p:?} H {mh} vs {}", p.entropy());
            assert!((mk - p.kl(&q).unwrap()).abs() <= 3.0 * se_k + 1e-4, "{p:?} KL");
        }
    }

    fn perturb(h: &Head, slot: usize, eps: f64, logits: Option<&[f64]>) -> Head {
        match *h {
            Head::Beta { alpha, beta } => {
                if slot == 0 {
                    Head::beta(alpha + eps, beta)
                } else {
                    Head::beta(alpha, beta + eps)
                }
            }
            Head::Categorical { .. } => {
                let mut z = logits.unwrap().to_vec();
                z[slot] += eps;
                Head::from_logits(&z)
            }
        }
    }

    #[test]
    fn natural_gradients_match_finite_differences() {
        let h = 1e-6;
        let beta = Head::beta(2.3, 1.7);
        let beta_old = Head::beta(1.9, 3.1);
        let logits = [0.2, -0.7, 1.1];
        let cat = Head::from_logits(&logits);
        let cat_old = Head::from_logits(&[0.0, 0.5, -0.3]);
        let cases: [(&Head, &Head, HeadValue, Option<&[f64]>); 2] = [
            (&beta, &beta_old, HeadValue::Unit(0.37), None),
            (&cat, &cat_old, HeadValue::Category(2), Some(&logits)),
        ];
        for (head, old, value, z) in cases {
            let w = head.kind().width();
            let (mut g_lp, mut g_h, mut g_kl) = (vec![0.0; w], vec![0.0; w], vec![0.0; w]);
            head.add_log_prob_grad(value, 1.0, &mut g_lp);
            head.add_entropy_grad(1.0, &mut g_h);
            head.add_kl_grad(old, 1.0, &mut g_kl).unwrap();
            for s in 0..w {
                let (hp, hm) = (perturb(head, s, h, z), perturb(head, s, -h, z));
                let fd_lp = (hp.log_prob(value).unwrap() - hm.log_prob(value).unwrap()) / (2.0 * h);
                let fd_h = (hp.entropy() - hm.entropy()) / (2.0 * h);
                let fd_kl = (hp.kl(old).unwrap() - hm.kl(old).unwrap()) / (2.0 * h);
                assert!((fd_lp - g_lp[s]).abs() < 1e-6, "lp slot {s}");
                assert!((fd_h - g_h[s]).abs() < 1e-6, "H slot {s}");
                assert!((fd_kl - g_kl[s]).abs() < 1e-6, "KL slot {s}");
            }
        }
    }

    #[test]
    fn kl_gradient_vanishes_at_snapshot() {
        let set = DistributionSet::new(vec![Head::beta(1.4, 2.9), Head::from_logits(&[0.1, 0.4, -2.0])]);
        let mut g = vec![0.0; set.width()];
        set.add_kl_grad(&set, 1.0, &mut g).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-12));
    }
}
