//! Mergeable accumulators, ratio confidence intervals and distances between
//! (weighted) empirical laws.

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Welford/Chan running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StreamingMoments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl StreamingMoments {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        self.mean += d * w;
        self.m2 += other.m2 + d * d * self.n as f64 * w;
        self.n = n;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for StreamingMoments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Self::default();
        for v in iter {
            m.push(v);
        }
        m
    }
}

/// Joint moments of paired observations `(a_i, b_i)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairMoments {
    pub a: StreamingMoments,
    pub b: StreamingMoments,
    /// Sum of co-deviations.
    pub cab: f64,
}

impl PairMoments {
    pub fn push(&mut self, a: f64, b: f64) {
        let db = b - self.b.mean;
        self.a.push(a);
        self.b.push(b);
        self.cab += (a - self.a.mean) * db;
    }

    pub fn merge(&mut self, other: &Self) {
        if other.a.n == 0 {
            return;
        }
        if self.a.n == 0 {
            *self = *other;
            return;
        }
        let (n1, n2) = (self.a.n as f64, other.a.n as f64);
        let da = other.a.mean - self.a.mean;
        let db = other.b.mean - self.b.mean;
        self.cab += other.cab + da * db * n1 * n2 / (n1 + n2);
        self.a.merge(&other.a);
        self.b.merge(&other.b);
    }

    pub fn n(&self) -> u64 {
        self.a.n
    }

    pub fn covariance(&self) -> f64 {
        let n = self.a.n;
        if n < 2 {
            0.0
        } else {
            self.cab / (n - 1) as f64
        }
    }
}

/// Ratio of means `mean(a)/mean(b)` with its delta-method standard error.
pub fn delta_ratio_ci(pairs: &PairMoments) -> Result<(f64, f64)> {
    let d = pairs.b.mean;
    if !(d > 0.0) {
        return Err(Error::Degenerate(format!(
            "denominator mean {d} <= 0 over {} paths; increase the path count or choose a weight with more mass",
            pairs.n()
        )));
    }
    let r = pairs.a.mean / d;
    let var = (pairs.a.variance() - 2.0 * r * pairs.covariance() + r * r * pairs.b.variance()) / (d * d);
    Ok((r, (var.max(0.0) / pairs.n() as f64).sqrt()))
}

/// Bootstrap standard error of `mean(a)/mean(b)` over `reps` resamples.
pub fn bootstrap_ratio_se(pairs: &[(f64, f64)], reps: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::domain("bootstrap_ratio_se", "empty sample"));
    }
    let n = pairs.len();
    let mut ratios = StreamingMoments::default();
    for _ in 0..reps {
        let (mut sa, mut sb) = (0.0, 0.0);
        for _ in 0..n {
            let (a, b) = pairs[rng.random_range(0..n)];
            sa += a;
            sb += b;
        }
        if sb > 0.0 {
            ratios.push(sa / sb);
        }
    }
    Ok(ratios.variance().sqrt())
}

/// Right-continuous step CDF of a weighted sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEcdf {
    values: Vec<f64>,
    /// `cum[i]` = total normalized weight of `values[..=i]`.
    cum: Vec<f64>,
}

impl WeightedEcdf {
    pub fn new(values: &[f64], weights: &[f64]) -> Result<Self> {
        if values.is_empty() || values.len() != weights.len() {
            return Err(Error::domain("weighted_ecdf", "empty sample or length mismatch"));
        }
        if values.iter().any(|v| v.is_nan()) || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::domain("weighted_ecdf", "NaN value or invalid weight"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::domain("weighted_ecdf", "weights sum to zero"));
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        let mut vals = Vec::with_capacity(values.len());
        let mut cum = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        for i in order {
            acc += weights[i];
            // Ties collapse into one jump.
            if vals.last() == Some(&values[i]) {
                *cum.last_mut().unwrap() = acc / total;
            } else {
                vals.push(values[i]);
                cum.push(acc / total);
            }
        }
        *cum.last_mut().unwrap() = 1.0;
        Ok(Self { values: vals, cum })
    }

    pub fn unweighted(values: &[f64]) -> Result<Self> {
        Self::new(values, &vec![1.0; values.len()])
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.values.partition_point(|&v| v <= x);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1]
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Probability mass of each distinct value.
    fn masses(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, self.cum[i] - if i == 0 { 0.0 } else { self.cum[i - 1] }))
    }
}

/// Sup-distance between two step CDFs.
pub fn ks_distance(a: &WeightedEcdf, b: &WeightedEcdf) -> Result<f64> {
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.values.len() || j < b.values.len() {
        let x = match (a.values.get(i), b.values.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        while i < a.values.len() && a.values[i] <= x {
            i += 1;
        }
        while j < b.values.len() && b.values[j] <= x {
            j += 1;
        }
        let fa = if i == 0 { 0.0 } else { a.cum[i - 1] };
        let fb = if j == 0 { 0.0 } else { b.cum[j - 1] };
        d = d.max((fa - fb).abs());
    }
    Ok(d)
}

/// Sup-distance between a weighted sample and a continuous CDF.
pub fn ks_weighted_against_cdf(a: &WeightedEcdf, cdf: impl Fn(f64) -> f64) -> f64 {
    let mut d = 0.0f64;
    let mut prev = 0.0;
    for (i, &x) in a.values.iter().enumerate() {
        let f = cdf(x);
        d = d.max((a.cum[i] - f).abs()).max((f - prev).abs());
        prev = a.cum[i];
    }
    d
}

/// One-sample Kolmogorov-Smirnov statistic of unweighted draws.
pub fn ks_against_cdf(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    Ok(ks_weighted_against_cdf(&WeightedEcdf::unweighted(samples)?, cdf))
}

/// Histogram L1 distance on the common support, in `[0, 2]`.
pub fn l1_distance(a: &WeightedEcdf, b: &WeightedEcdf, bins: usize) -> Result<f64> {
    if bins < 10 {
        return Err(Error::domain("l1_distance", format!("bins = {bins} must be >= 10")));
    }
    let lo = a.values[0].min(b.values[0]);
    let hi = a.values.last().unwrap().max(*b.values.last().unwrap());
    let width = (hi - lo) / bins as f64;
    let bin = |x: f64| {
        if width > 0.0 {
            (((x - lo) / width) as usize).min(bins - 1)
        } else {
            0
        }
    };
    let mut diff = vec![0.0; bins];
    for (x, p) in a.masses() {
        diff[bin(x)] += p;
    }
    for (x, p) in b.masses() {
        diff[bin(x)] -= p;
    }
    Ok(diff.iter().map(|d| d.abs()).sum::<f64>().min(2.0))
}

/// `(Σw)² / Σw²`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Sample Pearson correlation with its large-sample standard error `1/sqrt(n)`.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.len() < 3 {
        return Err(Error::domain("correlation", "need at least 3 paired values"));
    }
    let mut p = PairMoments::default();
    for (&x, &y) in a.iter().zip(b) {
        p.push(x, y);
    }
    let denom = (p.a.variance() * p.b.variance()).sqrt();
    let r = if denom > 0.0 { p.covariance() / denom } else { 0.0 };
    Ok((r, 1.0 / (a.len() as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest, Strategy};
    use rand_distr::StandardNormal;

    #[test]
    fn ks_examples() {
        let a = WeightedEcdf::unweighted(&[0.0]).unwrap();
        let b = WeightedEcdf::unweighted(&[1.0]).unwrap();
        assert_eq!(ks_distance(&a, &b).unwrap(), 1.0);
        let s = [0.3, 0.1, 0.7, 0.7];
        let e = WeightedEcdf::unweighted(&s).unwrap();
        assert_eq!(ks_distance(&e, &e).unwrap(), 0.0);
        assert!(WeightedEcdf::unweighted(&[]).is_err());
        assert!(WeightedEcdf::new(&[1.0], &[0.0]).is_err());
        assert_eq!(e.cdf(0.7), 1.0);
        assert_eq!(e.cdf(0.69), 0.5);
    }

    #[test]
    fn uniform_ks_against_exact_cdf() {
        let mut r = stream(1, 0, Purpose::Auxiliary);
        let u: Vec<f64> = (0..100_000).map(|_| r.random()).collect();
        assert!(ks_against_cdf(&u, |x| x.clamp(0.0, 1.0)).unwrap() <= 0.0043);
    }

    #[test]
    fn ratio_examples() {
        let mut same = PairMoments::default();
        for i in 0..100 {
            let v = 1.0 + (i as f64).sin();
            same.push(v, v);
        }
        let (r, se) = delta_ratio_ci(&same).unwrap();
        assert!((r - 1.0).abs() < 1e-14 && se < 1e-7);
        let mut constant_den = PairMoments::default();
        let mut plain = StreamingMoments::default();
        for i in 0..100 {
            let v = (i as f64).cos();
            constant_den.push(v, 1.0);
            plain.push(v);
        }
        let (r, se) = delta_ratio_ci(&constant_den).unwrap();
        assert!((r - plain.mean()).abs() < 1e-14);
        assert!((se - plain.std_err()).abs() < 1e-12);
        let mut zero = PairMoments::default();
        zero.push(1.0, 0.0);
        assert!(matches!(delta_ratio_ci(&zero), Err(Error::Degenerate(_))));
    }

    #[test]
    fn delta_ratio_coverage() {
        // Pairs (2D + noise, D) with D ~ 1 + Exp; true ratio 2.
        let mut covered = 0;
        for rep in 0..100 {
            let mut r = stream(2, rep, Purpose::Auxiliary);
            let mut p = PairMoments::default();
            for _ in 0..2000 {
                let d: f64 = 1.0 + r.sample::<f64, _>(rand_distr::Exp1);
                let noise: f64 = r.sample(StandardNormal);
                p.push(2.0 * d + 0.5 * noise, d);
            }
            let (ratio, se) = delta_ratio_ci(&p).unwrap();
            if (ratio - 2.0).abs() <= 1.96 * se {
                covered += 1;
            }
        }
        assert!(covered >= 93, "covered {covered}/100");
    }

    #[test]
    fn bootstrap_agrees_with_delta_method() {
        let mut r = stream(3, 0, Purpose::Auxiliary);
        let pairs: Vec<(f64, f64)> = (0..2000)
            .map(|_| {
                let d: f64 = 1.0 + r.sample::<f64, _>(rand_distr::Exp1);
                (d * d, d)
            })
            .collect();
        let mut p = PairMoments::default();
        for &(a, b) in &pairs {
            p.push(a, b);
        }
        let (_, se) = delta_ratio_ci(&p).unwrap();
        let boot = bootstrap_ratio_se(&pairs, 400, &mut r).unwrap();
        assert!((boot / se - 1.0).abs() < 0.2, "{boot} vs {se}");
    }

    #[test]
    fn l1_examples() {
        let mut r = stream(4, 0, Purpose::Auxiliary);
        let u: Vec<f64> = (0..200_000).map(|_| r.random()).collect();
        let shifted: Vec<f64> = (0..200_000).map(|_| 0.5 + r.random::<f64>()).collect();
        let a = WeightedEcdf::unweighted(&u).unwrap();
        let b = WeightedEcdf::unweighted(&shifted).unwrap();
        assert!(l1_distance(&a, &a, 50).unwrap() < 1e-12);
        assert!((l1_distance(&a, &b, 60).unwrap() - 1.0).abs() < 0.05);
        let c = WeightedEcdf::unweighted(&[5.0, 6.0]).unwrap();
        assert!((l1_distance(&a, &c, 10).unwrap() - 2.0).abs() < 1e-12);
        assert!(l1_distance(&a, &b, 5).is_err());
    }

    #[test]
    fn correlation_of_independent_draws() {
        let mut r = stream(5, 0, Purpose::Auxiliary);
        let a: Vec<f64> = (0..10_000).map(|_| r.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..10_000).map(|_| r.sample(StandardNormal)).collect();
        let (c, se) = correlation(&a, &b).unwrap();
        assert!(c.abs() <= 3.0 * se);
        let (c, _) = correlation(&a, &a).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ess() {
        assert_eq!(effective_sample_size(&[1.0; 10]), 10.0);
        assert_eq!(effective_sample_size(&[1.0, 0.0, 0.0]), 1.0);
    }

    fn sample_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e3f64..1e3, 1..60)
    }

    proptest! {
        #[test]
        fn merge_matches_single_stream(a in sample_strategy(), b in sample_strategy(), c in sample_strategy()) {
            let whole: StreamingMoments = a.iter().chain(&b).chain(&c).copied().collect();
            let (ma, mb, mc): (StreamingMoments, StreamingMoments, StreamingMoments) =
                (a.iter().copied().collect(), b.iter().copied().collect(), c.iter().copied().collect());
            let mut left = ma;
            left.merge(&mb);
            left.merge(&mc);
            let mut right = mb;
            right.merge(&mc);
            let mut right_outer = ma;
            right_outer.merge(&right);
            let mut reversed = mc;
            reversed.merge(&mb);
            reversed.merge(&ma);
            for m in [left, right_outer, reversed] {
                prop_assert_eq!(m.n, whole.n);
                prop_assert!((m.mean - whole.mean).abs() <= 1e-12 * (1.0 + whole.mean.abs()));
                prop_assert!((m.m2 - whole.m2).abs() <= 1e-12 * (1.0 + whole.m2));
            }
        }

        #[test]
        fn pair_merge_matches_single_stream(a in sample_strategy(), b in sample_strategy()) {
            let mut whole = PairMoments::default();
            let mut p1 = PairMoments::default();
            let mut p2 = PairMoments::default();
            for (i, &v) in a.iter().chain(&b).enumerate() {
                let w = v * 0.5 + (i as f64).sin();
                whole.push(v, w);
                if i < a.len() { p1.push(v, w) } else { p2.push(v, w) }
            }
            p1.merge(&p2);
            prop_assert!((p1.cab - whole.cab).abs() <= 1e-9 * (1.0 + whole.cab.abs()));
        }

        #[test]
        fn ks_symmetry_and_triangle(a in sample_strategy(), b in sample_strategy(), c in sample_strategy()) {
            let (ea, eb, ec) = (
                WeightedEcdf::unweighted(&a).unwrap(),
                WeightedEcdf::unweighted(&b).unwrap(),
                WeightedEcdf::unweighted(&c).unwrap(),
            );
            let ab = ks_distance(&ea, &eb).unwrap();
            prop_assert_eq!(ab, ks_distance(&eb, &ea).unwrap());
            let ac = ks_distance(&ea, &ec).unwrap();
            let cb = ks_distance(&ec, &eb).unwrap();
            prop_assert!(ab <= ac + cb + 1e-12);
        }

        #[test]
        fn weight_rescaling_invariance(a in sample_strategy(), scale in 1e-3f64..1e3) {
            let w: Vec<f64> = (0..a.len()).map(|i| 1.0 + (i % 3) as f64).collect();
            let ws: Vec<f64> = w.iter().map(|x| x * scale).collect();
            let e1 = WeightedEcdf::new(&a, &w).unwrap();
            let e2 = WeightedEcdf::new(&a, &ws).unwrap();
            prop_assert!(ks_distance(&e1, &e2).unwrap() < 1e-12);
            let u = WeightedEcdf::unweighted(&a).unwrap();
            let d1 = l1_distance(&e1, &u, 20).unwrap();
            let d2 = l1_distance(&e2, &u, 20).unwrap();
            prop_assert!((d1 - d2).abs() < 1e-12);
            prop_assert!((effective_sample_size(&w) - effective_sample_size(&ws)).abs() < 1e-9 * a.len() as f64);
        }
    }
}
