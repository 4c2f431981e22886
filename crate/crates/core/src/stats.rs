//! Statistical test kit: Pearson χ² and one-sample KS goodness-of-fit with
//! report tables, mergeable moment/count accumulators, and a Monte Carlo
//! driver whose parallel and serial schedules produce identical results.

use crate::process::TruncatedPmf;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

/// Significance level used by every goodness-of-fit gate in the test suites.
pub const DEFAULT_SIGNIFICANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: u64, need: u64 },
    #[error("observed counts are all zero")]
    AllZeroObserved,
    #[error("fewer than two bins remain after merging")]
    DegenerateBins,
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// One row of a goodness-of-fit table after bin merging.
#[derive(Debug, Clone)]
pub struct BinRow {
    /// Inclusive state range "lo..hi" or "tail" for the overflow bucket.
    pub label: String,
    pub expected: f64,
    pub observed: f64,
}

/// Outcome of a goodness-of-fit test.
#[derive(Debug, Clone)]
pub struct GofReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub significance: f64,
    pub pass: bool,
    pub bins: Vec<BinRow>,
}

fn check_significance(significance: f64) -> Result<()> {
    if !(significance > 0.0 && significance < 1.0) {
        return Err(StatsError::BadParameter(format!(
            "significance must lie in (0,1), got {significance}"
        )));
    }
    Ok(())
}

/// Pearson χ² of observed counts against a truncated pmf.  `observed` must
/// have one entry per stored state plus a final bucket for every draw beyond
/// the stored range; that bucket is matched against the certified tail mass.
/// Bins whose expected count falls below 5 are merged with their neighbor to
/// keep the asymptotic χ² approximation honest.
pub fn chi_square(
    expected: &TruncatedPmf,
    observed: &[u64],
    significance: f64,
) -> Result<GofReport> {
    check_significance(significance)?;
    if observed.len() != expected.len() + 1 {
        return Err(StatsError::BadParameter(format!(
            "need {} observed buckets (states plus overflow), got {}",
            expected.len() + 1,
            observed.len()
        )));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(StatsError::AllZeroObserved);
    }
    if n < 1_000 {
        return Err(StatsError::TooFewSamples { got: n, need: 1_000 });
    }
    let nf = n as f64;

    let mut bins: Vec<BinRow> = Vec::new();
    let mut acc_e = 0.0f64;
    let mut acc_o = 0.0f64;
    let mut lo = 0usize;
    let mut tail_open = false;
    let push = |bins: &mut Vec<BinRow>, lo: usize, hi: usize, tail: bool, e: f64, o: f64| {
        let label = if tail {
            if lo < hi {
                format!("{lo}..tail")
            } else {
                "tail".to_string()
            }
        } else if lo == hi {
            format!("{lo}")
        } else {
            format!("{lo}..{hi}")
        };
        bins.push(BinRow { label, expected: e, observed: o });
    };
    for s in 0..=expected.len() {
        let (e, o, is_tail) = if s < expected.len() {
            (expected.prob(s) * nf, observed[s] as f64, false)
        } else {
            (expected.tail_bound() * nf, observed[s] as f64, true)
        };
        if acc_e == 0.0 && acc_o == 0.0 {
            lo = s;
        }
        acc_e += e;
        acc_o += o;
        tail_open = is_tail;
        if acc_e >= 5.0 && !is_tail {
            push(&mut bins, lo, s, false, acc_e, acc_o);
            acc_e = 0.0;
            acc_o = 0.0;
        }
    }
    if acc_e > 0.0 || acc_o > 0.0 || tail_open {
        if acc_e >= 5.0 || bins.is_empty() {
            push(&mut bins, lo, expected.len(), tail_open, acc_e, acc_o);
        } else if let Some(last) = bins.last_mut() {
            // Fold an underweight trailing bucket into its neighbor.
            last.expected += acc_e;
            last.observed += acc_o;
            let prev_lo = last.label.split("..").next().unwrap().to_string();
            last.label = format!("{prev_lo}..tail");
        }
    }
    if bins.len() < 2 {
        return Err(StatsError::DegenerateBins);
    }

    let statistic: f64 = bins
        .iter()
        .map(|b| {
            let d = b.observed - b.expected;
            d * d / b.expected
        })
        .sum();
    let dof = bins.len() - 1;
    let p_value = gamma_ur(dof as f64 / 2.0, statistic / 2.0).clamp(0.0, 1.0);
    Ok(GofReport {
        statistic,
        dof,
        p_value,
        significance,
        pass: p_value >= significance,
        bins,
    })
}

/// Upper tail Q(x) of the Kolmogorov distribution.  The alternating form
/// converges fast for large x; the theta-transformed form covers small x.
fn kolmogorov_q(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        let v = std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let cdf = ((2.0 * std::f64::consts::PI).sqrt() / x)
            * ((-v).exp() + (-9.0 * v).exp() + (-25.0 * v).exp());
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut q = 0.0;
        for j in 1..=20 {
            let term = (-2.0 * (j as f64 * x).powi(2)).exp();
            q += if j % 2 == 1 { 2.0 * term } else { -2.0 * term };
            if term < 1e-18 {
                break;
            }
        }
        q.clamp(0.0, 1.0)
    }
}

/// One-sample Kolmogorov–Smirnov test with the asymptotic p-value (Stephens'
/// small-sample correction applied).  `cdf` must be the hypothesized
/// distribution function, continuous over the sample range.
pub fn ks_test<F: Fn(f64) -> f64>(
    samples: &[f64],
    cdf: F,
    significance: f64,
) -> Result<GofReport> {
    check_significance(significance)?;
    let n = samples.len();
    if n < 100 {
        return Err(StatsError::TooFewSamples { got: n as u64, need: 100 });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("samples must be orderable"));
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        if !(0.0..=1.0 + 1e-12).contains(&f) {
            return Err(StatsError::BadParameter(format!(
                "cdf returned {f} at {x}, outside [0,1]"
            )));
        }
        d = d.max(f - i as f64 / nf).max((i as f64 + 1.0) / nf - f);
    }
    let lambda = d * (nf.sqrt() + 0.12 + 0.11 / nf.sqrt());
    let p_value = kolmogorov_q(lambda);
    Ok(GofReport {
        statistic: d,
        dof: 0,
        p_value,
        significance,
        pass: p_value >= significance,
        bins: Vec::new(),
    })
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value on the
/// effective sample size nm/(n+m).
pub fn ks_two_sample(xs: &[f64], ys: &[f64], significance: f64) -> Result<GofReport> {
    check_significance(significance)?;
    if xs.len() < 100 || ys.len() < 100 {
        return Err(StatsError::TooFewSamples {
            got: xs.len().min(ys.len()) as u64,
            need: 100,
        });
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|u, v| u.partial_cmp(v).expect("samples must be orderable"));
    b.sort_by(|u, v| u.partial_cmp(v).expect("samples must be orderable"));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    let p_value = kolmogorov_q(d * (ne + 0.12 + 0.11 / ne));
    Ok(GofReport {
        statistic: d,
        dof: 0,
        p_value,
        significance,
        pass: p_value >= significance,
        bins: Vec::new(),
    })
}

/// State that can absorb a peer computed on a disjoint block of work.  Merge
/// order is fixed by the Monte Carlo driver, so merged results are identical
/// however the blocks were executed.
pub trait Merge {
    fn merge(&mut self, other: Self);
}

/// Welford running mean and scatter, mergeable across blocks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentAccumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    /// Half-width of the normal-approximation 95% confidence interval.
    pub fn ci95_half_width(&self) -> f64 {
        1.959963984540054 * self.std_error()
    }

    pub(crate) fn raw(&self) -> (u64, f64, f64) {
        (self.n, self.mean, self.m2)
    }
}

impl Merge for MomentAccumulator {
    fn merge(&mut self, other: Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let d = other.mean - self.mean;
        let n = na + nb;
        self.mean += d * nb / n;
        self.m2 += other.m2 + d * d * na * nb / n;
        self.n += other.n;
    }
}

/// Histogram over states 0..=n_max with an explicit overflow bucket, shaped
/// to feed [`chi_square`] directly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountAccumulator {
    counts: Vec<u64>,
    overflow: u64,
}

impl CountAccumulator {
    pub fn new(n_max: usize) -> Self {
        CountAccumulator { counts: vec![0; n_max + 1], overflow: 0 }
    }

    pub fn push(&mut self, state: u64) {
        match self.counts.get_mut(state as usize) {
            Some(c) => *c += 1,
            None => self.overflow += 1,
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    pub fn total(&self) -> u64 {
        self.overflow + self.counts.iter().sum::<u64>()
    }

    /// Counts plus the overflow bucket, in the layout `chi_square` expects.
    pub fn observed(&self) -> Vec<u64> {
        let mut v = self.counts.clone();
        v.push(self.overflow);
        v
    }
}

impl Merge for CountAccumulator {
    fn merge(&mut self, other: Self) {
        assert_eq!(
            self.counts.len(),
            other.counts.len(),
            "cannot merge histograms of different sizes"
        );
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.overflow += other.overflow;
    }
}

impl<A: Merge, B: Merge> Merge for (A, B) {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
        self.1.merge(other.1);
    }
}

impl<A: Merge, B: Merge, C: Merge> Merge for (A, B, C) {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
        self.1.merge(other.1);
        self.2.merge(other.2);
    }
}

impl<A: Merge> Merge for Vec<A> {
    fn merge(&mut self, other: Self) {
        assert_eq!(self.len(), other.len(), "cannot merge vectors of different sizes");
        for (a, b) in self.iter_mut().zip(other) {
            a.merge(b);
        }
    }
}

/// Work splitting for the Monte Carlo driver.  Results depend only on
/// (sims, blocks, seed): block b always runs the same simulations on stream b
/// of the block cipher RNG, and blocks are merged in index order, so serial
/// and parallel execution produce bit-identical accumulators.
#[derive(Debug, Clone, Copy)]
pub struct McConfig {
    pub sims: u64,
    pub blocks: u32,
    pub seed: u64,
    pub parallel: bool,
}

impl McConfig {
    pub fn new(sims: u64, seed: u64) -> Self {
        McConfig { sims, blocks: 8, seed, parallel: true }
    }

    fn block_sims(&self, b: u32) -> u64 {
        let base = self.sims / self.blocks as u64;
        let rem = self.sims % self.blocks as u64;
        base + u64::from((b as u64) < rem)
    }

    fn block_rng(&self, b: u32) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(b as u64 + 1);
        rng
    }
}

/// Runs `per_sim` once per simulation, feeding a per-block accumulator, and
/// merges the blocks in index order.
pub fn monte_carlo<A, N, F>(cfg: McConfig, new_acc: N, per_sim: F) -> Result<A>
where
    A: Merge + Send,
    N: Fn() -> A + Sync,
    F: Fn(&mut A, &mut ChaCha12Rng) + Sync,
{
    if cfg.blocks == 0 {
        return Err(StatsError::BadParameter("need at least one block".into()));
    }
    let run_block = |b: u32| {
        let mut acc = new_acc();
        let mut rng = cfg.block_rng(b);
        for _ in 0..cfg.block_sims(b) {
            per_sim(&mut acc, &mut rng);
        }
        acc
    };
    let mut out: Option<A> = None;
    if cfg.parallel {
        let block_results = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..cfg.blocks)
                .map(|b| scope.spawn(move || run_block(b)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect::<Vec<_>>()
        });
        for acc in block_results {
            match &mut out {
                Some(o) => o.merge(acc),
                None => out = Some(acc),
            }
        }
    } else {
        for b in 0..cfg.blocks {
            let acc = run_block(b);
            match &mut out {
                Some(o) => o.merge(acc),
                None => out = Some(acc),
            }
        }
    }
    Ok(out.expect("at least one block"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{gcp_pmf, gcp_sample, GcpParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn welford_matches_direct_formulas() {
        let data = [2.5, -1.0, 4.0, 0.5, 3.25, -2.0, 7.5];
        let mut acc = MomentAccumulator::new();
        for &x in &data {
            acc.push(x);
        }
        let n = data.len() as f64;
        let mean: f64 = data.iter().sum::<f64>() / n;
        let var: f64 = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert_relative_eq!(acc.mean(), mean, max_relative = 1e-14);
        assert_relative_eq!(acc.variance(), var, max_relative = 1e-14);
        assert!(acc.std_error() > 0.0);
        assert!(acc.ci95_half_width() > acc.std_error());
    }

    #[test]
    fn merged_moments_match_pooled_push() {
        let data: Vec<f64> = (0..100).map(|i| ((i * 37) % 61) as f64 / 7.0).collect();
        let mut whole = MomentAccumulator::new();
        for &x in &data {
            whole.push(x);
        }
        let mut left = MomentAccumulator::new();
        let mut right = MomentAccumulator::new();
        for &x in &data[..33] {
            left.push(x);
        }
        for &x in &data[33..] {
            right.push(x);
        }
        left.merge(right);
        assert_eq!(left.count(), whole.count());
        assert_relative_eq!(left.mean(), whole.mean(), max_relative = 1e-13);
        assert_relative_eq!(left.variance(), whole.variance(), max_relative = 1e-12);
    }

    #[test]
    fn parallel_and_serial_runs_are_bit_identical() {
        let p = GcpParams::new(vec![1.0, 0.5]).unwrap();
        let draw = |acc: &mut (MomentAccumulator, CountAccumulator), rng: &mut ChaCha12Rng| {
            let path = gcp_sample(&p, 1.5, rng).unwrap();
            let v = path.terminal();
            acc.0.push(v as f64);
            acc.1.push(v);
        };
        let mk = || (MomentAccumulator::new(), CountAccumulator::new(12));
        let serial = monte_carlo(
            McConfig { sims: 20_000, blocks: 8, seed: 42, parallel: false },
            mk,
            draw,
        )
        .unwrap();
        let parallel = monte_carlo(
            McConfig { sims: 20_000, blocks: 8, seed: 42, parallel: true },
            mk,
            draw,
        )
        .unwrap();
        let (sn, sm, sm2) = serial.0.raw();
        let (pn, pm, pm2) = parallel.0.raw();
        assert_eq!(sn, pn);
        assert_eq!(sm.to_bits(), pm.to_bits());
        assert_eq!(sm2.to_bits(), pm2.to_bits());
        assert_eq!(serial.1, parallel.1);
    }

    #[test]
    fn chi_square_accepts_the_true_law() {
        let p = GcpParams::new(vec![1.0, 1.0]).unwrap();
        let t = 1.0;
        let pmf = gcp_pmf(&p, t, p.default_n_max(t)).unwrap();
        let hist = monte_carlo(
            McConfig::new(100_000, 2024),
            || CountAccumulator::new(pmf.n_max()),
            |acc, rng| acc.push(gcp_sample(&p, t, rng).unwrap().terminal()),
        )
        .unwrap();
        let report = chi_square(&pmf, &hist.observed(), DEFAULT_SIGNIFICANCE).unwrap();
        assert!(report.pass, "stat {} p {}", report.statistic, report.p_value);
        assert!(report.p_value >= 1e-3);
        for bin in &report.bins {
            assert!(bin.expected >= 5.0, "bin {} under-filled", bin.label);
        }
    }

    #[test]
    fn chi_square_rejects_a_shifted_law() {
        let p = GcpParams::new(vec![1.0, 1.0]).unwrap();
        let shifted = GcpParams::new(vec![1.15, 1.15]).unwrap();
        let t = 1.0;
        let pmf = gcp_pmf(&p, t, p.default_n_max(t)).unwrap();
        let hist = monte_carlo(
            McConfig::new(100_000, 2025),
            || CountAccumulator::new(pmf.n_max()),
            |acc, rng| acc.push(gcp_sample(&shifted, t, rng).unwrap().terminal()),
        )
        .unwrap();
        let report = chi_square(&pmf, &hist.observed(), DEFAULT_SIGNIFICANCE).unwrap();
        assert!(!report.pass, "shifted law slipped through, p {}", report.p_value);
    }

    #[test]
    fn chi_square_input_guards() {
        let pmf = TruncatedPmf::new(vec![0.5, 0.5], 1e-12).unwrap();
        assert!(matches!(
            chi_square(&pmf, &[0, 0, 0], 1e-3),
            Err(StatsError::AllZeroObserved)
        ));
        assert!(matches!(
            chi_square(&pmf, &[400, 300, 0], 1e-3),
            Err(StatsError::TooFewSamples { .. })
        ));
        assert!(matches!(
            chi_square(&pmf, &[600, 500], 1e-3),
            Err(StatsError::BadParameter(_))
        ));
        let single = TruncatedPmf::new(vec![1.0], 1e-12).unwrap();
        assert!(matches!(
            chi_square(&single, &[1_000, 0], 1e-3),
            Err(StatsError::DegenerateBins)
        ));
    }

    #[test]
    fn chi_square_merges_thin_bins() {
        // States 3.. carry tiny mass, so they must pool with the tail bucket.
        let pmf = TruncatedPmf::new(vec![0.6, 0.3, 0.09, 0.005, 0.004], 1e-12).unwrap();
        let observed = [6_000u64, 3_000, 900, 50, 40, 10];
        let report = chi_square(&pmf, &observed, 1e-3).unwrap();
        for bin in &report.bins {
            assert!(bin.expected >= 5.0);
        }
        assert!(report.bins.len() >= 3);
        assert!(report.bins.last().unwrap().label.contains("tail"));
        let total_obs: f64 = report.bins.iter().map(|b| b.observed).sum();
        assert_eq!(total_obs, 10_000.0);
    }

    #[test]
    fn ks_accepts_uniform_samples() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let xs: Vec<f64> = (0..5_000).map(|_| rng.gen::<f64>()).collect();
        let report = ks_test(&xs, |x| x.clamp(0.0, 1.0), DEFAULT_SIGNIFICANCE).unwrap();
        assert!(report.pass, "p {}", report.p_value);
    }

    #[test]
    fn ks_rejects_wrong_rate_exponential() {
        let mut rng = ChaCha12Rng::seed_from_u64(100);
        let rate = 2.0;
        let xs: Vec<f64> = (0..5_000)
            .map(|_| -(1.0 - rng.gen::<f64>()).ln() / rate)
            .collect();
        let wrong = 2.5;
        let report = ks_test(&xs, |x| 1.0 - (-wrong * x).exp(), DEFAULT_SIGNIFICANCE).unwrap();
        assert!(!report.pass, "wrong rate slipped through, p {}", report.p_value);
        let right = ks_test(&xs, |x| 1.0 - (-rate * x).exp(), DEFAULT_SIGNIFICANCE).unwrap();
        assert!(right.pass);
    }

    #[test]
    fn ks_needs_enough_samples() {
        let xs = vec![0.5; 50];
        assert!(matches!(
            ks_test(&xs, |x| x, 1e-3),
            Err(StatsError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn two_sample_ks_separates_laws() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..4_000).map(|_| rng.gen::<f64>()).collect();
        let ys: Vec<f64> = (0..3_000).map(|_| rng.gen::<f64>()).collect();
        let same = ks_two_sample(&xs, &ys, DEFAULT_SIGNIFICANCE).unwrap();
        assert!(same.pass, "same law rejected, p {}", same.p_value);
        let zs: Vec<f64> = (0..3_000).map(|_| rng.gen::<f64>().powi(2)).collect();
        let diff = ks_two_sample(&xs, &zs, DEFAULT_SIGNIFICANCE).unwrap();
        assert!(!diff.pass, "squared law slipped through, p {}", diff.p_value);
    }

    #[test]
    fn kolmogorov_tail_brackets_known_points() {
        // Q(0.83) ≈ 0.5 and Q(1.36) ≈ 0.049 are standard table entries.
        assert!((kolmogorov_q(0.8276) - 0.5).abs() < 0.01);
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 0.002);
        assert!(kolmogorov_q(0.2) > 0.999);
        assert!(kolmogorov_q(2.5) < 1e-4);
    }

    proptest! {
        #[test]
        fn p_values_stay_in_unit_interval(seed in 0u64..500) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let pmf = TruncatedPmf::new(vec![0.25, 0.25, 0.2, 0.2, 0.05], 1e-12).unwrap();
            let observed: Vec<u64> =
                (0..6).map(|_| 200 + (rng.gen::<u64>() % 400)).collect();
            let report = chi_square(&pmf, &observed, 1e-3).unwrap();
            prop_assert!((0.0..=1.0).contains(&report.p_value));
            prop_assert!(report.statistic >= 0.0);
        }
    }
}
