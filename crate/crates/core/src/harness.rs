//! The nested Monte Carlo study: populations × samples × sequences × tests.
//!
//! Populations are the parallel unit; everything inside a population runs
//! sequentially on streams derived from `(master_seed, indices)`, so the
//! output is a pure function of the configuration — independent of thread
//! count and scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    ancova_test, anova_test, neyman_wald_test, rbi_pvalue, AdjustmentKind, RbiMode, RbiOptions,
    TestResult,
};
use crate::population::{
    draw_sample, generate_population, observed_outcomes, NullSpec, ObservedData, Sample,
};
use crate::schemes::{
    count_sequences, enumerate_sequences, generate_sequence, SchemeSpec, DEFAULT_ENUMERATION_CAP,
};
use crate::seed::derive_rng;

// Stream-derivation tags: each unit of work hashes its own tagged path.
const TAG_POPULATION: u64 = 1;
const TAG_SAMPLE: u64 = 2;
const TAG_SEQUENCE: u64 = 3;
const TAG_RBI: u64 = 4;

/// One test to run on every re-randomized dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum TestSpec {
    Anova,
    Ancova {
        #[serde(default)]
        adjustment: AdjustmentKind,
    },
    NeymanWald,
    /// Nested randomization test; expensive, off the default paths.
    /// `draws = None` runs the exact enumeration instead of Monte Carlo.
    Rbi {
        #[serde(default)]
        draws: Option<u64>,
    },
}

impl TestSpec {
    pub fn test_label(&self) -> &'static str {
        match self {
            TestSpec::Anova => "anova",
            TestSpec::Ancova { .. } => "ancova",
            TestSpec::NeymanWald => "neyman_wald",
            TestSpec::Rbi { .. } => "rbi",
        }
    }

    pub fn adjustment_label(&self) -> &'static str {
        match self {
            TestSpec::Ancova { adjustment } => adjustment.label(),
            _ => AdjustmentKind::None.label(),
        }
    }

    pub fn compatible_with(&self, scheme: SchemeSpec) -> bool {
        match self {
            TestSpec::Ancova { adjustment } => adjustment.compatible_with(scheme),
            _ => true,
        }
    }

    /// Rejection rule: the randomization test rejects at p <= alpha, the
    /// continuous tests at p < alpha.
    pub fn rejects(&self, result: &TestResult, alpha: f64) -> bool {
        match self {
            TestSpec::Rbi { .. } => result.p_value <= alpha,
            _ => result.p_value < alpha,
        }
    }
}

/// Full description of one study cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Population size N.
    pub population_size: usize,
    /// Trial size n <= N.
    pub sample_size: usize,
    pub null: NullSpec,
    pub scheme: SchemeSpec,
    pub tests: Vec<TestSpec>,
    /// Assignment sequences per sample (L).
    pub nrand: u64,
    /// Samples per population; must be 1 when n = N.
    #[serde(default = "default_nsamp")]
    pub nsamp: u64,
    /// Number of populations.
    pub npops: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub master_seed: u64,
    /// Worker threads; 0 means available parallelism.
    #[serde(default)]
    pub thread_count: usize,
    /// Replace the nrand Monte Carlo draws with full enumeration of the
    /// sequence space, weighting each sequence by its probability.
    #[serde(default)]
    pub exact: bool,
}

fn default_nsamp() -> u64 {
    1
}

fn default_alpha() -> f64 {
    0.05
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.scheme.validate_for(self.sample_size)?;
        if self.sample_size > self.population_size {
            return Err(Error::InvalidConfiguration(format!(
                "sample size {} exceeds population size {}",
                self.sample_size, self.population_size
            )));
        }
        if self.sample_size == self.population_size && self.nsamp != 1 {
            return Err(Error::InvalidConfiguration(format!(
                "nsamp must be 1 when n = N, got {}",
                self.nsamp
            )));
        }
        if self.nsamp < 1 {
            return Err(Error::InvalidConfiguration("nsamp must be at least 1".into()));
        }
        if !self.exact && self.nrand < 100 {
            return Err(Error::InvalidConfiguration(format!(
                "nrand must be at least 100, got {}",
                self.nrand
            )));
        }
        if self.npops < 1 {
            return Err(Error::InvalidConfiguration("npops must be at least 1".into()));
        }
        // The alpha = 1 edge is admitted deliberately: it exercises the
        // rejection rules (every test rejects with probability 1).
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfiguration(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.tests.is_empty() {
            return Err(Error::InvalidConfiguration(
                "at least one test must be configured".into(),
            ));
        }
        for test in &self.tests {
            if !test.compatible_with(self.scheme) {
                return Err(Error::InvalidConfiguration(format!(
                    "test {} with adjustment {} is not defined for scheme {}",
                    test.test_label(),
                    test.adjustment_label(),
                    self.scheme
                )));
            }
            if let TestSpec::Rbi { draws: Some(0) } = test {
                return Err(Error::InvalidConfiguration(
                    "rbi requires at least one draw".into(),
                ));
            }
        }
        if self.exact {
            let count = count_sequences(self.scheme, self.sample_size)?;
            if count > DEFAULT_ENUMERATION_CAP {
                return Err(Error::EnumerationTooLarge {
                    count,
                    cap: DEFAULT_ENUMERATION_CAP,
                });
            }
        }
        Ok(())
    }
}

/// Per-test tallies for one population.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestTally {
    pub spec: TestSpec,
    /// Count of rejecting (sequence, sample) evaluations.
    pub rejections: u64,
    /// Evaluations performed (nsamp * nrand, or nsamp * |sequence space|).
    pub trials: u64,
    /// Evaluations where the test was undefined (degenerate arm); counted as
    /// non-rejections, never dropped from the denominator.
    pub degenerate: u64,
    /// Monte Carlo: rejections / trials. Exact: probability-weighted
    /// rejection rate averaged over samples.
    pub type1_error: f64,
}

/// Everything recorded about one simulated population.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PopulationResult {
    pub population_index: u64,
    /// Seed trail: the master seed and this population's index fully
    /// determine every stream used below.
    pub seed_path: [u64; 2],
    pub tallies: Vec<TestTally>,
}

fn apply_test(
    data: &ObservedData,
    spec: &TestSpec,
    rbi_path: &[u64],
    master_seed: u64,
) -> Result<TestResult> {
    match spec {
        TestSpec::Anova => anova_test(data),
        TestSpec::Ancova { adjustment } => ancova_test(data, *adjustment),
        TestSpec::NeymanWald => neyman_wald_test(data),
        TestSpec::Rbi { draws } => {
            let mode = match draws {
                Some(draws) => RbiMode::MonteCarlo { draws: *draws },
                None => RbiMode::exact(),
            };
            let mut rng = derive_rng(master_seed, rbi_path);
            rbi_pvalue(data, mode, RbiOptions::default(), &mut rng)
        }
    }
}

/// Run one population: generate it, then loop over samples and sequences,
/// tallying per-test rejections. Memory stays O(N); nothing per-sequence is
/// retained.
pub fn run_population(config: &StudyConfig, population_index: u64) -> Result<PopulationResult> {
    let n = config.sample_size;
    let big_n = config.population_size;
    let seed = config.master_seed;

    let population = generate_population(
        big_n,
        config.null,
        &mut derive_rng(seed, &[TAG_POPULATION, population_index]),
    )?;

    let n_tests = config.tests.len();
    let mut rejections = vec![0u64; n_tests];
    let mut trials = vec![0u64; n_tests];
    let mut degenerate = vec![0u64; n_tests];
    let mut weighted = vec![0.0f64; n_tests];

    for sample_index in 0..config.nsamp {
        let sample = if n == big_n {
            Sample::full(big_n)
        } else {
            draw_sample(
                &population,
                n,
                &mut derive_rng(seed, &[TAG_SAMPLE, population_index, sample_index]),
            )?
        };

        let evaluate = |data: &ObservedData,
                            sequence_index: u64,
                            prob: f64,
                            rejections: &mut [u64],
                            trials: &mut [u64],
                            degenerate: &mut [u64],
                            weighted: &mut [f64]|
         -> Result<()> {
            for (t, spec) in config.tests.iter().enumerate() {
                let rbi_path = [
                    TAG_RBI,
                    population_index,
                    sample_index,
                    sequence_index,
                    t as u64,
                ];
                trials[t] += 1;
                match apply_test(data, spec, &rbi_path, seed) {
                    Ok(result) => {
                        if spec.rejects(&result, config.alpha) {
                            rejections[t] += 1;
                            weighted[t] += prob;
                        }
                    }
                    Err(Error::DegenerateArm(_)) | Err(Error::UnidentifiableModel(_)) => {
                        degenerate[t] += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(())
        };

        if config.exact {
            let sequences = enumerate_sequences(config.scheme, n, DEFAULT_ENUMERATION_CAP)?;
            for (sequence_index, (seq, prob)) in sequences.into_iter().enumerate() {
                let data = observed_outcomes(&population, &sample, seq)?;
                evaluate(
                    &data,
                    sequence_index as u64,
                    prob,
                    &mut rejections,
                    &mut trials,
                    &mut degenerate,
                    &mut weighted,
                )?;
            }
        } else {
            for sequence_index in 0..config.nrand {
                let seq = generate_sequence(
                    config.scheme,
                    n,
                    &mut derive_rng(
                        seed,
                        &[TAG_SEQUENCE, population_index, sample_index, sequence_index],
                    ),
                )?;
                let data = observed_outcomes(&population, &sample, seq)?;
                evaluate(
                    &data,
                    sequence_index,
                    1.0,
                    &mut rejections,
                    &mut trials,
                    &mut degenerate,
                    &mut weighted,
                )?;
            }
        }
    }

    let tallies = config
        .tests
        .iter()
        .enumerate()
        .map(|(t, spec)| {
            let type1_error = if config.exact {
                weighted[t] / config.nsamp as f64
            } else {
                rejections[t] as f64 / trials[t] as f64
            };
            TestTally {
                spec: *spec,
                rejections: rejections[t],
                trials: trials[t],
                degenerate: degenerate[t],
                type1_error,
            }
        })
        .collect();

    Ok(PopulationResult {
        population_index,
        seed_path: [seed, population_index],
        tallies,
    })
}

/// Resolve a requested thread count (0 = available parallelism).
pub fn effective_thread_count(requested: usize) -> usize {
    if requested == 0 {
        std::thread::available_parallelism()
            .map(std::num::NonZeroUsize::get)
            .unwrap_or(1)
    } else {
        requested
    }
}

/// Run the whole study: `npops` independent populations distributed over a
/// bounded worker pool, results in population order.
pub fn run_study(config: &StudyConfig) -> Result<Vec<PopulationResult>> {
    config.validate()?;
    let threads = effective_thread_count(config.thread_count);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfiguration(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..config.npops)
            .into_par_iter()
            .map(|p| run_population(config, p))
            .collect::<Result<Vec<_>>>()
    })
}

/// Half-width of the Monte Carlo bound around alpha for L sequences:
/// 1.96 * sqrt(alpha (1 - alpha) / L).
pub fn mc_bound_half_width(alpha: f64, l: u64) -> f64 {
    1.96 * (alpha * (1.0 - alpha) / l as f64).sqrt()
}

/// Type-7 percentile: linear interpolation between order statistics.
/// `sorted` must be ascending and non-empty.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&q));
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Distribution statistics of per-population Type I error estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub p2_5: f64,
    pub p97_5: f64,
    /// p97.5 - p2.5.
    pub spread: f64,
    /// Proportion of populations within alpha +/- the Monte Carlo bound.
    pub within_bounds: f64,
}

/// Summarize raw per-population Type I error values with bounds computed
/// from `l` sequences at level `alpha`.
pub fn summarize_values(values: &[f64], l: u64, alpha: f64) -> Result<SummaryStats> {
    if values.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "summaries require at least 2 populations, got {}",
            values.len()
        )));
    }
    if l == 0 {
        return Err(Error::InvalidInput("L must be positive".to_string()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    let p2_5 = percentile(&sorted, 0.025);
    let p97_5 = percentile(&sorted, 0.975);
    let hw = mc_bound_half_width(alpha, l);
    let within = sorted.iter().filter(|&&v| (v - alpha).abs() <= hw).count() as f64
        / sorted.len() as f64;
    Ok(SummaryStats {
        mean,
        p2_5,
        p97_5,
        spread: p97_5 - p2_5,
        within_bounds: within,
    })
}

/// Convergence summary of one test across populations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestSummary {
    pub spec: TestSpec,
    pub stats: SummaryStats,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceSummary {
    pub l: u64,
    pub alpha: f64,
    pub population_count: usize,
    pub tests: Vec<TestSummary>,
}

/// Summarize study results per test, with Monte Carlo bounds computed for
/// `l` sequences.
pub fn summarize(results: &[PopulationResult], l: u64, alpha: f64) -> Result<ConvergenceSummary> {
    if results.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "summaries require at least 2 populations, got {}",
            results.len()
        )));
    }
    let n_tests = results[0].tallies.len();
    let mut tests = Vec::with_capacity(n_tests);
    for t in 0..n_tests {
        let spec = results[0].tallies[t].spec;
        let values: Vec<f64> = results
            .iter()
            .map(|r| {
                debug_assert_eq!(r.tallies[t].spec, spec);
                r.tallies[t].type1_error
            })
            .collect();
        tests.push(TestSummary {
            spec,
            stats: summarize_values(&values, l, alpha)?,
        });
    }
    Ok(ConvergenceSummary {
        l,
        alpha,
        population_count: results.len(),
        tests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> StudyConfig {
        StudyConfig {
            population_size: 16,
            sample_size: 16,
            null: NullSpec::Sharp,
            scheme: SchemeSpec::Complete,
            tests: vec![TestSpec::Anova],
            nrand: 100,
            nsamp: 1,
            npops: 4,
            alpha: 0.05,
            master_seed: 7,
            thread_count: 1,
            exact: false,
        }
    }

    #[test]
    fn validation_catches_bad_configs() {
        let mut c = base_config();
        c.sample_size = 17;
        assert!(c.validate().is_err()); // n > N

        let mut c = base_config();
        c.population_size = 32;
        c.nsamp = 4;
        assert!(c.validate().is_ok());
        c.population_size = 16;
        assert!(c.validate().is_err()); // nsamp > 1 with n = N

        let mut c = base_config();
        c.nrand = 99;
        assert!(c.validate().is_err());

        let mut c = base_config();
        c.alpha = 0.0;
        assert!(c.validate().is_err());
        c.alpha = 1.0;
        assert!(c.validate().is_ok());

        let mut c = base_config();
        c.tests = vec![];
        assert!(c.validate().is_err());

        let mut c = base_config();
        c.tests = vec![TestSpec::Ancova {
            adjustment: AdjustmentKind::BlockIndicators,
        }];
        assert!(c.validate().is_err()); // block adjustment with Complete

        let mut c = base_config();
        c.scheme = SchemeSpec::Complete;
        c.sample_size = 15;
        c.population_size = 15;
        assert!(c.validate().is_err()); // odd n under Complete
    }

    #[test]
    fn alpha_one_rejects_everything() {
        let mut c = base_config();
        c.alpha = 1.0;
        c.npops = 3;
        c.tests = vec![TestSpec::Anova, TestSpec::NeymanWald];
        for r in run_study(&c).unwrap() {
            for tally in &r.tallies {
                assert_eq!(tally.type1_error, 1.0);
                assert_eq!(tally.rejections, tally.trials);
            }
        }
    }

    #[test]
    fn exact_mode_matches_brute_force() {
        // n = N = 4 under Complete: the harness exact mode must reproduce a
        // hand enumeration over the 6 balanced sequences.
        let mut c = base_config();
        c.population_size = 4;
        c.sample_size = 4;
        c.npops = 3;
        c.exact = true;
        let results = run_study(&c).unwrap();
        for r in &results {
            let population = generate_population(
                4,
                NullSpec::Sharp,
                &mut derive_rng(c.master_seed, &[TAG_POPULATION, r.population_index]),
            )
            .unwrap();
            let sample = Sample::full(4);
            let mut expected = 0.0;
            let seqs = enumerate_sequences(SchemeSpec::Complete, 4, DEFAULT_ENUMERATION_CAP)
                .unwrap();
            for (seq, prob) in seqs {
                let data = observed_outcomes(&population, &sample, seq).unwrap();
                if let Ok(res) = anova_test(&data) {
                    if res.p_value < c.alpha {
                        expected += prob;
                    }
                }
            }
            assert!(
                (r.tallies[0].type1_error - expected).abs() < 1e-12,
                "population {}: harness {} vs oracle {expected}",
                r.population_index,
                r.tallies[0].type1_error
            );
            assert_eq!(r.tallies[0].trials, 6);
        }
    }

    #[test]
    fn runs_are_deterministic_across_thread_counts_and_reruns() {
        let mut c = base_config();
        c.npops = 8;
        c.tests = vec![TestSpec::Anova, TestSpec::NeymanWald];
        c.thread_count = 1;
        let a = run_study(&c).unwrap();
        let b = run_study(&c).unwrap();
        assert_eq!(a, b);
        c.thread_count = 4;
        let d = run_study(&c).unwrap();
        assert_eq!(a, d);
    }

    #[test]
    fn degenerate_sequences_are_tallied_not_dropped() {
        // Simple randomization at n = 4 leaves an arm with < 2 observations
        // often; the Wald test then counts a degenerate evaluation while the
        // denominator stays nsamp * nrand.
        let mut c = base_config();
        c.scheme = SchemeSpec::Simple;
        c.population_size = 4;
        c.sample_size = 4;
        c.npops = 2;
        c.nrand = 200;
        c.tests = vec![TestSpec::NeymanWald];
        let results = run_study(&c).unwrap();
        for r in results {
            let tally = &r.tallies[0];
            assert_eq!(tally.trials, 200);
            assert!(tally.degenerate > 0, "expected degenerate draws at n = 4");
        }
    }

    #[test]
    fn rbi_test_runs_inside_the_harness() {
        let mut c = base_config();
        c.population_size = 8;
        c.sample_size = 8;
        c.npops = 2;
        c.nrand = 100;
        c.tests = vec![TestSpec::Rbi { draws: Some(200) }];
        let results = run_study(&c).unwrap();
        for r in results {
            let t1e = r.tallies[0].type1_error;
            assert!((0.0..=1.0).contains(&t1e));
        }
    }

    #[test]
    fn percentile_golden_values() {
        // Type-7 interpolation on {0.0, 0.05, 0.10}.
        let sorted = [0.0, 0.05, 0.10];
        assert!((percentile(&sorted, 0.025) - 0.0025).abs() < 1e-15);
        assert!((percentile(&sorted, 0.975) - 0.0975).abs() < 1e-15);
        assert_eq!(percentile(&sorted, 0.0), 0.0);
        assert_eq!(percentile(&sorted, 1.0), 0.10);
    }

    #[test]
    fn summarize_golden_values() {
        let values = [0.0, 0.05, 0.10];
        let stats = summarize_values(&values, 10_000, 0.05).unwrap();
        assert!((stats.mean - 0.05).abs() < 1e-15);
        assert!((stats.p2_5 - 0.0025).abs() < 1e-15);
        assert!((stats.p97_5 - 0.0975).abs() < 1e-15);
        assert!((stats.spread - 0.095).abs() < 1e-15);
        // Only the exact 0.05 lies within 0.05 +/- 0.00427.
        assert!((stats.within_bounds - 1.0 / 3.0).abs() < 1e-15);

        let flat = [0.05; 5];
        let stats = summarize_values(&flat, 2_000, 0.05).unwrap();
        assert_eq!(stats.spread, 0.0);
        assert_eq!(stats.within_bounds, 1.0);

        assert!(summarize_values(&[0.05], 1000, 0.05).is_err());
        assert!(summarize_values(&[], 1000, 0.05).is_err());
    }

    #[test]
    fn mc_bound_half_width_matches_formula() {
        let hw = mc_bound_half_width(0.05, 10_000);
        assert!((hw - 1.96 * (0.05f64 * 0.95 / 10_000.0).sqrt()).abs() < 1e-18);
        assert!((hw - 0.004271).abs() < 1e-6);
    }
}
