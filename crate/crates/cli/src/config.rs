//! The study configuration file and its expansion into runnable cells.
//!
//! A config is one JSON document; sweeps are expressed as arrays over the
//! sample size, the population size (or N/n ratio), and the schemes. Each
//! combination expands to one `StudyConfig`. Populations are reused across
//! schemes by default (the population stream is keyed by the master seed
//! only), which reduces variance when comparing schemes; set
//! `fresh_populations_per_scheme` to draw independent population sets.

use serde::{Deserialize, Serialize};

use randtrial_core::harness::{StudyConfig, TestSpec};
use randtrial_core::population::NullSpec;
use randtrial_core::schemes::SchemeSpec;
use randtrial_core::seed::mix_label;
use randtrial_core::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub population: PopulationSection,
    pub sample: SampleSection,
    pub scheme: Vec<SchemeSpec>,
    pub tests: Vec<TestSpec>,
    pub monte_carlo: MonteCarloSection,
    pub seed: u64,
    /// Worker threads; 0 means available parallelism. Overridden by the
    /// RANDTRIAL_THREADS environment variable and the --threads flag.
    #[serde(default)]
    pub threads: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSection {
    pub null: NullSpec,
    /// Explicit population sizes N. Exactly one of `size` / `size_ratio`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<Vec<usize>>,
    /// Population sizes as N/n ratios; N = round(ratio * n) per sample size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_ratio: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    /// Trial sizes n to sweep.
    pub size: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    /// Sequences per sample (L).
    pub nrand: u64,
    /// Samples per population when n < N; forced to 1 for n = N cells.
    #[serde(default = "default_nsamp")]
    pub nsamp: u64,
    pub npops: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Replace Monte Carlo sequence draws with full enumeration.
    #[serde(default)]
    pub exact: bool,
    /// Draw an independent population set per scheme instead of reusing one.
    #[serde(default)]
    pub fresh_populations_per_scheme: bool,
}

fn default_nsamp() -> u64 {
    1
}

fn default_alpha() -> f64 {
    0.05
}

/// Expand a config into study cells, ordered by n, then N, then scheme.
///
/// Tests that are incompatible with a given scheme (block adjustments under
/// Big Stick and vice versa) are skipped for that scheme; a test entry that
/// matches no scheme at all is a configuration error.
pub fn expand(
    cfg: &ConfigFile,
    seed_override: Option<u64>,
    threads_override: Option<usize>,
) -> Result<Vec<StudyConfig>> {
    if cfg.sample.size.is_empty() {
        return Err(Error::InvalidConfiguration(
            "sample.size must list at least one n".into(),
        ));
    }
    if cfg.scheme.is_empty() {
        return Err(Error::InvalidConfiguration(
            "scheme must list at least one randomization scheme".into(),
        ));
    }
    if cfg.tests.is_empty() {
        return Err(Error::InvalidConfiguration(
            "tests must list at least one test".into(),
        ));
    }
    // summarize needs two populations per group; guarantee the round-trip.
    if cfg.monte_carlo.npops < 2 {
        return Err(Error::InvalidConfiguration(format!(
            "monte_carlo.npops must be at least 2, got {}",
            cfg.monte_carlo.npops
        )));
    }
    let base_seed = seed_override.unwrap_or(cfg.seed);
    let threads = threads_override.unwrap_or(cfg.threads);

    let mut used = vec![false; cfg.tests.len()];
    let mut runs = Vec::new();
    for &n in &cfg.sample.size {
        let population_sizes = population_sizes_for(&cfg.population, n)?;
        for &big_n in &population_sizes {
            if big_n < n {
                return Err(Error::InvalidConfiguration(format!(
                    "population size {big_n} is smaller than sample size {n}"
                )));
            }
            for &scheme in &cfg.scheme {
                let tests: Vec<TestSpec> = cfg
                    .tests
                    .iter()
                    .enumerate()
                    .filter(|(i, t)| {
                        let ok = t.compatible_with(scheme);
                        if ok {
                            used[*i] = true;
                        }
                        ok
                    })
                    .map(|(_, t)| *t)
                    .collect();
                if tests.is_empty() {
                    continue;
                }
                let master_seed = if cfg.monte_carlo.fresh_populations_per_scheme {
                    mix_label(base_seed, &scheme.label())
                } else {
                    base_seed
                };
                let run = StudyConfig {
                    population_size: big_n,
                    sample_size: n,
                    null: cfg.population.null,
                    scheme,
                    tests,
                    nrand: cfg.monte_carlo.nrand,
                    nsamp: if n == big_n { 1 } else { cfg.monte_carlo.nsamp },
                    npops: cfg.monte_carlo.npops,
                    alpha: cfg.monte_carlo.alpha,
                    master_seed,
                    thread_count: threads,
                    exact: cfg.monte_carlo.exact,
                };
                run.validate()?;
                runs.push(run);
            }
        }
    }
    if let Some(idx) = used.iter().position(|u| !u) {
        return Err(Error::InvalidConfiguration(format!(
            "test entry {} ({} / {}) is incompatible with every configured scheme",
            idx,
            cfg.tests[idx].test_label(),
            cfg.tests[idx].adjustment_label()
        )));
    }
    if runs.is_empty() {
        return Err(Error::InvalidConfiguration(
            "the config expands to no runnable cells".into(),
        ));
    }
    Ok(runs)
}

fn population_sizes_for(section: &PopulationSection, n: usize) -> Result<Vec<usize>> {
    match (&section.size, &section.size_ratio) {
        (Some(sizes), None) => {
            if sizes.is_empty() {
                return Err(Error::InvalidConfiguration(
                    "population.size must not be empty".into(),
                ));
            }
            Ok(sizes.clone())
        }
        (None, Some(ratios)) => {
            if ratios.is_empty() {
                return Err(Error::InvalidConfiguration(
                    "population.size_ratio must not be empty".into(),
                ));
            }
            ratios
                .iter()
                .map(|&r| {
                    if r.is_nan() || r < 1.0 {
                        return Err(Error::InvalidConfiguration(format!(
                            "population.size_ratio entries must be >= 1, got {r}"
                        )));
                    }
                    Ok((r * n as f64).round() as usize)
                })
                .collect()
        }
        (Some(_), Some(_)) => Err(Error::InvalidConfiguration(
            "specify exactly one of population.size and population.size_ratio, not both".into(),
        )),
        (None, None) => Err(Error::InvalidConfiguration(
            "population needs either size or size_ratio".into(),
        )),
    }
}
