//! The four subcommands: simulate, summarize, plot, enumerate.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use chrono::Utc;

use randtrial_core::harness::{run_study, summarize_values};
use randtrial_core::inference::{anova_test, rbi_pvalue, RbiMode, RbiOptions};
use randtrial_core::population::ObservedData;
use randtrial_core::schemes::{count_sequences, enumerate_sequences, SchemeSpec};
use randtrial_core::Error;

use crate::config::{expand, ConfigFile};
use crate::csvio::{
    read_populations_csv, read_summary_csv, write_population_row, write_populations_header,
    write_summary_header, write_summary_row, PopulationRow, SummaryRow,
};
use crate::manifest::{DiagnosticsEntry, RunManifest};
use crate::svg::{render, ChartPoint, ChartSeries};

pub struct SimulateOutcome {
    pub populations_csv: PathBuf,
    pub manifest_path: PathBuf,
}

/// Run every cell of the config and write populations.csv plus manifest.json
/// into `out_dir`. Partial outputs are removed on failure.
pub fn cmd_simulate(
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
    threads_override: Option<usize>,
) -> anyhow::Result<SimulateOutcome> {
    let raw = fs::read_to_string(config_path)
        .with_context(|| format!("reading config {}", config_path.display()))?;
    let cfg: ConfigFile = serde_json::from_str(&raw)
        .with_context(|| format!("parsing config {}", config_path.display()))?;
    let config_echo: serde_json::Value = serde_json::from_str(&raw).expect("parsed once already");
    let effective_seed = seed_override.unwrap_or(cfg.seed);
    let runs = expand(&cfg, seed_override, threads_override)?;

    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let populations_csv = out_dir.join("populations.csv");
    let manifest_path = out_dir.join("manifest.json");
    let started_at = Utc::now().to_rfc3339();

    let work = || -> anyhow::Result<Vec<DiagnosticsEntry>> {
        let mut w = BufWriter::new(
            File::create(&populations_csv)
                .with_context(|| format!("creating {}", populations_csv.display()))?,
        );
        write_populations_header(&mut w)?;
        let mut diagnostics = Vec::new();
        for run in &runs {
            let results = run_study(run)?;
            let mut degenerate_totals = vec![0u64; run.tests.len()];
            for result in &results {
                for (t, tally) in result.tallies.iter().enumerate() {
                    degenerate_totals[t] += tally.degenerate;
                    write_population_row(
                        &mut w,
                        &PopulationRow {
                            scheme: run.scheme.label(),
                            test: tally.spec.test_label().to_string(),
                            adjustment: tally.spec.adjustment_label().to_string(),
                            n: run.sample_size,
                            big_n: run.population_size,
                            null: run.null.label().to_string(),
                            nrand: run.nrand,
                            nsamp: run.nsamp,
                            alpha: run.alpha,
                            population_index: result.population_index,
                            type1_error: tally.type1_error,
                            rejections: tally.rejections,
                            trials: tally.trials,
                            degenerate_count: tally.degenerate,
                        },
                    )?;
                }
            }
            for (t, spec) in run.tests.iter().enumerate() {
                diagnostics.push(DiagnosticsEntry {
                    scheme: run.scheme.label(),
                    test: spec.test_label().to_string(),
                    adjustment: spec.adjustment_label().to_string(),
                    n: run.sample_size,
                    big_n: run.population_size,
                    degenerate_count: degenerate_totals[t],
                });
            }
        }
        w.flush()?;
        Ok(diagnostics)
    };

    let diagnostics = match work() {
        Ok(d) => d,
        Err(e) => {
            let _ = fs::remove_file(&populations_csv);
            let _ = fs::remove_file(&manifest_path);
            return Err(e);
        }
    };

    let manifest = RunManifest {
        artifact: "randtrial".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        success: true,
        started_at,
        finished_at: Utc::now().to_rfc3339(),
        seed: effective_seed,
        threads: runs[0].thread_count,
        config: config_echo,
        outputs: vec!["populations.csv".to_string()],
        diagnostics,
    };
    if let Err(e) = fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    ) {
        let _ = fs::remove_file(&populations_csv);
        let _ = fs::remove_file(&manifest_path);
        return Err(anyhow!(e).context("writing manifest.json"));
    }

    Ok(SimulateOutcome {
        populations_csv,
        manifest_path,
    })
}

/// Group key for summaries: one row per (scheme, test, adjustment, n, N).
#[derive(Clone, PartialEq, Eq, Hash)]
struct GroupKey {
    scheme: String,
    test: String,
    adjustment: String,
    n: usize,
    big_n: usize,
}

/// Aggregate populations.csv into summary.csv. The Monte Carlo bounds use
/// `l_override` when given, otherwise each group's own nrand.
pub fn cmd_summarize(
    input: &Path,
    output: &Path,
    l_override: Option<u64>,
) -> anyhow::Result<()> {
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let rows = read_populations_csv(BufReader::new(file))
        .with_context(|| format!("reading {}", input.display()))?;
    if rows.is_empty() {
        bail!("{} contains no result rows", input.display());
    }

    // Group in first-seen order.
    let mut order: Vec<GroupKey> = Vec::new();
    let mut groups: std::collections::HashMap<GroupKey, Vec<&PopulationRow>> =
        std::collections::HashMap::new();
    for row in &rows {
        let key = GroupKey {
            scheme: row.scheme.clone(),
            test: row.test.clone(),
            adjustment: row.adjustment.clone(),
            n: row.n,
            big_n: row.big_n,
        };
        let entry = groups.entry(key.clone()).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(row);
    }

    let mut w = BufWriter::new(
        File::create(output).with_context(|| format!("creating {}", output.display()))?,
    );
    write_summary_header(&mut w)?;
    for key in order {
        let members = &groups[&key];
        if members.len() < 2 {
            let _ = fs::remove_file(output);
            bail!(
                "group {}/{}/{} at n={} N={} has {} population(s); summaries require at least 2",
                key.scheme,
                key.test,
                key.adjustment,
                key.n,
                key.big_n,
                members.len()
            );
        }
        let alpha = members[0].alpha;
        let nrand = members[0].nrand;
        if members.iter().any(|m| m.alpha != alpha || m.nrand != nrand) {
            let _ = fs::remove_file(output);
            bail!(
                "group {}/{}/{} at n={} mixes alpha or nrand values",
                key.scheme,
                key.test,
                key.adjustment,
                key.n
            );
        }
        let l = l_override.unwrap_or(nrand);
        let values: Vec<f64> = members.iter().map(|m| m.type1_error).collect();
        let stats = summarize_values(&values, l, alpha)?;
        write_summary_row(
            &mut w,
            &SummaryRow {
                scheme: key.scheme,
                test: key.test,
                adjustment: key.adjustment,
                n: key.n,
                big_n: key.big_n,
                null: members[0].null.clone(),
                alpha,
                l,
                npops: members.len(),
                mean: stats.mean,
                p2_5: stats.p2_5,
                p97_5: stats.p97_5,
                spread: stats.spread,
                within_bounds_proportion: stats.within_bounds,
            },
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Render summary.csv as an SVG convergence chart.
pub fn cmd_plot(input: &Path, output: &Path, l_override: Option<u64>) -> anyhow::Result<()> {
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let rows = read_summary_csv(BufReader::new(file))
        .with_context(|| format!("reading {}", input.display()))?;
    if rows.is_empty() {
        bail!("{} contains no summary rows", input.display());
    }

    let mut alphas: Vec<u64> = rows.iter().map(|r| r.alpha.to_bits()).collect();
    alphas.sort_unstable();
    alphas.dedup();
    if alphas.len() > 1 {
        bail!("summary mixes alpha levels; plot one level at a time");
    }
    let alpha = f64::from_bits(alphas[0]);

    let l = match l_override {
        Some(l) => l,
        None => {
            let mut ls: Vec<u64> = rows.iter().map(|r| r.l).collect();
            ls.sort_unstable();
            ls.dedup();
            if ls.len() > 1 {
                bail!("summary mixes L values; pass --l to pick the Monte Carlo band");
            }
            ls[0]
        }
    };

    let mut order: Vec<String> = Vec::new();
    let mut by_series: std::collections::HashMap<String, Vec<ChartPoint>> =
        std::collections::HashMap::new();
    for row in &rows {
        let mut label = format!("{} / {}", row.scheme, row.test);
        if row.adjustment != "none" {
            label.push_str(&format!(" ({})", row.adjustment));
        }
        if (row.big_n as f64 / row.n as f64 - 1.0).abs() > 1e-9 {
            label.push_str(&format!(" N={}", row.big_n));
        }
        let entry = by_series.entry(label.clone()).or_default();
        if entry.is_empty() {
            order.push(label);
        }
        entry.push(ChartPoint {
            n: row.n,
            mean: row.mean,
            p2_5: row.p2_5,
            p97_5: row.p97_5,
        });
    }
    let series: Vec<ChartSeries> = order
        .into_iter()
        .map(|label| {
            let mut points = by_series.remove(&label).expect("collected above");
            points.sort_by_key(|p| p.n);
            ChartSeries { label, points }
        })
        .collect();

    let chart = render(&series, alpha, l)?;
    fs::write(output, chart.svg).with_context(|| format!("writing {}", output.display()))?;
    Ok(())
}

/// Exact-enumeration report: the size of the sequence space and, when an
/// outcome vector is supplied, the exact randomization-test p-value
/// distribution and the exact rejection proportions at alpha.
pub fn cmd_enumerate(
    scheme: SchemeSpec,
    n: usize,
    y_path: Option<&Path>,
    alpha: f64,
    cap: u128,
) -> anyhow::Result<String> {
    let count = count_sequences(scheme, n).map_err(map_cap_error)?;
    if count > cap {
        return Err(map_cap_error(Error::EnumerationTooLarge { count, cap }));
    }
    let sequences = enumerate_sequences(scheme, n, cap).map_err(map_cap_error)?;

    let mut report = String::new();
    report.push_str(&format!("scheme: {scheme}\n"));
    report.push_str(&format!("n: {n}\n"));
    report.push_str(&format!("sequences: {count}\n"));

    let Some(y_path) = y_path else {
        return Ok(report);
    };
    let y = read_outcomes(y_path)?;
    if y.len() != n {
        bail!(
            "{} supplies {} outcomes but n = {n}",
            y_path.display(),
            y.len()
        );
    }

    // Exact RBI p-value per candidate observed sequence, aggregated into the
    // p-value distribution, plus exact rejection proportions for RBI and ANOVA.
    let mut pvalue_mass: Vec<(f64, f64)> = Vec::new();
    let mut rbi_rejection = 0.0;
    let mut anova_rejection = 0.0;
    let mut rng = randtrial_core::seed::derive_rng(0, &[]);
    for (seq, prob) in &sequences {
        let data = ObservedData::new(y.clone(), seq.clone())?;
        match rbi_pvalue(&data, RbiMode::Exact { cap }, RbiOptions::default(), &mut rng) {
            Ok(result) => {
                match pvalue_mass
                    .iter_mut()
                    .find(|(p, _)| (*p - result.p_value).abs() < 1e-12)
                {
                    Some((_, mass)) => *mass += prob,
                    None => pvalue_mass.push((result.p_value, *prob)),
                }
                if result.p_value <= alpha {
                    rbi_rejection += prob;
                }
            }
            Err(Error::DegenerateArm(_)) => {
                // An undefined observed statistic cannot reject.
            }
            Err(e) => return Err(e.into()),
        }
        if let Ok(result) = anova_test(&data) {
            if result.p_value < alpha {
                anova_rejection += prob;
            }
        }
    }
    pvalue_mass.sort_by(|a, b| a.0.total_cmp(&b.0));

    report.push_str("rbi p-value distribution (p, probability):\n");
    for (p, mass) in &pvalue_mass {
        report.push_str(&format!("  {p} {mass}\n"));
    }
    report.push_str(&format!("rejection proportion at alpha={alpha}:\n"));
    report.push_str(&format!("  rbi {rbi_rejection}\n"));
    report.push_str(&format!("  anova {anova_rejection}\n"));
    Ok(report)
}

fn map_cap_error(e: Error) -> anyhow::Error {
    match e {
        Error::EnumerationTooLarge { count, cap } => anyhow!(
            "enumeration too large: {count} sequences exceed the cap of {cap}; \
             use the monte_carlo mode of the rbi test instead"
        ),
        other => other.into(),
    }
}

/// Outcomes file: floats separated by newlines, commas, or whitespace.
fn read_outcomes(path: &Path) -> anyhow::Result<Vec<f64>> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    raw.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| anyhow!("bad outcome value `{s}` in {}: {e}", path.display()))
        })
        .collect()
}
