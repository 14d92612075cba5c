//! Randomization schemes and treatment-assignment sequences.
//!
//! Each scheme defines a distribution over assignment vectors in `{0,1}^n`.
//! [`generate_sequence`] samples from that distribution and
//! [`enumerate_sequences`] materializes it exactly for small `n`. Both are
//! driven by the same per-step transition rule ([`SchemeWalk`]) so the
//! sampler and the enumerator cannot drift apart.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on how many sequences [`enumerate_sequences`] will materialize.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 20;

/// A parametrized randomization scheme for two arms with 1:1 allocation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeSpec {
    /// Independent fair-coin assignment per participant.
    Simple,
    /// Exactly n/2 participants per arm, uniform over balanced sequences.
    Complete,
    /// Consecutive blocks of `block_size`, each internally balanced. A
    /// trailing partial block (the remainder must be even) is itself a
    /// balanced block of the remaining size.
    FixedBlock { block_size: usize },
    /// Coin flips unless the running imbalance reaches the maximum tolerable
    /// imbalance, which forces the balancing assignment.
    BigStick { mti: usize },
}

impl SchemeSpec {
    /// Check the scheme's own parameter invariants.
    pub fn validate(&self) -> Result<()> {
        match *self {
            SchemeSpec::FixedBlock { block_size } => {
                if block_size < 2 || block_size % 2 != 0 {
                    return Err(Error::InvalidConfiguration(format!(
                        "fixed block requires an even block size of at least 2, got {block_size}"
                    )));
                }
            }
            SchemeSpec::BigStick { mti } => {
                if mti < 1 {
                    return Err(Error::InvalidConfiguration(
                        "big stick requires mti >= 1".to_string(),
                    ));
                }
            }
            SchemeSpec::Simple | SchemeSpec::Complete => {}
        }
        Ok(())
    }

    /// Check that sequences of length `n` can be generated under this scheme.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        self.validate()?;
        if n < 2 {
            return Err(Error::InvalidConfiguration(format!(
                "sequence length must be at least 2, got {n}"
            )));
        }
        match *self {
            SchemeSpec::Complete if n % 2 != 0 => Err(Error::InvalidConfiguration(format!(
                "complete randomization requires an even number of participants, got {n}"
            ))),
            SchemeSpec::FixedBlock { block_size } if (n % block_size) % 2 != 0 => {
                Err(Error::InvalidConfiguration(format!(
                    "fixed block of size {block_size} leaves a trailing block of odd size {} for n = {n}; \
                     the remainder must be even",
                    n % block_size
                )))
            }
            _ => Ok(()),
        }
    }

    /// Stable textual form, also accepted by [`FromStr`]: `simple`,
    /// `complete`, `fixed_block:B`, `big_stick:M`.
    pub fn label(&self) -> String {
        match *self {
            SchemeSpec::Simple => "simple".to_string(),
            SchemeSpec::Complete => "complete".to_string(),
            SchemeSpec::FixedBlock { block_size } => format!("fixed_block:{block_size}"),
            SchemeSpec::BigStick { mti } => format!("big_stick:{mti}"),
        }
    }
}

impl fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for SchemeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |s: &str| {
            Error::InvalidConfiguration(format!(
                "unknown scheme `{s}`; expected simple, complete, fixed_block:B, or big_stick:M"
            ))
        };
        let spec = match s.split_once(':') {
            None => match s {
                "simple" => SchemeSpec::Simple,
                "complete" => SchemeSpec::Complete,
                _ => return Err(bad(s)),
            },
            Some((kind, arg)) => {
                let value: usize = arg
                    .parse()
                    .map_err(|_| Error::InvalidConfiguration(format!("bad scheme parameter `{arg}` in `{s}`")))?;
                match kind {
                    "fixed_block" => SchemeSpec::FixedBlock { block_size: value },
                    "big_stick" => SchemeSpec::BigStick { mti: value },
                    _ => return Err(bad(s)),
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A realized assignment vector together with the scheme that produced it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreatmentSequence {
    /// Assignments in enrollment order; each entry is 0 (control) or 1 (treated).
    pub assignments: Vec<u8>,
    /// Snapshot of the generating scheme.
    pub scheme: SchemeSpec,
}

impl TreatmentSequence {
    /// Build a sequence from raw assignments, checking the scheme invariants.
    pub fn new(assignments: Vec<u8>, scheme: SchemeSpec) -> Result<Self> {
        scheme.validate_for(assignments.len())?;
        if assignments.iter().any(|&z| z > 1) {
            return Err(Error::InvalidInput(
                "assignments must be 0 or 1".to_string(),
            ));
        }
        let seq = TreatmentSequence { assignments, scheme };
        if !seq.satisfies_scheme_invariants() {
            return Err(Error::InvalidInput(format!(
                "assignments violate the {} invariant",
                seq.scheme
            )));
        }
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Number of treated participants.
    pub fn ones(&self) -> usize {
        self.assignments.iter().filter(|&&z| z == 1).count()
    }

    /// Whether the assignments are admissible under the recorded scheme.
    pub fn satisfies_scheme_invariants(&self) -> bool {
        match self.scheme {
            SchemeSpec::Simple => true,
            SchemeSpec::Complete => 2 * self.ones() == self.len(),
            SchemeSpec::FixedBlock { block_size } => self
                .assignments
                .chunks(block_size)
                .all(|block| 2 * block.iter().filter(|&&z| z == 1).count() == block.len()),
            SchemeSpec::BigStick { mti } => {
                imbalance_path(self).max_abs() <= mti as i64
            }
        }
    }
}

/// Running imbalance (#treated − #control) after each assignment;
/// `values[0] = 0` and `values[k]` is the imbalance after `k` assignments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImbalancePath {
    pub values: Vec<i64>,
}

impl ImbalancePath {
    pub fn from_assignments(assignments: &[u8]) -> Self {
        let mut values = Vec::with_capacity(assignments.len() + 1);
        let mut d = 0i64;
        values.push(d);
        for &z in assignments {
            d += if z == 1 { 1 } else { -1 };
            values.push(d);
        }
        ImbalancePath { values }
    }

    pub fn max_abs(&self) -> i64 {
        self.values.iter().map(|v| v.abs()).max().unwrap_or(0)
    }
}

/// Imbalance path of a sequence.
pub fn imbalance_path(seq: &TreatmentSequence) -> ImbalancePath {
    ImbalancePath::from_assignments(&seq.assignments)
}

/// Per-step transition state shared by the sampler and the enumerator.
///
/// At every position the scheme fixes an exact rational probability that the
/// next assignment is 1; walking those transitions reproduces the scheme's
/// distribution over sequences.
#[derive(Clone, Copy, Debug)]
struct SchemeWalk {
    scheme: SchemeSpec,
    n: usize,
    pos: usize,
    imbalance: i64,
    ones_left: usize,
    block_left: usize,
    block_ones_left: usize,
}

impl SchemeWalk {
    fn new(scheme: SchemeSpec, n: usize) -> Result<Self> {
        scheme.validate_for(n)?;
        let mut walk = SchemeWalk {
            scheme,
            n,
            pos: 0,
            imbalance: 0,
            ones_left: 0,
            block_left: 0,
            block_ones_left: 0,
        };
        if let SchemeSpec::Complete = scheme {
            walk.ones_left = n / 2;
        }
        if let SchemeSpec::FixedBlock { .. } = scheme {
            walk.refill_block();
        }
        Ok(walk)
    }

    fn refill_block(&mut self) {
        if let SchemeSpec::FixedBlock { block_size } = self.scheme {
            self.block_left = block_size.min(self.n - self.pos);
            self.block_ones_left = self.block_left / 2;
        }
    }

    fn done(&self) -> bool {
        self.pos == self.n
    }

    /// Probability that the next assignment is 1, as an exact rational
    /// (numerator, denominator).
    fn prob_one(&self) -> (u32, u32) {
        match self.scheme {
            SchemeSpec::Simple => (1, 2),
            SchemeSpec::Complete => (self.ones_left as u32, (self.n - self.pos) as u32),
            SchemeSpec::FixedBlock { .. } => {
                (self.block_ones_left as u32, self.block_left as u32)
            }
            SchemeSpec::BigStick { mti } => {
                let mti = mti as i64;
                if self.imbalance >= mti {
                    (0, 1) // at +MTI: forced to control
                } else if self.imbalance <= -mti {
                    (1, 1) // at -MTI: forced to treatment
                } else {
                    (1, 2)
                }
            }
        }
    }

    fn advance(&mut self, bit: u8) {
        debug_assert!(bit <= 1);
        self.pos += 1;
        self.imbalance += if bit == 1 { 1 } else { -1 };
        match self.scheme {
            SchemeSpec::Complete => {
                if bit == 1 {
                    self.ones_left -= 1;
                }
            }
            SchemeSpec::FixedBlock { .. } => {
                if bit == 1 {
                    self.block_ones_left -= 1;
                }
                self.block_left -= 1;
                if self.block_left == 0 && self.pos < self.n {
                    self.refill_block();
                }
            }
            SchemeSpec::Simple | SchemeSpec::BigStick { .. } => {}
        }
    }
}

/// Sample one assignment sequence of length `n` from the scheme's
/// distribution. Reproducible: identical `(scheme, n, rng stream)` yields the
/// identical sequence.
pub fn generate_sequence<R: Rng + ?Sized>(
    scheme: SchemeSpec,
    n: usize,
    rng: &mut R,
) -> Result<TreatmentSequence> {
    let mut walk = SchemeWalk::new(scheme, n)?;
    let mut assignments = Vec::with_capacity(n);
    while !walk.done() {
        let (num, den) = walk.prob_one();
        let bit = if num == 0 {
            0
        } else if num == den {
            1
        } else {
            u8::from(rng.random_ratio(num, den))
        };
        walk.advance(bit);
        assignments.push(bit);
    }
    Ok(TreatmentSequence { assignments, scheme })
}

/// Number of admissible sequences of length `n`, saturating at `u128::MAX`.
pub fn count_sequences(scheme: SchemeSpec, n: usize) -> Result<u128> {
    scheme.validate_for(n)?;
    let count = match scheme {
        SchemeSpec::Simple => {
            if n >= 127 {
                u128::MAX
            } else {
                1u128 << n
            }
        }
        SchemeSpec::Complete => binomial(n, n / 2),
        SchemeSpec::FixedBlock { block_size } => {
            let mut total: u128 = 1;
            let mut remaining = n;
            while remaining > 0 {
                let b = block_size.min(remaining);
                total = total.saturating_mul(binomial(b, b / 2));
                remaining -= b;
            }
            total
        }
        SchemeSpec::BigStick { mti } => {
            // Paths of length n whose running imbalance stays in [-mti, mti];
            // every such path is admissible (interior steps are free coins,
            // boundary steps are forced in the admissible direction).
            let width = 2 * mti + 1;
            let mut counts = vec![0u128; width];
            counts[mti] = 1; // imbalance 0 at offset mti
            for _ in 0..n {
                let mut next = vec![0u128; width];
                for (offset, &c) in counts.iter().enumerate() {
                    if c == 0 {
                        continue;
                    }
                    if offset + 1 < width {
                        next[offset + 1] = next[offset + 1].saturating_add(c);
                    }
                    if offset > 0 {
                        next[offset - 1] = next[offset - 1].saturating_add(c);
                    }
                }
                counts = next;
            }
            counts.iter().fold(0u128, |acc, &c| acc.saturating_add(c))
        }
    };
    Ok(count)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = match c.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    c
}

/// Materialize every admissible sequence with its probability, in
/// lexicographic order over assignment vectors (0 before 1).
///
/// Probabilities sum to 1 up to floating-point rounding. Errors with
/// [`Error::EnumerationTooLarge`] when the sequence count exceeds `cap`.
pub fn enumerate_sequences(
    scheme: SchemeSpec,
    n: usize,
    cap: u128,
) -> Result<Vec<(TreatmentSequence, f64)>> {
    let count = count_sequences(scheme, n)?;
    if count > cap {
        return Err(Error::EnumerationTooLarge { count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    let walk = SchemeWalk::new(scheme, n)?;
    let mut prefix = Vec::with_capacity(n);
    enumerate_recursive(walk, &mut prefix, 1.0, &mut out);
    debug_assert_eq!(out.len() as u128, count);
    Ok(out)
}

fn enumerate_recursive(
    walk: SchemeWalk,
    prefix: &mut Vec<u8>,
    prob: f64,
    out: &mut Vec<(TreatmentSequence, f64)>,
) {
    if walk.done() {
        out.push((
            TreatmentSequence {
                assignments: prefix.clone(),
                scheme: walk.scheme,
            },
            prob,
        ));
        return;
    }
    let (num, den) = walk.prob_one();
    if num < den {
        let mut next = walk;
        next.advance(0);
        prefix.push(0);
        enumerate_recursive(next, prefix, prob * f64::from(den - num) / f64::from(den), out);
        prefix.pop();
    }
    if num > 0 {
        let mut next = walk;
        next.advance(1);
        prefix.push(1);
        enumerate_recursive(next, prefix, prob * f64::from(num) / f64::from(den), out);
        prefix.pop();
    }
}
