//! Monte Carlo test of whether a citation ratio alone explains how many
//! non-preprint articles reach the top-K most cited.
//!
//! Each trial picks `n_nonarxiv` articles uniformly without replacement,
//! penalizes them relative to the rest by the citation ratio `r`, ranks all
//! articles by modified count (random tie-breaking), and records how many
//! picked articles land in each top-K. The observed top-K count from the
//! real flags is then compared with that null distribution.
//!
//! Modified counts are held exactly as `count * r^e` with `e` in {-1, 0, 1}
//! and compared in integer arithmetic, so no rounding can perturb ranks.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concordance::ConcordanceMatch;
use crate::corpus::{Corpus, MonthIndex};
use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

pub const MIN_TRIALS: u64 = 1000;
pub const DEFAULT_TRIALS: u64 = 100_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationEntry {
    pub article_id: String,
    pub citation_count: u64,
    pub arxiv_flag: bool,
}

/// Per-article citation counts and preprint flags, ordered by article id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CitationVector {
    entries: Vec<CitationEntry>,
}

pub const COUNTS_CSV_HEADER: &str = "article_id,citation_count,arxiv_flag";

impl CitationVector {
    pub fn new(mut entries: Vec<CitationEntry>) -> Result<Self> {
        entries.sort_by(|a, b| a.article_id.cmp(&b.article_id));
        if let Some(w) = entries.windows(2).find(|w| w[0].article_id == w[1].article_id) {
            return Err(Error::Config(format!("duplicate article id {:?} in citation vector", w[0].article_id)));
        }
        Ok(CitationVector { entries })
    }

    /// Builds a vector from unlabelled `(count, arxiv_flag)` pairs; ids are
    /// zero-padded positions so the input order is preserved.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, bool)>) -> Self {
        let entries = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (citation_count, arxiv_flag))| CitationEntry {
                article_id: format!("{i:010}"),
                citation_count,
                arxiv_flag,
            })
            .collect();
        CitationVector { entries }
    }

    /// Articles of `corpus` (optionally restricted to a publication-month
    /// range), flagged when preprint-linked in the corpus or matched in
    /// `matches`.
    pub fn from_corpus(
        corpus: &Corpus,
        matches: Option<&[ConcordanceMatch]>,
        cohort: Option<(MonthIndex, MonthIndex)>,
    ) -> Self {
        let matched: HashSet<&str> = matches
            .unwrap_or_default()
            .iter()
            .map(|m| m.article_id.as_str())
            .collect();
        let entries = corpus
            .articles()
            .iter()
            .filter(|a| cohort.is_none_or(|(lo, hi)| a.pub_month >= lo && a.pub_month <= hi))
            .map(|a| CitationEntry {
                article_id: a.id.clone(),
                citation_count: corpus.citation_count(&a.id).unwrap_or(0),
                arxiv_flag: a.preprint_linked || matched.contains(a.id.as_str()),
            })
            .collect();
        CitationVector { entries }
    }

    pub fn from_csv<R: std::io::Read>(source: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(source);
        let headers = reader.headers()?.iter().collect::<Vec<_>>().join(",");
        if headers.trim_start_matches('\u{feff}') != COUNTS_CSV_HEADER {
            return Err(Error::BadHeader {
                file: "citation counts",
                expected: COUNTS_CSV_HEADER,
                found: headers,
            });
        }
        let mut entries = Vec::new();
        for row in reader.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |what: &str| Error::Config(format!("counts line {line}: {what}"));
            if row.len() != 3 {
                return Err(bad("expected three fields"));
            }
            let citation_count = row[1].trim().parse().map_err(|_| bad("citation_count must be a non-negative integer"))?;
            let arxiv_flag = match row[2].trim().to_ascii_lowercase().as_str() {
                "true" | "1" => true,
                "false" | "0" => false,
                _ => return Err(bad("arxiv_flag must be true/false or 1/0")),
            };
            entries.push(CitationEntry {
                article_id: row[0].trim().to_string(),
                citation_count,
                arxiv_flag,
            });
        }
        CitationVector::new(entries)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(COUNTS_CSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{}", e.article_id, e.citation_count, e.arxiv_flag);
        }
        out
    }

    pub fn entries(&self) -> &[CitationEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_nonarxiv(&self) -> usize {
        self.entries.iter().filter(|e| !e.arxiv_flag).count()
    }

    pub fn counts(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.citation_count).collect()
    }
}

/// Mean citations of flagged articles over mean citations of unflagged ones.
pub fn measure_ratio(v: &CitationVector) -> Result<f64> {
    let (mut sum_a, mut n_a, mut sum_n, mut n_n) = (0u128, 0u64, 0u128, 0u64);
    for e in v.entries() {
        if e.arxiv_flag {
            sum_a += u128::from(e.citation_count);
            n_a += 1;
        } else {
            sum_n += u128::from(e.citation_count);
            n_n += 1;
        }
    }
    if n_a == 0 || n_n == 0 {
        return Err(Error::RatioUnmeasurable("both preprint and non-preprint groups must be non-empty".into()));
    }
    if sum_n == 0 {
        return Err(Error::RatioUnmeasurable("non-preprint articles have zero mean citations".into()));
    }
    Ok((sum_a as f64 / n_a as f64) / (sum_n as f64 / n_n as f64))
}

/// A positive finite ratio decomposed as `mantissa * 2^exponent`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactRatio {
    value: f64,
    mantissa: u64,
    exponent: i32,
}

impl ExactRatio {
    pub fn new(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Config(format!("ratio must be positive and finite, got {value}")));
        }
        let bits = value.to_bits();
        let raw_exp = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        let (mantissa, exponent) = if raw_exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), raw_exp - 1075)
        };
        Ok(ExactRatio {
            value,
            mantissa,
            exponent,
        })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Exact comparison of `a * r` with `b`.
    fn cmp_scaled(&self, a: u64, b: u64) -> Ordering {
        let prod = u128::from(a) * u128::from(self.mantissa);
        let b = u128::from(b);
        if prod == 0 || b == 0 {
            return prod.cmp(&b);
        }
        if self.exponent >= 0 {
            let shift = self.exponent as u32;
            if shift >= prod.leading_zeros() {
                return Ordering::Greater;
            }
            (prod << shift).cmp(&b)
        } else {
            let shift = self.exponent.unsigned_abs();
            if shift >= b.leading_zeros() {
                return Ordering::Less;
            }
            prod.cmp(&(b << shift))
        }
    }

    /// Exact comparison of `x.count * r^x.power` with `y.count * r^y.power`.
    pub fn compare(&self, x: ScaledCount, y: ScaledCount) -> Ordering {
        match x.power - y.power {
            0 => x.count.cmp(&y.count),
            1 => self.cmp_scaled(x.count, y.count),
            -1 => self.cmp_scaled(y.count, x.count).reverse(),
            d => panic!("unsupported ratio power difference {d}"),
        }
    }
}

/// The exact real `count * r^power`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScaledCount {
    pub count: u64,
    pub power: i8,
}

/// How the null model separates the picked articles from the rest.
pub trait Perturbation: Named + Send + Sync {
    fn modify(&self, count: u64, selected: bool) -> ScaledCount;
}

/// Divides the picked articles' counts by the ratio.
pub struct ScaleSelected;

impl Named for ScaleSelected {
    fn name(&self) -> &'static str {
        "scale_selected"
    }
}

impl Perturbation for ScaleSelected {
    fn modify(&self, count: u64, selected: bool) -> ScaledCount {
        ScaledCount {
            count,
            power: if selected { -1 } else { 0 },
        }
    }
}

/// Multiplies everyone else's counts by the ratio.
pub struct BoostUnselected;

impl Named for BoostUnselected {
    fn name(&self) -> &'static str {
        "boost_unselected"
    }
}

impl Perturbation for BoostUnselected {
    fn modify(&self, count: u64, selected: bool) -> ScaledCount {
        ScaledCount {
            count,
            power: if selected { 0 } else { 1 },
        }
    }
}

/// Perturbation strategies by name; `scale_selected` is the default.
pub fn perturbation_registry() -> Registry<dyn Perturbation> {
    Registry::new("perturbation")
        .with(Arc::new(ScaleSelected) as Arc<dyn Perturbation>)
        .with(Arc::new(BoostUnselected) as Arc<dyn Perturbation>)
}

/// The random choices of one trial: which articles are picked, and the
/// per-article tie-break keys.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialDraw {
    pub selected: Vec<bool>,
    pub tie_keys: Vec<u64>,
}

impl TrialDraw {
    pub fn sample<R: Rng + ?Sized>(n_total: usize, n_select: usize, rng: &mut R) -> Self {
        assert!(n_select <= n_total, "cannot select {n_select} of {n_total}");
        let mut selected = vec![false; n_total];
        for i in rand::seq::index::sample(rng, n_total, n_select) {
            selected[i] = true;
        }
        let tie_keys = (0..n_total).map(|_| rng.random()).collect();
        TrialDraw { selected, tie_keys }
    }
}

/// Descending by value, then ascending tie key, then index.
fn rank_cmp(values: &[ScaledCount], keys: &[u64], ratio: &ExactRatio, i: u32, j: u32) -> Ordering {
    let (i, j) = (i as usize, j as usize);
    ratio
        .compare(values[j], values[i])
        .then(keys[i].cmp(&keys[j]))
        .then(i.cmp(&j))
}

/// Full ranking (most cited first) of the modified counts.
pub fn rank_order(counts: &[u64], draw: &TrialDraw, ratio: &ExactRatio, perturbation: &dyn Perturbation) -> Vec<usize> {
    let values: Vec<ScaledCount> = counts
        .iter()
        .zip(&draw.selected)
        .map(|(&c, &s)| perturbation.modify(c, s))
        .collect();
    let mut order: Vec<u32> = (0..counts.len() as u32).collect();
    order.sort_unstable_by(|&i, &j| rank_cmp(&values, &draw.tie_keys, ratio, i, j));
    order.into_iter().map(|i| i as usize).collect()
}

/// Number of selected articles within each top-K of the modified ranking.
pub fn count_selected_in_top(
    counts: &[u64],
    draw: &TrialDraw,
    ratio: &ExactRatio,
    perturbation: &dyn Perturbation,
    top_k: &[usize],
) -> Vec<usize> {
    let n = counts.len();
    let k_max = top_k.iter().copied().max().unwrap_or(0).min(n);
    if k_max == 0 {
        return vec![0; top_k.len()];
    }
    let values: Vec<ScaledCount> = counts
        .iter()
        .zip(&draw.selected)
        .map(|(&c, &s)| perturbation.modify(c, s))
        .collect();
    let mut order: Vec<u32> = (0..n as u32).collect();
    let cmp = |a: &u32, b: &u32| rank_cmp(&values, &draw.tie_keys, ratio, *a, *b);
    if k_max < n {
        order.select_nth_unstable_by(k_max - 1, cmp);
        order.truncate(k_max);
    }
    order.sort_unstable_by(cmp);
    let mut prefix = Vec::with_capacity(k_max + 1);
    prefix.push(0usize);
    for &i in &order {
        prefix.push(prefix.last().unwrap() + usize::from(draw.selected[i as usize]));
    }
    top_k.iter().map(|&k| prefix[k.min(k_max)]).collect()
}

/// One null-model trial for a single K.
pub fn run_trial<R: Rng + ?Sized>(counts: &[u64], n_select: usize, ratio: f64, top_k: usize, rng: &mut R) -> Result<usize> {
    let ratio = ExactRatio::new(ratio)?;
    let draw = TrialDraw::sample(counts.len(), n_select, rng);
    Ok(count_selected_in_top(counts, &draw, &ratio, &ScaleSelected, &[top_k])[0])
}

/// Independent random stream for trial `trial` under `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RatioSpec {
    Measured,
    Explicit(f64),
}

impl std::str::FromStr for RatioSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" | "measured" => Ok(RatioSpec::Measured),
            other => {
                let v: f64 = other
                    .parse()
                    .map_err(|_| Error::Config(format!("ratio must be `auto` or a positive number, got {other:?}")))?;
                ExactRatio::new(v)?;
                Ok(RatioSpec::Explicit(v))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SBTestConfig {
    pub n_total: usize,
    pub n_nonarxiv: usize,
    pub top_k: Vec<usize>,
    pub ratio: RatioSpec,
    pub trials: u64,
    pub seed: u64,
}

impl SBTestConfig {
    /// Config whose sizes are taken from `v`.
    pub fn for_vector(v: &CitationVector, top_k: Vec<usize>, ratio: RatioSpec, trials: u64, seed: u64) -> Self {
        SBTestConfig {
            n_total: v.len(),
            n_nonarxiv: v.n_nonarxiv(),
            top_k,
            ratio,
            trials,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0 < self.n_nonarxiv && self.n_nonarxiv < self.n_total) {
            return Err(Error::Config(format!(
                "need 0 < n_nonarxiv < n_total, got {} of {}",
                self.n_nonarxiv, self.n_total
            )));
        }
        if self.top_k.is_empty() {
            return Err(Error::Config("at least one top-K value is required".into()));
        }
        if let Some(&k) = self.top_k.iter().find(|&&k| k == 0 || k > self.n_total) {
            return Err(Error::Config(format!("top-K {k} must lie in 1..={}", self.n_total)));
        }
        if self.trials < MIN_TRIALS {
            return Err(Error::Config(format!("trials must be at least {MIN_TRIALS}, got {}", self.trials)));
        }
        if let RatioSpec::Explicit(r) = self.ratio {
            ExactRatio::new(r)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKOutcome {
    pub top_k: usize,
    /// Simulated count -> number of trials producing it.
    pub histogram: BTreeMap<usize, u64>,
    pub trials: u64,
    pub mode: usize,
    pub mean: f64,
    /// Observed count under random tie-breaking, at its most likely value.
    pub observed: usize,
    /// Expected observed count over tie-break draws.
    pub observed_mean: f64,
    pub p_value_leq: f64,
}

impl TopKOutcome {
    pub fn from_histogram(top_k: usize, histogram: BTreeMap<usize, u64>, observed: usize, observed_mean: f64) -> Self {
        let trials: u64 = histogram.values().sum();
        let mode = histogram
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map_or(0, |(&k, _)| k);
        let weighted: u128 = histogram.iter().map(|(&k, &f)| k as u128 * u128::from(f)).sum();
        let mean = if trials == 0 { 0.0 } else { weighted as f64 / trials as f64 };
        let mut out = TopKOutcome {
            top_k,
            histogram,
            trials,
            mode,
            mean,
            observed,
            observed_mean,
            p_value_leq: 0.0,
        };
        out.p_value_leq = out.p_value_leq_for(observed);
        out
    }

    /// Add-one estimate of P(simulated <= observed).
    pub fn p_value_leq_for(&self, observed: usize) -> f64 {
        let at_most: u64 = self.histogram.range(..=observed).map(|(_, &f)| f).sum();
        (at_most + 1) as f64 / (self.trials + 1) as f64
    }

    pub fn distribution_csv(&self) -> String {
        let mut out = String::from(DISTRIBUTION_CSV_HEADER);
        out.push('\n');
        for (&count, &freq) in &self.histogram {
            let _ = writeln!(out, "{},{},{},{}", self.top_k, count, freq, freq as f64 / self.trials as f64);
        }
        out
    }
}

pub const DISTRIBUTION_CSV_HEADER: &str = "k,count,frequency,probability";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SBTestResult {
    pub outcomes: Vec<TopKOutcome>,
    /// Ratio measured from the vector, when measurable.
    pub measured_ratio: Option<f64>,
    /// Ratio actually used by the trials.
    pub ratio: f64,
    pub perturbation: String,
    pub n_total: usize,
    pub n_nonarxiv: usize,
    pub trials: u64,
    pub seed: u64,
}

impl SBTestResult {
    pub fn outcome(&self, top_k: usize) -> Option<&TopKOutcome> {
        self.outcomes.iter().find(|o| o.top_k == top_k)
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let per_k: Vec<serde_json::Value> = self
            .outcomes
            .iter()
            .map(|o| {
                serde_json::json!({
                    "top_k": o.top_k,
                    "mode": o.mode,
                    "mean": o.mean,
                    "observed": o.observed,
                    "observed_mean": o.observed_mean,
                    "p_value_leq": o.p_value_leq,
                })
            })
            .collect();
        serde_json::json!({
            "ratio": self.ratio,
            "measured_ratio": self.measured_ratio,
            "perturbation": self.perturbation,
            "n_total": self.n_total,
            "n_nonarxiv": self.n_nonarxiv,
            "trials": self.trials,
            "seed": self.seed,
            "top_k": per_k,
        })
    }
}

/// Observed count of unflagged articles in the top K of the unmodified
/// ranking under uniform random tie-breaking: `(modal value, mean)`.
///
/// Articles strictly above the K-th count are always in; the tied group at
/// the boundary fills the remaining slots by a hypergeometric draw, whose
/// mode and mean are used.
pub fn observed_in_top(v: &CitationVector, k: usize) -> (usize, f64) {
    let mut sorted: Vec<&CitationEntry> = v.entries().iter().collect();
    if k == 0 || sorted.is_empty() {
        return (0, 0.0);
    }
    if k >= sorted.len() {
        let n = v.n_nonarxiv();
        return (n, n as f64);
    }
    sorted.sort_by_key(|e| std::cmp::Reverse(e.citation_count));
    let boundary = sorted[k - 1].citation_count;
    let above: Vec<_> = sorted.iter().filter(|e| e.citation_count > boundary).collect();
    let tied: Vec<_> = sorted.iter().filter(|e| e.citation_count == boundary).collect();
    let sure = above.iter().filter(|e| !e.arxiv_flag).count();
    let slots = k - above.len();
    let group = tied.len();
    let hits = tied.iter().filter(|e| !e.arxiv_flag).count();
    let mode = (slots + 1) * (hits + 1) / (group + 2);
    let mean = hits as f64 * slots as f64 / group as f64;
    (sure + mode, sure as f64 + mean)
}

pub fn run_sbtest(v: &CitationVector, config: &SBTestConfig) -> Result<SBTestResult> {
    run_sbtest_with(v, config, &ScaleSelected)
}

pub fn run_sbtest_with(v: &CitationVector, config: &SBTestConfig, perturbation: &dyn Perturbation) -> Result<SBTestResult> {
    config.validate()?;
    if v.len() != config.n_total || v.n_nonarxiv() != config.n_nonarxiv {
        return Err(Error::Config(format!(
            "vector has {} articles ({} unflagged) but config expects {} ({})",
            v.len(),
            v.n_nonarxiv(),
            config.n_total,
            config.n_nonarxiv
        )));
    }
    let measured = measure_ratio(v);
    let ratio_value = match config.ratio {
        RatioSpec::Explicit(r) => r,
        RatioSpec::Measured => *measured.as_ref().map_err(|e| Error::RatioUnmeasurable(e.to_string()))?,
    };
    let ratio = ExactRatio::new(ratio_value)?;
    let counts = v.counts();
    let top_k = &config.top_k;

    let tallies = (0..config.trials)
        .into_par_iter()
        .fold(
            || top_k.iter().map(|&k| vec![0u64; k + 1]).collect::<Vec<_>>(),
            |mut acc, trial| {
                let mut rng = trial_rng(config.seed, trial);
                let draw = TrialDraw::sample(counts.len(), config.n_nonarxiv, &mut rng);
                let hits = count_selected_in_top(&counts, &draw, &ratio, perturbation, top_k);
                for (slot, h) in acc.iter_mut().zip(hits) {
                    slot[h] += 1;
                }
                acc
            },
        )
        .reduce(
            || top_k.iter().map(|&k| vec![0u64; k + 1]).collect::<Vec<_>>(),
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    for (p, q) in x.iter_mut().zip(y) {
                        *p += q;
                    }
                }
                a
            },
        );

    let outcomes = top_k
        .iter()
        .zip(tallies)
        .map(|(&k, tally)| {
            let histogram: BTreeMap<usize, u64> = tally.into_iter().enumerate().filter(|&(_, f)| f > 0).collect();
            let (observed, observed_mean) = observed_in_top(v, k);
            TopKOutcome::from_histogram(k, histogram, observed, observed_mean)
        })
        .collect();

    Ok(SBTestResult {
        outcomes,
        measured_ratio: measured.ok(),
        ratio: ratio_value,
        perturbation: perturbation.name().to_string(),
        n_total: config.n_total,
        n_nonarxiv: config.n_nonarxiv,
        trials: config.trials,
        seed: config.seed,
    })
}
