//! Monte Carlo harness: seeded trial grids over (n, m) cells, run in
//! parallel, with canonical record ordering so output is byte-identical for
//! any worker count.
//!
//! Every trial derives its seed from (master, n, m, trial); nothing is drawn
//! from shared RNG state, so a single record can be replayed in isolation.

use std::collections::BTreeMap;
use std::io::Write as IoWrite;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::allocators::{
    alg_div, cost_minimizing, dispatch_envy_free, dispatch_proportional, prop_medium, prop_small,
    two_stage, AllocatorOutcome,
};
use crate::fairness::{is_envy_free, is_proportional, Allocation};
use crate::instance::{sample_instance, DistributionSpec, DisutilityMatrix};
use crate::oracle::{exists_envy_free, exists_proportional};
use crate::seeding::derive;
use crate::theory::{
    count_repeated_favorites, ef_nonexistence_certificate, expected_repeated_favorites,
    prop_nonexistence_certificate,
};
use crate::{Error, Result};

/// How m is chosen per n in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum MRule {
    /// The same m for every n.
    Fixed(usize),
    /// m = ⌈c·n⌉.
    Ratio(f64),
    /// The smallest multiple of n that is ≥ c·n.
    DivisibleRatio(f64),
}

impl MRule {
    pub fn m_for(&self, n: usize) -> usize {
        // The tiny slack keeps products like 1.05·20 = 21.000…04 from
        // ceiling one past the intended integer.
        let fuzzy_ceil = |x: f64| (x - 1e-9).ceil().max(1.0) as usize;
        match *self {
            MRule::Fixed(m) => m,
            MRule::Ratio(c) => fuzzy_ceil(c * n as f64),
            MRule::DivisibleRatio(c) => n * fuzzy_ceil(c),
        }
    }
}

impl std::str::FromStr for MRule {
    type Err = Error;

    /// Accepts `fixed:80`, `ratio:2.0`, `divratio:2.0`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("bad m-rule {s:?}"));
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "fixed" => Ok(MRule::Fixed(value.parse().map_err(|_| bad())?)),
            "ratio" => Ok(MRule::Ratio(value.parse().map_err(|_| bad())?)),
            "divratio" => Ok(MRule::DivisibleRatio(value.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

/// What each trial runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlgoSelector {
    #[serde(rename = "costmin")]
    CostMin,
    #[serde(rename = "algdiv")]
    AlgDiv,
    #[serde(rename = "twostage")]
    TwoStage,
    #[serde(rename = "propsmall")]
    PropSmall,
    #[serde(rename = "propmedium")]
    PropMedium,
    /// Envy-freeness dispatcher.
    #[serde(rename = "ef")]
    Ef,
    /// Proportionality dispatcher.
    #[serde(rename = "prop")]
    Prop,
    /// Non-existence certificate for envy-freeness; found = certificate fired.
    #[serde(rename = "cert-ef")]
    CertEf,
    /// Non-existence certificate for proportionality.
    #[serde(rename = "cert-prop")]
    CertProp,
    /// Exhaustive search; found = an envy-free allocation exists.
    #[serde(rename = "oracle-ef")]
    OracleEf,
    /// Exhaustive search; found = a proportional allocation exists.
    #[serde(rename = "oracle-prop")]
    OracleProp,
}

impl AlgoSelector {
    pub const ALL: [AlgoSelector; 11] = [
        AlgoSelector::CostMin,
        AlgoSelector::AlgDiv,
        AlgoSelector::TwoStage,
        AlgoSelector::PropSmall,
        AlgoSelector::PropMedium,
        AlgoSelector::Ef,
        AlgoSelector::Prop,
        AlgoSelector::CertEf,
        AlgoSelector::CertProp,
        AlgoSelector::OracleEf,
        AlgoSelector::OracleProp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgoSelector::CostMin => "costmin",
            AlgoSelector::AlgDiv => "algdiv",
            AlgoSelector::TwoStage => "twostage",
            AlgoSelector::PropSmall => "propsmall",
            AlgoSelector::PropMedium => "propmedium",
            AlgoSelector::Ef => "ef",
            AlgoSelector::Prop => "prop",
            AlgoSelector::CertEf => "cert-ef",
            AlgoSelector::CertProp => "cert-prop",
            AlgoSelector::OracleEf => "oracle-ef",
            AlgoSelector::OracleProp => "oracle-prop",
        }
    }
}

impl std::fmt::Display for AlgoSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AlgoSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgoSelector::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm selector {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub ns: Vec<usize>,
    pub m_rule: MRule,
    pub dist: DistributionSpec,
    pub algo: AlgoSelector,
    pub trials: usize,
    pub seed: u64,
    pub workers: usize,
    /// Zero out wall-clock fields so output is byte-stable across runs.
    pub canonical: bool,
}

/// One completed trial.  `found == false` forces the fairness flags false:
/// there is no allocation to be fair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: usize,
    pub m: usize,
    pub trial_index: usize,
    pub seed: u64,
    pub algorithm: String,
    pub found: bool,
    pub envy_free: bool,
    pub proportional: bool,
    /// "none", a certificate kind, or "error" for a trial that failed.
    pub certificate_kind: String,
    /// Repeated-favorites statistic T of the sampled instance.
    pub t: u64,
    pub runtime_ns: u64,
}

/// The seed a given trial samples from, exposed so single records can be
/// replayed without rerunning the grid.
pub fn trial_seed(master: u64, n: usize, m: usize, trial: usize) -> u64 {
    derive(derive(derive(master, n as u64), m as u64), trial as u64)
}

fn flags_from_allocation(
    d: &DisutilityMatrix,
    alloc: Option<&Allocation>,
) -> (bool, bool, bool) {
    match alloc {
        None => (false, false, false),
        Some(a) => {
            let ef = is_envy_free(d, a).expect("dimensions agree");
            let prop = is_proportional(d, a).expect("dimensions agree");
            (true, ef, prop)
        }
    }
}

fn outcome_flags(d: &DisutilityMatrix, out: &AllocatorOutcome) -> (bool, bool, bool) {
    flags_from_allocation(d, out.allocation.as_ref())
}

fn run_selector(
    algo: AlgoSelector,
    d: &DisutilityMatrix,
) -> Result<(bool, bool, bool, String)> {
    let none = "none".to_string();
    Ok(match algo {
        AlgoSelector::CostMin => {
            let a = cost_minimizing(d);
            let (f, e, p) = flags_from_allocation(d, Some(&a));
            (f, e, p, none)
        }
        AlgoSelector::AlgDiv => {
            let out = alg_div(d)?;
            let (f, e, p) = outcome_flags(d, &out);
            (f, e, p, none)
        }
        AlgoSelector::TwoStage => {
            let out = two_stage(d, None)?;
            let (f, e, p) = outcome_flags(d, &out);
            (f, e, p, none)
        }
        AlgoSelector::PropSmall => {
            let out = prop_small(d);
            let (f, e, p) = outcome_flags(d, &out);
            (f, e, p, none)
        }
        AlgoSelector::PropMedium => {
            let out = prop_medium(d);
            let (f, e, p) = outcome_flags(d, &out);
            (f, e, p, none)
        }
        AlgoSelector::Ef => {
            let out = dispatch_envy_free(d);
            let (f, e, p) = outcome_flags(d, &out);
            (f, e, p, none)
        }
        AlgoSelector::Prop => {
            let out = dispatch_proportional(d);
            let (f, e, p) = outcome_flags(d, &out);
            (f, e, p, none)
        }
        AlgoSelector::CertEf => {
            let cert = ef_nonexistence_certificate(d);
            (cert.fired(), false, false, cert.kind.to_string())
        }
        AlgoSelector::CertProp => {
            let cert = prop_nonexistence_certificate(d);
            (cert.fired(), false, false, cert.kind.to_string())
        }
        AlgoSelector::OracleEf => match exists_envy_free(d)? {
            // A witness is envy-free, hence proportional.
            Some(_) => (true, true, true, none),
            None => (false, false, false, none),
        },
        AlgoSelector::OracleProp => match exists_proportional(d)? {
            Some(w) => {
                let ef = is_envy_free(d, &w).expect("dimensions agree");
                (true, ef, true, none)
            }
            None => (false, false, false, none),
        },
    })
}

fn error_record(n: usize, m: usize, trial: usize, seed: u64, algo: AlgoSelector) -> TrialRecord {
    TrialRecord {
        n,
        m,
        trial_index: trial,
        seed,
        algorithm: algo.as_str().to_string(),
        found: false,
        envy_free: false,
        proportional: false,
        certificate_kind: "error".to_string(),
        t: 0,
        runtime_ns: 0,
    }
}

fn run_one(cfg: &ExperimentConfig, n: usize, m: usize, trial: usize) -> TrialRecord {
    let seed = trial_seed(cfg.seed, n, m, trial);
    let started = Instant::now();
    let body = || -> Result<TrialRecord> {
        let d = sample_instance(n, m, &cfg.dist, seed)?;
        let t = count_repeated_favorites(&d) as u64;
        let (found, envy_free, proportional, certificate_kind) = run_selector(cfg.algo, &d)?;
        Ok(TrialRecord {
            n,
            m,
            trial_index: trial,
            seed,
            algorithm: cfg.algo.as_str().to_string(),
            found,
            envy_free,
            proportional,
            certificate_kind,
            t,
            runtime_ns: 0,
        })
    };
    // A single bad cell (dimension error, enumeration guard, panic) must not
    // abort the sweep; it becomes an error-tagged failure record.
    let mut record = match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(rec)) => rec,
        Ok(Err(_)) | Err(_) => error_record(n, m, trial, seed, cfg.algo),
    };
    record.runtime_ns = if cfg.canonical {
        0
    } else {
        started.elapsed().as_nanos() as u64
    };
    record
}

/// Runs the full grid and returns records sorted by (n, m, trial): the order
/// and content are independent of `workers`.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    if cfg.ns.is_empty() {
        return Err(Error::InvalidConfig("empty n list".into()));
    }
    if cfg.trials == 0 {
        return Err(Error::InvalidConfig("trials must be ≥ 1".into()));
    }
    if cfg.workers == 0 {
        return Err(Error::InvalidConfig("workers must be ≥ 1".into()));
    }
    let mut jobs = Vec::new();
    for &n in &cfg.ns {
        if n < 2 {
            return Err(Error::InvalidConfig(format!("n must be ≥ 2, got {n}")));
        }
        let m = cfg.m_rule.m_for(n);
        if m < 2 {
            return Err(Error::InvalidConfig(format!(
                "m-rule gives m={m} at n={n}; need m ≥ 2"
            )));
        }
        for trial in 0..cfg.trials {
            jobs.push((n, m, trial));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let mut records: Vec<TrialRecord> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter().map(|&(n, m, t)| run_one(cfg, n, m, t)).collect()
    });
    records.sort_by_key(|r| (r.n, r.m, r.trial_index));
    Ok(records)
}

/// CSV schema, line 1 `schema=1`, line 2 the header; booleans as 0/1.
pub fn write_csv<W: IoWrite>(records: &[TrialRecord], w: &mut W) -> Result<()> {
    writeln!(w, "schema=1")?;
    writeln!(w, "n,m,trial,seed,algo,found,ef,prop,cert,T,runtime_ns")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.m,
            r.trial_index,
            r.seed,
            r.algorithm,
            u8::from(r.found),
            u8::from(r.envy_free),
            u8::from(r.proportional),
            r.certificate_kind,
            r.t,
            r.runtime_ns
        )?;
    }
    Ok(())
}

pub fn csv_string(records: &[TrialRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is ascii")
}

pub fn write_json<W: IoWrite>(records: &[TrialRecord], w: &mut W) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a> {
        schema: u32,
        records: &'a [TrialRecord],
    }
    serde_json::to_writer_pretty(&mut *w, &Doc { schema: 1, records })?;
    writeln!(w)?;
    Ok(())
}

/// Aggregates for one (n, m) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub errors: usize,
    pub found_rate: f64,
    /// Wilson 95% interval for the found rate.
    pub found_low: f64,
    pub found_high: f64,
    pub ef_rate: f64,
    pub prop_rate: f64,
    pub mean_t: f64,
    /// Closed-form E[T] for the cell's (n, m).
    pub expected_t: f64,
    pub mean_runtime_ns: f64,
}

/// z for a central 95% normal interval.
pub const Z_95: f64 = 1.959963984540054;

/// Wilson score interval for `successes` out of `trials` at confidence z.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    assert!(trials > 0, "interval needs at least one trial");
    let nf = trials as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Per-cell summaries sorted by (n, m); `Err` on an empty record set.
pub fn summarize(records: &[TrialRecord]) -> Result<Vec<CellSummary>> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("no records to summarize".into()));
    }
    let mut cells: BTreeMap<(usize, usize), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        cells.entry((r.n, r.m)).or_default().push(r);
    }
    Ok(cells
        .into_iter()
        .map(|((n, m), rs)| {
            let trials = rs.len();
            let found = rs.iter().filter(|r| r.found).count();
            let (found_low, found_high) = wilson_interval(found, trials, Z_95);
            let ef = rs.iter().filter(|r| r.envy_free).count();
            let prop = rs.iter().filter(|r| r.proportional).count();
            let errors = rs.iter().filter(|r| r.certificate_kind == "error").count();
            let mean_t = rs.iter().map(|r| r.t as f64).sum::<f64>() / trials as f64;
            let mean_runtime_ns =
                rs.iter().map(|r| r.runtime_ns as f64).sum::<f64>() / trials as f64;
            CellSummary {
                n,
                m,
                trials,
                errors,
                found_rate: found as f64 / trials as f64,
                found_low,
                found_high,
                ef_rate: ef as f64 / trials as f64,
                prop_rate: prop as f64 / trials as f64,
                mean_t,
                expected_t: expected_repeated_favorites(n as u64, m as u64),
                mean_runtime_ns,
            }
        })
        .collect())
}

/// Human-readable one-line-per-cell rendering for terminal output.
pub fn render_summary(cells: &[CellSummary]) -> String {
    let mut out = String::new();
    for c in cells {
        out.push_str(&format!(
            "n={} m={} trials={} found={:.4} [{:.4},{:.4}] ef={:.4} prop={:.4} meanT={:.3} \
             (expected {:.3}) errors={} mean_runtime={:.3}ms\n",
            c.n,
            c.m,
            c.trials,
            c.found_rate,
            c.found_low,
            c.found_high,
            c.ef_rate,
            c.prop_rate,
            c.mean_t,
            c.expected_t,
            c.errors,
            c.mean_runtime_ns / 1.0e6,
        ));
    }
    out
}
