//! Seeded, trial-parallel Monte-Carlo execution and metric aggregation.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{IsacError, Result};

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` under master seed `master`.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    splitmix64(splitmix64(master) ^ trial as u64)
}

/// Running mean and variance (Welford), mergeable across partitions.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Sample standard deviation, 0 for fewer than two samples.
    pub fn std(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt()
        }
    }
}

/// One metric observation produced by a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sweep_name: String,
    pub sweep_value: f64,
    pub metric: String,
    pub value: f64,
}

impl Sample {
    pub fn new(sweep_name: &str, sweep_value: f64, metric: impl Into<String>, value: f64) -> Self {
        Self { sweep_name: sweep_name.to_string(), sweep_value, metric: metric.into(), value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRecord {
    pub experiment: String,
    pub sweep_name: String,
    pub sweep_value: f64,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub trials: u64,
    pub seed: u64,
}

type Key = (String, u64, String);

/// Aggregates samples by `(sweep_name, sweep_value, metric)`, keeping keys
/// in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct Aggregator {
    order: Vec<Key>,
    stats: HashMap<Key, Welford>,
}

impl Aggregator {
    pub fn push(&mut self, s: &Sample) {
        let key = (s.sweep_name.clone(), s.sweep_value.to_bits(), s.metric.clone());
        if !self.stats.contains_key(&key) {
            self.order.push(key.clone());
        }
        self.stats.entry(key).or_default().push(s.value);
    }

    pub fn records(&self, experiment: &str, seed: u64) -> Vec<MetricRecord> {
        self.order
            .iter()
            .map(|k| {
                let w = &self.stats[k];
                MetricRecord {
                    experiment: experiment.to_string(),
                    sweep_name: k.0.clone(),
                    sweep_value: f64::from_bits(k.1),
                    metric: k.2.clone(),
                    mean: w.mean,
                    std: w.std(),
                    trials: w.count,
                    seed,
                }
            })
            .collect()
    }
}

/// Runs `trials` independent trials in parallel. Trial `i` receives
/// `trial_seed(master, i)`; results are folded in trial order, so the output
/// does not depend on scheduling. A non-finite sample is reported as a
/// numerical failure carrying the trial seed.
pub fn run_trials<F>(experiment: &str, master: u64, trials: usize, trial: F) -> Result<Vec<MetricRecord>>
where
    F: Fn(u64) -> Result<Vec<Sample>> + Sync,
{
    let results: Vec<(u64, Result<Vec<Sample>>)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let seed = trial_seed(master, i);
            (seed, trial(seed))
        })
        .collect();
    let mut agg = Aggregator::default();
    for (seed, res) in results {
        let samples = res.map_err(|e| match e {
            IsacError::Numerical { message, .. } => IsacError::Numerical { seed, message },
            other => other,
        })?;
        for s in &samples {
            if !s.value.is_finite() {
                return Err(IsacError::Numerical { seed, message: format!("non-finite {} at {}={}", s.metric, s.sweep_name, s.sweep_value) });
            }
            agg.push(s);
        }
    }
    Ok(agg.records(experiment, master))
}

pub const CSV_HEADER: [&str; 8] = ["experiment", "sweep_name", "sweep_value", "metric", "mean", "std", "trials", "seed"];

pub fn write_records<W: Write>(out: W, records: &[MetricRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 7.25];
        let mut w = Welford::default();
        xs.iter().for_each(|&x| w.push(x));
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((w.mean - mean).abs() < 1e-12);
        assert!((w.std() - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_sample_has_zero_std() {
        let mut w = Welford::default();
        w.push(3.0);
        assert_eq!(w.std(), 0.0);
    }

    #[test]
    fn seeds_differ_across_trials_and_masters() {
        let a: Vec<u64> = (0..100).map(|i| trial_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_ne!(trial_seed(7, 0), trial_seed(8, 0));
    }

    #[test]
    fn csv_header_and_rows() {
        let recs = run_trials("demo", 3, 4, |seed| Ok(vec![Sample::new("x", 1.0, "m", (seed % 7) as f64)])).unwrap();
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "experiment,sweep_name,sweep_value,metric,mean,std,trials,seed");
        assert!(lines.next().unwrap().starts_with("demo,x,1.0,m,"));
        assert!(lines.next().is_none());
    }

    #[test]
    fn non_finite_sample_reports_seed() {
        let err = run_trials("demo", 5, 3, |seed| {
            let v = if seed == trial_seed(5, 1) { f64::NAN } else { 1.0 };
            Ok(vec![Sample::new("x", 0.0, "m", v)])
        })
        .unwrap_err();
        match err {
            IsacError::Numerical { seed, .. } => assert_eq!(seed, trial_seed(5, 1)),
            other => panic!("{other}"),
        }
    }

    proptest! {
        #[test]
        fn merge_equals_sequential(xs in prop::collection::vec(-1e3f64..1e3, 1..60), cut in 0usize..60) {
            let cut = cut.min(xs.len());
            let mut all = Welford::default();
            xs.iter().for_each(|&x| all.push(x));
            let (mut a, mut b) = (Welford::default(), Welford::default());
            xs[..cut].iter().for_each(|&x| a.push(x));
            xs[cut..].iter().for_each(|&x| b.push(x));
            a.merge(&b);
            prop_assert_eq!(a.count, all.count);
            prop_assert!((a.mean - all.mean).abs() < 1e-9);
            prop_assert!((a.std() - all.std()).abs() < 1e-7);
        }

        #[test]
        fn aggregation_ignores_execution_order(master in 0u64..1000, trials in 1usize..20) {
            let f = |seed: u64| Ok(vec![Sample::new("s", 0.5, "m", (seed >> 11) as f64 / (1u64 << 53) as f64)]);
            let a = run_trials("e", master, trials, f).unwrap();
            // a reversed sequential execution must aggregate identically
            let mut results: Vec<(usize, Vec<Sample>)> =
                (0..trials).rev().map(|i| (i, f(trial_seed(master, i)).unwrap())).collect();
            results.sort_by_key(|r| r.0);
            let mut agg = Aggregator::default();
            results.iter().flat_map(|r| r.1.iter()).for_each(|s| agg.push(s));
            prop_assert_eq!(a, agg.records("e", master));
        }
    }
}
