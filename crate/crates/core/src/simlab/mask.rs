//! Response masking of fully labeled data.

use rayon::prelude::*;

use super::dgp::{check_mechanism, LabeledRecord};
use super::rng::UnitDraws;
use crate::error::{contract, Error, Result};
use crate::tables::UnitRecord;

const CHUNK: usize = 4096;

/// The outcomes hidden by masking. Only metric code reads it; estimators never see it.
#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    y: Vec<u32>,
    mean: f64,
}

impl Truth {
    pub(crate) fn new(y: Vec<u32>) -> Self {
        let mean = y.iter().map(|&v| v as f64).sum::<f64>() / y.len().max(1) as f64;
        Self { y, mean }
    }

    /// Sample mean of the full outcomes, the benchmark target.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn outcomes(&self) -> &[u32] {
        &self.y
    }
}

/// Masked records together with the sealed outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct Masked {
    pub records: Vec<UnitRecord>,
    truth: Truth,
}

impl Masked {
    pub fn truth(&self) -> &Truth {
        &self.truth
    }

    pub fn observed_fraction(&self) -> f64 {
        self.records.iter().filter(|r| r.r).count() as f64 / self.records.len().max(1) as f64
    }
}

/// Masks each outcome independently with probability `1 − π(y)`.
pub fn mask(dataset: &[LabeledRecord], pi: &[f64], seed: u64, stream: u64) -> Result<Masked> {
    check_mechanism(pi, pi.len())?;
    let m = pi.len();
    if let Some((index, rec)) = dataset.iter().enumerate().find(|(_, r)| r.y == 0 || r.y as usize > m) {
        return Err(Error::InvalidRecord { index, reason: format!("outcome {} outside 1..={m}", rec.y) });
    }
    let records: Vec<UnitRecord> = dataset
        .par_chunks(CHUNK)
        .enumerate()
        .flat_map_iter(|(c, chunk)| {
            let mut draws = UnitDraws::new(seed, stream, (c * CHUNK) as u64);
            chunk
                .iter()
                .map(|rec| {
                    let r = draws.next_unit()[0] < pi[rec.y as usize - 1];
                    UnitRecord { stratum: rec.stratum.clone(), f: rec.f, r, y: r.then_some(rec.y), d: None }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let truth = Truth::new(dataset.iter().map(|r| r.y).collect());
    Ok(Masked { records, truth })
}

/// Reads unit records as a fully labeled dataset; every record must carry an outcome.
pub fn labeled_from_records(records: &[UnitRecord]) -> Result<Vec<LabeledRecord>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| match r.y {
            Some(y) if r.r => Ok(LabeledRecord { stratum: r.stratum.clone(), f: r.f, y }),
            _ => contract(format!("record {i} has no outcome; masking needs fully labeled data")),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(n: usize) -> Vec<LabeledRecord> {
        (0..n).map(|i| LabeledRecord { stratum: None, f: Some(1), y: (i % 5) as u32 + 1 }).collect()
    }

    #[test]
    fn full_response_is_identity() {
        let d = dataset(100);
        let masked = mask(&d, &[1.0; 5], 3, 1).unwrap();
        assert!(masked.records.iter().zip(&d).all(|(r, l)| r.r && r.y == Some(l.y)));
        assert_eq!(masked.truth().mean(), 3.0);
    }

    #[test]
    fn half_response_concentrates() {
        let masked = mask(&dataset(100_000), &[0.5; 5], 11, 1).unwrap();
        assert!((masked.observed_fraction() - 0.5).abs() < 0.01);
        assert!(masked.records.iter().all(|r| r.r == r.y.is_some()));
    }

    #[test]
    fn deterministic_and_validated() {
        let d = dataset(10_000);
        assert_eq!(mask(&d, &[0.3; 5], 1, 1).unwrap(), mask(&d, &[0.3; 5], 1, 1).unwrap());
        assert!(mask(&d, &[0.3; 4], 1, 1).is_err());
        let missing = vec![UnitRecord::missing(Some(1))];
        assert!(labeled_from_records(&missing).is_err());
    }
}
