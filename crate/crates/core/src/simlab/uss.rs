//! A synthetic fully labeled survey dataset: 3,300 five-level satisfaction ratings with a
//! noisy ordinal prediction for each.

use super::dgp::{LabeledRecord, USS_MATRIX};
use super::rng;

/// Rating counts for levels 1..=5.
pub const USS_COUNTS: [usize; 5] = [2, 144, 725, 2287, 142];
pub const USS_SEED: u64 = 3300;
/// File name of the committed copy under the crate's `data/` directory.
pub const USS_FILE: &str = "uss_synthetic.csv";

/// Splits `n` units over predictions in proportion to `row`, rounding by largest remainder.
fn allocate(n: usize, row: &[f64; 5]) -> [usize; 5] {
    let exact: Vec<f64> = row.iter().map(|p| p * n as f64).collect();
    let mut counts = [0usize; 5];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let short = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    for &f in order.iter().take(short) {
        counts[f] += 1;
    }
    counts
}

/// The dataset in a fixed shuffled order. Within each rating the predictions follow
/// [`USS_MATRIX`] exactly up to rounding.
pub fn uss_synthetic() -> Vec<LabeledRecord> {
    let mut units = Vec::with_capacity(USS_COUNTS.iter().sum());
    for (y, &n) in USS_COUNTS.iter().enumerate() {
        for (f, &k) in allocate(n, &USS_MATRIX[y]).iter().enumerate() {
            units.extend(std::iter::repeat_n((f as u32 + 1, y as u32 + 1), k));
        }
    }
    rng::permutation(USS_SEED, 0, units.len())
        .into_iter()
        .map(|i| LabeledRecord { stratum: None, f: Some(units[i].0), y: units[i].1 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn marginal_and_correlation() {
        let d = uss_synthetic();
        assert_eq!(d.len(), 3300);
        for (y, &n) in USS_COUNTS.iter().enumerate() {
            assert_eq!(d.iter().filter(|r| r.y as usize == y + 1).count(), n);
        }
        let ys: Vec<f64> = d.iter().map(|r| r.y as f64).collect();
        let fs: Vec<f64> = d.iter().map(|r| r.f.unwrap() as f64).collect();
        let c = corr(&ys, &fs);
        assert!((0.40..=0.46).contains(&c), "corr {c}");
    }

    #[test]
    fn committed_file_matches() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(USS_FILE);
        let mut buf = Vec::new();
        crate::io::write_labeled(&uss_synthetic(), &mut buf).unwrap();
        if std::env::var_os("MNAR_BLESS").is_some() {
            std::fs::write(&path, &buf).unwrap();
        }
        assert!(std::fs::read(&path).unwrap() == buf, "{} is stale", path.display());
    }

    #[test]
    fn allocation_keeps_totals() {
        assert_eq!(allocate(2, &USS_MATRIX[0]).iter().sum::<usize>(), 2);
        assert_eq!(allocate(2287, &USS_MATRIX[3]).iter().sum::<usize>(), 2287);
    }
}
