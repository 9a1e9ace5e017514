use std::fs;

use sepacvae::corpus::{generate_synthetic_corpus, SyntheticConfig};
use sepacvae::runner::{train, Dataset, RunConfig, Variant};

fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        num += (i as f64 - mx) * (y - my);
        den += (i as f64 - mx).powi(2);
    }
    num / den
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn loss_falls_over_the_first_fifty_batches() {
    let corpus = generate_synthetic_corpus(&SyntheticConfig::default()).unwrap();
    for variant in [Variant::Sepacvae, Variant::Cvae] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            variant,
            max_batches: 50,
            output: dir.path().to_path_buf(),
            ..RunConfig::default()
        };
        let data = Dataset::from_pairs(&corpus.pairs, &cfg).unwrap();
        train(&cfg, &data).unwrap();
        let csv = fs::read_to_string(dir.path().join("train_report.csv")).unwrap();
        let rec = column(&csv, "loss_rec");
        assert_eq!(rec.len(), 50);
        assert!(slope(&rec) < 0.0, "{variant:?}: slope {}", slope(&rec));
        assert!(rec[45..].iter().sum::<f64>() < rec[..5].iter().sum::<f64>());
    }
}

#[test]
fn slope_helper_recovers_a_line() {
    let ys: Vec<f64> = (0..10).map(|i| 3.0 - 0.5 * i as f64).collect();
    assert!((slope(&ys) + 0.5).abs() < 1e-12);
}
