//! Sample statistics of the generators at large sample sizes.

use seann_core::synth::{gen_classification_targets, sample_mvn};
use seann_core::{CorruptionMode, CorruptionSpec, LabelRule, ScenarioConfig};

fn column_stats(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    let va = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / n;
    let vb = b.iter().map(|y| (y - mb) * (y - mb)).sum::<f64>() / n;
    (cov, va, vb)
}

#[test]
fn sample_covariance_matches_target() {
    let scenario = ScenarioConfig { m: 100_000, ..ScenarioConfig::exposure_regression(11) };
    let x = sample_mvn(&scenario).unwrap();
    let p = scenario.column_names.len();
    for i in 0..p {
        for j in 0..p {
            let (cov, _, _) = column_stats(&x.column(i), &x.column(j));
            assert!(
                (cov - scenario.covariance[i][j]).abs() < 0.02,
                "cov[{i}][{j}] = {cov}, target {}",
                scenario.covariance[i][j]
            );
        }
    }
    let (cov, va, vb) = column_stats(&x.column(0), &x.column(1));
    let corr = cov / (va * vb).sqrt();
    assert!((corr - 0.8).abs() < 0.02, "mercury/fish correlation {corr}");
}

#[test]
fn regression_target_is_the_generating_function() {
    let data = ScenarioConfig { m: 50, ..ScenarioConfig::exposure_regression(2) }.generate().unwrap();
    for (r, y) in data.values().rows().zip(data.target()) {
        let expected = 1.0 + r[0] - 2.0 * r[1] + 5.0 * r[2] + 10.0 * r[3].cos();
        assert!((y - expected).abs() < 1e-12);
    }
}

#[test]
fn bernoulli_label_frequency_matches_probabilities() {
    let scenario = ScenarioConfig { m: 100_000, labels: LabelRule::Bernoulli, ..ScenarioConfig::exposure_classification(5) };
    let x = sample_mvn(&scenario).unwrap();
    let (probs, labels) = gen_classification_targets(&x, &scenario.betas, 6).unwrap();
    let n = probs.len() as f64;
    let expected = probs.iter().sum::<f64>() / n;
    let observed = labels.iter().sum::<f64>() / n;
    assert!((observed - expected).abs() < 0.01, "{observed} vs {expected}");
    assert!(labels.iter().all(|&l| l == 0.0 || l == 1.0));
}

#[test]
fn gaussian_noise_has_requested_spread() {
    let data = ScenarioConfig { m: 100_000, ..ScenarioConfig::exposure_regression(8) }.generate().unwrap();
    let spec = CorruptionSpec {
        mode: CorruptionMode::GaussianNoise,
        level: 0.75,
        columns: Some(vec!["fish_intake".into()]),
        seed: 4,
    };
    let noisy = spec.apply(&data).unwrap();
    let added: Vec<f64> = noisy.values().column(1).iter().zip(data.values().column(1)).map(|(a, b)| a - b).collect();
    let (_, var, _) = column_stats(&added, &added);
    assert!((var.sqrt() - 0.75).abs() < 0.01, "noise sd {}", var.sqrt());
    for j in [0, 2, 3] {
        assert_eq!(noisy.values().column(j), data.values().column(j));
    }
    assert_eq!(noisy.target(), data.target());
}

#[test]
fn mcar_masks_the_requested_fraction() {
    let data = ScenarioConfig { m: 100_000, ..ScenarioConfig::exposure_classification(9) }.generate().unwrap();
    let spec = CorruptionSpec { mode: CorruptionMode::McarImpute, level: 0.25, columns: None, seed: 12 };
    let imputed = spec.apply(&data).unwrap();
    let (before, after) = (data.values().as_slice(), imputed.values().as_slice());
    let changed = before.iter().zip(after).filter(|(a, b)| a != b).count() as f64;
    let rate = changed / before.len() as f64;
    assert!((rate - 0.25).abs() < 0.01, "mask rate {rate}");
    // Every replaced cell holds its column's observed mean, one value per
    // column.
    for j in 0..imputed.ncols() {
        let fills: Vec<f64> = (0..imputed.nrows())
            .filter(|&i| data.values().get(i, j) != imputed.values().get(i, j))
            .map(|i| imputed.values().get(i, j))
            .collect();
        assert!(fills.windows(2).all(|w| w[0] == w[1]));
    }
}
