use ssyn::fit::{conduction_from_fits, fit_bundle, MapDegree};
use ssyn::paramfile::{Defaults, ParameterBundle};
use ssyn::stats::{feature_means, feature_wasserstein};
use ssyn::synth;
use ssyn::waveform::{extract_features, ExtractConfig};
use ssyn::Execution;

fn arrays(v: &[ssyn::FeatureVector]) -> Vec<[f64; 4]> {
    v.iter().map(|f| f.to_array()).collect()
}

#[test]
fn waveform_extract_fit_generate() {
    let n = 8000;
    let corpus = synth::corpus(n, 5);
    let ex = extract_features(&corpus.trace, &ExtractConfig::default(), &Execution::sequential()).unwrap();
    assert_eq!(ex.report.total_cycles, n);
    assert!(ex.report.excluded.len() < n / 100, "{:?}", &ex.report.excluded[..5.min(ex.report.excluded.len())]);

    // Extracted features track the planted ones.
    for &(c, f) in ex.features.iter().take(500) {
        let t = corpus.features[c];
        assert!((f.u_s - t.u_s).abs() < 0.02, "cycle {c}: {f:?} vs {t:?}");
        assert!((f.u_r - t.u_r).abs() < 0.03, "cycle {c}: {f:?} vs {t:?}");
        assert!((f.r_h / t.r_h - 1.0).abs() < 0.1, "cycle {c}: {f:?} vs {t:?}");
        assert!((f.r_l / t.r_l - 1.0).abs() < 0.1, "cycle {c}: {f:?} vs {t:?}");
    }

    let cond = conduction_from_fits(&ex.fits, &ExtractConfig::default()).unwrap();
    let feats = ex.vectors();
    let (bundle, diag) = fit_bundle(&feats, cond, &[10], MapDegree::Auto(5), Defaults::default()).unwrap();
    assert!(diag.orders[0].spectral_radius < 1.0);

    let gen = bundle.generate(Some(10), feats.len(), 9).unwrap();
    let src = arrays(&feats);
    let w = feature_wasserstein(&src, &arrays(&gen)).unwrap();
    let mean = feature_means(&src);
    for k in 0..4 {
        assert!(w[k] / mean[k] < 0.05, "feature {k}: {} of {}", w[k], mean[k]);
    }
}

#[test]
fn fitted_bundle_survives_the_file_format() {
    let truth = synth::ground_truth_bundle();
    let feats = truth.generate(Some(2), 20_000, 3).unwrap();
    let (bundle, _) = fit_bundle(
        &feats,
        truth.conduction.clone(),
        &[1, 2, 30],
        MapDegree::Auto(5),
        Defaults::default(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fit.ssyn");
    bundle.save(&path).unwrap();
    let back = ParameterBundle::load(&path).unwrap();
    assert_eq!(back, bundle);
    assert_eq!(back.orders(), vec![1, 2, 30]);
    assert_eq!(
        back.generate(None, 100, 1).unwrap(),
        bundle.generate(Some(30), 100, 1).unwrap()
    );
}

#[test]
fn generation_is_seeded() {
    let b = synth::ground_truth_bundle();
    assert_eq!(b.generate(Some(10), 1000, 4), b.generate(Some(10), 1000, 4));
    assert_ne!(b.generate(Some(10), 1000, 4), b.generate(Some(10), 1000, 5));
    assert!(b.generate(Some(7), 10, 1).is_none());
    assert_eq!(b.generate(None, 0, 1).unwrap().len(), 0);
}
