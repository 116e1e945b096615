//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use pfd_core::classifier::{
    bce_loss, contrastive_loss, decode_model, encode_model, total_loss, train, LossBatch, TrainConfig,
};
use pfd_core::eval::{
    calibrate_scores, emit_report, evaluate, read_report_json, robustness_sweep, EvalReport, ReportFormat,
    SubsetAccuracy,
};
use pfd_core::features::{
    decode_feature_file, encode_feature_file, extract_features, Backend, FeatureRecord, FeatureSet,
};
use pfd_core::imaging::{
    apply_policy, gaussian_blur, horizontal_flip, laplacian_variance, AugmentPolicy, Degradation, Probabilities,
};
use pfd_core::imaging::{Channels, ImagePlane};
use pfd_core::manifest::{Label, SampleType, Split};
use pfd_core::nss::{fit_aggd, fit_ggd, mscn};
use pfd_core::synthetic::{gaussian_blobs, natural_image, write_toy_corpus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::gamma;

use common::*;

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(start: Instant, budget: Duration) -> std::result::Result<(), String> {
    let took = start.elapsed();
    ensure(took < budget, || format!("took {took:.1?}, budget {budget:?}"))
}

fn loss_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let h = rng.random_range(1..=16);
        let hidden: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..h).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let labels: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..2u8))).collect();
        let lambda = rng.random_range(0.0..=1.0);
        let margin = rng.random_range(0.1..3.0);
        let (cl, ce, tot) = naive_losses(&hidden, &probs, &labels, lambda, margin);
        let b = LossBatch::new(hidden, probs, labels);
        for (got, want) in [
            (contrastive_loss(&b, margin), cl),
            (bce_loss(&b), ce),
            (total_loss(&b, lambda, margin), tot),
        ] {
            worst = worst.max(rel_err(got, want));
        }
    }
    ensure(worst < 1e-12, || format!("max relative error {worst:e}"))?;
    within_budget(start, Duration::from_secs(10))?;
    Ok(format!(
        "max relative error {worst:.1e} over 1000 batches in {:.2?}",
        start.elapsed()
    ))
}

fn analytic_losses() -> Outcome {
    let half = LossBatch::new(vec![vec![0.1], vec![0.2], vec![0.3]], vec![0.5; 3], vec![1.0, 0.0, 1.0]);
    let ce = bce_loss(&half);
    ensure((ce - std::f64::consts::LN_2).abs() < 1e-12, || format!("L_CE {ce}"))?;

    let mut h2 = vec![0.0; 6];
    h2[0] = 0.3;
    h2[1] = 0.4;
    let pair = LossBatch::new(vec![vec![0.0; 6], h2], vec![0.5, 0.5], vec![1.0, 0.0]);
    let cl = contrastive_loss(&pair, 1.0);
    ensure((cl - 0.125).abs() < 1e-12, || format!("L_CL {cl}"))?;
    let tot = total_loss(&pair, 0.3, 1.0);
    let exact = 0.3 * 0.125 + 0.7 * std::f64::consts::LN_2;
    ensure((tot - exact).abs() < 1e-12, || format!("total {tot} vs {exact}"))?;
    let rounded = format!("{tot:.6}");
    ensure(rounded == "0.522703", || format!("total rounds to {rounded}"))?;
    Ok(format!("L_CE {ce:.12}, L_CL {cl}, total {tot:.12}"))
}

fn gradient_fd() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        worst = worst.max(gradient_check(seed, 8, 32, 4, None));
    }
    // Full-width hidden layer, sampled coordinates.
    for seed in 1000..1003 {
        worst = worst.max(gradient_check(seed, 8, 1024, 4, Some(400)));
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:e}"))?;
    within_budget(start, Duration::from_secs(30))?;
    Ok(format!(
        "max relative error {worst:.1e} over 100 seeds in {:.2?}",
        start.elapsed()
    ))
}

fn table_row_macc(row: &[f64], published: f64) -> std::result::Result<f64, String> {
    let subsets = row
        .iter()
        .enumerate()
        .map(|(i, &acc)| SubsetAccuracy {
            generator: format!("g{i}"),
            real_acc: acc,
            fake_acc: acc,
            balanced_acc: acc,
            n_real: 1,
            n_fake: 1,
        })
        .collect();
    let report = EvalReport::from_subsets("benchmark", subsets, 0.5).map_err(|e| e.to_string())?;
    ensure((report.macc - published).abs() <= 0.005, || {
        format!("mAcc {} vs {published}", report.macc)
    })?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("row.json");
    emit_report(&report, &path, ReportFormat::Json).map_err(|e| e.to_string())?;
    let back = read_report_json(&path).map_err(|e| e.to_string())?;
    let recomputed = back.subsets.iter().map(|s| s.balanced_acc).sum::<f64>() / back.subsets.len() as f64;
    ensure((recomputed - back.macc).abs() < 1e-9, || {
        format!("emitted mAcc {} vs recomputed {recomputed}", back.macc)
    })?;
    Ok(report.macc)
}

fn table_arithmetic() -> Outcome {
    let a = table_row_macc(&CONTRIQUE_ROW, CONTRIQUE_MACC)?;
    let b = table_row_macc(&DRCT_UNIVFD_ROW, DRCT_UNIVFD_MACC)?;
    Ok(format!(
        "mAcc {a:.5} (published {CONTRIQUE_MACC}), {b:.5} (published {DRCT_UNIVFD_MACC})"
    ))
}

fn synthetic_separability() -> Outcome {
    let start = Instant::now();
    let fs = gaussian_blobs(500, 16, 10.0, 7);
    let cfg = TrainConfig::default();
    let model = train(&fs, &cfg).map_err(|e| e.to_string())?;
    let correct = fs
        .records
        .iter()
        .filter(|r| {
            let p = model.predict_f32(&r.features).unwrap();
            (p >= 0.5) == (r.label == Label::Fake)
        })
        .count();
    let acc = 100.0 * correct as f64 / fs.len() as f64;
    ensure(acc >= 99.0, || format!("train accuracy {acc}%"))?;
    let again = train(&fs, &cfg).map_err(|e| e.to_string())?;
    let (a, b) = (encode_model(&model).unwrap(), encode_model(&again).unwrap());
    ensure(a == b, || "models from identical seeds differ".into())?;
    within_budget(start, Duration::from_secs(60))?;
    Ok(format!(
        "train accuracy {acc:.1}% after {} epochs, byte-identical rerun, {:.1?}",
        cfg.epochs,
        start.elapsed()
    ))
}

/// Draws from a generalized Gaussian with shape `alpha` and scale `beta`,
/// optionally with a different scale on the left.
fn ggd_draws(alpha: f64, beta_l: f64, beta_r: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Gamma::new(1.0 / alpha, 1.0).unwrap();
    let p_left = beta_l / (beta_l + beta_r);
    (0..n)
        .map(|_| {
            let mag = g.sample(&mut rng).powf(1.0 / alpha);
            if rng.random_bool(p_left) {
                -beta_l * mag
            } else {
                beta_r * mag
            }
        })
        .collect()
}

fn nss_recovery() -> Outcome {
    let mut notes = Vec::new();
    for (i, alpha) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let fit = fit_ggd(&ggd_draws(alpha, 1.3, 1.3, 100_000, 10 + i as u64)).map_err(|e| e.to_string())?;
        let err = (fit.alpha - alpha).abs() / alpha;
        ensure(err < 0.1, || format!("GGD alpha {alpha}: estimated {}", fit.alpha))?;
        notes.push(format!("a={alpha}->{:.3}", fit.alpha));
    }
    for (i, (alpha, bl, br)) in [(0.8, 0.5, 1.5), (1.5, 2.0, 0.7), (2.0, 1.0, 1.8)]
        .into_iter()
        .enumerate()
    {
        let fit = fit_aggd(&ggd_draws(alpha, bl, br, 100_000, 20 + i as u64)).map_err(|e| e.to_string())?;
        // Per-side mean squares of a shape-alpha draw.
        let k = gamma(3.0 / alpha) / gamma(1.0 / alpha);
        let (want_l, want_r) = (bl * bl * k, br * br * k);
        let (sl, sr) = fit.shape_scales();
        for (got, want, what) in [
            (fit.beta_l2, want_l, "left mean square"),
            (fit.beta_r2, want_r, "right mean square"),
            (sl * sl, bl * bl, "left scale squared"),
            (sr * sr, br * br, "right scale squared"),
        ] {
            ensure((got - want).abs() / want < 0.1, || {
                format!("AGGD {what}: {got} vs {want}")
            })?;
        }
    }
    let flat = ImagePlane::filled(40, 32, Channels::Rgb3, 117.0).map_err(|e| e.to_string())?;
    let m = mscn(&flat).map_err(|e| e.to_string())?;
    ensure(m.data.iter().all(|&v| v == 0.0), || {
        "MSCN of a constant image is not zero".into()
    })?;
    Ok(format!(
        "GGD {}; AGGD scales within 10%; constant MSCN exactly 0",
        notes.join(", ")
    ))
}

fn calibration_optimality() -> Outcome {
    let mut margin = f64::INFINITY;
    for seed in 0..100 {
        let (scores, labels) = calibration_fixture(seed);
        let t = calibrate_scores(&scores, &labels).map_err(|e| e.to_string())?;
        let ours = grid_balanced(&scores, &labels, t);
        let grid = grid_best(&scores, &labels);
        ensure(ours >= grid, || format!("fixture {seed}: {ours} < grid {grid}"))?;
        margin = margin.min(ours - grid);
    }
    Ok(format!("100 fixtures, never beaten (smallest lead {margin:.2e})"))
}

fn random_feature_set(seed: u64, dim: usize, n: usize) -> FeatureSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|i| {
            let fake = i % 2 == 1;
            FeatureRecord {
                id: format!("img/{i:03}-é"),
                label: if fake { Label::Fake } else { Label::Real },
                sample_type: if fake { SampleType::Fake } else { SampleType::RealRecon },
                generator: if fake { "sdv1.4".into() } else { String::new() },
                split: [Split::Train, Split::Val, Split::Test][i % 3],
                features: (0..dim).map(|_| rng.random_range(-1e3f32..1e3)).collect(),
            }
        })
        .collect();
    FeatureSet::new("stub-8", dim, records).unwrap()
}

fn format_round_trips() -> Outcome {
    let fs = random_feature_set(1, 8, 25);
    let bytes = encode_feature_file(&fs).map_err(|e| e.to_string())?;
    let back = decode_feature_file(&bytes).map_err(|e| e.to_string())?;
    ensure(back == fs, || "feature set changed across round trip".into())?;
    ensure(encode_feature_file(&back).unwrap() == bytes, || {
        "feature file re-encoding differs".into()
    })?;
    ensure(decode_feature_file(&bytes[..bytes.len() - 1]).is_err(), || {
        "truncated feature file accepted".into()
    })?;
    let mut bad = bytes.clone();
    bad[bytes.len() / 2] ^= 0x10;
    ensure(decode_feature_file(&bad).is_err(), || {
        "corrupted feature file accepted".into()
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut model = random_model(8, 64, &mut rng);
    model.threshold = 0.37;
    model.meta.backend_name = "stub-8".into();
    model.meta.config_digest = "abc".into();
    let mbytes = encode_model(&model).map_err(|e| e.to_string())?;
    let mback = decode_model(&mbytes).map_err(|e| e.to_string())?;
    ensure(mback == model, || "model changed across round trip".into())?;
    ensure(encode_model(&mback).unwrap() == mbytes, || {
        "model re-encoding differs".into()
    })?;
    ensure(decode_model(&mbytes[..mbytes.len() - 1]).is_err(), || {
        "truncated model accepted".into()
    })?;
    let mut mbad = mbytes.clone();
    mbad[40] ^= 0x01;
    ensure(decode_model(&mbad).is_err(), || "corrupted model accepted".into())?;
    Ok(format!(
        "feature file {} bytes, model {} bytes; truncation and CRC damage rejected",
        bytes.len(),
        mbytes.len()
    ))
}

fn robustness_harness() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = write_toy_corpus(dir.path(), 100, 64, 3).map_err(|e| e.to_string())?;
    let features = extract_features(&manifest, &Backend::Nss, None).map_err(|e| e.to_string())?;
    let model = train(&features.split_view(Split::Train), &TrainConfig::default()).map_err(|e| e.to_string())?;
    let plain = evaluate(&model, &features.split_view(Split::Test), None).map_err(|e| e.to_string())?;

    let blur: Vec<Degradation> = Degradation::parse_sweep("blur:1,2,3,4,5").unwrap();
    let jpeg: Vec<Degradation> = Degradation::parse_sweep("jpeg:90,80,70,60,50,40,30").unwrap();
    let blur_curve = robustness_sweep(&model, &manifest, &Backend::Nss, &blur).map_err(|e| e.to_string())?;
    let jpeg_curve = robustness_sweep(&model, &manifest, &Backend::Nss, &jpeg).map_err(|e| e.to_string())?;
    ensure(blur_curve.len() == 6, || {
        format!("blur sweep has {} points", blur_curve.len())
    })?;
    ensure(jpeg_curve.len() == 8, || {
        format!("jpeg sweep has {} points", jpeg_curve.len())
    })?;
    for curve in [&blur_curve, &jpeg_curve] {
        let clean = &curve[0];
        ensure(clean.level == "none", || "first point is not the clean baseline".into())?;
        ensure(
            clean.macc.to_bits() == plain.macc.to_bits() && clean.subsets == plain.subsets,
            || {
                format!(
                    "clean baseline {} differs from plain evaluation {}",
                    clean.macc, plain.macc
                )
            },
        )?;
    }
    let q100 =
        robustness_sweep(&model, &manifest, &Backend::Nss, &[Degradation::Jpeg(100)]).map_err(|e| e.to_string())?;
    let gap = (q100[1].macc - plain.macc).abs();
    ensure(gap <= 2.0, || {
        format!("jpeg:100 mAcc {} vs clean {}", q100[1].macc, plain.macc)
    })?;
    within_budget(start, Duration::from_secs(300))?;
    let fmt =
        |c: &[pfd_core::eval::CurvePoint]| c.iter().map(|p| format!("{:.1}", p.macc)).collect::<Vec<_>>().join("/");
    Ok(format!(
        "clean {:.1}, blur {}, jpeg {}, jpeg:100 {:.1}, {:.1?}",
        plain.macc,
        fmt(&blur_curve),
        fmt(&jpeg_curve),
        q100[1].macc,
        start.elapsed()
    ))
}

fn augmentation_invariants() -> Outcome {
    let img = natural_image(48, 40, 9);
    ensure(horizontal_flip(&horizontal_flip(&img)) == img, || {
        "double flip changed the image".into()
    })?;
    let off = apply_policy(&img, &AugmentPolicy::identity(), 17).map_err(|e| e.to_string())?;
    ensure(off == img, || "all-zero policy changed the image".into())?;
    let always = AugmentPolicy {
        probabilities: Probabilities::uniform(1.0),
        seed: 4,
        ..Default::default()
    };
    let a = apply_policy(&img, &always, 3).map_err(|e| e.to_string())?;
    let b = apply_policy(&img, &always, 3).map_err(|e| e.to_string())?;
    ensure(
        a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()),
        || "same seed gave different augmentations".into(),
    )?;
    let mut prev = laplacian_variance(&img);
    for sigma in 1..=5 {
        let v = laplacian_variance(&gaussian_blur(&img, f64::from(sigma)).map_err(|e| e.to_string())?);
        ensure(v < prev, || format!("Laplacian variance rose at sigma {sigma}"))?;
        prev = v;
    }
    Ok("flip involution, identity policy, seeded replay, blur monotone".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("loss oracle equivalence", loss_oracle),
        ("analytic loss values", analytic_losses),
        ("gradient correctness", gradient_fd),
        ("benchmark-row arithmetic", table_arithmetic),
        ("synthetic separability", synthetic_separability),
        ("NSS estimator recovery", nss_recovery),
        ("calibration optimality", calibration_optimality),
        ("format round-trips", format_round_trips),
        ("robustness harness", robustness_harness),
        ("augmentation invariants", augmentation_invariants),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS [{:02}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{:02}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
