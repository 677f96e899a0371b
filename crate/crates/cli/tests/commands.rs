use std::path::Path;

use paraling::signal::write_wav_16bit;
use paraling_cli::commands::{
    cmd_evaluate, cmd_extract, cmd_init_xvector, cmd_predict, cmd_stats, cmd_train, cmd_train_ivector, IvectorTraining,
    Status,
};
use paraling_cli::config::ExperimentConfig;
use paraling_cli::error::CliError;
use paraling_cli::manifest::Manifest;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Decaying harmonic complex; `f0` sets both pitch and brightness.
fn tone(f0: f64, secs: f64, seed: u64) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = (secs * 8000.0) as usize;
    (0..n)
        .map(|i| {
            let t = i as f64 / 8000.0;
            let v: f64 = (1..8)
                .map(|h| (2.0 * std::f64::consts::PI * f0 * h as f64 * t).sin() / h as f64)
                .sum();
            0.2 * v * (1.0 + 0.3 * (6.0 * t).sin()) + r.random_range(-0.005..0.005)
        })
        .collect()
}

/// Two classes (low and high pitch), `speakers` speakers per class.
fn corpus(dir: &Path, speakers: usize, per_speaker: usize) -> Manifest {
    let mut text = String::from("path,label,speaker,gender\n");
    for s in 0..speakers {
        for u in 0..per_speaker {
            for (label, f0) in [("low", 110.0), ("high", 240.0)] {
                let name = format!("{label}{s}_{u}.wav");
                let seed = (s * 100 + u) as u64 + f0 as u64;
                write_wav_16bit(dir.join(&name), &tone(f0 + 4.0 * s as f64 + u as f64, 0.6, seed), 8000).unwrap();
                text.push_str(&format!("{name},{label},{label}{s},{}\n", if s % 2 == 0 { "m" } else { "f" }));
            }
        }
    }
    std::fs::write(dir.join("manifest.csv"), text).unwrap();
    Manifest::load(dir.join("manifest.csv")).unwrap()
}

fn config(dir: &Path, body: &str) -> ExperimentConfig {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    ExperimentConfig::load(&path).unwrap()
}

#[test]
fn extract_writes_one_row_per_file() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 1, 2);
    let manifest = Manifest::parse(
        &std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap().lines().take(4).collect::<Vec<_>>().join("\n"),
        &manifest.path,
        dir.path(),
    )
    .unwrap();
    let cfg = config(dir.path(), "scheme = \"pho\"\n");
    let out = cmd_extract(&manifest, &cfg, &dir.path().join("f.csv")).unwrap();
    assert_eq!(out.status, Status::Complete);
    let table = std::fs::read_to_string(dir.path().join("f.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.split(',').count() == 29));
    assert!(rows[0].starts_with("source_id,"));
}

#[test]
fn second_run_is_served_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 2, 1);
    let cfg = config(dir.path(), "scheme = \"art+pho\"\ncache_dir = \"cache\"\n");
    let first = cmd_extract(&manifest, &cfg, &dir.path().join("a.csv")).unwrap();
    assert_eq!((first.extraction.cache_hits, first.extraction.cache_misses), (0, 8));
    let second = cmd_extract(&manifest, &cfg, &dir.path().join("b.csv")).unwrap();
    assert_eq!((second.extraction.cache_hits, second.extraction.cache_misses), (8, 0));
    assert_eq!(
        std::fs::read(dir.path().join("a.csv")).unwrap(),
        std::fs::read(dir.path().join("b.csv")).unwrap()
    );

    // a different fusion reuses the per-scheme entries it shares
    let cfg = config(dir.path(), "scheme = \"pho+pro\"\ncache_dir = \"cache\"\n");
    let third = cmd_extract(&manifest, &cfg, &dir.path().join("c.csv")).unwrap();
    assert_eq!((third.extraction.cache_hits, third.extraction.cache_misses), (4, 4));
}

#[test]
fn train_then_predict_separates_classes() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 3, 3);
    let cfg = config(dir.path(), "scheme = \"pro+pho\"\n");
    let model = dir.path().join("model.plm");
    assert_eq!(cmd_train(&manifest, &cfg, 10.0, 0.01, &model).unwrap(), Status::Complete);
    let out = cmd_predict(&model, &manifest, None, &dir.path().join("pred.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(out.csv.as_bytes());
    let header = rows.headers().unwrap().clone();
    assert_eq!(header.iter().collect::<Vec<_>>(), ["source_id", "predicted", "score_high", "score_low"]);
    let mut correct = 0;
    let mut total = 0;
    for r in rows.records() {
        let r = r.unwrap();
        total += 1;
        correct += usize::from(r[0].starts_with(&r[1]));
    }
    assert_eq!(total, 18);
    assert!(correct as f64 / total as f64 >= 0.99, "{correct}/{total}");
}

#[test]
fn predict_rejects_a_different_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 2, 1);
    let model = dir.path().join("model.plm");
    cmd_train(&manifest, &config(dir.path(), "scheme = \"pho\"\n"), 1.0, 0.1, &model).unwrap();
    let other = config(dir.path(), "scheme = \"pro\"\n");
    let err = cmd_predict(&model, &manifest, Some(&other), &dir.path().join("p.csv")).unwrap_err();
    assert!(matches!(err, CliError::Core(paraling::Error::SchemeMismatch { .. })), "{err}");
}

#[test]
fn evaluate_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 5, 2);
    let cfg = config(
        dir.path(),
        "scheme = \"pro\"\nk_outer = 5\nk_inner = 4\nc_exponents = [0, 2]\ngamma_exponents = [-3, -1]\npositive_class = \"high\"\n",
    );
    let out = cmd_evaluate(&manifest, &cfg, &dir.path().join("out")).unwrap();
    assert_eq!(out.status, Status::Complete);
    assert!(out.report.leakage_free());
    assert!(out.report.aggregate.uar >= 0.9, "{}", out.report.aggregate.uar);
    for f in ["report.toml", "metrics.csv", "roc.csv", "predictions.csv"] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
    let report = std::fs::read_to_string(dir.path().join("out/report.toml")).unwrap();
    assert!(report.contains("scheme = \"pro\""));
    assert!(report.contains("positive_class = \"high\""));
}

#[test]
fn embedding_schemes_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 4, 3);
    let iv = dir.path().join("iv.plm");
    let opts = IvectorTraining {
        components: 4,
        rank: 2,
        iterations: 3,
        seed: 1,
    };
    assert_eq!(cmd_train_ivector(&manifest, &opts, &iv).unwrap(), Status::Complete);
    cmd_init_xvector(2, 3, &dir.path().join("xv.plm")).unwrap();
    let cfg = config(
        dir.path(),
        "scheme = \"ivector+xvector\"\nivector_model = \"iv.plm\"\nxvector_model = \"xv.plm\"\n",
    );
    cmd_extract(&manifest, &cfg, &dir.path().join("e.csv")).unwrap();
    let table = std::fs::read_to_string(dir.path().join("e.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 25);
    assert_eq!(rows[0].split(',').count(), 1 + 2 + 512);

    let missing = ExperimentConfig::for_scheme("ivector".parse().unwrap());
    assert!(matches!(
        cmd_extract(&manifest, &missing, &dir.path().join("x.csv")),
        Err(CliError::Usage(_))
    ));
}

fn stats_manifest(dir: &Path, rows: &[(&str, &str, f64)]) -> Manifest {
    let mut text = String::from("path,label,speaker,gender,duration_s\n");
    for (i, (label, gender, d)) in rows.iter().enumerate() {
        text.push_str(&format!("r{i}.wav,{label},spk{i},{gender},{d}\n"));
    }
    Manifest::parse(&text, &dir.join("m.csv"), dir).unwrap()
}

#[test]
fn stats_detects_duration_and_gender_differences() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let mut rows = Vec::new();
    let (neutral, dissatisfied): (Normal<f64>, Normal<f64>) = (Normal::new(3.1, 1.4).unwrap(), Normal::new(3.6, 1.6).unwrap());
    for i in 0..400 {
        rows.push(("neutral", if i % 10 < 6 { "m" } else { "f" }, neutral.sample(&mut r).max(0.3)));
        rows.push(("dissatisfied", if i % 10 < 4 { "m" } else { "f" }, dissatisfied.sample(&mut r).max(0.3)));
    }
    let stats = cmd_stats(&stats_manifest(dir.path(), &rows)).unwrap();
    let counts: Vec<(&str, usize)> = stats.classes.iter().map(|c| (c.label.as_str(), c.count)).collect();
    assert_eq!(counts, [("dissatisfied", 400), ("neutral", 400)]);
    assert_eq!((stats.classes[1].male, stats.classes[1].female), (240, 160));
    assert!(stats.duration_test.as_ref().unwrap().p < 0.05);
    assert!(stats.gender_test.as_ref().unwrap().p < 0.05);
    assert!(stats.to_text().contains("neutral"));
}

#[test]
fn stats_on_identical_classes_finds_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = Vec::new();
    for i in 0..50 {
        let d = 1.0 + (i % 7) as f64 * 0.5;
        let g = if i % 2 == 0 { "m" } else { "f" };
        rows.push(("a", g, d));
        rows.push(("b", g, d));
    }
    let stats = cmd_stats(&stats_manifest(dir.path(), &rows)).unwrap();
    assert!((stats.duration_test.unwrap().p - 1.0).abs() < 1e-12);
    assert!((stats.gender_test.unwrap().p - 1.0).abs() < 1e-12);
}
