use paraling::classifier::{train_multiclass, MulticlassSvm, SvmParams};
use paraling::container::{load, save, Section, Tensor};
use paraling::embeddings::XVectorWeights;
use paraling::features::{Extractor, FusionSpec};
use paraling::signal::{load_wav, write_wav_16bit, Waveform};
use paraling::Error;

fn chirp(sr: u32, secs: f64) -> Vec<f64> {
    let n = (secs * sr as f64) as usize;
    (0..n)
        .map(|i| {
            let t = i as f64 / sr as f64;
            0.4 * (2.0 * std::f64::consts::PI * (120.0 + 60.0 * t) * t).sin()
        })
        .collect()
}

#[test]
fn wav_at_16k_matches_in_memory_extraction() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.wav");
    write_wav_16bit(&path, &chirp(16000, 1.0), 16000).unwrap();
    let loaded = load_wav(&path).unwrap();
    assert_eq!(loaded.sample_rate(), 16000);

    let spec: FusionSpec = "art+pro+pho".parse().unwrap();
    let ex = Extractor::new();
    let from_file = ex.extract(&loaded, &spec).unwrap();
    let again = ex.extract(&loaded, &spec).unwrap();
    assert_eq!(from_file.dim(), 488 + 78 + 28);
    assert_eq!(from_file.values, again.values);
    assert_eq!(from_file.names.len(), from_file.dim());

    // the quantised file stays close to the float signal
    let direct = Waveform::new(chirp(16000, 1.0), 16000, "c").unwrap();
    let reference = ex.extract(&direct, &spec).unwrap();
    let close = reference
        .values
        .iter()
        .zip(&from_file.values)
        .filter(|(a, b)| (*a - *b).abs() <= 1e-2 * a.abs().max(1.0))
        .count();
    assert!(close as f64 >= 0.95 * reference.dim() as f64, "{close}/{}", reference.dim());
}

#[test]
fn unsupported_and_missing_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.wav");
    assert!(matches!(load_wav(&missing), Err(Error::MissingFile(_)) | Err(Error::Io(_))));
    let junk = dir.path().join("junk.wav");
    std::fs::write(&junk, b"not a wav file at all").unwrap();
    assert!(load_wav(&junk).is_err());
}

#[test]
fn models_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 3) as f64 * 2.0 + 0.01 * i as f64, (i % 5) as f64 * 0.1]).collect();
    let labels: Vec<String> = (0..30).map(|i| format!("k{}", i % 3)).collect();
    let svm = train_multiclass(&x, &labels, &SvmParams::new(1.0, 0.5)).unwrap();
    let path = dir.path().join("svm.plm");
    svm.save(&path).unwrap();
    let back = MulticlassSvm::load(&path).unwrap();
    assert_eq!(svm.predict(&x).unwrap(), back.predict(&x).unwrap());
    let (a, b) = (svm.decision_scores(&x).unwrap(), back.decision_scores(&x).unwrap());
    for (p, q) in a.iter().zip(&b) {
        assert_eq!(p.margins, q.margins);
    }

    let w = XVectorWeights::random(3, 9);
    let xv = dir.path().join("xv.plm");
    w.save(&xv).unwrap();
    let frames: Vec<Vec<f64>> = (0..40).map(|i| (0..24).map(|j| ((i * j) as f64 * 0.01).sin()).collect()).collect();
    assert_eq!(
        paraling::embeddings::xvector_forward(&w, &frames).unwrap(),
        paraling::embeddings::xvector_forward(&XVectorWeights::load(&xv).unwrap(), &frames).unwrap()
    );
}

#[test]
fn container_rejects_truncation_and_bad_magic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.bin");
    let s = Section::new("demo")
        .with_meta("k", "v")
        .with_tensor("t", Tensor::matrix(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
    save(&path, &[s]).unwrap();
    let back = load(&path).unwrap();
    assert_eq!(back[0].meta("k").unwrap(), "v");
    assert_eq!(back[0].tensor("t").unwrap().rows().unwrap(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(load(&path).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(load(&path), Err(Error::Container(_))));
}
