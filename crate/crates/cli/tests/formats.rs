use dforce_cli::checkpoint::{decode, encode, load, save};
use dforce_cli::config::ExperimentConfig;
use dforce_cli::frames::{csv_text, emit_frames, read_csv, strip_bytes, FrameFormat};
use dforce_core::flow::{Denoiser, DenoiserConfig, LatentSequence};
use dforce_core::rng::{normal_vec, seeded};

fn model() -> Denoiser {
    let cfg = DenoiserConfig { hidden: 6, time_freqs: 3, num_prompts: 2, ..DenoiserConfig::new(4, 5) };
    Denoiser::new(cfg, &mut seeded(1)).unwrap()
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let m = model();
    let back = decode(&encode(&m)).unwrap();
    assert_eq!(back.config(), m.config());
    assert_eq!(back.params(), m.params());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.dfck");
    save(&m, &path).unwrap();
    assert_eq!(load(&path).unwrap().params(), m.params());
}

#[test]
fn checkpoint_header_layout() {
    let bytes = encode(&model());
    assert_eq!(&bytes[..4], b"DFCK");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
    let count = u64::from_le_bytes(bytes[28..36].try_into().unwrap()) as usize;
    assert_eq!(bytes.len(), 36 + 8 * count);
}

#[test]
fn corrupt_checkpoints_rejected() {
    let bytes = encode(&model());
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(decode(&bad_magic).unwrap_err().to_string().contains("magic"));
    let mut bad_version = bytes.clone();
    bad_version[4] = 9;
    assert!(decode(&bad_version).unwrap_err().to_string().contains("version"));
    assert!(decode(&bytes[..bytes.len() - 8]).is_err());
    assert!(decode(&bytes[..10]).is_err());
    let mut wrong_shape = bytes.clone();
    wrong_shape[12] = 7;
    assert!(decode(&wrong_shape).is_err());
}

#[test]
fn csv_round_trips_floats() {
    let data: Vec<f64> = normal_vec(&mut seeded(3), 12).into_iter().map(|x| x * 1e-7 + 1.0 / 3.0).collect();
    let seq = LatentSequence::new(3, 4, data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_frames(&seq, FrameFormat::Csv, dir.path(), "s").unwrap();
    assert_eq!(files.len(), 1);
    let back = read_csv(&files[0]).unwrap();
    assert_eq!(back.data(), seq.data());
    assert_eq!(csv_text(&seq).lines().count(), 1 + seq.frames());
}

#[test]
fn constant_sequence_gives_identical_images() {
    let seq = LatentSequence::new(5, 9, vec![0.25; 45]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_frames(&seq, FrameFormat::Pgm, dir.path(), "c").unwrap();
    assert_eq!(files.len(), 5);
    let first = std::fs::read(&files[0]).unwrap();
    for f in &files[1..] {
        assert_eq!(std::fs::read(f).unwrap(), first);
    }
}

#[test]
fn image_count_matches_frames() {
    let seq = LatentSequence::new(7, 4, normal_vec(&mut seeded(5), 28)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(emit_frames(&seq, FrameFormat::Pgm, dir.path(), "x").unwrap().len(), 7);
    assert!(strip_bytes(&seq).unwrap().starts_with(b"P5"));
}

#[test]
fn non_square_dimension_rejects_images() {
    let seq = LatentSequence::new(2, 3, vec![0.0; 6]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = emit_frames(&seq, FrameFormat::Pgm, dir.path(), "x").unwrap_err();
    assert!(err.to_string().contains("perfect square"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

const MINIMAL: &str = r#"
kind = "blob"
[data]
dim = 4
frames = 6
[train]
learning_rate = 1e-3
batch_size = 8
steps = 10
"#;

#[test]
fn config_round_trips() {
    let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
    let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(cfg, again);
}

#[test]
fn missing_field_is_named() {
    let text = MINIMAL.replace("batch_size = 8\n", "");
    let err = format!("{:#}", ExperimentConfig::from_toml(&text).unwrap_err());
    assert!(err.contains("batch_size"), "{err}");
}

#[test]
fn unknown_key_rejected() {
    let text = MINIMAL.replace("frames = 6", "frames = 6\nframez = 7");
    let err = format!("{:#}", ExperimentConfig::from_toml(&text).unwrap_err());
    assert!(err.contains("framez"), "{err}");
}

#[test]
fn invalid_values_fail_with_field_names() {
    let err = format!("{:#}", ExperimentConfig::from_toml(&MINIMAL.replace("dim = 4", "dim = 0")).unwrap_err());
    assert!(err.contains("data.dim"), "{err}");
    let text = format!("{MINIMAL}\n[rollout]\nf_prev = 2\nf_new = 3\ntotal_frames = 20\n");
    let err = format!("{:#}", ExperimentConfig::from_toml(&text).unwrap_err());
    assert!(err.contains("data.frames"), "{err}");
}
