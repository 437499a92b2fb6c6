use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ssdespeckle::data::{read_raster, synthetic::natural_scene, write_raster, ImageRaster};
use ssdespeckle::network::{save_model, Model, ModelConfig};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssdespeckle"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_model(dir: &Path) -> PathBuf {
    let path = dir.join("m.bdsm");
    save_model(&path, &Model::<f32>::build(ModelConfig::scaled(8).unwrap(), 1).unwrap()).unwrap();
    path
}

#[test]
fn simulate_fixed_looks_writes_raster_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean");
    std::fs::create_dir(&clean).unwrap();
    write_raster(&natural_scene(24, 20, 1).unwrap(), clean.join("a.pgm")).unwrap();
    std::fs::write(clean.join("notes.txt"), "not a raster").unwrap();
    let out = dir.path().join("out");
    ok(&["simulate", "--clean", s(&clean), "--looks", "4", "--seed", "3", "--out", s(&out)]);

    let y = read_raster(out.join("a.bdsr")).unwrap();
    assert_eq!((y.width, y.height), (24, 20));
    let sidecar = std::fs::read_to_string(out.join("speckle.csv")).unwrap();
    let lines: Vec<&str> = sidecar.lines().collect();
    assert_eq!(lines[0], "file,looks,seed");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("a.bdsr,4,"), "{}", lines[1]);
    assert!(out.join("config.toml").exists());
}

#[test]
fn simulate_interval_draws_per_image_looks_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean");
    std::fs::create_dir(&clean).unwrap();
    for i in 0..20 {
        write_raster(&natural_scene(16, 16, i).unwrap(), clean.join(format!("img{i:02}.pgm"))).unwrap();
    }
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["simulate", "--clean", s(&clean), "--looks", "1:10", "--seed", "9", "--out", s(out)]);
    }
    let sidecar = std::fs::read_to_string(a.join("speckle.csv")).unwrap();
    let mut looks: Vec<f64> = sidecar.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(looks.len(), 20);
    assert!(looks.iter().all(|l| (1.0..=10.0).contains(l)));
    looks.sort_by(f64::total_cmp);
    looks.dedup();
    assert_eq!(looks.len(), 20);
    for i in 0..20 {
        let name = format!("img{i:02}.bdsr");
        assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap());
    }
    assert_eq!(sidecar, std::fs::read_to_string(b.join("speckle.csv")).unwrap());
}

#[test]
fn train_fixture_reduces_loss_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures();
    ok(&[
        "--config",
        s(&f.join("tiny.toml")),
        "--out",
        s(dir.path()),
        "train",
        "--manifest",
        s(&f.join("manifest.txt")),
    ]);
    for name in ["model.bdsm", "train_log.csv", "epochs.csv", "timing.csv", "config.toml", "checkpoints/state.bdst"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    assert!(dir.path().join("checkpoints/epoch_005.bdsm").exists());
    let log = std::fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
    let losses: Vec<f64> = log.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    let k = losses.len() / 3;
    let head = losses[..k].iter().sum::<f64>() / k as f64;
    let tail = losses[losses.len() - k..].iter().sum::<f64>() / k as f64;
    assert!(tail < head, "loss did not decrease: {head} -> {tail}");

    // the echo reproduces the run
    let echo = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    let cfg = ssdespeckle_cli::RunConfig::parse(&echo).unwrap();
    assert_eq!(cfg.seed, 11);
    assert_eq!(cfg.model.scale_factor, 8);
}

#[test]
fn train_modes_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures();
    let cfg = f.join("tiny.toml");
    let manifest = f.join("manifest.txt");
    for mode in ["supervised", "self_supervised"] {
        let out = dir.path().join(mode);
        ok(&[
            "--config",
            s(&cfg),
            "--out",
            s(&out),
            "train",
            "--manifest",
            s(&manifest),
            "--mode",
            mode,
            "--max-iterations",
            "2",
        ]);
        let echo = std::fs::read_to_string(out.join("config.toml")).unwrap();
        assert!(echo.contains(&format!("mode = \"{mode}\"")));
    }

    let bad = run(&["train", "--manifest", s(&manifest), "--mode", "noisy"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("Usage"));

    let missing = dir.path().join("absent/manifest.txt");
    let out = run(&["train", "--manifest", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&missing)));

    let broken = dir.path().join("broken.toml");
    std::fs::write(&broken, "[trainer]\nepochs = \"many\"\n").unwrap();
    let out = run(&["--config", s(&broken), "train", "--manifest", s(&manifest)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn despeckle_preserves_size_and_writes_preview() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path());
    let input = dir.path().join("in.bdsr");
    write_raster(&natural_scene(112, 112, 4).unwrap(), &input).unwrap();
    let out = dir.path().join("out");
    ok(&["despeckle", "--checkpoint", s(&model), "--preview", "--out", s(&out), s(&input)]);
    let y = read_raster(out.join("in.bdsr")).unwrap();
    assert_eq!((y.width, y.height), (112, 112));
    let preview = read_raster(out.join("in.pgm")).unwrap();
    assert_eq!((preview.width, preview.height), (112, 112));
}

#[test]
fn despeckle_tiled_equals_untiled() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path());
    let input = dir.path().join("big.bdsr");
    write_raster(&natural_scene(300, 260, 2).unwrap(), &input).unwrap();
    let (tiled, whole) = (dir.path().join("t"), dir.path().join("w"));
    ok(&["despeckle", "--checkpoint", s(&model), "--tile", "128", "--out", s(&tiled), s(&input)]);
    ok(&["despeckle", "--checkpoint", s(&model), "--tile", "512", "--out", s(&whole), s(&input)]);
    let a = read_raster(tiled.join("big.bdsr")).unwrap();
    let b = read_raster(whole.join("big.bdsr")).unwrap();
    let worst = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
    assert!(worst <= 1e-5, "tiled differs by {worst}");
}

#[test]
fn despeckle_rejects_corrupt_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path());
    let mut bytes = std::fs::read(&model).unwrap();
    bytes[0] = b'X';
    std::fs::write(&model, bytes).unwrap();
    let input = dir.path().join("in.bdsr");
    write_raster(&ImageRaster::filled(8, 8, 0.5).unwrap(), &input).unwrap();
    let out = run(&["despeckle", "--checkpoint", s(&model), "--out", s(dir.path()), s(&input)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));
}

fn write_identity_pairs(dir: &Path) -> PathBuf {
    let img = natural_scene(40, 40, 6).unwrap();
    write_raster(&img, dir.join("x.bdsr")).unwrap();
    std::fs::write(dir.join("regions.txt"), "field 2 2 20 20\ntarget point 30 30 6 6\n").unwrap();
    let pairs = dir.join("pairs.txt");
    std::fs::write(&pairs, "same x.bdsr x.bdsr x.bdsr regions.txt\n").unwrap();
    pairs
}

#[test]
fn evaluate_identity_values_and_byte_identical_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = write_identity_pairs(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["evaluate", "--pairs", s(&pairs), "--out", s(&a)]);
    ok(&["evaluate", "--pairs", s(&pairs), "--out", s(&b), "--threads", "2"]);
    let csv = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(csv, std::fs::read_to_string(b.join("metrics.csv")).unwrap());
    assert_eq!(csv.lines().next(), Some("image,index,region,value"));
    for row in [
        "same,psnr,,99.000000",
        "same,ssim,,1.000000",
        "same,mor,field,1.000000",
        "same,epd_roa,field,1.000000",
        "same,tcr,target,0.000000",
        "mean,psnr,,99.000000",
    ] {
        assert!(csv.lines().any(|l| l == row), "missing `{row}` in\n{csv}");
    }
    let enl = |prefix: &str| csv.lines().find(|l| l.starts_with(prefix)).unwrap().rsplit(',').next().unwrap().to_string();
    assert_eq!(enl("same,enl,field,"), enl("same,enl_speckled,field,"));
}

#[test]
fn evaluate_names_index_missing_its_inputs() {
    let dir = tempfile::tempdir().unwrap();
    write_identity_pairs(dir.path());
    let pairs = dir.path().join("noregions.txt");
    std::fs::write(&pairs, "same x.bdsr x.bdsr x.bdsr\n").unwrap();
    let out = run(&["evaluate", "--pairs", s(&pairs), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`enl`"));

    // restricting the indexes or supplying shared regions fixes it
    ok(&["evaluate", "--pairs", s(&pairs), "--out", s(dir.path()), "--indexes", "psnr,ssim"]);
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.contains(",psnr") || l.contains(",ssim")));
    let regions = dir.path().join("regions.txt");
    ok(&["evaluate", "--pairs", s(&pairs), "--out", s(dir.path()), "--regions", s(&regions)]);
}
