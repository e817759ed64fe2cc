//! End-to-end runs of the binary: outputs, determinism and exit statuses.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use focalstream::{tokenfile, wav};
use focalstream_core::AudioBuffer;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_focalstream")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tone(seconds: f64, rate: u32) -> AudioBuffer {
    let n = (seconds * rate as f64) as usize;
    AudioBuffer::new(rate, (0..n).map(|i| 0.3 * (i as f32 * 0.07).sin() + 0.1 * (i as f32 * 0.011).cos()).collect())
}

struct Fixture {
    dir: TempDir,
    model: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let model = dir.path().join("model.fcsw");
        let o = run(&["init", "--out", p(&model), "--seed", "3"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        Fixture { dir, model }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn wav(&self, name: &str, audio: &AudioBuffer) -> PathBuf {
        let path = self.path(name);
        wav::write_pcm16(&path, audio).unwrap();
        path
    }
}

#[test]
fn one_second_gives_fifty_tokens_and_streaming_matches_offline() {
    let f = Fixture::new();
    let input = f.wav("in.wav", &tone(1.0, 16_000));
    let (off, on) = (f.path("off.fcst"), f.path("on.fcst"));
    assert_eq!(code(&run(&["encode", "--model", p(&f.model), "--in", p(&input), "--out", p(&off)])), 0);
    let o =
        run(&["encode", "--model", p(&f.model), "--in", p(&input), "--out", p(&on), "--stream", "--chunk-ms", "20"]);
    assert_eq!(code(&o), 0);
    let a = std::fs::read(&off).unwrap();
    assert_eq!(a, std::fs::read(&on).unwrap());
    assert_eq!(tokenfile::from_bytes(&a).unwrap().tokens.len(), 50);

    let (wa, wb) = (f.path("off.wav"), f.path("on.wav"));
    assert_eq!(code(&run(&["decode", "--model", p(&f.model), "--in", p(&off), "--out", p(&wa)])), 0);
    assert_eq!(code(&run(&["decode", "--model", p(&f.model), "--in", p(&off), "--out", p(&wb), "--stream"])), 0);
    let (x, y) = (wav::read(&wa).unwrap(), wav::read(&wb).unwrap());
    assert_eq!(x.sample_rate, 24_000);
    assert_eq!(x.samples.len(), 24_000);
    let diff = x.samples.iter().zip(&y.samples).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    assert!(diff <= 1e-5, "{diff}");

    let s = stdout(&run(&["stats", "--in", p(&off)]));
    assert!(s.contains("tokens: 50"), "{s}");
    assert!(s.contains("theoretical bitrate: 0.400 kbps"), "{s}");
}

#[test]
fn empty_audio_round_trips_to_empty_outputs() {
    let f = Fixture::new();
    let input = f.wav("empty.wav", &AudioBuffer::new(16_000, Vec::new()));
    let tokens = f.path("empty.fcst");
    assert_eq!(code(&run(&["encode", "--model", p(&f.model), "--in", p(&input), "--out", p(&tokens)])), 0);
    assert_eq!(tokenfile::from_bytes(&std::fs::read(&tokens).unwrap()).unwrap().tokens.len(), 0);
    let out = f.path("empty_out.wav");
    assert_eq!(code(&run(&["decode", "--model", p(&f.model), "--in", p(&tokens), "--out", p(&out)])), 0);
    assert!(wav::read(&out).unwrap().samples.is_empty());
}

#[test]
fn input_errors_exit_2() {
    let f = Fixture::new();
    let garbage = f.path("garbage.wav");
    std::fs::write(&garbage, b"not a wav file at all").unwrap();
    let out = f.path("x.fcst");
    assert_eq!(code(&run(&["encode", "--model", p(&f.model), "--in", p(&garbage), "--out", p(&out)])), 2);

    let wrong_rate = f.wav("8k.wav", &tone(0.5, 8_000));
    assert_eq!(code(&run(&["encode", "--model", p(&f.model), "--in", p(&wrong_rate), "--out", p(&out)])), 2);
    assert_eq!(
        code(&run(&["encode", "--model", p(&f.model), "--in", p(&wrong_rate), "--out", p(&out), "--stream"])),
        2
    );

    let bad_tokens = f.path("bad.fcst");
    std::fs::write(&bad_tokens, b"XXXX\x01\x00").unwrap();
    let wav_out = f.path("y.wav");
    assert_eq!(code(&run(&["decode", "--model", p(&f.model), "--in", p(&bad_tokens), "--out", p(&wav_out)])), 2);
    assert_eq!(code(&run(&["stats", "--in", p(&bad_tokens)])), 2);
    assert_eq!(code(&run(&["audit", "--set", "no_such_key=1"])), 2);
}

#[test]
fn model_errors_exit_3() {
    let f = Fixture::new();
    let input = f.wav("in.wav", &tone(0.2, 16_000));
    let out = f.path("x.fcst");
    let missing = f.path("missing.fcsw");
    assert_eq!(code(&run(&["encode", "--model", p(&missing), "--in", p(&input), "--out", p(&out)])), 3);
    let corrupt = f.path("corrupt.fcsw");
    let bytes = std::fs::read(&f.model).unwrap();
    std::fs::write(&corrupt, &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(code(&run(&["encode", "--model", p(&corrupt), "--in", p(&input), "--out", p(&out)])), 3);
}

#[test]
fn usage_and_stage_order_errors_exit_4() {
    let f = Fixture::new();
    let dir = f.path("run");
    assert_eq!(code(&run(&["distill", "--stage", "3", "--out", p(&dir)])), 4);
    assert_eq!(code(&run(&["distill", "--stage", "4", "--no-stage4", "--out", p(&dir)])), 4);
    assert_eq!(code(&run(&["distill", "--stage", "9", "--out", p(&dir)])), 4);
    assert_eq!(code(&run(&["frobnicate"])), 4);
}

#[test]
fn audit_reports_full_size_latencies() {
    let s = stdout(&run(&["audit", "--set", "preset=full"]));
    assert!(s.contains("total theoretical latency: 80 ms"), "{s}");
    assert!(s.contains("bitrate: 0.55 kbps"), "{s}");
    let s = stdout(&run(&["audit", "--set", "preset=full", "--set", "attn_chunk=1"]));
    assert!(s.contains("total theoretical latency: 20 ms"), "{s}");
}

#[test]
fn staged_distillation_is_deterministic() {
    let f = Fixture::new();
    let small = [
        "--set",
        "train_items=2",
        "--set",
        "heldout_items=1",
        "--set",
        "item_seconds=1",
        "--set",
        "stage1_steps=2",
        "--set",
        "stage2_steps=2",
        "--set",
        "stage3_steps=2",
        "--set",
        "stage4_steps=2",
    ];
    let report = |dir: &Path, extra: &[&str]| {
        let mut args = vec!["distill", "--seed", "7", "--out", p(dir)];
        args.extend_from_slice(extra);
        args.extend_from_slice(&small);
        let o = run(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(dir.join("report.txt")).unwrap()
    };
    let a = report(&f.path("a"), &[]);
    let b = report(&f.path("b"), &[]);
    assert_eq!(a, b);
    assert!(f.path("a").join("model.fcsw").exists());

    let skipped = report(&f.path("c"), &["--no-stage4"]);
    assert!(skipped.contains("w/o stage-4"), "{skipped}");
    let plain = report(&f.path("d"), &["--no-refiner"]);
    assert!(plain.contains("w/o refiner"), "{plain}");

    // One stage at a time, picking up the previous stage's weights.
    let staged = f.path("e");
    for stage in ["1", "2", "3", "4"] {
        report(&staged, &["--stage", stage]);
    }
    assert!(staged.join("stage4.fcsw").exists());
}
