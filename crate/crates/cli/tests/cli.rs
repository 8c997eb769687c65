use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mscfft::flowgraph::{FixedFrame, Frame};
use mscfft::frame_io::{parse_frames, write_frames, FrameData};
use mscfft::metrics::{measure_sqnr, random_pm1_frame, INPUT_AMPLITUDE};
use mscfft::{CFx, FixedFormat, ScalingPolicy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mscfft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mscfft")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_frame(path: &Path, frame: FixedFrame) {
    fs::write(path, write_frames(&[FrameData::Fixed(frame)])).unwrap();
}

fn impulse() -> FixedFrame {
    let f = FixedFormat::q1_11();
    let mut s = vec![CFx::zero(f); 128];
    s[0] = CFx::from_raw(1024, 0, f);
    Frame::natural(s)
}

#[test]
fn impulse_gives_flat_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let (i, o) = (dir.path().join("in.txt"), dir.path().join("out.txt"));
    write_frame(&i, impulse());
    let out = mscfft(&["transform", "--in", i.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("latency_cycles=48"));
    assert!(stdout(&out).contains("throughput_samples_per_cycle=4"));
    let text = fs::read_to_string(&o).unwrap();
    assert!(text.starts_with("# N=128 format=Q1.11 order=natural\n"));
    let FrameData::Fixed(y) = &parse_frames(&text).unwrap()[0] else {
        panic!("fixed output expected")
    };
    // 1024 / 128 = 8 in every bin
    for s in &y.samples {
        let (re, im) = s.raw();
        assert!((re - 8).abs() <= 1 && im.abs() <= 1, "{re} {im}");
    }
}

#[test]
fn transform_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let i = dir.path().join("in.txt");
    let f = FixedFormat::q1_11();
    write_frame(
        &i,
        Frame::natural(
            (0..128)
                .map(|k| CFx::from_raw(k * 13 % 97 - 48, 30 - k % 61, f))
                .collect(),
        ),
    );
    let run = |name: &str| {
        let o = dir.path().join(name);
        let out = mscfft(&[
            "transform",
            "--in",
            i.to_str().unwrap(),
            "--out",
            o.to_str().unwrap(),
            "--order",
            "bitrev",
        ]);
        assert!(out.status.success());
        fs::read(o).unwrap()
    };
    assert_eq!(run("a.txt"), run("b.txt"));
}

#[test]
fn float_flag_sqnr_matches_harness() {
    let dir = tempfile::tempdir().unwrap();
    let (i, o) = (dir.path().join("in.txt"), dir.path().join("ref.txt"));
    let seed = 21;
    let frame = random_pm1_frame(
        &mut ChaCha8Rng::seed_from_u64(seed),
        FixedFormat::q1_11(),
        INPUT_AMPLITUDE,
    );
    write_frame(&i, frame);
    let out = mscfft(&[
        "transform",
        "--in",
        i.to_str().unwrap(),
        "--out",
        o.to_str().unwrap(),
        "--float",
    ]);
    assert!(out.status.success());
    let printed: f64 = stdout(&out)
        .lines()
        .find_map(|l| l.strip_prefix("frame=0 sqnr_db="))
        .unwrap()
        .parse()
        .unwrap();
    let harness = measure_sqnr(1, FixedFormat::q1_11(), ScalingPolicy::PerStage, seed).unwrap();
    assert!(
        (printed - harness.mean_sqnr_db).abs() < 0.01,
        "{printed} vs {}",
        harness.mean_sqnr_db
    );
    assert!(fs::read_to_string(o)
        .unwrap()
        .starts_with("# N=128 format=float order=natural\n"));
}

#[test]
fn parse_errors_exit_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let i = dir.path().join("bad.txt");
    fs::write(&i, "# N=128 format=Q1.11 order=natural\n1 2\n3 oops\n").unwrap();
    let out = mscfft(&["transform", "--in", i.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    assert_eq!(
        mscfft(&["transform", "--in", "/nonexistent/frames.txt"]).status.code(),
        Some(2)
    );
    assert_eq!(mscfft(&["sqnr", "--rounding", "sideways"]).status.code(), Some(2));
    assert_eq!(mscfft(&["bogus"]).status.code(), Some(2));
}

#[test]
fn sqnr_is_reproducible() {
    let a = mscfft(&["sqnr", "--frames", "200", "--seed", "7"]);
    let b = mscfft(&["sqnr", "--frames", "200", "--seed", "7"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let kv = stdout(&mscfft(&["sqnr", "--frames", "50", "--sweep", "--kv"]));
    let lengths: Vec<&str> = kv.lines().filter_map(|l| l.strip_prefix("word_length=")).collect();
    assert_eq!(lengths, ["10", "11", "12", "13", "14", "15", "16"]);
}

#[test]
fn report_lists_allocation_and_recipes() {
    let out = mscfft(&["report"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for line in [
        "stage 4 path 1: {W_16^0, W_16^4}",
        "stage 4 path 2: {W_16^1, W_16^5}",
        "stage 4 path 3: {W_16^2, W_16^6}",
        "stage 4 path 4: {W_16^3, W_16^7}",
        "PEs=28",
        "# 473·x",
        "# 362·x",
        "# 196·x",
        "W16 shared adders: 3",
    ] {
        assert!(text.contains(line), "missing {line:?}");
    }
    let kv = stdout(&mscfft(&["report", "--kv"]));
    assert!(kv.contains("total.pe=28\n"));
    assert!(kv.contains("rotators.TW=4\n"));
    assert!(kv.contains("designe.power_n_mw.reproduces=true\n"));
}

#[test]
fn report_reads_design_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    fs::write(&p, "label,tech_nm,voltage_v,area_mm2\nmine,180,1.8,4.0\n").unwrap();
    let out = mscfft(&["report", "--designs", p.to_str().unwrap(), "--kv"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("mine.area_n_mm2=1.0000\n"));
    fs::write(&p, "label,tech_nm,voltage_v\nmine,-1,1\n").unwrap();
    assert_eq!(
        mscfft(&["report", "--designs", p.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn verify_passes_and_detects_injected_fault() {
    let ok = mscfft(&["verify", "--frames", "50"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    let bad = mscfft(&["verify", "--frames", "10", "--inject-fault"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("FAIL rotator_allocation"));
}
