use std::path::{Path, PathBuf};
use std::process::Command as Process;

use funcgrasp::dataset::{read_record_file, write_record_file, GraspRecord};
use funcgrasp::geometry::io::parse_ply;
use funcgrasp::hand::{load_hand, PosedHand};
use funcgrasp::net::CHECKPOINT_VERSION;
use funcgrasp_cli::commands::{self, format_cm, part_colors, summarize, FUNCTIONAL_COLOR, GRASPING_COLOR};
use funcgrasp_cli::{
    run, Cli, CliError, Command, EvalArgs, ExportArgs, FilterArgs, SampleArgs, Status, SynthesizeArgs, TrainArgs,
};
use tempfile::TempDir;

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn hand_file(name: &str) -> PathBuf {
    assets().join(format!("hands/{name}.json"))
}

/// A directory holding only the named fixture objects.
fn object_dir(tmp: &TempDir, names: &[&str]) -> PathBuf {
    let dir = tmp.path().join("objects");
    std::fs::create_dir_all(&dir).unwrap();
    for n in names {
        for ext in ["obj", "json"] {
            std::fs::copy(assets().join(format!("objects/{n}.{ext}")), dir.join(format!("{n}.{ext}"))).unwrap();
        }
    }
    dir
}

fn synth_args(tmp: &TempDir, out: &str, n: usize, scales: Option<usize>, seed: u64) -> SynthesizeArgs {
    SynthesizeArgs {
        hand: hand_file("four_finger_16dof"),
        object_dir: object_dir(tmp, &["cylinder"]),
        out: tmp.path().join(out),
        config: None,
        n,
        seed,
        scales,
    }
}

fn exec(command: Command) -> Result<(Status, String), CliError> {
    let mut out = Vec::new();
    let status = run(&Cli { command }, &mut out)?;
    Ok((status, String::from_utf8(out).unwrap()))
}

fn binary() -> Process {
    Process::new(env!("CARGO_BIN_EXE_funcgrasp"))
}

fn records(path: &Path) -> Vec<GraspRecord> {
    read_record_file(path, false).unwrap().records
}

#[test]
fn synthesize_writes_one_record_per_run_and_scale() {
    let tmp = TempDir::new().unwrap();
    let args = synth_args(&tmp, "out.jsonl", 4, Some(2), 3);
    let (status, report) = exec(Command::Synthesize(args)).unwrap();
    assert_eq!(status, Status::Success);
    let rs = records(&tmp.path().join("out.jsonl"));
    assert_eq!(rs.len(), 8);
    let mut scales: Vec<f64> = rs.iter().map(|r| r.scale).collect();
    scales.dedup();
    assert_eq!(scales.len(), 2);
    assert!(rs.iter().all(|r| r.hand_id == "four_finger_16dof" && r.object_id == "cylinder"));
    assert!(report.contains("wrote 8 records from 8 runs"), "{report}");
}

#[test]
fn synthesize_defaults_to_fifteen_scales() {
    let tmp = TempDir::new().unwrap();
    exec(Command::Synthesize(synth_args(&tmp, "out.jsonl", 1, None, 0))).unwrap();
    let rs = records(&tmp.path().join("out.jsonl"));
    assert_eq!(rs.len(), 15);
    let mut scales: Vec<f64> = rs.iter().map(|r| r.scale).collect();
    scales.dedup();
    assert_eq!(scales.len(), 15);
}

#[test]
fn synthesize_is_byte_deterministic_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let dir = object_dir(&tmp, &["cylinder"]);
    let mut outputs = Vec::new();
    for (k, threads) in ["1", "3", "1"].iter().enumerate() {
        let out = tmp.path().join(format!("run{k}.jsonl"));
        let run = binary()
            .env("FUNCGRASP_THREADS", threads)
            .arg("synthesize")
            .arg(hand_file("four_finger_16dof"))
            .arg(&dir)
            .arg(&out)
            .args(["--n", "3", "--scales", "2", "--seed", "11"])
            .output()
            .unwrap();
        assert!(run.status.success());
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn synthesize_reports_total_failure_with_exit_two() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("config.toml");
    // the four-finger hand has no little finger
    std::fs::write(&config, "[optimizer]\nfunctional_modes = [\"little\"]\n").unwrap();
    let out = binary()
        .arg("synthesize")
        .arg(hand_file("four_finger_16dof"))
        .arg(object_dir(&tmp, &["cylinder"]))
        .arg(tmp.path().join("out.jsonl"))
        .arg("--config")
        .arg(&config)
        .args(["--n", "2", "--scales", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(records(&tmp.path().join("out.jsonl")).is_empty());
}

#[test]
fn unreadable_inputs_exit_one_with_a_message() {
    let tmp = TempDir::new().unwrap();
    let out = binary()
        .arg("synthesize")
        .arg(tmp.path().join("missing_hand.json"))
        .arg(object_dir(&tmp, &["cylinder"]))
        .arg(tmp.path().join("out.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing_hand.json"), "{err}");

    let empty = tmp.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let mut args = synth_args(&tmp, "out.jsonl", 1, Some(1), 0);
    args.object_dir = empty;
    assert!(matches!(exec(Command::Synthesize(args)), Err(CliError::Input(_))));

    let out = binary().env("FUNCGRASP_THREADS", "zero").arg("eval").arg("x").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

/// A small synthesized record file shared by the filter and eval tests.
fn small_dataset(tmp: &TempDir) -> PathBuf {
    exec(Command::Synthesize(synth_args(tmp, "data.jsonl", 3, Some(1), 5))).unwrap();
    tmp.path().join("data.jsonl")
}

fn filter_args(input: &Path, out: &Path) -> FilterArgs {
    FilterArgs {
        input: input.into(),
        out: out.into(),
        thresholds: None,
    }
}

#[test]
fn filter_keeps_passing_files_unchanged() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(&tmp);
    let mut rs = records(&data);
    for r in &mut rs {
        r.metrics.d_g = 0.01;
        r.metrics.d_f = 0.001;
        r.metrics.d_ip = 0.0;
        r.metrics.d_sp = 0.0;
    }
    write_record_file(&data, "four_finger_16dof", &rs).unwrap();
    let out = tmp.path().join("kept.jsonl");
    let mut report = Vec::new();
    let summary = commands::filter(&filter_args(&data, &out), &mut report).unwrap();
    assert_eq!(summary.kept, 3);
    assert_eq!(std::fs::read(&data).unwrap(), std::fs::read(&out).unwrap());
}

#[test]
fn filter_counts_rejections_per_metric() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(&tmp);
    let mut rs = records(&data);
    for r in &mut rs {
        r.metrics.d_g = 0.01;
        r.metrics.d_f = 0.001;
        r.metrics.d_ip = 0.0;
        r.metrics.d_sp = 0.0;
    }
    rs[1].metrics.d_f = 0.003;
    rs[2].metrics.d_ip = 0.01;
    rs[2].metrics.d_f = 0.003;
    write_record_file(&data, "four_finger_16dof", &rs).unwrap();
    let out = tmp.path().join("kept.jsonl");
    let mut report = Vec::new();
    let summary = commands::filter(&filter_args(&data, &out), &mut report).unwrap();
    assert_eq!(summary.kept, 1);
    assert_eq!(summary.rejected_by, [0, 2, 1, 0]);
    assert_eq!(records(&out), vec![rs[0].clone()]);
    let report = String::from_utf8(report).unwrap();
    assert!(report.contains("kept 1, rejected 2"), "{report}");

    let strict = tmp.path().join("strict.toml");
    std::fs::write(&strict, "max_dg = 0.001\n").unwrap();
    let args = FilterArgs {
        thresholds: Some(strict),
        ..filter_args(&data, &out)
    };
    let summary = commands::filter(&args, &mut Vec::new()).unwrap();
    assert_eq!((summary.kept, summary.rejected_by[0]), (0, 3));
}

#[test]
fn filter_handles_empty_and_malformed_input() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty.jsonl");
    write_record_file(&empty, "four_finger_16dof", &[]).unwrap();
    let out = tmp.path().join("out.jsonl");
    let run = binary().arg("filter").arg(&empty).arg(&out).output().unwrap();
    assert!(run.status.success());
    assert_eq!(std::fs::read(&empty).unwrap(), std::fs::read(&out).unwrap());

    let data = small_dataset(&tmp);
    let mut text = std::fs::read_to_string(&data).unwrap();
    text.push_str("{\"broken\": true}\n");
    std::fs::write(&data, text).unwrap();
    let output = binary().arg("filter").arg(&data).arg(&out).output().unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("finished with 1 warnings"), "{stdout}");
    assert!(String::from_utf8_lossy(&output.stderr).contains(":5:"));
}

#[test]
fn eval_reports_category_means_in_centimetres() {
    assert_eq!(format_cm(0.016734), "1.673");
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(&tmp);
    let mut rs = records(&data);
    rs.truncate(1);
    write_record_file(&data, "four_finger_16dof", &rs).unwrap();
    let mut out = Vec::new();
    let summary = commands::eval(&EvalArgs { input: data.clone() }, &mut out).unwrap();
    assert_eq!(summary.len(), 1);
    let s = &summary[0];
    let m = rs[0].metrics;
    assert_eq!((s.d_g, s.d_f, s.d_ip, s.d_sp), (m.d_g, m.d_f, m.d_ip, m.d_sp));
    assert_eq!(s.wrench_rate, m.wrench_resistant as u8 as f64);
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains(&format_cm(m.d_g)), "{text}");
}

#[test]
fn eval_orders_categories_by_name() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(&tmp);
    let mut rs = records(&data);
    rs[0].category = "zebra".into();
    rs[1].category = "apple".into();
    let names: Vec<String> = summarize(&rs).into_iter().map(|s| s.category).collect();
    assert_eq!(names, ["apple", "cylinder", "zebra"]);
}

#[test]
fn eval_of_an_empty_file_fails() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty.jsonl");
    write_record_file(&empty, "four_finger_16dof", &[]).unwrap();
    let out = binary().arg("eval").arg(&empty).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

const TINY: &str = "epochs = 3\nbatch_size = 4\nlatent_dim = 4\nn_points = 64\npoint_widths = [16]\n\
embedding = 16\nencoder_hidden = 16\ndecoder_widths = [32]\nhand_points = 64\n";

fn train_tiny(tmp: &TempDir) -> (PathBuf, PathBuf) {
    let data = small_dataset(tmp);
    let settings = tmp.path().join("train.toml");
    std::fs::write(&settings, TINY).unwrap();
    let ckpt = tmp.path().join("model.fgc");
    let (_, report) = exec(Command::Train(TrainArgs {
        dataset: data,
        hand: hand_file("four_finger_16dof"),
        checkpoint: ckpt.clone(),
        settings: Some(settings),
        objects: object_dir(tmp, &["cylinder"]),
        curves: None,
    }))
    .unwrap();
    assert!(report.contains("trained on 3 records for 3 epochs"), "{report}");
    (ckpt.clone(), ckpt.with_extension("loss.csv"))
}

fn sample_args(tmp: &TempDir, ckpt: &Path, out: &str, seed: u64) -> SampleArgs {
    SampleArgs {
        checkpoint: ckpt.into(),
        object: object_dir(tmp, &["cylinder"]).join("cylinder.obj"),
        out: tmp.path().join(out),
        hand: hand_file("four_finger_16dof"),
        n: 5,
        seed,
        scale: None,
        config: None,
    }
}

#[test]
fn train_then_sample_produces_evaluable_records() {
    let tmp = TempDir::new().unwrap();
    let (ckpt, curves) = train_tiny(&tmp);
    let csv = std::fs::read_to_string(&curves).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("epoch,loss_rec,loss_kld\n"));

    exec(Command::Sample(sample_args(&tmp, &ckpt, "a.jsonl", 1))).unwrap();
    let rs = records(&tmp.path().join("a.jsonl"));
    assert_eq!(rs.len(), 5);
    assert!(rs.iter().all(|r| r.provenance == funcgrasp::dataset::Provenance::Sampled));
    let hand = load_hand(&hand_file("four_finger_16dof")).unwrap();
    let obj = funcgrasp::affordance::load_object(
        &assets().join("objects/cylinder.obj"),
        &assets().join("objects/cylinder.json"),
    )
    .unwrap();
    let fresh = funcgrasp::quality::evaluate_metrics(
        &hand,
        &rs[0].config,
        &obj,
        funcgrasp::synthesis::OptimizerSettings::default().contact_threshold,
        &Default::default(),
    )
    .unwrap();
    assert_eq!(fresh, rs[0].metrics);
    let run = binary().arg("eval").arg(tmp.path().join("a.jsonl")).output().unwrap();
    assert!(run.status.success());

    exec(Command::Sample(sample_args(&tmp, &ckpt, "b.jsonl", 1))).unwrap();
    exec(Command::Sample(sample_args(&tmp, &ckpt, "c.jsonl", 2))).unwrap();
    let a = std::fs::read(tmp.path().join("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(tmp.path().join("b.jsonl")).unwrap());
    assert_ne!(a, std::fs::read(tmp.path().join("c.jsonl")).unwrap());
}

#[test]
fn hand_mismatches_are_refused() {
    let tmp = TempDir::new().unwrap();
    let (ckpt, _) = train_tiny(&tmp);
    let mut args = sample_args(&tmp, &ckpt, "x.jsonl", 0);
    args.hand = hand_file("five_finger_22dof");
    assert!(matches!(exec(Command::Sample(args)), Err(CliError::Input(_))));

    let out = binary()
        .arg("train")
        .arg(tmp.path().join("data.jsonl"))
        .arg(hand_file("five_finger_22dof"))
        .arg(tmp.path().join("other.fgc"))
        .arg("--objects")
        .arg(object_dir(&tmp, &["cylinder"]))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("five_finger_22dof"));
}

#[test]
fn checkpoint_version_mismatch_is_refused() {
    let tmp = TempDir::new().unwrap();
    let (ckpt, _) = train_tiny(&tmp);
    let mut bytes = std::fs::read(&ckpt).unwrap();
    bytes[8..12].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
    std::fs::write(&ckpt, bytes).unwrap();
    let out = binary()
        .arg("sample")
        .arg(&ckpt)
        .arg(object_dir(&tmp, &["cylinder"]).join("cylinder.obj"))
        .arg(tmp.path().join("s.jsonl"))
        .arg("--hand")
        .arg(hand_file("four_finger_16dof"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));
}

fn export_args(tmp: &TempDir, records: &Path, index: usize) -> ExportArgs {
    ExportArgs {
        records: records.into(),
        index,
        out_dir: tmp.path().join("export"),
        hand: hand_file("four_finger_16dof"),
        objects: object_dir(tmp, &["cylinder"]),
    }
}

#[test]
fn export_writes_valid_coloured_ply_files() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(&tmp);
    let record = records(&data)[2].clone();
    let files = commands::export(&export_args(&tmp, &data, 2), &mut Vec::new()).unwrap();

    for path in [&files.object, &files.parts, &files.hand] {
        let bytes = std::fs::read(path).unwrap();
        assert!(bytes.starts_with(b"ply\nformat ascii 1.0\n"));
        parse_ply(&bytes).unwrap();
    }

    let hand = load_hand(&hand_file("four_finger_16dof")).unwrap();
    let posed = PosedHand::new(&hand, &record.config).unwrap();
    let (verts, _) = parse_ply(&std::fs::read(&files.hand).unwrap()).unwrap();
    assert!(!verts.is_empty());
    for v in &verts {
        let d = (0..hand.links.len())
            .flat_map(|l| posed.link_primitives(l))
            .map(|p| p.signed_distance(v).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(d <= 1e-6, "vertex {v:?} is {d} from the posed hand");
    }

    let obj = funcgrasp::affordance::load_object(
        &assets().join("objects/cylinder.obj"),
        &assets().join("objects/cylinder.json"),
    )
    .unwrap()
    .rescaled(record.scale)
    .unwrap();
    let colors = part_colors(&obj);
    let tagged = |c: [u8; 3]| -> Vec<usize> { (0..colors.len()).filter(|&i| colors[i] == c).collect() };
    let only_f: Vec<usize> = obj.functional.iter().copied().filter(|i| !obj.grasping.contains(i)).collect();
    let only_g: Vec<usize> = obj.grasping.iter().copied().filter(|i| !obj.functional.contains(i)).collect();
    assert_eq!(tagged(FUNCTIONAL_COLOR), only_f);
    assert_eq!(tagged(GRASPING_COLOR), only_g);
    let text = std::fs::read_to_string(&files.parts).unwrap();
    let body: Vec<&str> = text.split("end_header\n").nth(1).unwrap().lines().collect();
    assert_eq!(body.len(), obj.surface.len());
    let red = format!(" {} {} {}", FUNCTIONAL_COLOR[0], FUNCTIONAL_COLOR[1], FUNCTIONAL_COLOR[2]);
    assert_eq!(body.iter().filter(|l| l.ends_with(&red)).count(), only_f.len());
}

#[test]
fn export_refuses_a_bad_index() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(&tmp);
    let out = binary()
        .arg("export")
        .arg(&data)
        .arg("3")
        .arg(tmp.path().join("export"))
        .arg("--hand")
        .arg(hand_file("four_finger_16dof"))
        .arg("--objects")
        .arg(object_dir(&tmp, &["cylinder"]))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of range"));
}
