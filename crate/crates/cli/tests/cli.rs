use std::path::Path;
use std::process::{Command, Output};

use paradock::epit::{save_checkpoint, Checkpoint, ModelConfig, ModelParams};
use paradock::geometry::rotation_angle_between;
use paradock::linalg::{norm3, sub3};
use paradock::metrics::crmsd;
use paradock::protein_io::parse_pdb;
use paradock::synth::{ligand_path, read_truth, receptor_path, truth_path};

fn paradock(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paradock")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = paradock(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, n: usize, seed: u64) {
    ok(&["synth", "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", s(dir)]);
}

fn small_model() -> ModelConfig {
    ModelConfig {
        embed_dim: 8,
        hidden_dim: 8,
        layers: 1,
        heads: 2,
        m: 3,
        ..Default::default()
    }
}

fn write_params(path: &Path, params: ModelParams) {
    save_checkpoint(path, &Checkpoint::new(params)).unwrap();
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn synth_single_complex_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), 1, 5);
    synth(b.path(), 1, 5);
    assert_eq!(listing(a.path()), vec!["synth_000_ligand.pdb", "synth_000_receptor.pdb", "synth_000_truth.json"]);
    for name in listing(a.path()) {
        assert_eq!(std::fs::read(a.path().join(&name)).unwrap(), std::fs::read(b.path().join(&name)).unwrap());
    }
    let zero = paradock(&["synth", "--n", "0", "--out", s(a.path())]);
    assert_eq!(zero.status.code(), Some(1));
}

#[test]
fn oracle_dock_recovers_the_bound_complex() {
    let data = tempfile::tempdir().unwrap();
    synth(data.path(), 2, 9);
    let out = tempfile::tempdir().unwrap();
    for id in ["synth_000", "synth_001"] {
        let pdb = out.path().join(format!("{id}.pdb"));
        let report = out.path().join(format!("{id}.json"));
        ok(&[
            "dock",
            "--ligand",
            s(&ligand_path(data.path(), id)),
            "--receptor",
            s(&receptor_path(data.path(), id)),
            "--oracle",
            "--truth",
            s(&truth_path(data.path(), id)),
            "--out",
            s(&pdb),
            "--report",
            s(&report),
        ]);
        let truth = read_truth(&truth_path(data.path(), id)).unwrap();
        let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
        assert_eq!(rep["schema_version"], 1);
        let tr: paradock::geometry::RigidTransform = serde_json::from_value(rep["transform"].clone()).unwrap();
        assert!(rotation_angle_between(&tr.rotation, &truth.docking_transform.rotation) < 1e-6);
        assert!(norm3(&sub3(&tr.translation, &truth.docking_transform.translation)) < 1e-6);
        // file coordinates carry three decimals
        let docked = parse_pdb(&std::fs::read_to_string(&pdb).unwrap()).unwrap();
        let bound = truth.bound_complex();
        assert_eq!(docked.chain_ids(), vec!['A', 'B']);
        assert!(crmsd(&bound.coords(), &docked.coords()).unwrap() < 2e-3);
    }
    // the docked complexes score as near-perfect against the truth files
    let batch = out.path().join("docked");
    ok(&["dock", "--pairs-dir", s(data.path()), "--oracle", "--out-dir", s(&batch)]);
    let csv = batch.join("agg.csv");
    let reports = batch.join("reports.json");
    ok(&["eval", "--pred-dir", s(&batch), "--ref-dir", s(data.path()), "--csv", s(&csv), "--report", s(&reports)]);
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("stat,crmsd,irmsd,dockq_lite,fnat,lrmsd"));
    let rows: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(&reports).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r["dockq_lite"].as_f64().unwrap() > 0.999);
    }
}

#[test]
fn batch_dock_is_identical_across_thread_counts() {
    let data = tempfile::tempdir().unwrap();
    synth(data.path(), 4, 3);
    let work = tempfile::tempdir().unwrap();
    let ckpt = work.path().join("model.ckpt");
    write_params(&ckpt, ModelParams::init(&small_model(), 3).unwrap());
    let one = work.path().join("p1");
    let two = work.path().join("p2");
    ok(&["dock", "--threads", "1", "--pairs-dir", s(data.path()), "--params", s(&ckpt), "--out-dir", s(&one)]);
    ok(&["dock", "--threads", "2", "--pairs-dir", s(data.path()), "--params", s(&ckpt), "--out-dir", s(&two)]);
    assert_eq!(listing(&one).len(), 8);
    assert_eq!(listing(&one), listing(&two));
    for name in listing(&one) {
        assert_eq!(std::fs::read(one.join(&name)).unwrap(), std::fs::read(two.join(&name)).unwrap(), "{name}");
    }
}

#[test]
fn no_refine_matches_default_when_theta_is_zero() {
    let data = tempfile::tempdir().unwrap();
    synth(data.path(), 1, 4);
    let work = tempfile::tempdir().unwrap();
    let mut params = ModelParams::init(&small_model(), 4).unwrap();
    let hidden = small_model().hidden_dim;
    params.get_mut("head.f_fc.1.w").unwrap()[3 * hidden..4 * hidden].fill(0.0);
    params.get_mut("head.f_fc.1.b").unwrap()[3] = 0.0;
    let ckpt = work.path().join("theta0.ckpt");
    write_params(&ckpt, params);
    let lig = ligand_path(data.path(), "synth_000");
    let rec = receptor_path(data.path(), "synth_000");
    let run = |name: &str, extra: &[&str]| {
        let out = work.path().join(name);
        let mut args = vec!["dock", "--ligand", s(&lig), "--receptor", s(&rec), "--params", s(&ckpt), "--out", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.pdb", &[]), run("b.pdb", &["--no-refine"]));
}

#[test]
fn missing_input_exits_2_without_output() {
    let work = tempfile::tempdir().unwrap();
    let out = work.path().join("out.pdb");
    let missing = work.path().join("nope.pdb");
    let r = paradock(&["dock", "--ligand", s(&missing), "--receptor", s(&missing), "--params", s(&missing), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
    assert!(String::from_utf8_lossy(&r.stderr).contains("not found"));
}

#[test]
fn eval_exit_codes_and_identity() {
    let data = tempfile::tempdir().unwrap();
    synth(data.path(), 1, 6);
    let work = tempfile::tempdir().unwrap();
    let truth = read_truth(&truth_path(data.path(), "synth_000")).unwrap();
    let bound = work.path().join("bound.pdb");
    std::fs::write(&bound, truth.bound_complex().to_pdb()).unwrap();
    let out = ok(&["eval", "--pred", s(&bound), "--ref", s(&bound)]);
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(rep["crmsd"].as_f64().unwrap() < 1e-9);
    assert!((rep["dockq_lite"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    // one residue short
    let mut short = truth.bound_complex();
    short.chains[0].residues.pop();
    let short_path = work.path().join("short.pdb");
    std::fs::write(&short_path, short.to_pdb()).unwrap();
    assert_eq!(paradock(&["eval", "--pred", s(&short_path), "--ref", s(&bound)]).status.code(), Some(3));

    // ligand moved far away from the receptor
    let apart = truth.bound_ligand_structure().with_coords(&truth.bound_ligand.iter().map(|p| [p[0] + 500.0, p[1], p[2]]).collect::<Vec<_>>());
    let apart_path = work.path().join("apart.pdb");
    std::fs::write(&apart_path, apart.concat(&truth.receptor_structure()).to_pdb()).unwrap();
    let r = paradock(&["eval", "--pred", s(&bound), "--ref", s(&apart_path)]);
    assert_eq!(r.status.code(), Some(4));
    assert!(!String::from_utf8_lossy(&r.stderr).is_empty());
}

fn write_train_config(path: &Path, weights: &str) {
    std::fs::write(
        path,
        format!(
            "learning_rate = 0.001\nepochs = 3\nseed = 2\n{weights}\n[model]\nembed_dim = 8\nhidden_dim = 8\nlayers = 1\nheads = 2\nm = 3\n"
        ),
    )
    .unwrap();
}

#[test]
fn train_is_deterministic_and_writes_checkpoints() {
    let data = tempfile::tempdir().unwrap();
    ok(&["synth", "--n", "3", "--seed", "1", "--out", s(data.path())]);
    let work = tempfile::tempdir().unwrap();
    let cfg = work.path().join("train.toml");
    write_train_config(&cfg, "");
    let run = |name: &str| {
        let out = work.path().join(name);
        ok(&["train", "--config", s(&cfg), "--data", s(data.path()), "--out", s(&out), "--max-steps", "5"]);
        out
    };
    let a = run("a");
    let b = run("b");
    let log_a = std::fs::read_to_string(a.join("steps.jsonl")).unwrap();
    assert_eq!(log_a, std::fs::read_to_string(b.join("steps.jsonl")).unwrap());
    assert_eq!(log_a.lines().count(), 5);
    let first: serde_json::Value = serde_json::from_str(log_a.lines().next().unwrap()).unwrap();
    for key in ["step", "fit", "overlap", "refinement", "dock", "total", "grad_norm", "lr"] {
        assert!(first.get(key).is_some(), "{key}");
    }
    assert!(a.join("final.ckpt").exists() && a.join("best.ckpt").exists());
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["steps"], 5);

    let inspect = ok(&["inspect", s(&a.join("final.ckpt"))]);
    let info: serde_json::Value = serde_json::from_slice(&inspect.stdout).unwrap();
    let n = ModelParams::init(&small_model(), 0).unwrap().len();
    assert_eq!(info["parameters"].as_u64().unwrap() as usize, n);
    assert_eq!(info["config"]["hidden_dim"], 8);
}

#[test]
fn all_zero_weights_warn_and_succeed() {
    let data = tempfile::tempdir().unwrap();
    synth(data.path(), 2, 1);
    let work = tempfile::tempdir().unwrap();
    let cfg = work.path().join("zero.toml");
    write_train_config(&cfg, "[weights]\nfit = 0.0\noverlap = 0.0\nrefinement = 0.0\ndock = 0.0\n");
    let out = work.path().join("run");
    let r = ok(&["train", "--config", s(&cfg), "--data", s(data.path()), "--out", s(&out)]);
    assert!(String::from_utf8_lossy(&r.stderr).contains("NoProgress"));
    assert_eq!(std::fs::read_to_string(out.join("steps.jsonl")).unwrap(), "");

    let cfg2 = work.path().join("plain.toml");
    write_train_config(&cfg2, "");
    let out2 = work.path().join("flags");
    let r = ok(&[
        "train", "--config", s(&cfg2), "--data", s(data.path()), "--out", s(&out2), "--no-fit", "--no-overlap", "--no-ref", "--no-dock",
    ]);
    assert!(String::from_utf8_lossy(&r.stderr).contains("NoProgress"));
    let empty = tempfile::tempdir().unwrap();
    let r = paradock(&["train", "--data", s(empty.path()), "--out", s(&work.path().join("x"))]);
    assert_eq!(r.status.code(), Some(1));
}
