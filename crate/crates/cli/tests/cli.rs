use std::path::Path;
use std::process::{Command, Output};

use aimrom::rom::{run_pipeline, ModelStore, PipelineConfig};

fn aimrom(args: &[&str], config: &str, dir: &Path) -> Output {
    let path = dir.join("run.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_aimrom"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const CHAFEE_SIM: &str = r#"
[simulate]
model = "chafee"
initial_condition = [1.0, 0.5, 0.1]
final_time = 5.0
dt = 1e-3
"#;

const CHAFEE_PIPELINE: &str = r#"
model = "chafee"
latent_route = "fourier"
dynamics = "truncated"
final_time = 5.0
dt = 1e-3
"#;

#[test]
fn simulate_row_count_and_repeatability() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&aimrom(&["simulate", "--out", a.to_str().unwrap()], CHAFEE_SIM, dir.path()));
    ok(&aimrom(&["simulate", "--out", b.to_str().unwrap()], CHAFEE_SIM, dir.path()));
    let traj = std::fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 5001 + 1);
    assert_eq!(traj.lines().next().unwrap(), "t,a1,a2,a3");
    for f in ["trajectory.csv", "field.csv", "final_field.svg"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let field = std::fs::read_to_string(a.join("field.csv")).unwrap();
    assert_eq!(field.lines().next().unwrap().split(',').count(), 66);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["simulate"]["outputs"]["trajectory.csv"].is_string());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let bad = CHAFEE_SIM.replace("\"chafee\"", "\"chafe\"");
    let out = aimrom(&["simulate", "--out", out_dir.to_str().unwrap()], &bad, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("unknown variant"), "{err}");

    let extra = format!("{CHAFEE_SIM}\nsurprise = 1\n");
    let out = aimrom(&["simulate", "--out", out_dir.to_str().unwrap()], &extra, dir.path());
    assert_eq!(out.status.code(), Some(2));

    let incompatible = format!("[pipeline]\n{CHAFEE_PIPELINE}closure = \"double-dmaps\"\ninitial_condition = [1.0, 0.5, 0.1]\n");
    let out = aimrom(&["postprocess", "--out", out_dir.to_str().unwrap()], &incompatible, dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn blow_up_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
[simulate]
model = "ks"
initial_condition = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]
final_time = 1.0
dt = 1e-2
"#;
    let out = aimrom(&["simulate", "--out", dir.path().join("o").to_str().unwrap()], cfg, dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_model_exits_4_with_aliases() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("models");
    let cfg = format!(
        r#"store = "{}"
[sample]
model = "chafee"
dt = 1e-3
[sample.sampler]
n_trajectories = 4
ic_box = [[0.5, 1.5], [-0.5, 0.5], [-0.2, 0.2]]
transient_time = 1.0
snapshot_stride = 50
t_end = 3.0
seed = 2
[train]
kind = "pod"
alias = "basis"
dataset = "{}"
model = "chafee"
[pipeline]
{CHAFEE_PIPELINE}closure = "mlp"
initial_condition = [1.0, 0.5, 0.1]
"#,
        store.display(),
        dir.path().join("o/dataset.csv").display()
    );
    let o = dir.path().join("o");
    ok(&aimrom(&["sample", "--out", o.to_str().unwrap()], &cfg, dir.path()));
    ok(&aimrom(&["train", "--out", o.to_str().unwrap()], &cfg, dir.path()));
    let out = aimrom(&["postprocess", "--out", o.to_str().unwrap()], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("'closure'") && err.contains("available: basis"), "{err}");
}

#[test]
fn train_is_reproducible_and_pod_energy_written() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let sample = r#"
[sample]
model = "chafee"
dt = 1e-3
[sample.sampler]
n_trajectories = 6
ic_box = [[0.5, 1.5], [-0.5, 0.5], [-0.2, 0.2]]
transient_time = 0.0
snapshot_stride = 100
t_end = 5.0
seed = 4
"#;
    ok(&aimrom(&["sample", "--out", data.to_str().unwrap()], sample, dir.path()));
    let train = |kind: &str, alias: &str, store: &Path, out: &Path| {
        let cfg = format!(
            r#"store = "{}"
[train]
kind = "{kind}"
alias = "{alias}"
dataset = "{}"
model = "chafee"
hidden = [8]
[train.optimizer]
epochs = 20
"#,
            store.display(),
            data.join("dataset.csv").display()
        );
        let o = aimrom(&["train", "--seed", "9", "--out", out.to_str().unwrap()], &cfg, dir.path());
        ok(&o);
        let index: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(store.join("index.json")).unwrap()).unwrap();
        index[alias]["hash"].as_str().unwrap().to_string()
    };
    let h1 = train("closure", "closure", &dir.path().join("s1"), &dir.path().join("t1"));
    let h2 = train("closure", "closure", &dir.path().join("s2"), &dir.path().join("t2"));
    assert_eq!(h1, h2);
    let loss = std::fs::read_to_string(dir.path().join("t1/loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 21);
    assert!(loss.starts_with("epoch,train_loss,val_loss"));

    train("pod", "pod", &dir.path().join("s1"), &dir.path().join("p"));
    let energy = std::fs::read_to_string(dir.path().join("p/energy.csv")).unwrap();
    let last: Vec<f64> = energy.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 3.0);
    assert_eq!(last[3], 1.0);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("t1/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["train"]["seed_override"], 9);
    assert_eq!(manifest["train"]["models"]["closure"], h1.as_str());
    assert_eq!(manifest["train"]["config"]["train"]["optimizer"]["seed"], 9);
}

#[test]
fn postprocess_and_evaluate_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("[pipeline]\n{CHAFEE_PIPELINE}closure = \"euler-galerkin\"\ninitial_condition = [1.0, 0.5, 0.1]\n");
    let o = dir.path().join("o");
    let out = aimrom(&["postprocess", "--out", o.to_str().unwrap()], &cfg, dir.path());
    ok(&out);
    let pipeline: PipelineConfig = toml::from_str::<toml::Table>(&cfg).unwrap()["pipeline"].clone().try_into().unwrap();
    let direct = run_pipeline(&pipeline, &ModelStore::new()).unwrap();
    let metrics: aimrom::eval::MetricsBundle =
        serde_json::from_str(&std::fs::read_to_string(o.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics, direct.metrics);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains(&format!("post-processed {}%", direct.metrics.mape)), "{stdout}");
    let svg = std::fs::read_to_string(o.join("overlay.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);
    assert!(svg.contains("<!-- aimrom"));

    ok(&aimrom(&["evaluate", "--out", o.to_str().unwrap()], &cfg, dir.path()));
    let d: aimrom::eval::ErrorDecomposition =
        serde_json::from_str(&std::fs::read_to_string(o.join("decomposition.json")).unwrap()).unwrap();
    assert_eq!(d, direct.decomposition);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(o.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["postprocess"].is_object() && manifest["evaluate"].is_object());
}

#[test]
fn ensemble_emits_one_row_per_ic() {
    let dir = tempfile::tempdir().unwrap();
    let member = |label: &str, closure: &str| format!("[[ensemble.members]]\nlabel = \"{label}\"\n[ensemble.members.pipeline]\n{CHAFEE_PIPELINE}closure = \"{closure}\"\n");
    let cfg = format!(
        "[ensemble]\nn_ic = 100\nfinal_time = 5.0\nseed = 5\nic_box = [[0.5, 1.5], [-0.5, 0.5], [-0.2, 0.2]]\n{}{}",
        member("raw", "none"),
        member("corrected", "euler-galerkin")
    );
    let o = dir.path().join("o");
    ok(&aimrom(&["ensemble", "--out", o.to_str().unwrap()], &cfg, dir.path()));
    for label in ["raw", "corrected"] {
        let text = std::fs::read_to_string(o.join(format!("samples_{label}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 101, "{label}");
    }
    let long = std::fs::read_to_string(o.join("samples.csv")).unwrap();
    assert_eq!(long.lines().count(), 201);
    let again = dir.path().join("again");
    ok(&aimrom(&["ensemble", "--out", again.to_str().unwrap()], &cfg, dir.path()));
    assert_eq!(std::fs::read(o.join("samples.csv")).unwrap(), std::fs::read(again.join("samples.csv")).unwrap());
}
