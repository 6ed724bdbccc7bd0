//! Integration tests driving the compiled `ngt` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

fn ngt(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ngt"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_task_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ngt(
        &["train-expert", "--task", "flying_lobster", "--out-dir", "runs"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("flying_lobster"));
}

#[test]
fn missing_required_flag_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ngt(&["train-expert"], dir.path());
    // clap usage errors exit with status 2, same class as config errors.
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = ngt(&["imitate", "--set", "banana=3"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("banana"));
}

#[test]
fn verify_battery_passes_and_fault_injection_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = ngt(&["verify", "--out", "checks.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}\n{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("all 7 checks passed"));
    let csv = std::fs::read_to_string(dir.path().join("checks.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8, "header plus one row per check");

    let bad = ngt(&["verify", "--inject-sn-fault"], dir.path());
    assert_eq!(bad.status.code(), Some(4), "fault injection must be caught");
    assert!(stdout(&bad).contains("FAIL spectral_normalization_singular_value"));
}

#[test]
fn report_of_a_single_run_reproduces_that_run() {
    let dir = tempfile::tempdir().unwrap();
    let metrics = "step,eval_return_mean,eval_return_norm,reward_loss,critic_loss,actor_loss,alpha\n\
                   100,-5.5,0.25,0.1,0.2,0.3,0.4\n\
                   200,-3.25,0.75,0.1,0.2,0.3,0.4\n";
    std::fs::write(dir.path().join("m.csv"), metrics).unwrap();
    let out = ngt(&["report", "--out", "agg.csv", "m.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let agg = std::fs::read_to_string(dir.path().join("agg.csv")).unwrap();
    let rows: Vec<&str> = agg.lines().collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1], "100,0.25,0.25,0.25,-5.5,1");
    assert_eq!(rows[2], "200,0.75,0.75,0.75,-3.25,1");
}

#[test]
fn report_without_inputs_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ngt(&["report", "--out", "agg.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

/// Full pipeline: train a small expert twice (determinism), generate
/// demonstrations, run a very short imitation, evaluate, aggregate.
#[test]
fn pipeline_roundtrip_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let train = |out_dir: &str| {
        ngt(
            &[
                "train-expert",
                "--task",
                "point_mass_reach",
                "--seed",
                "100",
                "--steps",
                "12000",
                "--out-dir",
                out_dir,
            ],
            dir.path(),
        )
    };
    let a = train("runs_a");
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let b = train("runs_b");
    assert_eq!(b.status.code(), Some(0), "{}", stderr(&b));
    let ck_a = std::fs::read(dir.path().join("runs_a/expert_point_mass_reach_100.ckpt")).unwrap();
    let ck_b = std::fs::read(dir.path().join("runs_b/expert_point_mass_reach_100.ckpt")).unwrap();
    assert_eq!(ck_a, ck_b, "same seed must give a bit-identical checkpoint");
    let refs_a =
        std::fs::read_to_string(dir.path().join("runs_a/refs_point_mass_reach.json")).unwrap();
    let refs_b =
        std::fs::read_to_string(dir.path().join("runs_b/refs_point_mass_reach.json")).unwrap();
    assert_eq!(refs_a, refs_b, "normalization references must be deterministic");

    let gd = ngt(
        &[
            "gen-demos",
            "--task",
            "point_mass_reach",
            "--expert",
            "runs_a/expert_point_mass_reach_100.ckpt",
            "--episodes",
            "3",
            "--rate",
            "10",
            "--out",
            "runs_a/demos.bin",
        ],
        dir.path(),
    );
    assert_eq!(gd.status.code(), Some(0), "{}", stderr(&gd));
    assert!(stdout(&gd).contains("60 transitions"), "{}", stdout(&gd));

    // Mismatched task against the checkpoint metadata is a config error.
    let bad = ngt(
        &[
            "gen-demos",
            "--task",
            "pendulum_swingup",
            "--expert",
            "runs_a/expert_point_mass_reach_100.ckpt",
            "--out",
            "x.bin",
        ],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(2));

    let cfg = "task = point_mass_reach\n\
               demos = runs_a/demos.bin\n\
               refs = runs_a/refs_point_mass_reach.json\n\
               out_dir = runs_a/imit\n\
               seeds = 0\n\
               env_steps = 2000\n\
               eval_every = 1000\n\
               eval_episodes = 2\n\
               hidden = 32\n\
               reward_hidden = 32\n\
               batch_size = 32\n\
               reward_batch = 32\n\
               buffer_capacity = 100000\n";
    std::fs::write(dir.path().join("imit.cfg"), cfg).unwrap();
    let im = ngt(&["imitate", "--config", "imit.cfg"], dir.path());
    assert_eq!(im.status.code(), Some(0), "{}", stderr(&im));
    let metrics = dir.path().join("runs_a/imit/metrics_ngt_point_mass_reach_seed0.csv");
    assert!(metrics.exists());
    assert!(dir.path().join("runs_a/imit/policy_ngt_point_mass_reach_seed0.ckpt").exists());
    assert!(dir.path().join("runs_a/imit/manifest_ngt_point_mass_reach.json").exists());

    // bc1 demands unsubsampled demonstrations; these were rate 10.
    let bc1 = ngt(
        &["imitate", "--config", "imit.cfg", "--set", "method=bc1"],
        dir.path(),
    );
    assert_eq!(bc1.status.code(), Some(2), "{}", stderr(&bc1));

    let ev = ngt(
        &[
            "evaluate",
            "--task",
            "point_mass_reach",
            "--checkpoint",
            "runs_a/imit/policy_ngt_point_mass_reach_seed0.ckpt",
            "--episodes",
            "2",
            "--refs",
            "runs_a/refs_point_mass_reach.json",
        ],
        dir.path(),
    );
    assert_eq!(ev.status.code(), Some(0), "{}", stderr(&ev));
    assert!(stdout(&ev).contains("normalized"));

    let rp = ngt(
        &[
            "report",
            "--out",
            "agg.csv",
            "runs_a/imit/metrics_ngt_point_mass_reach_seed0.csv",
        ],
        dir.path(),
    );
    assert_eq!(rp.status.code(), Some(0), "{}", stderr(&rp));
}
