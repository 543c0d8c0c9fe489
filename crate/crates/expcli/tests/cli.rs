use std::path::Path;
use std::process::Command;

use mbppol_cli::{read_log, run_experiment, Aggregate, RunConfig, SeedSummary, LOG_HEADER};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mbppol"))
}

fn chain_config(out: &Path) -> String {
    format!(
        r#"{{
  "agent": "ppo",
  "env": {{ "name": "chain3" }},
  "seeds": [3, 4],
  "budget": 3000,
  "episodes_per_epoch": 16,
  "ppo": {{ "actor_hidden": [8], "critic_hidden": [8], "minibatch_size": 0, "update_iters": 5 }},
  "lagrange": {{ "cost_limit": 0.5, "beta": 1.0 }},
  "execution": "sequential",
  "out_dir": {:?}
}}"#,
        out.display().to_string()
    )
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_keys_are_rejected() {
    let err = RunConfig::from_json(r#"{ "budgett": 10 }"#).unwrap_err();
    assert!(err.to_string().contains("budgett"), "{err}");
    let err = RunConfig::from_json(r#"{ "ppo": { "clip": 0.1 } }"#).unwrap_err();
    assert!(err.to_string().contains("clip"), "{err}");
}

#[test]
fn empty_config_takes_defaults() {
    let cfg = RunConfig::from_json("{}").unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(cfg.model_based.pr_threshold, 0.66);
    assert_eq!(cfg.model_based.model_horizon, 80);
    assert_eq!(cfg.lagrange.beta, 0.02);
    assert_eq!(cfg.seeds.len(), 5);
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 4);
}

#[test]
fn invalid_values_are_rejected() {
    assert!(RunConfig::from_json(r#"{ "seeds": [] }"#).is_err());
    assert!(RunConfig::from_json(r#"{ "seeds": [1, 1] }"#).is_err());
    assert!(RunConfig::from_json(r#"{ "model_based": { "model_horizon": 500 } }"#).is_err());
    assert!(RunConfig::from_json(r#"{ "env": { "name": "gridworld" } }"#).is_err());
}

#[test]
fn plain_ppo_logs_cost_with_zero_multiplier() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_json(&chain_config(dir.path())).unwrap();
    let report = run_experiment(&cfg).unwrap();
    assert!(report.failures.is_empty());
    for seed in [3, 4] {
        let seed_dir = dir.path().join(format!("seed_{seed}"));
        for f in ["log.csv", "timing.csv", "checkpoint.json", "config.json", "summary.json"] {
            assert!(seed_dir.join(f).is_file(), "missing {f}");
        }
        let rows = read_log(&seed_dir.join("log.csv")).unwrap();
        assert!(!rows.is_empty());
        assert!(rows.iter().all(|r| r.lambda == 0.0));
        assert!(rows.iter().any(|r| r.avg_cost_return > 0.0));
        assert!(rows.windows(2).all(|w| w[0].interactions < w[1].interactions));
        assert!(rows.windows(2).all(|w| w[0].cumulative_violations <= w[1].cumulative_violations));
        let summary: SeedSummary = read(&seed_dir.join("summary.json"));
        assert_eq!(summary.seed, seed);
        assert_eq!(summary.agent, "ppo");
        assert_eq!(summary.feasible, summary.final_cost <= 0.5);
        assert_eq!(summary.cumulative_violations, rows.last().unwrap().cumulative_violations);
        let snapshot: RunConfig = read(&seed_dir.join("config.json"));
        assert_eq!(snapshot.seeds, vec![seed]);
    }
    let agg: Aggregate = read(&dir.path().join("aggregate.json"));
    assert_eq!(agg.seeds.len(), 2);
    let rewards: Vec<f64> = agg.seeds.iter().map(|s| s.final_reward).collect();
    let mean = agg.final_reward.unwrap().mean;
    assert!((mean - (rewards[0] + rewards[1]) / 2.0).abs() < 1e-12);
    assert!(!dir.path().join("failures.json").exists());
}

#[test]
fn cli_run_is_byte_reproducible_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, chain_config(&dir.path().join("unused"))).unwrap();
    let mut logs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = bin()
            .args(["run", "--config"])
            .arg(&cfg_path)
            .args(["--seed", "7", "--agent", "ppo_lagrangian", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let seeds: Vec<_> = std::fs::read_dir(&out)
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().starts_with("seed_"))
            .collect();
        assert_eq!(seeds.len(), 1);
        let log = std::fs::read_to_string(out.join("seed_7/log.csv")).unwrap();
        assert_eq!(log.lines().next().unwrap(), LOG_HEADER.join(","));
        let summary: SeedSummary = read(&out.join("seed_7/summary.json"));
        assert_eq!(summary.agent, "ppo_lagrangian");
        logs.push(log);
    }
    assert_eq!(logs[0], logs[1]);
    assert!(!dir.path().join("unused").exists());
}

#[test]
fn cli_rejects_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, chain_config(dir.path())).unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg_path).args(["--agent", "sac"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sac"));
    let out = bin().args(["run", "--config"]).arg(dir.path().join("missing.json")).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn aborted_seed_leaves_partial_results_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let text = chain_config(dir.path()).replace(r#""update_iters": 5"#, r#""update_iters": 5, "actor_lr": 1e300"#);
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, &text).unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg_path).output().unwrap();
    assert!(!out.status.success());
    let failures: Vec<serde_json::Value> = read(&dir.path().join("failures.json"));
    assert_eq!(failures.len(), 2);
    assert!(failures[0]["error"].as_str().unwrap().contains("aborted"));
    assert!(dir.path().join("seed_3/log.csv").is_file());
    assert!(dir.path().join("aggregate.json").is_file());
}

#[test]
fn baseline_normalization() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("ppo");
    let lag = dir.path().join("lag");
    let mut cfg = RunConfig::from_json(&chain_config(&base)).unwrap();
    run_experiment(&cfg).unwrap();
    cfg.agent = mbppol::lagrangian_ppo::Agent::PpoLagrangian;
    cfg.out_dir = lag.clone();
    run_experiment(&cfg).unwrap();

    let out = bin()
        .args(["baseline-normalize", "--dir"])
        .arg(&lag)
        .arg("--baseline-dir")
        .arg(&base)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let norm: serde_json::Value = read(&lag.join("normalized.json"));
    let seeds = norm["seeds"].as_array().unwrap();
    assert_eq!(seeds.len(), 2);
    for s in seeds {
        let seed = s["seed"].as_u64().unwrap();
        let summary: SeedSummary = read(&base.join(format!("seed_{seed}/summary.json")));
        assert_eq!(s["baseline"]["agent"], "ppo");
        assert_eq!(s["baseline"]["value"].as_f64().unwrap(), summary.cumulative_violations as f64);
        let rows = read_log(&lag.join(format!("seed_{seed}/log.csv"))).unwrap();
        let series = s["cumulative_violations"].as_array().unwrap();
        for (r, v) in rows.iter().zip(series) {
            let expect = r.cumulative_violations as f64 / summary.cumulative_violations as f64;
            assert_eq!(v.as_f64().unwrap(), expect);
        }
    }

    std::fs::remove_dir_all(base.join("seed_4")).unwrap();
    let out = bin()
        .args(["baseline-normalize", "--dir"])
        .arg(&lag)
        .arg("--baseline-dir")
        .arg(&base)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("ppo") && err.contains("seed 4"), "{err}");
}

#[test]
fn aggregate_command_rebuilds_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_json(&chain_config(dir.path())).unwrap();
    let report = run_experiment(&cfg).unwrap();
    std::fs::remove_file(dir.path().join("aggregate.json")).unwrap();
    let out = bin().args(["aggregate", "--dir"]).arg(dir.path()).output().unwrap();
    assert!(out.status.success());
    let agg: Aggregate = read(&dir.path().join("aggregate.json"));
    assert_eq!(agg, report.aggregate);
}
