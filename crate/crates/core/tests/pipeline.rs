use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use tsmia::config::ExperimentConfig;
use tsmia::eval::summary::RunReport;
use tsmia::pipeline::{cmd_run, cmd_synth, load_population};
use tsmia::report::{cmd_report, summarize_bundle};
use tsmia::series::{ingest_csv, write_csv};

const TINY: &str = r#"
schema_version = 1
seeds = [7]

[data]
source = "synthetic"
users = 12
length = 300

[windowing]
lookback = 20
horizon = 5
stride = 2

[split]
train = 3
val = 2
test = 3
aux = 4

[forecaster]
hidden = [16]
max_epochs = 10
batch_size = 64

[shadows]
count = 4

[game]
samples_per_class = 100

[[attacks]]
kind = "lira"

[[attacks]]
kind = "lira"
signals = ["mse"]
variance = "global"

[[attacks]]
kind = "rmia"
signal = "mae"
population_size = 100

[[attacks]]
kind = "ensemble"
signals = ["mse", "mae", "trend"]

[[attacks]]
kind = "dts"
max_epochs = 5
"#;

fn tiny(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(TINY).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn tree(root: &Path, skip: &str) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            if !skip.is_empty() && rel.starts_with(skip) {
                continue;
            }
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn mtimes(root: &Path) -> BTreeMap<String, std::time::SystemTime> {
    tree(root, "")
        .into_keys()
        .map(|k| {
            let t = fs::metadata(root.join(&k)).unwrap().modified().unwrap();
            (k, t)
        })
        .collect()
}

#[test]
fn tiny_run_is_quick_and_report_recomputes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("b");
    let start = Instant::now();
    let summary = cmd_run(&tiny(&out)).unwrap();
    assert!(start.elapsed() < Duration::from_secs(60), "took {:?}", start.elapsed());
    assert!(summary.single_run);
    assert!(summary.rows.iter().all(|r| r.std == 0.0 && r.n == 1));

    let names: Vec<&str> = summary.rows.iter().map(|r| r.attack.as_str()).collect();
    for want in [
        "lira-multi-online",
        "lira-multi-offline",
        "lira-mse-offline",
        "rmia-mae-online",
        "ensemble-simplified",
        "dts-offline",
    ] {
        assert!(names.contains(&want), "{want} missing");
    }

    let stored: RunReport = serde_json::from_slice(&fs::read(out.join("seed_7/report.json")).unwrap()).unwrap();
    let again = summarize_bundle(&out).unwrap();
    for a in &stored.attacks {
        for (metric, v) in tsmia::eval::summary::METRICS.iter().zip(a.values()) {
            assert_eq!(again.get(&a.attack, metric).unwrap().mean, v, "{} {metric}", a.attack);
        }
    }
    let (table, csv) = cmd_report(&out).unwrap();
    assert_eq!(table, fs::read_to_string(out.join("summary.txt")).unwrap());
    assert_eq!(csv, fs::read_to_string(out.join("summary.csv")).unwrap());
    assert!(table.contains("lira-multi-online"));

    let roc = fs::read_to_string(out.join("seed_7/roc/lira-multi-online_record.csv")).unwrap();
    assert!(roc.starts_with("threshold,fpr,tpr\ninf,0,0\n"));
    assert!(roc.trim_end().ends_with(",1,1"));
}

#[test]
fn cache_is_reused_and_deleting_it_changes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("b");
    let mut cfg = tiny(&out);
    cfg.attacks.truncate(2);
    cmd_run(&cfg).unwrap();
    let first = tree(&out, "cache");
    let cached = tree(&out.join("cache"), "");
    assert!(cached.keys().any(|k| k.ends_with("manifest.json")));
    assert!(cached.keys().any(|k| k.ends_with("target.json")));

    let stamps = mtimes(&out.join("cache"));
    cmd_run(&cfg).unwrap();
    assert_eq!(tree(&out, "cache"), first);
    assert_eq!(mtimes(&out.join("cache")), stamps, "warm run rewrote the cache");

    fs::remove_dir_all(out.join("cache")).unwrap();
    cmd_run(&cfg).unwrap();
    assert_eq!(tree(&out, "cache"), first);
    assert_eq!(tree(&out.join("cache"), ""), cached);
}

#[test]
fn shadow_count_does_not_touch_the_target() {
    let tmp = tempfile::tempdir().unwrap();
    let mut a = tiny(&tmp.path().join("a"));
    a.attacks.truncate(1);
    let mut b = a.clone();
    b.output_dir = tmp.path().join("b");
    b.shadows.count = 6;
    assert_eq!(a.target_digest(), b.target_digest());
    assert_ne!(a.digest(), b.digest());
    cmd_run(&a).unwrap();
    cmd_run(&b).unwrap();
    let target = |root: &Path| {
        tree(&root.join("cache"), "")
            .into_iter()
            .find(|(k, _)| k.ends_with("target.json"))
            .unwrap()
            .1
    };
    assert_eq!(target(&a.output_dir), target(&b.output_dir));
}

#[test]
fn unknown_attack_is_rejected_before_any_work() {
    let text = TINY.replace("kind = \"dts\"", "kind = \"shokri\"");
    assert!(ExperimentConfig::from_toml(&text).is_err());
    let text = TINY.replace("signal = \"mae\"", "signal = \"rsmape\"");
    assert!(ExperimentConfig::from_toml(&text).is_err());
}

#[test]
fn stage_errors_name_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(&tmp.path().join("b"));
    cfg.data = tsmia::config::DataSource::Csv {
        path: tmp.path().join("missing.csv"),
    };
    let err = cmd_run(&cfg).unwrap_err().to_string();
    assert!(err.contains("stage `data`"), "{err}");

    let mut cfg = tiny(&tmp.path().join("c"));
    cfg.game.samples_per_class = 5000;
    let err = cmd_run(&cfg).unwrap_err().to_string();
    assert!(err.contains("stage `games`"), "{err}");
}

#[test]
fn empty_bundle_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(cmd_report(tmp.path()).is_err());
}

#[test]
fn synth_is_deterministic_and_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    let (p1, p2) = (tmp.path().join("a.csv"), tmp.path().join("b.csv"));
    cmd_synth(&cfg, &p1).unwrap();
    cmd_synth(&cfg, &p2).unwrap();
    let bytes = fs::read(&p1).unwrap();
    assert_eq!(bytes, fs::read(&p2).unwrap());

    let back = ingest_csv(&p1).unwrap();
    assert_eq!(back, load_population(&cfg).unwrap());
    let mut again = Vec::new();
    write_csv(&back, &mut again).unwrap();
    assert_eq!(again, bytes);

    let mut one = cfg.clone();
    if let tsmia::config::DataSource::Synthetic(s) = &mut one.data {
        s.users = 1;
    }
    let p3 = tmp.path().join("one.csv");
    cmd_synth(&one, &p3).unwrap();
    assert_eq!(ingest_csv(&p3).unwrap().len(), 1);
}

#[test]
fn csv_source_matches_synthetic_source() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(&tmp.path().join("syn"));
    cfg.attacks.truncate(1);
    let csv = tmp.path().join("pop.csv");
    cmd_synth(&cfg, &csv).unwrap();
    let from_syn = cmd_run(&cfg).unwrap();
    let mut from_csv = cfg.clone();
    from_csv.output_dir = tmp.path().join("csv");
    from_csv.data = tsmia::config::DataSource::Csv { path: csv };
    let s = cmd_run(&from_csv).unwrap();
    let values = |x: &tsmia::eval::summary::Summary| x.rows.iter().map(|r| r.mean).collect::<Vec<_>>();
    assert_eq!(values(&s), values(&from_syn));
}
