//! End-to-end audit runs: split, scale, window, train target and shadows,
//! compute signals, run every configured attack, play the record and user
//! games, and write the report bundle.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::ensemble::ensemble_attack;
use crate::attacks::lira::lira_scores;
use crate::attacks::rmia::rmia_scores;
use crate::attacks::{AttackLabel, AttackScoreSet, ScoreDomain};
use crate::config::{AttackSpec, DataSource, ExperimentConfig};
use crate::dts::{build_dts_dataset, dts_scores, train_dts};
use crate::error::{Error, Result};
use crate::eval::roc::{roc_curve, RocCurve};
use crate::eval::summary::{aggregate_runs, AttackMetrics, RunReport, Summary, METRICS};
use crate::eval::{run_record_game, run_user_game, sample_record_game, sample_user_game};
use crate::forecast::{ForecasterConfig, TrainedForecaster};
use crate::seed::derive_seed;
use crate::series::{
    apply_scaler, fit_scaler_with_fallback, generate_population, ingest_csv, split_users, window_series,
    write_csv, ForecastRecord, PopulationSplit, UserId, UserSeries,
};
use crate::shadow::{
    compute_signal_tensor, plan_shadows, train_one_shadow, AttackMode, MembershipMatrix, RecordsByUser,
    ShadowEnsemble, ShadowPlan, ShadowPlanOptions, SignalTensor,
};
use crate::signals::SignalSet;

/// Attack outputs of one seed, over the record and the user game.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub report: RunReport,
    pub record_sets: Vec<AttackScoreSet>,
    pub user_sets: Vec<AttackScoreSet>,
}

pub fn load_population(cfg: &ExperimentConfig) -> Result<Vec<UserSeries>> {
    match &cfg.data {
        DataSource::Synthetic(s) => generate_population(s),
        DataSource::Csv { path } => ingest_csv(path),
    }
}

/// Writes the configured synthetic population in the long CSV format.
pub fn cmd_synth(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let DataSource::Synthetic(s) = &cfg.data else {
        return Err(Error::Config("synth needs a synthetic data source".into()));
    };
    let population = generate_population(s)?;
    let mut w = std::io::BufWriter::new(fs::File::create(out)?);
    write_csv(&population, &mut w)?;
    w.flush()?;
    Ok(())
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

#[derive(Serialize, Deserialize, PartialEq)]
struct ShadowManifest {
    digest: String,
    seed: u64,
    plan: ShadowPlan,
}

fn cache_target(
    dir: Option<&Path>,
    fit: impl FnOnce() -> Result<TrainedForecaster>,
) -> Result<TrainedForecaster> {
    let Some(dir) = dir else { return fit() };
    let path = dir.join("target.json");
    if path.exists() {
        if let Ok(model) = TrainedForecaster::load(&path) {
            return Ok(model);
        }
    }
    let model = fit()?;
    fs::create_dir_all(dir)?;
    model.save(&path)?;
    Ok(model)
}

fn cache_shadows(
    dir: Option<&Path>,
    manifest: ShadowManifest,
    records: &RecordsByUser,
    fcfg: &ForecasterConfig,
) -> Result<ShadowEnsemble> {
    let plan = manifest.plan.clone();
    let model_path = |d: &Path, i: usize| d.join(format!("model_{i:03}.json"));
    if let Some(d) = dir {
        let m = d.join("manifest.json");
        let matches = fs::read(&m)
            .ok()
            .and_then(|b| serde_json::from_slice::<ShadowManifest>(&b).ok())
            .is_some_and(|old| old == manifest);
        if matches {
            let loaded: Result<Vec<_>> = (0..plan.len())
                .map(|i| TrainedForecaster::load(model_path(d, i)))
                .collect();
            if let Ok(models) = loaded {
                return Ok(ShadowEnsemble { plan, models });
            }
        }
    }
    let models = (0..plan.len())
        .into_par_iter()
        .map(|i| train_one_shadow(&plan, i, records, fcfg))
        .collect::<Result<Vec<_>>>()?;
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
        for (i, m) in models.iter().enumerate() {
            m.save(model_path(d, i))?;
        }
        fs::write(d.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    }
    Ok(ShadowEnsemble { plan, models })
}

fn gather(records: &RecordsByUser, users: &[UserId]) -> Vec<ForecastRecord> {
    let mut users = users.to_vec();
    users.sort();
    users
        .iter()
        .filter_map(|u| records.get(u))
        .flat_map(|r| r.iter().cloned())
        .collect()
}

struct ModeArtifacts {
    ensemble: ShadowEnsemble,
    audit: (SignalTensor, MembershipMatrix),
    population: Option<(SignalTensor, MembershipMatrix)>,
}

/// One attack's scores over the whole audit pool.
struct PoolScores {
    label: AttackLabel,
    domain: ScoreDomain,
    scores: Vec<f64>,
}

fn short(digest: &str) -> &str {
    &digest[..16]
}

/// Runs every stage for one experiment seed. Trained models are cached
/// under `cache_root` when given.
pub fn run_seed(
    cfg: &ExperimentConfig,
    population: &[UserSeries],
    seed: u64,
    cache_root: Option<&Path>,
) -> Result<SeedRun> {
    let ids: Vec<UserId> = population.iter().map(|s| s.user_id.clone()).collect();
    let split: PopulationSplit = stage("split", split_users(&ids, cfg.split.sizes(), derive_seed(seed, "split", 0)))?;
    let by_id: BTreeMap<&UserId, &UserSeries> = population.iter().map(|s| (&s.user_id, s)).collect();

    let train_series: Vec<UserSeries> = split.train.iter().map(|u| by_id[u].clone()).collect();
    let scaler = stage("scale", fit_scaler_with_fallback(&train_series, cfg.split.unit_scale_fallback))?;
    let w = cfg.windowing;
    let mut records = RecordsByUser::new();
    for u in split.train.iter().chain(&split.val).chain(&split.test).chain(&split.aux) {
        let scaled = stage("scale", apply_scaler(by_id[u], &scaler))?;
        let recs = stage("window", window_series(&scaled, w.lookback, w.horizon, w.stride))?;
        if recs.is_empty() {
            return Err(Error::Insufficient(format!("user {u} is shorter than one window")).in_stage("window"));
        }
        records.insert(u.clone(), recs);
    }

    let fcfg = ForecasterConfig {
        seed: derive_seed(seed, "target", 0),
        ..cfg.forecaster.clone()
    };
    let target_dir = cache_root.map(|c| c.join(short(&cfg.target_digest())).join(format!("seed_{seed}")));
    let train_recs = gather(&records, &split.train);
    let val_recs = gather(&records, &split.val);
    let target = stage(
        "target",
        cache_target(target_dir.as_deref(), || TrainedForecaster::fit(&fcfg, &train_recs, &val_recs)),
    )?;

    // Audit pool: every train and test record, users in sorted order.
    let audit_users: Vec<UserId> = split.train.iter().chain(&split.test).cloned().collect();
    let audit = gather(&records, &audit_users);
    let train_set: HashSet<&UserId> = split.train.iter().collect();
    let audit_labels: Vec<bool> = audit.iter().map(|r| train_set.contains(&r.user_id)).collect();
    let unit_ids: Vec<String> = audit.iter().map(|r| format!("{}@{}", r.user_id, r.origin)).collect();

    let aux = gather(&records, &split.aux);
    let pop_size = cfg
        .attacks
        .iter()
        .filter_map(|a| match a {
            AttackSpec::Rmia(s) => Some(s.population_size),
            _ => None,
        })
        .max();
    let pop_records: Vec<ForecastRecord> = match pop_size {
        Some(n) => {
            let mut rng = crate::seed::derived_rng(seed, "population", 0);
            let mut idx = rand::seq::index::sample(&mut rng, aux.len(), n.min(aux.len())).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| aux[i].clone()).collect()
        }
        None => Vec::new(),
    };
    let signal_opts = cfg.signals.options();
    let set: &SignalSet = &cfg.signals.set;

    let plan_opts = ShadowPlanOptions {
        offline_fraction: cfg.shadows.offline_fraction,
        validation_fraction: if cfg.forecaster.early_stopping { 0.2 } else { 0.0 },
    };
    let mut modes: BTreeMap<AttackMode, ModeArtifacts> = BTreeMap::new();
    for &mode in &cfg.shadows.modes {
        let shadow_seed = derive_seed(seed, &format!("shadows-{mode}"), 0);
        let plan = stage(
            "shadows",
            plan_shadows(&split, mode, cfg.shadows.count, &plan_opts, shadow_seed),
        )?;
        let digest = cfg.shadow_digest(mode);
        let dir = cache_root.map(|c| c.join(short(&digest)).join(format!("seed_{seed}")).join(mode.to_string()));
        let manifest = ShadowManifest { digest, seed, plan };
        let ensemble = stage("shadows", cache_shadows(dir.as_deref(), manifest, &records, &cfg.forecaster))?;
        let audit_t = stage("signals", compute_signal_tensor(&ensemble, &target, &audit, set, &signal_opts))?;
        let population = if pop_records.is_empty() {
            None
        } else {
            Some(stage(
                "signals",
                compute_signal_tensor(&ensemble, &target, &pop_records, set, &signal_opts),
            )?)
        };
        modes.insert(
            mode,
            ModeArtifacts {
                ensemble,
                audit: audit_t,
                population,
            },
        );
    }

    let members: Vec<usize> = (0..audit.len()).filter(|&i| audit_labels[i]).collect();
    let nonmembers: Vec<usize> = (0..audit.len()).filter(|&i| !audit_labels[i]).collect();
    let game = stage(
        "games",
        sample_record_game(&members, &nonmembers, cfg.game.samples_per_class, derive_seed(seed, "record-game", 0)),
    )?;
    let record_users: Vec<UserId> = audit.iter().map(|r| r.user_id.clone()).collect();
    let user_game = stage(
        "games",
        sample_user_game(
            &record_users,
            &split.train,
            &split.test,
            cfg.game.user_records,
            derive_seed(seed, "user-game", 0),
        ),
    )?;

    let any_tensor = &modes.values().next().expect("validated non-empty").audit.0;
    let target_preds = stage("attacks", target.predict_records(&audit))?;
    let mut pool: Vec<PoolScores> = Vec::new();
    for (ai, attack) in cfg.attacks.iter().enumerate() {
        let name = attack.name();
        for mode in attack.modes() {
            let label = AttackLabel {
                name: name.clone(),
                mode,
            };
            let tag = format!("attack-{ai}-{label}");
            let (domain, scores) = match (attack, mode) {
                (AttackSpec::Lira(s), Some(m)) => {
                    let art = &modes[&m];
                    let sc = lira_scores(&art.audit.0, &art.audit.1, m, &s.signals, s.variance);
                    (ScoreDomain::Log, stage("attacks", sc)?)
                }
                (AttackSpec::Rmia(s), Some(m)) => {
                    let art = &modes[&m];
                    let (pt, pm) = art.population.as_ref().expect("population built for rmia");
                    let keep = s.population_size.min(pt.n_records());
                    let pt = head_records(pt, keep)?;
                    let pm = head_membership(pm, keep)?;
                    let sc = rmia_scores((&art.audit.0, &art.audit.1), (&pt, &pm), s.signal, &s.config(m));
                    (ScoreDomain::Probability, stage("attacks", sc)?)
                }
                (AttackSpec::Ensemble(s), None) => {
                    let sub = stage("attacks", any_tensor.select(&s.signals))?;
                    let feats: Vec<Vec<f64>> = (0..sub.n_records()).map(|r| sub.target_vector(r).values).collect();
                    let in_game: HashSet<usize> = game.indices.iter().copied().collect();
                    let pick = |want: bool| -> Vec<Vec<f64>> {
                        (0..feats.len())
                            .filter(|i| audit_labels[*i] == want && !in_game.contains(i))
                            .map(|i| feats[i].clone())
                            .collect()
                    };
                    let sc = ensemble_attack(&pick(true), &pick(false), &feats, &s.config(), derive_seed(seed, &tag, 0));
                    (ScoreDomain::Probability, stage("attacks", sc)?)
                }
                (AttackSpec::Dts(s), Some(m)) => {
                    let art = &modes[&m];
                    let source = match m {
                        AttackMode::Online => &audit,
                        AttackMode::Offline => &aux,
                    };
                    let data = stage("attacks", build_dts_dataset(&art.ensemble, source, s.fraction, derive_seed(seed, &tag, 0)))?;
                    let clf = stage("attacks", train_dts(&data, &s.arch(), derive_seed(seed, &tag, 1)))?;
                    let ys: Vec<_> = audit.iter().map(|r| &r.target).collect();
                    let yh: Vec<_> = target_preds.iter().collect();
                    (ScoreDomain::Probability, stage("attacks", dts_scores(&clf, &ys, &yh))?)
                }
                _ => unreachable!("modes follow the attack kind"),
            };
            pool.push(PoolScores { label, domain, scores });
        }
    }

    let mut record_sets = Vec::new();
    let mut user_sets = Vec::new();
    let mut metrics = Vec::new();
    for p in &pool {
        let name = p.label.to_string();
        let rs = run_record_game(&game, &name, p.label.mode, p.domain, &p.scores, &unit_ids);
        let us = stage("games", run_user_game(&user_game, &name, p.label.mode, p.domain, &p.scores))?;
        metrics.push(stage("evaluate", AttackMetrics::from_scores(&name, &rs, &us))?);
        record_sets.push(rs);
        user_sets.push(us);
    }
    Ok(SeedRun {
        report: RunReport {
            seed,
            config_digest: cfg.digest(),
            attacks: metrics,
        },
        record_sets,
        user_sets,
    })
}

fn head_records(t: &SignalTensor, n: usize) -> Result<SignalTensor> {
    let models = t.shadows() + 1;
    let s = t.signals().len();
    let mut data = Vec::with_capacity(n * models * s);
    for r in 0..n {
        for m in 0..models {
            data.extend((0..s).map(|si| t.get(r, m, si)));
        }
    }
    SignalTensor::new(t.signals().clone(), n, models, data)
}

fn head_membership(m: &MembershipMatrix, n: usize) -> Result<MembershipMatrix> {
    let data = (0..n).flat_map(|r| m.row(r).iter().copied()).collect();
    MembershipMatrix::new(n, m.shadows(), data)
}

fn write_scores(path: &Path, sets: &[AttackScoreSet]) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "unit,attack,label,score")?;
    for s in sets {
        for ((u, l), v) in s.units.iter().zip(&s.labels).zip(&s.scores) {
            writeln!(w, "{u},{},{},{v}", s.attack, u8::from(*l))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_roc(path: &Path, roc: &RocCurve) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "threshold,fpr,tpr")?;
    for p in &roc.points {
        writeln!(w, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_seed_bundle(dir: &Path, run: &SeedRun) -> Result<()> {
    fs::create_dir_all(dir.join("roc"))?;
    fs::write(dir.join("report.json"), serde_json::to_vec_pretty(&run.report)?)?;
    write_scores(&dir.join("scores_record.csv"), &run.record_sets)?;
    write_scores(&dir.join("scores_user.csv"), &run.user_sets)?;
    for (rs, us) in run.record_sets.iter().zip(&run.user_sets) {
        write_roc(&dir.join("roc").join(format!("{}_record.csv", rs.attack)), &roc_curve(&rs.scores, &rs.labels)?)?;
        write_roc(&dir.join("roc").join(format!("{}_user.csv", us.attack)), &roc_curve(&us.scores, &us.labels)?)?;
    }
    Ok(())
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

/// Fixed-width table: attacks by metric, `mean ± std`; TPRs in percent.
pub fn render_table(summary: &Summary) -> String {
    let mut attacks: Vec<&str> = Vec::new();
    for r in &summary.rows {
        if !attacks.contains(&r.attack.as_str()) {
            attacks.push(&r.attack);
        }
    }
    let headers = ["attack", "TPR@0.1%", "TPR@0.01%", "AUC", "user TPR@0%", "user AUC"];
    let mut rows: Vec<Vec<String>> = Vec::new();
    for a in &attacks {
        let mut row = vec![a.to_string()];
        for m in METRICS {
            let s = summary.get(a, m).expect("every metric per attack");
            let cell = if m.contains("auc") {
                format!("{:.3} ± {:.3}", s.mean, s.std)
            } else {
                format!("{} ± {}", pct(s.mean), pct(s.std))
            };
            row.push(cell);
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain([headers[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<String>| {
        cells
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = format!(
        "config {}  seeds {:?}{}\n",
        short(&summary.config_digest),
        summary.seeds,
        if summary.single_run { "  (single run, std not estimated)" } else { "" }
    );
    out.push_str(&line(headers.iter().map(|h| h.to_string()).collect()));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

pub fn summary_csv(summary: &Summary) -> String {
    let mut out = String::from("attack,metric,mean,std,n\n");
    for r in &summary.rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.attack, r.metric, r.mean, r.std, r.n));
    }
    out
}

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<()> {
    fs::write(dir.join("summary.json"), serde_json::to_vec_pretty(summary)?)?;
    fs::write(dir.join("summary.csv"), summary_csv(summary))?;
    fs::write(dir.join("summary.txt"), render_table(summary))?;
    Ok(())
}

/// Runs every configured seed and writes the bundle to `cfg.output_dir`.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Summary> {
    cfg.validate()?;
    if cfg.seeds.is_empty() {
        return Err(Error::Config("no seeds configured".into()));
    }
    let population = stage("data", load_population(cfg))?;
    let out: PathBuf = cfg.output_dir.clone();
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    let cache = out.join("cache");
    let mut reports = Vec::new();
    for &seed in &cfg.seeds {
        let run = run_seed(cfg, &population, seed, Some(&cache))?;
        write_seed_bundle(&out.join(format!("seed_{seed}")), &run)?;
        reports.push(run.report);
    }
    let summary = stage("aggregate", aggregate_runs(&reports))?;
    write_summary(&out, &summary)?;
    Ok(summary)
}
