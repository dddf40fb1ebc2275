//! Subcommand bodies. Each reads and writes files under the run directory.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use super::config::RunConfig;
use super::io;
use crate::drl::TraceStep;
use crate::eval::{
    beam_pattern, compare, evaluate_codebook, evaluate_egc, evaluate_learned, evaluate_split,
    sensitivity_sweep, snr_map_from_report, EvalReport, SensitivityResult, SweepSetup,
};
use crate::mimo::{dft_codebook, Codebook};
use crate::pipeline::{learn, CodebookMode, Group, Learned};
use crate::scene::{generate_dataset, ChannelDataset, Scene};
use crate::{Error, Result};

pub const SCENE_FILE: &str = "scene.json";
pub const TARGET_FILE: &str = "target.jsonl";
pub const TWIN_FILE: &str = "twin.jsonl";
pub const SENSITIVITY_FILE: &str = "sensitivity.csv";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";
pub const META_FILE: &str = "meta.json";
/// Angles per beam pattern file.
pub const PATTERN_RESOLUTION: usize = 361;

fn group_name(g: Group) -> &'static str {
    match g {
        Group::All => "all",
        Group::Los => "los",
        Group::Nlos => "nlos",
    }
}

fn groups_for(mode: &CodebookMode) -> &'static [Group] {
    match mode {
        CodebookMode::Single { .. } => &[Group::All],
        CodebookMode::Split { .. } => &[Group::Los, Group::Nlos],
    }
}

pub fn clustering_path(dir: &Path, g: Group) -> PathBuf {
    dir.join(format!("clustering_{}.json", group_name(g)))
}

pub fn codebook_path(dir: &Path, g: Group) -> PathBuf {
    dir.join(format!("codebook_{}.json", group_name(g)))
}

pub fn traces_path(dir: &Path, g: Group) -> PathBuf {
    dir.join(format!("traces_{}.jsonl", group_name(g)))
}

/// Records wall-clock start/end of a command in the metadata sidecar.
/// Data files never carry timestamps.
pub fn record_meta(out: &Path, command: &str, started: SystemTime) -> Result<()> {
    let path = out.join(META_FILE);
    let mut meta: serde_json::Value = match std::fs::read_to_string(&path) {
        Ok(t) => serde_json::from_str(&t).unwrap_or_else(|_| serde_json::json!({})),
        Err(_) => serde_json::json!({}),
    };
    let secs = |t: SystemTime| {
        t.duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0)
    };
    meta["version"] = serde_json::json!(env!("CARGO_PKG_VERSION"));
    meta["commands"][command] = serde_json::json!({
        "started_unix": secs(started),
        "finished_unix": secs(SystemTime::now()),
    });
    io::write_text(&path, &io::to_pretty(&meta))
}

pub fn write_resolved_config(cfg: &RunConfig) -> Result<()> {
    io::write_text(
        &cfg.out.join(RESOLVED_CONFIG_FILE),
        &io::to_pretty(&cfg.resolved()),
    )
}

/// Writes the canonical scene file for a builtin name or a scene path.
pub fn cmd_scene(name_or_path: &str, out: &Path) -> Result<Scene> {
    let cfg = RunConfig {
        scene: name_or_path.into(),
        ..RunConfig::default()
    };
    let scene = cfg.load_scene()?;
    io::save_scene(&out.join(SCENE_FILE), &scene)?;
    Ok(scene)
}

pub struct Datasets {
    pub target: ChannelDataset,
    pub twin: ChannelDataset,
}

/// Traces the target and twin datasets.
pub fn cmd_generate(cfg: &RunConfig) -> Result<Datasets> {
    let scene = cfg.load_scene()?;
    let array = cfg.array_config()?;
    let target = generate_dataset(&scene, &cfg.target_knobs, &array, &cfg.link_budget)?;
    let twin = generate_dataset(&scene, &cfg.twin_knobs, &array, &cfg.link_budget)?;
    io::save_scene(&cfg.out.join(SCENE_FILE), &scene)?;
    io::save_dataset(&cfg.out.join(TARGET_FILE), &target)?;
    io::save_dataset(&cfg.out.join(TWIN_FILE), &twin)?;
    Ok(Datasets { target, twin })
}

fn load_twin(cfg: &RunConfig) -> Result<ChannelDataset> {
    io::load_dataset(&cfg.out.join(TWIN_FILE))
}

fn load_target(cfg: &RunConfig) -> Result<ChannelDataset> {
    io::load_dataset(&cfg.out.join(TARGET_FILE))
}

/// Clusters the twin dataset per codebook group.
pub fn cmd_cluster(cfg: &RunConfig) -> Result<Vec<(Group, crate::clustering::Clustering)>> {
    let twin = load_twin(cfg)?;
    let pc = cfg.pipeline()?;
    let (los, nlos) = crate::clustering::split_los_nlos(&twin);
    let mut out = Vec::new();
    for &g in groups_for(&pc.mode) {
        let (ds, n) = match (g, pc.mode) {
            (Group::All, CodebookMode::Single { n }) => (&twin, n),
            (Group::Los, CodebookMode::Split { n_los, .. }) => (&los, n_los),
            (Group::Nlos, CodebookMode::Split { n_nlos, .. }) => (&nlos, n_nlos),
            _ => unreachable!("groups_for matches the mode"),
        };
        if ds.is_empty() {
            log::warn!(
                "no {} users in the twin dataset; nothing to cluster",
                group_name(g)
            );
            continue;
        }
        let c = crate::pipeline::cluster_dataset(ds, n, &pc, g)?;
        io::save_clustering(&clustering_path(&cfg.out, g), &c)?;
        out.push((g, c));
    }
    Ok(out)
}

fn write_learned(dir: &Path, learned: &Learned) -> Result<()> {
    for gr in learned.groups() {
        io::save_clustering(&clustering_path(dir, gr.group), &gr.clustering)?;
        io::save_codebook(&codebook_path(dir, gr.group), &gr.learned.codebook)?;
        let labelled: Vec<(String, Vec<TraceStep>)> = gr
            .learned
            .codebook
            .entries
            .iter()
            .zip(&gr.learned.traces)
            .map(|(e, t)| (e.label.clone(), t.clone()))
            .collect();
        io::write_text(
            &traces_path(dir, gr.group),
            &io::traces_to_string(&labelled),
        )?;
    }
    Ok(())
}

/// Learns the codebook(s) from the twin dataset.
pub fn cmd_train(cfg: &RunConfig) -> Result<Learned> {
    let twin = load_twin(cfg)?;
    let learned = learn(&twin, &cfg.pipeline()?)?;
    for &g in groups_for(&cfg.codebook) {
        // a side skipped for lack of users must not leave a stale file behind
        let p = codebook_path(&cfg.out, g);
        if p.exists() {
            std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    write_learned(&cfg.out, &learned)?;
    Ok(learned)
}

/// Loads the learned codebook(s) written by [`cmd_train`] and scores them on `ds`.
pub fn evaluate_saved(
    dir: &Path,
    mode: &CodebookMode,
    ds: &ChannelDataset,
    cfg: &RunConfig,
) -> Result<EvalReport> {
    let load = |g: Group| -> Result<Option<Codebook>> {
        let p = codebook_path(dir, g);
        if p.exists() {
            io::load_codebook(&p).map(Some)
        } else {
            Ok(None)
        }
    };
    match mode {
        CodebookMode::Single { .. } => {
            let cb = load(Group::All)?
                .ok_or_else(|| Error::io(codebook_path(dir, Group::All), not_found()))?;
            evaluate_codebook(&cb, ds, &cfg.link_budget)
        }
        CodebookMode::Split { .. } => {
            let (los, nlos) = (load(Group::Los)?, load(Group::Nlos)?);
            if los.is_none() && nlos.is_none() {
                return Err(Error::io(codebook_path(dir, Group::Los), not_found()));
            }
            evaluate_split(los.as_ref(), nlos.as_ref(), ds, &cfg.link_budget)
        }
    }
}

fn not_found() -> std::io::Error {
    std::io::Error::new(
        std::io::ErrorKind::NotFound,
        "codebook not found; run `train` first",
    )
}

fn write_report(dir: &Path, report: &EvalReport, ds: &ChannelDataset) -> Result<()> {
    let m = &report.method;
    io::write_text(
        &dir.join(format!("{m}_summary.json")),
        &io::summary_to_string(report),
    )?;
    io::write_text(&dir.join(format!("{m}_cdf.csv")), &io::cdf_csv(report))?;
    io::write_text(
        &dir.join(format!("{m}_map.csv")),
        &io::map_csv(&snr_map_from_report(report, ds)),
    )
}

pub const LEARNED_TWIN: &str = "learned_twin";
pub const LEARNED_TARGET: &str = "learned_target";
pub const EGC: &str = "egc";

/// Scores the twin-learned codebook, a target-trained oracle, DFT(N), DFT(M)
/// and the EGC bound on the target dataset.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Vec<EvalReport>> {
    let target = load_target(cfg)?;
    let array = cfg.array_config()?;
    if target.array != array {
        return Err(Error::invalid(
            "target dataset was generated with a different array",
        ));
    }
    let lb = &cfg.link_budget;
    let eval_dir = cfg.out.join("eval");

    let learned =
        evaluate_saved(&cfg.out, &cfg.codebook, &target, cfg)?.with_labels(LEARNED_TWIN, "target");

    let oracle_dir = cfg.out.join("oracle");
    let oracle = learn(&target, &cfg.pipeline()?)?;
    write_learned(&oracle_dir, &oracle)?;
    let oracle = evaluate_learned(&oracle, &target, lb)?.with_labels(LEARNED_TARGET, "target");

    let n = cfg.codebook.total_beams();
    let m = array.num_antennas;
    let mut reports = vec![learned, oracle];
    let mut sizes = vec![n];
    if m != n {
        sizes.push(m);
    }
    for k in sizes {
        let dft = dft_codebook(&array, k)?;
        io::save_codebook(&eval_dir.join(format!("dft_{k}_codebook.json")), &dft)?;
        reports
            .push(evaluate_codebook(&dft, &target, lb)?.with_labels(format!("dft_{k}"), "target"));
    }
    reports.push(evaluate_egc(&target, lb)?.with_labels(EGC, "target"));

    for r in &reports {
        write_report(&eval_dir, r, &target)?;
    }
    let table = compare(&reports)?;
    io::write_text(&eval_dir.join("comparison.json"), &io::to_pretty(&table))?;

    for &g in groups_for(&cfg.codebook) {
        let p = codebook_path(&cfg.out, g);
        if !p.exists() {
            continue;
        }
        for e in &io::load_codebook(&p)?.entries {
            let pat = beam_pattern(&e.beam, &array, PATTERN_RESOLUTION)?;
            io::write_text(
                &eval_dir.join("patterns").join(format!("{}.csv", e.label)),
                &io::pattern_csv(&pat),
            )?;
        }
    }
    Ok(reports)
}

/// Runs the fidelity sweep configured in `cfg.sensitivity`.
pub fn cmd_sensitivity(cfg: &RunConfig) -> Result<Vec<SensitivityResult>> {
    if cfg.sensitivity.axes.iter().all(|a| a.values.is_empty()) {
        return Err(Error::Config(
            "sensitivity needs at least one axis with values".into(),
        ));
    }
    let scene = cfg.load_scene()?;
    let setup = SweepSetup {
        target: &scene,
        target_knobs: cfg.target_knobs.clone(),
        base_knobs: cfg.sensitivity_base(),
        array: cfg.array_config()?,
        link_budget: cfg.link_budget,
        pipeline: cfg.pipeline()?,
    };
    let results = sensitivity_sweep(&setup, &cfg.sensitivity.axes)?;
    io::write_text(
        &cfg.out.join(SENSITIVITY_FILE),
        &io::sensitivity_csv(&results),
    )?;
    Ok(results)
}

/// generate, cluster, train, evaluate and (when axes are configured) sensitivity.
pub fn cmd_all(cfg: &RunConfig) -> Result<()> {
    cmd_generate(cfg)?;
    cmd_cluster(cfg)?;
    cmd_train(cfg)?;
    cmd_evaluate(cfg)?;
    if cfg.sensitivity.axes.iter().any(|a| !a.values.is_empty()) {
        cmd_sensitivity(cfg)?;
    }
    Ok(())
}
