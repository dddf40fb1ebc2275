//! On-disk formats: scene JSON, dataset JSONL, clustering/codebook JSON,
//! training traces, report CSVs and summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::clustering::{Assignment, Clustering};
use crate::drl::TraceStep;
use crate::eval::{CellState, EvalReport, SensitivityResult, SnrMap, Summary};
use crate::mimo::{
    ArrayConfig, Beam, ChannelVector, Codebook, CodebookEntry, LinkBudget, PhaseSet,
};
use crate::scene::{ChannelDataset, ChannelRecord, GridSpec, Scene};
use crate::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn from_json<T: DeserializeOwned>(text: &str, source: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::json(source, e))
}

fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory values serialize");
    s.push('\n');
    s
}

fn to_json_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("in-memory values serialize")
}

// ---- scene ----

/// Parses and validates a scene; `source` names the input in error messages.
pub fn parse_scene(text: &str, source: &str) -> Result<Scene> {
    let scene: Scene = from_json(text, source)?;
    scene.validate()?;
    Ok(scene)
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    parse_scene(&read_text(path)?, &path.display().to_string())
}

pub fn scene_to_string(scene: &Scene) -> String {
    to_json_pretty(scene)
}

pub fn save_scene(path: &Path, scene: &Scene) -> Result<()> {
    write_text(path, &scene_to_string(scene))
}

// ---- dataset ----

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetHeader {
    scene_hash: String,
    array: ArrayConfig,
    link_budget: LinkBudget,
    grid: GridSpec,
    users: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetLine {
    id: usize,
    pos: [f64; 3],
    h_re: Vec<f64>,
    h_im: Vec<f64>,
    los: bool,
    n_paths: usize,
}

/// Header line followed by one line per user.
pub fn dataset_to_string(ds: &ChannelDataset) -> String {
    let mut out = to_json_line(&DatasetHeader {
        scene_hash: ds.scene_hash.clone(),
        array: ds.array,
        link_budget: ds.link_budget,
        grid: ds.grid,
        users: ds.len(),
    });
    out.push('\n');
    for r in &ds.records {
        out.push_str(&to_json_line(&DatasetLine {
            id: r.id,
            pos: r.position,
            h_re: r.channel.entries.iter().map(|h| h.re).collect(),
            h_im: r.channel.entries.iter().map(|h| h.im).collect(),
            los: r.channel.is_los,
            n_paths: r.channel.path_count,
        }));
        out.push('\n');
    }
    out
}

pub fn parse_dataset(text: &str, source: &str) -> Result<ChannelDataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| Error::Parse {
        source_name: source.into(),
        line: 1,
        column: 1,
        message: "missing dataset header".into(),
    })?;
    let header: DatasetHeader = from_json(first, source)?;
    header.array.validate()?;
    let m = header.array.num_antennas;
    let mut records = Vec::with_capacity(header.users);
    for (i, line) in lines {
        let at = |e: serde_json::Error| Error::Parse {
            source_name: source.into(),
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        };
        let rec: DatasetLine = serde_json::from_str(line).map_err(at)?;
        if rec.h_re.len() != m || rec.h_im.len() != m {
            return Err(Error::Parse {
                source_name: source.into(),
                line: i + 1,
                column: 1,
                message: format!(
                    "user {} has a channel of the wrong length (expected {m})",
                    rec.id
                ),
            });
        }
        records.push(ChannelRecord {
            id: rec.id,
            position: rec.pos,
            channel: ChannelVector {
                entries: rec
                    .h_re
                    .iter()
                    .zip(&rec.h_im)
                    .map(|(&re, &im)| Complex64::new(re, im))
                    .collect(),
                path_count: rec.n_paths,
                is_los: rec.los,
            },
        });
    }
    if records.len() != header.users {
        return Err(Error::Parse {
            source_name: source.into(),
            line: 1,
            column: 1,
            message: format!(
                "header announces {} users, found {}",
                header.users,
                records.len()
            ),
        });
    }
    Ok(ChannelDataset {
        scene_hash: header.scene_hash,
        array: header.array,
        link_budget: header.link_budget,
        grid: header.grid,
        records,
    })
}

pub fn save_dataset(path: &Path, ds: &ChannelDataset) -> Result<()> {
    write_text(path, &dataset_to_string(ds))
}

pub fn load_dataset(path: &Path) -> Result<ChannelDataset> {
    parse_dataset(&read_text(path)?, &path.display().to_string())
}

// ---- clustering ----

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusteringFile {
    #[serde(rename = "N")]
    n: usize,
    seed: u64,
    assignments: Vec<Assignment>,
}

pub fn clustering_to_string(c: &Clustering) -> String {
    to_json_pretty(&ClusteringFile {
        n: c.n_clusters,
        seed: c.seed,
        assignments: c.assignments.clone(),
    })
}

/// The loaded clustering carries no objective history.
pub fn parse_clustering(text: &str, source: &str) -> Result<Clustering> {
    let f: ClusteringFile = from_json(text, source)?;
    if let Some(a) = f.assignments.iter().find(|a| a.cluster >= f.n) {
        return Err(Error::invalid(format!(
            "{source}: user {} assigned to cluster {} but N = {}",
            a.id, a.cluster, f.n
        )));
    }
    Ok(Clustering {
        n_clusters: f.n,
        seed: f.seed,
        assignments: f.assignments,
        objective_history: Vec::new(),
        iterations: 0,
    })
}

pub fn save_clustering(path: &Path, c: &Clustering) -> Result<()> {
    write_text(path, &clustering_to_string(c))
}

pub fn load_clustering(path: &Path) -> Result<Clustering> {
    parse_clustering(&read_text(path)?, &path.display().to_string())
}

// ---- codebook ----

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BeamFile {
    label: String,
    phases: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    zero_gain: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodebookFile {
    array_config: ArrayConfig,
    phase_set: Option<PhaseSet>,
    beams: Vec<BeamFile>,
}

pub fn codebook_to_string(cb: &Codebook) -> String {
    to_json_pretty(&CodebookFile {
        array_config: cb.array,
        phase_set: cb.phase_set.clone(),
        beams: cb
            .entries
            .iter()
            .map(|e| BeamFile {
                label: e.label.clone(),
                phases: e.beam.phases().to_vec(),
                zero_gain: e.zero_gain,
            })
            .collect(),
    })
}

pub fn parse_codebook(text: &str, source: &str) -> Result<Codebook> {
    let f: CodebookFile = from_json(text, source)?;
    f.array_config.validate()?;
    let entries = f
        .beams
        .into_iter()
        .map(|b| CodebookEntry {
            label: b.label,
            beam: Beam::from_phases(b.phases),
            zero_gain: b.zero_gain,
        })
        .collect();
    Codebook::new(f.array_config, f.phase_set, entries)
}

pub fn save_codebook(path: &Path, cb: &Codebook) -> Result<()> {
    write_text(path, &codebook_to_string(cb))
}

pub fn load_codebook(path: &Path) -> Result<Codebook> {
    parse_codebook(&read_text(path)?, &path.display().to_string())
}

// ---- traces ----

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceLine {
    label: String,
    t: usize,
    gain: f64,
    reward: f64,
    beta: f64,
}

/// One line per step, tagged with the beam label it belongs to.
pub fn traces_to_string(labelled: &[(String, Vec<TraceStep>)]) -> String {
    let mut out = String::new();
    for (label, steps) in labelled {
        for s in steps {
            out.push_str(&to_json_line(&TraceLine {
                label: label.clone(),
                t: s.t,
                gain: s.gain,
                reward: s.reward,
                beta: s.beta,
            }));
            out.push('\n');
        }
    }
    out
}

pub fn parse_traces(text: &str, source: &str) -> Result<Vec<(String, Vec<TraceStep>)>> {
    let mut out: Vec<(String, Vec<TraceStep>)> = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let l: TraceLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            source_name: source.into(),
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        let step = TraceStep {
            t: l.t,
            gain: l.gain,
            reward: l.reward,
            beta: l.beta,
        };
        match out.last_mut() {
            Some((label, steps)) if *label == l.label => steps.push(step),
            _ => out.push((l.label, vec![step])),
        }
    }
    Ok(out)
}

// ---- reports ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub method: String,
    pub mean_db: Option<f64>,
    pub p10: Option<f64>,
    pub p50: Option<f64>,
    pub p90: Option<f64>,
    pub outage_frac: f64,
}

impl SummaryFile {
    pub fn new(method: &str, s: &Summary) -> Self {
        SummaryFile {
            method: method.into(),
            mean_db: s.mean_db,
            p10: s.p10,
            p50: s.p50,
            p90: s.p90,
            outage_frac: s.outage_frac,
        }
    }
}

pub fn summary_to_string(report: &EvalReport) -> String {
    to_json_pretty(&SummaryFile::new(&report.method, &report.summary))
}

pub fn parse_summary(text: &str, source: &str) -> Result<SummaryFile> {
    from_json(text, source)
}

/// `snr_db,prob` rows of the plot CDF.
pub fn cdf_csv(report: &EvalReport) -> String {
    let mut out = String::from("snr_db,prob\n");
    for (x, p) in report.plot_cdf() {
        let _ = writeln!(out, "{x},{p}");
    }
    out
}

/// `x,y,snr_db` per occupied grid cell; outage cells carry `-inf`.
pub fn map_csv(map: &SnrMap) -> String {
    let mut out = String::from("x,y,snr_db\n");
    for c in &map.cells {
        match c.state {
            CellState::Empty => {}
            CellState::Outage => {
                let _ = writeln!(out, "{},{},-inf", c.x, c.y);
            }
            CellState::Served => {
                let _ = writeln!(out, "{},{},{}", c.x, c.y, c.snr_db);
            }
        }
    }
    out
}

pub fn pattern_csv(pattern: &[(f64, f64)]) -> String {
    let mut out = String::from("angle_rad,gain_db\n");
    for (a, g) in pattern {
        let _ = writeln!(out, "{a},{g}");
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Sweep table; the shared pipeline seed is recorded in a comment header.
pub fn sensitivity_csv(results: &[SensitivityResult]) -> String {
    let mut out = String::new();
    if let Some(r) = results.first() {
        let _ = writeln!(out, "# paired_seed={}", r.seed);
    }
    out.push_str("axis,value,mean_snr_los,mean_snr_nlos\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.axis.name(),
            r.value,
            opt(r.mean_snr_los),
            opt(r.mean_snr_nlos)
        );
    }
    out
}

/// Parses a numeric CSV with a header row, skipping `#` comments.
/// Empty fields become `None`.
pub fn parse_numeric_csv(text: &str, source: &str) -> Result<(Vec<String>, Vec<Vec<Option<f64>>>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let header: Vec<String> = match lines.next() {
        Some((_, h)) => h.split(',').map(str::to_string).collect(),
        None => return Ok((Vec::new(), Vec::new())),
    };
    let mut rows = Vec::new();
    for (i, line) in lines {
        let row = line
            .split(',')
            .map(|f| {
                if f.is_empty() {
                    return Ok(None);
                }
                f.parse::<f64>().map(Some).map_err(|e| Error::Parse {
                    source_name: source.into(),
                    line: i + 1,
                    column: 1,
                    message: format!("'{f}': {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != header.len() {
            return Err(Error::Parse {
                source_name: source.into(),
                line: i + 1,
                column: 1,
                message: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn to_pretty<T: Serialize>(value: &T) -> String {
    to_json_pretty(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::builtin::toy_manhattan;
    use crate::mimo::dft_codebook;
    use crate::scene::{generate_dataset, FidelityKnobs};

    fn small_dataset() -> ChannelDataset {
        let mut s = toy_manhattan();
        s.user_grid.spacing = 20.0;
        let cfg = ArrayConfig::half_wavelength(4, 28e9).unwrap();
        generate_dataset(&s, &FidelityKnobs::exact(1), &cfg, &LinkBudget::default()).unwrap()
    }

    #[test]
    fn scene_round_trip_keeps_hash() {
        let s = toy_manhattan();
        let back = parse_scene(&scene_to_string(&s), "mem").unwrap();
        assert_eq!(back, s);
        assert_eq!(back.hash(), s.hash());
    }

    #[test]
    fn scene_parse_error_reports_line() {
        let text =
            "{\n  \"bs\": {\"position\": [0, 0, 10], \"boresight\": 0},\n  \"materials\": [,]\n}";
        match parse_scene(text, "bad.json") {
            Err(Error::Parse {
                line, source_name, ..
            }) => {
                assert_eq!(line, 3);
                assert_eq!(source_name, "bad.json");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn dataset_round_trip_is_exact() {
        let ds = small_dataset();
        let text = dataset_to_string(&ds);
        let back = parse_dataset(&text, "mem").unwrap();
        assert_eq!(back, ds);
        assert_eq!(dataset_to_string(&back), text);
    }

    #[test]
    fn dataset_bad_record_line_is_reported() {
        let ds = small_dataset();
        let mut lines: Vec<String> = dataset_to_string(&ds).lines().map(str::to_string).collect();
        lines[3] = "{\"id\": 1".into();
        match parse_dataset(&lines.join("\n"), "d.jsonl") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn codebook_round_trip() {
        let cfg = ArrayConfig::half_wavelength(4, 28e9).unwrap();
        let ps = PhaseSet::new(2).unwrap();
        let cb = Codebook::from_beams(
            cfg,
            Some(ps.clone()),
            vec![Beam::from_phases(vec![ps.values()[0]; 4])],
        )
        .unwrap();
        assert_eq!(parse_codebook(&codebook_to_string(&cb), "mem").unwrap(), cb);
        let dft = dft_codebook(&cfg, 4).unwrap();
        assert_eq!(
            parse_codebook(&codebook_to_string(&dft), "mem").unwrap(),
            dft
        );
    }

    #[test]
    fn clustering_round_trip_and_range_check() {
        let c = Clustering {
            n_clusters: 2,
            seed: 9,
            assignments: vec![
                Assignment { id: 3, cluster: 1 },
                Assignment { id: 5, cluster: 0 },
            ],
            objective_history: Vec::new(),
            iterations: 0,
        };
        let text = clustering_to_string(&c);
        assert!(text.contains("\"N\": 2"));
        assert_eq!(parse_clustering(&text, "mem").unwrap(), c);
        assert!(
            parse_clustering(&text.replace("\"cluster\": 1", "\"cluster\": 2"), "mem").is_err()
        );
    }

    #[test]
    fn traces_round_trip() {
        let steps = |n: usize| {
            (0..n)
                .map(|t| TraceStep {
                    t,
                    gain: t as f64,
                    reward: 1.0,
                    beta: t as f64,
                })
                .collect::<Vec<_>>()
        };
        let tr = vec![("c0".to_string(), steps(3)), ("c1".to_string(), steps(2))];
        assert_eq!(parse_traces(&traces_to_string(&tr), "mem").unwrap(), tr);
    }

    #[test]
    fn numeric_csv_skips_comments_and_keeps_gaps() {
        let (h, rows) = parse_numeric_csv("# x\na,b\n1,\n-inf,2.5\n", "mem").unwrap();
        assert_eq!(h, vec!["a", "b"]);
        assert_eq!(rows[0], vec![Some(1.0), None]);
        assert_eq!(rows[1], vec![Some(f64::NEG_INFINITY), Some(2.5)]);
        assert!(parse_numeric_csv("a\nx\n", "mem").is_err());
    }
}
