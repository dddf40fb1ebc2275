//! Codebook scoring on a dataset, baselines, maps, patterns and fidelity sweeps.

mod sensitivity;

pub use sensitivity::{sensitivity_sweep, Axis, AxisSpec, SensitivityResult, SweepSetup};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mimo::{
    array_response, best_beam, egc_gain, inner_gain, ArrayConfig, Beam, Codebook, LinkBudget, Snr,
};
use crate::pipeline::Learned;
use crate::scene::ChannelDataset;
use crate::{Error, Result};

/// Lower clamp for dB values written to plot files.
pub const PLOT_FLOOR_DB: f64 = -40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSnr {
    pub id: usize,
    /// Best-beam SNR; `-inf` for an outage.
    pub snr_db: f64,
    /// Index of the serving beam inside the codebook that served the user.
    pub beam: Option<usize>,
    pub is_los: bool,
}

impl UserSnr {
    pub fn is_outage(&self) -> bool {
        !self.snr_db.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Mean of per-user dB over non-outage users; `None` when every user is in outage.
    pub mean_db: Option<f64>,
    pub p10: Option<f64>,
    pub p50: Option<f64>,
    pub p90: Option<f64>,
    pub outage_frac: f64,
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub scenario: String,
    pub users: Vec<UserSnr>,
    /// `(snr_db, P[SNR <= snr_db])` over non-outage users, sorted by SNR.
    pub cdf: Vec<(f64, f64)>,
    pub summary: Summary,
}

/// Linear-interpolated percentile of sorted data, `q` in `[0, 100]`.
fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

impl EvalReport {
    pub fn from_users(
        method: impl Into<String>,
        scenario: impl Into<String>,
        users: Vec<UserSnr>,
    ) -> Self {
        let mut finite: Vec<f64> = users
            .iter()
            .filter(|u| !u.is_outage())
            .map(|u| u.snr_db)
            .collect();
        finite.sort_by(f64::total_cmp);
        let n = finite.len();
        let cdf = finite
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, (i + 1) as f64 / n as f64))
            .collect();
        let summary = Summary {
            mean_db: (n > 0).then(|| finite.iter().sum::<f64>() / n as f64),
            p10: percentile(&finite, 10.0),
            p50: percentile(&finite, 50.0),
            p90: percentile(&finite, 90.0),
            outage_frac: if users.is_empty() {
                0.0
            } else {
                (users.len() - n) as f64 / users.len() as f64
            },
            users: users.len(),
        };
        EvalReport {
            method: method.into(),
            scenario: scenario.into(),
            users,
            cdf,
            summary,
        }
    }

    pub fn with_labels(self, method: impl Into<String>, scenario: impl Into<String>) -> Self {
        EvalReport {
            method: method.into(),
            scenario: scenario.into(),
            ..self
        }
    }

    /// Report restricted to the users accepted by `keep`.
    pub fn subset(&self, keep: impl Fn(&UserSnr) -> bool) -> Self {
        Self::from_users(
            self.method.clone(),
            self.scenario.clone(),
            self.users.iter().filter(|u| keep(u)).cloned().collect(),
        )
    }

    pub fn los(&self) -> Self {
        self.subset(|u| u.is_los)
    }

    pub fn nlos(&self) -> Self {
        self.subset(|u| !u.is_los)
    }

    pub fn mean_db(&self) -> Option<f64> {
        self.summary.mean_db
    }

    /// CDF with values clamped at the plot floor.
    pub fn plot_cdf(&self) -> Vec<(f64, f64)> {
        self.cdf
            .iter()
            .map(|&(v, p)| (v.max(PLOT_FLOOR_DB), p))
            .collect()
    }
}

fn check_array(cb: &Codebook, ds: &ChannelDataset) -> Result<()> {
    if cb.array != ds.array {
        return Err(Error::invalid(format!(
            "codebook array ({} elements, spacing {}, {} Hz) does not match the dataset ({} elements, spacing {}, {} Hz)",
            cb.array.num_antennas,
            cb.array.antenna_spacing,
            cb.array.carrier_frequency,
            ds.array.num_antennas,
            ds.array.antenna_spacing,
            ds.array.carrier_frequency
        )));
    }
    Ok(())
}

fn user_snr(id: usize, is_los: bool, gain: f64, beam: Option<usize>, lb: &LinkBudget) -> UserSnr {
    UserSnr {
        id,
        snr_db: Snr::from_linear(gain * lb.rho()).db,
        beam,
        is_los,
    }
}

/// Best-beam SNR of every user in `ds`.
pub fn evaluate_codebook(
    cb: &Codebook,
    ds: &ChannelDataset,
    lb: &LinkBudget,
) -> Result<EvalReport> {
    evaluate_routed(ds, lb, |_| Some(cb))
}

/// Serves each user from the codebook picked by `route` (by its own LoS flag etc).
fn evaluate_routed<'a>(
    ds: &ChannelDataset,
    lb: &LinkBudget,
    route: impl Fn(&crate::scene::ChannelRecord) -> Option<&'a Codebook> + Sync,
) -> Result<EvalReport> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let users = ds
        .records
        .par_iter()
        .map(|r| {
            let cb = route(r).ok_or_else(|| Error::invalid("no codebook available for user"))?;
            check_array(cb, ds)?;
            let (idx, g) = best_beam(cb, &r.channel)?;
            Ok(user_snr(r.id, r.is_los(), g, Some(idx), lb))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_users("codebook", "", users))
}

/// Routes every user by its LoS flag in `ds` to the matching codebook.
///
/// If one side is missing, its users fall back to the other codebook.
pub fn evaluate_split(
    los: Option<&Codebook>,
    nlos: Option<&Codebook>,
    ds: &ChannelDataset,
    lb: &LinkBudget,
) -> Result<EvalReport> {
    if los.is_none() && nlos.is_none() {
        return Err(Error::Empty("codebook"));
    }
    evaluate_routed(ds, lb, |r| {
        if r.is_los() {
            los.or(nlos)
        } else {
            nlos.or(los)
        }
    })
}

/// Scores the output of [`crate::pipeline::learn`] on `ds`.
pub fn evaluate_learned(
    learned: &Learned,
    ds: &ChannelDataset,
    lb: &LinkBudget,
) -> Result<EvalReport> {
    match learned {
        Learned::Single(g) => evaluate_codebook(&g.learned.codebook, ds, lb),
        Learned::Split { los, nlos } => evaluate_split(
            los.as_ref().map(|g| &g.learned.codebook),
            nlos.as_ref().map(|g| &g.learned.codebook),
            ds,
            lb,
        ),
    }
}

/// Equal-gain combining bound per user.
pub fn evaluate_egc(ds: &ChannelDataset, lb: &LinkBudget) -> Result<EvalReport> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let users = ds
        .records
        .par_iter()
        .map(|r| user_snr(r.id, r.is_los(), egc_gain(&r.channel), None, lb))
        .collect();
    Ok(EvalReport::from_users("egc", "", users))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub a: String,
    pub b: String,
    /// `mean(a) - mean(b)` in dB.
    pub mean_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Every ordered pair `(i, j)` with `i < j`.
    pub deltas: Vec<Delta>,
}

/// Aligned summaries and pairwise mean deltas of reports over one user set.
pub fn compare(reports: &[EvalReport]) -> Result<Comparison> {
    if let Some(first) = reports.first() {
        let ids: Vec<usize> = first.users.iter().map(|u| u.id).collect();
        for r in &reports[1..] {
            if r.users.len() != ids.len() || r.users.iter().zip(&ids).any(|(u, id)| u.id != *id) {
                return Err(Error::UserSetMismatch {
                    left: first.method.clone(),
                    right: r.method.clone(),
                });
            }
        }
    }
    let rows = reports
        .iter()
        .map(|r| ComparisonRow {
            method: r.method.clone(),
            summary: r.summary,
        })
        .collect();
    let mut deltas = Vec::new();
    for (i, a) in reports.iter().enumerate() {
        for b in &reports[i + 1..] {
            deltas.push(Delta {
                a: a.method.clone(),
                b: b.method.clone(),
                mean_db: a.mean_db().zip(b.mean_db()).map(|(x, y)| x - y),
            });
        }
    }
    Ok(Comparison { rows, deltas })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Served,
    Outage,
    /// No user at this grid point (inside a building).
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapCell {
    pub x: f64,
    pub y: f64,
    pub snr_db: f64,
    pub state: CellState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrMap {
    pub nx: usize,
    pub ny: usize,
    /// Row-major over the user grid.
    pub cells: Vec<MapCell>,
}

/// Per-grid-point best-beam SNR, aligned to the dataset's user grid.
pub fn snr_map(cb: &Codebook, ds: &ChannelDataset, lb: &LinkBudget) -> Result<SnrMap> {
    let report = evaluate_codebook(cb, ds, lb)?;
    Ok(snr_map_from_report(&report, ds))
}

/// Lays the users of `report` out on the grid of `ds`.
pub fn snr_map_from_report(report: &EvalReport, ds: &ChannelDataset) -> SnrMap {
    let g = ds.grid;
    let mut cells: Vec<MapCell> = (0..g.cell_count())
        .map(|id| {
            let (ix, iy) = g.cell(id);
            MapCell {
                x: g.xmin + ix as f64 * g.spacing,
                y: g.ymin + iy as f64 * g.spacing,
                snr_db: f64::NEG_INFINITY,
                state: CellState::Empty,
            }
        })
        .collect();
    for u in &report.users {
        if let Some(c) = cells.get_mut(u.id) {
            c.snr_db = u.snr_db;
            c.state = if u.is_outage() {
                CellState::Outage
            } else {
                CellState::Served
            };
        }
    }
    SnrMap {
        nx: g.nx,
        ny: g.ny,
        cells,
    }
}

/// `(angle, 10 log10 |w^H a(angle)|^2)` on `resolution` evenly spaced angles over `[0, pi]`.
pub fn beam_pattern(w: &Beam, cfg: &ArrayConfig, resolution: usize) -> Result<Vec<(f64, f64)>> {
    if resolution < 2 {
        return Err(Error::invalid("beam pattern needs at least two angles"));
    }
    if w.len() != cfg.num_antennas {
        return Err(Error::DimensionMismatch {
            expected: cfg.num_antennas,
            got: w.len(),
        });
    }
    Ok((0..resolution)
        .map(|i| {
            let phi = std::f64::consts::PI * i as f64 / (resolution - 1) as f64;
            let g = inner_gain(w.weights(), &array_response(cfg, phi));
            (phi, 10.0 * g.log10())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mimo::{
        dft_codebook, exhaustive_best_quantized_beam, synth_channel, ChannelVector, PathComponent,
        PhaseSet, DEFAULT_ENUMERATION_CAP,
    };
    use crate::scene::{ChannelRecord, GridSpec};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn cfg(m: usize) -> ArrayConfig {
        ArrayConfig::half_wavelength(m, 28e9).unwrap()
    }

    fn dataset(m: usize, k: usize, seed: u64) -> ChannelDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = (0..k)
            .map(|id| {
                let paths: Vec<PathComponent> = (0..2)
                    .map(|_| PathComponent {
                        gain: Complex64::from_polar(
                            rng.random_range(1e-6..1e-5),
                            rng.random_range(-PI..PI),
                        ),
                        angle_of_arrival: rng.random_range(0.0..PI),
                        interaction_count: 0,
                    })
                    .collect();
                let mut channel = synth_channel(&cfg(m), &paths);
                channel.is_los = id % 2 == 0;
                ChannelRecord {
                    id,
                    position: [id as f64, 0.0, 1.5],
                    channel,
                }
            })
            .collect();
        ChannelDataset {
            scene_hash: String::new(),
            array: cfg(m),
            link_budget: LinkBudget::default(),
            grid: GridSpec {
                nx: k,
                ny: 1,
                xmin: 0.0,
                ymin: 0.0,
                spacing: 1.0,
                height: 1.5,
            },
            records,
        }
    }

    #[test]
    fn matched_quantized_beams_reach_per_user_optimum() {
        let ds = dataset(2, 6, 1);
        let ps = PhaseSet::new(2).unwrap();
        let lb = LinkBudget::default();
        let beams: Vec<Beam> = ds
            .records
            .iter()
            .map(|r| {
                exhaustive_best_quantized_beam(
                    &ds.array,
                    &ps,
                    std::slice::from_ref(&r.channel),
                    DEFAULT_ENUMERATION_CAP,
                )
                .unwrap()
                .0
            })
            .collect();
        let cb = Codebook::from_beams(ds.array, Some(ps.clone()), beams).unwrap();
        let rep = evaluate_codebook(&cb, &ds, &lb).unwrap();
        for (u, r) in rep.users.iter().zip(&ds.records) {
            let (_, opt) = exhaustive_best_quantized_beam(
                &ds.array,
                &ps,
                std::slice::from_ref(&r.channel),
                DEFAULT_ENUMERATION_CAP,
            )
            .unwrap();
            let want = Snr::from_linear(opt * lb.rho()).db;
            assert!((u.snr_db - want).abs() < 1e-9);
        }
    }

    #[test]
    fn single_beam_report_equals_direct_gain() {
        let ds = dataset(4, 5, 2);
        let lb = LinkBudget::default();
        let w = Beam::from_phases(vec![0.0, 1.0, -2.0, 3.0]);
        let cb = Codebook::from_beams(ds.array, None, vec![w.clone()]).unwrap();
        let rep = evaluate_codebook(&cb, &ds, &lb).unwrap();
        for (u, r) in rep.users.iter().zip(&ds.records) {
            let g = inner_gain(w.weights(), &r.channel.entries);
            assert_eq!(u.snr_db, Snr::from_linear(g * lb.rho()).db);
        }
    }

    #[test]
    fn empty_dataset_and_array_mismatch_rejected() {
        let mut ds = dataset(4, 3, 3);
        let lb = LinkBudget::default();
        let cb = dft_codebook(&cfg(8), 4).unwrap();
        assert!(evaluate_codebook(&cb, &ds, &lb).is_err());
        ds.records.clear();
        let cb = dft_codebook(&cfg(4), 4).unwrap();
        assert!(matches!(
            evaluate_codebook(&cb, &ds, &lb),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn cdf_and_outage_accounting() {
        let mut ds = dataset(4, 6, 4);
        ds.records[1].channel = ChannelVector::zeros(4);
        let lb = LinkBudget::default();
        let rep = evaluate_codebook(&dft_codebook(&cfg(4), 4).unwrap(), &ds, &lb).unwrap();
        assert_eq!(rep.cdf.len(), 5);
        assert!((rep.summary.outage_frac - 1.0 / 6.0).abs() < 1e-12);
        assert!(rep
            .cdf
            .windows(2)
            .all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
        assert_eq!(rep.cdf.last().unwrap().1, 1.0);
        let p = rep.summary;
        assert!(p.p10 <= p.p50 && p.p50 <= p.p90);
    }

    #[test]
    fn egc_dominates_and_compare_self_is_zero() {
        let ds = dataset(4, 8, 5);
        let lb = LinkBudget::default();
        let egc = evaluate_egc(&ds, &lb).unwrap();
        let dft = evaluate_codebook(&dft_codebook(&cfg(4), 4).unwrap(), &ds, &lb)
            .unwrap()
            .with_labels("dft", "t");
        for (e, d) in egc.users.iter().zip(&dft.users) {
            assert!(e.snr_db >= d.snr_db - 1e-9);
        }
        let c = compare(&[dft.clone(), dft.clone()]).unwrap();
        assert_eq!(c.deltas[0].mean_db, Some(0.0));
        let c = compare(&[egc.clone(), dft.clone()]).unwrap();
        assert!(c.deltas[0].mean_db.unwrap() >= 0.0);
        let other = dft.subset(|u| u.is_los);
        assert!(matches!(
            compare(&[dft, other]),
            Err(Error::UserSetMismatch { .. })
        ));
    }

    #[test]
    fn split_routing_uses_los_flag() {
        let ds = dataset(4, 6, 6);
        let lb = LinkBudget::default();
        let a =
            Codebook::from_beams(ds.array, None, vec![Beam::from_phases(vec![0.0; 4])]).unwrap();
        let b = Codebook::from_beams(
            ds.array,
            None,
            vec![Beam::from_phases(vec![0.0, PI, 0.0, PI])],
        )
        .unwrap();
        let rep = evaluate_split(Some(&a), Some(&b), &ds, &lb).unwrap();
        for (u, r) in rep.users.iter().zip(&ds.records) {
            let cb = if r.is_los() { &a } else { &b };
            let g = inner_gain(cb.entries[0].beam.weights(), &r.channel.entries);
            assert_eq!(u.snr_db, Snr::from_linear(g * lb.rho()).db);
        }
        let only = evaluate_split(None, Some(&b), &ds, &lb).unwrap();
        assert_eq!(only, evaluate_codebook(&b, &ds, &lb).unwrap());
    }

    #[test]
    fn map_cells_match_report() {
        let mut ds = dataset(4, 6, 7);
        ds.records.remove(2);
        ds.records[0].channel = ChannelVector::zeros(4);
        let lb = LinkBudget::default();
        let cb = dft_codebook(&cfg(4), 4).unwrap();
        let rep = evaluate_codebook(&cb, &ds, &lb).unwrap();
        let map = snr_map(&cb, &ds, &lb).unwrap();
        assert_eq!(map.cells.len(), 6);
        assert_eq!(map.cells[2].state, CellState::Empty);
        assert_eq!(map.cells[0].state, CellState::Outage);
        for u in &rep.users {
            assert_eq!(map.cells[u.id].snr_db, u.snr_db);
        }
    }

    #[test]
    fn pattern_peaks() {
        let c = cfg(8);
        let phi0 = 1.1;
        let a = array_response(&c, phi0);
        let w = Beam::from_phases(a.iter().map(|x| x.arg()).collect());
        let pat = beam_pattern(&w, &c, 2001).unwrap();
        let (ang, peak) =
            pat.iter().cloned().fold(
                (0.0, f64::NEG_INFINITY),
                |b, p| if p.1 > b.1 { p } else { b },
            );
        assert!((ang - phi0).abs() < 2e-3);
        assert!((peak - 10.0 * 8f64.log10()).abs() < 1e-3);
        let dft0 = &dft_codebook(&c, 8).unwrap().entries[0].beam;
        let pat = beam_pattern(dft0, &c, 1001).unwrap();
        let best =
            pat.iter().cloned().fold(
                (0.0, f64::NEG_INFINITY),
                |b, p| if p.1 > b.1 { p } else { b },
            );
        assert!((best.0 - PI / 2.0).abs() < 1e-2);
        assert!(beam_pattern(dft0, &c, 1).is_err());
    }

    #[test]
    fn pattern_energy_is_beam_independent() {
        // at half-wavelength spacing the gain integrated over cos(phi) is 2 for any unit-norm beam
        let c = cfg(4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let energy = |w: &Beam| {
            let n = 20001;
            (0..n)
                .map(|i| {
                    let u = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
                    inner_gain(w.weights(), &array_response(&c, u.acos()))
                })
                .sum::<f64>()
                * 2.0
                / (n - 1) as f64
        };
        let e0 = energy(&Beam::from_phases(vec![0.0; 4]));
        for _ in 0..4 {
            let w = Beam::from_phases((0..4).map(|_| rng.random_range(-PI..PI)).collect());
            assert!((energy(&w) - e0).abs() / e0 < 1e-3);
        }
    }
}
