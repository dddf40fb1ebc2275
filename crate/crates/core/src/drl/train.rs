//! Per-cluster beam learning loop.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::agent::{DdpgConfig, TrainerState};
use super::replay::Transition;
use crate::clustering::Clustering;
use crate::mimo::{
    mean_gain, wrap_phase, ArrayConfig, Beam, ChannelVector, Codebook, CodebookEntry, PhaseSet,
};
use crate::scene::ChannelDataset;
use crate::{derive_seed, Error, Result};

/// Elementwise nearest phase in `ps`; ties go to the larger phase.
pub fn quantize_action(proto: &[f64], ps: &PhaseSet) -> Vec<f64> {
    proto.iter().map(|&p| ps.nearest(p)).collect()
}

/// Adaptive-threshold reward.
pub fn reward(gain: f64, beta: f64, prev_gain: f64) -> f64 {
    if gain > beta || gain > prev_gain {
        1.0
    } else {
        -1.0
    }
}

/// Mean `|w^H h|^2` over the cluster.
pub fn cluster_gain(w: &Beam, cluster: &[ChannelVector]) -> Result<f64> {
    if cluster.is_empty() {
        return Err(Error::Empty("cluster"));
    }
    for h in cluster {
        if h.len() != w.len() {
            return Err(Error::DimensionMismatch {
                expected: w.len(),
                got: h.len(),
            });
        }
    }
    Ok(mean_gain(w.weights(), cluster))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: usize,
    pub gain: f64,
    pub reward: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub beam: Beam,
    /// Cluster gain of `beam`, equal to the final threshold.
    pub gain: f64,
    pub trace: Vec<TraceStep>,
}

impl TrainOutcome {
    pub fn zero_gain(&self) -> bool {
        self.gain == 0.0
    }
}

fn random_quantized(m: usize, ps: &PhaseSet, rng: &mut impl Rng) -> Vec<f64> {
    let v = ps.values();
    (0..m).map(|_| v[rng.random_range(0..v.len())]).collect()
}

/// Learns one quantized beam for `cluster` with DDPG.
///
/// OU noise is scaled by `cfg.noise_scale` radians; noisy proto-actions are
/// wrapped to `(-pi, pi]` before quantization. Each episode starts from a random quantized
/// state, while the threshold persists across the whole run.
pub fn train_beam(
    cluster: &[ChannelVector],
    cfg: &DdpgConfig,
    ps: &PhaseSet,
    arr: &ArrayConfig,
) -> Result<TrainOutcome> {
    arr.validate()?;
    if cluster.is_empty() {
        return Err(Error::Empty("cluster"));
    }
    let m = arr.num_antennas;
    for h in cluster {
        if h.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: h.len(),
            });
        }
    }
    let mut ts = TrainerState::new(m, cfg)?;
    let mut trace = Vec::with_capacity(cfg.total_steps());
    let mut best_gain = 0.0;
    let mut t = 0;

    for _ in 0..cfg.episodes {
        ts.state = random_quantized(m, ps, &mut ts.rng);
        ts.prev_gain = mean_gain(Beam::from_phases(ts.state.clone()).weights(), cluster);
        ts.noise.reset();
        for _ in 0..cfg.steps_per_episode {
            ts.noise.sigma = cfg.sigma_at(t);
            let proto = ts.agent.act(&ts.state);
            let noise = ts.noise.step(&mut ts.rng);
            let noisy: Vec<f64> = proto
                .iter()
                .zip(noise)
                .map(|(p, n)| wrap_phase(p + cfg.noise_scale * n))
                .collect();
            let action = quantize_action(&noisy, ps);
            let beam = Beam::from_phases(action.clone());
            let gain = mean_gain(beam.weights(), cluster);
            let r = reward(gain, ts.beta, ts.prev_gain);
            if gain > ts.beta || ts.best.is_none() {
                if gain > ts.beta {
                    ts.beta = gain;
                }
                best_gain = gain;
                ts.best = Some(beam);
            }
            ts.buffer.push(Transition {
                state: std::mem::replace(&mut ts.state, action.clone()),
                action: action.clone(),
                reward: r,
                next_state: action,
            });
            ts.prev_gain = gain;
            ts.ddpg_update(cfg)?;
            trace.push(TraceStep {
                t,
                gain,
                reward: r,
                beta: ts.beta,
            });
            t += 1;
        }
    }
    let beam = ts.best.expect("at least one step ran");
    debug_assert_eq!(best_gain, ts.beta);
    Ok(TrainOutcome {
        beam,
        gain: best_gain,
        trace,
    })
}

#[derive(Debug, Clone)]
pub struct LearnedCodebook {
    pub codebook: Codebook,
    /// Training trace per codebook entry, in entry order.
    pub traces: Vec<Vec<TraceStep>>,
    /// Clusters that had no members and produced no beam.
    pub omitted: Vec<usize>,
}

/// Trains one beam per cluster, each with its own derived seed.
///
/// Labels are `{prefix}{cluster}`. Clusters with no members are skipped with a
/// warning; clusters whose channels are all outages yield a flagged zero-gain beam.
pub fn learn_codebook(
    clusters: &Clustering,
    ds: &ChannelDataset,
    cfg: &DdpgConfig,
    ps: &PhaseSet,
    label_prefix: &str,
) -> Result<LearnedCodebook> {
    let by_id: HashMap<usize, &ChannelVector> =
        ds.records.iter().map(|r| (r.id, &r.channel)).collect();
    let groups = clusters
        .members()
        .into_iter()
        .map(|ids| {
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id)
                        .map(|h| (*h).clone())
                        .ok_or_else(|| Error::invalid(format!("user {id} is not in the dataset")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let results: Vec<Option<Result<TrainOutcome>>> = groups
        .par_iter()
        .enumerate()
        .map(|(c, group)| {
            if group.is_empty() {
                return None;
            }
            let cfg_c = DdpgConfig {
                seed: derive_seed(cfg.seed, c as u64),
                ..*cfg
            };
            Some(train_beam(group, &cfg_c, ps, &ds.array))
        })
        .collect();

    let mut entries = Vec::new();
    let mut traces = Vec::new();
    let mut omitted = Vec::new();
    for (c, res) in results.into_iter().enumerate() {
        match res {
            None => {
                log::warn!("cluster {label_prefix}{c} is empty; no beam learned");
                omitted.push(c);
            }
            Some(res) => {
                let out = res?;
                if out.zero_gain() {
                    log::warn!(
                        "cluster {label_prefix}{c} has no usable channel; beam flagged zero-gain"
                    );
                }
                entries.push(CodebookEntry {
                    label: format!("{label_prefix}{c}"),
                    zero_gain: out.zero_gain(),
                    beam: out.beam,
                });
                traces.push(out.trace);
            }
        }
    }
    let codebook = Codebook::new(ds.array, Some(ps.clone()), entries)?;
    Ok(LearnedCodebook {
        codebook,
        traces,
        omitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mimo::{
        combining_gain, exhaustive_best_quantized_beam, synth_channel, PathComponent,
        DEFAULT_ENUMERATION_CAP,
    };
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn arr(m: usize) -> ArrayConfig {
        ArrayConfig::half_wavelength(m, 28e9).unwrap()
    }

    fn random_channel(m: usize, paths: usize, rng: &mut ChaCha8Rng) -> ChannelVector {
        let comps: Vec<PathComponent> = (0..paths)
            .map(|_| PathComponent {
                gain: Complex64::from_polar(rng.random_range(0.1..1.0), rng.random_range(-PI..PI)),
                angle_of_arrival: rng.random_range(0.0..PI),
                interaction_count: 0,
            })
            .collect();
        synth_channel(&arr(m), &comps)
    }

    #[test]
    fn quantize_examples() {
        let ps = PhaseSet::new(2).unwrap();
        assert_eq!(quantize_action(&[0.3], &ps), vec![0.0]);
        assert_eq!(quantize_action(&[PI / 4.0], &ps), vec![PI / 2.0]);
        let q = quantize_action(&[-1.0, 2.9, -3.1], &ps);
        assert_eq!(quantize_action(&q, &ps), q);
    }

    #[test]
    fn reward_examples() {
        assert_eq!(reward(2.0, 1.0, 5.0), 1.0);
        assert_eq!(reward(0.5, 1.0, 0.4), 1.0);
        assert_eq!(reward(0.3, 1.0, 0.4), -1.0);
    }

    #[test]
    fn cluster_gain_matches_direct_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let hs: Vec<_> = (0..5).map(|_| random_channel(4, 2, &mut rng)).collect();
        let w = Beam::from_phases(vec![0.2, -1.0, 2.0, 3.0]);
        let direct: f64 = hs
            .iter()
            .map(|h| combining_gain(&w, h).unwrap())
            .sum::<f64>()
            / 5.0;
        assert!((cluster_gain(&w, &hs).unwrap() - direct).abs() <= 1e-15 * direct.max(1.0));
        let one = combining_gain(&w, &hs[0]).unwrap();
        assert_eq!(cluster_gain(&w, &hs[..1]).unwrap(), one);
        assert_eq!(
            cluster_gain(&w, &[hs[0].clone(), hs[0].clone()]).unwrap(),
            one
        );
        assert!(cluster_gain(&w, &[]).is_err());
    }

    #[test]
    fn small_instance_reaches_the_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ps = PhaseSet::new(2).unwrap();
        let h = vec![random_channel(2, 1, &mut rng)];
        let (_, opt) =
            exhaustive_best_quantized_beam(&arr(2), &ps, &h, DEFAULT_ENUMERATION_CAP).unwrap();
        let cfg = DdpgConfig {
            seed: 5,
            ..DdpgConfig::default()
        }
        .with_step_budget(500);
        let out = train_beam(&h, &cfg, &ps, &arr(2)).unwrap();
        assert!(out.beam.is_quantized(&ps));
        assert!(
            (out.gain - opt).abs() <= 1e-12 * opt,
            "{} vs {opt}",
            out.gain
        );
        assert_eq!(out.gain, cluster_gain(&out.beam, &h).unwrap());
        assert!(out.trace.windows(2).all(|w| w[1].beta >= w[0].beta));
        assert_eq!(out.trace.last().unwrap().beta, out.gain);
    }

    #[test]
    fn outage_cluster_gives_zero_gain_beam() {
        let ps = PhaseSet::new(1).unwrap();
        let cfg = DdpgConfig::default().with_step_budget(8);
        let out = train_beam(&[ChannelVector::zeros(3)], &cfg, &ps, &arr(3)).unwrap();
        assert!(out.zero_gain());
        assert!(out.trace.iter().all(|s| s.beta == 0.0));
    }
}
