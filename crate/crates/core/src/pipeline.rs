//! Sensing, clustering and per-cluster training wired together.

use serde::{Deserialize, Serialize};

use crate::clustering::{
    build_sensing_matrix, gen_sensing_beams, kmeans_cluster, split_los_nlos, Clustering,
    KMeansParams,
};
use crate::drl::{learn_codebook, DdpgConfig, LearnedCodebook};
use crate::mimo::PhaseSet;
use crate::scene::ChannelDataset;
use crate::{derive_seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CodebookMode {
    /// One codebook of `n` beams over all users.
    Single { n: usize },
    /// Separate codebooks for direct-path and blocked users.
    Split { n_los: usize, n_nlos: usize },
}

impl CodebookMode {
    pub fn total_beams(&self) -> usize {
        match *self {
            CodebookMode::Single { n } => n,
            CodebookMode::Split { n_los, n_nlos } => n_los + n_nlos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub phase_bits: u32,
    pub mode: CodebookMode,
    /// Number of random sensing beams `S`.
    pub sensing_beams: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_normalize: bool,
    pub ddpg: DdpgConfig,
    /// Parent seed; sensing, clustering and training streams derive from it.
    pub seed: u64,
}

impl PipelineConfig {
    /// Defaults for an `m`-element array: 3-bit phases, 8 beams, `S = 4M`.
    pub fn for_array(m: usize) -> Self {
        PipelineConfig {
            phase_bits: 3,
            mode: CodebookMode::Single { n: 8 },
            sensing_beams: 4 * m,
            kmeans_max_iters: 100,
            kmeans_normalize: false,
            ddpg: DdpgConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        PhaseSet::new(self.phase_bits)?;
        self.ddpg.validate()?;
        if self.sensing_beams == 0 {
            return Err(Error::Config("sensing_beams must be positive".into()));
        }
        if self.kmeans_max_iters == 0 {
            return Err(Error::Config("kmeans_max_iters must be positive".into()));
        }
        match self.mode {
            CodebookMode::Single { n: 0 } => {
                Err(Error::Config("codebook size must be positive".into()))
            }
            CodebookMode::Split { n_los, n_nlos } if n_los == 0 || n_nlos == 0 => Err(
                Error::Config("split codebook sizes must be positive".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn phase_set(&self) -> Result<PhaseSet> {
        PhaseSet::new(self.phase_bits)
    }
}

/// Group a codebook is learned for. Also selects the seed streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    All,
    Los,
    Nlos,
}

impl Group {
    pub fn label_prefix(&self) -> &'static str {
        match self {
            Group::All => "c",
            Group::Los => "los",
            Group::Nlos => "nlos",
        }
    }

    fn stream(&self) -> u64 {
        match self {
            Group::All => 0,
            Group::Los => 1,
            Group::Nlos => 2,
        }
    }
}

/// Clusters `ds` into `n` groups (clamped to the user count).
pub fn cluster_dataset(
    ds: &ChannelDataset,
    n: usize,
    cfg: &PipelineConfig,
    group: Group,
) -> Result<Clustering> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let n_eff = n.min(ds.len());
    if n_eff < n {
        log::warn!(
            "{:?} group has only {} users; codebook size reduced from {n} to {n_eff}",
            group,
            ds.len()
        );
    }
    let base = derive_seed(cfg.seed, group.stream());
    let ps = cfg.phase_set()?;
    let sensing = gen_sensing_beams(&ds.array, &ps, cfg.sensing_beams, derive_seed(base, 10))?;
    let p = build_sensing_matrix(&sensing, ds)?;
    let params = KMeansParams {
        max_iters: cfg.kmeans_max_iters,
        normalize: cfg.kmeans_normalize,
        ..KMeansParams::new(n_eff, derive_seed(base, 11))
    };
    kmeans_cluster(&p, &params)
}

/// Trains one beam per cluster of `ds`.
pub fn train_group(
    ds: &ChannelDataset,
    clusters: &Clustering,
    cfg: &PipelineConfig,
    group: Group,
) -> Result<LearnedCodebook> {
    let ddpg = DdpgConfig {
        seed: derive_seed(derive_seed(cfg.seed, group.stream()), 12),
        ..cfg.ddpg
    };
    learn_codebook(clusters, ds, &ddpg, &cfg.phase_set()?, group.label_prefix())
}

#[derive(Debug, Clone)]
pub struct GroupResult {
    pub group: Group,
    pub clustering: Clustering,
    pub learned: LearnedCodebook,
}

#[derive(Debug, Clone)]
pub enum Learned {
    Single(GroupResult),
    /// Either side is `None` when the dataset had no users of that kind.
    Split {
        los: Option<GroupResult>,
        nlos: Option<GroupResult>,
    },
}

impl Learned {
    pub fn groups(&self) -> Vec<&GroupResult> {
        match self {
            Learned::Single(g) => vec![g],
            Learned::Split { los, nlos } => los.iter().chain(nlos.iter()).collect(),
        }
    }
}

fn run_group(
    ds: &ChannelDataset,
    n: usize,
    cfg: &PipelineConfig,
    group: Group,
) -> Result<GroupResult> {
    let clustering = cluster_dataset(ds, n, cfg, group)?;
    let learned = train_group(ds, &clustering, cfg, group)?;
    Ok(GroupResult {
        group,
        clustering,
        learned,
    })
}

/// Clusters and trains on `ds` according to `cfg.mode`.
pub fn learn(ds: &ChannelDataset, cfg: &PipelineConfig) -> Result<Learned> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    match cfg.mode {
        CodebookMode::Single { n } => Ok(Learned::Single(run_group(ds, n, cfg, Group::All)?)),
        CodebookMode::Split { n_los, n_nlos } => {
            let (los_ds, nlos_ds) = split_los_nlos(ds);
            let side = |d: &ChannelDataset, n, g: Group| -> Result<Option<GroupResult>> {
                if d.is_empty() {
                    log::warn!(
                        "no {:?} users in the training dataset; that codebook is skipped",
                        g
                    );
                    Ok(None)
                } else {
                    run_group(d, n, cfg, g).map(Some)
                }
            };
            let (los, nlos) = rayon::join(
                || side(&los_ds, n_los, Group::Los),
                || side(&nlos_ds, n_nlos, Group::Nlos),
            );
            Ok(Learned::Split {
                los: los?,
                nlos: nlos?,
            })
        }
    }
}
