//! User grouping by received power on random quantized sensing beams.
//!
//! Each user is described by the column of gains it sees on `S` random
//! sensing beams; Lloyd's k-means on those columns yields clusters of users
//! that can share one combining beam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mimo::{combining_gain, ArrayConfig, Beam, PhaseSet};
use crate::scene::ChannelDataset;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SensingSet {
    pub beams: Vec<Beam>,
    pub seed: u64,
}

/// Draws `count` beams whose phases are i.i.d. uniform over the phase set.
pub fn gen_sensing_beams(
    cfg: &ArrayConfig,
    ps: &PhaseSet,
    count: usize,
    seed: u64,
) -> Result<SensingSet> {
    if count == 0 {
        return Err(Error::invalid("need at least one sensing beam"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beams = (0..count)
        .map(|_| {
            let phases = (0..cfg.num_antennas)
                .map(|_| ps.values()[rng.random_range(0..ps.len())])
                .collect();
            Beam::from_phases(phases)
        })
        .collect();
    Ok(SensingSet { beams, seed })
}

/// `S x K` matrix of sensing gains, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub user_ids: Vec<usize>,
}

impl SensingMatrix {
    pub fn get(&self, s: usize, k: usize) -> f64 {
        self.data[s * self.cols + k]
    }

    /// Feature vector of user column `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.rows).map(|s| self.get(s, k)).collect()
    }
}

pub fn build_sensing_matrix(sensing: &SensingSet, ds: &ChannelDataset) -> Result<SensingMatrix> {
    let rows = sensing.beams.len();
    let cols = ds.len();
    // column-wise, then transposed into row-major storage
    let columns: Vec<Vec<f64>> = ds
        .records
        .par_iter()
        .map(|r| {
            sensing
                .beams
                .iter()
                .map(|f| combining_gain(f, &r.channel))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut data = vec![0.0; rows * cols];
    for (k, col) in columns.iter().enumerate() {
        for (s, &v) in col.iter().enumerate() {
            data[s * cols + k] = v;
        }
    }
    Ok(SensingMatrix {
        rows,
        cols,
        data,
        user_ids: ds.records.iter().map(|r| r.id).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub n_clusters: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once no centroid moves farther than `tol` times the largest column norm.
    pub tol: f64,
    /// Scale each user column to unit L2 norm before clustering.
    pub normalize: bool,
}

impl KMeansParams {
    pub fn new(n_clusters: usize, seed: u64) -> Self {
        KMeansParams {
            n_clusters,
            seed,
            max_iters: 100,
            tol: 1e-9,
            normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub id: usize,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub n_clusters: usize,
    pub seed: u64,
    /// One entry per user, in sensing-matrix column order.
    pub assignments: Vec<Assignment>,
    /// Within-cluster sum of squares after each Lloyd update.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

impl Clustering {
    /// User ids per cluster, in column order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for a in &self.assignments {
            out[a.cluster].push(a.id);
        }
        out
    }

    pub fn cluster_of(&self, id: usize) -> Option<usize> {
        self.assignments
            .iter()
            .find(|a| a.id == id)
            .map(|a| a.cluster)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp_init(points: &[Vec<f64>], n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < n {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = d2.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm on the columns of `p` with k-means++ seeding.
///
/// A cluster left empty by an assignment pass takes over the point that is
/// farthest from its own centroid.
pub fn kmeans_cluster(p: &SensingMatrix, params: &KMeansParams) -> Result<Clustering> {
    let n = params.n_clusters;
    let k = p.cols;
    if n == 0 {
        return Err(Error::invalid("need at least one cluster"));
    }
    if n > k {
        return Err(Error::invalid(format!(
            "cannot form {n} clusters from {k} users"
        )));
    }
    if params.max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }

    let mut points: Vec<Vec<f64>> = (0..k).map(|c| p.column(c)).collect();
    if params.normalize {
        for pt in &mut points {
            let norm = pt.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                pt.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }

    let scale = points
        .iter()
        .map(|pt| pt.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = kmeans_pp_init(&points, n, &mut rng);
    let mut labels = vec![0usize; k];
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..params.max_iters {
        iterations += 1;
        let nearest_all: Vec<(usize, f64)> = points
            .par_iter()
            .map(|pt| nearest(pt, &centroids))
            .collect();
        for (l, (c, _)) in labels.iter_mut().zip(&nearest_all) {
            *l = *c;
        }
        repair_empty(&points, &mut labels, n);

        let new_centroids = means(&points, &labels, n, p.rows);
        let shift = centroids
            .iter()
            .zip(&new_centroids)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = new_centroids;
        history.push(objective(&points, &labels, &centroids));
        if shift <= params.tol * scale {
            break;
        }
    }

    Ok(Clustering {
        n_clusters: n,
        seed: params.seed,
        assignments: p
            .user_ids
            .iter()
            .zip(&labels)
            .map(|(&id, &cluster)| Assignment { id, cluster })
            .collect(),
        objective_history: history,
        iterations,
    })
}

fn repair_empty(points: &[Vec<f64>], labels: &mut [usize], n: usize) {
    loop {
        let mut counts = vec![0usize; n];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let current = means(points, labels, n, points[0].len());
        let donor = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| counts[l] > 1)
            .map(|(i, &l)| (i, sq_dist(&points[i], &current[l])))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        match donor {
            Some((i, _)) => labels[i] = empty,
            None => return,
        }
    }
}

fn means(points: &[Vec<f64>], labels: &[usize], n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; n];
    let mut counts = vec![0usize; n];
    for (pt, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(pt) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    sums
}

fn objective(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(pt, &l)| sq_dist(pt, &centroids[l]))
        .sum()
}

/// Splits a dataset by the direct-path flag; outage users land in the NLoS half.
pub fn split_los_nlos(ds: &ChannelDataset) -> (ChannelDataset, ChannelDataset) {
    (ds.filtered(|r| r.is_los()), ds.filtered(|r| !r.is_los()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mimo::{ChannelVector, LinkBudget};
    use crate::scene::{ChannelRecord, GridSpec};
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn matrix(cols: Vec<Vec<f64>>) -> SensingMatrix {
        let rows = cols[0].len();
        let k = cols.len();
        let mut data = vec![0.0; rows * k];
        for (c, col) in cols.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                data[r * k + c] = *v;
            }
        }
        SensingMatrix {
            rows,
            cols: k,
            data,
            user_ids: (0..k).collect(),
        }
    }

    fn dataset(channels: Vec<ChannelVector>) -> ChannelDataset {
        let m = channels[0].len();
        ChannelDataset {
            scene_hash: String::new(),
            array: ArrayConfig::half_wavelength(m, 28e9).unwrap(),
            link_budget: LinkBudget::default(),
            grid: GridSpec {
                nx: channels.len(),
                ny: 1,
                xmin: 0.0,
                ymin: 0.0,
                spacing: 1.0,
                height: 1.5,
            },
            records: channels
                .into_iter()
                .enumerate()
                .map(|(id, channel)| ChannelRecord {
                    id,
                    position: [id as f64, 0.0, 1.5],
                    channel,
                })
                .collect(),
        }
    }

    #[test]
    fn sensing_beams_in_domain_and_seeded() {
        let cfg = ArrayConfig::half_wavelength(2, 28e9).unwrap();
        let ps = PhaseSet::new(1).unwrap();
        let set = gen_sensing_beams(&cfg, &ps, 1, 4).unwrap();
        assert_eq!(set.beams.len(), 1);
        assert!(set.beams[0].phases().iter().all(|p| *p == 0.0 || *p == PI));
        assert_eq!(set, gen_sensing_beams(&cfg, &ps, 1, 4).unwrap());
        assert!(gen_sensing_beams(&cfg, &ps, 0, 4).is_err());
    }

    #[test]
    fn sensing_phase_frequencies_are_uniform() {
        // S=64, r=3, M=8: each slot sees 64 draws over 8 values; pooled over
        // the 8 slots that is 512 draws with expected 64 per value
        let cfg = ArrayConfig::half_wavelength(8, 28e9).unwrap();
        let ps = PhaseSet::new(3).unwrap();
        let set = gen_sensing_beams(&cfg, &ps, 64, 99).unwrap();
        for slot in 0..8 {
            let mut counts = [0usize; 8];
            for b in &set.beams {
                counts[ps.nearest_index(b.phases()[slot])] += 1;
            }
            // 3-sigma multinomial band around 8 per value: sd = sqrt(64 * 1/8 * 7/8)
            let sd = (64.0f64 * 0.125 * 0.875).sqrt();
            for c in counts {
                assert!((c as f64 - 8.0).abs() <= 3.0 * sd, "{counts:?}");
            }
            let chi2: f64 = counts.iter().map(|&c| (c as f64 - 8.0).powi(2) / 8.0).sum();
            // 7 dof, 0.999 quantile
            assert!(chi2 < 24.32, "chi2 {chi2}");
        }
    }

    #[test]
    fn sensing_matrix_entries() {
        let cfg = ArrayConfig::half_wavelength(4, 28e9).unwrap();
        let ps = PhaseSet::new(2).unwrap();
        let set = gen_sensing_beams(&cfg, &ps, 1, 7).unwrap();
        let c = Complex64::new(0.3, -0.4);
        let h = ChannelVector {
            entries: set.beams[0].weights().iter().map(|w| w * 2.0 * c).collect(),
            path_count: 1,
            is_los: true,
        };
        let ds = dataset(vec![h.clone(), ChannelVector::zeros(4), h]);
        let p = build_sensing_matrix(&set, &ds).unwrap();
        // h = f * sqrt(M) * c  =>  |f^H h|^2 = M |c|^2
        assert!((p.get(0, 0) - 4.0 * c.norm_sqr()).abs() < 1e-12);
        assert_eq!(p.get(0, 1), 0.0);
        assert_eq!(p.column(0), p.column(2));
    }

    #[test]
    fn sensing_matrix_dimension_mismatch() {
        let cfg = ArrayConfig::half_wavelength(4, 28e9).unwrap();
        let set = gen_sensing_beams(&cfg, &PhaseSet::new(2).unwrap(), 3, 7).unwrap();
        let ds = dataset(vec![ChannelVector::zeros(2)]);
        assert!(build_sensing_matrix(&set, &ds).is_err());
    }

    #[test]
    fn n_equals_k_gives_singletons() {
        let p = matrix(vec![
            vec![0.0, 1.0],
            vec![5.0, 5.0],
            vec![-3.0, 2.0],
            vec![9.0, -1.0],
        ]);
        let c = kmeans_cluster(&p, &KMeansParams::new(4, 1)).unwrap();
        let mut labels: Vec<_> = c.assignments.iter().map(|a| a.cluster).collect();
        labels.sort();
        assert_eq!(labels, vec![0, 1, 2, 3]);
        assert_eq!(*c.objective_history.last().unwrap(), 0.0);
    }

    #[test]
    fn separated_groups_are_recovered() {
        let mut cols = Vec::new();
        for i in 0..10 {
            cols.push(vec![0.0 + 0.01 * i as f64, 0.0]);
            cols.push(vec![100.0, 100.0 - 0.01 * i as f64]);
        }
        let p = matrix(cols);
        for seed in 0..5 {
            let c = kmeans_cluster(&p, &KMeansParams::new(2, seed)).unwrap();
            let first = c.assignments[0].cluster;
            for (i, a) in c.assignments.iter().enumerate() {
                assert_eq!(a.cluster == first, i % 2 == 0);
            }
        }
    }

    #[test]
    fn too_many_clusters_rejected() {
        let p = matrix(vec![vec![1.0], vec![2.0]]);
        assert!(kmeans_cluster(&p, &KMeansParams::new(3, 0)).is_err());
        let mut params = KMeansParams::new(1, 0);
        params.max_iters = 0;
        assert!(kmeans_cluster(&p, &params).is_err());
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let p = matrix(vec![vec![1.0, 1.0]; 6]);
        let c = kmeans_cluster(&p, &KMeansParams::new(3, 2)).unwrap();
        let members = c.members();
        assert!(members.iter().all(|m| !m.is_empty()));
    }

    #[test]
    fn split_routes_outage_to_nlos() {
        let los = ChannelVector {
            entries: vec![Complex64::new(1.0, 0.0); 2],
            path_count: 1,
            is_los: true,
        };
        let nlos = ChannelVector {
            is_los: false,
            path_count: 2,
            ..los.clone()
        };
        let ds = dataset(vec![los.clone(), ChannelVector::zeros(2), nlos, los]);
        let (l, n) = split_los_nlos(&ds);
        assert_eq!(l.len(), 2);
        assert_eq!(n.len(), 2);
        assert!(n.records.iter().any(|r| r.channel.is_outage()));

        let all_los = ds.filtered(|r| r.is_los());
        let (l, n) = split_los_nlos(&all_los);
        assert_eq!((l.len(), n.len()), (2, 0));
    }
}
