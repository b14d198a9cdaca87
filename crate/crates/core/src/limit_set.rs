//! Greedy ε-clustering of orbit samples and the resulting limit-set estimate.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::phase_space::PhasePoint;

/// An ε-ball around a sample that accumulated `visits` tagged samples.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub center: PhasePoint,
    pub visits: usize,
}

/// Finite-resolution estimate of an ω- or α-limit set.
#[derive(Debug, Clone)]
pub struct LimitSetEstimate {
    pub clusters: Vec<Cluster>,
    pub radius: f64,
    /// Sampling window [T_tail, T_max] (time or index).
    pub window: (f64, f64),
    pub samples: usize,
    /// Samples dropped for lying outside the bounding region.
    pub discarded: usize,
    /// Samples kept but not within ε of a qualifying cluster.
    pub unclustered: usize,
    pub blowup_time: Option<f64>,
}

impl LimitSetEstimate {
    pub fn empty(radius: f64, window: (f64, f64)) -> Self {
        LimitSetEstimate {
            clusters: Vec::new(),
            radius,
            window,
            samples: 0,
            discarded: 0,
            unclustered: 0,
            blowup_time: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Distance from `p` to the nearest cluster center.
    pub fn nearest(&self, p: &PhasePoint) -> Result<Option<f64>> {
        let mut best: Option<f64> = None;
        for c in &self.clusters {
            let d = c.center.distance(p)?;
            best = Some(best.map_or(d, |b: f64| b.min(d)));
        }
        Ok(best)
    }
}

/// First-fit greedy clustering: a sample joins the oldest center within the
/// radius, otherwise it becomes a new center. Deterministic in sample order.
/// Low-dimensional euclidean points are bucketed on a grid of cell size ε.
#[derive(Debug)]
pub struct GreedyClusterer {
    radius: f64,
    centers: Vec<PhasePoint>,
    grid: Option<HashMap<Vec<i64>, Vec<usize>>>,
}

const GRID_MAX_DIM: usize = 3;

impl GreedyClusterer {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param("eps", "cluster radius must be positive"));
        }
        Ok(GreedyClusterer {
            radius,
            centers: Vec::new(),
            grid: None,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn centers(&self) -> &[PhasePoint] {
        &self.centers
    }

    fn cell(&self, x: &[f64]) -> Vec<i64> {
        x.iter().map(|v| (v / self.radius).floor() as i64).collect()
    }

    fn use_grid(&self, p: &PhasePoint) -> bool {
        matches!(p, PhasePoint::Euclidean(c) if c.len() <= GRID_MAX_DIM)
    }

    /// Indices of every center within `r` of `p`, ascending.
    pub fn within(&self, p: &PhasePoint, r: f64) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        match (&self.grid, p) {
            (Some(grid), PhasePoint::Euclidean(x)) if x.len() <= GRID_MAX_DIM => {
                let reach = (r / self.radius).ceil() as i64;
                let base = self.cell(x);
                let mut offset = vec![-reach; x.len()];
                loop {
                    let key: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
                    if let Some(ids) = grid.get(&key) {
                        for &i in ids {
                            if self.centers[i].distance(p)? <= r {
                                out.push(i);
                            }
                        }
                    }
                    // odometer over the (2·reach+1)^d neighbourhood
                    let mut axis = 0;
                    loop {
                        if axis == offset.len() {
                            out.sort_unstable();
                            return Ok(out);
                        }
                        offset[axis] += 1;
                        if offset[axis] <= reach {
                            break;
                        }
                        offset[axis] = -reach;
                        axis += 1;
                    }
                }
            }
            _ => {
                for (i, c) in self.centers.iter().enumerate() {
                    if c.distance(p)? <= r {
                        out.push(i);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Assigns `p` to a cluster, returning its index.
    pub fn assign(&mut self, p: &PhasePoint) -> Result<usize> {
        if self.centers.is_empty() && self.use_grid(p) {
            self.grid = Some(HashMap::new());
        }
        if let Some(&first) = self.within(p, self.radius)?.first() {
            return Ok(first);
        }
        let id = self.centers.len();
        self.centers.push(p.clone());
        if self.use_grid(p) {
            let key = self.cell(p.as_euclidean()?);
            if let Some(grid) = self.grid.as_mut() {
                grid.entry(key).or_default().push(id);
            }
        }
        Ok(id)
    }
}

/// Clusters `samples` (tag, point) and counts, for each cluster, the number of
/// distinct tags with a sample inside its ε-ball. Tags must be nondecreasing.
/// Clusters with fewer than `min_visits` distinct tags are dropped; the second
/// return value counts samples not within ε of any kept cluster.
pub fn cluster_tagged(
    samples: &[(u64, PhasePoint)],
    radius: f64,
    min_visits: usize,
) -> Result<(Vec<Cluster>, usize)> {
    let mut clusterer = GreedyClusterer::new(radius)?;
    for (_, p) in samples {
        clusterer.assign(p)?;
    }
    let n = clusterer.centers().len();
    let mut visits = vec![0usize; n];
    let mut last_tag: Vec<Option<u64>> = vec![None; n];
    let mut hits: Vec<Vec<usize>> = Vec::with_capacity(samples.len());
    for (tag, p) in samples {
        let ids = clusterer.within(p, radius)?;
        for &c in &ids {
            if last_tag[c] != Some(*tag) {
                last_tag[c] = Some(*tag);
                visits[c] += 1;
            }
        }
        hits.push(ids);
    }
    let keep: Vec<bool> = visits.iter().map(|&v| v >= min_visits.max(1)).collect();
    let unclustered = hits
        .iter()
        .filter(|ids| !ids.iter().any(|&c| keep[c]))
        .count();
    let clusters = clusterer
        .centers()
        .iter()
        .zip(&visits)
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|((c, &v), _)| Cluster {
            center: c.clone(),
            visits: v,
        })
        .collect();
    Ok((clusters, unclustered))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(c: &[f64]) -> PhasePoint {
        PhasePoint::euclidean(c.to_vec()).unwrap()
    }

    #[test]
    fn first_fit_prefers_oldest_center() {
        let mut c = GreedyClusterer::new(1.0).unwrap();
        assert_eq!(c.assign(&e(&[0.0])).unwrap(), 0);
        assert_eq!(c.assign(&e(&[1.5])).unwrap(), 1);
        // within 1 of both centers: goes to the first
        assert_eq!(c.assign(&e(&[0.8])).unwrap(), 0);
        assert_eq!(c.assign(&e(&[2.4])).unwrap(), 1);
        assert_eq!(c.assign(&e(&[2.6])).unwrap(), 2);
    }

    #[test]
    fn grid_matches_linear_scan() {
        let pts: Vec<PhasePoint> = (0..400)
            .map(|k| {
                let t = k as f64 * 0.37;
                e(&[t.cos() * (1.0 + 0.01 * t.sin()), t.sin()])
            })
            .collect();
        let mut grid = GreedyClusterer::new(0.05).unwrap();
        let mut linear: Vec<PhasePoint> = Vec::new();
        for p in &pts {
            let g = grid.assign(p).unwrap();
            let l = match linear.iter().position(|c| c.distance(p).unwrap() <= 0.05) {
                Some(i) => i,
                None => {
                    linear.push(p.clone());
                    linear.len() - 1
                }
            };
            assert_eq!(g, l);
        }
    }

    #[test]
    fn distinct_tag_visits() {
        let s = vec![
            (0, e(&[0.0])),
            (0, e(&[0.01])),
            (1, e(&[0.02])),
            (2, e(&[5.0])),
        ];
        let (clusters, unclustered) = cluster_tagged(&s, 0.1, 2).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].visits, 2);
        assert_eq!(unclustered, 1);
    }

    #[test]
    fn centers_pairwise_separated() {
        let pts: Vec<(u64, PhasePoint)> = (0..300)
            .map(|k| (k, e(&[(k as f64 * 0.618).fract(), (k as f64 * 0.414).fract()])))
            .collect();
        let (clusters, _) = cluster_tagged(&pts, 0.1, 1).unwrap();
        for (i, a) in clusters.iter().enumerate() {
            for b in &clusters[i + 1..] {
                assert!(a.center.distance(&b.center).unwrap() > 0.1);
            }
        }
    }
}
