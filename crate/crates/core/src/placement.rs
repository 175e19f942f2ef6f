//! UAV placement by path-loss fuzzy c-means.
//!
//! Classical fuzzy c-means with the squared Euclidean dissimilarity replaced
//! by the large-scale path loss `d^α`. With `α = 2` the center update is the
//! usual weighted mean; for other exponents one reweighted least-squares step
//! is taken per iteration and shortened until the objective does not grow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::Position3D;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementConfig {
    pub fuzzifier: f64,
    pub pathloss_exponent: f64,
    /// Convergence threshold on the largest center movement, meters.
    pub tol_m: f64,
    pub max_iter: usize,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self { fuzzifier: 2.0, pathloss_exponent: 2.0, tol_m: 1e-4, max_iter: 100 }
    }
}

impl PlacementConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fuzzifier > 1.0 && self.fuzzifier.is_finite()) {
            return Err(Error::Config(format!("fuzzifier must be > 1, got {}", self.fuzzifier)));
        }
        if !(self.pathloss_exponent > 0.0 && self.pathloss_exponent.is_finite()) {
            return Err(Error::Config("pathloss_exponent must be positive".into()));
        }
        if !(self.tol_m >= 0.0) {
            return Err(Error::Config("tol_m must be >= 0".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of one clustering run. `membership[i][j]` refers to the input
/// order of the points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmResult {
    /// Centers in lexicographic (x, y) order.
    pub centers: Vec<[f64; 2]>,
    pub membership: Vec<Vec<f64>>,
    /// Objective after every membership update.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn objective(points: &[[f64; 2]], centers: &[[f64; 2]], u: &[Vec<f64>], q: f64, alpha: f64) -> f64 {
    points
        .iter()
        .zip(u)
        .map(|(p, row)| {
            centers
                .iter()
                .zip(row)
                .map(|(c, &uij)| if uij > 0.0 { uij.powf(q) * dist(p, c).powf(alpha) } else { 0.0 })
                .sum::<f64>()
        })
        .sum()
}

fn update_membership(points: &[[f64; 2]], centers: &[[f64; 2]], q: f64, alpha: f64, u: &mut [Vec<f64>]) {
    let expo = 1.0 / (q - 1.0);
    for (p, row) in points.iter().zip(u.iter_mut()) {
        let diss: Vec<f64> = centers.iter().map(|c| dist(p, c).powf(alpha)).collect();
        if let Some(hit) = diss.iter().position(|&d| d == 0.0) {
            row.iter_mut().for_each(|x| *x = 0.0);
            row[hit] = 1.0;
            continue;
        }
        // u_ij = 1 / Σ_k (D_ij / D_ik)^{1/(q-1)}, computed via inverse powers
        let inv: Vec<f64> = diss.iter().map(|&d| d.powf(-expo)).collect();
        let total: f64 = inv.iter().sum();
        for (x, v) in row.iter_mut().zip(&inv) {
            *x = v / total;
        }
    }
}

fn kmeanspp(points: &[[f64; 2]], m: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let mut centers = vec![points[rng.gen_range(0..points.len())]];
    while centers.len() < m {
        let weights: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| dist(p, c).powi(2)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, &w) in weights.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        centers.push(points[pick]);
    }
    centers
}

/// Weighted center of cluster `j`; `None` if all weights vanish.
fn center_step(points: &[[f64; 2]], u: &[Vec<f64>], j: usize, q: f64, alpha: f64, current: &[f64; 2]) -> Option<[f64; 2]> {
    let mut acc = [0.0, 0.0];
    let mut wsum = 0.0;
    for (p, row) in points.iter().zip(u) {
        let mut w = row[j].powf(q);
        if alpha != 2.0 {
            let d = dist(p, current);
            if d == 0.0 {
                // A point on the current center pins it for α < 2.
                if alpha < 2.0 && w > 0.0 {
                    return Some(*p);
                }
                continue;
            }
            w *= d.powf(alpha - 2.0);
        }
        acc[0] += w * p[0];
        acc[1] += w * p[1];
        wsum += w;
    }
    (wsum > 0.0).then(|| [acc[0] / wsum, acc[1] / wsum])
}

/// Path-loss fuzzy c-means on horizontal UE positions.
pub fn ls_fcm(ue_xy: &[[f64; 2]], m: usize, cfg: &PlacementConfig, seed: u64) -> Result<FcmResult> {
    cfg.validate()?;
    let n = ue_xy.len();
    if m == 0 {
        return Err(Error::Config("at least one cluster is required".into()));
    }
    if m > n {
        return Err(Error::Config(format!("{m} clusters for {n} points")));
    }
    if ue_xy.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::Config("non-finite UE coordinate".into()));
    }

    // Work on a sorted copy so the result does not depend on input order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        ue_xy[a][0].total_cmp(&ue_xy[b][0]).then(ue_xy[a][1].total_cmp(&ue_xy[b][1]))
    });
    let points: Vec<[f64; 2]> = order.iter().map(|&i| ue_xy[i]).collect();

    let (q, alpha) = (cfg.fuzzifier, cfg.pathloss_exponent);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeanspp(&points, m, &mut rng);
    let mut u = vec![vec![0.0; m]; n];
    update_membership(&points, &centers, q, alpha, &mut u);
    let mut trace = vec![objective(&points, &centers, &u, q, alpha)];

    let mut iterations = 0;
    for _ in 0..cfg.max_iter {
        iterations += 1;
        let mut moved = 0.0_f64;
        for j in 0..m {
            let Some(target) = center_step(&points, &u, j, q, alpha, &centers[j]) else {
                continue;
            };
            let old = centers[j];
            let before = objective(&points, &centers, &u, q, alpha);
            let mut step = 1.0;
            loop {
                centers[j] = [old[0] + step * (target[0] - old[0]), old[1] + step * (target[1] - old[1])];
                if alpha == 2.0 || objective(&points, &centers, &u, q, alpha) <= before {
                    break;
                }
                step *= 0.5;
                if step < 1e-12 {
                    centers[j] = old;
                    break;
                }
            }
            moved = moved.max(dist(&old, &centers[j]));
        }
        update_membership(&points, &centers, q, alpha, &mut u);
        trace.push(objective(&points, &centers, &u, q, alpha));
        if moved < cfg.tol_m {
            break;
        }
    }

    let mut membership = vec![Vec::new(); n];
    for (sorted_idx, &orig) in order.iter().enumerate() {
        membership[orig] = u[sorted_idx].clone();
    }
    let mut perm: Vec<usize> = (0..m).collect();
    perm.sort_by(|&a, &b| centers[a][0].total_cmp(&centers[b][0]).then(centers[a][1].total_cmp(&centers[b][1])));
    let centers_sorted = perm.iter().map(|&j| centers[j]).collect();
    for row in &mut membership {
        *row = perm.iter().map(|&j| row[j]).collect();
    }
    Ok(FcmResult { centers: centers_sorted, membership, objective_trace: trace, iterations })
}

/// Clusters the UEs' horizontal positions and lifts the centers to `altitude_m`.
pub fn place_uavs(
    ues: &[Position3D],
    m: usize,
    altitude_m: f64,
    cfg: &PlacementConfig,
    seed: u64,
) -> Result<Vec<Position3D>> {
    let xy: Vec<[f64; 2]> = ues.iter().map(|p| [p.x, p.y]).collect();
    let result = ls_fcm(&xy, m, cfg, seed)?;
    Ok(result.centers.iter().map(|c| Position3D::new(c[0], c[1], altitude_m)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coincident_points_collapse() {
        let pts = vec![[3.0, 4.0]; 6];
        for m in 1..=3 {
            let r = ls_fcm(&pts, m, &PlacementConfig::default(), 1).unwrap();
            assert!(r.centers.iter().all(|c| *c == [3.0, 4.0]));
        }
    }

    #[test]
    fn too_many_clusters() {
        let pts = vec![[0.0, 0.0], [1.0, 1.0]];
        assert!(matches!(ls_fcm(&pts, 3, &PlacementConfig::default(), 0), Err(Error::Config(_))));
        assert!(ls_fcm(&pts, 0, &PlacementConfig::default(), 0).is_err());
    }

    #[test]
    fn single_cluster_is_centroid() {
        let pts = vec![[0.0, 0.0], [4.0, 0.0], [2.0, 6.0], [10.0, 2.0]];
        let r = ls_fcm(&pts, 1, &PlacementConfig::default(), 9).unwrap();
        assert!((r.centers[0][0] - 4.0).abs() < 1e-9);
        assert!((r.centers[0][1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_fuzzifier() {
        let cfg = PlacementConfig { fuzzifier: 1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn place_uavs_lifts_to_altitude() {
        let ues: Vec<Position3D> = (0..8).map(|i| Position3D::new(i as f64 * 10.0, 5.0, 0.0)).collect();
        let uavs = place_uavs(&ues, 2, 30.0, &PlacementConfig::default(), 4).unwrap();
        assert_eq!(uavs.len(), 2);
        assert!(uavs.iter().all(|p| p.z == 30.0));
    }
}
