use nalgebra::Vector3;
use rayon::prelude::*;

use super::kdtree::KdTree;
use crate::error::{Error, Result};

/// Iterations between nearest-neighbor refreshes.
pub const REFRESH_PERIOD: u64 = 1000;

/// Caller-owned nearest-neighbor assignments for a set of Gaussian means.
///
/// Assignments are recomputed when the iteration counter enters a new
/// 1000-iteration block, when the number of means changes, or on first use.
#[derive(Debug, Clone)]
pub struct NnCache {
    k: usize,
    assignments: Vec<Vec<usize>>,
    block: Option<u64>,
    reference_len: usize,
    refreshes: usize,
}

impl NnCache {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("nearest-neighbor count must be at least 1".into()));
        }
        Ok(NnCache { k, assignments: Vec::new(), block: None, reference_len: 0, refreshes: 0 })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of times the assignments were recomputed.
    pub fn refreshes(&self) -> usize {
        self.refreshes
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }

    fn stale(&self, means: usize, reference: usize, iteration: u64) -> bool {
        self.block != Some(iteration / REFRESH_PERIOD)
            || self.assignments.len() != means
            || self.reference_len != reference
    }

    fn update(&mut self, gm: &[Vector3<f64>], reference: &[Vector3<f64>], iteration: u64) {
        if !self.stale(gm.len(), reference.len(), iteration) {
            return;
        }
        let tree = KdTree::new(reference);
        let k = self.k;
        self.assignments = gm
            .par_iter()
            .map(|m| tree.k_nearest(m, k).into_iter().map(|(i, _)| i).collect())
            .collect();
        self.block = Some(iteration / REFRESH_PERIOD);
        self.reference_len = reference.len();
        self.refreshes += 1;
    }
}

impl Default for NnCache {
    fn default() -> Self {
        NnCache::new(1).expect("k = 1")
    }
}

fn check(gm: &[Vector3<f64>], reference: &[Vector3<f64>]) -> Result<()> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    if gm.is_empty() {
        return Err(Error::DegenerateInput("no Gaussian means".into()));
    }
    if let Some(i) = gm.iter().position(|m| !m.iter().all(|v| v.is_finite())) {
        return Err(Error::DegenerateInput(format!("Gaussian mean {i} is not finite")));
    }
    Ok(())
}

/// Permutation-invariant mean: terms are summed in sorted order.
fn sorted_mean(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum::<f64>() / terms.len() as f64
}

fn term(m: &Vector3<f64>, reference: &[Vector3<f64>], nbrs: &[usize]) -> f64 {
    nbrs.iter().map(|&j| (m - reference[j]).norm().sqrt()).sum::<f64>() / nbrs.len() as f64
}

/// Mean over means of the square root of the Euclidean distance to the
/// assigned reference point (averaged over the k assigned points when k > 1).
pub fn nn_loss(gm: &[Vector3<f64>], reference: &[Vector3<f64>], cache: &mut NnCache, iteration: u64) -> Result<f64> {
    check(gm, reference)?;
    cache.update(gm, reference, iteration);
    let terms = gm.iter().zip(&cache.assignments).map(|(m, n)| term(m, reference, n)).collect();
    Ok(sorted_mean(terms))
}

/// Loss and its gradient with respect to every mean under the cached
/// assignment. A mean sitting exactly on its neighbor gets zero gradient.
pub fn nn_loss_grad(
    gm: &[Vector3<f64>],
    reference: &[Vector3<f64>],
    cache: &mut NnCache,
    iteration: u64,
) -> Result<(f64, Vec<Vector3<f64>>)> {
    let loss = nn_loss(gm, reference, cache, iteration)?;
    let c = gm.len() as f64;
    let grads = gm
        .iter()
        .zip(&cache.assignments)
        .map(|(m, nbrs)| {
            let mut g = Vector3::zeros();
            for &j in nbrs {
                let d = m - reference[j];
                let r = d.norm();
                if r > 0.0 {
                    g += d * (0.5 * r.powf(-1.5));
                }
            }
            g / (c * nbrs.len() as f64)
        })
        .collect();
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.0..3.0)))
            .collect()
    }

    #[test]
    fn trivial_values() {
        let reference = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(10.0, 0.0, 0.0)];
        let mut cache = NnCache::default();
        assert_eq!(nn_loss(&reference, &reference, &mut cache, 0).unwrap(), 0.0);
        let mut cache = NnCache::default();
        assert_eq!(nn_loss(&[Vector3::new(0.0, 4.0, 0.0)], &reference, &mut cache, 0).unwrap(), 2.0);
        assert!(matches!(nn_loss(&reference, &[], &mut cache, 0), Err(Error::EmptyReference)));
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reference = cloud(&mut rng, 10_000);
        let means = cloud(&mut rng, 1000);
        let brute: f64 = means
            .iter()
            .map(|m| reference.iter().map(|n| (m - n).norm()).fold(f64::INFINITY, f64::min).sqrt())
            .sum::<f64>()
            / means.len() as f64;
        let got = nn_loss(&means, &reference, &mut NnCache::default(), 0).unwrap();
        assert!((got - brute).abs() < 1e-9);
    }

    #[test]
    fn refresh_schedule() {
        let reference = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0)];
        let mut cache = NnCache::default();
        let near_first = [Vector3::new(0.1, 0.0, 0.0)];
        let near_second = [Vector3::new(0.9, 0.0, 0.0)];
        nn_loss(&near_first, &reference, &mut cache, 0).unwrap();
        // Same block: the stale assignment to point 0 is kept.
        let stale = nn_loss(&near_second, &reference, &mut cache, 999).unwrap();
        assert!((stale - 0.9f64.sqrt()).abs() < 1e-15);
        assert_eq!(cache.refreshes(), 1);
        let fresh = nn_loss(&near_second, &reference, &mut cache, 1000).unwrap();
        assert!((fresh - 0.1f64.sqrt()).abs() < 1e-15);
        assert_eq!(cache.refreshes(), 2);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reference = cloud(&mut rng, 300);
        let means = cloud(&mut rng, 40);
        let mut cache = NnCache::new(2).unwrap();
        let (_, grads) = nn_loss_grad(&means, &reference, &mut cache, 0).unwrap();
        let h = 1e-5;
        for l in 0..means.len() {
            for a in 0..3 {
                let mut p = means.clone();
                p[l][a] += h;
                let up = nn_loss(&p, &reference, &mut cache, 0).unwrap();
                p[l][a] -= 2.0 * h;
                let down = nn_loss(&p, &reference, &mut cache, 0).unwrap();
                let fd = (up - down) / (2.0 * h);
                let g = grads[l][a];
                assert!((fd - g).abs() <= 1e-4 * g.abs().max(1e-3), "{fd} vs {g}");
            }
        }
        let (_, zero) = nn_loss_grad(&reference[..3], &reference, &mut NnCache::default(), 0).unwrap();
        assert!(zero.iter().all(|g| *g == Vector3::zeros()));
    }
}
