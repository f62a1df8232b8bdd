use nalgebra::Vector3;

/// Static 3-d tree over a point set. Queries return point indices; equal
/// distances resolve to the lower index, so results match a linear scan.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    /// Point indices arranged so every subtree is a contiguous range whose
    /// median element is the splitting node.
    order: Vec<usize>,
    axes: Vec<u8>,
}

impl KdTree {
    pub fn new(points: &[Vector3<f64>]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            axes: vec![0; points.len()],
        };
        tree.build(0, points.len());
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if hi - lo <= 1 {
            return;
        }
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[lo..hi] {
            min = min.inf(&self.points[i]);
            max = max.sup(&self.points[i]);
        }
        let axis = (max - min).imax();
        let mid = (lo + hi) / 2;
        let pts = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b))
        });
        self.axes[mid] = axis as u8;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, q: &Vector3<f64>) -> Option<(usize, f64)> {
        self.k_nearest(q, 1).into_iter().next()
    }

    /// Up to `k` nearest points as (index, squared distance), nearest first.
    pub fn k_nearest(&self, q: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if k > 0 && !self.points.is_empty() {
            self.search(q, k, 0, self.points.len(), &mut best);
        }
        best
    }

    fn worse(a: (usize, f64), b: (usize, f64)) -> bool {
        a.1 > b.1 || (a.1 == b.1 && a.0 > b.0)
    }

    fn offer(&self, best: &mut Vec<(usize, f64)>, k: usize, cand: (usize, f64)) {
        if best.len() == k && !Self::worse(best[k - 1], cand) {
            return;
        }
        let pos = best.partition_point(|&b| !Self::worse(b, cand));
        best.insert(pos, cand);
        best.truncate(k);
    }

    fn search(&self, q: &Vector3<f64>, k: usize, lo: usize, hi: usize, best: &mut Vec<(usize, f64)>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.order[mid];
        let p = &self.points[i];
        self.offer(best, k, (i, (p - q).norm_squared()));
        if hi - lo == 1 {
            return;
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(q, k, near.0, near.1, best);
        // `<=` keeps equal-distance points on the far side reachable for the
        // lower-index tie-break.
        if best.len() < k || diff * diff <= best[best.len() - 1].1 {
            self.search(q, k, far.0, far.1, best);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vector3<f64>> = (0..500)
            .map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..200 {
            let q = Vector3::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            let mut all: Vec<(usize, f64)> = pts.iter().enumerate().map(|(i, p)| (i, (p - q).norm_squared())).collect();
            all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            assert_eq!(tree.k_nearest(&q, 5), all[..5].to_vec());
        }
    }

    #[test]
    fn duplicates_and_ties() {
        // Many points sharing coordinates on every axis.
        let pts: Vec<Vector3<f64>> = (0..100).map(|i| Vector3::new((i % 2) as f64, 0.0, 0.0)).collect();
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&Vector3::new(0.1, 0.0, 0.0)), Some((0, 0.1f64 * 0.1)));
        assert_eq!(tree.nearest(&Vector3::new(0.5, 0.0, 0.0)).unwrap().0, 0);
        assert!(KdTree::new(&[]).nearest(&Vector3::zeros()).is_none());
    }
}
