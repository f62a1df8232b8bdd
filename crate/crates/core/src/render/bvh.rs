use nalgebra::Vector3;

/// Flat bounding-volume hierarchy over primitive AABBs. Nodes are stored in
/// depth-first order; a leaf covers `items[start..start + count]`.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    items: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    /// Leaf: first item. Inner: index of the right child (left is next).
    start: usize,
    /// Zero for inner nodes.
    count: usize,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(boxes: &[(Vector3<f64>, Vector3<f64>)]) -> Bvh {
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * boxes.len()),
            items: (0..boxes.len()).collect(),
        };
        if !boxes.is_empty() {
            bvh.split(boxes, 0, boxes.len());
        }
        bvh
    }

    fn split(&mut self, boxes: &[(Vector3<f64>, Vector3<f64>)], start: usize, end: usize) -> usize {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        let mut clo = lo;
        let mut chi = hi;
        for &i in &self.items[start..end] {
            lo = lo.inf(&boxes[i].0);
            hi = hi.sup(&boxes[i].1);
            let c = (boxes[i].0 + boxes[i].1) * 0.5;
            clo = clo.inf(&c);
            chi = chi.sup(&c);
        }
        let index = self.nodes.len();
        self.nodes.push(Node { lo, hi, start, count: end - start });
        if end - start <= LEAF_SIZE {
            return index;
        }
        let axis = (chi - clo).imax();
        let mid = (start + end) / 2;
        let key = |i: usize| boxes[i].0[axis] + boxes[i].1[axis];
        // Ties broken by index keep the build deterministic.
        self.items[start..end].sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
        self.split(boxes, start, mid);
        let right = self.split(boxes, mid, end);
        self.nodes[index].start = right;
        self.nodes[index].count = 0;
        index
    }

    /// Visit primitives whose box the ray enters before `t_max()`. The
    /// visitor returns the new upper bound on hit distance.
    pub fn traverse(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, mut t_max: f64, mut visit: impl FnMut(usize) -> f64) {
        if self.nodes.is_empty() {
            return;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut stack = [0usize; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = self.nodes[stack[sp]];
            let index = stack[sp];
            if !slab_hit(&node.lo, &node.hi, origin, &inv, t_max) {
                continue;
            }
            if node.count > 0 {
                for &item in &self.items[node.start..node.start + node.count] {
                    t_max = t_max.min(visit(item));
                }
            } else {
                stack[sp] = node.start;
                stack[sp + 1] = index + 1;
                sp += 2;
            }
        }
    }

    /// Primitives whose box intersects the axis-aligned query box.
    pub fn query_box(&self, lo: &Vector3<f64>, hi: &Vector3<f64>) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let mut stack = vec![0usize];
        while let Some(index) = stack.pop() {
            let node = self.nodes[index];
            if (0..3).any(|k| node.lo[k] > hi[k] || node.hi[k] < lo[k]) {
                continue;
            }
            if node.count > 0 {
                out.extend_from_slice(&self.items[node.start..node.start + node.count]);
            } else {
                stack.push(node.start);
                stack.push(index + 1);
            }
        }
        out.sort_unstable();
        out
    }
}

fn slab_hit(lo: &Vector3<f64>, hi: &Vector3<f64>, o: &Vector3<f64>, inv: &Vector3<f64>, t_max: f64) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = t_max;
    for k in 0..3 {
        let a = (lo[k] - o[k]) * inv[k];
        let b = (hi[k] - o[k]) * inv[k];
        // NaN (origin on the slab plane with a parallel ray) keeps the interval.
        let (near, far) = if a <= b { (a, b) } else { (b, a) };
        if near > t0 {
            t0 = near;
        }
        if far < t1 {
            t1 = far;
        }
        if t0 > t1 {
            return false;
        }
    }
    true
}
