//! Keyframe interpolation: centripetal Catmull-Rom positions, slerped
//! rotations, frames spread by arc length.

use nalgebra::{UnitQuaternion, Vector3};

use super::camera::CameraPose;
use crate::error::{Error, Result};

/// Samples per segment for arc-length tables.
const ARC_SAMPLES: usize = 256;

/// One Catmull-Rom segment between `p1` and `p2` in Barry-Goldman form with
/// centripetal (alpha = 0.5) knot spacing.
struct Segment {
    p: [Vector3<f64>; 4],
    t: [f64; 4],
    /// Cumulative chord length at uniform parameter samples.
    arc: Vec<f64>,
}

impl Segment {
    fn new(p: [Vector3<f64>; 4]) -> Self {
        let mut t = [0.0; 4];
        for i in 1..4 {
            // Coincident control points would give zero knot spacing.
            let d = (p[i] - p[i - 1]).norm().sqrt().max(1e-9);
            t[i] = t[i - 1] + d;
        }
        let mut seg = Segment { p, t, arc: Vec::new() };
        let mut arc = Vec::with_capacity(ARC_SAMPLES + 1);
        let mut prev = seg.eval(0.0);
        let mut acc = 0.0;
        arc.push(0.0);
        for k in 1..=ARC_SAMPLES {
            let q = seg.eval(k as f64 / ARC_SAMPLES as f64);
            acc += (q - prev).norm();
            arc.push(acc);
            prev = q;
        }
        seg.arc = arc;
        seg
    }

    /// Position at normalized parameter `s` in [0, 1] (p1 at 0, p2 at 1).
    fn eval(&self, s: f64) -> Vector3<f64> {
        let [p0, p1, p2, p3] = self.p;
        let [t0, t1, t2, t3] = self.t;
        let t = t1 + s * (t2 - t1);
        let a1 = p0 * ((t1 - t) / (t1 - t0)) + p1 * ((t - t0) / (t1 - t0));
        let a2 = p1 * ((t2 - t) / (t2 - t1)) + p2 * ((t - t1) / (t2 - t1));
        let a3 = p2 * ((t3 - t) / (t3 - t2)) + p3 * ((t - t2) / (t3 - t2));
        let b1 = a1 * ((t2 - t) / (t2 - t0)) + a2 * ((t - t0) / (t2 - t0));
        let b2 = a2 * ((t3 - t) / (t3 - t1)) + a3 * ((t - t1) / (t3 - t1));
        b1 * ((t2 - t) / (t2 - t1)) + b2 * ((t - t1) / (t2 - t1))
    }

    fn length(&self) -> f64 {
        *self.arc.last().expect("non-empty table")
    }

    /// Parameter at which the arc length reaches `fraction` of the total.
    fn param_at_fraction(&self, fraction: f64) -> f64 {
        let target = fraction * self.length();
        let k = self.arc.partition_point(|&a| a < target).clamp(1, ARC_SAMPLES);
        let (a0, a1) = (self.arc[k - 1], self.arc[k]);
        let local = if a1 > a0 { (target - a0) / (a1 - a0) } else { 0.0 };
        ((k - 1) as f64 + local) / ARC_SAMPLES as f64
    }
}

/// Phantom control point before `a` given the next two points. Quadratic
/// extrapolation keeps curved paths curved at the ends; with only two keys
/// it falls back to reflection, which gives a straight segment.
fn phantom(a: Vector3<f64>, b: Vector3<f64>, c: Option<Vector3<f64>>) -> Vector3<f64> {
    match c {
        Some(c) => a * 3.0 - b * 3.0 + c,
        None => a * 2.0 - b,
    }
}

/// Interpolate `n_out` poses through `keys`, in order.
///
/// Every key appears in the output. The `n_out - keys.len()` in-between
/// frames are shared among segments in proportion to their arc length
/// (largest remainder), and within a segment they are evenly spaced in arc
/// length; the rotation is slerped at the same fraction along the shortest
/// arc.
pub fn interpolate_poses(keys: &[CameraPose], n_out: usize) -> Result<Vec<CameraPose>> {
    let k = keys.len();
    if k < 2 {
        return Err(Error::DegenerateInput(format!("need at least 2 keyframes, got {k}")));
    }
    if n_out < k {
        return Err(Error::DegenerateInput(format!(
            "{n_out} output frames cannot hold {k} keyframes"
        )));
    }
    for (i, w) in keys.windows(2).enumerate() {
        if (w[1].position - w[0].position).norm() < 1e-12 && w[0].angle_to(&w[1]) < 1e-12 {
            return Err(Error::DegenerateInput(format!("keyframes {i} and {} coincide", i + 1)));
        }
    }

    let pos: Vec<Vector3<f64>> = keys.iter().map(|p| p.position).collect();
    let segments: Vec<Segment> = (0..k - 1)
        .map(|i| {
            let p0 = if i == 0 {
                phantom(pos[0], pos[1], pos.get(2).copied())
            } else {
                pos[i - 1]
            };
            let p3 = if i + 2 < k {
                pos[i + 2]
            } else {
                phantom(pos[k - 1], pos[k - 2], (k >= 3).then(|| pos[k - 3]))
            };
            Segment::new([p0, pos[i], pos[i + 1], p3])
        })
        .collect();

    // Pure rotations have no length; weigh them by angle so they still get frames.
    let weights: Vec<f64> = segments
        .iter()
        .zip(keys.windows(2))
        .map(|(s, w)| {
            let len = s.length();
            if len > 1e-9 { len } else { w[0].angle_to(&w[1]) * 1e-3 }
        })
        .collect();
    let counts = apportion(n_out - k, &weights);

    let mut out = Vec::with_capacity(n_out);
    for (i, seg) in segments.iter().enumerate() {
        let (a, b) = (&keys[i], &keys[i + 1]);
        let mut qb = b.rotation;
        if a.rotation.coords.dot(&qb.coords) < 0.0 {
            qb = UnitQuaternion::new_unchecked(-qb.into_inner());
        }
        out.push(*a);
        let m = counts[i];
        for j in 1..=m {
            let frac = j as f64 / (m + 1) as f64;
            let s = seg.param_at_fraction(frac);
            let rotation = a.rotation.slerp(&qb, frac);
            out.push(CameraPose::new(rotation, seg.eval(s)));
        }
    }
    out.push(keys[k - 1]);
    Ok(out)
}

/// Split `total` items across bins proportionally to `weights` using the
/// largest-remainder method; ties go to the earlier bin.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if total == 0 || !(sum > 0.0) {
        let mut counts = vec![0; weights.len()];
        for i in 0..total {
            counts[i % weights.len()] += 1;
        }
        return counts;
    }
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&x, &y| {
        let rx = exact[x] - exact[x].floor();
        let ry = exact[y] - exact[y].floor();
        ry.total_cmp(&rx).then(x.cmp(&y))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::look_at;
    use approx::assert_relative_eq;

    #[test]
    fn two_keys_midpoint() {
        let a = CameraPose::from_yaw_pitch(Vector3::new(0.0, 0.0, 1.0), 0.0, 0.0);
        let b = CameraPose::from_yaw_pitch(Vector3::new(2.0, 4.0, 1.0), 1.0, 0.0);
        let out = interpolate_poses(&[a, b], 3).unwrap();
        assert_eq!(out.len(), 3);
        assert_relative_eq!(out[1].position, Vector3::new(1.0, 2.0, 1.0), epsilon = 1e-9);
        assert!((out[1].angle_to(&a) - 0.5).abs() < 1e-12);
        assert_eq!(out[0], a);
        assert_eq!(out[2], b);
    }

    #[test]
    fn identity_when_no_extra_frames() {
        let keys: Vec<CameraPose> = (0..5)
            .map(|i| CameraPose::from_yaw_pitch(Vector3::new(i as f64, 0.0, 0.0), 0.1 * i as f64, 0.0))
            .collect();
        assert_eq!(interpolate_poses(&keys, 5).unwrap(), keys);
    }

    #[test]
    fn coincident_keys_rejected() {
        let a = CameraPose::identity();
        assert!(matches!(interpolate_poses(&[a, a], 4), Err(Error::DegenerateInput(_))));
        assert!(interpolate_poses(&[a], 4).is_err());
    }

    #[test]
    fn circle_stays_round() {
        let r = 1.7;
        let keys: Vec<CameraPose> = (0..8)
            .map(|i| {
                let a = (i as f64 * 45.0).to_radians();
                let p = Vector3::new(r * a.cos(), r * a.sin(), 1.5);
                look_at(p, Vector3::new(0.0, 0.0, 1.5), Vector3::z()).unwrap()
            })
            .collect();
        let out = interpolate_poses(&keys, 42).unwrap();
        assert_eq!(out.len(), 42);
        for p in &out {
            let radial = p.position.xy().norm();
            assert!((radial - r).abs() / r < 0.02, "radial {radial}");
        }
    }

    #[test]
    fn apportion_is_exact() {
        assert_eq!(apportion(10, &[1.0, 1.0, 2.0]), vec![3, 2, 5]);
        assert_eq!(apportion(0, &[1.0]), vec![0]);
        assert_eq!(apportion(3, &[0.0, 0.0]), vec![2, 1]);
    }
}
