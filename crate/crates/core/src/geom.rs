//! Small dense-vector helpers. Points are plain `&[f64]` slices of length `d`.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm2(a).sqrt()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `a + s * u`
pub fn axpy(a: &[f64], s: f64, u: &[f64]) -> Vec<f64> {
    a.iter().zip(u).map(|(x, v)| x + s * v).collect()
}

/// Writes `a + s * u` into `out` without allocating.
pub fn axpy_into(out: &mut [f64], a: &[f64], s: f64, u: &[f64]) {
    for ((o, x), v) in out.iter_mut().zip(a).zip(u) {
        *o = x + s * v;
    }
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    if n > 0.0 && n.is_finite() {
        Some(scale(a, 1.0 / n))
    } else {
        None
    }
}

/// Orthonormal basis whose first vector is `axis` (which must be a unit vector).
pub fn frame_from_axis(axis: &[f64]) -> Vec<Vec<f64>> {
    let d = axis.len();
    let mut basis: Vec<Vec<f64>> = vec![axis.to_vec()];
    for k in 0..d {
        if basis.len() == d {
            break;
        }
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        for b in &basis {
            let p = dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= p * bi;
            }
        }
        // second pass for numerical orthogonality
        for b in &basis {
            let p = dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= p * bi;
            }
        }
        let n = norm(&v);
        if n > 1e-6 {
            basis.push(scale(&v, 1.0 / n));
        }
    }
    basis
}

/// Sorted, disjoint parameter intervals along a ray.
pub type Segments = Vec<(f64, f64)>;

/// Merges overlapping intervals; drops empty ones.
pub fn merge_segments(mut segs: Segments) -> Segments {
    segs.retain(|(a, b)| b > a);
    segs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Segments = Vec::with_capacity(segs.len());
    for (a, b) in segs {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

pub fn intersect_segments(a: &[(f64, f64)], b: &[(f64, f64)]) -> Segments {
    let mut out = Vec::new();
    for &(a0, a1) in a {
        for &(b0, b1) in b {
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if hi > lo {
                out.push((lo, hi));
            }
        }
    }
    merge_segments(out)
}

pub fn clip_segments(segs: &[(f64, f64)], lo: f64, hi: f64) -> Segments {
    intersect_segments(segs, &[(lo, hi)])
}

/// Parameter interval where the ray `x + s u` (s ≥ 0, `u` unit) lies inside the
/// open ball `B(c, r)`.
pub fn ray_ball(x: &[f64], u: &[f64], c: &[f64], r: f64) -> Option<(f64, f64)> {
    let mut b = 0.0;
    let mut cc = -r * r;
    for ((xi, ui), ci) in x.iter().zip(u).zip(c) {
        let w = xi - ci;
        b += ui * w;
        cc += w * w;
    }
    let disc = b * b - cc;
    if disc <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let s1 = -b - sq;
    let s2 = -b + sq;
    if s2 <= 0.0 {
        return None;
    }
    Some((s1.max(0.0), s2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_is_orthonormal() {
        let axis = normalized(&[0.3, -0.4, 0.5, 0.1]).unwrap();
        let f = frame_from_axis(&axis);
        assert_eq!(f.len(), 4);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&f[i], &f[j]) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ray_through_ball_center() {
        let (a, b) = ray_ball(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 0.0], 2.0).unwrap();
        assert_eq!(a, 0.0);
        assert!((b - 2.0).abs() < 1e-15);
        assert!(ray_ball(&[3.0, 0.0], &[1.0, 0.0], &[0.0, 0.0], 2.0).is_none());
        let (a, b) = ray_ball(&[-3.0, 0.0], &[1.0, 0.0], &[0.0, 0.0], 2.0).unwrap();
        assert!((a - 1.0).abs() < 1e-15 && (b - 5.0).abs() < 1e-15);
    }

    #[test]
    fn segment_algebra() {
        let m = merge_segments(vec![(2.0, 3.0), (0.0, 1.0), (0.5, 2.5)]);
        assert_eq!(m, vec![(0.0, 3.0)]);
        let i = intersect_segments(&[(0.0, 1.0), (2.0, 4.0)], &[(0.5, 3.0)]);
        assert_eq!(i, vec![(0.5, 1.0), (2.0, 3.0)]);
    }
}
