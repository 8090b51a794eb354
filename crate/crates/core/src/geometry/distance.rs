//! Nearest-point searches against planar boundary pieces.

/// Squared distance from `p` to the segment `[a, b]`.
pub fn segment_dist2(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    };
    let q = [a[0] + t * d[0] - p[0], a[1] + t * d[1] - p[1]];
    q[0] * q[0] + q[1] * q[1]
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Squared distance from `p` to the parametric curve `c(t)`, `t in [t0, t1]`.
///
/// The curve is sampled at `samples + 1` points, then the `refine` best local
/// minima are polished by golden-section search inside their brackets.
pub fn curve_dist2<F>(p: [f64; 2], c: F, t0: f64, t1: f64, samples: usize, refine: usize) -> f64
where
    F: Fn(f64) -> [f64; 2],
{
    let f = |t: f64| {
        let q = c(t);
        (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)
    };
    let n = samples.max(2);
    let dt = (t1 - t0) / n as f64;
    let vals: Vec<f64> = (0..=n).map(|i| f(t0 + dt * i as f64)).collect();
    let mut best = vals.iter().copied().fold(f64::INFINITY, f64::min);

    let mut minima: Vec<(f64, usize)> = (0..=n)
        .filter(|&i| {
            let l = if i == 0 { f64::INFINITY } else { vals[i - 1] };
            let r = if i == n { f64::INFINITY } else { vals[i + 1] };
            vals[i] <= l && vals[i] <= r
        })
        .map(|i| (vals[i], i))
        .collect();
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));

    for &(_, i) in minima.iter().take(refine.max(1)) {
        let mut a = t0 + dt * (i.saturating_sub(1)) as f64;
        let mut b = t0 + dt * ((i + 1).min(n)) as f64;
        let mut x1 = b - INV_PHI * (b - a);
        let mut x2 = a + INV_PHI * (b - a);
        let mut f1 = f(x1);
        let mut f2 = f(x2);
        for _ in 0..80 {
            if b - a <= 1e-14 * (1.0 + t1.abs().max(t0.abs())) {
                break;
            }
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - INV_PHI * (b - a);
                f1 = f(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + INV_PHI * (b - a);
                f2 = f(x2);
            }
        }
        best = best.min(f1).min(f2).min(f(0.5 * (a + b)));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_distance_cases() {
        assert_eq!(segment_dist2([0.5, 1.0], [0.0, 0.0], [1.0, 0.0]), 1.0);
        assert_eq!(segment_dist2([2.0, 0.0], [0.0, 0.0], [1.0, 0.0]), 1.0);
        assert_eq!(segment_dist2([3.0, 4.0], [0.0, 0.0], [0.0, 0.0]), 25.0);
    }

    #[test]
    fn circle_distance_matches_closed_form() {
        let c = |t: f64| [t.cos(), t.sin()];
        for &(x, y) in &[(0.3, 0.1), (0.0, 0.0001), (-0.7, 0.2), (2.0, -1.0)] {
            let d = curve_dist2([x, y], c, 0.0, std::f64::consts::TAU, 64, 3).sqrt();
            let exact = ((x * x + y * y) as f64).sqrt() - 1.0;
            assert!((d - exact.abs()).abs() < 1e-9, "{d} vs {exact}");
        }
    }
}
