//! Brute-force reference fits for verifying the semantic classifiers.
//!
//! Each function minimizes the same objective as its closed-form counterpart
//! in [`crate::evaluation`], but by exhaustive grid search with iterative
//! refinement instead of linear algebra. They exist so verification suites
//! can cross-check the classifiers against an independent computation path.

/// Least-squares line direction through the centroid by scanning angles and
/// refining. Returns (direction angle, max point distance to the line).
pub fn line_fit_by_search(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let (mut mx, mut my) = (0.0, 0.0);
    for p in points {
        mx += p.0;
        my += p.1;
    }
    mx /= n;
    my /= n;
    let sq_residual = |theta: f64| -> f64 {
        let (s, c) = theta.sin_cos();
        points
            .iter()
            .map(|p| {
                let d = -s * (p.0 - mx) + c * (p.1 - my);
                d * d
            })
            .sum()
    };
    // coarse scan over half a turn, then ternary refinement
    let mut best_theta = 0.0;
    let mut best = f64::INFINITY;
    let coarse = 720;
    for i in 0..coarse {
        let theta = std::f64::consts::PI * i as f64 / coarse as f64;
        let v = sq_residual(theta);
        if v < best {
            best = v;
            best_theta = theta;
        }
    }
    let mut lo = best_theta - std::f64::consts::PI / coarse as f64;
    let mut hi = best_theta + std::f64::consts::PI / coarse as f64;
    for _ in 0..80 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if sq_residual(m1) < sq_residual(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let theta = 0.5 * (lo + hi);
    let (s, c) = theta.sin_cos();
    let max_d = points
        .iter()
        .map(|p| (-s * (p.0 - mx) + c * (p.1 - my)).abs())
        .fold(0.0f64, f64::max);
    (theta, max_d)
}

/// Minimizes the Kasa circle objective (variance of squared distances to the
/// center) over a refined center grid. Returns (center, radius).
pub fn circle_fit_by_search(points: &[(f64, f64)]) -> ((f64, f64), f64) {
    let n = points.len() as f64;
    let (mut mx, mut my) = (0.0, 0.0);
    for p in points {
        mx += p.0;
        my += p.1;
    }
    mx /= n;
    my /= n;
    // for a fixed center the optimal squared radius is the mean squared
    // distance, so the objective is the variance of squared distances
    let objective = |cx: f64, cy: f64| -> f64 {
        let ds: Vec<f64> = points
            .iter()
            .map(|p| (p.0 - cx).powi(2) + (p.1 - cy).powi(2))
            .collect();
        let mean = ds.iter().sum::<f64>() / n;
        ds.iter().map(|d| (d - mean) * (d - mean)).sum()
    };
    let spread = points
        .iter()
        .map(|p| ((p.0 - mx).powi(2) + (p.1 - my).powi(2)).sqrt())
        .fold(0.0f64, f64::max)
        .max(0.05);
    let mut center = (mx, my);
    let mut half = spread * 4.0;
    for _ in 0..60 {
        let mut best = objective(center.0, center.1);
        let mut best_c = center;
        let steps = 10;
        for i in 0..=steps {
            for j in 0..=steps {
                let cx = center.0 - half + 2.0 * half * i as f64 / steps as f64;
                let cy = center.1 - half + 2.0 * half * j as f64 / steps as f64;
                let v = objective(cx, cy);
                if v < best {
                    best = v;
                    best_c = (cx, cy);
                }
            }
        }
        center = best_c;
        half *= 0.5;
        if half < 1e-10 {
            break;
        }
    }
    let radius = (points
        .iter()
        .map(|p| (p.0 - center.0).powi(2) + (p.1 - center.1).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (center, radius)
}

/// Least-squares rigid 2D alignment found by scanning the rotation angle
/// (translation is closed-form per angle, which is plain centroid algebra,
/// not the quantity under test). Returns (theta, tx, ty).
pub fn rigid_fit_by_search(source: &[(f64, f64)], target: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = source.len() as f64;
    let (mut smx, mut smy, mut tmx, mut tmy) = (0.0, 0.0, 0.0, 0.0);
    for (s, t) in source.iter().zip(target) {
        smx += s.0;
        smy += s.1;
        tmx += t.0;
        tmy += t.1;
    }
    smx /= n;
    smy /= n;
    tmx /= n;
    tmy /= n;
    let cost = |theta: f64| -> f64 {
        let (sn, cs) = theta.sin_cos();
        source
            .iter()
            .zip(target)
            .map(|(s, t)| {
                let rx = cs * (s.0 - smx) - sn * (s.1 - smy);
                let ry = sn * (s.0 - smx) + cs * (s.1 - smy);
                (t.0 - tmx - rx).powi(2) + (t.1 - tmy - ry).powi(2)
            })
            .sum()
    };
    let coarse = 1440;
    let mut best_theta = 0.0;
    let mut best = f64::INFINITY;
    for i in 0..coarse {
        let theta = std::f64::consts::TAU * i as f64 / coarse as f64 - std::f64::consts::PI;
        let v = cost(theta);
        if v < best {
            best = v;
            best_theta = theta;
        }
    }
    let mut lo = best_theta - std::f64::consts::TAU / coarse as f64;
    let mut hi = best_theta + std::f64::consts::TAU / coarse as f64;
    for _ in 0..80 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if cost(m1) < cost(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let theta = 0.5 * (lo + hi);
    let (sn, cs) = theta.sin_cos();
    let tx = tmx - (cs * smx - sn * smy);
    let ty = tmy - (sn * smx + cs * smy);
    (theta, tx, ty)
}
