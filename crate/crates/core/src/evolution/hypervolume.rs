//! Exact hypervolume of a point set (minimization) against a reference point,
//! by exclusive-contribution recursion over limit sets.

use super::pareto::weakly_dominates;

fn inclusive(p: &[f64], reference: &[f64]) -> f64 {
    p.iter().zip(reference).map(|(x, r)| r - x).product()
}

/// Removes points weakly dominated by another (keeping one copy of duplicates).
fn nondominated(mut pts: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    pts.dedup();
    let mut keep: Vec<Vec<f64>> = Vec::with_capacity(pts.len());
    for p in pts {
        // lexicographic order: nothing later can weakly dominate an earlier point
        if !keep.iter().any(|q| weakly_dominates(q, &p)) {
            keep.push(p);
        }
    }
    keep
}

fn hv2d(pts: &mut [Vec<f64>], reference: &[f64]) -> f64 {
    pts.sort_by(|a, b| a[0].partial_cmp(&b[0]).expect("finite").then(a[1].partial_cmp(&b[1]).expect("finite")));
    let mut area = 0.0;
    let mut best_y = reference[1];
    for p in pts.iter() {
        if p[1] < best_y {
            area += (reference[0] - p[0]) * (best_y - p[1]);
            best_y = p[1];
        }
    }
    area
}

fn wfg(pts: Vec<Vec<f64>>, reference: &[f64]) -> f64 {
    match pts.len() {
        0 => return 0.0,
        1 => return inclusive(&pts[0], reference),
        _ => {}
    }
    if reference.len() == 1 {
        return pts.iter().map(|p| reference[0] - p[0]).fold(0.0, f64::max);
    }
    let mut pts = pts;
    if reference.len() == 2 {
        return hv2d(&mut pts, reference);
    }
    // descending in the last objective keeps limit sets small
    let last = reference.len() - 1;
    pts.sort_by(|a, b| b[last].partial_cmp(&a[last]).expect("finite"));
    let mut total = 0.0;
    for k in 0..pts.len() {
        let limited: Vec<Vec<f64>> = pts[k + 1..]
            .iter()
            .map(|q| q.iter().zip(&pts[k]).map(|(a, b)| a.max(*b)).collect())
            .collect();
        total += inclusive(&pts[k], reference) - wfg(nondominated(limited), reference);
    }
    total
}

/// Volume dominated by `points` and bounded by `reference`. Points not
/// strictly better than the reference in every coordinate contribute nothing.
pub fn hypervolume<V: AsRef<[f64]>>(points: &[V], reference: &[f64]) -> f64 {
    let pts: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.as_ref().to_vec())
        .filter(|p| p.len() == reference.len() && p.iter().zip(reference).all(|(x, r)| x < r))
        .collect();
    wfg(nondominated(pts), reference)
}
