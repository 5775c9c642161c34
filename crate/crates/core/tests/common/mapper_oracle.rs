//! Brute-force Mapper reference: enumerate every cover cell, cluster by
//! connected components of the ε-graph, intersect every node pair.

use ndarray::Array2;

pub type Canonical = (Vec<Vec<usize>>, Vec<(Vec<usize>, Vec<usize>)>);

fn normalized(points: &Array2<f64>) -> Array2<f64> {
    let mut out = points.clone();
    for j in 0..points.ncols() {
        let col = points.column(j);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for i in 0..points.nrows() {
            out[[i, j]] = if hi > lo {
                (points[[i, j]] - lo) / (hi - lo)
            } else {
                0.0
            };
        }
    }
    out
}

fn axis_intervals(values: &[f64], r: usize, overlap: f64) -> Vec<(f64, f64)> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return vec![(lo, hi)];
    }
    let len = (hi - lo) / (r as f64 - (r as f64 - 1.0) * overlap);
    (0..r)
        .map(|i| {
            let a = lo + i as f64 * len * (1.0 - overlap);
            (a, a + len)
        })
        .collect()
}

fn components(members: &[usize], coords: &Array2<f64>, eps: f64) -> Vec<Vec<usize>> {
    let m = members.len();
    let close = |a: usize, b: usize| {
        let d: f64 = (0..coords.ncols())
            .map(|j| (coords[[members[a], j]] - coords[[members[b], j]]).powi(2))
            .sum::<f64>()
            .sqrt();
        d <= eps
    };
    let mut seen = vec![false; m];
    let mut out = Vec::new();
    for start in 0..m {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let mut comp = Vec::new();
        while let Some(a) = stack.pop() {
            comp.push(members[a]);
            for b in 0..m {
                if !seen[b] && close(a, b) {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

pub fn brute_force(points: &Array2<f64>, lens: &Array2<f64>, r: usize, overlap: f64, eps: f64) -> Canonical {
    let n = points.nrows();
    let coords = normalized(points);
    let per_axis: Vec<Vec<(f64, f64)>> = (0..lens.ncols())
        .map(|j| axis_intervals(&lens.column(j).to_vec(), r, overlap))
        .collect();
    let mut cells: Vec<Vec<usize>> = vec![vec![]];
    for ivs in &per_axis {
        cells = cells
            .into_iter()
            .flat_map(|c| {
                (0..ivs.len()).map(move |i| {
                    let mut c = c.clone();
                    c.push(i);
                    c
                })
            })
            .collect();
    }
    let mut nodes = Vec::new();
    for cell in cells {
        let members: Vec<usize> = (0..n)
            .filter(|&p| {
                cell.iter().enumerate().all(|(axis, &i)| {
                    let (a, b) = per_axis[axis][i];
                    let v = lens[[p, axis]];
                    let tol = 1e-9 * (1.0 + a.abs().max(b.abs()));
                    v >= a - tol && v <= b + tol
                })
            })
            .collect();
        if !members.is_empty() {
            nodes.extend(components(&members, &coords, eps));
        }
    }
    let mut edges = Vec::new();
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            if nodes[i].iter().any(|m| nodes[j].contains(m)) {
                let (x, y) = (nodes[i].clone(), nodes[j].clone());
                edges.push(if x <= y { (x, y) } else { (y, x) });
            }
        }
    }
    nodes.sort();
    edges.sort();
    (nodes, edges)
}

/// Gaussian product-kernel density with per-axis Scott bandwidth, summed directly.
pub fn kde(points: &Array2<f64>, q: &[f64]) -> f64 {
    let (n, d) = points.dim();
    let factor = (n as f64).powf(-1.0 / (d as f64 + 4.0));
    let h: Vec<f64> = (0..d)
        .map(|j| {
            let col = points.column(j);
            let mean = col.sum() / n as f64;
            (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt() * factor
        })
        .collect();
    let mut total = 0.0;
    for i in 0..n {
        let mut k = 1.0;
        for j in 0..d {
            let z = (q[j] - points[[i, j]]) / h[j];
            k *= (-0.5 * z * z).exp() / (h[j] * (2.0 * std::f64::consts::PI).sqrt());
        }
        total += k;
    }
    total / n as f64
}
