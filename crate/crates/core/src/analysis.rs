//! Diagnostics over optimization runs: classical multidimensional scaling
//! of temperature-field trajectories and convergence-curve extraction.

use crate::error::{Error, Result};
use crate::optimizer::TraceRecord;

/// Flattened temperature fields recorded along a run, with their energies.
#[derive(Debug, Clone)]
pub struct FieldSnapshotSet {
    pub snapshots: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
}

impl FieldSnapshotSet {
    pub fn new(snapshots: Vec<Vec<f64>>, energies: Vec<f64>) -> Result<Self> {
        if snapshots.len() != energies.len() {
            return Err(Error::Shape(format!(
                "{} snapshots but {} energies",
                snapshots.len(),
                energies.len()
            )));
        }
        if let Some(first) = snapshots.first() {
            if snapshots.iter().any(|s| s.len() != first.len()) {
                return Err(Error::Shape("snapshots differ in length".into()));
            }
        }
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::Domain("snapshot energies must be finite".into()));
        }
        Ok(FieldSnapshotSet {
            snapshots,
            energies,
        })
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

/// Eigenvalues below this (relative to the spectral scale) count as zero.
const EIGEN_EPSILON: f64 = 1e-12;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalues, eigenvectors as columns), unsorted.
#[allow(clippy::needless_range_loop)]
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let frobenius: f64 = a
        .iter()
        .flat_map(|r| r.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    let tol = 1e-14 * frobenius.max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[p][q].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() <= tol {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let eigenvalues = (0..n).map(|i| a[i][i]).collect();
    (eigenvalues, v)
}

/// Classical (Torgerson) MDS embedding with its two retained eigenvalues.
#[derive(Debug, Clone)]
pub struct MdsEmbedding {
    pub points: Vec<[f64; 2]>,
    /// The two largest eigenvalues of the double-centered matrix.
    pub eigenvalues: [f64; 2],
}

/// Classical MDS of the snapshot set into 2D: pairwise Euclidean distance
/// matrix, double-centering B = -1/2 J D^2 J, top-2 eigenpairs, coordinates
/// scaled by the square roots of the eigenvalues. Eigenvalues at or below
/// the zero threshold (or negative) contribute a zero coordinate.
pub fn classical_mds(set: &FieldSnapshotSet) -> Result<Vec<[f64; 2]>> {
    Ok(mds_embedding(set)?.points)
}

#[allow(clippy::needless_range_loop)]
pub fn mds_embedding(set: &FieldSnapshotSet) -> Result<MdsEmbedding> {
    let n = set.len();
    if n < 3 {
        return Err(Error::Config(format!(
            "classical MDS needs at least 3 snapshots, got {n}"
        )));
    }
    // Squared distance matrix.
    let mut d2 = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dist2: f64 = set.snapshots[i]
                .iter()
                .zip(set.snapshots[j].iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2[i][j] = dist2;
            d2[j][i] = dist2;
        }
    }
    // Double centering.
    let row_mean: Vec<f64> = d2
        .iter()
        .map(|r| r.iter().sum::<f64>() / n as f64)
        .collect();
    let grand_mean: f64 = row_mean.iter().sum::<f64>() / n as f64;
    let mut b = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            b[i][j] = -0.5 * (d2[i][j] - row_mean[i] - row_mean[j] + grand_mean);
        }
    }

    let (eigenvalues, vectors) = jacobi_eigen(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eigenvalues[j].partial_cmp(&eigenvalues[i]).unwrap());
    let top = [order[0], order[1]];
    let scale = eigenvalues
        .iter()
        .fold(0.0f64, |m, &e| m.max(e.abs()))
        .max(1.0);

    let mut points = vec![[0.0f64; 2]; n];
    for (axis, &col) in top.iter().enumerate() {
        let lambda = eigenvalues[col];
        if lambda <= EIGEN_EPSILON * scale {
            continue;
        }
        // Deterministic sign: largest-magnitude component positive.
        let mut flip = 1.0;
        let mut best = 0.0f64;
        for row in vectors.iter() {
            if row[col].abs() > best {
                best = row[col].abs();
                flip = row[col].signum();
            }
        }
        let factor = lambda.sqrt() * flip;
        for (i, row) in vectors.iter().enumerate() {
            points[i][axis] = factor * row[col];
        }
    }
    Ok(MdsEmbedding {
        points,
        eigenvalues: [eigenvalues[top[0]], eigenvalues[top[1]]],
    })
}

/// One row of the exported convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePlotRow {
    pub iteration: usize,
    pub total: f64,
    pub e_am: f64,
    pub e_sm: f64,
    pub clusters: usize,
    pub exposure: f64,
    pub density_factor: f64,
}

/// MDS scatter point with a radius proportional to the energy.
#[derive(Debug, Clone, PartialEq)]
pub struct MdsPoint {
    pub x: f64,
    pub y: f64,
    pub energy: f64,
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct MdsSidecar {
    pub points: Vec<MdsPoint>,
    /// radius = radius_per_energy * energy, stated alongside the data.
    pub radius_per_energy: f64,
}

/// Convergence series for plotting: one row per trace record.
pub fn export_trace_plot_data(trace: &[TraceRecord]) -> Result<Vec<TracePlotRow>> {
    if trace.is_empty() {
        return Err(Error::Config("trace is empty".into()));
    }
    Ok(trace
        .iter()
        .map(|r| TracePlotRow {
            iteration: r.iteration,
            total: r.total,
            e_am: r.e_am,
            e_sm: r.e_sm,
            clusters: r.clusters,
            exposure: r.exposure,
            density_factor: r.density_factor,
        })
        .collect())
}

/// Attach energy-proportional radii to embedded points: the largest radius
/// is 5% of the embedding extent.
pub fn mds_sidecar(points: &[[f64; 2]], energies: &[f64]) -> Result<MdsSidecar> {
    if points.len() != energies.len() {
        return Err(Error::Shape(format!(
            "{} points but {} energies",
            points.len(),
            energies.len()
        )));
    }
    let mut extent = 0.0f64;
    for p in points.iter() {
        for q in points.iter() {
            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            extent = extent.max(d);
        }
    }
    let max_energy = energies.iter().fold(0.0f64, |m, &e| m.max(e));
    let radius_per_energy = if max_energy > 0.0 && extent > 0.0 {
        0.05 * extent / max_energy
    } else {
        0.0
    };
    Ok(MdsSidecar {
        points: points
            .iter()
            .zip(energies.iter())
            .map(|(p, &e)| MdsPoint {
                x: p[0],
                y: p[1],
                energy: e,
                radius: radius_per_energy * e,
            })
            .collect(),
        radius_per_energy,
    })
}

/// CSV text of the convergence series.
pub fn trace_plot_csv(rows: &[TracePlotRow]) -> String {
    let mut out = String::from("iteration,total,e_am,e_sm,clusters,exposure,density_factor\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.iteration, r.total, r.e_am, r.e_sm, r.clusters, r.exposure, r.density_factor
        ));
    }
    out
}

/// CSV text of the MDS sidecar; the radius constant is recorded in a
/// comment line so the plot is reproducible from the file alone.
pub fn mds_csv(sidecar: &MdsSidecar) -> String {
    let mut out = format!("# radius = {} * energy\n", sidecar.radius_per_energy);
    out.push_str("x,y,energy,radius\n");
    for p in sidecar.points.iter() {
        out.push_str(&format!("{},{},{},{}\n", p.x, p.y, p.energy, p.radius));
    }
    out
}

/// Minimal SVG scatter of the embedding: circles sized by energy, a
/// polyline connecting consecutive iterations.
pub fn mds_svg(sidecar: &MdsSidecar) -> String {
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in sidecar.points.iter() {
        min_x = min_x.min(p.x - p.radius);
        max_x = max_x.max(p.x + p.radius);
        min_y = min_y.min(p.y - p.radius);
        max_y = max_y.max(p.y + p.radius);
    }
    if sidecar.points.is_empty() || !min_x.is_finite() {
        return String::from("<svg xmlns=\"http://www.w3.org/2000/svg\"/>");
    }
    let pad = 0.05 * ((max_x - min_x) + (max_y - min_y)).max(1e-12);
    let (w, h) = (max_x - min_x + 2.0 * pad, max_y - min_y + 2.0 * pad);
    let size = 640.0;
    let scale = size / w.max(h);
    let sx = |x: f64| (x - min_x + pad) * scale;
    let sy = |y: f64| (max_y - y + pad) * scale;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.2} {:.2}\">\n",
        (w * scale).ceil(),
        (h * scale).ceil(),
        w * scale,
        h * scale
    );
    let path: Vec<String> = sidecar
        .points
        .iter()
        .map(|p| format!("{:.3},{:.3}", sx(p.x), sy(p.y)))
        .collect();
    svg.push_str(&format!(
        "  <polyline fill=\"none\" stroke=\"#888\" stroke-width=\"1\" points=\"{}\"/>\n",
        path.join(" ")
    ));
    for p in sidecar.points.iter() {
        svg.push_str(&format!(
            "  <circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"{:.3}\" fill=\"rgba(214,69,27,0.55)\"/>\n",
            sx(p.x),
            sy(p.y),
            (p.radius * scale).max(1.0)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
