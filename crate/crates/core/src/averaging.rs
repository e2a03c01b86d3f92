//! Pose graphs and robust rotation averaging.
//!
//! Node `i` carries an absolute orientation `R_i`; an edge `(u, v, R_uv)`
//! states `R_v ≈ R_uv R_u`. Averaging minimises the Huber loss of the
//! geodesic residuals `log(R_v R_uᵀ R_uvᵀ)` by iteratively reweighted
//! Gauss–Newton on left perturbations `R_i ← exp(δ_i) R_i`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::so3::Rotation;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    /// `R_uv ≈ R_v R_uᵀ`.
    pub rotation: Rotation,
    pub weight: f64,
}

impl Edge {
    pub fn new(u: usize, v: usize, rotation: Rotation) -> Self {
        Edge {
            u,
            v,
            rotation,
            weight: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct PoseGraph {
    /// Node timestamps (s).
    pub times: Vec<f64>,
    pub edges: Vec<Edge>,
}

impl PoseGraph {
    pub fn add_node(&mut self, t: f64) -> usize {
        self.times.push(t);
        self.times.len() - 1
    }

    pub fn add_edge(&mut self, edge: Edge) {
        self.edges.push(edge);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AveragingConfig {
    /// Huber scale on the residual angle (rad).
    pub huber: f64,
    pub max_iterations: usize,
    /// Stop when the largest update is below this (rad).
    pub tolerance: f64,
    /// Scale edge weights by [`Edge::weight`].
    pub use_weights: bool,
}

impl Default for AveragingConfig {
    fn default() -> Self {
        AveragingConfig {
            huber: 0.05,
            max_iterations: 50,
            tolerance: 1e-8,
            use_weights: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Averaged {
    pub orientations: Vec<Rotation>,
    pub iterations: usize,
    /// `false` when the graph fell apart into several components.
    pub connected: bool,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Orientations obtained by walking edges breadth-first from `root`, which
/// keeps `root_orientation`. Unreached nodes are `None`.
pub fn chain(n: usize, edges: &[Edge], root: usize, root_orientation: Rotation) -> Vec<Option<Rotation>> {
    let mut adj: Vec<Vec<(usize, Rotation)>> = vec![Vec::new(); n];
    for e in edges {
        adj[e.u].push((e.v, e.rotation));
        adj[e.v].push((e.u, e.rotation.inverse()));
    }
    let mut out = vec![None; n];
    out[root] = Some(root_orientation);
    let mut queue = VecDeque::from([root]);
    while let Some(i) = queue.pop_front() {
        let ri = out[i].expect("visited");
        for &(j, r) in &adj[i] {
            if out[j].is_none() {
                out[j] = Some(r * ri);
                queue.push_back(j);
            }
        }
    }
    out
}

/// Robust rotation averaging.
///
/// `anchors` fix nodes to given orientations. Each connected component
/// without an anchor is pinned at its first node to `fallback[node]`
/// (typically a chained estimate), and `connected` is cleared when there is
/// more than one component.
pub fn rotation_averaging(
    n: usize,
    edges: &[Edge],
    anchors: &[(usize, Rotation)],
    fallback: &[Rotation],
    cfg: &AveragingConfig,
) -> Result<Averaged> {
    if n == 0 {
        return Ok(Averaged {
            orientations: Vec::new(),
            iterations: 0,
            connected: true,
        });
    }
    if fallback.len() != n {
        return Err(Error::Data(format!("{} fallback orientations for {n} nodes", fallback.len())));
    }
    for e in edges {
        if e.u >= n || e.v >= n {
            return Err(Error::Data(format!("edge ({}, {}) refers to a missing node", e.u, e.v)));
        }
    }
    for &(a, _) in anchors {
        if a >= n {
            return Err(Error::Data(format!("anchor {a} refers to a missing node")));
        }
    }

    // Components.
    let mut parent: Vec<usize> = (0..n).collect();
    for e in edges {
        let (a, b) = (find(&mut parent, e.u), find(&mut parent, e.v));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut components: Vec<usize> = roots.clone();
    components.sort_unstable();
    components.dedup();
    let connected = components.len() == 1;

    // Initial estimate: chain from an anchor (or the first node) per component.
    let mut fixed = vec![false; n];
    let mut current: Vec<Option<Rotation>> = vec![None; n];
    for &c in &components {
        let anchor = anchors.iter().find(|(a, _)| roots[*a] == c);
        let (root, r0) = match anchor {
            Some(&(a, r)) => (a, r),
            None => (c, fallback[c]),
        };
        let comp_edges: Vec<Edge> = edges.iter().filter(|e| roots[e.u] == c).copied().collect();
        for (i, r) in chain(n, &comp_edges, root, r0).into_iter().enumerate() {
            if let Some(r) = r {
                if roots[i] == c {
                    current[i] = Some(r);
                }
            }
        }
        fixed[root] = true;
    }
    for &(a, r) in anchors {
        fixed[a] = true;
        current[a] = Some(r);
    }
    let mut current: Vec<Rotation> = current.into_iter().map(|r| r.expect("every node is reached")).collect();

    let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
    if free.is_empty() || edges.is_empty() {
        return Ok(Averaged {
            orientations: current,
            iterations: 0,
            connected,
        });
    }
    let mut slot = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        slot[i] = k;
    }
    let dim = 3 * free.len();
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        let mut g = DVector::<f64>::zeros(dim);
        for e in edges {
            let rel = current[e.v] * current[e.u].inverse();
            let rho = (rel * e.rotation.inverse()).log();
            let norm = rho.norm();
            let mut w = if norm <= cfg.huber { 1.0 } else { cfg.huber / norm };
            if cfg.use_weights {
                w *= e.weight;
            }
            // ρ(δ) ≈ ρ + δ_v − A δ_u with A = R_v R_uᵀ.
            let a = *rel.matrix();
            let blocks: [(usize, Matrix3<f64>); 2] = [(e.v, Matrix3::identity()), (e.u, -a)];
            for &(i, ji) in &blocks {
                if slot[i] == usize::MAX {
                    continue;
                }
                let si = 3 * slot[i];
                let gi = ji.transpose() * rho * w;
                for r in 0..3 {
                    g[si + r] += gi[r];
                }
                for &(k, jk) in &blocks {
                    if slot[k] == usize::MAX {
                        continue;
                    }
                    let sk = 3 * slot[k];
                    let block = ji.transpose() * jk * w;
                    for r in 0..3 {
                        for c in 0..3 {
                            h[(si + r, sk + c)] += block[(r, c)];
                        }
                    }
                }
            }
        }
        // Tiny damping keeps nodes with no constraining edge well posed.
        for d in 0..dim {
            h[(d, d)] += 1e-12;
        }
        let step = h
            .cholesky()
            .ok_or_else(|| Error::Optimisation("rotation averaging normal equations are singular".into()))?
            .solve(&(-g));
        let mut largest: f64 = 0.0;
        for (k, &i) in free.iter().enumerate() {
            let d = Vector3::new(step[3 * k], step[3 * k + 1], step[3 * k + 2]);
            largest = largest.max(d.norm());
            current[i] = (Rotation::exp(&d) * current[i]).renormalized();
        }
        if !largest.is_finite() {
            return Err(Error::Optimisation("rotation averaging diverged".into()));
        }
        if largest < cfg.tolerance {
            break;
        }
    }
    Ok(Averaged {
        orientations: current,
        iterations,
        connected,
    })
}
