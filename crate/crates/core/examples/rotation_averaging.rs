//! Robust averaging of a small pose graph with one corrupted edge.
use evrot::averaging::{rotation_averaging, AveragingConfig, Edge};
use evrot::so3::{exp_so3, Rotation};
use nalgebra::Vector3;

fn main() -> evrot::error::Result<()> {
    let n = 8;
    let truth: Vec<Rotation> = (0..n).map(|i| exp_so3(&(Vector3::new(0.1, 0.2, -0.05) * i as f64))).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..(u + 4).min(n) {
            edges.push(Edge::new(u, v, truth[v] * truth[u].inverse()));
        }
    }
    // corrupt the 3 → 4 edge
    let bad = edges.iter().position(|e| e.u == 3 && e.v == 4).unwrap();
    edges[bad].rotation = exp_so3(&Vector3::new(0.4, 0.0, 0.0)) * edges[bad].rotation;

    // odometry-style chaining along consecutive edges only
    let mut chained = vec![truth[0]];
    for u in 0..n - 1 {
        let e = edges.iter().find(|e| e.u == u && e.v == u + 1).unwrap();
        chained.push(e.rotation * chained[u]);
    }
    let avg = rotation_averaging(n, &edges, &[(0, truth[0])], &chained, &AveragingConfig::default())?;
    for i in 0..n {
        println!(
            "node {i}: chained error {:.4} rad, averaged error {:.2e} rad",
            chained[i].geodesic_distance(&truth[i]),
            avg.orientations[i].geodesic_distance(&truth[i])
        );
    }
    println!("{} iterations", avg.iterations);
    Ok(())
}
