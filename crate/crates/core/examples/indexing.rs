//! Temporal neighbourhoods of a batch and nearest bearing lookups.
use evrot::camera::CameraIntrinsics;
use evrot::event::Window;
use evrot::indexing::{build_interval_index, build_ray_index, nearest_ray, temporal_neighbours};
use evrot::registration::batch_rays;
use evrot::so3::AngularVelocity;
use evrot::synth::{generate_batch, NoiseModel, SceneModel};

fn main() -> evrot::error::Result<()> {
    let intr = CameraIntrinsics::from_fov(240, 180, 1.2)?;
    let scene = SceneModel::random(300, 0.6, 3);
    let b = generate_batch(&scene, AngularVelocity::new(0.2, 0.5, 0.0), Window::new(0.0, 0.05), &intr, 4000, &NoiseModel::noiseless(), 3)?;

    let eps = 0.02 * b.batch.window().duration();
    let index = build_interval_index(&b.batch, eps)?;
    let first = b.batch.events()[10];
    let neighbours = temporal_neighbours(&index, first.t);
    println!("event 10 at t={:.6}: {} temporal neighbours (ε={eps:.1e} s)", first.t, neighbours.len());

    let rays = batch_rays(&b.batch, &intr)?;
    let tree = build_ray_index(&rays[b.batch.split_index()..])?;
    let (i, d) = nearest_ray(&tree, &rays[10]);
    println!("nearest second-half ray to event 10: #{} at chord {d:.3e}", i + b.batch.split_index());
    Ok(())
}
