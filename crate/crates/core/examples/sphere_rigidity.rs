//! Distances from the round sphere to nearby closed surfaces stay well above
//! resolution noise, while translates of the sphere sit at zero.

use srnf_lab::curvature::{sphere_rigidity_battery, sphere_rigidity_probe};
use srnf_lab::geom::Vec3;
use srnf_lab::shapes;

fn main() -> srnf_lab::Result<()> {
    for e in sphere_rigidity_battery(65, 7)? {
        println!("{:24} distance {:.3e}  noise {:.1e}  {}", e.name, e.distance, e.noise, if e.passed { "ok" } else { "FAIL" });
    }
    let sphere = shapes::cubed_sphere(65).sample()?;
    let moved = sphere.translated(&Vec3::new(0.5, -1.0, 2.0));
    let r = sphere_rigidity_probe(&sphere, &moved, 1e-8)?;
    println!("translate: distance {:.1e}, translation {:?}, consistent {}", r.distance, r.translation, r.consistent);
    Ok(())
}
