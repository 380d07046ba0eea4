//! Gauss map area factor against |K| times the surface area factor.

use srnf_lab::curvature::{gauss_bonnet_check, gauss_map_area_factor, gauss_map_area_factor_fd, gaussian_curvature};
use srnf_lab::shapes;

fn main() -> srnf_lab::Result<()> {
    for (name, s) in [
        ("ellipsoid", shapes::ellipsoid(65, [1.0, 0.8, 1.3])),
        ("saddle", shapes::quadric_graph(65, 0.4, -0.3, 0.2)),
    ] {
        let f = s.sample()?;
        let k = gaussian_curvature(&f)?;
        let (lo, hi) = k.k_values().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        let exact = gauss_map_area_factor(&f)?;
        let fd = gauss_map_area_factor_fd(&f)?;
        let dev = exact
            .iter()
            .flatten()
            .zip(fd.iter().flatten())
            .map(|(a, b)| (a - b).abs() / a.abs().max(1e-12))
            .fold(0.0, f64::max);
        println!("{name:10} K in [{lo:.3}, {hi:.3}], finite-difference deviation {dev:.2e}");
        if f.is_closed() {
            println!("{:10} gauss-bonnet error {:.2e}", "", (gauss_bonnet_check(&f)? - 4.0 * std::f64::consts::PI).abs());
        }
    }
    Ok(())
}
