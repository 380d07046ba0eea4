//! Moves one hole of a disc along a routed tube and corrects the result to
//! an exactly area-preserving map.

use srnf_lab::cli::MoserInput;
use srnf_lab::moser::V2;

fn main() -> srnf_lab::Result<()> {
    let input = MoserInput::demo();
    let (domain, out) = input.run()?;
    let c = &out.certificate;
    println!("{} mesh nodes, legs {:?}", domain.mesh.nodes.len(), out.plan.legs);
    println!("tube flows: max |det J - 1| = {:.2e}", c.initial_max_detj_dev);
    println!("corrected:  max |det J - 1| = {:.2e}", c.max_detj_dev);
    println!("collar deviation {:.2e}, potential residual {:.2e}", c.collar_dev, c.potential_residual);
    let probe: Vec<V2> = domain.mesh.nodes.iter().step_by(97).map(|p| V2::new(p[0], p[1])).collect();
    let fd = out.fd_det_extrapolated(&domain, &probe, 1e-7)?;
    let worst = fd.iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max);
    println!("finite-difference check on {} nodes: {:.2e}", probe.len(), worst);
    Ok(())
}
