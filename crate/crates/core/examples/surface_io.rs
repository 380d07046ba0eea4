//! Writes a sampled surface to disk, reads it back and exports an OBJ mesh.

use srnf_lab::geom::srnf;
use srnf_lab::io::{read_surface, write_obj, write_surface};
use srnf_lab::metric::field_distance;
use srnf_lab::shapes;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("srnf-lab-surface-io");
    std::fs::create_dir_all(&dir)?;
    let f = shapes::ellipsoid(33, [1.0, 1.0, 1.2]).sample()?;
    let files = write_surface(&dir, "ellipsoid", &f)?;
    println!("wrote {} files, manifest {}", files.len(), files[0].display());
    let g = read_surface(&files[0])?;
    println!("round trip field distance {:e}", field_distance(&srnf(&f)?, &srnf(&g)?)?);
    let obj = dir.join("ellipsoid.obj");
    write_obj(&obj, &g)?;
    println!("wrote {}", obj.display());
    Ok(())
}
