use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::{MoserInput, RunManifest, EXIT_OK};
use crate::counterexamples::{gen_cylinder_pair, gen_paraboloid};
use crate::error::{Error, Result};
use crate::geom::{Rect, Vec3};
use crate::io::{atomic_write, read_json};
use crate::metric::distance_report;
use crate::shapes;

/// `log10 |det J - 1|` bins of width one half from -16 to 0.
const HIST_LO: f64 = -16.0;
const HIST_BINS: usize = 32;

pub(super) fn cmd_report(resolutions: &[usize], moser: Option<&Path>, dir: &Path) -> Result<i32> {
    let mut inputs = Vec::new();
    let distances = dir.join("distance_vs_resolution.csv");
    atomic_write(&distances, distance_csv(resolutions)?.as_bytes())?;

    let spec = match moser {
        Some(p) => {
            inputs.push(p.to_path_buf());
            read_json::<MoserInput>(p).map_err(|e| Error::SpecInvalid(format!("{}: {e}", p.display())))?
        }
        None => MoserInput::demo(),
    };
    let (_, out) = spec.run()?;
    let hist = dir.join("detj_histogram.csv");
    atomic_write(&hist, histogram_csv(&out.initial.det_j(), &out.map.det_j()).as_bytes())?;

    let outputs: Vec<PathBuf> = vec![distances, hist];
    RunManifest::new("report", json!({"resolutions": resolutions}), None)
        .inputs(&inputs)?
        .outputs(&outputs)?
        .write(dir, "report")?;
    Ok(EXIT_OK)
}

/// Distances of the degenerate pairs and two reference pairs per resolution.
pub fn distance_csv(resolutions: &[usize]) -> Result<String> {
    let mut csv = String::from("case,n,distance,field_norm,relative\n");
    let square = Rect::new(-1.0, 1.0, -1.0, 1.0);
    for &n in resolutions {
        let (c1, c2) = gen_cylinder_pair(1.0, n, n)?;
        let p1 = gen_paraboloid(1.0, 4.0, square, n, n)?;
        let p2 = gen_paraboloid(2.0, 2.0, square, n, n)?;
        let sphere = shapes::cubed_sphere(n).sample()?;
        let t = Vec3::new(0.5, -0.25, 1.0);
        let moved = shapes::cubed_sphere(n).map_ambient(move |p| p + t).sample_like(&sphere)?;
        let ellipsoid = shapes::ellipsoid(n, [1.0, 1.0, 1.2]).sample_like(&sphere)?;
        for (case, a, b) in [
            ("cylinder", &c1, &c2),
            ("paraboloid", &p1, &p2),
            ("sphere_translate", &sphere, &moved),
            ("sphere_ellipsoid", &sphere, &ellipsoid),
        ] {
            let r = distance_report(a, b)?;
            let norm = r.field_norms[0];
            writeln!(csv, "{case},{n},{:e},{:e},{:e}", r.distance, norm, r.distance / norm).expect("write to string");
        }
    }
    Ok(csv)
}

/// Histogram of `log10 |det J - 1|` before and after the Moser correction;
/// exact ones land in the first bin.
pub fn histogram_csv(initial: &[f64], corrected: &[f64]) -> String {
    let bin = |d: f64| {
        let x = (d - 1.0).abs().log10();
        (((x - HIST_LO) * 2.0).floor().max(0.0) as usize).min(HIST_BINS - 1)
    };
    let mut counts = vec![[0usize; 2]; HIST_BINS];
    for (col, values) in [initial, corrected].into_iter().enumerate() {
        for &d in values {
            counts[bin(d)][col] += 1;
        }
    }
    let mut csv = String::from("log10_dev_lo,log10_dev_hi,tube_flows,corrected\n");
    for (k, c) in counts.iter().enumerate() {
        let lo = HIST_LO + k as f64 * 0.5;
        writeln!(csv, "{lo},{},{},{}", lo + 0.5, c[0], c[1]).expect("write to string");
    }
    csv
}
