//! Command-line front end: `gen`, `srnf`, `dist`, `moser`, `verify`, `report`.
//!
//! Every command writes into `--out`, atomically, followed by a run manifest
//! `<command>.manifest.json` listing inputs and outputs with SHA-256 digests.
//! Exit codes: 0 pass, 2 check failure, 3 input error, 4 numerical failure.

mod manifest;
mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::counterexamples::{gen_chessboard, gen_cylinder_pair, gen_flip, gen_paraboloid, ChessboardSpec, FlipSpec, TwistProfile};
use crate::error::{Error, Result};
use crate::geom::{srnf, Rect, SrnfField, SurfaceImmersion, Vec3};
use crate::io::{read_json, read_surface, write_f64, write_json, write_obj, write_surface};
use crate::metric::{certify_noncongruent, distance_report};
use crate::moser::{self, CircleSampling, FlatPlace, HoledDiscDomain, MoserOptions, MovePlan};
use crate::shapes;
use crate::verify::{self, Scorecard};

pub use manifest::{FileDigest, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub const FIELD_FORMAT: &str = "srnf-lab-field/1";

#[derive(Debug, Parser)]
#[command(name = "srnf-lab", version, about = "Square root normal fields, distances and flat-place rearrangements")]
pub struct Cli {
    /// Worker threads; overrides SRNF_LAB_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a surface or surface pair.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Compute the square root normal field of a surface.
    Srnf {
        surface: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Distance, field norms and rigid alignment of two surfaces.
    Dist {
        first: PathBuf,
        second: PathBuf,
        /// Fail with exit code 2 unless distance <= TOL * norm.
        #[arg(long, value_name = "TOL")]
        max_relative: Option<f64>,
        /// Skip the rigid alignment.
        #[arg(long)]
        no_align: bool,
        #[command(flatten)]
        out: OutDir,
    },
    /// Area-preserving rearrangement of a flat place.
    Moser {
        /// JSON with `flat`, `translations` and optional meshing fields.
        input: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        det_tol: f64,
        /// Collar tolerance as a fraction of the flat place diameter.
        #[arg(long, default_value_t = 1e-6)]
        collar_ratio: f64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run probe batteries and fixture checks; exit 2 on any failed claim.
    Verify {
        /// Batteries to run; defaults to all without a fixture, none with one.
        #[arg(long, value_enum, value_delimiter = ',')]
        battery: Vec<Battery>,
        #[arg(long, default_value_t = 129)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Triples in the invariance battery.
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Surface manifest to check.
        #[arg(long)]
        fixture: Option<PathBuf>,
        /// Stored field of the fixture, compared with a fresh computation.
        #[arg(long, requires = "fixture")]
        field: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Write CSV plot data.
    Report {
        #[arg(long, value_delimiter = ',', default_value = "17,33,65,129")]
        resolutions: Vec<usize>,
        /// Moser input for the determinant histogram; a one-disc demo by default.
        #[arg(long)]
        moser: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
}

#[derive(Debug, Args)]
pub struct OutDir {
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum GenKind {
    /// Cylinder and its rearranged twin.
    Cylinder {
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 129)]
        n: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Graph of `a x^2 + b y^2` over `[-w, w]^2` with a flat domain metric.
    Paraboloid {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, default_value_t = 129)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        half_width: f64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Unit sphere on a cubed-sphere grid.
    Sphere {
        #[arg(long, default_value_t = 129)]
        n: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Axis-aligned ellipsoid on a cubed-sphere grid.
    Ellipsoid {
        #[arg(long, value_delimiter = ',', default_value = "1,1,1.2")]
        axes: Vec<f64>,
        #[arg(long, default_value_t = 129)]
        n: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Chessboard pair: discs moved by an area-preserving map of the flat place.
    Chessboard {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Flip pair: twisted annulus with an inverted cap.
    Flip {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Battery {
    All,
    Invariance,
    Gauss,
    Sphere,
    Convex,
}

/// Input of the `moser` command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MoserInput {
    pub flat: FlatPlace,
    pub translations: Vec<[f64; 2]>,
    #[serde(default = "default_collar")]
    pub collar_width: f64,
    #[serde(default = "default_spacing")]
    pub mesh_spacing: f64,
    #[serde(default)]
    pub waypoints: Vec<(usize, Vec<[f64; 2]>)>,
    #[serde(default)]
    pub options: MoserOptions,
}

fn default_collar() -> f64 {
    0.025
}

fn default_spacing() -> f64 {
    0.025
}

impl MoserInput {
    /// One disc moved across the unit disc.
    pub fn demo() -> MoserInput {
        MoserInput {
            flat: FlatPlace {
                outer: moser::Circle::new([0.0, 0.0], 1.0),
                inner: vec![moser::Circle::new([-0.4, 0.0], 0.15)],
            },
            translations: vec![[0.6, 0.1]],
            collar_width: 0.025,
            mesh_spacing: 0.05,
            waypoints: Vec::new(),
            options: MoserOptions::default(),
        }
    }

    /// Boundary sampling with spacing close to the interior spacing.
    pub fn sampling(&self) -> Vec<CircleSampling> {
        let count = |r: f64, q: usize| q * ((std::f64::consts::TAU * r / self.mesh_spacing / q as f64).ceil() as usize).max(4);
        std::iter::once(self.flat.outer.radius)
            .chain(self.flat.inner.iter().map(|c| c.radius))
            .map(|r| CircleSampling {
                count: count(r, 8),
                offset: 0.0,
            })
            .collect()
    }

    pub fn run(&self) -> Result<(HoledDiscDomain, moser::MoserOutput)> {
        if self.translations.len() != self.flat.inner.len() {
            return Err(Error::SpecInvalid(format!(
                "{} translations for {} discs",
                self.translations.len(),
                self.flat.inner.len()
            )));
        }
        if !(self.mesh_spacing > 0.0) {
            return Err(Error::SpecInvalid("mesh_spacing must be positive".into()));
        }
        let domain = HoledDiscDomain::generate(self.flat.clone(), &self.sampling(), self.mesh_spacing, self.collar_width)?;
        let plan = if self.waypoints.is_empty() {
            moser::route(&domain, &self.translations, &self.options)?
        } else {
            let plan = MovePlan::from_waypoints(&self.flat, &self.waypoints)?;
            let got = plan.translations(self.flat.inner.len());
            if got.iter().zip(&self.translations).any(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]) > 1e-12) {
                return Err(Error::SpecInvalid("waypoints do not end at the translated centres".into()));
            }
            plan
        };
        let out = moser::flat_place_diffeo(&domain, &plan, &self.options)?;
        Ok((domain, out))
    }
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Stage { source, .. } => exit_code(source),
        Error::DegenerateImmersion { .. }
        | Error::OutOfDomain { .. }
        | Error::RoutingFailed { .. }
        | Error::NonPositiveJacobian { .. }
        | Error::IncompatibleData { .. }
        | Error::SolverFailure { .. }
        | Error::DegenerateInterpolation { .. }
        | Error::StepUnstable { .. } => EXIT_NUMERICAL,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e}");
        return EXIT_INPUT;
    }
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(n) => Some(n),
        None => match std::env::var("SRNF_LAB_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Error::InvalidParam(format!("SRNF_LAB_THREADS={v} is not a count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = threads.filter(|&n| n > 0) {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn execute(command: &Command) -> Result<i32> {
    match command {
        Command::Gen { kind } => cmd_gen(kind),
        Command::Srnf { surface, out } => cmd_srnf(surface, &out.out),
        Command::Dist {
            first,
            second,
            max_relative,
            no_align,
            out,
        } => cmd_dist(first, second, *max_relative, !*no_align, &out.out),
        Command::Moser {
            input,
            det_tol,
            collar_ratio,
            out,
        } => cmd_moser(input, *det_tol, *collar_ratio, &out.out),
        Command::Verify {
            battery,
            n,
            seed,
            count,
            fixture,
            field,
            out,
        } => cmd_verify(battery, *n, *seed, *count, fixture.as_deref(), field.as_deref(), &out.out),
        Command::Report {
            resolutions,
            moser,
            out,
        } => report::cmd_report(resolutions, moser.as_deref(), &out.out),
    }
}

fn read_spec<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::SpecInvalid(format!("{}: {e}", p.display())))
        }
    }
}

fn save_surface(dir: &Path, name: &str, f: &SurfaceImmersion, outputs: &mut Vec<PathBuf>) -> Result<()> {
    outputs.extend(write_surface(dir, name, f)?);
    let obj = dir.join(format!("{name}.obj"));
    write_obj(&obj, f)?;
    outputs.push(obj);
    Ok(())
}

fn cmd_gen(kind: &GenKind) -> Result<i32> {
    let mut outputs = Vec::new();
    let mut inputs = Vec::new();
    let (name, dir, params) = match kind {
        GenKind::Cylinder { r, n, out } => {
            let (f1, f2) = gen_cylinder_pair(*r, *n, *n)?;
            save_surface(&out.out, "cylinder_f1", &f1, &mut outputs)?;
            save_surface(&out.out, "cylinder_f2", &f2, &mut outputs)?;
            ("gen cylinder", &out.out, json!({"r": r, "n": n}))
        }
        GenKind::Paraboloid { a, b, n, half_width, out } => {
            let w = *half_width;
            let f = gen_paraboloid(*a, *b, Rect::new(-w, w, -w, w), *n, *n)?;
            save_surface(&out.out, &format!("paraboloid_{a}_{b}"), &f, &mut outputs)?;
            ("gen paraboloid", &out.out, json!({"a": a, "b": b, "n": n, "half_width": w}))
        }
        GenKind::Sphere { n, out } => {
            save_surface(&out.out, "sphere", &shapes::cubed_sphere(*n).sample()?, &mut outputs)?;
            ("gen sphere", &out.out, json!({"n": n}))
        }
        GenKind::Ellipsoid { axes, n, out } => {
            let ax: [f64; 3] = axes
                .as_slice()
                .try_into()
                .map_err(|_| Error::InvalidParam("ellipsoid needs three axes".into()))?;
            if ax.iter().any(|a| !(*a > 0.0)) {
                return Err(Error::InvalidParam("ellipsoid axes must be positive".into()));
            }
            save_surface(&out.out, "ellipsoid", &shapes::ellipsoid(*n, ax).sample()?, &mut outputs)?;
            ("gen ellipsoid", &out.out, json!({"axes": ax, "n": n}))
        }
        GenKind::Chessboard { spec, out } => {
            let s: ChessboardSpec = read_spec(spec.as_deref())?;
            inputs.extend(spec.clone());
            let cb = gen_chessboard(&s)?;
            save_surface(&out.out, "chessboard_id", &cb.id, &mut outputs)?;
            save_surface(&out.out, "chessboard_f", &cb.f, &mut outputs)?;
            let cert = out.out.join("chessboard_certificate.json");
            write_json(&cert, &json!({"certificate": cb.moser.certificate, "plan": cb.moser.plan}))?;
            outputs.push(cert);
            ("gen chessboard", &out.out, serde_json::to_value(&s)?)
        }
        GenKind::Flip { spec, out } => {
            let s: FlipSpec = read_spec(spec.as_deref())?;
            inputs.extend(spec.clone());
            let (id, f) = gen_flip(&s, &TwistProfile::standard(s.twist_margin))?;
            save_surface(&out.out, "flip_id", &id, &mut outputs)?;
            save_surface(&out.out, "flip_f", &f, &mut outputs)?;
            ("gen flip", &out.out, serde_json::to_value(&s)?)
        }
    };
    RunManifest::new(name, params, None)
        .inputs(&inputs)?
        .outputs(&outputs)?
        .write(dir, "gen")?;
    Ok(EXIT_OK)
}

/// Serialized square root normal field: per patch, one `[x, y, z]` per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldFile {
    pub format: String,
    pub l2_norm: f64,
    pub patches: Vec<Vec<[f64; 3]>>,
}

impl FieldFile {
    pub fn from_field(q: &SrnfField) -> FieldFile {
        FieldFile {
            format: FIELD_FORMAT.into(),
            l2_norm: crate::metric::l2_norm(q),
            patches: q.patches.iter().map(|p| p.values.iter().map(|v| [v.x, v.y, v.z]).collect()).collect(),
        }
    }

    /// The stored values on the layout and measure of `template`.
    pub fn to_field(&self, template: &SrnfField) -> Result<SrnfField> {
        if self.format != FIELD_FORMAT {
            return Err(Error::SpecInvalid(format!("unknown field format {:?}", self.format)));
        }
        if self.patches.len() != template.patches.len()
            || self.patches.iter().zip(&template.patches).any(|(a, b)| a.len() != b.values.len())
        {
            return Err(Error::GridMismatch("stored field does not match the fixture layout".into()));
        }
        let mut q = template.clone();
        for (p, stored) in q.patches.iter_mut().zip(&self.patches) {
            p.values = stored.iter().map(|v| Vec3::new(v[0], v[1], v[2])).collect();
        }
        Ok(q)
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "surface".into())
}

fn cmd_srnf(surface: &Path, dir: &Path) -> Result<i32> {
    let f = read_surface(surface)?;
    let q = srnf(&f)?;
    let path = dir.join(format!("{}.field.json", stem(surface)));
    write_json(&path, &FieldFile::from_field(&q))?;
    RunManifest::new("srnf", json!({}), None)
        .inputs(&[surface.to_path_buf()])?
        .outputs(&[path])?
        .write(dir, "srnf")?;
    Ok(EXIT_OK)
}

fn cmd_dist(first: &Path, second: &Path, max_relative: Option<f64>, align: bool, dir: &Path) -> Result<i32> {
    let f1 = read_surface(first)?;
    let f2 = read_surface(second)?.with_metric_of(&f1)?;
    let r = distance_report(&f1, &f2)?;
    let relative = r.distance / r.field_norms[0].max(f64::MIN_POSITIVE);
    let alignment = if align {
        let a = certify_noncongruent(&f1, &f2, None)?;
        json!({
            "rotation": a.best_motion.rotation,
            "translation": a.best_motion.translation,
            "rms_residual": a.rms_residual,
            "point_rms": a.point_rms,
            "threshold": a.threshold,
            "congruent": a.congruent,
        })
    } else {
        serde_json::Value::Null
    };
    let report = json!({
        "distance": r.distance,
        "relative_distance": relative,
        "field_norms": r.field_norms,
        "max_deviation": r.max_deviation,
        "alignment": alignment,
    });
    let path = dir.join("dist.json");
    write_json(&path, &report)?;
    RunManifest::new("dist", json!({"max_relative": max_relative, "align": align}), None)
        .inputs(&[first.to_path_buf(), second.to_path_buf()])?
        .outputs(&[path])?
        .write(dir, "dist")?;
    println!("distance {:.6e} (relative {:.3e})", r.distance, relative);
    Ok(match max_relative {
        Some(tol) if !(relative <= tol) => EXIT_CHECK,
        _ => EXIT_OK,
    })
}

fn cmd_moser(input: &Path, det_tol: f64, collar_ratio: f64, dir: &Path) -> Result<i32> {
    let spec: MoserInput = {
        let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
        serde_json::from_str(&text).map_err(|e| Error::SpecInvalid(format!("{}: {e}", input.display())))?
    };
    let (domain, out) = spec.run()?;
    let nodes = dir.join("nodes.bin");
    write_f64(&nodes, domain.mesh.nodes.iter().flat_map(|p| *p))?;
    let disp = dir.join("displacement.bin");
    write_f64(
        &disp,
        domain
            .mesh
            .nodes
            .iter()
            .zip(&out.map.images)
            .flat_map(|(p, y)| [y.x - p[0], y.y - p[1]]),
    )?;
    let c = &out.certificate;
    let passed = c.passes(det_tol, collar_ratio);
    let cert = dir.join("certificate.json");
    write_json(
        &cert,
        &json!({
            "max_detJ_dev": c.max_detj_dev,
            "collar_dev": c.collar_dev,
            "stages": c.stages,
            "details": c,
            "plan": out.plan,
            "node_count": domain.mesh.nodes.len(),
            "det_tol": det_tol,
            "collar_ratio": collar_ratio,
            "passed": passed,
        }),
    )?;
    RunManifest::new("moser", serde_json::to_value(&spec)?, None)
        .inputs(&[input.to_path_buf()])?
        .outputs(&[nodes, disp, cert])?
        .write(dir, "moser")?;
    println!("max |det J - 1| {:.3e}, collar deviation {:.3e}", c.max_detj_dev, c.collar_dev);
    Ok(if passed { EXIT_OK } else { EXIT_CHECK })
}

fn cmd_verify(
    batteries: &[Battery],
    n: usize,
    seed: u64,
    count: usize,
    fixture: Option<&Path>,
    field: Option<&Path>,
    dir: &Path,
) -> Result<i32> {
    let mut selected: Vec<Battery> = batteries.to_vec();
    if selected.is_empty() && fixture.is_none() || selected.contains(&Battery::All) {
        selected = vec![Battery::Invariance, Battery::Gauss, Battery::Sphere, Battery::Convex];
    }
    let mut card = Scorecard::default();
    let mut inputs = Vec::new();
    if let Some(path) = fixture {
        inputs.push(path.to_path_buf());
        let f = read_surface(path)?;
        let seams = f.seam_deviations().into_iter().map(|(_, d)| d).fold(0.0, f64::max);
        card.claims.push(verify::Claim::at_most(
            "fixture seams close",
            seams,
            1e-9 * f.diagonal(),
            "max seam deviation",
        ));
        card.extend(verify::orientation_scorecard(&f)?);
        if let Some(qpath) = field {
            inputs.push(qpath.to_path_buf());
            let stored: FieldFile = read_json(qpath)?;
            let q = stored.to_field(&srnf(&f)?)?;
            card.extend(verify::fixture_scorecard(&f, &q)?);
        }
    }
    for b in &selected {
        card.extend(match b {
            Battery::Invariance => verify::invariance_scorecard(n, seed, count)?,
            Battery::Gauss => verify::gauss_scorecard(n, seed)?,
            Battery::Sphere => verify::sphere_scorecard(n, seed)?,
            Battery::Convex => verify::convex_scorecard(n, seed)?,
            Battery::All => unreachable!("expanded above"),
        });
    }
    let passed = card.passed();
    let path = dir.join("scorecard.json");
    write_json(&path, &json!({"passed": passed, "claims": card.claims}))?;
    RunManifest::new("verify", json!({"batteries": selected, "n": n, "count": count}), Some(seed))
        .inputs(&inputs)?
        .outputs(&[path])?
        .write(dir, "verify")?;
    for c in &card.claims {
        println!("{} {}: {:.3e} (tolerance {:.1e})", if c.passed { "pass" } else { "FAIL" }, c.name, c.value, c.tolerance);
    }
    Ok(if passed { EXIT_OK } else { EXIT_CHECK })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(exit_code(&Error::SpecInvalid("x".into())), EXIT_INPUT);
        let routing = Error::RoutingFailed {
            disc: 0,
            reason: "blocked".into(),
        };
        assert_eq!(exit_code(&routing), EXIT_NUMERICAL);
        assert_eq!(exit_code(&routing.at_stage("routing")), EXIT_NUMERICAL);
    }

    #[test]
    fn demo_input_round_trips() {
        let d = MoserInput::demo();
        let text = serde_json::to_string(&d).unwrap();
        let back: MoserInput = serde_json::from_str(&text).unwrap();
        assert_eq!(back.translations, d.translations);
        assert!(back.sampling().iter().all(|s| s.count % 8 == 0));
    }

    #[test]
    fn usage_error_is_input_error() {
        assert_eq!(run(["srnf-lab", "gen", "torus"]), EXIT_INPUT);
        assert_eq!(run(["srnf-lab", "--help"]), EXIT_OK);
    }
}
