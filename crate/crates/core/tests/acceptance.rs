//! Acceptance criteria AC1-AC9, one line per criterion. Exits nonzero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::Matrix2;
use srnf_lab::counterexamples::{
    gen_chessboard, gen_cylinder_pair, gen_flip, gen_paraboloid, max_normal_angle, twist_map, ChessboardSpec, FlipSpec,
    TwistProfile,
};
use srnf_lab::curvature::{gauss_bonnet_check, gauss_map_area_factor_fd};
use srnf_lab::geom::{Rect, SurfaceImmersion};
use srnf_lab::metric::{certify_noncongruent, distance_report};
use srnf_lab::moser::fem::{integrate, solve_neumann};
use srnf_lab::moser::{Circle, CircleSampling, FlatPlace, TriMesh, Tube, TubeKind, V2};
use srnf_lab::shapes;
use srnf_lab::verify::{convex_scorecard, gauss_scorecard, invariance_scorecard, sphere_scorecard, Claim, Scorecard};

const N: usize = 129;
const SEED: u64 = 7;

/// Runs one criterion; `budget` is its wall-clock limit in seconds, if any.
fn check(id: &str, title: &str, budget: Option<u64>, run: impl FnOnce() -> srnf_lab::Result<Vec<Claim>>) -> bool {
    let start = Instant::now();
    let result = run();
    let elapsed = start.elapsed();
    let limit = budget.map(Duration::from_secs);
    let timing = match budget {
        Some(b) => format!("{:.1} s of {b} s", elapsed.as_secs_f64()),
        None => format!("{:.1} s", elapsed.as_secs_f64()),
    };
    match result {
        Ok(claims) => {
            let in_time = limit.is_none_or(|l| elapsed <= l);
            let passed = in_time && claims.iter().all(|c| c.passed);
            println!("{id} {} {title} ({timing})", if passed { "PASS" } else { "FAIL" });
            if !in_time {
                println!("    ! over the time budget");
            }
            for c in &claims {
                let rel = match c.sense {
                    srnf_lab::verify::Sense::AtMost => "<=",
                    srnf_lab::verify::Sense::Above => ">",
                };
                let mark = if c.passed { " " } else { "!" };
                let detail = if c.detail.is_empty() { String::new() } else { format!(" ({})", c.detail) };
                println!("    {mark} {}: {:.3e} {rel} {:.1e}{detail}", c.name, c.value, c.tolerance);
            }
            passed
        }
        Err(e) => {
            println!("{id} FAIL {title} ({timing}): {e}");
            false
        }
    }
}

fn pair_claims(f1: &SurfaceImmersion, f2: &SurfaceImmersion, rel_tol: f64, residual_floor: f64) -> srnf_lab::Result<Vec<Claim>> {
    let r = distance_report(f1, f2)?;
    let a = certify_noncongruent(f1, f2, None)?;
    Ok(vec![
        Claim::at_most("distance / norm", r.distance / r.field_norms[0], rel_tol, ""),
        Claim::above("alignment residual", a.rms_residual, residual_floor.max(a.threshold), ""),
    ])
}

fn ac1() -> srnf_lab::Result<Vec<Claim>> {
    let (f1, f2) = gen_cylinder_pair(2.0, N, N)?;
    pair_claims(&f1, &f2, 1e-10, 1e-1)
}

fn ac2() -> srnf_lab::Result<Vec<Claim>> {
    let square = Rect::new(-1.0, 1.0, -1.0, 1.0);
    let f1 = gen_paraboloid(1.0, 4.0, square, N, N)?;
    let f2 = gen_paraboloid(2.0, 2.0, square, N, N)?;
    let mut claims = vec![Claim::at_most("max |q1 - q2|", distance_report(&f1, &f2)?.max_deviation, 1e-10, "")];
    claims.extend(pair_claims(&f1, &f2, 1e-10, 0.0)?);
    Ok(claims)
}

fn ac3(gb: &mut Option<f64>) -> srnf_lab::Result<Vec<Claim>> {
    let cb = gen_chessboard(&ChessboardSpec::default())?;
    let c = &cb.moser.certificate;
    // fresh extrapolated central differences of the composed map at interior nodes
    let probes: Vec<V2> = cb
        .domain
        .mesh
        .nodes
        .iter()
        .step_by(7)
        .filter(|p| cb.domain.flat.boundary_distance(**p).0 > 1e-4)
        .map(|p| V2::new(p[0], p[1]))
        .collect();
    let fd = cb.moser.fd_det_extrapolated(&cb.domain, &probes, 1e-7)?;
    let fd_dev = fd.iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max);
    *gb = Some(gauss_bonnet_check(&cb.id)?);
    let mut claims = vec![
        Claim::at_most("max |det J - 1|", c.max_detj_dev, 1e-4, ""),
        Claim::at_most(format!("max |det J - 1| by differences, {} probes", fd.len()), fd_dev, 1e-4, ""),
        Claim::at_most("collar deviation / diameter", c.collar_dev / c.diameter, 1e-6, ""),
        Claim::at_most("max normal angle", max_normal_angle(&cb.id, &cb.f)?, 1e-6, ""),
    ];
    claims.extend(pair_claims(&cb.id, &cb.f, 1e-3, 0.0)?);
    Ok(claims)
}

fn ac4() -> srnf_lab::Result<Vec<Claim>> {
    let spec = FlipSpec::default();
    let twist = TwistProfile::standard(spec.twist_margin);
    let (id, f) = gen_flip(&spec, &twist)?;
    let h = 1e-6;
    let mut det_dev = 0.0f64;
    for i in 0..=40 {
        for j in 0..64 {
            let r = 1.0 + i as f64 / 40.0;
            let a = j as f64 * PI / 32.0 + 0.1;
            let x = [r * a.cos(), r * a.sin()];
            let d = |dx: f64, dy: f64| twist_map(&twist, [x[0] + dx, x[1] + dy]);
            let (xp, xm, yp, ym) = (d(h, 0.0), d(-h, 0.0), d(0.0, h), d(0.0, -h));
            let m = Matrix2::new(
                (xp[0] - xm[0]) / (2.0 * h),
                (yp[0] - ym[0]) / (2.0 * h),
                (xp[1] - xm[1]) / (2.0 * h),
                (yp[1] - ym[1]) / (2.0 * h),
            );
            det_dev = det_dev.max((m.determinant() - 1.0).abs());
        }
    }
    let mut claims = vec![Claim::at_most("twist |det J - 1|", det_dev, 1e-8, "")];
    claims.extend(pair_claims(&id, &f, 1e-6, 0.0)?);
    Ok(claims)
}

fn ac5() -> srnf_lab::Result<Vec<Claim>> {
    Ok(invariance_scorecard(N, SEED, 20)?.claims)
}

fn ac6(chessboard_gb: Option<f64>) -> srnf_lab::Result<Vec<Claim>> {
    let mut claims = gauss_scorecard(N, SEED)?.claims;
    if let Some(total) = chessboard_gb {
        claims.push(Claim::at_most("Gauss-Bonnet: chessboard", (total - 4.0 * PI).abs(), 1e-2, ""));
    }
    Ok(claims)
}

fn ac7() -> srnf_lab::Result<Vec<Claim>> {
    Ok(sphere_scorecard(N, SEED)?.claims)
}

fn ac8() -> srnf_lab::Result<Vec<Claim>> {
    let card: Scorecard = convex_scorecard(N, SEED)?;
    Ok(card.claims)
}

fn annulus() -> FlatPlace {
    FlatPlace {
        outer: Circle::new([0.0, 0.0], 2.0),
        inner: vec![Circle::new([0.0, 0.0], 1.0)],
    }
}

fn fem_error(mesh: &TriMesh) -> srnf_lab::Result<f64> {
    // u = cos(pi (r - 1)) has zero normal derivative on both circles
    let exact = |p: &[f64; 2]| (PI * (p[0].hypot(p[1]) - 1.0)).cos();
    let lap = |p: &[f64; 2]| {
        let r = p[0].hypot(p[1]);
        -PI * PI * (PI * (r - 1.0)).cos() - PI * (PI * (r - 1.0)).sin() / r
    };
    let area = mesh.total_area();
    let g: Vec<f64> = mesh.nodes.iter().map(lap).collect();
    let gm = integrate(mesh, &g) / area;
    let g: Vec<f64> = g.iter().map(|v| v - gm).collect();
    let u = solve_neumann(mesh, &g, area)?.u;
    let ex: Vec<f64> = mesh.nodes.iter().map(exact).collect();
    let em = integrate(mesh, &ex) / area;
    let sq: Vec<f64> = u.iter().zip(&ex).map(|(u, e)| (u - (e - em)).powi(2)).collect();
    Ok(integrate(mesh, &sq).sqrt())
}

fn curvature_error(n: usize) -> srnf_lab::Result<f64> {
    let (a, b, c) = (0.4, -0.3, 0.2);
    let f = shapes::quadric_graph(n, a, b, c).sample_flat()?.without_jets();
    let g = gauss_map_area_factor_fd(&f)?;
    let mut err = 0.0f64;
    for (p, gp) in f.patches.iter().zip(&g) {
        for (x, v) in p.positions().iter().zip(gp) {
            let (zx, zy) = (2.0 * a * x.x + c * x.y, 2.0 * b * x.y + c * x.x);
            let k = (4.0 * a * b - c * c) / (1.0 + zx * zx + zy * zy).powi(2);
            err = err.max((v - k.abs()).abs());
        }
    }
    Ok(err)
}

fn ac9() -> srnf_lab::Result<Vec<Claim>> {
    let h = 0.1;
    let sampling = [
        CircleSampling {
            count: (4.0 * PI / h).round() as usize,
            offset: 0.0,
        },
        CircleSampling {
            count: (2.0 * PI / h).round() as usize,
            offset: 0.0,
        },
    ];
    let m0 = TriMesh::generate(&annulus(), &sampling, h)?;
    let m1 = m0.refine(&annulus());
    let m2 = m1.refine(&annulus());
    let (e0, e1, e2) = (fem_error(&m0)?, fem_error(&m1)?, fem_error(&m2)?);
    let (c0, c1, c2) = (curvature_error(33)?, curvature_error(65)?, curvature_error(129)?);

    let tube = Tube::for_disc(V2::new(-0.4, 0.1), V2::new(0.5, 0.2), 0.2, 0.7, TubeKind::Hamiltonian);
    let defect = |steps: usize| {
        (0..400)
            .map(|k| {
                let x = V2::new(-0.9 + 0.0045 * k as f64, -0.3 + 0.0015 * k as f64);
                (tube.flow(x, Matrix2::identity(), steps).1.determinant() - 1.0).abs()
            })
            .fold(0.0f64, f64::max)
    };
    let (d64, d128) = (defect(64), defect(128));

    let in_band = |name: &str, r: f64| Claim::at_most(format!("{name}, |ratio - 4|"), (r - 4.0).abs(), 0.5, format!("ratio {r:.3}"));
    Ok(vec![
        in_band("FEM L2 error ratio h -> h/2", e0 / e1),
        in_band("FEM L2 error ratio h/2 -> h/4", e1 / e2),
        in_band("Gauss factor error ratio 33 -> 65", c0 / c1),
        in_band("Gauss factor error ratio 65 -> 129", c1 / c2),
        Claim::above("RK4 det defect ratio 64 -> 128 steps", d64 / d128, 8.0, ""),
    ])
}

fn main() -> ExitCode {
    let mut chessboard_gb = None;
    let results = [
        check("AC1", "cylinder pair at 129^2", Some(5), ac1),
        check("AC2", "paraboloids (1, 4) and (2, 2)", Some(5), ac2),
        check("AC3", "chessboard pair, two discs", Some(120), || ac3(&mut chessboard_gb)),
        check("AC4", "flip pair", Some(30), ac4),
        check("AC5", "invariance and equivariance, 20 seeded triples", Some(60), ac5),
        check("AC6", "Gauss factor and Gauss-Bonnet", None, || ac6(chessboard_gb)),
        check("AC7", "sphere rigidity", None, ac7),
        check("AC8", "convex uniqueness", None, ac8),
        check("AC9", "refinement orders", None, ac9),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
