use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use dfl_core::detector::{default_k_min, default_t_max, FasOptions, FasRow, FASReport};
use dfl_core::lse::{Potential, SpatialGrid};
use dfl_core::propagator::box_norm;
use dfl_core::spinor::energy;
use dfl_core::statphase::gaussian_chi;
use dfl_core::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::result::Result;
use thiserror::Error;

use crate::config::{Scenario, ScenarioConfig};
use crate::report::{Assertion, RunReport};

pub const CONES_CSV_HEADER: &str = "lambda,err_norm,leading_norm,wave_norm";
pub const CONTINUITY_CSV_HEADER: &str = "t,x1,x2,x3,dt_j0,div_j,plus_h,minus_h,plus_half_h";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{scenario}")]
    Core {
        scenario: &'static str,
        #[source]
        source: dfl_core::Error,
    },
    #[error("{scenario}: cannot write {path}")]
    Io {
        scenario: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot build a thread pool: {0}")]
    Threads(String),
}

impl RunError {
    /// Whether the error is the designed failure of a non-contracting solve.
    pub fn is_no_contraction(&self) -> bool {
        matches!(
            self,
            RunError::Core {
                source: dfl_core::Error::NoContraction { .. },
                ..
            }
        )
    }
}

struct Ctx<'a> {
    cfg: &'a ScenarioConfig,
    out_dir: &'a Path,
    name: &'static str,
    assertions: Vec<Assertion>,
    timings: BTreeMap<String, f64>,
    files: Vec<String>,
    notes: Vec<String>,
}

impl Ctx<'_> {
    fn core<T>(&self, r: dfl_core::Result<T>) -> Result<T, RunError> {
        r.map_err(|source| RunError::Core {
            scenario: self.name,
            source,
        })
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> dfl_core::Result<T>) -> Result<T, RunError> {
        let t = Instant::now();
        let out = f();
        *self.timings.entry(stage.to_string()).or_insert(0.0) += t.elapsed().as_secs_f64();
        self.core(out)
    }

    fn write_file(&mut self, file: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), RunError> {
        let path = self.out_dir.join(file);
        let io = |source| RunError::Io {
            scenario: self.name,
            path: path.clone(),
            source,
        };
        let mut w = BufWriter::new(File::create(&path).map_err(io)?);
        body(&mut w).map_err(io)?;
        w.flush().map_err(io)?;
        self.files.push(file.to_string());
        Ok(())
    }

    fn push(&mut self, a: Assertion) {
        self.assertions.push(a);
    }
}

fn io_of(e: dfl_core::Error) -> std::io::Error {
    match e {
        dfl_core::Error::Io(e) => e,
        other => std::io::Error::other(other.to_string()),
    }
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn spin_mix(cfg: &ScenarioConfig) -> (Complex64, Complex64) {
    let s = cfg.packet.spin_mix;
    (Complex64::new(s[0], s[1]), Complex64::new(s[2], s[3]))
}

fn cone_of(cfg: &ScenarioConfig) -> dfl_core::Result<ConeSpec> {
    if cfg.cone.half_angle >= std::f64::consts::PI {
        Ok(ConeSpec::full_sphere())
    } else {
        ConeSpec::new(vec3(cfg.cone.axis), cfg.cone.half_angle)
    }
}

fn v_max(cfg: &ScenarioConfig) -> f64 {
    let k = cfg.grid.k_max;
    k / energy(k * k, cfg.packet.m)
}

fn packet(cfg: &ScenarioConfig, grid: MomentumGrid) -> dfl_core::Result<MomentumAmplitude> {
    gaussian_packet(grid, vec3(cfg.packet.k0), cfg.packet.sigma, cfg.packet.m, spin_mix(cfg))
}

fn k_min_of(cfg: &ScenarioConfig) -> f64 {
    default_k_min(vec3(cfg.packet.k0).norm(), cfg.packet.sigma, cfg.packet.m)
}

/// Far-field packet and its shell expansion resolving detector radius `r`.
fn far_field_packet(cfg: &ScenarioConfig, cone: &ConeSpec, r: f64) -> dfl_core::Result<(MomentumAmplitude, ShellExpansion)> {
    let omega = r + v_max(cfg) * default_t_max(r, k_min_of(cfg), cfg.packet.m);
    let grid = MomentumGrid::far_field(cone, cfg.grid.k_max, omega, cfg.grid.lmax)?;
    let amp = packet(cfg, grid)?;
    let shell = ShellExpansion::new(&amp, cfg.grid.lmax)?;
    Ok((amp, shell))
}

fn fas_options(cfg: &ScenarioConfig, cone: &ConeSpec) -> FasOptions {
    let mut o = FasOptions::for_cone(cone, k_min_of(cfg));
    if cfg.detector.n_theta > 0 {
        o.n_theta = cfg.detector.n_theta;
        o.n_phi = cfg.detector.n_phi;
    }
    o
}

fn write_fas(ctx: &mut Ctx, report: &FASReport) -> Result<(), RunError> {
    ctx.write_file("fas_convergence.csv", |w| report.write_csv(w).map_err(io_of))
}

fn fas_assertions(ctx: &mut Ctx, report: &FASReport, ratio_limit: f64) {
    let last = report.rows.last().unwrap();
    ctx.push(Assertion::holds(
        "abs_disc_non_increasing",
        report.abs_disc_non_increasing(0.0),
        "abs_disc(R) non-increasing over R_list",
    ));
    ctx.push(Assertion::below(
        "abs_disc_ratio_at_max_R",
        last.abs_disc / last.momentum_side,
        ratio_limit,
    ));
    let subst = report
        .rows
        .iter()
        .map(|r| (r.crossing_substituted - r.crossing_direct).abs() / r.crossing_direct.abs())
        .fold(0.0, f64::max);
    ctx.push(Assertion::at_most("substitution_identity", subst, 1e-6));
    ctx.push(Assertion::holds(
        "transit_complete",
        report.rows.iter().all(|r| !r.transit_incomplete),
        "flux at t_max below the transit threshold at every R",
    ));
}

fn free_fas(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let cone = ctx.core(cone_of(cfg))?;
    let opts = fas_options(cfg, &cone);
    let mut rows: Vec<FasRow> = Vec::new();
    let (mut surface_points, mut momentum_nodes) = (0, 0);
    for &r in &cfg.detector.r_list {
        let (amp, shell) = ctx.timed("setup", || far_field_packet(cfg, &cone, r))?;
        momentum_nodes = amp.len();
        surface_points = opts.n_theta * opts.n_phi;
        rows.push(ctx.timed("fas_rows", || fas_row(&shell, &amp, &cone, r, &opts))?);
    }
    let report = FASReport {
        cone,
        rows,
        surface_points,
        momentum_nodes,
        k_min: opts.k_min,
    };
    write_fas(ctx, &report)?;
    fas_assertions(ctx, &report, 0.05);
    let last = report.rows.last().unwrap();
    ctx.push(Assertion::below(
        "spacelike_fraction_at_max_R",
        last.spacelike_part / last.crossing_direct.abs(),
        0.01,
    ));

    let r_full = cfg.detector.full_sphere_radius;
    if r_full > 0.0 {
        let full = ConeSpec::full_sphere();
        let fopts = FasOptions::for_cone(&full, opts.k_min);
        let (amp, shell) = ctx.timed("setup", || far_field_packet(cfg, &cone, r_full))?;
        let row = ctx.timed("full_sphere", || fas_row(&shell, &amp, &full, r_full, &fopts))?;
        ctx.push(Assertion::within("full_sphere_crossing", row.crossing_direct, 0.97, 1.01));
        ctx.notes.push(format!(
            "full sphere at R = {r_full}: crossing {:.9}, signed_disc {:.3e}, tail_bound {:.3e}",
            row.crossing_direct, row.signed_disc, row.tail_bound
        ));
    }

    let lambda_max = *cfg.detector.lambda_list.last().unwrap();
    let (amp, shell) = ctx.timed("setup", || far_field_packet(cfg, &cone, lambda_max))?;
    let cov = ctx.timed("covariant", || covariant_check(&shell, &amp, &cone, &cfg.detector.lambda_list, &opts))?;
    ctx.push(Assertion::at_most(
        "covariant_momentum_side",
        cov.rhs_difference() / cov.momentum_side,
        1e-12,
    ));
    ctx.push(Assertion::at_most(
        "covariant_surface_form",
        cov.max_lhs_relative_difference(),
        1e-6,
    ));
    Ok(())
}

fn potential_fas(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let cone = ctx.core(cone_of(cfg))?;
    let opts = fas_options(cfg, &cone);
    let pc = &cfg.potential;
    let pot = ctx.core(Potential::gaussian(pc.coupling, pc.width))?;
    let sgrid = ctx.core(SpatialGrid::new(pc.half_width, pc.n))?;
    let r0 = cfg.detector.r_list[0];
    let (_, ref_shell) = ctx.timed("setup", || far_field_packet(cfg, &cone, r0))?;
    let table = ctx.timed("lse_table", || {
        ScatterTable::new(&ref_shell, &pot, sgrid, pc.n_radii, cfg.tol.lse, cfg.tol.max_iter)
    })?;
    let max_iter = table.records.iter().map(|r| r.iterations).max().unwrap_or(0);
    ctx.push(Assertion::holds(
        "lse_converged_monotone",
        table.records.iter().all(|r| r.converged && r.monotone()),
        "every shell solve converges with monotone deltas",
    ));
    ctx.notes.push(format!(
        "{} support nodes, {} interpolation radii, at most {max_iter} iterations",
        table.support().len(),
        table.radii().len()
    ));
    let in_amp = ctx.timed("outgoing_amplitude", || {
        packet(cfg, MomentumGrid::momentum_side(&cone, cfg.grid.k_max, cfg.grid.lmax)?)
    })?;
    let out = ctx.timed("outgoing_amplitude", || outgoing_amplitude(&in_amp, &ref_shell, &table))?;
    drop(ref_shell);
    let p_in = in_amp.probability();
    let p_out = out.probability();
    ctx.push(Assertion::at_most(
        "outgoing_probability_conserved",
        (p_out - p_in).abs() / p_in,
        1e-4,
    ));
    ctx.notes.push(format!(
        "momentum side in the cone: incoming {:.9}, outgoing {:.9}",
        in_amp.momentum_side(&cone),
        out.momentum_side(&cone)
    ));

    let mut rows = Vec::new();
    for &r in &cfg.detector.r_list {
        let (_, shell) = ctx.timed("setup", || far_field_packet(cfg, &cone, r))?;
        let state = ctx.timed("setup", || PotentialState::new(&shell, &table))?;
        rows.push(ctx.timed("fas_rows", || fas_row(&state, &out, &cone, r, &opts))?);
    }
    let report = FASReport {
        cone,
        rows,
        surface_points: opts.n_theta * opts.n_phi,
        momentum_nodes: out.len(),
        k_min: opts.k_min,
    };
    write_fas(ctx, &report)?;
    fas_assertions(ctx, &report, 0.10);
    Ok(())
}

fn cones_scaling(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let m = cfg.packet.m;
    let k = vec3(cfg.cones.k);
    let e = energy(k.norm_squared(), m);
    let lambdas = &cfg.cones.lambda_list;
    let lmax_l = *lambdas.last().unwrap();
    let omega = lmax_l * (k.norm() + v_max(cfg) * e);
    let cone = ctx.core(ConeSpec::new(k, cfg.cone.half_angle.min(std::f64::consts::FRAC_PI_2)))?;
    let shell = ctx.timed("setup", || {
        let grid = MomentumGrid::far_field(&cone, cfg.grid.k_max, omega, cfg.grid.lmax)?;
        ShellExpansion::new(&packet(cfg, grid)?, cfg.grid.lmax)
    })?;
    let psi_hat = ctx.core(shell.psi_hat_at(&k))?;
    let mut rows = Vec::new();
    let mut last_psi = Spinor4::ZERO;
    for &l in lambdas {
        let psi = ctx.timed("evaluate", || shell.psi(&(k * l), l * e))?;
        let lead = cones_asymptotic(&psi_hat, &k, m, l);
        rows.push((l, (psi - lead).norm(), lead.norm(), psi.norm()));
        last_psi = psi;
    }
    ctx.write_file("cones_scaling.csv", |w| {
        writeln!(w, "{CONES_CSV_HEADER}")?;
        for r in &rows {
            writeln!(w, "{},{},{},{}", r.0, r.1, r.2, r.3)?;
        }
        Ok(())
    })?;
    let ls: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let leads: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let err_slope = ctx.core(loglog_slope(&ls, &errs))?;
    let lead_slope = ctx.core(loglog_slope(&ls, &leads))?;
    ctx.push(Assertion::at_most("cones_error_slope", err_slope, -1.7));
    ctx.push(Assertion::within("cones_leading_slope", lead_slope, -1.52, -1.48));
    let j = flux(&last_psi).j * lmax_l.powi(3);
    let want = flux_asymptotic(&psi_hat, &k, m);
    ctx.push(Assertion::below(
        "flux_asymptotic_relative_error",
        (j - want).norm() / want.norm(),
        0.05,
    ));
    Ok(())
}

fn statphase_bench(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let sp = &cfg.statphase;
    let m = cfg.packet.m;
    let v = Spinor4::new(
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.5),
        Complex64::new(0.2, 0.0),
        Complex64::new(0.0, -0.1),
    );
    let chi = gaussian_chi(v, sp.chi_r1, sp.chi_r2);
    let breaks = [sp.chi_r1, sp.chi_r2];
    let base = ctx.core(PhaseParams::new(0.0, vec3(sp.y), m, sp.mu_list[0]))?;
    let rep = ctx.timed("stationary", || error_scaling(&base, &sp.mu_list, chi, sp.k_cut, &breaks, 1))?;
    ctx.write_file("statphase.csv", |w| rep.write_csv(w).map_err(io_of))?;
    ctx.push(Assertion::within("statphase_error_slope", rep.slope, -2.6, -1.7));
    let top = rep.rows.last().unwrap().brute.norm();
    ctx.push(Assertion::at_most(
        "statphase_oracle_refinement",
        rep.refinement_change / top,
        1e-8,
    ));
    let far = ctx.core(PhaseParams::new(0.0, vec3(sp.y_far), m, sp.mu_list[0]))?;
    let far_rep = ctx.timed("no_stationary", || error_scaling(&far, &sp.mu_list, chi, sp.k_cut, &breaks, 1))?;
    ctx.push(Assertion::at_most("no_stationary_point_slope", far_rep.slope, -1.7));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.continuity.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let dir = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if dir.norm() < 1e-3 {
            continue;
        }
        let y = dir.normalize() * rng.random_range(0.0..0.95);
        let p = ctx.core(PhaseParams::new(0.0, y, m, 1.0))?;
        if let Some(ks) = k_stationary(&p) {
            worst = worst.max(p.grad_g(&ks).norm());
        }
    }
    ctx.push(Assertion::at_most("k_stationary_gradient_residual", worst, 1e-10));
    Ok(())
}

fn continuity_suite(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let cc = &cfg.continuity;
    let cone = ctx.core(cone_of(cfg))?;
    let k0 = vec3(cfg.packet.k0);
    let v0 = k0 / energy(k0.norm_squared(), cfg.packet.m);
    let t_top = 4.0;
    let span = 2.0;
    let shell = ctx.timed("setup", || {
        let omega = (t_top * v0.norm() + 3.0f64.sqrt() * span + 1.0) + v_max(cfg) * (t_top + 1.0);
        let grid = MomentumGrid::far_field(&cone, cfg.grid.k_max, omega, cfg.grid.lmax)?;
        ShellExpansion::new(&packet(cfg, grid)?, cfg.grid.lmax)
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cc.seed);
    let points: Vec<SpacetimePoint> = (0..cc.points)
        .map(|_| {
            let t = rng.random_range(0.0..t_top);
            let d = Vec3::new(
                rng.random_range(-span..span),
                rng.random_range(-span..span),
                rng.random_range(-span..span),
            );
            SpacetimePoint::new(v0 * t + d, t)
        })
        .collect();
    let h = cc.h;
    let rows = ctx.timed("residuals", || {
        points
            .iter()
            .map(|p| Ok((continuity_residual(&shell, p, h)?, continuity_residual(&shell, p, 0.5 * h)?)))
            .collect::<dfl_core::Result<Vec<_>>>()
    })?;
    ctx.write_file("continuity.csv", |w| {
        writeln!(w, "{CONTINUITY_CSV_HEADER}")?;
        for (p, (a, b)) in points.iter().zip(&rows) {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                p.t, p.x.x, p.x.y, p.x.z, a.dt_j0, a.div_j, a.plus, a.minus, b.plus
            )?;
        }
        Ok(())
    })?;
    let max_plus = rows.iter().map(|r| r.0.plus).fold(0.0, f64::max);
    let max_plus_half = rows.iter().map(|r| r.1.plus).fold(0.0, f64::max);
    let max_minus = rows.iter().map(|r| r.0.minus).fold(0.0, f64::max);
    let scale = rows.iter().map(|r| r.0.dt_j0.abs()).fold(0.0, f64::max);
    ctx.push(Assertion::within(
        "continuity_halving_ratio",
        max_plus / max_plus_half,
        3.5,
        4.5,
    ));
    ctx.push(Assertion::holds(
        "continuity_sign",
        max_plus < 1e-3 * max_minus,
        "d_t j0 + div j vanishes while d_t j0 - div j does not",
    ));
    ctx.notes.push(format!(
        "max |d_t j0 + div j| = {max_plus:.3e} (h = {h}), {max_plus_half:.3e} (h/2); max |d_t j0 - div j| = {max_minus:.3e}; max |d_t j0| = {scale:.3e}"
    ));
    let n0 = ctx.timed("norm", || box_norm(&shell, 6.0 + span, 24, 0.0))?;
    let n1 = ctx.timed("norm", || {
        let c = v0 * t_top;
        // shift the box with the packet by sampling a translated field
        struct Shifted<'a>(&'a ShellExpansion, Vec3);
        impl WaveField for Shifted<'_> {
            fn mass(&self) -> f64 {
                self.0.mass()
            }
            fn psi(&self, x: &Vec3, t: f64) -> dfl_core::Result<Spinor4> {
                self.0.psi(&(x + self.1), t)
            }
        }
        box_norm(&Shifted(&shell, c), 6.0 + span, 24, t_top)
    })?;
    ctx.push(Assertion::at_most("norm_conservation", (n1 - n0).abs(), 1e-4));
    Ok(())
}

/// Runs the configured scenario, writes its files and `report.json` into
/// `out_dir` and returns the report.
pub fn run(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunReport, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| RunError::Threads(e.to_string()))?;
    pool.install(|| run_in_pool(cfg, out_dir))
}

fn run_in_pool(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunReport, RunError> {
    let name = cfg.scenario.name();
    std::fs::create_dir_all(out_dir).map_err(|source| RunError::Io {
        scenario: name,
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut ctx = Ctx {
        cfg,
        out_dir,
        name,
        assertions: Vec::new(),
        timings: BTreeMap::new(),
        files: Vec::new(),
        notes: Vec::new(),
    };
    let t = Instant::now();
    match cfg.scenario {
        Scenario::FreeFas => free_fas(&mut ctx)?,
        Scenario::PotentialFas => potential_fas(&mut ctx)?,
        Scenario::ConesScaling => cones_scaling(&mut ctx)?,
        Scenario::StatphaseBench => statphase_bench(&mut ctx)?,
        Scenario::ContinuitySuite => continuity_suite(&mut ctx)?,
    }
    ctx.timings.insert("total".into(), t.elapsed().as_secs_f64());
    ctx.files.push("report.json".into());
    let report = RunReport {
        scenario: name.into(),
        config: cfg.clone(),
        assertions: ctx.assertions,
        timings: ctx.timings,
        files: ctx.files,
        notes: ctx.notes,
    };
    let path = out_dir.join("report.json");
    report.write_json(&path).map_err(|source| RunError::Io {
        scenario: name,
        path,
        source,
    })?;
    Ok(report)
}
