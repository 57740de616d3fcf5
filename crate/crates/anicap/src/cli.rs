//! The `anicap` command line.
//!
//! Every subcommand prints its residuals to stdout as CSV rows
//! `quantity,value,resolution,order`, where `order` is the two-grid
//! convergence estimate against the previous rung of the resolution ladder.
//! Artifacts go to `--out` (or the config's `output_dir`).
//!
//! Exit codes: 0 success, 2 invalid input, 3 a numerical acceptance check
//! failed, 64 usage error (unknown subcommand or flag), 66 unreadable
//! input, 73 an output could not be written.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anicap_core::bernstein::probe;
use anicap_core::flow::{run_flow_with, FlowRecord};
use anicap_core::parametric::{identity_study, interior_profile, ParametricPatch, ScalarFn};
use anicap_core::shapes::{
    build_truncated_wulff, capillary_tilt, flat_capillary_patch, flat_patch_with_radii, log_graded_radii,
};
use anicap_core::stability::{
    assemble, gaussian_bump, mesh_epsilon, phi_diagnostics, second_variation_fd_check, spectrum, Solver, Verdict,
};
use anicap_core::state::{compute_state, compute_state_with_normals};
use anicap_core::variational::{energy, first_variation, minkowski_residual};
use anicap_core::{Anisotropy, CapillaryMesh, GeometricState, HalfSpaceConfig, Vec3};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;
use serde_json::Value;

use crate::aniso::{setup, AnisoSpec, DerivedConfig};
use crate::experiment::{ConfigError, ExperimentConfig, FlowParams, Mode, SurfaceSource};
use crate::io::{self, IoError, Metadata, StateDump};
use crate::ladder::Table;
use crate::perturb::perturbed_cap;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_ACCEPTANCE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_NO_INPUT: i32 = 66;
pub const EXIT_CANT_CREATE: i32 = 73;

/// Environment variable controlling log verbosity (`error` .. `trace`).
pub const LOG_ENV: &str = "ANICAP_LOG";

#[derive(Debug, Parser)]
#[command(name = "anicap", version, about = "Anisotropic capillary surfaces: Wulff caps, identities, stability and flows")]
pub struct Cli {
    /// Experiment configuration (JSON, checked against the published schema).
    /// Command-line flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Anisotropy: iso, ellip:a,b,c, ellip:<9 entries> or perturbed:eps,
    /// optionally followed by @scale.
    #[arg(long)]
    pub aniso: Option<AnisoSpec>,
    /// Contact parameter.
    #[arg(long, allow_negative_numbers = true)]
    pub omega0: Option<f64>,
    /// Resolution ladder of refinement levels, comma separated. Generated
    /// meshes at level L have 2^L rings; parametric studies use an L x L grid.
    #[arg(long, value_delimiter = ',')]
    pub res: Option<Vec<usize>>,
    /// Read the surface from an OFF or OBJ file instead of generating it.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Relative size of the seeded radial perturbation of generated caps.
    #[arg(long)]
    pub perturb: Option<f64>,
    /// Seed of the perturbation generator (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path (a mesh file for wulff-gen, a directory otherwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a truncated Wulff cap and report its capillary residual.
    WulffGen {
        #[command(flatten)]
        common: Common,
        /// Also dump the geometric state as JSON.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Curvature and boundary data of a surface.
    State {
        #[command(flatten)]
        common: Common,
    },
    /// Energy, volume, wetted area and first-variation residuals.
    Energy {
        #[command(flatten)]
        common: Common,
    },
    /// Normalized residual of the anisotropic Minkowski formula.
    Minkowski {
        #[command(flatten)]
        common: Common,
        /// Fail (exit 3) if the residual at the finest rung exceeds this.
        #[arg(long)]
        max_residual: Option<f64>,
    },
    /// Lowest eigenpairs of the second-variation form.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Number of eigenpairs.
        #[arg(long)]
        k: Option<usize>,
        /// Half-width of the near-zero band (default: mesh dependent).
        #[arg(long)]
        epsilon: Option<f64>,
        /// Fail (exit 3) unless every surface is classified stable.
        #[arg(long)]
        expect_stable: bool,
        /// Write the assembled form in coordinate format.
        #[arg(long)]
        write_matrix: bool,
    },
    /// Jacobi and boundary identities on a parametric capillary cap.
    VerifyIdentities {
        #[command(flatten)]
        common: Common,
        /// Stencil order (2, 4 or 6).
        #[arg(long)]
        order: Option<usize>,
        /// Amplitude of the capillary-preserving bump.
        #[arg(long, allow_negative_numbers = true)]
        bump: Option<f64>,
        /// Angular wavenumber of the bump.
        #[arg(long)]
        wavenumber: Option<u32>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Second variation against finite differences of the energy on a flat
    /// capillary patch.
    SecondVariationCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        radius: Option<f64>,
        /// Bump center `a,b` in patch coordinates.
        #[arg(long, value_delimiter = ',', num_args = 2, allow_negative_numbers = true)]
        center: Option<Vec<f64>>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        steps: Option<Vec<f64>>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Volume-preserving gradient flow of the capillary energy.
    Flow {
        #[command(flatten)]
        common: Common,
        /// Flow parameters as JSON (the `flow` object of a configuration).
        #[arg(long)]
        flow_config: Option<PathBuf>,
        /// Write an OFF checkpoint every this many accepted steps.
        #[arg(long)]
        checkpoint: Option<usize>,
        /// Maximum number of accepted steps.
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Area growth and log-cutoff diagnostics on an unbounded sample.
    BernsteinProbe {
        #[command(flatten)]
        common: Common,
        /// Radius of the sampled half-plane.
        #[arg(long)]
        extent: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        radii: Option<Vec<f64>>,
        /// Cutoff radii `r1,r2`.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        cutoff: Option<Vec<f64>>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Acceptance(String),
    #[error(transparent)]
    Core(#[from] anicap_core::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use anicap_core::Error as E;
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Acceptance(_) => EXIT_ACCEPTANCE,
            CliError::Core(e) => match e {
                E::FitFailed(_) | E::Numerical(_) | E::StepUnderflow(_) | E::Degenerated(_) | E::DerivativeMismatch { .. } => {
                    EXIT_ACCEPTANCE
                }
                _ => EXIT_INVALID,
            },
            CliError::Config(ConfigError::Unreadable { .. }) => EXIT_NO_INPUT,
            CliError::Config(ConfigError::Schema { .. }) => EXIT_INVALID,
            CliError::Io(IoError::Read { .. }) => EXIT_NO_INPUT,
            CliError::Io(IoError::Write { .. }) => EXIT_CANT_CREATE,
            CliError::Io(_) => EXIT_INVALID,
        }
    }
}

type Res<T> = Result<T, CliError>;

/// Parse `argv` (including the program name), run the subcommand and return
/// the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                ErrorKind::InvalidValue | ErrorKind::ValueValidation | ErrorKind::WrongNumberOfValues => EXIT_INVALID,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("anicap: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Res<()> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    match cli.command {
        Command::WulffGen { common, state } => wulff_gen(&Ctx::new(cfg, common)?, state.as_deref()),
        Command::State { common } => state_cmd(&Ctx::new(cfg, common)?),
        Command::Energy { common } => energy_cmd(&Ctx::new(cfg, common)?),
        Command::Minkowski { common, max_residual } => minkowski_cmd(&Ctx::new(cfg, common)?, max_residual),
        Command::Spectrum { common, mode, k, epsilon, expect_stable, write_matrix } => {
            let mut ctx = Ctx::new(cfg, common)?;
            let s = &mut ctx.cfg.spectrum;
            s.mode = mode.unwrap_or(s.mode);
            s.k = k.unwrap_or(s.k);
            s.epsilon = epsilon.or(s.epsilon);
            s.expect_stable |= expect_stable;
            s.write_matrix |= write_matrix;
            spectrum_cmd(&ctx)
        }
        Command::VerifyIdentities { common, order, bump, wavenumber, tol } => {
            let mut ctx = Ctx::new(cfg, common)?;
            let p = &mut ctx.cfg.identities;
            p.order = order.unwrap_or(p.order);
            p.bump = bump.unwrap_or(p.bump);
            p.wavenumber = wavenumber.unwrap_or(p.wavenumber);
            p.tol = tol.unwrap_or(p.tol);
            identities_cmd(&ctx)
        }
        Command::SecondVariationCheck { common, radius, center, sigma, steps, tol } => {
            let mut ctx = Ctx::new(cfg, common)?;
            let p = &mut ctx.cfg.second_variation;
            p.radius = radius.unwrap_or(p.radius);
            if let Some(c) = center {
                p.center = [c[0], c[1]];
            }
            p.sigma = sigma.unwrap_or(p.sigma);
            p.steps = steps.unwrap_or(std::mem::take(&mut p.steps));
            p.tol = tol.unwrap_or(p.tol);
            second_variation_cmd(&ctx)
        }
        Command::Flow { common, flow_config, checkpoint, max_steps } => {
            let mut ctx = Ctx::new(cfg, common)?;
            if let Some(p) = flow_config {
                ctx.cfg.flow = load_flow_params(&p)?;
            }
            let f = &mut ctx.cfg.flow;
            f.checkpoint_every = checkpoint.unwrap_or(f.checkpoint_every);
            f.max_steps = max_steps.unwrap_or(f.max_steps);
            flow_cmd(&ctx)
        }
        Command::BernsteinProbe { common, extent, radii, cutoff } => {
            let mut ctx = Ctx::new(cfg, common)?;
            let b = &mut ctx.cfg.bernstein;
            b.extent = extent.unwrap_or(b.extent);
            b.radii = radii.unwrap_or(std::mem::take(&mut b.radii));
            if let Some(c) = cutoff {
                b.cutoff = [c[0], c[1]];
            }
            bernstein_cmd(&ctx)
        }
    }
}

/// A `flow` object, validated with the experiment schema.
fn load_flow_params(path: &Path) -> Res<FlowParams> {
    let unreadable = |reason: String| ConfigError::Unreadable { path: path.to_path_buf(), reason };
    let text = std::fs::read_to_string(path).map_err(|e| unreadable(e.to_string()))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| unreadable(e.to_string()))?;
    let wrapped = serde_json::json!({ "flow": doc });
    Ok(ExperimentConfig::from_value(wrapped, path)?.flow)
}

/// Resolved inputs of one invocation.
struct Ctx {
    cfg: ExperimentConfig,
    spec: AnisoSpec,
    omega0: f64,
    /// Loaded surface file, if any.
    file: Option<(PathBuf, CapillaryMesh)>,
    out: Option<PathBuf>,
}

/// One rung of a resolution ladder.
struct Sample {
    resolution: usize,
    mesh: CapillaryMesh,
    /// Exact normals of unperturbed generated caps.
    normals: Option<Vec<Vec3>>,
}

impl Sample {
    fn h(&self) -> f64 {
        self.mesh.mean_edge_length()
    }

    fn state(&self, a: &Anisotropy, c: &HalfSpaceConfig) -> Res<GeometricState> {
        Ok(match &self.normals {
            Some(n) => compute_state_with_normals(&self.mesh, n, a, c)?,
            None => compute_state(&self.mesh, a, c)?,
        })
    }
}

fn number_meta(meta: &Metadata, key: &str, path: &Path) -> Res<Option<f64>> {
    meta.get(key)
        .map(|v| v.parse::<f64>().map_err(|_| CliError::Invalid(format!("{}: bad {key} metadata {v:?}", path.display()))))
        .transpose()
}

impl Ctx {
    /// Precedence: command-line flag, then configuration, then the metadata
    /// of an input mesh, then the built-in default.
    fn new(mut cfg: ExperimentConfig, c: Common) -> Res<Self> {
        if let Some(r) = c.res {
            if r.is_empty() || r.contains(&0) {
                return Err(CliError::Invalid("resolutions must be positive".into()));
            }
            cfg.resolution = Some(r);
        }
        if let Some(s) = c.seed {
            cfg.seed = s;
        }
        if let Some(p) = c.mesh {
            cfg.surface = SurfaceSource::File { path: p };
        }
        if let Some(amp) = c.perturb {
            if !(0.0..=0.5).contains(&amp) {
                return Err(CliError::Invalid(format!("perturbation {amp} outside [0, 0.5]")));
            }
            match &mut cfg.surface {
                SurfaceSource::Wulff { perturbation } => *perturbation = amp,
                SurfaceSource::File { .. } => return Err(CliError::Invalid("--perturb applies to generated caps only".into())),
            }
        }
        let (file, meta) = match &cfg.surface {
            SurfaceSource::File { path } => {
                let (m, meta) = io::read_mesh(path)?;
                (Some((path.clone(), m)), meta)
            }
            SurfaceSource::Wulff { .. } => (None, Metadata::new()),
        };
        let meta_path = file.as_ref().map(|f| f.0.clone()).unwrap_or_default();
        let spec = match c.aniso.or(cfg.anisotropy.clone()) {
            Some(s) => s,
            None => match meta.get("aniso") {
                Some(t) => t.parse().map_err(|e| CliError::Invalid(format!("{}: {e}", meta_path.display())))?,
                None => AnisoSpec::default(),
            },
        };
        let omega0 = match c.omega0.or(cfg.omega0) {
            Some(w) => w,
            None => number_meta(&meta, "omega0", &meta_path)?.unwrap_or(0.0),
        };
        let out = c.out.or(cfg.output_dir.clone());
        Ok(Self { cfg, spec, omega0, file, out })
    }

    fn setup(&self) -> Res<(Anisotropy, HalfSpaceConfig)> {
        Ok(setup(&self.spec, self.omega0)?)
    }

    fn ladder(&self, default: &[usize]) -> Vec<usize> {
        self.cfg.resolution.clone().unwrap_or_else(|| default.to_vec())
    }

    fn metadata(&self, level: usize) -> Metadata {
        let mut m = Metadata::new();
        m.insert("generator".into(), "truncated-wulff".into());
        m.insert("aniso".into(), self.spec.to_string());
        m.insert("omega0".into(), self.omega0.to_string());
        m.insert("level".into(), level.to_string());
        if let SurfaceSource::Wulff { perturbation } = self.cfg.surface {
            if perturbation > 0.0 {
                m.insert("perturbation".into(), perturbation.to_string());
                m.insert("seed".into(), self.cfg.seed.to_string());
            }
        }
        m
    }

    /// The surfaces to analyse: the input file, or one generated cap per
    /// rung of the ladder.
    fn samples(&self, a: &Anisotropy, c: &HalfSpaceConfig, default: &[usize]) -> Res<Vec<Sample>> {
        if let Some((_, m)) = &self.file {
            return Ok(vec![Sample { resolution: m.num_faces(), mesh: m.clone(), normals: None }]);
        }
        let amp = match self.cfg.surface {
            SurfaceSource::Wulff { perturbation } => perturbation,
            SurfaceSource::File { .. } => unreachable!("file surfaces are loaded eagerly"),
        };
        self.ladder(default)
            .into_iter()
            .map(|level| {
                let cap = build_truncated_wulff(a, c, rings(level)?)?;
                info!("generated cap at level {level}, {} faces", cap.mesh.num_faces());
                if amp > 0.0 {
                    Ok(Sample { resolution: level, mesh: perturbed_cap(&cap, self.cfg.seed, amp)?, normals: None })
                } else {
                    Ok(Sample { resolution: level, mesh: cap.mesh, normals: Some(cap.normals) })
                }
            })
            .collect()
    }

    fn out_file(&self, name: &str) -> Option<PathBuf> {
        self.out.as_ref().map(|d| d.join(name))
    }

    /// Print the table and, with an output directory, save it as CSV.
    fn emit(&self, table: &Table, name: &str) -> Res<()> {
        print!("{}", io::csv_string(table.rows()));
        if let Some(p) = self.out_file(name) {
            io::write_csv(&p, table.rows())?;
        }
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Res<()> {
        if let Some(p) = self.out_file(name) {
            io::write_json(&p, value)?;
        }
        Ok(())
    }

    fn reject_file(&self, what: &str) -> Res<()> {
        if self.file.is_some() {
            return Err(CliError::Invalid(format!("{what} does not take an input mesh")));
        }
        Ok(())
    }
}

/// Largest refinement level of generated meshes (512 rings).
pub const MAX_LEVEL: usize = 9;

/// Rings of a generated mesh at refinement `level`.
pub fn rings(level: usize) -> Res<usize> {
    if !(1..=MAX_LEVEL).contains(&level) {
        return Err(CliError::Invalid(format!("mesh refinement level {level} outside 1..={MAX_LEVEL}")));
    }
    Ok(1 << level)
}

fn with_suffix(path: &Path, k: usize) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("cap");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("off");
    path.with_file_name(format!("{stem}_{k}.{ext}"))
}

fn wulff_gen(ctx: &Ctx, state_path: Option<&Path>) -> Res<()> {
    ctx.reject_file("wulff-gen")?;
    let (a, c) = ctx.setup()?;
    let samples = ctx.samples(&a, &c, &[3])?;
    let many = samples.len() > 1;
    let mut t = Table::new();
    for s in &samples {
        let st = s.state(&a, &c)?;
        t.value("faces", s.resolution, s.mesh.num_faces() as f64);
        t.residual("capillary_residual", s.resolution, s.h(), st.max_capillary_residual());
        let meta = ctx.metadata(s.resolution);
        if let Some(p) = &ctx.out {
            let p = if many { with_suffix(p, s.resolution) } else { p.clone() };
            io::write_mesh(&p, &s.mesh, &meta)?;
        }
        if let Some(p) = state_path {
            let p = if many { with_suffix(p, s.resolution) } else { p.to_path_buf() };
            io::write_json(&p, &StateDump::new(&st))?;
        }
    }
    print!("{}", io::csv_string(t.rows()));
    Ok(())
}

fn state_cmd(ctx: &Ctx) -> Res<()> {
    let (a, c) = ctx.setup()?;
    let mut t = Table::new();
    for s in ctx.samples(&a, &c, &[3])? {
        let st = s.state(&a, &c)?;
        let h = s.h();
        t.value("mean_anisotropic_curvature", s.resolution, st.mean_hf());
        t.residual("capillary_residual", s.resolution, h, st.max_capillary_residual());
        t.residual("principal_residual", s.resolution, h, st.max_principal_residual());
        t.residual("frame_residual", s.resolution, h, st.max_frame_residual());
        ctx.json(&format!("state_{}.json", s.resolution), &StateDump::new(&st))?;
    }
    ctx.json("config.json", &DerivedConfig::new(&a, &c))?;
    ctx.emit(&t, "state.csv")
}

#[derive(Serialize)]
struct EnergyOut {
    resolution: usize,
    faces: usize,
    energy: f64,
    area_term: f64,
    wetting_term: f64,
    volume: f64,
    wetted_area: f64,
    volume_multiplier: f64,
    projected_gradient_norm: f64,
    camc_residual: f64,
    boundary_density: f64,
}

fn energy_cmd(ctx: &Ctx) -> Res<()> {
    let (a, c) = ctx.setup()?;
    let mut t = Table::new();
    let mut out = Vec::new();
    for s in ctx.samples(&a, &c, &[3])? {
        let e = energy(&s.mesh, &a, &c);
        let v = first_variation(&s.mesh, &a, &c);
        let (r, h) = (s.resolution, s.h());
        t.value("energy", r, e.total);
        t.value("volume", r, e.volume);
        t.value("wetted_area", r, e.wetted_area);
        t.residual("projected_gradient_norm", r, h, v.projected_norm());
        t.residual("camc_residual", r, h, v.camc_residual(&s.mesh));
        t.residual("boundary_density", r, h, v.max_boundary_density());
        out.push(EnergyOut {
            resolution: r,
            faces: s.mesh.num_faces(),
            energy: e.total,
            area_term: e.area_term,
            wetting_term: e.wetting_term,
            volume: e.volume,
            wetted_area: e.wetted_area,
            volume_multiplier: v.volume_multiplier(),
            projected_gradient_norm: v.projected_norm(),
            camc_residual: v.camc_residual(&s.mesh),
            boundary_density: v.max_boundary_density(),
        });
    }
    ctx.json("energy.json", &out)?;
    ctx.emit(&t, "energy.csv")
}

/// Capillary residual above which the Minkowski identity is flagged.
const MINKOWSKI_CAPILLARY_TOL: f64 = 1e-2;

#[derive(Serialize)]
struct MinkowskiOut {
    resolution: usize,
    raw: f64,
    area: f64,
    normalized: f64,
    capillary_residual: f64,
    capillary_warning: bool,
}

fn minkowski_cmd(ctx: &Ctx, max_residual: Option<f64>) -> Res<()> {
    let (a, c) = ctx.setup()?;
    let mut t = Table::new();
    let mut out = Vec::new();
    for s in ctx.samples(&a, &c, &[3])? {
        let st = s.state(&a, &c)?;
        let m = minkowski_residual(&st, &c, MINKOWSKI_CAPILLARY_TOL);
        if m.capillary_warning {
            log::warn!("capillary residual {:e} exceeds {MINKOWSKI_CAPILLARY_TOL:e}; the identity need not hold", m.capillary_residual);
        }
        t.residual("minkowski_residual", s.resolution, s.h(), m.normalized.abs());
        t.residual("capillary_residual", s.resolution, s.h(), m.capillary_residual);
        out.push(MinkowskiOut {
            resolution: s.resolution,
            raw: m.raw,
            area: m.area,
            normalized: m.normalized,
            capillary_residual: m.capillary_residual,
            capillary_warning: m.capillary_warning,
        });
    }
    ctx.json("minkowski.json", &out)?;
    ctx.emit(&t, "minkowski.csv")?;
    if let (Some(tol), Some(last)) = (max_residual, out.last()) {
        if last.normalized.abs() > tol {
            return Err(CliError::Acceptance(format!("Minkowski residual {:e} exceeds {tol:e}", last.normalized.abs())));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct PhiOut {
    integral: f64,
    area: f64,
    q_phi: f64,
    rigidity_gap: f64,
}

#[derive(Serialize)]
struct SpectrumOut {
    resolution: usize,
    faces: usize,
    mode: Mode,
    epsilon: f64,
    solver: String,
    eigenvalues: Vec<f64>,
    residuals: Vec<f64>,
    lambda_min: f64,
    near_zero: usize,
    verdict: &'static str,
    /// Lowest eigenfunction per vertex when the verdict is unstable.
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<Vec<f64>>,
    phi: PhiOut,
}

fn spectrum_cmd(ctx: &Ctx) -> Res<()> {
    let (a, c) = ctx.setup()?;
    let p = &ctx.cfg.spectrum;
    let mut t = Table::new();
    let mut unstable = Vec::new();
    for s in ctx.samples(&a, &c, &[3])? {
        let st = s.state(&a, &c)?;
        let form = assemble(&s.mesh, &st, &a, p.mode.into())?;
        let eps = p.epsilon.unwrap_or_else(|| mesh_epsilon(&s.mesh));
        let rep = spectrum(&form, p.k, eps)?;
        let phi = phi_diagnostics(&form, &st, &c);
        let (r, h) = (s.resolution, s.h());
        t.value("lambda_min", r, rep.lambda_min());
        t.value("near_zero", r, rep.near_zero() as f64);
        t.value("epsilon", r, eps);
        t.residual("eigen_residual", r, h, rep.residuals.iter().fold(0.0, |m, x| m.max(*x)));
        t.residual("q_phi_over_area", r, h, phi.q_phi / phi.area);
        t.residual("rigidity_gap_over_area", r, h, phi.rigidity_gap / phi.area);
        let witness = match &rep.verdict {
            Verdict::Stable => None,
            Verdict::Unstable { witness } => {
                unstable.push((r, rep.lambda_min()));
                Some(witness.clone())
            }
        };
        if p.write_matrix {
            if let Some(path) = ctx.out_file(&format!("q_{r}.txt")) {
                io::write_triplets(&path, &form.q)?;
            }
        }
        let out = SpectrumOut {
            resolution: r,
            faces: s.mesh.num_faces(),
            mode: p.mode,
            epsilon: eps,
            solver: match rep.solver {
                Solver::Dense => "dense".into(),
                Solver::ShiftInvert { shift, iterations } => format!("shift-invert(shift={shift}, iterations={iterations})"),
            },
            lambda_min: rep.lambda_min(),
            near_zero: rep.near_zero(),
            verdict: if witness.is_none() { "stable" } else { "unstable" },
            eigenvalues: rep.eigenvalues,
            residuals: rep.residuals,
            witness,
            phi: PhiOut { integral: phi.integral, area: phi.area, q_phi: phi.q_phi, rigidity_gap: phi.rigidity_gap },
        };
        ctx.json(&format!("spectrum_{r}.json"), &out)?;
    }
    ctx.emit(&t, "spectrum.csv")?;
    if p.expect_stable && !unstable.is_empty() {
        let list: Vec<String> = unstable.iter().map(|(r, l)| format!("resolution {r}: lambda_min {l:e}")).collect();
        return Err(CliError::Acceptance(format!("expected stable, found unstable ({})", list.join("; "))));
    }
    Ok(())
}

/// Inner edge of the capillary-preserving bump in the cap's meridian
/// parameter.
const BUMP_START: f64 = 0.3;

/// Residuals below this on the coarsest grid count as exact.
const EXACT_RESIDUAL: f64 = 1e-12;

#[derive(Serialize)]
struct IdentitiesOut {
    order: usize,
    grids: Vec<usize>,
    spacings: Vec<f64>,
    jacobi: Vec<[f64; 3]>,
    boundary: Vec<[f64; 2]>,
    jacobi_orders: [f64; 3],
    boundary_orders: [f64; 2],
}

fn identities_cmd(ctx: &Ctx) -> Res<()> {
    ctx.reject_file("verify-identities")?;
    let (a, c) = ctx.setup()?;
    let p = &ctx.cfg.identities;
    let (amp, m) = (p.bump, f64::from(p.wavenumber));
    let eta: ScalarFn = Arc::new(move |u, s| amp * (m * u).cos() * interior_profile(s, BUMP_START));
    let patch = ParametricPatch::wulff_cap(&a, &c, (BUMP_START, 1.0), Some(eta))?;
    let grids = ctx.ladder(&[150, 300]);
    if grids.len() < 2 {
        return Err(CliError::Invalid("verify-identities needs at least two grid sizes".into()));
    }
    let study = identity_study(&patch, &a, &c, p.order, &grids)?;
    let names = ["jacobi_f", "jacobi_ef", "jacobi_support", "boundary_support", "boundary_psi"];
    let mut t = Table::new();
    for (i, &n) in grids.iter().enumerate() {
        let vals = study.jacobi[i].iter().chain(&study.boundary[i]);
        for (name, v) in names.iter().zip(vals) {
            t.residual(name, n, study.spacings[i], *v);
        }
    }
    ctx.emit(&t, "identities.csv")?;
    ctx.json(
        "identities.json",
        &IdentitiesOut {
            order: study.order,
            grids: study.grids.clone(),
            spacings: study.spacings.clone(),
            jacobi: study.jacobi.clone(),
            boundary: study.boundary.clone(),
            jacobi_orders: study.jacobi_orders,
            boundary_orders: study.boundary_orders,
        },
    )?;
    let last = grids.len() - 1;
    let finest: Vec<f64> = study.jacobi[last].iter().chain(&study.boundary[last]).copied().collect();
    let orders: Vec<f64> = study.jacobi_orders.iter().chain(&study.boundary_orders).copied().collect();
    let coarsest: Vec<f64> = study.jacobi[0].iter().chain(&study.boundary[0]).copied().collect();
    let mut failures = Vec::new();
    for (((name, v), o), v0) in names.iter().zip(&finest).zip(&orders).zip(&coarsest) {
        if *v > p.tol {
            failures.push(format!("{name} = {v:e} > {:e}", p.tol));
        }
        // Identities that hold exactly (jacobi_f for isotropic F) have no
        // truncation error whose order could be observed.
        if *v0 >= EXACT_RESIDUAL && (o - p.order as f64).abs() > 0.5 {
            failures.push(format!("{name} order {o:.2} vs stencil order {}", p.order));
        }
    }
    if !failures.is_empty() {
        return Err(CliError::Acceptance(failures.join("; ")));
    }
    Ok(())
}

#[derive(Serialize)]
struct SecondVariationOut {
    resolution: usize,
    steps: Vec<f64>,
    quotients: Vec<f64>,
    extrapolated: f64,
    form_value: f64,
    discrepancy: f64,
    continuum_form: f64,
    continuum_discrepancy: f64,
    discretization_gap: f64,
}

fn second_variation_cmd(ctx: &Ctx) -> Res<()> {
    ctx.reject_file("second-variation-check")?;
    let (a, c) = ctx.setup()?;
    let p = &ctx.cfg.second_variation;
    let bump = gaussian_bump((p.center[0], p.center[1]), p.sigma);
    let mut t = Table::new();
    let mut out = Vec::new();
    for k in ctx.ladder(&[5]) {
        let patch = flat_capillary_patch(&a, &c, p.radius, rings(k)?)?;
        let r = second_variation_fd_check(&patch, &a, &c, &bump, &p.steps)?;
        let h = patch.mesh.mean_edge_length();
        t.value("form_value", k, r.form_value);
        t.residual("discrepancy", k, h, r.discrepancy);
        t.residual("continuum_discrepancy", k, h, r.continuum_discrepancy);
        t.residual("discretization_gap", k, h, r.discretization_gap);
        out.push(SecondVariationOut {
            resolution: k,
            steps: r.steps,
            quotients: r.quotients,
            extrapolated: r.extrapolated,
            form_value: r.form_value,
            discrepancy: r.discrepancy,
            continuum_form: r.continuum_form,
            continuum_discrepancy: r.continuum_discrepancy,
            discretization_gap: r.discretization_gap,
        });
    }
    ctx.json("second_variation.json", &out)?;
    ctx.emit(&t, "second_variation.csv")?;
    if let Some(bad) = out.iter().find(|o| o.discrepancy > p.tol) {
        return Err(CliError::Acceptance(format!(
            "second variation discrepancy {:e} exceeds {:e} at resolution {}",
            bad.discrepancy, p.tol, bad.resolution
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct TraceRow {
    step: usize,
    step_size: f64,
    energy: f64,
    volume: f64,
    camc_residual: f64,
    capillary_residual: f64,
    hausdorff: Option<f64>,
}

impl From<&FlowRecord> for TraceRow {
    fn from(r: &FlowRecord) -> Self {
        Self {
            step: r.step,
            step_size: r.step_size,
            energy: r.energy,
            volume: r.volume,
            camc_residual: r.camc_residual,
            capillary_residual: r.capillary_residual,
            hausdorff: r.hausdorff,
        }
    }
}

#[derive(Serialize)]
struct FlowSummary {
    resolution: usize,
    converged: bool,
    steps: usize,
    failure: Option<String>,
    energy_initial: f64,
    energy_final: f64,
    energy_monotone: bool,
    volume_drift: f64,
    camc_residual: f64,
    capillary_residual: f64,
    final_capillary_residual: f64,
    fit_center: [f64; 2],
    fit_scale: f64,
    fit_rms: f64,
    hausdorff: f64,
    diameter: f64,
    hausdorff_over_diameter: f64,
}

fn flow_cmd(ctx: &Ctx) -> Res<()> {
    let (a, c) = ctx.setup()?;
    let fp = &ctx.cfg.flow;
    let cfg = fp.flow_config();
    cfg.validate()?;
    let samples = ctx.samples(&a, &c, &[4])?;
    let s = samples.last().expect("at least one sample");
    let every = fp.checkpoint_every;
    let mut write_err = None;
    let trace = run_flow_with(&s.mesh, &a, &c, &cfg, |k, m, _| {
        if every > 0 && k > 0 && k % every == 0 && write_err.is_none() {
            if let Some(p) = ctx.out_file(&format!("checkpoint_{k:06}.off")) {
                write_err = io::write_mesh(&p, m, &ctx.metadata(s.resolution)).err();
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    let last = trace.last();
    let summary = FlowSummary {
        resolution: s.resolution,
        converged: trace.converged,
        steps: last.step,
        failure: trace.failure.as_ref().map(|e| e.to_string()),
        energy_initial: trace.records[0].energy,
        energy_final: last.energy,
        energy_monotone: trace.energy_monotone(),
        volume_drift: trace.volume_drift(),
        camc_residual: last.camc_residual,
        capillary_residual: last.capillary_residual,
        final_capillary_residual: trace.final_capillary_residual,
        fit_center: trace.fit.center,
        fit_scale: trace.fit.scale,
        fit_rms: trace.fit.rms,
        hausdorff: trace.fit.hausdorff,
        diameter: trace.diameter,
        hausdorff_over_diameter: trace.fit.hausdorff / trace.diameter,
    };
    let mut t = Table::new();
    let r = s.resolution;
    t.value("steps", r, last.step as f64);
    t.value("energy", r, last.energy);
    t.value("camc_residual", r, last.camc_residual);
    t.value("capillary_residual", r, last.capillary_residual);
    t.value("volume_drift", r, summary.volume_drift);
    t.value("hausdorff_over_diameter", r, summary.hausdorff_over_diameter);
    if let Some(p) = ctx.out_file("trace.csv") {
        let rows: Vec<TraceRow> = trace.records.iter().map(TraceRow::from).collect();
        io::write_csv(&p, &rows)?;
    }
    if let Some(p) = ctx.out_file("final.off") {
        io::write_mesh(&p, &trace.mesh, &ctx.metadata(s.resolution))?;
    }
    ctx.json("flow.json", &summary)?;
    ctx.emit(&t, "flow.csv")?;
    let mut failures = Vec::new();
    if let Some(f) = &summary.failure {
        failures.push(f.clone());
    } else if !summary.converged {
        failures.push(format!("not converged after {} steps", summary.steps));
    }
    if !summary.energy_monotone {
        failures.push("energy increased".into());
    }
    if summary.volume_drift > cfg.volume_tol {
        failures.push(format!("volume drift {:e} exceeds {:e}", summary.volume_drift, cfg.volume_tol));
    }
    if !failures.is_empty() {
        return Err(CliError::Acceptance(failures.join("; ")));
    }
    Ok(())
}

#[derive(Serialize)]
struct GrowthRow {
    radius: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct GrowthOut {
    radii: Vec<f64>,
    ratios: Vec<f64>,
    growth_constant: f64,
    r1: f64,
    r2: f64,
    flatness: f64,
    dirichlet: f64,
    cutoff_bound: f64,
}

fn bernstein_cmd(ctx: &Ctx) -> Res<()> {
    let (a, c) = ctx.setup()?;
    let b = &ctx.cfg.bernstein;
    let mesh = match &ctx.file {
        Some((_, m)) => m.clone(),
        None => {
            let beta = capillary_tilt(&a, c.omega0)?;
            flat_patch_with_radii(beta, &log_graded_radii(1.0, b.extent, b.per_efold))?.mesh
        }
    };
    let st = compute_state(&mesh, &a, &c)?;
    let rep = probe(&mesh, &st, &c, &b.radii, (b.cutoff[0], b.cutoff[1]))?;
    let mut t = Table::new();
    let n = mesh.num_faces();
    for (r, q) in rep.radii.iter().zip(&rep.ratios) {
        t.value(&format!("growth_ratio_r{r}"), n, *q);
    }
    t.value("growth_constant", n, rep.growth_constant);
    t.value("flatness", n, rep.flatness);
    t.value("dirichlet", n, rep.dirichlet);
    t.value("cutoff_bound", n, rep.cutoff_bound);
    if let Some(p) = ctx.out_file("growth.csv") {
        let rows: Vec<GrowthRow> = rep.radii.iter().zip(&rep.ratios).map(|(&radius, &ratio)| GrowthRow { radius, ratio }).collect();
        io::write_csv(&p, &rows)?;
    }
    ctx.json(
        "growth.json",
        &GrowthOut {
            radii: rep.radii.clone(),
            ratios: rep.ratios.clone(),
            growth_constant: rep.growth_constant,
            r1: rep.r1,
            r2: rep.r2,
            flatness: rep.flatness,
            dirichlet: rep.dirichlet,
            cutoff_bound: rep.cutoff_bound,
        },
    )?;
    ctx.emit(&t, "bernstein.csv")
}
