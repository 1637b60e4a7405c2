//! Command line definitions. Tunable flags override a config file, which overrides defaults.

use clap::{Args, Parser, Subcommand};
use rctouch::circuit::WiringMode;
use rctouch::pipeline::PipelineConfig;
use rctouch::{Error, Result};
use std::path::PathBuf;

pub const DEFAULT_PORT: u16 = 8737;

#[derive(Debug, Parser)]
#[command(name = "rctouch", version, about = "Design RC-delay touchpoints inside 3D-printable models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a mesh (and optionally a selection) and print the report.
    Validate(ValidateArgs),
    /// Voxelize, trim and route conduits; writes the route artifact.
    Route(RouteArgs),
    /// Single-wire grid search over (r1, r); writes the optimization artifact.
    Optimize(OptimizeArgs),
    /// Fill routed conduits with serpentine traces; writes the embed artifact.
    Synth(SynthArgs),
    /// Threshold times, separations and an optional synthetic session.
    Simulate(SimulateArgs),
    /// Monte-Carlo accuracy under capacitance noise and epsilon ranges.
    Robustness(RobustnessArgs),
    /// Write the four STL parts and the manifest from route and embed artifacts.
    Export(ExportArgs),
    /// Run every stage and write the bundle.
    Pipeline(PipelineArgs),
    /// Serve the local HTTP endpoints used by the design UI.
    Serve(ServeArgs),
}

/// Flags mirroring the pipeline configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct Tunables {
    /// JSON config file; flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Expected wiring mode (single-wire or double-wire).
    #[arg(long)]
    pub mode: Option<WiringMode>,
    /// Voxel edge in mm; overrides --voxel-fraction.
    #[arg(long)]
    pub voxel_size: Option<f64>,
    /// Voxel edge as a fraction of the longest bounding-box side.
    #[arg(long)]
    pub voxel_fraction: Option<f64>,
    #[arg(long)]
    pub voxel_cap: Option<u64>,
    /// Minimum distance (mm) from conduit centerlines to the surface.
    #[arg(long)]
    pub clearance: Option<f64>,
    /// Neighbours per voxel in the routing graph.
    #[arg(long)]
    pub k: Option<usize>,
    /// Extra cost (mm) on edges near earlier legs.
    #[arg(long)]
    pub penalty: Option<f64>,
    /// Conduit diameter in mm.
    #[arg(long)]
    pub diameter: Option<f64>,
    #[arg(long)]
    pub max_retries: Option<usize>,
    /// Do not enforce the minimum leg length needed for separation.
    #[arg(long)]
    pub no_min_length: bool,
    #[arg(long)]
    pub ray_margin: Option<f64>,
    #[arg(long)]
    pub layer_margin: Option<f64>,
    /// Relative tolerance when tuning traces to the optimized resistance.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub rho_xy: Option<f64>,
    #[arg(long)]
    pub rho_z: Option<f64>,
    #[arg(long)]
    pub r1_min: Option<f64>,
    #[arg(long)]
    pub r1_max: Option<f64>,
    #[arg(long)]
    pub r1_step: Option<f64>,
    #[arg(long)]
    pub r_step: Option<f64>,
    /// Fraction of v_thres that every initial voltage must stay under.
    #[arg(long)]
    pub safety: Option<f64>,
    #[arg(long)]
    pub v_in: Option<f64>,
    #[arg(long)]
    pub v_thres: Option<f64>,
    /// Touch capacitance in farads.
    #[arg(long)]
    pub capacitance: Option<f64>,
    #[arg(long)]
    pub r_recv: Option<f64>,
    /// Minimum neighbour separation in seconds used for sizing.
    #[arg(long)]
    pub delta_t_min: Option<f64>,
    /// External resistor for double-wire mode in ohms.
    #[arg(long)]
    pub double_wire_r1: Option<f64>,
    #[arg(long)]
    pub sphere_diameter: Option<f64>,
    #[arg(long)]
    pub cyl_diameter: Option<f64>,
    #[arg(long)]
    pub cyl_length: Option<f64>,
    /// Skip the self-intersection check.
    #[arg(long)]
    pub allow_self_intersection: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Tunables {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
            None => PipelineConfig::default(),
        };
        self.apply(&mut c);
        Ok(c)
    }

    pub fn apply(&self, c: &mut PipelineConfig) {
        fn set<T: Copy>(dst: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *dst = v;
            }
        }
        if self.mode.is_some() {
            c.mode = self.mode;
        }
        if self.voxel_size.is_some() {
            c.voxel.voxel_size = self.voxel_size;
        }
        set(&mut c.voxel.fraction, self.voxel_fraction);
        set(&mut c.voxel.cap, self.voxel_cap);
        set(&mut c.clearance, self.clearance);
        set(&mut c.k, self.k);
        set(&mut c.route.penalty, self.penalty);
        set(&mut c.route.diameter, self.diameter);
        set(&mut c.route.max_retries, self.max_retries);
        if self.no_min_length {
            c.enforce_min_length = false;
        }
        set(&mut c.fill.ray_margin, self.ray_margin);
        set(&mut c.fill.layer_margin, self.layer_margin);
        set(&mut c.tolerance, self.tolerance);
        set(&mut c.model.rho_xy, self.rho_xy);
        set(&mut c.model.rho_z, self.rho_z);
        set(&mut c.grid.r1_min, self.r1_min);
        set(&mut c.grid.r1_max, self.r1_max);
        set(&mut c.grid.r1_step, self.r1_step);
        set(&mut c.grid.r_step, self.r_step);
        set(&mut c.grid.safety, self.safety);
        set(&mut c.electrical.v_in, self.v_in);
        set(&mut c.electrical.v_thres, self.v_thres);
        set(&mut c.electrical.c, self.capacitance);
        set(&mut c.electrical.r_recv, self.r_recv);
        set(&mut c.delta_t_min, self.delta_t_min);
        set(&mut c.double_wire_r1, self.double_wire_r1);
        set(&mut c.points.sphere_diameter, self.sphere_diameter);
        set(&mut c.points.cyl_diameter, self.cyl_diameter);
        set(&mut c.points.cyl_length, self.cyl_length);
        if self.allow_self_intersection {
            c.check_self_intersection = false;
        }
        set(&mut c.seed, self.seed);
    }
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub selection: Option<PathBuf>,
    #[command(flatten)]
    pub tunables: Tunables,
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub selection: PathBuf,
    /// Route artifact (JSON).
    #[arg(long, default_value = "route.json")]
    pub out: PathBuf,
    /// Also write the polyline document here.
    #[arg(long)]
    pub polylines: Option<PathBuf>,
    #[command(flatten)]
    pub tunables: Tunables,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Route artifact; bounds r by what its conduits hold.
    #[arg(long, conflicts_with_all = ["n", "r_max"])]
    pub route: Option<PathBuf>,
    /// Touchpoint count when no route is given.
    #[arg(long, requires = "r_max")]
    pub n: Option<usize>,
    /// Largest per-segment resistance in ohms when no route is given.
    #[arg(long)]
    pub r_max: Option<f64>,
    #[arg(long, default_value = "optimize.json")]
    pub out: PathBuf,
    /// Write the feasibility grid as a tab-separated table.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[command(flatten)]
    pub tunables: Tunables,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub route: PathBuf,
    /// Optimization artifact to tune against (single-wire); computed when absent.
    #[arg(long)]
    pub optimization: Option<PathBuf>,
    #[arg(long, default_value = "embed.json")]
    pub out: PathBuf,
    #[command(flatten)]
    pub tunables: Tunables,
}

#[derive(Debug, Args)]
pub struct CircuitSource {
    /// Embed artifact, manifest or bare circuit document.
    #[arg(long)]
    pub circuit: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: CircuitSource,
    /// Write a synthetic session (one hold per touchpoint) as a table.
    #[arg(long)]
    pub session: Option<PathBuf>,
    /// Sample rate in Hz for the session.
    #[arg(long, default_value_t = 64.0)]
    pub sample_rate: f64,
    /// Timing noise (s RMS) for the session.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RobustnessArgs {
    #[command(flatten)]
    pub source: CircuitSource,
    /// Capacitance sigmas in pF.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0])]
    pub sigmas: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the exact transient instead of the closed-form delay.
    #[arg(long)]
    pub exact: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub route: PathBuf,
    #[arg(long)]
    pub embed: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tunables: Tunables,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub selection: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tunables: Tunables,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "RCTOUCH_PORT", default_value_t = DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, env = "RCTOUCH_HOST", default_value = "127.0.0.1")]
    pub host: String,
    /// Where finished run bundles are written.
    #[arg(long, env = "RCTOUCH_OUTPUT_DIR", default_value = "rctouch-out")]
    pub output_dir: PathBuf,
    #[command(flatten)]
    pub tunables: Tunables,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}
