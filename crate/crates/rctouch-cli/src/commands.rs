//! Subcommand bodies. Each returns the text to print; artifacts go to disk.

use crate::args::*;
use rctouch::circuit::{delay_separations, CircuitSpec, DelayProfile, Method};
use rctouch::export::{delay_table, session_table, Manifest};
use rctouch::mesh::validate_mesh;
use rctouch::pipeline::{
    assemble, embed_stage, load_mesh, load_selection, optimize_stage, precheck, preview_script, route_stage,
    run_pipeline, validate_stage, write_bundle, EmbedStage, RouteStage, StageTimings,
};
use rctouch::robustness::{accuracy_table, epsilon_range, mean_interior_width, perturbation_accuracy, PerturbationSpec};
use rctouch::wire_opt::{optimize_single_wire, OptimizationResult};
use rctouch::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// Printed output plus whether the command succeeded.
#[derive(Debug)]
pub struct Outcome {
    pub text: String,
    pub ok: bool,
}

impl From<String> for Outcome {
    fn from(text: String) -> Self {
        Outcome { text, ok: true }
    }
}

pub fn run(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Validate(a) => validate(&a),
        Command::Route(a) => route(&a).map(Into::into),
        Command::Optimize(a) => optimize(&a).map(Into::into),
        Command::Synth(a) => synth(&a).map(Into::into),
        Command::Simulate(a) => simulate(&a).map(Into::into),
        Command::Robustness(a) => robustness(&a).map(Into::into),
        Command::Export(a) => export(&a).map(Into::into),
        Command::Pipeline(a) => pipeline(&a).map(Into::into),
        Command::Serve(_) => Err(Error::Invalid("serve runs through the async entry point".into())),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn validate(a: &ValidateArgs) -> Result<Outcome> {
    let config = a.tunables.resolve()?;
    let (mesh, _) = load_mesh(&a.mesh)?;
    let report = validate_mesh(&mesh)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    let mut ok = report.ok() || (!config.check_self_intersection && report.watertight);
    if let Some(sel) = &a.selection {
        let mut set = load_selection(sel)?;
        precheck(&config, &set)?;
        match set.resolve(Some(&mesh)) {
            Ok(()) => {
                let _ = write!(text, "\nselection: {} ok", set.mode.as_str());
            }
            Err(e) => {
                ok = false;
                let _ = write!(text, "\nselection: {e}");
            }
        }
    }
    Ok(Outcome { text, ok })
}

pub fn route(a: &RouteArgs) -> Result<String> {
    let config = a.tunables.resolve()?;
    let selection = load_selection(&a.selection)?;
    precheck(&config, &selection)?;
    let (mesh, _) = load_mesh(&a.mesh)?;
    let (selection, _) = validate_stage(&config, &mesh, &selection)?;
    let mut timings = StageTimings::default();
    let stage = route_stage(&config, &mesh, &selection, &mut timings)?;
    write_json(&a.out, &stage)?;
    if let Some(p) = &a.polylines {
        write_json(p, &stage.polylines())?;
    }
    let mut s = format!(
        "voxels {} interior {} graph {} vertices {} edges\n",
        stage.voxels, stage.interior_voxels, stage.graph_vertices, stage.graph_edges
    );
    for seg in &stage.network.segments {
        let _ = writeln!(
            s,
            "{} -> {}\t{:?}\t{:.1} mm",
            seg.from_id, seg.to_id, seg.conductivity, seg.length
        );
    }
    for w in &stage.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s.push_str(&timings.table());
    Ok(s)
}

pub fn optimize(a: &OptimizeArgs) -> Result<String> {
    let config = a.tunables.resolve()?;
    let result: OptimizationResult = match (&a.route, a.n, a.r_max) {
        (Some(p), _, _) => optimize_stage(&config, &read_json::<RouteStage>(p)?)?,
        (None, Some(n), Some(r_max)) => optimize_single_wire(&config.grid_spec(n, r_max))?,
        _ => return Err(Error::Invalid("give --route or both --n and --r-max".into())),
    };
    write_json(&a.out, &result)?;
    if let Some(t) = &a.table {
        std::fs::write(t, result.map.to_table())?;
    }
    Ok(format!(
        "r1 {:.0} ohm\tr {:.0} ohm\tmin separation {:.3e} s\tbest {:.3e} s\tmax v0 {:.3} V\tnear optimal {}\n",
        result.r1, result.r, result.min_separation, result.best_score, result.max_v0, result.near_optimal
    ))
}

pub fn synth(a: &SynthArgs) -> Result<String> {
    let config = a.tunables.resolve()?;
    let route: RouteStage = read_json(&a.route)?;
    let opt = a.optimization.as_deref().map(read_json::<OptimizationResult>).transpose()?;
    let embed = embed_stage(&config, &route, opt)?;
    write_json(&a.out, &embed)?;
    let mut s = String::from("segment\ttarget_ohm\tresistance_ohm\n");
    for (i, p) in embed.paths.iter().enumerate() {
        if let Some(p) = p {
            let r = rctouch::trace::estimate_resistance(p, &config.model);
            let t = embed.targets[i].map_or("-".to_string(), |t| format!("{t:.0}"));
            let _ = writeln!(s, "{i}\t{t}\t{r:.0}");
        }
    }
    for w in &embed.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    Ok(s)
}

/// Circuit from an embed artifact, a manifest or a bare circuit document.
pub fn load_circuit(path: &Path) -> Result<CircuitSpec> {
    let v: serde_json::Value = read_json(path)?;
    let spec = if v.get("circuit").is_some() && v.get("paths").is_some() {
        serde_json::from_value::<EmbedStage>(v)?.circuit
    } else if v.get("circuit").is_some() {
        serde_json::from_value::<Manifest>(v)?.circuit
    } else {
        serde_json::from_value::<CircuitSpec>(v)?
    };
    spec.validate()?;
    Ok(spec)
}

pub fn simulate(a: &SimulateArgs) -> Result<String> {
    let spec = load_circuit(&a.source.circuit)?;
    let exact = DelayProfile::compute(&spec, Method::Exact);
    let approx = DelayProfile::compute(&spec, Method::Approx);
    let mut s = delay_table(&exact, &approx);
    s.push_str("pair\tdt_s\n");
    for g in delay_separations(&spec, Method::Exact).gaps {
        let _ = writeln!(s, "{}-{}\t{:.4e}", g.p, g.p + 1, g.dt);
    }
    if let Some(out) = &a.session {
        let script = preview_script(spec.n());
        let session =
            rctouch::circuit::synthesize_session(&spec, &script, a.sample_rate, a.noise, Method::Exact, a.seed)?;
        std::fs::write(out, session_table(&session))?;
    }
    Ok(s)
}

pub fn robustness(a: &RobustnessArgs) -> Result<String> {
    let spec = load_circuit(&a.source.circuit)?;
    let pert = PerturbationSpec {
        sigmas: a.sigmas.iter().map(|s| s * 1e-12).collect(),
        samples: a.samples,
        seed: a.seed,
        ..Default::default()
    };
    let method = if a.exact { Method::Exact } else { Method::Approx };
    let curve = perturbation_accuracy(&spec, &pert, method)?;
    let mut s = accuracy_table(spec.mode.as_str(), &curve);
    s.push_str("touch\tlower_pf\tupper_pf\n");
    for p in 1..=spec.n() {
        let e = epsilon_range(&spec, p)?;
        let _ = writeln!(s, "{p}\t{:.3}\t{:.3}", e.lower * 1e12, e.upper * 1e12);
    }
    if let Ok(w) = mean_interior_width(&spec) {
        let _ = writeln!(s, "mean interior width\t{w:.4} c");
    }
    Ok(s)
}

pub fn export(a: &ExportArgs) -> Result<String> {
    let config = a.tunables.resolve()?;
    let (mesh, name) = load_mesh(&a.mesh)?;
    let route: RouteStage = read_json(&a.route)?;
    let embed: EmbedStage = read_json(&a.embed)?;
    let bundle = assemble(&config, &mesh, &name, &route, &embed, Vec::new())?;
    let files = write_bundle(&bundle, &a.out)?;
    Ok(files.iter().map(|f| format!("{}\n", f.display())).collect())
}

pub fn pipeline(a: &PipelineArgs) -> Result<String> {
    let config = a.tunables.resolve()?;
    let selection = load_selection(&a.selection)?;
    precheck(&config, &selection)?;
    let (mesh, name) = load_mesh(&a.mesh)?;
    let out = run_pipeline(&config, &mesh, &name, &selection)?;
    let files = write_bundle(&out.bundle, &a.out)?;
    let m = &out.bundle.manifest;
    let mut s = delay_table(&m.delay_profile, &m.delay_profile_approx);
    if let Some(sep) = m.min_separation {
        let _ = writeln!(s, "min separation\t{sep:.4e} s");
    }
    for w in &m.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    for f in &files {
        let _ = writeln!(s, "wrote {}", f.display());
    }
    s.push_str(&out.timings.table());
    Ok(s)
}
