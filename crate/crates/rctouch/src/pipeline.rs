//! End-to-end run: validate, voxelize, trim, route, embed, simulate, assemble the bundle.

use crate::circuit::{
    delay_separations, synthesize_session, CircuitSpec, DelayProfile, Method, Separations, Session, WiringMode,
};
use crate::error::{Error, Result};
use crate::export::{
    conduit_shell, part_records, trace_solid, ConduitRecord, FabricationBundle, InputRecord, Manifest,
    MANIFEST_FORMAT, MANIFEST_VERSION,
};
use crate::mesh::{trim_shell, validate_mesh, voxelize, MeshIndex, TriangleMesh, VoxelizeParams, DEFAULT_CLEARANCE};
use crate::points::{build_point_geometry, PointParams};
use crate::routing::{build_graph, route_serial, ConduitNetwork, PolylineDoc, RouteParams, DEFAULT_K};
use crate::selection::TouchpointSet;
use crate::trace::{
    estimate_resistance, fill_serpentine, max_resistance, packing_ratio, tune_to_target, Conduit, FillParams,
    ResistivityModel, SerpentinePath,
};
use crate::wire_opt::{
    optimize_single_wire, required_resistance_double, required_resistance_single, Electrical, GridSearchSpec,
    OptimizationResult, SizingSpec,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub r1_min: f64,
    pub r1_max: f64,
    pub r1_step: f64,
    pub r_step: f64,
    pub safety: f64,
    pub near_optimal: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = GridSearchSpec::new(1, 1e6);
        GridConfig {
            r1_min: g.r1_min,
            r1_max: g.r1_max,
            r1_step: g.r1_step,
            r_step: g.r_step,
            safety: g.safety,
            near_optimal: g.near_optimal,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection_path: Option<PathBuf>,
    /// Expected wiring mode; must agree with the selection when set.
    pub mode: Option<WiringMode>,
    pub voxel: VoxelizeParams,
    pub clearance: f64,
    pub k: usize,
    pub route: RouteParams,
    pub points: PointParams,
    pub fill: FillParams,
    pub model: ResistivityModel,
    pub grid: GridConfig,
    pub electrical: Electrical,
    /// Relative tolerance when tuning traces to the optimized resistance.
    pub tolerance: f64,
    /// Minimum neighbour separation used to size low-conductivity legs (s).
    pub delta_t_min: f64,
    /// Require each low-conductivity leg to be long enough for `delta_t_min`.
    pub enforce_min_length: bool,
    /// External resistor for double-wire mode (ohm).
    pub double_wire_r1: f64,
    pub check_self_intersection: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mesh_path: None,
            selection_path: None,
            mode: None,
            voxel: VoxelizeParams::default(),
            clearance: DEFAULT_CLEARANCE,
            k: DEFAULT_K,
            route: RouteParams::default(),
            points: PointParams::default(),
            fill: FillParams::default(),
            model: ResistivityModel::default(),
            grid: GridConfig::default(),
            electrical: Electrical::default(),
            tolerance: 0.05,
            delta_t_min: 5e-6,
            enforce_min_length: true,
            double_wire_r1: 1e6,
            check_self_intersection: true,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Tunables only, as recorded in the manifest.
    pub fn tunables(&self) -> PipelineConfig {
        PipelineConfig {
            mesh_path: None,
            selection_path: None,
            ..self.clone()
        }
    }

    pub fn sizing(&self) -> SizingSpec {
        SizingSpec {
            delta_t_min: self.delta_t_min,
            electrical: self.electrical,
            fill: self.fill,
            model: self.model,
            ..Default::default()
        }
    }

    pub fn grid_spec(&self, n: usize, r_max: f64) -> GridSearchSpec {
        let mut g = GridSearchSpec::new(n, r_max);
        g.r1_min = self.grid.r1_min;
        g.r1_max = self.grid.r1_max;
        g.r1_step = self.grid.r1_step;
        g.r_step = self.grid.r_step;
        g.safety = self.grid.safety;
        g.near_optimal = self.grid.near_optimal;
        g.electrical = self.electrical;
        g
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Voxelize,
    Dijkstra,
    CircuitEmbed,
    Misc,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Voxelize, Stage::Dijkstra, Stage::CircuitEmbed, Stage::Misc];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Voxelize => "voxelize",
            Stage::Dijkstra => "dijkstra",
            Stage::CircuitEmbed => "circuit_embed",
            Stage::Misc => "misc",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub voxelize: f64,
    pub dijkstra: f64,
    pub circuit_embed: f64,
    pub misc: f64,
}

impl StageTimings {
    fn add(&mut self, s: Stage, secs: f64) {
        match s {
            Stage::Voxelize => self.voxelize += secs,
            Stage::Dijkstra => self.dijkstra += secs,
            Stage::CircuitEmbed => self.circuit_embed += secs,
            Stage::Misc => self.misc += secs,
        }
    }

    pub fn rows(&self) -> [(Stage, f64); 4] {
        [
            (Stage::Voxelize, self.voxelize),
            (Stage::Dijkstra, self.dijkstra),
            (Stage::CircuitEmbed, self.circuit_embed),
            (Stage::Misc, self.misc),
        ]
    }

    pub fn total(&self) -> f64 {
        self.voxelize + self.dijkstra + self.circuit_embed + self.misc
    }

    pub fn table(&self) -> String {
        let mut s = String::from("stage\tseconds\n");
        for (st, t) in self.rows() {
            s.push_str(&format!("{}\t{t:.3}\n", st.as_str()));
        }
        s
    }
}

/// Routed network plus statistics of the grids it was routed on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteStage {
    /// Selection with centroids and normals resolved against the model.
    pub selection: TouchpointSet,
    pub network: ConduitNetwork,
    pub voxel_size: f64,
    pub voxels: usize,
    pub interior_voxels: usize,
    pub graph_vertices: usize,
    pub graph_edges: usize,
    pub overlap: Vec<(usize, usize, f64)>,
    pub warnings: Vec<String>,
}

impl RouteStage {
    pub fn conduits(&self) -> Vec<Conduit> {
        self.network
            .segments
            .iter()
            .map(|s| Conduit {
                centerline: s.centerline.clone(),
                diameter: s.diameter,
            })
            .collect()
    }

    pub fn polylines(&self) -> PolylineDoc {
        PolylineDoc::from(&self.network)
    }
}

/// Traces filled into the low-conductivity conduits and the circuit they form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedStage {
    pub circuit: CircuitSpec,
    /// One entry per network segment; `None` for wires.
    pub paths: Vec<Option<SerpentinePath>>,
    pub targets: Vec<Option<f64>>,
    pub optimization: Option<OptimizationResult>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub bundle: FabricationBundle,
    pub route: RouteStage,
    pub embed: EmbedStage,
    pub separations: Separations,
    pub timings: StageTimings,
}

fn staged<T>(stage: &str, hint: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: stage.into(),
        hint: hint.into(),
        source: Box::new(e),
    })
}

/// Reject configurations that cannot run before doing any geometry work.
pub fn precheck(config: &PipelineConfig, selection: &TouchpointSet) -> Result<()> {
    staged("validate", "fix the selection document", selection.validate())?;
    if let Some(m) = config.mode {
        if m != selection.mode {
            return Err(Error::Stage {
                stage: "validate".into(),
                hint: "make the configured mode match the selection".into(),
                source: Box::new(Error::Selection(format!(
                    "configured {} but the selection is {}",
                    m.as_str(),
                    selection.mode.as_str()
                ))),
            });
        }
    }
    Ok(())
}

/// Mesh checks and selection resolution; returns the resolved selection and warnings.
pub fn validate_stage(
    config: &PipelineConfig,
    mesh: &TriangleMesh,
    selection: &TouchpointSet,
) -> Result<(TouchpointSet, Vec<String>)> {
    precheck(config, selection)?;
    let mut selection = selection.clone();
    staged("validate", "check triangle ids in the selection", selection.resolve(Some(mesh)))?;
    let report = staged("validate", "repair the mesh so it is closed", validate_mesh(mesh))?;
    let mut warnings = Vec::new();
    if !report.degenerate_triangles.is_empty() {
        warnings.push(format!("{} degenerate triangles", report.degenerate_triangles.len()));
    }
    let checked = report.require_valid().or_else(|e| match e {
        Error::SelfIntersecting { count } if !config.check_self_intersection => {
            warnings.push(format!("{count} self-intersecting triangle pairs ignored"));
            Ok(())
        }
        e => Err(e),
    });
    staged("validate", "repair the mesh so it is closed and free of self-intersections", checked)?;
    Ok((selection, warnings))
}

/// Minimum leg lengths that hold the resistance needed for `delta_t_min`.
pub fn default_min_lengths(config: &PipelineConfig, selection: &TouchpointSet) -> Result<Vec<f64>> {
    let n = selection.touchpoints.len();
    let wiring = selection.mode.wiring_points();
    let n_seg = n - 1 + wiring;
    let r_req = match selection.mode {
        WiringMode::DoubleWire => required_resistance_double(&config.sizing()),
        WiringMode::SingleWire if n > 1 => required_resistance_single(n, &config.sizing())?.0,
        WiringMode::SingleWire => 0.0,
    };
    let ratio = packing_ratio(config.route.diameter, &config.fill)?;
    let need = r_req / config.model.rho_xy / ratio;
    Ok((0..n_seg)
        .map(|s| {
            let low = s >= 1 && (wiring == 1 || s + 1 < n_seg);
            if low {
                need
            } else {
                0.0
            }
        })
        .collect())
}

/// Voxelize, trim, build the graph and route every leg.
pub fn route_stage(
    config: &PipelineConfig,
    mesh: &TriangleMesh,
    selection: &TouchpointSet,
    timings: &mut StageTimings,
) -> Result<RouteStage> {
    let mut clock = Instant::now();
    let mut lap = |t: &mut StageTimings, s: Stage| {
        t.add(s, clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };
    let index = MeshIndex::new(mesh);
    lap(timings, Stage::Misc);

    let grid = staged("voxelize", "increase the voxel size", voxelize(mesh, &config.voxel))?;
    let trimmed = staged(
        "trim",
        "reduce the clearance or use a thicker model",
        trim_shell(&grid, config.clearance),
    )?;
    lap(timings, Stage::Voxelize);

    let graph = staged("graph", "check k and the trimmed interior", build_graph(&trimmed, config.k))?;
    let mut route = config.route.clone();
    route.seed = config.seed;
    // Surface points always snap across the trimmed shell; warn only beyond it.
    route.snap_warn_voxels += config.clearance / grid.voxel_size;
    if config.enforce_min_length && route.min_lengths.is_empty() {
        route.min_lengths = staged(
            "route",
            "use a wider conduit or fewer touchpoints",
            default_min_lengths(config, selection),
        )?;
    }
    let clearance = config.clearance;
    let free = |p: crate::geom::Vec3| trimmed.contains_point(p) && index.distance(p) >= clearance;
    let network = staged(
        "route",
        "move points apart, lower the clearance, or allow more retries",
        route_serial(&graph, selection, &route, &free),
    )?;
    let overlap = network.overlap_report(&graph);
    lap(timings, Stage::Dijkstra);
    Ok(RouteStage {
        selection: selection.clone(),
        warnings: network.warnings.clone(),
        network,
        voxel_size: grid.voxel_size,
        voxels: grid.len(),
        interior_voxels: trimmed.len(),
        graph_vertices: graph.vertex_count(),
        graph_edges: graph.edge_count(),
        overlap,
    })
}

/// Smallest resistance any low-conductivity conduit can hold at minimum margins.
pub fn conduit_r_max(config: &PipelineConfig, route: &RouteStage) -> Result<Option<f64>> {
    let conduits = route.conduits();
    let mut r_max: Option<f64> = None;
    for (i, _) in route.network.low_segments() {
        let r = max_resistance(&conduits[i], &config.fill, &config.model)?;
        r_max = Some(r_max.map_or(r, |m| m.min(r)));
    }
    Ok(r_max)
}

/// Single-wire grid search bounded by what the routed conduits can hold.
pub fn optimize_stage(config: &PipelineConfig, route: &RouteStage) -> Result<OptimizationResult> {
    let r_max = staged("embed", "use wider or longer conduits", conduit_r_max(config, route))?;
    let n = route.selection.touchpoints.len();
    staged(
        "optimize",
        "use larger conduits or fewer touchpoints",
        optimize_single_wire(&config.grid_spec(n, r_max.unwrap_or(config.grid.r_step))),
    )
}

/// Fill traces: tuned to the optimum in single-wire mode, at minimum margins in double-wire mode.
pub fn embed_stage(
    config: &PipelineConfig,
    route: &RouteStage,
    optimization: Option<OptimizationResult>,
) -> Result<EmbedStage> {
    let conduits = route.conduits();
    let low: Vec<usize> = route.network.low_segments().map(|(i, _)| i).collect();
    let mut paths: Vec<Option<SerpentinePath>> = vec![None; conduits.len()];
    let mut targets: Vec<Option<f64>> = vec![None; conduits.len()];
    let mut warnings = Vec::new();
    let (circuit, optimization) = match route.selection.mode {
        WiringMode::SingleWire => {
            let opt = match optimization {
                Some(o) => o,
                None => optimize_stage(config, route)?,
            };
            if !opt.near_optimal {
                warnings.push(format!(
                    "selected cell separation {:.3e} s is below {:.0}% of the best {:.3e} s",
                    opt.min_separation,
                    100.0 * (1.0 - config.grid.near_optimal),
                    opt.best_score
                ));
            }
            let mut r = vec![opt.r1];
            for &i in &low {
                let tuned = match tune_to_target(&conduits[i], opt.r, config.tolerance, &config.fill, &config.model) {
                    Err(Error::Infeasible(msg)) => {
                        // Row count is discrete; keep the nearest setting and simulate what is built.
                        warnings.push(format!("conduit {i}: {msg}; using the nearest setting"));
                        tune_to_target(&conduits[i], opt.r, f64::INFINITY, &config.fill, &config.model)
                    }
                    r => r,
                };
                let p = staged("embed", "loosen the tolerance or lengthen the conduit", tuned)?;
                r.push(estimate_resistance(&p, &config.model));
                targets[i] = Some(opt.r);
                paths[i] = Some(p);
            }
            (config.electrical.spec(WiringMode::SingleWire, r), Some(opt))
        }
        WiringMode::DoubleWire => {
            let need = required_resistance_double(&config.sizing());
            let mut r = vec![config.double_wire_r1];
            for &i in &low {
                let p = staged("embed", "use a wider conduit", fill_serpentine(&conduits[i], &config.fill))?;
                let est = estimate_resistance(&p, &config.model);
                if est < need {
                    warnings.push(format!(
                        "conduit {i} holds {est:.0} ohm, below the {need:.0} ohm needed for {:.1e} s separation",
                        config.delta_t_min
                    ));
                }
                r.push(est);
                paths[i] = Some(p);
            }
            (config.electrical.spec(WiringMode::DoubleWire, r), None)
        }
    };
    Ok(EmbedStage {
        circuit,
        paths,
        targets,
        optimization,
        warnings,
    })
}

/// Solidify traces, conduits and points and write the manifest.
pub fn assemble(
    config: &PipelineConfig,
    mesh: &TriangleMesh,
    mesh_name: &str,
    route: &RouteStage,
    embed: &EmbedStage,
    mut warnings: Vec<String>,
) -> Result<FabricationBundle> {
    let conduits = route.conduits();
    if embed.paths.len() != conduits.len() {
        return Err(Error::Invalid("trace set does not match the routed network".into()));
    }
    let index = MeshIndex::new(mesh);
    let geometry = staged(
        "points",
        "place points on the surface",
        build_point_geometry(mesh, &index, &route.selection, &config.points),
    )?;
    warnings.extend(route.warnings.iter().cloned());
    warnings.extend(embed.warnings.iter().cloned());
    warnings.extend(geometry.warnings.iter().cloned());
    let traces = TriangleMesh::merge(
        &embed
            .paths
            .iter()
            .zip(&conduits)
            .filter_map(|(p, c)| p.as_ref().map(|p| trace_solid(p, c, config.fill.layer_height)))
            .collect::<Vec<_>>(),
    );
    let shells = TriangleMesh::merge(&conduits.iter().map(|c| conduit_shell(c, 24)).collect::<Vec<_>>());
    let points_solid = geometry.merged();
    let exact = DelayProfile::compute(&embed.circuit, Method::Exact);
    let approx = DelayProfile::compute(&embed.circuit, Method::Approx);
    let min_separation =
        crate::circuit::min_pairwise_gap(&exact.times.iter().filter_map(|t| t.time()).collect::<Vec<_>>());
    let records = route
        .network
        .segments
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let p = embed.paths[i].as_ref();
            ConduitRecord {
                from_id: s.from_id.clone(),
                to_id: s.to_id.clone(),
                conductivity: s.conductivity,
                diameter: s.diameter,
                length: s.length,
                centerline: s.centerline.clone(),
                target_resistance: embed.targets[i],
                resistance: p.map(|p| estimate_resistance(p, &config.model)),
                length_xy: p.map(|p| p.length_xy),
                length_z: p.map(|p| p.length_z),
                ray_margin: p.map(|p| p.ray_margin),
                layer_margin: p.map(|p| p.layer_margin),
            }
        })
        .collect();
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        mode: route.selection.mode,
        input: InputRecord {
            mesh: mesh_name.into(),
            triangles: mesh.triangles.len(),
            vertices: mesh.vertices.len(),
            bounding_box: mesh.bounding_box(),
        },
        selection: route.selection.clone(),
        parameters: serde_json::to_value(config.tunables())?,
        circuit: embed.circuit.clone(),
        conduits: records,
        delay_profile: exact,
        delay_profile_approx: approx,
        min_separation,
        parts: part_records(
            traces.triangles.len(),
            points_solid.triangles.len(),
            shells.triangles.len(),
            mesh.triangles.len(),
        ),
        warnings,
    };
    Ok(FabricationBundle {
        body: mesh.clone(),
        traces,
        points_solid,
        conduit_shells: shells,
        manifest,
    })
}

pub fn run_pipeline(
    config: &PipelineConfig,
    mesh: &TriangleMesh,
    mesh_name: &str,
    selection: &TouchpointSet,
) -> Result<PipelineOutput> {
    let mut timings = StageTimings::default();
    let t = Instant::now();
    let (selection, warnings) = validate_stage(config, mesh, selection)?;
    timings.add(Stage::Misc, t.elapsed().as_secs_f64());

    let route = route_stage(config, mesh, &selection, &mut timings)?;

    let t = Instant::now();
    let embed = embed_stage(config, &route, None)?;
    timings.add(Stage::CircuitEmbed, t.elapsed().as_secs_f64());

    let t = Instant::now();
    let bundle = assemble(config, mesh, mesh_name, &route, &embed, warnings)?;
    let separations = delay_separations(&embed.circuit, Method::Exact);
    timings.add(Stage::Misc, t.elapsed().as_secs_f64());
    Ok(PipelineOutput {
        bundle,
        route,
        embed,
        separations,
        timings,
    })
}

/// Write the bundle, tagging failures with the export stage.
pub fn write_bundle(bundle: &FabricationBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    staged(
        "export",
        "check the output directory and that the design has a low-conductivity conduit",
        crate::export::export_bundle(bundle, dir),
    )
}

/// Read a selection document from disk.
pub fn load_selection(path: &Path) -> Result<TouchpointSet> {
    staged(
        "validate",
        "fix the selection document",
        std::fs::read_to_string(path)
            .map_err(Error::from)
            .and_then(|s| crate::selection::read_selection(&s)),
    )
}

/// Read a mesh from disk; returns it with its file name.
pub fn load_mesh(path: &Path) -> Result<(TriangleMesh, String)> {
    let mesh = staged("validate", "supply a binary or ASCII STL", crate::mesh::read_stl_file(path))?;
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok((mesh, name))
}

/// Load mesh and selection from the configured paths and run.
pub fn run_pipeline_files(config: &PipelineConfig) -> Result<PipelineOutput> {
    let mesh_path = config
        .mesh_path
        .as_ref()
        .ok_or_else(|| Error::Invalid("no mesh path configured".into()))?;
    let sel_path = config
        .selection_path
        .as_ref()
        .ok_or_else(|| Error::Invalid("no selection path configured".into()))?;
    let selection = load_selection(sel_path)?;
    precheck(config, &selection)?;
    let (mesh, name) = load_mesh(mesh_path)?;
    run_pipeline(config, &mesh, &name, &selection)
}

/// Idle, then one hold per touchpoint separated by short idles.
pub fn preview_script(n: usize) -> Vec<(Option<usize>, f64)> {
    let mut script = vec![(None, 1.0)];
    for p in 1..=n {
        script.push((Some(p), 1.0));
        script.push((None, 0.5));
    }
    script
}

/// Noise-free preview session at 64 Hz.
pub fn preview_session(circuit: &CircuitSpec, seed: u64) -> Result<Session> {
    synthesize_session(circuit, &preview_script(circuit.n()), 64.0, 0.0, Method::Exact, seed)
}
