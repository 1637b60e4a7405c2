//! Resistance selection for single-wire chains and conduit sizing.

use crate::circuit::{
    response, threshold_time, CircuitSpec, Method, WiringMode, DEFAULT_C, DEFAULT_R_RECV,
    DEFAULT_V_IN, DEFAULT_V_THRES,
};
use crate::error::{Error, Result};
use crate::trace::{packing_ratio, FillParams, ResistivityModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Electrical {
    pub v_in: f64,
    pub v_thres: f64,
    pub c: f64,
    pub r_recv: f64,
}

impl Default for Electrical {
    fn default() -> Self {
        Electrical {
            v_in: DEFAULT_V_IN,
            v_thres: DEFAULT_V_THRES,
            c: DEFAULT_C,
            r_recv: DEFAULT_R_RECV,
        }
    }
}

impl Electrical {
    pub fn spec(&self, mode: WiringMode, r: Vec<f64>) -> CircuitSpec {
        CircuitSpec {
            mode,
            v_in: self.v_in,
            v_thres: self.v_thres,
            r,
            r_recv: self.r_recv,
            c: self.c,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchSpec {
    pub r1_min: f64,
    pub r1_max: f64,
    pub r1_step: f64,
    /// Largest in-chain resistance any conduit can hold.
    pub r_max: f64,
    pub r_step: f64,
    pub n: usize,
    pub electrical: Electrical,
    /// Initial pin voltages must stay at or below `safety * v_thres`.
    pub safety: f64,
    /// Scores within this fraction of the best count as near-optimal.
    pub near_optimal: f64,
    pub method: Method,
}

impl GridSearchSpec {
    pub fn new(n: usize, r_max: f64) -> Self {
        GridSearchSpec {
            r1_min: 200e3,
            r1_max: 10e6,
            r1_step: 200e3,
            r_max,
            r_step: 50e3,
            n,
            electrical: Electrical::default(),
            safety: 0.9,
            near_optimal: 0.05,
            method: Method::Exact,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Invalid("need at least one touchpoint".into()));
        }
        if !(self.r1_step > 0.0 && self.r_step > 0.0) {
            return Err(Error::Invalid("grid steps must be positive".into()));
        }
        if !(self.r1_min > 0.0 && self.r1_max >= self.r1_min) {
            return Err(Error::Invalid("r1 range is empty".into()));
        }
        if !(self.r_max >= self.r_step) {
            return Err(Error::Invalid(format!(
                "r_max {:.0} ohm is below one grid step {:.0} ohm",
                self.r_max, self.r_step
            )));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::Invalid("safety must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn r1_values(&self) -> Vec<f64> {
        lattice(self.r1_min, self.r1_max, self.r1_step)
    }

    pub fn r_values(&self) -> Vec<f64> {
        lattice(self.r_step, self.r_max, self.r_step)
    }
}

fn lattice(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| lo + step * i as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Cell {
    /// Hard constraint `r1 / R_till_p > 1 - v_thres / v_in` fails for some p.
    Violation,
    /// Constraint holds but some touch never yields a threshold time.
    Unreachable,
    Feasible {
        /// Smallest gap between any two threshold times (s).
        score: f64,
        /// Largest initial pin voltage over touchpoints (V).
        max_v0: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityMap {
    pub r1_values: Vec<f64>,
    pub r_values: Vec<f64>,
    /// Row-major: `cells[i][j]` is `(r1_values[i], r_values[j])`.
    pub cells: Vec<Vec<Cell>>,
}

impl FeasibilityMap {
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64, Cell)> + '_ {
        self.cells.iter().enumerate().flat_map(move |(i, row)| {
            row.iter()
                .enumerate()
                .map(move |(j, c)| (self.r1_values[i], self.r_values[j], *c))
        })
    }

    /// Tab-separated `r1 r state score max_v0` rows for heatmaps.
    pub fn to_table(&self) -> String {
        let mut out = String::from("r1_ohm\tr_ohm\tstate\tscore_s\tmax_v0\n");
        for (r1, r, c) in self.iter() {
            match c {
                Cell::Violation => out.push_str(&format!("{r1}\t{r}\tviolation\t\t\n")),
                Cell::Unreachable => out.push_str(&format!("{r1}\t{r}\tunreachable\t\t\n")),
                Cell::Feasible { score, max_v0 } => {
                    out.push_str(&format!("{r1}\t{r}\tfeasible\t{score:e}\t{max_v0}\n"))
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub r1: f64,
    pub r: f64,
    pub min_separation: f64,
    pub max_v0: f64,
    /// Best score over all feasible cells.
    pub best_score: f64,
    /// False when no near-optimal cell met the safety margin and the best safe
    /// cell was returned instead.
    pub near_optimal: bool,
    pub map: FeasibilityMap,
}

impl OptimizationResult {
    pub fn spec(&self, n: usize, electrical: &Electrical) -> CircuitSpec {
        let mut r = vec![self.r; n];
        r[0] = self.r1;
        electrical.spec(WiringMode::SingleWire, r)
    }
}

/// `r1 / R_till_p > 1 - v_thres / v_in` for every p (strongest at p = N).
pub fn hard_constraint_holds(r1: f64, r: f64, n: usize, e: &Electrical) -> bool {
    let bound = 1.0 - e.v_thres / e.v_in;
    (1..=n).all(|p| r1 / (r1 + (p as f64 - 1.0) * r) > bound)
}

/// Evaluate one `(r1, r)` cell.
pub fn evaluate_cell(r1: f64, r: f64, n: usize, e: &Electrical, method: Method) -> Cell {
    if !hard_constraint_holds(r1, r, n, e) {
        return Cell::Violation;
    }
    let mut rs = vec![r; n];
    rs[0] = r1;
    let spec = e.spec(WiringMode::SingleWire, rs);
    let mut times = Vec::with_capacity(n);
    let mut max_v0: f64 = 0.0;
    for p in 1..=n {
        match threshold_time(&spec, p, method).time() {
            Some(t) => times.push(t),
            None => return Cell::Unreachable,
        }
        max_v0 = max_v0.max(response(&spec, p).v0);
    }
    let score = crate::circuit::min_pairwise_gap(&times).unwrap_or(0.0);
    Cell::Feasible { score, max_v0 }
}

pub fn evaluate_grid(spec: &GridSearchSpec, r1_values: &[f64], r_values: &[f64]) -> FeasibilityMap {
    let cells = r1_values
        .par_iter()
        .map(|&r1| {
            r_values
                .iter()
                .map(|&r| evaluate_cell(r1, r, spec.n, &spec.electrical, spec.method))
                .collect()
        })
        .collect();
    FeasibilityMap {
        r1_values: r1_values.to_vec(),
        r_values: r_values.to_vec(),
        cells,
    }
}

struct Candidate {
    r1: f64,
    r: f64,
    score: f64,
    max_v0: f64,
}

/// Larger `key`, then larger r, then smaller r1.
fn better(a: &Candidate, b: &Candidate, key: impl Fn(&Candidate) -> f64) -> bool {
    match key(a).total_cmp(&key(b)) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => match a.r.total_cmp(&b.r) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => a.r1 < b.r1,
        },
    }
}

fn pick<'a>(
    cands: impl Iterator<Item = &'a Candidate>,
    key: impl Fn(&Candidate) -> f64 + Copy,
) -> Option<&'a Candidate> {
    cands.fold(None, |acc, c| match acc {
        Some(b) if !better(c, b, key) => Some(b),
        _ => Some(c),
    })
}

pub fn select(spec: &GridSearchSpec, map: FeasibilityMap) -> Result<OptimizationResult> {
    let cands: Vec<Candidate> = map
        .iter()
        .filter_map(|(r1, r, c)| match c {
            Cell::Feasible { score, max_v0 } => Some(Candidate {
                r1,
                r,
                score,
                max_v0,
            }),
            _ => None,
        })
        .collect();
    let best = cands
        .iter()
        .map(|c| c.score)
        .fold(f64::NEG_INFINITY, f64::max);
    if cands.is_empty() {
        return Err(Error::NoFeasibleCell(format!(
            "no cell satisfies the hard constraint for N = {}; use larger conduits or fewer touchpoints",
            spec.n
        )));
    }
    let limit = spec.safety * spec.electrical.v_thres;
    let safe = |c: &&Candidate| c.max_v0 <= limit;
    let near = |c: &&Candidate| c.score >= (1.0 - spec.near_optimal) * best;
    let headroom = |c: &Candidate| limit - c.max_v0;

    let (chosen, near_optimal) =
        match pick(cands.iter().filter(near).filter(safe), headroom) {
            Some(c) => (c, true),
            None => match pick(cands.iter().filter(safe), |c| c.score) {
                Some(c) => (c, false),
                None => {
                    return Err(Error::NoFeasibleCell(format!(
                        "no cell keeps initial voltages below {:.0}% of the threshold for N = {}",
                        spec.safety * 100.0,
                        spec.n
                    )))
                }
            },
        };
    Ok(OptimizationResult {
        r1: chosen.r1,
        r: chosen.r,
        min_separation: chosen.score,
        max_v0: chosen.max_v0,
        best_score: best,
        near_optimal,
        map,
    })
}

/// Grid search over `(r1, r)` maximising the smallest delay gap.
pub fn optimize_single_wire(spec: &GridSearchSpec) -> Result<OptimizationResult> {
    spec.validate()?;
    let map = evaluate_grid(spec, &spec.r1_values(), &spec.r_values());
    select(spec, map)
}

/// Best selection with the in-chain resistance pinned to `r`.
pub fn optimize_fixed_r(spec: &GridSearchSpec, r: f64) -> Result<OptimizationResult> {
    spec.validate()?;
    let map = evaluate_grid(spec, &spec.r1_values(), &[r]);
    select(spec, map)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConduitLengthReport {
    pub n: usize,
    pub mode: WiringMode,
    pub diameter: f64,
    /// Required per-segment resistance (ohm).
    pub resistance: f64,
    /// Trace length needed for that resistance (mm, in-layer resistivity).
    pub trace_length: f64,
    /// Trace mm per conduit mm for this diameter.
    pub packing_ratio: f64,
    /// Minimum conduit length per segment (mm).
    pub conduit_length: f64,
    /// Selected external resistor for single-wire (ohm).
    pub r1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizingSpec {
    pub delta_t_min: f64,
    pub electrical: Electrical,
    pub fill: FillParams,
    pub model: ResistivityModel,
    /// Search resolution for the single-wire resistance (ohm).
    pub resolution: f64,
    /// Upper bound on the searched resistance (ohm).
    pub r_limit: f64,
}

impl Default for SizingSpec {
    fn default() -> Self {
        SizingSpec {
            delta_t_min: 5e-6,
            electrical: Electrical::default(),
            fill: FillParams::default(),
            model: ResistivityModel::default(),
            resolution: 100.0,
            r_limit: 50e6,
        }
    }
}

/// Smallest uniform in-chain resistance whose optimized single-wire layout
/// separates every pair of touchpoints by `delta_t_min`.
pub fn required_resistance_single(n: usize, sizing: &SizingSpec) -> Result<(f64, f64)> {
    let mut grid = GridSearchSpec::new(n, sizing.r_limit);
    grid.electrical = sizing.electrical;
    if n == 1 {
        let res = optimize_fixed_r(&grid, sizing.resolution)?;
        return Ok((sizing.resolution, res.r1));
    }
    let ok = |r: f64| -> Option<f64> {
        optimize_fixed_r(&grid, r)
            .ok()
            .filter(|res| res.min_separation >= sizing.delta_t_min)
            .map(|res| res.r1)
    };
    // Feasibility is a window in r (too small: gaps shrink; too large: no r1
    // on the grid stays safe), so scan geometrically before bisecting.
    let mut lo = 0.0;
    let mut hi = 10e3;
    while ok(hi).is_none() {
        lo = hi;
        hi *= 1.05;
        if hi > sizing.r_limit {
            return Err(Error::Infeasible(format!(
                "N = {n}: no in-chain resistance up to {:.0} ohm separates touches by {:.2e} s",
                sizing.r_limit, sizing.delta_t_min
            )));
        }
    }
    while hi - lo > sizing.resolution {
        let mid = 0.5 * (lo + hi);
        if ok(mid).is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((hi, ok(hi).expect("upper bracket stays feasible")))
}

/// Per-segment resistance giving `delta_t_min` between neighbours in double-wire mode.
pub fn required_resistance_double(sizing: &SizingSpec) -> f64 {
    let e = &sizing.electrical;
    sizing.delta_t_min / (e.c * (e.v_in / (e.v_in - e.v_thres)).ln())
}

/// Minimum conduit length per segment for `n` touchpoints.
pub fn min_conduit_length(
    n: usize,
    mode: WiringMode,
    diameter: f64,
    sizing: &SizingSpec,
) -> Result<ConduitLengthReport> {
    sizing.model.validate()?;
    let (resistance, r1) = match mode {
        WiringMode::DoubleWire => (required_resistance_double(sizing), None),
        WiringMode::SingleWire => {
            let (r, r1) = required_resistance_single(n, sizing)?;
            (r, Some(r1))
        }
    };
    let ratio = packing_ratio(diameter, &sizing.fill)?;
    let trace_length = resistance / sizing.model.rho_xy;
    Ok(ConduitLengthReport {
        n,
        mode,
        diameter,
        resistance,
        trace_length,
        packing_ratio: ratio,
        conduit_length: trace_length / ratio,
        r1,
    })
}

/// Sweep `min_conduit_length` over several touchpoint counts, stopping at the first failure.
pub fn conduit_length_curve(
    ns: &[usize],
    mode: WiringMode,
    diameter: f64,
    sizing: &SizingSpec,
) -> Result<Vec<ConduitLengthReport>> {
    ns.iter()
        .map(|&n| {
            min_conduit_length(n, mode, diameter, sizing).map_err(|e| {
                Error::Infeasible(format!("first failure at N = {n}: {e}"))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_includes_endpoints() {
        let v = lattice(200e3, 10e6, 200e3);
        assert_eq!(v.len(), 50);
        assert!((v[49] - 10e6).abs() < 1e-6);
    }

    #[test]
    fn n2_constraint_boundary() {
        let e = Electrical::default();
        assert!(!hard_constraint_holds(100e3, 100e3, 2, &e));
        assert!(hard_constraint_holds(100.1e3, 100e3, 2, &e));
    }

    #[test]
    fn single_touch_picks_smallest_r1() {
        let res = optimize_single_wire(&GridSearchSpec::new(1, 100e3)).unwrap();
        assert_eq!(res.r1, 200e3);
        assert_eq!(res.r, 100e3);
        assert!(res.map.iter().all(|(_, _, c)| matches!(c, Cell::Feasible { .. })));
    }

    #[test]
    fn double_wire_requirement() {
        let r = required_resistance_double(&SizingSpec::default());
        assert!((r - 72.13e3).abs() < 50.0, "{r}");
    }
}
