//! RC-delay model of a chain of touchpoints.
//!
//! A touch adds one capacitor `c` from a chain node to ground. With a single
//! capacitor the resistive network reduces to a Thevenin source, so the
//! receive-pin voltage is always `v_inf - (v_inf - v0) * exp(-t / tau)` with
//! `tau = c * R_th`. `v0` is the pin voltage with the capacitor shorted and
//! `v_inf` with it open.
//!
//! Topologies (touch index `p` is 1-based):
//! - double-wire: `v_in -> r_1 -> T_1 -> r_2 -> ... -> T_N -> pin -> r_recv -> gnd`
//! - single-wire: `v_in -> r_1 -> pin -> r_recv -> gnd`, and the chain
//!   `pin = T_1 -> r_2 -> T_2 -> ... -> T_N` hangs off the pin.

use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const DEFAULT_V_IN: f64 = 5.0;
pub const DEFAULT_V_THRES: f64 = 2.5;
pub const DEFAULT_C: f64 = 100e-12;
pub const DEFAULT_R_RECV: f64 = 100e6;

/// Reading reported when nothing is touched.
pub const BASELINE: f64 = f64::INFINITY;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WiringMode {
    SingleWire,
    DoubleWire,
}

impl WiringMode {
    /// Number of wiring connection points the mode requires.
    pub fn wiring_points(self) -> usize {
        match self {
            WiringMode::SingleWire => 1,
            WiringMode::DoubleWire => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WiringMode::SingleWire => "single-wire",
            WiringMode::DoubleWire => "double-wire",
        }
    }
}

impl std::str::FromStr for WiringMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single-wire" | "single" => Ok(WiringMode::SingleWire),
            "double-wire" | "double" => Ok(WiringMode::DoubleWire),
            other => Err(Error::Invalid(format!("unknown wiring mode '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    Approx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub mode: WiringMode,
    pub v_in: f64,
    pub v_thres: f64,
    /// `r_1 ..= r_N` in ohms.
    pub r: Vec<f64>,
    pub r_recv: f64,
    pub c: f64,
}

impl CircuitSpec {
    /// Spec with Arduino-like electrical defaults.
    pub fn new(mode: WiringMode, r: Vec<f64>) -> Self {
        CircuitSpec {
            mode,
            v_in: DEFAULT_V_IN,
            v_thres: DEFAULT_V_THRES,
            r,
            r_recv: DEFAULT_R_RECV,
            c: DEFAULT_C,
        }
    }

    /// `r_1 = r1`, `r_2 = ... = r_N = r`.
    pub fn uniform(mode: WiringMode, n: usize, r1: f64, r: f64) -> Self {
        let mut rs = vec![r; n.max(1)];
        rs[0] = r1;
        CircuitSpec::new(mode, rs)
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_r_recv(mut self, r_recv: f64) -> Self {
        self.r_recv = r_recv;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.r.is_empty() {
            return Err(Error::Invalid("circuit needs at least one touchpoint".into()));
        }
        if let Some((i, v)) = self
            .r
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::Invalid(format!("r_{} = {v} must be positive", i + 1)));
        }
        if !(self.r_recv.is_finite() && self.r_recv > 0.0) {
            return Err(Error::Invalid("r_recv must be positive".into()));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::Invalid("capacitance must be positive".into()));
        }
        if !(self.v_thres > 0.0 && self.v_thres < self.v_in && self.v_in.is_finite()) {
            return Err(Error::Invalid("need 0 < v_thres < v_in".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.r.len()
    }

    /// `sum_{j <= p} r_j`.
    pub fn r_till(&self, p: usize) -> f64 {
        self.r[..p].iter().sum()
    }

    /// `sum_{j > p} r_j + r_recv`.
    pub fn r_after(&self, p: usize) -> f64 {
        self.r[p..].iter().sum::<f64>() + self.r_recv
    }

    pub fn r_all(&self) -> f64 {
        self.r.iter().sum::<f64>() + self.r_recv
    }

    /// `ln(v_in / (v_in - v_thres))`.
    pub fn log_ratio(&self) -> f64 {
        (self.v_in / (self.v_in - self.v_thres)).ln()
    }
}

/// First-order response of the receive pin to a touch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RcResponse {
    pub v0: f64,
    pub v_inf: f64,
    pub tau: f64,
    pub r_th: f64,
}

impl RcResponse {
    pub fn voltage(&self, t: f64) -> f64 {
        self.v_inf - (self.v_inf - self.v0) * (-t / self.tau).exp()
    }
}

fn parallel(a: f64, b: f64) -> f64 {
    a * b / (a + b)
}

/// Thevenin reduction for a touch at `p` (1-based).
pub fn response(spec: &CircuitSpec, p: usize) -> RcResponse {
    assert!(p >= 1 && p <= spec.n(), "touch index {p} out of 1..={}", spec.n());
    match spec.mode {
        WiringMode::DoubleWire => {
            let till = spec.r_till(p);
            let after = spec.r_after(p);
            let all = till + after;
            let r_th = till * after / all;
            RcResponse {
                v0: 0.0,
                v_inf: spec.v_in * spec.r_recv / all,
                tau: spec.c * r_th,
                r_th,
            }
        }
        WiringMode::SingleWire => {
            let r1 = spec.r[0];
            let chain = spec.r_till(p) - r1;
            let v_inf = spec.v_in * spec.r_recv / (r1 + spec.r_recv);
            let v0 = if chain > 0.0 {
                let load = parallel(spec.r_recv, chain);
                spec.v_in * load / (r1 + load)
            } else {
                0.0
            };
            let r_th = chain + parallel(r1, spec.r_recv);
            RcResponse {
                v0,
                v_inf,
                tau: spec.c * r_th,
                r_th,
            }
        }
    }
}

/// Receive-pin voltage `t` seconds after touch `p` starts charging.
pub fn transient_exact(spec: &CircuitSpec, p: usize, t: f64) -> f64 {
    response(spec, p).voltage(t)
}

/// Closed-form initial pin voltage for single-wire, `v_in (1 - r_1 / R_till_p)`.
pub fn initial_voltage_approx(spec: &CircuitSpec, p: usize) -> f64 {
    match spec.mode {
        WiringMode::DoubleWire => 0.0,
        WiringMode::SingleWire => spec.v_in * (1.0 - spec.r[0] / spec.r_till(p)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", content = "seconds", rename_all = "kebab-case")]
pub enum ThresholdTime {
    Time(f64),
    /// Steady-state pin voltage never reaches the threshold.
    Unreachable,
    /// The pin is at or above the threshold the instant the touch begins.
    AlreadyAbove,
}

impl ThresholdTime {
    pub fn time(self) -> Option<f64> {
        match self {
            ThresholdTime::Time(t) => Some(t),
            _ => None,
        }
    }
}

/// Time for the pin to reach `v_thres` after touch `p`.
pub fn threshold_time(spec: &CircuitSpec, p: usize, method: Method) -> ThresholdTime {
    match method {
        Method::Approx => threshold_time_approx(spec, p),
        Method::Exact => threshold_time_exact(spec, p),
    }
}

fn threshold_time_approx(spec: &CircuitSpec, p: usize) -> ThresholdTime {
    let till = spec.r_till(p);
    let ratio = spec.v_in / (spec.v_in - spec.v_thres);
    match spec.mode {
        WiringMode::DoubleWire => ThresholdTime::Time(spec.c * till * ratio.ln()),
        WiringMode::SingleWire => {
            let arg = spec.r[0] / till * ratio;
            if arg <= 1.0 {
                ThresholdTime::AlreadyAbove
            } else {
                ThresholdTime::Time(spec.c * till * arg.ln())
            }
        }
    }
}

fn threshold_time_exact(spec: &CircuitSpec, p: usize) -> ThresholdTime {
    let resp = response(spec, p);
    let vt = spec.v_thres;
    if resp.v0 >= vt {
        return ThresholdTime::AlreadyAbove;
    }
    if resp.v_inf <= vt {
        return ThresholdTime::Unreachable;
    }
    let mut lo = 0.0;
    let mut hi = 50.0 * resp.tau;
    while resp.voltage(hi) < vt {
        lo = hi;
        hi *= 2.0;
    }
    // 1 ns absolute, tightened for sub-microsecond constants.
    let tol = 1e-9_f64.min(1e-9 * resp.tau);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if resp.voltage(mid) < vt {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    ThresholdTime::Time(0.5 * (lo + hi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayProfile {
    pub source: Method,
    pub times: Vec<ThresholdTime>,
}

impl DelayProfile {
    pub fn compute(spec: &CircuitSpec, method: Method) -> Self {
        DelayProfile {
            source: method,
            times: (1..=spec.n()).map(|p| threshold_time(spec, p, method)).collect(),
        }
    }

    /// Times with non-reachable entries mapped to `BASELINE`.
    pub fn readings(&self) -> Vec<f64> {
        self.times.iter().map(|t| t.time().unwrap_or(BASELINE)).collect()
    }

    pub fn all_reachable(&self) -> bool {
        self.times.iter().all(|t| t.time().is_some())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub p: usize,
    /// `t_{p+1} - t_p` in seconds (signed).
    pub dt: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Separations {
    pub gaps: Vec<Separation>,
    /// Touch indices without a finite threshold time.
    pub excluded: Vec<usize>,
}

/// Consecutive differences of the threshold times.
pub fn delay_separations(spec: &CircuitSpec, method: Method) -> Separations {
    let prof = DelayProfile::compute(spec, method);
    let mut out = Separations::default();
    for (i, t) in prof.times.iter().enumerate() {
        if t.time().is_none() {
            out.excluded.push(i + 1);
        }
    }
    for p in 1..spec.n() {
        if let (Some(a), Some(b)) = (prof.times[p - 1].time(), prof.times[p].time()) {
            out.gaps.push(Separation { p, dt: b - a });
        }
    }
    out
}

/// Smallest gap between any two of `times` (`None` for fewer than two).
pub fn min_pairwise_gap(times: &[f64]) -> Option<f64> {
    if times.len() < 2 {
        return None;
    }
    let mut s = times.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).map(|w| w[1] - w[0]).reduce(f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSample {
    pub time: f64,
    /// Touch index being held, if any.
    pub touch: Option<usize>,
    /// Measured delay in seconds; `None` stands for the no-touch baseline.
    #[serde(with = "baseline_serde")]
    pub delay: f64,
}

mod baseline_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(super::BASELINE))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub sample_rate: f64,
    pub samples: Vec<SessionSample>,
}

/// Synthetic sensor readings for a scripted sequence of holds.
///
/// Each script entry is `(touch index or None, duration in s)`. Touched
/// samples read `t_thres_p` plus Gaussian noise; untouched ones read
/// `BASELINE`.
pub fn synthesize_session(
    spec: &CircuitSpec,
    script: &[(Option<usize>, f64)],
    sample_rate: f64,
    noise: f64,
    method: Method,
    seed: u64,
) -> Result<Session> {
    spec.validate()?;
    if !(sample_rate > 0.0) {
        return Err(Error::Invalid("sample rate must be positive".into()));
    }
    if !(noise >= 0.0) {
        return Err(Error::Invalid("noise must be non-negative".into()));
    }
    let readings = DelayProfile::compute(spec, method).readings();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let mut samples = Vec::new();
    let mut k: u64 = 0;
    for &(touch, duration) in script {
        if let Some(p) = touch {
            if p == 0 || p > spec.n() {
                return Err(Error::Invalid(format!("script touches unknown point {p}")));
            }
        }
        let count = (duration * sample_rate).round().max(0.0) as u64;
        for _ in 0..count {
            let base = touch.map_or(BASELINE, |p| readings[p - 1]);
            let delay = if base.is_finite() && noise > 0.0 {
                base + normal.sample(&mut rng)
            } else {
                base
            };
            samples.push(SessionSample {
                time: k as f64 / sample_rate,
                touch,
                delay,
            });
            k += 1;
        }
    }
    Ok(Session { sample_rate, samples })
}
