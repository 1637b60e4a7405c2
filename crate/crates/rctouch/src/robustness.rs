//! Robustness to capacitance drift, SNR and dominance-window classification.

use crate::circuit::{threshold_time, CircuitSpec, Method, WiringMode, DEFAULT_C};
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const SNR_MINIMUM: f64 = 7.0;
pub const SNR_REAL_WORLD: f64 = 15.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub mu_c: f64,
    pub sigmas: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec {
            mu_c: DEFAULT_C,
            sigmas: (0..=5).map(|k| k as f64 * 1e-12).collect(),
            samples: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub sigma: f64,
    pub accuracy: f64,
}

/// Standard-normal draw for sample `i`, independent of sigma and wiring mode.
///
/// Each sample owns a ChaCha stream, so results do not depend on thread
/// count and every sigma reuses the same underlying draws.
fn sample_capacitance(seed: u64, i: usize, mu: f64, sigma: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    loop {
        let z: f64 = StandardNormal.sample(&mut rng);
        let c = mu + sigma * z;
        if c > 0.0 {
            return c;
        }
    }
}

/// Index of the unique nearest calibration time, or `None` on a tie.
pub fn nearest_unique(t: f64, cal: &[f64]) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    let mut tie = false;
    for (q, &tc) in cal.iter().enumerate() {
        let d = (t - tc).abs();
        match best {
            None => best = Some((d, q)),
            Some((bd, _)) if d < bd => {
                best = Some((d, q));
                tie = false;
            }
            Some((bd, _)) if d == bd => tie = true,
            _ => {}
        }
    }
    match (best, tie) {
        (Some((_, q)), false) => Some(q),
        _ => None,
    }
}

fn profile(spec: &CircuitSpec, c: f64, method: Method) -> Vec<f64> {
    let s = spec.clone().with_c(c);
    (1..=s.n())
        .map(|p| threshold_time(&s, p, method).time().unwrap_or(f64::NAN))
        .collect()
}

/// Fraction of correct nearest-calibration matches per sigma.
pub fn perturbation_accuracy(
    spec: &CircuitSpec,
    pert: &PerturbationSpec,
    method: Method,
) -> Result<Vec<AccuracyPoint>> {
    spec.validate()?;
    if pert.samples == 0 || !(pert.mu_c > 0.0) || pert.sigmas.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::Invalid("perturbation needs samples >= 1, mu_c > 0, sigma >= 0".into()));
    }
    let cal = profile(spec, pert.mu_c, method);
    let n = spec.n();
    Ok(pert
        .sigmas
        .iter()
        .map(|&sigma| {
            let correct: usize = (0..pert.samples)
                .into_par_iter()
                .map(|i| {
                    let c = sample_capacitance(pert.seed, i, pert.mu_c, sigma);
                    let rec = profile(spec, c, method);
                    (0..n)
                        .filter(|&p| {
                            rec[p].is_finite()
                                && cal[p].is_finite()
                                && nearest_unique(rec[p], &cal) == Some(p)
                        })
                        .count()
                })
                .sum();
            AccuracyPoint {
                sigma,
                accuracy: correct as f64 / (pert.samples * n) as f64,
            }
        })
        .collect())
}

/// Tab-separated accuracy curve.
pub fn accuracy_table(label: &str, curve: &[AccuracyPoint]) -> String {
    let mut out = String::from("label\tsigma_pf\taccuracy\n");
    for pt in curve {
        out.push_str(&format!("{label}\t{}\t{:.4}\n", pt.sigma * 1e12, pt.accuracy));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRange {
    /// Lower bound on the capacitance shift (F); `-inf` when unconstrained.
    pub lower: f64,
    /// Upper bound (F); `+inf` when unconstrained.
    pub upper: f64,
}

impl EpsilonRange {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, eps: f64) -> bool {
        eps > self.lower && eps < self.upper
    }
}

/// Capacitance shifts `eps` for which touch `p` stays closer to its own
/// calibration time than to its neighbours', using the closed-form times.
///
/// A neighbour `q` with `t_q > t_p` caps `eps` at `c/2 (t_q/t_p - 1)`; one
/// with `t_q < t_p` floors it at `-c/2 (1 - t_q/t_p)`. End touchpoints have a
/// single neighbour.
pub fn epsilon_range(spec: &CircuitSpec, p: usize) -> Result<EpsilonRange> {
    spec.validate()?;
    let n = spec.n();
    if p == 0 || p > n {
        return Err(Error::Invalid(format!("touch index {p} out of 1..={n}")));
    }
    let t = |q: usize| {
        threshold_time(spec, q, Method::Approx)
            .time()
            .ok_or_else(|| Error::Invalid(format!("touch {q} has no closed-form time")))
    };
    let tp = t(p)?;
    let mut range = EpsilonRange {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };
    let half = spec.c / 2.0;
    for q in [p.wrapping_sub(1), p + 1] {
        if q == 0 || q > n {
            continue;
        }
        let ratio = t(q)? / tp;
        if ratio > 1.0 {
            range.upper = range.upper.min(half * (ratio - 1.0));
        } else {
            range.lower = range.lower.max(-half * (1.0 - ratio));
        }
    }
    Ok(range)
}

/// Mean range width over interior touchpoints `2..=N-1`, in units of `c`.
pub fn mean_interior_width(spec: &CircuitSpec) -> Result<f64> {
    let n = spec.n();
    if n < 3 {
        return Err(Error::Invalid("need at least three touchpoints".into()));
    }
    let mut sum = 0.0;
    for p in 2..n {
        sum += epsilon_range(spec, p)?.width();
    }
    Ok(sum / (n - 2) as f64 / spec.c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LadderDirection {
    /// `r_p = a r_{p-1}` starting from `r_1 = base`.
    Ascending,
    /// `r_{p-1} = a r_p` over `r_2..r_N` ending at `r_N = base`.
    Descending,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "kebab-case")]
pub enum R1Rule {
    Explicit(f64),
    /// `r_1 = k * (r_2 + ... + r_N)`.
    MultipleOfSum(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderSpec {
    pub base_r: f64,
    pub ratio: f64,
    pub n: usize,
    pub direction: LadderDirection,
    pub r1: Option<R1Rule>,
}

impl LadderSpec {
    pub fn resistances(&self) -> Result<Vec<f64>> {
        if !(self.ratio > 0.0 && self.base_r > 0.0) || self.n == 0 {
            return Err(Error::Invalid("ladder needs a > 0, base_r > 0, N >= 1".into()));
        }
        let n = self.n;
        let mut r: Vec<f64> = match self.direction {
            LadderDirection::Ascending => (0..n).map(|i| self.base_r * self.ratio.powi(i as i32)).collect(),
            LadderDirection::Descending => {
                let mut v = vec![self.base_r; n];
                for (p, x) in v.iter_mut().enumerate().skip(1) {
                    *x = self.base_r * self.ratio.powi((n - 1 - p) as i32);
                }
                v
            }
        };
        match self.r1 {
            Some(R1Rule::Explicit(v)) => r[0] = v,
            Some(R1Rule::MultipleOfSum(k)) => r[0] = k * r[1..].iter().sum::<f64>(),
            None => {}
        }
        if r.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Invalid("ladder produced a non-positive resistance".into()));
        }
        Ok(r)
    }

    pub fn spec(&self, mode: WiringMode) -> Result<CircuitSpec> {
        Ok(CircuitSpec::new(mode, self.resistances()?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrSample {
    pub mu_untouched: f64,
    pub mu_pressed: f64,
    pub sigma_untouched: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrReport {
    /// `matrix[p][q]` for pressed `p` against untouched `q`; `None` on the diagonal.
    pub matrix: Vec<Vec<Option<f64>>>,
    pub minimum: f64,
    pub below_minimum: bool,
    pub below_real_world: bool,
}

/// Pairwise `|mu_U(q) - mu_P(p)| / sigma_U(q)` over `q != p`.
pub fn compute_snr(samples: &[SnrSample]) -> Result<SnrReport> {
    if samples.len() < 2 {
        return Err(Error::Snr("need at least two touchpoints".into()));
    }
    if let Some(q) = samples.iter().position(|s| !(s.sigma_untouched > 0.0)) {
        return Err(Error::Snr(format!("touchpoint {} has no recorded noise", q + 1)));
    }
    let n = samples.len();
    let mut minimum = f64::INFINITY;
    let matrix = (0..n)
        .map(|p| {
            (0..n)
                .map(|q| {
                    (p != q).then(|| {
                        let v = (samples[q].mu_untouched - samples[p].mu_pressed).abs()
                            / samples[q].sigma_untouched;
                        minimum = minimum.min(v);
                        v
                    })
                })
                .collect()
        })
        .collect();
    Ok(SnrReport {
        matrix,
        minimum,
        below_minimum: minimum < SNR_MINIMUM,
        below_real_world: minimum < SNR_REAL_WORLD,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "label", content = "touch", rename_all = "kebab-case")]
pub enum WindowLabel {
    Touch(usize),
    NoTouch,
    NotRecognized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub label: WindowLabel,
    /// Share of post-trim samples carrying the majority label.
    pub share: f64,
    pub reason: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyParams {
    pub trim: f64,
    pub dominance: f64,
    pub sample_rate: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams {
            trim: 3.5,
            dominance: 0.70,
            sample_rate: 64.0,
        }
    }
}

/// Label one hold window: drop the first `trim` seconds, match each sample to
/// the nearest calibration delay (non-finite readings mean no touch), and
/// accept the majority label only if it covers `dominance` of the samples.
pub fn classify_window(samples: &[f64], calibration: &[f64], params: &ClassifyParams) -> WindowResult {
    let skip = (params.trim * params.sample_rate).round() as usize;
    if samples.len() <= skip {
        return WindowResult {
            label: WindowLabel::NotRecognized,
            share: 0.0,
            reason: Some(format!(
                "window holds {} samples, fewer than the {skip} trimmed",
                samples.len()
            )),
        };
    }
    let kept = &samples[skip..];
    // counts[0] is no-touch, counts[q + 1] touchpoint q, last slot ambiguous.
    let mut counts = vec![0usize; calibration.len() + 2];
    for &x in kept {
        if !x.is_finite() {
            counts[0] += 1;
        } else {
            match nearest_unique(x, calibration) {
                Some(q) => counts[q + 1] += 1,
                None => counts[calibration.len() + 1] += 1,
            }
        }
    }
    let labelled = &counts[..calibration.len() + 1];
    let (idx, &top) = labelled
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .unwrap();
    let share = top as f64 / kept.len() as f64;
    let label = if share + 1e-12 >= params.dominance {
        if idx == 0 {
            WindowLabel::NoTouch
        } else {
            WindowLabel::Touch(idx)
        }
    } else {
        WindowLabel::NotRecognized
    };
    WindowResult {
        label,
        share,
        reason: None,
    }
}

/// Classify consecutive windows of a recorded series.
pub fn classify_session(windows: &[Vec<f64>], calibration: &[f64], params: &ClassifyParams) -> Vec<WindowResult> {
    windows
        .iter()
        .map(|w| classify_window(w, calibration, params))
        .collect()
}

/// Split a synthesized session into windows of constant scripted touch.
pub fn session_windows(session: &crate::circuit::Session) -> Vec<(Option<usize>, Vec<f64>)> {
    let mut out: Vec<(Option<usize>, Vec<f64>)> = Vec::new();
    for s in &session.samples {
        match out.last_mut() {
            Some((t, v)) if *t == s.touch => v.push(s.delay),
            _ => out.push((s.touch, vec![s.delay])),
        }
    }
    out
}
