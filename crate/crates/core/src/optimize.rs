use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::links::{mixing_tan_sq, IonEmission, OracleConfig, SpdcTimeBin};
use crate::swaps::SwapTopology;
use crate::timing::{
    direct_protocol_duration, evaluate_hybrid, DirectEvaluation, DurationResult,
    EmissionProbabilities, ScenarioConfig,
};

/// Bounds shared by all three emission probabilities.
pub const MIN_PROBABILITY: f64 = 1e-8;
pub const MAX_PROBABILITY: f64 = 0.25;

const DIRECT_GRID_POINTS: usize = 10_000;
const DIRECT_GRID_TOP: f64 = 1e-1;
const DIRECT_GRID_BOTTOM: f64 = 1e-6;

/// Objective assigned to points the model cannot evaluate.
const UNEVALUABLE: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    /// Total number of simplex starts, the semi-analytic seed included.
    pub starts: usize,
    pub rel_tol: f64,
    pub max_iterations: usize,
    /// Penalty weights applied in turn, each stage restarting from the last.
    pub penalty_weights: Vec<f64>,
    pub seed: u64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            starts: 8,
            rel_tol: 1e-6,
            max_iterations: 2000,
            penalty_weights: vec![1e2, 1e4, 1e6],
            seed: 0,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 {
            return Err(Error::InvalidParameter("at least one start is required".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter(format!("rel_tol = {} must be positive", self.rel_tol)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be positive".into()));
        }
        if self.penalty_weights.is_empty() || self.penalty_weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidParameter("penalty weights must be positive and nonempty".into()));
        }
        Ok(())
    }
}

/// The exponentially spaced emission probabilities scanned by
/// [`optimize_direct`], largest first.
pub fn direct_scan_grid() -> impl Iterator<Item = f64> {
    let ratio = (DIRECT_GRID_BOTTOM / DIRECT_GRID_TOP).powf(1.0 / (DIRECT_GRID_POINTS - 1) as f64);
    (0..DIRECT_GRID_POINTS).map(move |k| DIRECT_GRID_TOP * ratio.powi(k as i32))
}

/// First emission probability along the decreasing scan whose fidelity meets
/// the target.
pub fn optimize_direct(
    cfg: &ScenarioConfig,
    ion_repeater: bool,
    oracle: &OracleConfig,
) -> Result<DirectEvaluation> {
    cfg.validate()?;
    for alpha1_sq in direct_scan_grid() {
        match direct_protocol_duration(cfg, alpha1_sq, ion_repeater, oracle) {
            Ok(eval) if eval.fidelity >= cfg.target_fidelity => return Ok(eval),
            Ok(_) | Err(Error::ZeroProbability(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Err(Error::Infeasible(format!(
        "no emission probability reaches F = {} at {} km",
        cfg.target_fidelity, cfg.distance_km
    )))
}

/// Mixing angle maximizing the product of swap probabilities and the
/// normalized coherence to leading order.
pub fn semi_analytic_theta(eta_m: f64, topo: SwapTopology) -> Result<f64> {
    if !(eta_m > 0.0 && eta_m <= 1.0) {
        return Err(Error::InvalidParameter(format!("eta_m = {eta_m} outside (0, 1]")));
    }
    let tan_sq = eta_m / (eta_m + (1.0 - eta_m) * topo.x()).sqrt();
    Ok(tan_sq.sqrt().atan())
}

/// Edge-node pair probability giving the requested tan²θ for an ion emission
/// probability.
pub fn beta_for_tan_sq(cfg: &ScenarioConfig, alpha1_sq: f64, tan_sq: f64) -> Result<f64> {
    let ion = IonEmission::constant(alpha1_sq, cfg.ion_pulse_duration_s, cfg.time_bins())?;
    let eff = cfg.channel_efficiencies();
    let tan_at = |beta1_sq: f64| -> Result<f64> {
        let spdc = SpdcTimeBin::new(beta1_sq, cfg.bin_duration_s, cfg.correlation_time_s)?;
        mixing_tan_sq(&ion, &spdc, &eff)
    };
    let (mut lo, mut hi) = (0.0, MAX_PROBABILITY);
    if tan_at(hi)? < tan_sq {
        return Err(Error::Domain(format!("tan²θ = {tan_sq} needs a pair probability above {hi}")));
    }
    // tan²θ grows monotonically with the pair probability
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tan_at(mid)? < tan_sq {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Largest equal ion and backbone emission probability on a tenth-decade
/// grid that meets the target, with the edge-node pair probability set by the
/// semi-analytic mixing angle. `None` when nothing on the grid is feasible.
pub fn semi_analytic_seed(cfg: &ScenarioConfig, oracle: &OracleConfig) -> Result<Option<DurationResult>> {
    let theta = semi_analytic_theta(cfg.efficiencies.eta_m, cfg.topology)?;
    let tan_sq = theta.tan().powi(2);
    let mut exponent = -1.0;
    while 10f64.powf(exponent) >= MIN_PROBABILITY {
        let s = 10f64.powf(exponent);
        exponent -= 0.1;
        let beta1_sq = match beta_for_tan_sq(cfg, s, tan_sq) {
            Ok(b) if b >= MIN_PROBABILITY => b,
            Ok(_) | Err(Error::Domain(_)) => continue,
            Err(e) => return Err(e),
        };
        let probs = EmissionProbabilities {
            alpha1_sq: s,
            beta1_sq,
            gamma1_sq: s,
        };
        if let Ok(r) = evaluate_hybrid(cfg, &probs, oracle) {
            if r.fidelity >= cfg.target_fidelity {
                return Ok(Some(r));
            }
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridOptimum {
    pub result: DurationResult,
    /// The semi-analytic starting point, when it was feasible.
    pub seed: Option<DurationResult>,
    pub evaluations: usize,
}

impl HybridOptimum {
    pub fn probabilities(&self) -> EmissionProbabilities {
        self.result.probabilities
    }
}

fn to_log(p: &EmissionProbabilities) -> [f64; 3] {
    [p.alpha1_sq.log10(), p.beta1_sq.log10(), p.gamma1_sq.log10()]
}

fn clamp_log(x: [f64; 3]) -> [f64; 3] {
    x.map(|v| v.clamp(MIN_PROBABILITY.log10(), MAX_PROBABILITY.log10()))
}

fn from_log(x: &[f64; 3]) -> EmissionProbabilities {
    let p = clamp_log(*x).map(|v| 10f64.powf(v).clamp(MIN_PROBABILITY, MAX_PROBABILITY));
    EmissionProbabilities {
        alpha1_sq: p[0],
        beta1_sq: p[1],
        gamma1_sq: p[2],
    }
}

/// Evaluates points in log space, remembering the fastest feasible one.
struct Tracker<'a> {
    cfg: &'a ScenarioConfig,
    oracle: &'a OracleConfig,
    best: Option<DurationResult>,
    evaluations: usize,
}

impl Tracker<'_> {
    fn evaluate(&mut self, x: &[f64; 3]) -> Option<DurationResult> {
        self.evaluations += 1;
        let r = evaluate_hybrid(self.cfg, &from_log(x), self.oracle).ok()?;
        if !r.t_total.is_finite() {
            return None;
        }
        if r.fidelity >= self.cfg.target_fidelity && self.best.as_ref().is_none_or(|b| r.t_total < b.t_total) {
            self.best = Some(r.clone());
        }
        Some(r)
    }

    fn penalized(&mut self, x: &[f64; 3], weight: f64) -> f64 {
        match self.evaluate(x) {
            Some(r) => {
                let deficit = (self.cfg.target_fidelity - r.fidelity).max(0.0);
                r.t_total.ln() + weight * deficit * deficit
            }
            None => UNEVALUABLE,
        }
    }

    fn is_feasible(&mut self, x: &[f64; 3]) -> bool {
        self.evaluate(x)
            .is_some_and(|r| r.fidelity >= self.cfg.target_fidelity)
    }

    /// Moves an infeasible point toward a feasible one by bisection, keeping the
    /// feasible end.
    fn repair(&mut self, infeasible: [f64; 3], feasible: [f64; 3]) {
        let (mut bad, mut good) = (infeasible, feasible);
        for _ in 0..30 {
            let mid = [0, 1, 2].map(|k| 0.5 * (bad[k] + good[k]));
            if self.is_feasible(&mid) {
                good = mid;
            } else {
                bad = mid;
            }
            if (0..3).all(|k| (bad[k] - good[k]).abs() < 1e-6) {
                break;
            }
        }
    }
}

/// Downhill simplex on `f` inside the probability box. Returns the best vertex.
fn nelder_mead(
    f: &mut dyn FnMut(&[f64; 3]) -> f64,
    start: [f64; 3],
    step: f64,
    rel_tol: f64,
    max_iterations: usize,
) -> [f64; 3] {
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    let x0 = clamp_log(start);
    simplex.push((x0, f(&x0)));
    for k in 0..3 {
        let mut x = x0;
        // step inward when the start sits on the upper bound
        x[k] += if x[k] + step > MAX_PROBABILITY.log10() { -step } else { step };
        let x = clamp_log(x);
        simplex.push((x, f(&x)));
    }
    for _ in 0..max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[3].1);
        if (worst - best).abs() <= rel_tol * best.abs().max(1.0) {
            break;
        }
        let x_best = simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| (0..3).map(move |k| (x[k] - x_best[k]).abs()))
            .fold(0.0, f64::max);
        if diameter < 1e-10 {
            break;
        }
        let centroid = [0, 1, 2].map(|k| simplex[..3].iter().map(|(x, _)| x[k]).sum::<f64>() / 3.0);
        let x_worst = simplex[3].0;
        let along = |t: f64| clamp_log([0, 1, 2].map(|k| centroid[k] + t * (x_worst[k] - centroid[k])));
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            simplex[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[3].1 {
                let x = along(-0.5);
                (x, f(&x))
            } else {
                let x = along(0.5);
                (x, f(&x))
            };
            if fc < fr.min(simplex[3].1) {
                simplex[3] = (xc, fc);
            } else {
                for v in simplex.iter_mut().skip(1) {
                    let x = [0, 1, 2].map(|k| x_best[k] + 0.5 * (v.0[k] - x_best[k]));
                    *v = (x, f(&x));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0].0
}

/// Minimizes the total duration over all three emission probabilities subject
/// to the fidelity target.
pub fn optimize_hybrid(
    cfg: &ScenarioConfig,
    oracle: &OracleConfig,
    settings: &OptimizerSettings,
) -> Result<HybridOptimum> {
    cfg.validate()?;
    settings.validate()?;
    let seed = semi_analytic_seed(cfg, oracle)?;
    let mut tracker = Tracker {
        cfg,
        oracle,
        best: seed.clone(),
        evaluations: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let (lo, hi) = (-6.0, -1.0);
    let mut starts: Vec<[f64; 3]> = Vec::with_capacity(settings.starts);
    if let Some(s) = &seed {
        starts.push(to_log(&s.probabilities));
    }
    while starts.len() < settings.starts {
        let x = match &seed {
            // half the random starts explore around the seed
            Some(s) if starts.len() % 2 == 1 => to_log(&s.probabilities).map(|v| v + rng.random_range(-1.0..1.0)),
            _ => [0; 3].map(|_| rng.random_range(lo..hi)),
        };
        starts.push(clamp_log(x));
    }
    for start in starts {
        let mut x = start;
        let mut step = 0.5;
        for &weight in &settings.penalty_weights {
            x = nelder_mead(
                &mut |p| tracker.penalized(p, weight),
                x,
                step,
                settings.rel_tol,
                settings.max_iterations,
            );
            step *= 0.5;
        }
        if !tracker.is_feasible(&x) {
            if let Some(b) = &tracker.best {
                let good = to_log(&b.probabilities);
                tracker.repair(x, good);
            } else {
                // lowering every probability is the generic route toward feasibility
                let floor = [MIN_PROBABILITY.log10(); 3];
                if tracker.is_feasible(&floor) {
                    tracker.repair(x, floor);
                }
            }
        }
    }
    let evaluations = tracker.evaluations;
    match tracker.best {
        Some(result) => Ok(HybridOptimum {
            result,
            seed,
            evaluations,
        }),
        None => Err(Error::Infeasible(format!(
            "no start reaches F = {} at {} km",
            cfg.target_fidelity, cfg.distance_km
        ))),
    }
}
