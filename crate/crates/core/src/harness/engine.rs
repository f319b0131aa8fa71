//! Monte Carlo evaluation of estimators over signal families.
//!
//! Every replicate owns a random stream derived from `(seed, d, s, rep)`.
//! All members of a family share the replicate's noise vector (common
//! random numbers), and random members draw their signal from a child of
//! that stream. Replicates are evaluated in parallel, collected in index
//! order and reduced serially, so results do not depend on the thread pool.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::estimators::{
    adaptive_fit, adaptive_fit_unknown_sigma, collection_estimator, oracle_estimator, sigma_hat, EstimatorConfig,
    Preset,
};
use crate::model::{splitmix64, ObservationVector, RngStream};
use crate::rates::{is_thresholded_regime, lower_bound_value, phi_l, LowerBound, LowerBoundQuery};
use crate::scalar::Real;

use super::family::{members, Member, MemberSignal};
use super::spec::{Coordinate, EstimatorKind, FamilySpec};

/// Worst-case Monte Carlo risk over a family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskEstimate {
    pub mse: f64,
    /// Sample standard deviation of the squared errors over `√reps`.
    pub std_error: f64,
    pub reps: usize,
    pub seed: u64,
    pub worst_theta_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberRisk {
    pub id: String,
    pub mse: f64,
    pub std_error: f64,
}

/// Everything measured at one coordinate in a single pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateReport {
    pub risk: RiskEstimate,
    pub members: Vec<MemberRisk>,
    /// Counts of `ŝ` for the worst member (selection-based estimators).
    pub s_hat_histogram: Option<BTreeMap<usize, u64>>,
    /// Largest frequency of `{ŝ > s}` over the family.
    pub selection_exceedance: Option<f64>,
    /// Largest frequency of the `ŝ = s₀` fallback over the family.
    pub fallback_frequency: Option<f64>,
    /// Smallest frequency of `{σ ≤ σ̂ ≤ 10σ}` over the family.
    pub sigma_hat_coverage: Option<f64>,
    /// Largest Monte Carlo `E σ̂⁴ / σ⁴` over the family.
    pub sigma_hat_fourth_moment: Option<f64>,
}

/// What is computed on each simulated observation.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Task {
    Estimate(EstimatorKind),
    SigmaOnly,
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    sq_err: f64,
    /// 0 when no selection ran.
    s_hat: usize,
    fallback: bool,
    /// NaN when `σ̂` was not computed.
    sigma_hat: f64,
}

struct Plan<'a> {
    d: usize,
    s: usize,
    sigma: f64,
    task: Task,
    config: &'a EstimatorConfig,
    members: &'a [Member],
    reps: usize,
    seed: u64,
    key: u64,
}

/// Stream key of a grid coordinate; depends on the values of `d` and `s`,
/// not on their position in the grid.
pub fn coordinate_key(d: usize, s: usize) -> u64 {
    splitmix64(splitmix64(d as u64) ^ s as u64)
}

/// Random stream of replicate `rep` at the coordinate with key `key`.
pub fn replicate_stream(seed: u64, key: u64, rep: usize) -> RngStream {
    RngStream::new(seed, splitmix64(key ^ splitmix64(rep as u64)))
}

/// The signal stream of family member `member` within a replicate.
pub fn member_stream(stream: &RngStream, member: usize) -> RngStream {
    stream.child(member as u64 + 1)
}

/// Streaming mean and variance (Welford), immune to accumulator overflow.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

fn evaluate(task: Task, y: &ObservationVector<f64>, s: usize, sigma: f64, cfg: &EstimatorConfig) -> Result<(f64, Outcome)> {
    let mut out = Outcome {
        sq_err: 0.0,
        s_hat: 0,
        fallback: false,
        sigma_hat: f64::NAN,
    };
    let estimate = match task {
        Task::SigmaOnly => {
            out.sigma_hat = sigma_hat(y)?;
            0.0
        }
        Task::Estimate(kind) => match kind {
            EstimatorKind::Oracle => oracle_estimator(y, s, sigma)?,
            EstimatorKind::Collection => collection_estimator(y, s, sigma, cfg)?,
            EstimatorKind::Adaptive => {
                let fit = adaptive_fit(y, sigma, cfg)?;
                out.s_hat = fit.s_hat;
                out.fallback = fit.fallback_used;
                fit.estimate
            }
            EstimatorKind::AdaptiveUnknownSigma => {
                let fit = adaptive_fit_unknown_sigma(y, cfg)?;
                out.s_hat = fit.s_hat;
                out.fallback = fit.fallback_used;
                out.sigma_hat = fit.sigma_hat.unwrap_or(f64::NAN);
                fit.estimate
            }
            EstimatorKind::Zero => 0.0,
        },
    };
    Ok((estimate, out))
}

fn replicate(plan: &Plan<'_>, rep: usize) -> Result<Vec<Outcome>> {
    let stream = replicate_stream(plan.seed, plan.key, rep);
    let mut gen = stream.generator();
    let noise: Vec<f64> = (0..plan.d).map(|_| f64::standard_normal(&mut gen)).collect();
    plan.members
        .iter()
        .enumerate()
        .map(|(i, member)| {
            let theta = member.draw(plan.d, plan.s, plan.sigma, &member_stream(&stream, i))?;
            let values: Vec<f64> = theta.iter().zip(&noise).map(|(&t, &z)| t + plan.sigma * z).collect();
            let target: f64 = theta.iter().sum();
            let y = ObservationVector::new(values)?.with_sigma(plan.sigma);
            let (estimate, mut out) = evaluate(plan.task, &y, plan.s, plan.sigma, plan.config)?;
            let err = estimate - target;
            out.sq_err = err * err;
            Ok(out)
        })
        .collect()
}

/// Per-replicate outcomes, `outcomes[rep][member]`.
fn simulate(plan: &Plan<'_>) -> Result<Vec<Vec<Outcome>>> {
    (0..plan.reps).into_par_iter().map(|rep| replicate(plan, rep)).collect()
}

fn check_common(d: usize, s: usize, sigma: f64, reps: usize) -> Result<()> {
    if d < 3 {
        return invalid(format!("need d >= 3, got d={d}"));
    }
    if s == 0 || s > d {
        return invalid(format!("need 1 <= s <= d, got s={s}, d={d}"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return invalid("sigma must be positive and finite");
    }
    if reps == 0 {
        return invalid("reps must be at least 1");
    }
    Ok(())
}

fn report(plan: &Plan<'_>, outcomes: &[Vec<Outcome>]) -> CoordinateReport {
    let n_members = plan.members.len();
    let mut risk = vec![Welford::default(); n_members];
    let mut fourth = vec![Welford::default(); n_members];
    let mut covered = vec![0u64; n_members];
    let mut exceed = vec![0u64; n_members];
    let mut fallback = vec![0u64; n_members];
    let mut histograms = vec![BTreeMap::<usize, u64>::new(); n_members];
    for rep in outcomes {
        for (m, o) in rep.iter().enumerate() {
            risk[m].push(o.sq_err);
            if !o.sigma_hat.is_nan() {
                let r = o.sigma_hat / plan.sigma;
                fourth[m].push(r * r * r * r);
                if plan.sigma <= o.sigma_hat && o.sigma_hat <= 10.0 * plan.sigma {
                    covered[m] += 1;
                }
            }
            if o.s_hat > 0 {
                *histograms[m].entry(o.s_hat).or_default() += 1;
                exceed[m] += u64::from(o.s_hat > plan.s);
                fallback[m] += u64::from(o.fallback);
            }
        }
    }
    let reps = plan.reps as f64;
    // First member attaining the maximum.
    let worst = (0..n_members).fold(0, |best, m| if risk[m].mean > risk[best].mean { m } else { best });
    let selection = matches!(plan.task, Task::Estimate(k) if k.uses_selection());
    let has_sigma_hat = matches!(plan.task, Task::SigmaOnly | Task::Estimate(EstimatorKind::AdaptiveUnknownSigma));
    let max_freq = |counts: &[u64]| counts.iter().map(|&c| c as f64 / reps).fold(0.0, f64::max);
    CoordinateReport {
        risk: RiskEstimate {
            mse: risk[worst].mean,
            std_error: risk[worst].std_error(),
            reps: plan.reps,
            seed: plan.seed,
            worst_theta_id: plan.members[worst].id.clone(),
        },
        members: plan
            .members
            .iter()
            .zip(&risk)
            .map(|(m, w)| MemberRisk {
                id: m.id.clone(),
                mse: w.mean,
                std_error: w.std_error(),
            })
            .collect(),
        s_hat_histogram: selection.then(|| histograms[worst].clone()),
        selection_exceedance: selection.then(|| max_freq(&exceed)),
        fallback_frequency: selection.then(|| max_freq(&fallback)),
        sigma_hat_coverage: has_sigma_hat
            .then(|| covered.iter().map(|&c| c as f64 / reps).fold(f64::INFINITY, f64::min)),
        sigma_hat_fourth_moment: has_sigma_hat.then(|| fourth.iter().map(|w| w.mean).fold(0.0, f64::max)),
    }
}

fn run_task(coord: &Coordinate, task: Task) -> Result<CoordinateReport> {
    check_common(coord.d, coord.s, coord.sigma, coord.reps)?;
    let members = members(&coord.family, coord.d, coord.s, coord.sigma, &coord.config)?;
    let plan = Plan {
        d: coord.d,
        s: coord.s,
        sigma: coord.sigma,
        task,
        config: &coord.config,
        members: &members,
        reps: coord.reps,
        seed: coord.seed,
        key: coordinate_key(coord.d, coord.s),
    };
    let outcomes = simulate(&plan)?;
    Ok(report(&plan, &outcomes))
}

/// Full single-pass report at one coordinate.
pub fn evaluate_coordinate(coord: &Coordinate) -> Result<CoordinateReport> {
    run_task(coord, Task::Estimate(coord.estimator))
}

/// Empirical `max_θ E_θ(T̂ − L(θ))²` over the coordinate's family.
pub fn mc_risk(coord: &Coordinate) -> Result<RiskEstimate> {
    evaluate_coordinate(coord).map(|r| r.risk)
}

/// Which selector [`selection_error_frequency`] audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionPath {
    /// `ŝ` with the true `σ`.
    Known,
    /// `ŝ′` with `σ̂`.
    Unknown,
}

/// Largest empirical frequency of `{ŝ > s}` over the family. Requires the
/// theoretical preset and `s ≤ √(d·log(d)/2)`.
pub fn selection_error_frequency(coord: &Coordinate, path: SelectionPath) -> Result<f64> {
    if coord.config.preset != Preset::Theoretical {
        return invalid("selection audit requires the theoretical preset");
    }
    if !is_thresholded_regime(coord.d, coord.s) {
        return invalid(format!(
            "selection audit needs s <= sqrt(d log d / 2), got s={}, d={}",
            coord.s, coord.d
        ));
    }
    let kind = match path {
        SelectionPath::Known => EstimatorKind::Adaptive,
        SelectionPath::Unknown => EstimatorKind::AdaptiveUnknownSigma,
    };
    let report = run_task(coord, Task::Estimate(kind))?;
    Ok(report.selection_exceedance.unwrap_or(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaHatCoverage {
    /// Smallest frequency of `{σ ≤ σ̂ ≤ 10σ}` over the family.
    pub coverage: f64,
    /// Largest Monte Carlo `E σ̂⁴ / σ⁴` over the family.
    pub fourth_moment_ratio: f64,
}

/// Coverage and fourth moment of `σ̂`. Requires `2s < d`. The estimator
/// field of `coord` is ignored.
pub fn sigma_hat_coverage(coord: &Coordinate) -> Result<SigmaHatCoverage> {
    if 2 * coord.s >= coord.d {
        return invalid(format!("sigma_hat audit needs s < d/2, got s={}, d={}", coord.s, coord.d));
    }
    let report = run_task(coord, Task::SigmaOnly)?;
    Ok(SigmaHatCoverage {
        coverage: report.sigma_hat_coverage.unwrap_or(0.0),
        fourth_moment_ratio: report.sigma_hat_fourth_moment.unwrap_or(f64::NAN),
    })
}

/// Upper bound on `E σ̂⁴ / σ⁴` valid for every `θ` with fewer than `d/2`
/// nonzeros.
///
/// With `d′ = ⌊d/2⌋` and at least `d′` null coordinates, the mean of the
/// `d′` smallest squares is at most the mean over any `d′` null
/// coordinates, whose second moment is `σ⁴(1 + 2/d′)`. Hence
/// `E σ̂⁴ ≤ 81² σ⁴ (1 + 2/d′)`.
pub fn sigma_hat_fourth_moment_budget(d: usize) -> f64 {
    6561.0 * (1.0 + 2.0 / (d / 2).max(1) as f64)
}

/// The two-term functional of the lower bound, evaluated for one estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub d: usize,
    pub a: f64,
    pub s: usize,
    pub sigma: f64,
    pub estimator: EstimatorKind,
    /// `E₀ T̂² σ⁻² d^{1/2−3a}`.
    pub null_term: f64,
    /// `E_{μρ}(T̂ − L)² / Φᴸ(σ, s)`.
    pub prior_term: f64,
    pub r_hat: f64,
    /// Standard error of `r_hat` from the per-replicate sum of both terms.
    pub std_error: f64,
    pub bound: LowerBound<f64>,
    pub floor: f64,
    /// `r_hat − bound`.
    pub margin: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Evaluates `E₀(T̂)²σ⁻²d^{1/2−3a} + E_{μρ}(T̂ − L)²/Φᴸ` by Monte Carlo and
/// pairs it with the analytic lower bound. Both terms use the same noise
/// draws, so the standard error is computed from their per-replicate sum.
pub fn lower_bound_consistency(
    query: &LowerBoundQuery<f64>,
    estimator: EstimatorKind,
    config: &EstimatorConfig,
    reps: usize,
    seed: u64,
) -> Result<LowerBoundReport> {
    let (d, s, a, sigma) = (query.d(), query.s(), query.a(), query.sigma());
    check_common(d, s, sigma, reps)?;
    let mut family = vec![Member {
        id: "zero".into(),
        signal: MemberSignal::Fixed(vec![0.0; d]),
    }];
    family.extend(members(&FamilySpec::LowerBoundPrior { a }, d, s, sigma, config)?);
    let plan = Plan {
        d,
        s,
        sigma,
        task: Task::Estimate(estimator),
        config,
        members: &family,
        reps,
        seed,
        key: coordinate_key(d, s),
    };
    let outcomes = simulate(&plan)?;
    let null_weight = (d as f64).powf(0.5 - 3.0 * a) / (sigma * sigma);
    let prior_weight = 1.0 / phi_l(&query.rate_query());
    let (mut null, mut prior, mut total) = (Welford::default(), Welford::default(), Welford::default());
    for rep in &outcomes {
        let (n, p) = (rep[0].sq_err * null_weight, rep[1].sq_err * prior_weight);
        null.push(n);
        prior.push(p);
        total.push(n + p);
    }
    let bound = lower_bound_value(query);
    let r_hat = null.mean + prior.mean;
    Ok(LowerBoundReport {
        d,
        a,
        s,
        sigma,
        estimator,
        null_term: null.mean,
        prior_term: prior.mean,
        r_hat,
        std_error: total.std_error(),
        floor: LowerBound::floor(a),
        margin: r_hat - bound.bound,
        bound,
        reps,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaDemoRow {
    pub a: f64,
    /// `E_μ(L̂′ − L)²`.
    pub mse: f64,
    pub std_error: f64,
    /// `mse / (a² d)`, or `mse / d` at `a = 0`.
    pub ratio: f64,
    /// Sample mean of the `d` coordinates of `y` in replicate 0.
    pub y_mean: f64,
    /// Sample variance of the same coordinates.
    pub y_var: f64,
    /// `1 + a²`, the variance of each `y_j` under the mixture.
    pub y_var_target: f64,
}

/// Risk of the fully adaptive estimator when `θ ~ N(0, a² I_d)` and `σ = 1`.
/// Under this prior `y ~ N(0, (1 + a²) I_d)`, indistinguishable from pure
/// noise at a larger level.
pub fn sigma_impossibility_demo(
    d: usize,
    a_grid: &[f64],
    config: &EstimatorConfig,
    reps: usize,
    seed: u64,
) -> Result<Vec<SigmaDemoRow>> {
    check_common(d, 1, 1.0, reps)?;
    a_grid
        .iter()
        .map(|&a| {
            let family = members(&FamilySpec::GaussianPrior { a }, d, 1, 1.0, config)?;
            let plan = Plan {
                d,
                s: 1,
                sigma: 1.0,
                task: Task::Estimate(EstimatorKind::AdaptiveUnknownSigma),
                config,
                members: &family,
                reps,
                seed,
                key: splitmix64(coordinate_key(d, 0) ^ a.to_bits()),
            };
            let outcomes = simulate(&plan)?;
            let mut risk = Welford::default();
            outcomes.iter().for_each(|rep| risk.push(rep[0].sq_err));
            let stream = replicate_stream(seed, plan.key, 0);
            let mut gen = stream.generator();
            let theta = family[0].draw(d, 1, 1.0, &member_stream(&stream, 0))?;
            let mut y = Welford::default();
            for t in theta {
                y.push(t + f64::standard_normal(&mut gen));
            }
            let scale = if a == 0.0 { d as f64 } else { a * a * d as f64 };
            Ok(SigmaDemoRow {
                a,
                mse: risk.mean,
                std_error: risk.std_error(),
                ratio: risk.mean / scale,
                y_mean: y.mean,
                y_var: y.variance(),
                y_var_target: 1.0 + a * a,
            })
        })
        .collect()
}

/// Sample variance of `L(θ)` over `draws` independent `θ ~ N(0, a² I_d)`,
/// drawn exactly as the Gaussian-prior family draws them.
pub fn prior_functional_variance(d: usize, a: f64, draws: usize, seed: u64) -> Result<f64> {
    if !(a > 0.0) || d == 0 || draws < 2 {
        return invalid("need a > 0, d >= 1 and at least two draws");
    }
    let key = splitmix64(coordinate_key(d, 0) ^ a.to_bits());
    let sums: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let stream = member_stream(&replicate_stream(seed, key, i), 0);
            let mut gen = stream.generator();
            (0..d).map(|_| a * f64::standard_normal(&mut gen)).sum()
        })
        .collect();
    let mut w = Welford::default();
    sums.into_iter().for_each(|x| w.push(x));
    Ok(w.variance())
}

/// High-probability checks at one dimension, used to locate an operational `d₀`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub d: usize,
    pub selection_known: f64,
    pub selection_unknown: f64,
    pub sigma_hat_coverage: f64,
    pub sigma_hat_fourth_moment: f64,
    pub fourth_moment_budget: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub rows: Vec<CalibrationRow>,
    /// Smallest scanned `d` from which every larger scanned `d` passes.
    pub d0: Option<usize>,
}

pub const CALIBRATION_DIMS: [usize; 6] = [20, 50, 100, 200, 500, 1000];
/// Maximum tolerated frequency of `{ŝ > s}`.
pub const SELECTION_BUDGET: f64 = 1e-3;
/// Minimum tolerated frequency of `{σ ≤ σ̂ ≤ 10σ}`.
pub const COVERAGE_BUDGET: f64 = 0.999;

/// Runs the selection and `σ̂` checks at `s = 1` over the spikes family
/// (theoretical preset, `σ = 1`) for each `d` in [`CALIBRATION_DIMS`].
pub fn calibrate_d0(reps: usize, seed: u64) -> Result<CalibrationReport> {
    let rows = CALIBRATION_DIMS
        .iter()
        .map(|&d| {
            let coord = Coordinate::new(d, 1, FamilySpec::spikes(), EstimatorKind::Adaptive)
                .with_config(EstimatorConfig::theoretical())
                .with_reps(reps)
                .with_seed(seed);
            let selection_known = selection_error_frequency(&coord, SelectionPath::Known)?;
            let selection_unknown = selection_error_frequency(&coord, SelectionPath::Unknown)?;
            let cov = sigma_hat_coverage(&coord)?;
            let budget = sigma_hat_fourth_moment_budget(d);
            Ok(CalibrationRow {
                d,
                selection_known,
                selection_unknown,
                sigma_hat_coverage: cov.coverage,
                sigma_hat_fourth_moment: cov.fourth_moment_ratio,
                fourth_moment_budget: budget,
                pass: selection_known <= SELECTION_BUDGET
                    && selection_unknown <= SELECTION_BUDGET
                    && cov.coverage >= COVERAGE_BUDGET
                    && cov.fourth_moment_ratio <= budget,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let d0 = rows
        .iter()
        .rposition(|r| !r.pass)
        .map_or(rows.first().map(|r| r.d), |i| rows.get(i + 1).map(|r| r.d));
    Ok(CalibrationReport { rows, d0 })
}
