//! Fast/slow two-class specialization and the participation phase transition.
//!
//! With one latency gap the inner problem collapses to a scalar objective in
//! the slow-class mass `delta`:
//!
//! ```text
//! J(delta) = [t_s - gap (1-delta)^K] [omega (C_f^2/(1-delta) + C_s^2/delta) + nu]
//! ```
//!
//! As `K` grows, the slow class either keeps Theta(1) mass or collapses to
//! the Theta(1/K) scale; the collapse regime is certified by an explicit
//! threshold on `C_s^2`.

use serde::Serialize;

use crate::error::{Error, Result};

/// A two-class instance: fast/slow latencies, aggregated square-root
/// weights, convergence constants, and the sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoClassProblem {
    /// Fast-class latency `t_f`, seconds.
    pub t_fast: f64,
    /// Slow-class latency `t_s > t_f`, seconds.
    pub t_slow: f64,
    /// `C_f = sum of sqrt(c_i)` over the fast class.
    pub c_fast: f64,
    /// `C_s = sum of sqrt(c_i)` over the slow class.
    pub c_slow: f64,
    /// Convergence-factor scale.
    pub omega: f64,
    /// Convergence-factor offset.
    pub nu: f64,
    /// Per-round sample size.
    pub k: usize,
}

impl TwoClassProblem {
    /// Latency gap `t_s - t_f`.
    pub fn gap(&self) -> f64 {
        self.t_slow - self.t_fast
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_fast > 0.0) || !(self.t_slow > self.t_fast) {
            return Err(Error::InvalidParams(format!(
                "need 0 < t_fast < t_slow, got {} and {}",
                self.t_fast, self.t_slow
            )));
        }
        if !(self.c_fast > 0.0) || !(self.c_slow > 0.0) {
            return Err(Error::InvalidParams(
                "class weights C_f, C_s must be > 0".into(),
            ));
        }
        if !(self.omega > 0.0) || !self.nu.is_finite() {
            return Err(Error::InvalidParams(
                "omega must be > 0 and nu finite".into(),
            ));
        }
        if self.k < 1 {
            return Err(Error::InvalidParams("sample size K must be >= 1".into()));
        }
        Ok(())
    }
}

/// Two-class expected straggler `f(delta) = t_s - gap (1-delta)^K`.
pub fn two_class_expected_straggler(p: &TwoClassProblem, delta: f64) -> f64 {
    p.t_slow - p.gap() * (1.0 - delta).powi(p.k as i32)
}

fn two_class_g(p: &TwoClassProblem, delta: f64) -> f64 {
    p.omega * (p.c_fast * p.c_fast / (1.0 - delta) + p.c_slow * p.c_slow / delta) + p.nu
}

/// Scalar objective `J(delta) = f(delta) g(delta)` on `(0, 1)`.
pub fn two_class_objective(p: &TwoClassProblem, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::DeltaOutOfRange(delta));
    }
    Ok(two_class_expected_straggler(p, delta) * two_class_g(p, delta))
}

/// `J'(delta)`: zero at interior stationary points,
/// `gap K (1-delta)^{K-1} g(delta)
///  + f(delta) omega (C_f^2/(1-delta)^2 - C_s^2/delta^2)`.
pub fn two_class_stationarity(p: &TwoClassProblem, delta: f64) -> f64 {
    let one_m = 1.0 - delta;
    p.gap() * p.k as f64 * one_m.powi(p.k as i32 - 1) * two_class_g(p, delta)
        + two_class_expected_straggler(p, delta)
            * p.omega
            * (p.c_fast * p.c_fast / (one_m * one_m) - p.c_slow * p.c_slow / (delta * delta))
}

/// Solution of the scalar two-class problem.
#[derive(Debug, Clone, Serialize)]
pub struct TwoClassSolution {
    /// Optimal slow-class mass.
    pub delta: f64,
    /// Objective at the optimum.
    pub objective: f64,
    /// `|J'(delta)|` at the output.
    pub residual: f64,
}

const DELTA_EDGE: f64 = 1e-8;

/// Scan points: uniform across (0, 1) plus geometric ladders into both
/// corners, so minima at the `1/K` scale are never missed.
fn scan_points() -> Vec<f64> {
    let mut pts = Vec::with_capacity(2100);
    let n_uniform = 1024;
    for i in 1..n_uniform {
        pts.push(i as f64 / n_uniform as f64);
    }
    let mut x = 0.4;
    while x > DELTA_EDGE {
        pts.push(x);
        pts.push(1.0 - x);
        x *= 0.7;
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    pts
}

/// Minimize `J(delta)` on `(0, 1)`.
///
/// Dense scan to locate the global basin, golden-section refinement of the
/// bracket, then safeguarded secant/bisection on the stationarity equation.
/// Errors with `DidNotConverge` when `|J'(delta*)| > tol * |J(delta*)|`.
pub fn solve_two_class(p: &TwoClassProblem, tol: f64) -> Result<TwoClassSolution> {
    p.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParams("tol must be > 0".into()));
    }
    let obj = |d: f64| two_class_expected_straggler(p, d) * two_class_g(p, d);

    let pts = scan_points();
    let (mut best_i, mut best_j) = (0usize, f64::INFINITY);
    for (i, &d) in pts.iter().enumerate() {
        let j = obj(d);
        if j < best_j {
            best_j = j;
            best_i = i;
        }
    }
    let mut lo = if best_i == 0 { DELTA_EDGE } else { pts[best_i - 1] };
    let mut hi = if best_i + 1 == pts.len() {
        1.0 - DELTA_EDGE
    } else {
        pts[best_i + 1]
    };

    // Golden-section to a 1e-12 bracket.
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = obj(x1);
    let mut f2 = obj(x2);
    while b - a > 1e-12 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = obj(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = obj(x2);
        }
    }
    let mut delta = 0.5 * (a + b);

    // Stationarity polish: bracket the sign change of J' around the
    // golden-section point, then safeguarded secant/bisection.
    let mut w = (hi - lo).max(1e-9);
    loop {
        lo = (delta - w).max(DELTA_EDGE);
        hi = (delta + w).min(1.0 - DELTA_EDGE);
        if two_class_stationarity(p, lo) < 0.0 && two_class_stationarity(p, hi) > 0.0 {
            let mut flo = two_class_stationarity(p, lo);
            let mut fhi = two_class_stationarity(p, hi);
            for _ in 0..50 {
                // Secant proposal, safeguarded by the bracket.
                let mut x = hi - fhi * (hi - lo) / (fhi - flo);
                if !(x > lo && x < hi) {
                    x = 0.5 * (lo + hi);
                }
                let fx = two_class_stationarity(p, x);
                if fx == 0.0 {
                    lo = x;
                    hi = x;
                    break;
                }
                if fx < 0.0 {
                    lo = x;
                    flo = fx;
                } else {
                    hi = x;
                    fhi = fx;
                }
                if hi - lo < f64::EPSILON * delta {
                    break;
                }
            }
            let cand = 0.5 * (lo + hi);
            if obj(cand) <= obj(delta) || two_class_stationarity(p, cand).abs()
                < two_class_stationarity(p, delta).abs()
            {
                delta = cand;
            }
            break;
        }
        w *= 2.0;
        if w > 1.0 {
            break;
        }
    }

    let objective = obj(delta);
    let residual = two_class_stationarity(p, delta).abs();
    if residual > tol * objective.abs() {
        return Err(Error::DidNotConverge(format!(
            "two-class stationarity residual {residual} exceeds {} at delta = {delta}",
            tol * objective.abs()
        )));
    }
    Ok(TwoClassSolution {
        delta,
        objective,
        residual,
    })
}

/// Result of the participation-collapse threshold test.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdCheck {
    /// True when `C_s^2 <= rhs`, the sufficient condition for collapse.
    pub satisfied: bool,
    /// `C_s^2`.
    pub lhs: f64,
    /// Explicit threshold value.
    pub rhs: f64,
}

/// Collapse threshold: with `P = (1 - rho/K)^K`,
/// `rhs = (1 - xi) (rho/K) gap P / (t_s - gap P) (omega C_f^2 + nu) / omega`.
/// The slow class collapses to `O(1/K)` mass whenever `C_s^2 <= rhs`.
pub fn collapse_threshold(p: &TwoClassProblem, rho: f64, xi: f64) -> Result<ThresholdCheck> {
    if !(rho > 0.0) {
        return Err(Error::InvalidMargin(format!("rho = {rho} must be > 0")));
    }
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::InvalidMargin(format!(
            "xi = {xi} must lie in (0, 1)"
        )));
    }
    if rho >= p.k as f64 {
        return Err(Error::InvalidMargin(format!(
            "rho = {rho} must be < K = {}",
            p.k
        )));
    }
    let kf = p.k as f64;
    let p_rho_k = (1.0 - rho / kf).powi(p.k as i32);
    let gap_p = p.gap() * p_rho_k;
    if !(gap_p < p.t_slow) {
        return Err(Error::InvalidMargin(
            "gap * P_{rho,K} must stay below t_slow".into(),
        ));
    }
    let fast_term = (p.omega * p.c_fast * p.c_fast + p.nu) / p.omega;
    let rhs = (1.0 - xi) * (rho / kf) * gap_p / (p.t_slow - gap_p) * fast_term;
    let lhs = p.c_slow * p.c_slow;
    Ok(ThresholdCheck {
        satisfied: lhs <= rhs,
        lhs,
        rhs,
    })
}

/// How the slow-class aggregate weight varies across the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SlowClassScaling {
    /// Keep the template's `C_s` fixed for every `K`.
    Fixed,
    /// Rescale `C_s^2` to the given fraction of the collapse threshold at
    /// each `K`, realizing the theorem's `C_s^2 = O(1/K)` sequence.
    ThresholdFraction(f64),
}

/// Options of the phase-transition sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSweepOptions {
    pub rho: f64,
    pub xi: f64,
    pub tol: f64,
    pub scaling: SlowClassScaling,
}

impl Default for PhaseSweepOptions {
    fn default() -> Self {
        PhaseSweepOptions {
            rho: 1.0,
            xi: 0.5,
            tol: 1e-9,
            scaling: SlowClassScaling::Fixed,
        }
    }
}

/// One sweep row of the phase-transition diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseSweepRow {
    pub k: usize,
    pub c_slow: f64,
    pub delta_star: f64,
    /// Bounded across `K` in the collapse regime, growing otherwise.
    pub k_delta_star: f64,
    /// `delta* / delta_stat` with `delta_stat = C_s / (C_f + C_s)`, the
    /// statistics-only optimum.
    pub ratio_stat: f64,
    pub threshold_satisfied: bool,
}

/// Solve the two-class problem across sample sizes and report the
/// collapse diagnostics per `K`.
pub fn phase_transition_sweep(
    template: &TwoClassProblem,
    ks: &[usize],
    opts: &PhaseSweepOptions,
) -> Result<Vec<PhaseSweepRow>> {
    if ks.is_empty() {
        return Err(Error::InvalidParams("empty K sweep".into()));
    }
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut p = template.clone();
        p.k = k;
        if let SlowClassScaling::ThresholdFraction(frac) = opts.scaling {
            if !(frac > 0.0) {
                return Err(Error::InvalidParams(
                    "threshold fraction must be > 0".into(),
                ));
            }
            let check = collapse_threshold(&p, opts.rho, opts.xi)?;
            p.c_slow = (frac * check.rhs).sqrt();
        }
        let check = collapse_threshold(&p, opts.rho, opts.xi)?;
        let sol = solve_two_class(&p, opts.tol)?;
        let delta_stat = p.c_slow / (p.c_fast + p.c_slow);
        rows.push(PhaseSweepRow {
            k,
            c_slow: p.c_slow,
            delta_star: sol.delta,
            k_delta_star: k as f64 * sol.delta,
            ratio_stat: sol.delta / delta_stat,
            threshold_satisfied: check.satisfied,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(k: usize) -> TwoClassProblem {
        TwoClassProblem {
            t_fast: 1.0,
            t_slow: 2.0,
            c_fast: 1.0,
            c_slow: 1.0,
            omega: 1.0,
            nu: 0.0,
            k,
        }
    }

    #[test]
    fn objective_hand_value() {
        let j = two_class_objective(&problem(2), 0.5).unwrap();
        assert_eq!(j, 7.0);
    }

    #[test]
    fn objective_rejects_boundary() {
        assert!(matches!(
            two_class_objective(&problem(2), 0.0),
            Err(Error::DeltaOutOfRange(_))
        ));
        assert!(matches!(
            two_class_objective(&problem(2), 1.0),
            Err(Error::DeltaOutOfRange(_))
        ));
    }

    #[test]
    fn objective_blows_up_near_edges() {
        let p = problem(4);
        let mid = two_class_objective(&p, 0.5).unwrap();
        assert!(two_class_objective(&p, 1e-12).unwrap() > 1e9 * mid);
        assert!(two_class_objective(&p, 1.0 - 1e-12).unwrap() > 1e9 * mid);
    }

    #[test]
    fn k_one_straggler_is_linear() {
        let p = problem(1);
        for d in [0.1, 0.35, 0.8] {
            let f = two_class_expected_straggler(&p, d);
            assert!((f - (1.0 + d)).abs() < 1e-15);
        }
    }

    #[test]
    fn vanishing_gap_recovers_sqrt_split() {
        let mut p = problem(6);
        p.t_slow = 1.0 + 1e-12;
        p.c_fast = 1.0;
        p.c_slow = 2.0;
        let sol = solve_two_class(&p, 1e-9).unwrap();
        assert!(
            (sol.delta - 2.0 / 3.0).abs() < 1e-6,
            "delta = {}",
            sol.delta
        );
    }

    #[test]
    fn symmetric_weights_penalize_slow_class() {
        for k in [2, 5, 20] {
            let p = problem(k);
            assert!(two_class_stationarity(&p, 0.5) > 0.0);
            let sol = solve_two_class(&p, 1e-9).unwrap();
            assert!(sol.delta < 0.5, "K = {k}: delta = {}", sol.delta);
            // Proposition-1 inequality at the output.
            assert!(p.c_slow / sol.delta >= p.c_fast / (1.0 - sol.delta));
        }
    }

    #[test]
    fn solution_beats_dense_grid() {
        let cases = [
            problem(2),
            problem(32),
            TwoClassProblem {
                t_fast: 0.3,
                t_slow: 1.9,
                c_fast: 2.0,
                c_slow: 0.2,
                omega: 0.5,
                nu: 3.0,
                k: 64,
            },
        ];
        for p in cases {
            let sol = solve_two_class(&p, 1e-9).unwrap();
            let n = 100_000;
            let mut grid_best = f64::INFINITY;
            for i in 1..n {
                let d = i as f64 / n as f64;
                grid_best = grid_best.min(two_class_objective(&p, d).unwrap());
            }
            assert!(
                sol.objective <= grid_best * (1.0 + 1e-9),
                "K = {}: solver {} vs grid {}",
                p.k,
                sol.objective,
                grid_best
            );
        }
    }

    #[test]
    fn threshold_zero_slow_class_is_satisfied() {
        let mut p = problem(16);
        p.c_slow = 0.0;
        let check = collapse_threshold(&p, 1.0, 0.5).unwrap();
        assert!(check.satisfied);
        assert_eq!(check.lhs, 0.0);
        assert!(check.rhs > 0.0);
    }

    #[test]
    fn threshold_shrinks_with_k() {
        let r16 = collapse_threshold(&problem(16), 1.0, 0.5).unwrap().rhs;
        let r256 = collapse_threshold(&problem(256), 1.0, 0.5).unwrap().rhs;
        let r4096 = collapse_threshold(&problem(4096), 1.0, 0.5).unwrap().rhs;
        assert!(r256 < r16 / 10.0);
        assert!(r4096 < r256 / 10.0);
    }

    #[test]
    fn threshold_double_evaluation() {
        // The direct formula must agree with the rearranged tail bound
        // omega C_s^2 K / rho = (1-xi)(omega C_f^2 + nu) gap P/(t_s - gap P)
        // evaluated at C_s^2 = rhs.
        let p = problem(16);
        let (rho, xi) = (1.0, 0.5);
        let check = collapse_threshold(&p, rho, xi).unwrap();
        let kf = p.k as f64;
        let p_rho_k = (1.0 - rho / kf).powi(p.k as i32);
        let gap_p = p.gap() * p_rho_k;
        let left = p.omega * check.rhs * kf / rho;
        let right =
            (1.0 - xi) * (p.omega * p.c_fast * p.c_fast + p.nu) * gap_p / (p.t_slow - gap_p);
        assert!((left - right).abs() <= 1e-14 * right.abs());
    }

    #[test]
    fn threshold_rejects_bad_margins() {
        let p = problem(16);
        assert!(matches!(
            collapse_threshold(&p, -1.0, 0.5),
            Err(Error::InvalidMargin(_))
        ));
        assert!(matches!(
            collapse_threshold(&p, 1.0, 1.5),
            Err(Error::InvalidMargin(_))
        ));
        assert!(matches!(
            collapse_threshold(&p, 100.0, 0.5),
            Err(Error::InvalidMargin(_))
        ));
    }

    #[test]
    fn sweep_fixed_large_cs_stays_order_one() {
        let rows = phase_transition_sweep(
            &problem(8),
            &[8, 16, 32, 64, 128, 256],
            &PhaseSweepOptions::default(),
        )
        .unwrap();
        for row in &rows {
            assert!(row.delta_star >= 0.05, "K = {}: {}", row.k, row.delta_star);
            assert!(!row.threshold_satisfied);
        }
    }

    #[test]
    fn sweep_threshold_scaled_cs_collapses() {
        let opts = PhaseSweepOptions {
            scaling: SlowClassScaling::ThresholdFraction(0.999),
            ..Default::default()
        };
        let rows = phase_transition_sweep(&problem(8), &[8, 16, 32, 64, 128, 256], &opts).unwrap();
        for row in &rows {
            assert!(row.threshold_satisfied, "K = {}", row.k);
        }
        let first = rows.first().unwrap().k_delta_star;
        let last = rows.last().unwrap().k_delta_star;
        assert!(
            last <= 2.0 * first,
            "K delta* grew: first {first}, last {last}"
        );
    }
}
