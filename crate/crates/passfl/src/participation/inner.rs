//! General N-client inner solver and KKT diagnostics.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::convergence::ConvergenceConstants;
use crate::order_stats::{LatencyProfile, SamplingDistribution};
use crate::rng::substream;

/// Options of the multi-start projected-gradient inner solver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerSolveOptions {
    /// Number of starts; the first two are the square-root rule and the
    /// uniform distribution, the rest are Dirichlet(1) perturbations mixed
    /// 50/50 with the square-root rule.
    pub n_starts: usize,
    /// Projected-gradient iteration cap per start.
    pub max_iters: usize,
    /// Target relative KKT residual `(max lambda - min lambda)/mean lambda`.
    pub grad_tol: f64,
    /// Initial backtracking step, in units of simplex mass.
    pub step_init: f64,
    /// Backtracking shrink factor in (0, 1).
    pub step_shrink: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Coordinate floor kept during iteration; the optimum is interior, so
    /// the floor is inactive at convergence.
    pub floor_eps: f64,
}

impl Default for InnerSolveOptions {
    fn default() -> Self {
        InnerSolveOptions {
            n_starts: 8,
            max_iters: 2000,
            grad_tol: 1e-9,
            step_init: 0.25,
            step_shrink: 0.5,
            armijo: 1e-4,
            floor_eps: 1e-12,
        }
    }
}

impl InnerSolveOptions {
    fn validate(&self, n: usize) -> Result<()> {
        if self.n_starts < 1 {
            return Err(Error::InvalidParams("n_starts must be >= 1".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidParams("grad_tol must be > 0".into()));
        }
        if !(self.floor_eps > 0.0 && self.floor_eps < 1.0 / n as f64) {
            return Err(Error::InvalidParams(format!(
                "floor_eps must lie in (0, 1/N), got {}",
                self.floor_eps
            )));
        }
        Ok(())
    }
}

/// Result of the inner participation solve, in sorted-client order.
#[derive(Debug, Clone, Serialize)]
pub struct InnerSolution {
    /// Optimal sampling distribution over sorted clients.
    pub q: SamplingDistribution,
    /// Objective value `J(q*)`.
    pub objective: f64,
    /// Relative KKT residual at `q*`.
    pub kkt_residual: f64,
    /// False when no start met `grad_tol`; the best point is still returned.
    pub converged: bool,
}

/// KKT diagnostics at a candidate point.
#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    /// `(max lambda - min lambda) / mean lambda`; zero at an exact KKT point.
    pub lambda_spread: f64,
    /// `psi_{i+1} - psi_i - (g/(f omega)) K gap_i Q_i^{K-1}` per adjacent pair.
    pub recursion_residuals: Vec<f64>,
    /// `psi_i = c_i / q_i^2`; nondecreasing at a KKT point.
    pub psi: Vec<f64>,
}

/// Latency classes: maximal runs of (tolerance-)equal sorted latencies.
#[derive(Debug, Clone, Serialize)]
pub struct ClassPartition {
    /// Sorted-client indices of each class; contiguous and in order.
    pub classes: Vec<Vec<usize>>,
    /// Representative time per class, strictly increasing.
    pub class_times: Vec<f64>,
    /// `C_m = sum_{i in class m} sqrt(c_i)`.
    pub class_weights: Vec<f64>,
    /// `sqrt(c_i)` per sorted client, kept for the square-root expansion.
    pub sqrt_c: Vec<f64>,
}

impl ClassPartition {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }
}

/// Result of the class-reduced solve.
#[derive(Debug, Clone, Serialize)]
pub struct ClassReducedSolution {
    /// Optimal class masses `delta_m`.
    pub deltas: Vec<f64>,
    /// Expansion to per-client masses by the within-class square-root law.
    pub q: SamplingDistribution,
    /// Objective of the reduced problem at `deltas` (equals the full
    /// objective at `q` up to rounding).
    pub objective: f64,
    /// Convergence flag of the reduced solve.
    pub converged: bool,
}

/// Statistics-only optimum `q_i = sqrt(c_i) / sum_j sqrt(c_j)`.
pub fn sqrt_rule(c: &[f64]) -> Result<SamplingDistribution> {
    let mut roots = Vec::with_capacity(c.len());
    for (i, &ci) in c.iter().enumerate() {
        if !(ci > 0.0) || !ci.is_finite() {
            return Err(Error::NonPositiveWeight(i));
        }
        roots.push(ci.sqrt());
    }
    let total: f64 = roots.iter().sum();
    SamplingDistribution::new(roots.iter().map(|&r| r / total).collect())
}

// ---------------------------------------------------------------------------
// Objective evaluation on raw coordinates
// ---------------------------------------------------------------------------

/// All first-order quantities of `J` at an interior point, in sorted order.
struct Eval {
    f: f64,
    g: f64,
    j: f64,
    /// Per-client multipliers `lambda_s = f omega c_s/q_s^2 + g D_s`; equal
    /// across `s` exactly at a KKT point.
    lambda: Vec<f64>,
    /// Tail sensitivities `D_s`.
    d: Vec<f64>,
    /// Cumulative masses.
    cum: Vec<f64>,
    /// Relative KKT residual.
    resid: f64,
}

fn evaluate(q: &[f64], prof: &LatencyProfile, c: &[f64], omega: f64, nu: f64, k: usize) -> Eval {
    let n = q.len();
    let ki = k as i32;
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &qi in q {
        acc += qi;
        cum.push(acc);
    }
    // Gap form of f and the reverse-cumulative tail sensitivities.
    let mut f = prof.sorted_t[n - 1];
    let mut d = vec![0.0; n];
    for i in (0..n - 1).rev() {
        f -= prof.gaps[i] * cum[i].powi(ki);
        d[i] = d[i + 1] + k as f64 * prof.gaps[i] * cum[i].powi(ki - 1);
    }
    let mut g = nu;
    for i in 0..n {
        g += omega * c[i] / q[i];
    }
    let j = f * g;
    let mut lambda = Vec::with_capacity(n);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut mean = 0.0;
    for i in 0..n {
        let l = f * omega * c[i] / (q[i] * q[i]) + g * d[i];
        lo = lo.min(l);
        hi = hi.max(l);
        mean += l;
        lambda.push(l);
    }
    mean /= n as f64;
    let resid = if n == 1 { 0.0 } else { (hi - lo) / mean };
    Eval {
        f,
        g,
        j,
        lambda,
        d,
        cum,
        resid,
    }
}

/// Euclidean projection onto `{q : sum q = 1, q_i >= floor}` via the shifted
/// unit-simplex projection.
fn project_floored_simplex(v: &[f64], floor: f64) -> Vec<f64> {
    let n = v.len();
    let scale = 1.0 - n as f64 * floor;
    let shifted: Vec<f64> = v.iter().map(|&x| (x - floor) / scale).collect();
    let p = project_simplex(&shifted);
    p.iter().map(|&x| floor + scale * x).collect()
}

/// Euclidean projection onto the unit simplex (sort-based).
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut theta = 0.0;
    let mut rho = 0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
            rho = i + 1;
        }
    }
    if rho == 0 {
        // All mass on the largest coordinate (degenerate input).
        let argmax = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let mut out = vec![0.0; v.len()];
        out[argmax] = 1.0;
        return out;
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn renormalize(q: &mut [f64]) {
    let s: f64 = q.iter().sum();
    for qi in q.iter_mut() {
        *qi /= s;
    }
}

// ---------------------------------------------------------------------------
// Projected gradient descent
// ---------------------------------------------------------------------------

fn projected_gradient(
    start: &[f64],
    prof: &LatencyProfile,
    c: &[f64],
    omega: f64,
    nu: f64,
    k: usize,
    opts: &InnerSolveOptions,
) -> (Vec<f64>, Eval) {
    let n = start.len();
    let mut q = start.to_vec();
    let mut ev = evaluate(&q, prof, c, omega, nu, k);
    let mut step = opts.step_init;
    for _ in 0..opts.max_iters {
        if ev.resid <= opts.grad_tol {
            break;
        }
        // Projected steepest descent: d_s = lambda_s - mean(lambda) sums to
        // zero and pushes mass toward clients with above-average multipliers.
        let mean = ev.lambda.iter().sum::<f64>() / n as f64;
        let dir: Vec<f64> = ev.lambda.iter().map(|&l| l - mean).collect();
        let dir_inf = dir.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        if dir_inf == 0.0 {
            break;
        }
        // Normalized direction; directional derivative of J along it is
        // -|dir|^2 / dir_inf.
        let slope = -dir.iter().map(|&x| x * x).sum::<f64>() / dir_inf;
        let mut beta = (step * 2.0).min(opts.step_init);
        let mut accepted = false;
        while beta > 1e-18 {
            let trial: Vec<f64> = q
                .iter()
                .zip(&dir)
                .map(|(&qi, &di)| qi + beta * di / dir_inf)
                .collect();
            let trial = if trial.iter().any(|&x| x < opts.floor_eps) {
                project_floored_simplex(&trial, opts.floor_eps)
            } else {
                trial
            };
            let trial_ev = evaluate(&trial, prof, c, omega, nu, k);
            if trial_ev.j <= ev.j + opts.armijo * beta * slope {
                q = trial;
                ev = trial_ev;
                step = beta;
                accepted = true;
                break;
            }
            beta *= opts.step_shrink;
        }
        if !accepted {
            break;
        }
    }
    (q, ev)
}

// ---------------------------------------------------------------------------
// Newton polish of the KKT system
// ---------------------------------------------------------------------------

/// One evaluation of the KKT residual vector `F = (lambda_s - mu, sum q - 1)`
/// and its Jacobian, followed by damped Newton steps. Returns the polished
/// point when it improves the relative residual without leaving the interior
/// or degrading the objective.
fn newton_polish(
    q0: &[f64],
    prof: &LatencyProfile,
    c: &[f64],
    omega: f64,
    nu: f64,
    k: usize,
    opts: &InnerSolveOptions,
) -> Option<(Vec<f64>, Eval)> {
    let n = q0.len();
    if n == 1 {
        return None;
    }
    let ki = k as i32;
    let mut q = q0.to_vec();
    let mut ev = evaluate(&q, prof, c, omega, nu, k);
    let start_resid = ev.resid;
    let mut mu = ev.lambda.iter().sum::<f64>() / n as f64;

    for _ in 0..40 {
        if ev.resid <= 1e-14 {
            break;
        }
        // tail[m] = K(K-1) sum_{i >= m} gap_i Q_i^{K-2} = dD_s/dq_r at
        // m = max(s, r); zero when K = 1 since D is then constant in q.
        let mut tail = vec![0.0; n];
        if k >= 2 {
            let kk = (k * (k - 1)) as f64;
            for i in (0..n - 1).rev() {
                tail[i] = tail[i + 1] + kk * prof.gaps[i] * ev.cum[i].powi(ki - 2);
            }
        }
        let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
        let mut rhs = DVector::<f64>::zeros(n + 1);
        for s in 0..n {
            let cs_qs2 = c[s] / (q[s] * q[s]);
            for r in 0..n {
                let mut v = omega * cs_qs2 * (-ev.d[r]) // d f/d q_r enters lambda_s
                    + ev.d[s] * (-omega * c[r] / (q[r] * q[r])) // d g/d q_r
                    + ev.g * tail[s.max(r)];
                if s == r {
                    v += ev.f * omega * (-2.0 * c[s] / (q[s] * q[s] * q[s]));
                }
                a[(s, r)] = v;
            }
            a[(s, n)] = -1.0;
            rhs[s] = -(ev.lambda[s] - mu);
        }
        for r in 0..n {
            a[(n, r)] = 1.0;
        }
        rhs[n] = -(q.iter().sum::<f64>() - 1.0);

        let delta = a.lu().solve(&rhs)?;
        // Damped update: halve until the iterate stays safely interior and
        // the residual does not increase.
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-6 {
            let trial: Vec<f64> = (0..n).map(|i| q[i] + t * delta[i]).collect();
            if trial.iter().any(|&x| x < opts.floor_eps) {
                t *= 0.5;
                continue;
            }
            let trial_ev = evaluate(&trial, prof, c, omega, nu, k);
            if trial_ev.resid < ev.resid {
                q = trial;
                ev = trial_ev;
                mu += t * delta[n];
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    // Residuals only ever decreased, so the final iterate is the best one.
    if ev.resid < start_resid {
        Some((q, ev))
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Multi-start driver
// ---------------------------------------------------------------------------

/// Solve one start to a polished terminal point.
fn solve_from(
    start: &[f64],
    prof: &LatencyProfile,
    c: &[f64],
    omega: f64,
    nu: f64,
    k: usize,
    opts: &InnerSolveOptions,
) -> (Vec<f64>, f64, f64) {
    let (q_pg, ev_pg) = projected_gradient(start, prof, c, omega, nu, k, opts);
    match newton_polish(&q_pg, prof, c, omega, nu, k, opts) {
        Some((q_nw, ev_nw))
            if ev_nw.resid <= ev_pg.resid && ev_nw.j <= ev_pg.j * (1.0 + 1e-9) =>
        {
            (q_nw, ev_nw.j, ev_nw.resid)
        }
        _ => (q_pg, ev_pg.j, ev_pg.resid),
    }
}

/// The standard start set: square-root rule, uniform, then Dirichlet(1)
/// draws mixed 50/50 with the square-root rule.
pub(crate) fn standard_starts(
    c: &[f64],
    n_starts: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let sqrt_q = sqrt_rule(c)?.masses().to_vec();
    let n = c.len();
    let mut starts = vec![sqrt_q.clone()];
    if n_starts > 1 {
        starts.push(vec![1.0 / n as f64; n]);
    }
    let mut rng = substream(seed, 0);
    while starts.len() < n_starts {
        // Dirichlet(1, ..., 1) via normalized exponentials.
        let mut e: Vec<f64> = (0..n)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        renormalize(&mut e);
        let mixed: Vec<f64> = sqrt_q
            .iter()
            .zip(&e)
            .map(|(&a, &b)| 0.5 * a + 0.5 * b)
            .collect();
        starts.push(mixed);
    }
    Ok(starts)
}

pub(crate) fn solve_inner_with_starts(
    starts: &[Vec<f64>],
    prof: &LatencyProfile,
    c: &[f64],
    consts: &ConvergenceConstants,
    k: usize,
    opts: &InnerSolveOptions,
) -> Result<InnerSolution> {
    let n = prof.len();
    if c.len() != n {
        return Err(Error::DimensionMismatch {
            left: c.len(),
            right: n,
        });
    }
    opts.validate(n)?;
    if k < 1 {
        return Err(Error::InvalidParams("sample size K must be >= 1".into()));
    }
    for (i, &ci) in c.iter().enumerate() {
        if !(ci > 0.0) {
            return Err(Error::NonPositiveWeight(i));
        }
    }
    if n == 1 {
        let q = SamplingDistribution::new(vec![1.0])?;
        let objective = prof.sorted_t[0] * (consts.omega * c[0] + consts.nu);
        return Ok(InnerSolution {
            q,
            objective,
            kkt_residual: 0.0,
            converged: true,
        });
    }

    let omega = consts.omega;
    let nu = consts.nu;
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    for start in starts {
        let (q, j, resid) = solve_from(start, prof, c, omega, nu, k, opts);
        let better = match &best {
            None => true,
            Some((_, bj, _)) => j < *bj,
        };
        if better {
            best = Some((q, j, resid));
        }
    }
    let (mut q, objective, kkt_residual) = best.unwrap();
    renormalize(&mut q);
    Ok(InnerSolution {
        q: SamplingDistribution::new(q)?,
        objective,
        kkt_residual,
        converged: kkt_residual <= opts.grad_tol,
    })
}

/// Solve the inner problem `min_q f(q) g(q)` over the simplex for a fixed
/// latency profile.
///
/// `c` holds the statistical weights in sorted-client order; only `omega`
/// and `nu` are read from `consts`. Multi-start projected gradient descent
/// followed by a Newton polish of the KKT system; the best terminal point by
/// objective wins (ties by start index). When no start meets `grad_tol`,
/// the best point is returned with `converged = false`.
pub fn solve_inner(
    prof: &LatencyProfile,
    c: &[f64],
    consts: &ConvergenceConstants,
    k: usize,
    opts: &InnerSolveOptions,
    seed: u64,
) -> Result<InnerSolution> {
    let starts = standard_starts(c, opts.n_starts, seed)?;
    solve_inner_with_starts(&starts, prof, c, consts, k, opts)
}

// ---------------------------------------------------------------------------
// KKT diagnostics
// ---------------------------------------------------------------------------

/// Per-client multipliers, recursion residuals, and `psi` at a point.
pub fn kkt_report(
    q: &SamplingDistribution,
    prof: &LatencyProfile,
    c: &[f64],
    consts: &ConvergenceConstants,
    k: usize,
) -> Result<KktReport> {
    let n = prof.len();
    if q.len() != n || c.len() != n {
        return Err(Error::DimensionMismatch {
            left: q.len().min(c.len()),
            right: n,
        });
    }
    let ev = evaluate(q.masses(), prof, c, consts.omega, consts.nu, k);
    let qs = q.masses();
    let psi: Vec<f64> = (0..n).map(|i| c[i] / (qs[i] * qs[i])).collect();
    let mut recursion_residuals = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n - 1 {
        let premium =
            ev.g / (ev.f * consts.omega) * k as f64 * prof.gaps[i] * ev.cum[i].powi(k as i32 - 1);
        recursion_residuals.push(psi[i + 1] - psi[i] - premium);
    }
    Ok(KktReport {
        lambda_spread: ev.resid,
        recursion_residuals,
        psi,
    })
}

/// Tail-latency premium `(g/(f omega)) K gap_i Q_i^{K-1}` of adjacent gap
/// `i` (0-based, `i < N-1`): the marginal `psi` increase required to move
/// sampling mass across that latency cliff.
pub fn tail_premium(
    prof: &LatencyProfile,
    q: &SamplingDistribution,
    gap_index: usize,
    c: &[f64],
    consts: &ConvergenceConstants,
    k: usize,
) -> Result<f64> {
    let n = prof.len();
    if gap_index + 1 >= n {
        return Err(Error::IndexOutOfRange {
            index: gap_index,
            n,
        });
    }
    if q.len() != n || c.len() != n {
        return Err(Error::DimensionMismatch {
            left: q.len().min(c.len()),
            right: n,
        });
    }
    let ev = evaluate(q.masses(), prof, c, consts.omega, consts.nu, k);
    Ok(ev.g / (ev.f * consts.omega)
        * k as f64
        * prof.gaps[gap_index]
        * ev.cum[gap_index].powi(k as i32 - 1))
}

// ---------------------------------------------------------------------------
// Latency classes
// ---------------------------------------------------------------------------

/// Group sorted clients into latency classes, merging adjacent times within
/// `tie_tol` (absolute seconds). Class weights are `sum sqrt(c_i)`.
pub fn class_partition(
    prof: &LatencyProfile,
    c: &[f64],
    tie_tol: f64,
) -> Result<ClassPartition> {
    let n = prof.len();
    if c.len() != n {
        return Err(Error::DimensionMismatch {
            left: c.len(),
            right: n,
        });
    }
    if !(tie_tol >= 0.0) {
        return Err(Error::InvalidParams("tie_tol must be >= 0".into()));
    }
    let sqrt_c: Vec<f64> = c.iter().map(|&ci| ci.sqrt()).collect();
    let mut classes: Vec<Vec<usize>> = vec![vec![0]];
    for i in 1..n {
        if prof.sorted_t[i] - prof.sorted_t[i - 1] <= tie_tol {
            classes.last_mut().unwrap().push(i);
        } else {
            classes.push(vec![i]);
        }
    }
    let class_times = classes
        .iter()
        .map(|m| m.iter().map(|&i| prof.sorted_t[i]).sum::<f64>() / m.len() as f64)
        .collect();
    let class_weights = classes
        .iter()
        .map(|m| m.iter().map(|&i| sqrt_c[i]).sum::<f64>())
        .collect();
    Ok(ClassPartition {
        classes,
        class_times,
        class_weights,
        sqrt_c,
    })
}

/// Solve the M-dimensional class-reduced problem and expand to per-client
/// masses by the within-class square-root law.
///
/// The reduced problem is itself an instance of the inner problem with one
/// pseudo-client per class, latency `t^(m)` and weight `C_m^2`.
pub fn solve_class_reduced(
    part: &ClassPartition,
    consts: &ConvergenceConstants,
    k: usize,
    opts: &InnerSolveOptions,
    seed: u64,
) -> Result<ClassReducedSolution> {
    let m = part.num_classes();
    if m == 0 {
        return Err(Error::InvalidParams("empty partition".into()));
    }
    let reduced_prof = LatencyProfile::from_latencies(&part.class_times)?;
    debug_assert_eq!(reduced_prof.perm, (0..m).collect::<Vec<_>>());
    let reduced_c: Vec<f64> = part.class_weights.iter().map(|&w| w * w).collect();
    let sol = solve_inner(&reduced_prof, &reduced_c, consts, k, opts, seed)?;
    let deltas = sol.q.masses().to_vec();

    let n = part.sqrt_c.len();
    let mut q = vec![0.0; n];
    for (mi, members) in part.classes.iter().enumerate() {
        let cm = part.class_weights[mi];
        for &i in members {
            q[i] = deltas[mi] * part.sqrt_c[i] / cm;
        }
    }
    renormalize(&mut q);
    Ok(ClassReducedSolution {
        deltas,
        q: SamplingDistribution::new(q)?,
        objective: sol.objective,
        converged: sol.converged,
    })
}
