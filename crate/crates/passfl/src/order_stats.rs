//! Exact order statistics of the synchronous round time.
//!
//! A round samples `K` clients i.i.d. with replacement from a distribution
//! `q` over the clients sorted by latency, and waits for the slowest draw.
//! With cumulative masses `Q_i` the expected round time is
//!
//! ```text
//! f(q) = sum_i (Q_i^K - Q_{i-1}^K) t_i                 (order form)
//!      = t_N - sum_{i<N} (t_{i+1} - t_i) Q_i^K         (gap form)
//! ```
//!
//! The gap form exposes the objective's dependence on `q` through the
//! adjacent latency gaps, from which the tail sensitivity (negative simplex
//! gradient), the Hessian, and the straggler pmf all follow in closed form.
//! A seeded Monte Carlo estimator serves as an independent oracle.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{latency, ClientProfile, SystemConfig};
use crate::rng::substream;

/// Latencies of all clients at a fixed antenna position, sorted ascending,
/// with the sort permutation and the adjacent gaps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyProfile {
    /// Nondecreasing latencies, seconds.
    pub sorted_t: Vec<f64>,
    /// `perm[k]` is the original client id occupying sorted position `k`.
    pub perm: Vec<usize>,
    /// `gaps[i] = sorted_t[i+1] - sorted_t[i]`, length `N - 1`.
    pub gaps: Vec<f64>,
}

impl LatencyProfile {
    /// Build a profile directly from latencies in original client order.
    /// Ties are broken by original id, so the sort is deterministic.
    pub fn from_latencies(t: &[f64]) -> Result<LatencyProfile> {
        if t.is_empty() {
            return Err(Error::InvalidParams("empty latency list".into()));
        }
        let mut idx: Vec<usize> = (0..t.len()).collect();
        idx.sort_by(|&a, &b| t[a].partial_cmp(&t[b]).unwrap().then(a.cmp(&b)));
        let sorted_t: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
        let gaps = sorted_t.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(LatencyProfile {
            sorted_t,
            perm: idx,
            gaps,
        })
    }

    pub fn len(&self) -> usize {
        self.sorted_t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_t.is_empty()
    }

    /// Reorder a per-client sequence from original order into sorted order.
    pub fn to_sorted_order(&self, original: &[f64]) -> Result<Vec<f64>> {
        check_dims(original.len(), self.len())?;
        Ok(self.perm.iter().map(|&i| original[i]).collect())
    }

    /// Scatter a sorted-order sequence back to original client order.
    pub fn to_original_order(&self, sorted: &[f64]) -> Result<Vec<f64>> {
        check_dims(sorted.len(), self.len())?;
        let mut out = vec![0.0; sorted.len()];
        for (pos, &id) in self.perm.iter().enumerate() {
            out[id] = sorted[pos];
        }
        Ok(out)
    }
}

/// A strictly positive point on the probability simplex, stored together
/// with its cumulative masses `Q_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingDistribution {
    q: Vec<f64>,
    cum: Vec<f64>,
}

impl SamplingDistribution {
    /// Validates positivity and normalization (within 1e-12), then snaps the
    /// final cumulative mass to exactly 1 so that the order and gap forms of
    /// the straggler functional agree to rounding for any `K`.
    pub fn new(q: Vec<f64>) -> Result<SamplingDistribution> {
        if q.is_empty() {
            return Err(Error::InvalidParams("empty distribution".into()));
        }
        let mut sum = 0.0;
        for (i, &qi) in q.iter().enumerate() {
            if !(qi > 0.0) || !qi.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "q[{i}] = {qi} must be finite and > 0"
                )));
            }
            sum += qi;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!(
                "sampling masses sum to {sum}, not 1"
            )));
        }
        let mut cum = Vec::with_capacity(q.len());
        let mut acc = 0.0;
        for &qi in &q {
            acc += qi;
            cum.push(acc.min(1.0));
        }
        *cum.last_mut().unwrap() = 1.0;
        Ok(SamplingDistribution { q, cum })
    }

    /// Uniform distribution over `n` clients.
    pub fn uniform(n: usize) -> SamplingDistribution {
        SamplingDistribution::new(vec![1.0 / n as f64; n]).unwrap()
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Per-client masses.
    pub fn masses(&self) -> &[f64] {
        &self.q
    }

    /// Cumulative masses; the last entry is exactly 1.
    pub fn cumulative(&self) -> &[f64] {
        &self.cum
    }
}

fn check_dims(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::DimensionMismatch { left, right });
    }
    Ok(())
}

fn check_k(k: usize) -> Result<i32> {
    if k < 1 {
        return Err(Error::InvalidParams("sample size K must be >= 1".into()));
    }
    Ok(k as i32)
}

/// Sort clients by latency at position `x`; ties break by original id.
pub fn sort_by_latency(
    clients: &[ClientProfile],
    x: f64,
    cfg: &SystemConfig,
) -> Result<LatencyProfile> {
    let t: Vec<f64> = clients
        .iter()
        .map(|c| latency(c, x, cfg))
        .collect::<Result<_>>()?;
    LatencyProfile::from_latencies(&t)
}

/// Expected straggler latency, order form: `sum (Q_i^K - Q_{i-1}^K) t_i`.
pub fn expected_straggler(
    q: &SamplingDistribution,
    prof: &LatencyProfile,
    k: usize,
) -> Result<f64> {
    check_dims(q.len(), prof.len())?;
    let ki = check_k(k)?;
    let mut total = 0.0;
    let mut prev = 0.0;
    for (i, &ti) in prof.sorted_t.iter().enumerate() {
        let cur = q.cum[i].powi(ki);
        total += (cur - prev) * ti;
        prev = cur;
    }
    Ok(total)
}

/// Expected straggler latency, telescoped gap form:
/// `t_N - sum_{i<N} gap_i Q_i^K`. Algebraically identical to the order form.
pub fn expected_straggler_gap_form(
    q: &SamplingDistribution,
    prof: &LatencyProfile,
    k: usize,
) -> Result<f64> {
    check_dims(q.len(), prof.len())?;
    let ki = check_k(k)?;
    let mut total = *prof.sorted_t.last().unwrap();
    for (i, &gap) in prof.gaps.iter().enumerate() {
        total -= gap * q.cum[i].powi(ki);
    }
    Ok(total)
}

/// Tail sensitivity `D_s = K sum_{i >= s, i < N} gap_i Q_i^{K-1}`.
///
/// Nonincreasing in `s` with `D_N = 0`; the simplex gradient representative
/// of the straggler functional is `df/dq_s = -D_s`.
pub fn tail_sensitivity(
    q: &SamplingDistribution,
    prof: &LatencyProfile,
    k: usize,
) -> Result<Vec<f64>> {
    check_dims(q.len(), prof.len())?;
    let ki = check_k(k)?;
    let n = prof.len();
    let mut d = vec![0.0; n];
    for i in (0..n - 1).rev() {
        d[i] = d[i + 1] + k as f64 * prof.gaps[i] * q.cum[i].powi(ki - 1);
    }
    Ok(d)
}

/// Hessian of the straggler functional:
/// `-K(K-1) sum_{i<N} gap_i Q_i^{K-2} a_i a_i^T` with `a_i` the prefix
/// indicator. Symmetric negative semidefinite; `(r, c)` entry is
/// `-sum_{i >= max(r, c)} K(K-1) gap_i Q_i^{K-2}`.
pub fn straggler_hessian(
    q: &SamplingDistribution,
    prof: &LatencyProfile,
    k: usize,
) -> Result<Vec<Vec<f64>>> {
    check_dims(q.len(), prof.len())?;
    if k < 2 {
        return Err(Error::KTooSmall(k));
    }
    let n = prof.len();
    let kk = (k * (k - 1)) as f64;
    // Reverse cumulative sums of the rank-one coefficients.
    let mut tail = vec![0.0; n];
    for i in (0..n - 1).rev() {
        tail[i] = tail[i + 1] + kk * prof.gaps[i] * q.cum[i].powi(k as i32 - 2);
    }
    let mut h = vec![vec![0.0; n]; n];
    for r in 0..n {
        for c in 0..n {
            let m = r.max(c);
            if m < n - 1 {
                h[r][c] = -tail[m];
            }
        }
    }
    Ok(h)
}

/// Straggler pmf `pi_i = Q_i^K - Q_{i-1}^K`: the probability that sorted
/// client `i` is the round maximum (ties resolved toward the higher index).
pub fn straggler_pmf(
    q: &SamplingDistribution,
    prof: &LatencyProfile,
    k: usize,
) -> Result<Vec<f64>> {
    check_dims(q.len(), prof.len())?;
    let ki = check_k(k)?;
    let mut pmf = Vec::with_capacity(q.len());
    let mut prev = 0.0;
    for i in 0..q.len() {
        let cur = q.cum[i].powi(ki);
        pmf.push((cur - prev).max(0.0));
        prev = cur;
    }
    Ok(pmf)
}

/// One Monte Carlo round: sample `K` sorted indices with replacement and
/// return the largest (the straggler's sorted position).
fn draw_round_max<R: Rng>(cum: &[f64], k: usize, rng: &mut R) -> usize {
    let mut max_idx = 0;
    for _ in 0..k {
        let u: f64 = rng.random();
        // First index with cumulative mass >= u.
        let idx = cum.partition_point(|&c| c < u);
        let idx = idx.min(cum.len() - 1);
        if idx > max_idx {
            max_idx = idx;
        }
    }
    max_idx
}

/// Monte Carlo estimate of the expected straggler latency.
///
/// Simulates `n_draws` independent rounds, each sampling `K` clients with
/// replacement from `q` and taking the maximum latency. Returns the sample
/// mean and its standard error. Deterministic for a fixed seed.
pub fn monte_carlo_straggler(
    q: &SamplingDistribution,
    prof: &LatencyProfile,
    k: usize,
    n_draws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_dims(q.len(), prof.len())?;
    check_k(k)?;
    if n_draws < 1 {
        return Err(Error::InvalidParams("n_draws must be >= 1".into()));
    }
    let mut rng = substream(seed, 0);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_draws {
        let t = prof.sorted_t[draw_round_max(&q.cum, k, &mut rng)];
        sum += t;
        sum_sq += t * t;
    }
    let n = n_draws as f64;
    let mean = sum / n;
    let sample_var = if n_draws > 1 {
        (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0)
    } else {
        0.0
    };
    Ok((mean, (sample_var / n).sqrt()))
}

/// Monte Carlo frequencies of the straggler's sorted index, for checking the
/// analytic pmf. Returns per-index counts over `n_draws` rounds.
pub fn monte_carlo_straggler_counts(
    q: &SamplingDistribution,
    prof: &LatencyProfile,
    k: usize,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<u64>> {
    check_dims(q.len(), prof.len())?;
    check_k(k)?;
    let mut rng = substream(seed, 0);
    let mut counts = vec![0u64; q.len()];
    for _ in 0..n_draws {
        counts[draw_round_max(&q.cum, k, &mut rng)] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(q: &[f64]) -> SamplingDistribution {
        SamplingDistribution::new(q.to_vec()).unwrap()
    }

    fn profile(t: &[f64]) -> LatencyProfile {
        LatencyProfile::from_latencies(t).unwrap()
    }

    #[test]
    fn sort_breaks_ties_by_id() {
        let prof = profile(&[2.0, 1.0, 2.0, 1.0]);
        assert_eq!(prof.perm, vec![1, 3, 0, 2]);
        assert_eq!(prof.sorted_t, vec![1.0, 1.0, 2.0, 2.0]);
        assert_eq!(prof.gaps, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn single_client_profile() {
        let prof = profile(&[2.0]);
        assert_eq!(prof.perm, vec![0]);
        assert!(prof.gaps.is_empty());
        for k in [1, 3, 17] {
            let f = expected_straggler(&dist(&[1.0]), &prof, k).unwrap();
            assert_eq!(f, 2.0);
        }
    }

    #[test]
    fn k_equals_one_is_plain_mean() {
        let prof = profile(&[1.0, 2.0, 5.0]);
        let q = dist(&[0.2, 0.3, 0.5]);
        let f = expected_straggler(&q, &prof, 1).unwrap();
        assert!((f - (0.2 + 0.6 + 2.5)).abs() < 1e-15);
    }

    #[test]
    fn two_point_closed_form() {
        // f = 0.25 * 1 + 0.75 * 2 = t_f + gap * (1 - (1 - delta)^K) = 1.75.
        let prof = profile(&[1.0, 2.0]);
        let q = dist(&[0.5, 0.5]);
        let f = expected_straggler(&q, &prof, 2).unwrap();
        assert_eq!(f, 1.75);
        let g = expected_straggler_gap_form(&q, &prof, 2).unwrap();
        assert_eq!(g, 1.75);
    }

    #[test]
    fn gap_form_equals_order_form_when_all_equal() {
        let prof = profile(&[3.0, 3.0, 3.0]);
        let q = dist(&[0.1, 0.2, 0.7]);
        for k in [1, 4, 9] {
            assert_eq!(expected_straggler(&q, &prof, k).unwrap(), 3.0);
            assert_eq!(expected_straggler_gap_form(&q, &prof, k).unwrap(), 3.0);
        }
    }

    #[test]
    fn tail_sensitivity_hand_case() {
        // t = [1, 2], q = [0.5, 0.5], K = 2: D = [2 * 1 * 0.5, 0].
        let prof = profile(&[1.0, 2.0]);
        let q = dist(&[0.5, 0.5]);
        let d = tail_sensitivity(&q, &prof, 2).unwrap();
        assert_eq!(d, vec![1.0, 0.0]);
    }

    #[test]
    fn tail_sensitivity_zero_for_equal_latencies() {
        let prof = profile(&[2.0, 2.0, 2.0]);
        let q = dist(&[0.3, 0.3, 0.4]);
        assert_eq!(tail_sensitivity(&q, &prof, 5).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn hessian_two_client_hand_case() {
        // Single term: -K(K-1) gap Q_1^0 a_1 a_1^T = -2 at entry (0,0).
        let prof = profile(&[1.0, 2.0]);
        let q = dist(&[0.5, 0.5]);
        let h = straggler_hessian(&q, &prof, 2).unwrap();
        assert_eq!(h[0][0], -2.0);
        assert_eq!(h[0][1], 0.0);
        assert_eq!(h[1][0], 0.0);
        assert_eq!(h[1][1], 0.0);
    }

    #[test]
    fn hessian_rejects_k_below_two() {
        let prof = profile(&[1.0, 2.0]);
        let q = dist(&[0.5, 0.5]);
        assert!(matches!(
            straggler_hessian(&q, &prof, 1),
            Err(Error::KTooSmall(1))
        ));
    }

    #[test]
    fn pmf_hand_cases() {
        let prof = profile(&[1.0, 2.0]);
        let q = dist(&[0.5, 0.5]);
        assert_eq!(straggler_pmf(&q, &prof, 2).unwrap(), vec![0.25, 0.75]);
        assert_eq!(straggler_pmf(&q, &prof, 1).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn monte_carlo_is_deterministic_and_tight() {
        let prof = profile(&[1.0, 2.0]);
        let q = dist(&[0.5, 0.5]);
        let (m1, s1) = monte_carlo_straggler(&q, &prof, 2, 100_000, 42).unwrap();
        let (m2, s2) = monte_carlo_straggler(&q, &prof, 2, 100_000, 42).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(s1, s2);
        assert!((m1 - 1.75).abs() <= 4.0 * s1, "mean {m1}, stderr {s1}");
    }

    #[test]
    fn monte_carlo_single_client_exact() {
        let prof = profile(&[2.5]);
        let q = dist(&[1.0]);
        let (m, s) = monte_carlo_straggler(&q, &prof, 3, 1000, 7).unwrap();
        assert_eq!(m, 2.5);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let prof = profile(&[1.0, 2.0, 3.0]);
        let q = dist(&[0.5, 0.5]);
        assert!(matches!(
            expected_straggler(&q, &prof, 2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn distribution_validation() {
        assert!(SamplingDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(SamplingDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(SamplingDistribution::new(vec![1.0, 0.0]).is_err());
        assert!(SamplingDistribution::new(vec![]).is_err());
        let d = SamplingDistribution::new(vec![0.1; 10]).unwrap();
        assert_eq!(*d.cumulative().last().unwrap(), 1.0);
    }
}
