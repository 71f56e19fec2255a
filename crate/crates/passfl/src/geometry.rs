//! Pinching-antenna link geometry and the per-round latency model.
//!
//! A radiating element is activated at position `x` along a waveguide of
//! length `L`. Client `i` projects onto the waveguide axis at `u_i` with
//! transverse offset `r_i > 0`, giving the line-of-sight distance
//! `d_i(x) = sqrt((x - u_i)^2 + r_i^2)`. The uplink is a free-space
//! spherical-wave link, so the SNR falls off as `1/d^2`, and the per-round
//! latency is local compute time plus the Shannon-rate upload time.
//!
//! All computation is in SI units (watts, Hz, meters, seconds); dB and dBm
//! conversions happen only at the configuration boundary.

use serde::Serialize;

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// One client's geometry, payload, compute time, and statistical weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientProfile {
    /// Original client index (stable across latency re-sorting).
    pub id: usize,
    /// Projection onto the waveguide axis, meters.
    pub u: f64,
    /// Transverse distance to the waveguide, meters; strictly positive.
    pub r: f64,
    /// Upload payload per round, bits.
    pub payload_bits: f64,
    /// Local computation time per round, seconds.
    pub compute_time: f64,
    /// Target aggregation weight `p_i`; scenario-wide weights sum to one.
    pub agg_weight: f64,
    /// Stochastic-gradient second-moment bound `G_i`.
    pub grad_bound: f64,
    /// Optional per-client transmit power override, watts.
    pub tx_power_w: Option<f64>,
}

impl ClientProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) {
            return Err(Error::InvalidParams(format!(
                "client {}: transverse distance r = {} must be > 0",
                self.id, self.r
            )));
        }
        if !(self.payload_bits > 0.0) {
            return Err(Error::InvalidParams(format!(
                "client {}: payload_bits = {} must be > 0",
                self.id, self.payload_bits
            )));
        }
        if !(self.compute_time >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "client {}: compute_time = {} must be >= 0",
                self.id, self.compute_time
            )));
        }
        if !(self.agg_weight > 0.0) {
            return Err(Error::InvalidParams(format!(
                "client {}: agg_weight = {} must be > 0",
                self.id, self.agg_weight
            )));
        }
        if !(self.grad_bound > 0.0) {
            return Err(Error::InvalidParams(format!(
                "client {}: grad_bound = {} must be > 0",
                self.id, self.grad_bound
            )));
        }
        if let Some(p) = self.tx_power_w {
            if !(p > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "client {}: tx_power_w = {} must be > 0",
                    self.id, p
                )));
            }
        }
        Ok(())
    }

    /// Statistical weight `c_i = p_i^2 G_i^2` entering the convergence factor.
    pub fn stat_weight(&self) -> f64 {
        let pg = self.agg_weight * self.grad_bound;
        pg * pg
    }
}

/// Radio and problem constants shared by a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemConfig {
    /// Carrier frequency, Hz.
    pub carrier_hz: f64,
    /// Default uplink transmit power, watts.
    pub tx_power_w: f64,
    /// Noise power spectral density, dBm/Hz.
    pub noise_density_dbm_hz: f64,
    /// Upload bandwidth, Hz.
    pub bandwidth_hz: f64,
    /// Waveguide length, meters; activation positions live in `[0, L]`.
    pub waveguide_len_m: f64,
    /// Per-round sample size `K`.
    pub sample_size: usize,
}

impl Default for SystemConfig {
    /// Desk-scale defaults: 28 GHz carrier, 23 dBm power, -174 dBm/Hz noise,
    /// 10 MHz bandwidth, 10 m waveguide, K = 10.
    fn default() -> Self {
        SystemConfig {
            carrier_hz: 28e9,
            tx_power_w: dbm_to_watts(23.0),
            noise_density_dbm_hz: -174.0,
            bandwidth_hz: 10e6,
            waveguide_len_m: 10.0,
            sample_size: 10,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("carrier_hz", self.carrier_hz),
            ("tx_power_w", self.tx_power_w),
            ("bandwidth_hz", self.bandwidth_hz),
            ("waveguide_len_m", self.waveguide_len_m),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "{name} = {v} must be finite and > 0"
                )));
            }
        }
        if !self.noise_density_dbm_hz.is_finite() {
            return Err(Error::InvalidParams(format!(
                "noise_density_dbm_hz = {} must be finite",
                self.noise_density_dbm_hz
            )));
        }
        if self.sample_size < 1 {
            return Err(Error::InvalidParams("sample_size must be >= 1".into()));
        }
        Ok(())
    }

    /// Friis free-space factor `c0^2 / (16 pi^2 f_c^2)`, recomputed from the
    /// carrier so it can never go stale.
    pub fn friis_factor(&self) -> f64 {
        let lam = SPEED_OF_LIGHT / self.carrier_hz;
        lam * lam / (16.0 * std::f64::consts::PI * std::f64::consts::PI)
    }

    /// Free-space wavenumber `2 pi f_c / c0`, rad/m. Only the phase term
    /// `e^{-j k0 d}` consumes it, and that term has unit modulus, so nothing
    /// downstream depends on it; it is kept for completeness.
    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.carrier_hz / SPEED_OF_LIGHT
    }

    /// Receiver noise power `sigma^2` in watts over the full bandwidth.
    pub fn noise_power_w(&self) -> f64 {
        dbm_to_watts(self.noise_density_dbm_hz) * self.bandwidth_hz
    }
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// PA-client distance `sqrt((x - u)^2 + r^2)`; always >= `r`.
pub fn distance(client: &ClientProfile, x: f64) -> f64 {
    let dx = x - client.u;
    (dx * dx + client.r * client.r).sqrt()
}

/// Linear uplink SNR at activation position `x`.
///
/// `gamma = (P / sigma^2) * eta_f / d(x)^2`; the spherical-wave phase has
/// unit modulus and cancels in `|h|^2`.
pub fn snr(client: &ClientProfile, x: f64, cfg: &SystemConfig) -> f64 {
    let d = distance(client, x);
    let power = client.tx_power_w.unwrap_or(cfg.tx_power_w);
    power / cfg.noise_power_w() * cfg.friis_factor() / (d * d)
}

/// Shannon-rate upload time `S / (B log2(1 + gamma))`, seconds.
fn upload_time(client: &ClientProfile, gamma: f64, cfg: &SystemConfig, x: f64) -> Result<f64> {
    let log2_term = gamma.ln_1p() / std::f64::consts::LN_2;
    if !(log2_term > 0.0) || !log2_term.is_finite() {
        return Err(Error::OverflowLatency {
            client_id: client.id,
            x,
        });
    }
    Ok(client.payload_bits / (cfg.bandwidth_hz * log2_term))
}

/// Per-round latency `t(x) = compute_time + S / (B log2(1 + gamma(x)))`.
///
/// Evaluation slightly outside `[0, L]` is permitted (bracketing root
/// finders need it) but positions outside the waveguide are never reported
/// as solutions.
pub fn latency(client: &ClientProfile, x: f64, cfg: &SystemConfig) -> Result<f64> {
    let gamma = snr(client, x, cfg);
    Ok(client.compute_time + upload_time(client, gamma, cfg, x)?)
}

/// Closed-form position derivative of the per-round latency, seconds/meter.
///
/// `t'(x) = S/(B ln 2) * gamma / ((1+gamma) log2(1+gamma)^2)
///          * 2(x-u) / ((x-u)^2 + r^2)`.
///
/// The sign equals `sign(x - u)` and the derivative vanishes exactly at the
/// closest-approach point `x = u`.
pub fn latency_derivative(client: &ClientProfile, x: f64, cfg: &SystemConfig) -> Result<f64> {
    let gamma = snr(client, x, cfg);
    let log2_term = gamma.ln_1p() / std::f64::consts::LN_2;
    if !(log2_term > 0.0) || !log2_term.is_finite() {
        return Err(Error::OverflowLatency {
            client_id: client.id,
            x,
        });
    }
    let dx = x - client.u;
    let d2 = dx * dx + client.r * client.r;
    Ok(client.payload_bits / (cfg.bandwidth_hz * std::f64::consts::LN_2)
        * gamma
        / ((1.0 + gamma) * log2_term * log2_term)
        * 2.0
        * dx
        / d2)
}
