//! Radio bookkeeping, worst-case SINR, per-cell feasibility and whole-plan
//! verification.
//!
//! Everything in here works in linear units (watts, dimensionless gains);
//! decibels only appear at the configuration boundary.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ckm::{CellChannelStats, ChannelMap, StatsGrid};
use crate::grid::{validate_corridor, CellIndex, CorridorMask, ValidationReport};

/// Relative slack applied to every threshold comparison.
pub const THRESHOLD_REL_TOL: f64 = 1e-12;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Minimum number of deployed LoS sites a corridor cell needs.
pub const MIN_LOS_SITES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("radio parameter {name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("transmit gain must exceed 1 (linear), got {0}")]
    GainTooSmall(f64),
    #[error("cost weights must be non-negative and sum to 1 (alpha1={0}, alpha2={1})")]
    BadWeights(f64, f64),
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm) * 1e-3
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w * 1e3)
}

/// `value >= threshold`, forgiving a relative shortfall of [`THRESHOLD_REL_TOL`].
#[inline]
pub fn meets(value: f64, threshold: f64) -> bool {
    value >= threshold - THRESHOLD_REL_TOL * threshold.abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// Transmit power per site, watts.
    pub tx_power: f64,
    /// Antenna/beamforming gain of the serving site, linear.
    pub tx_gain: f64,
    /// Receiver noise power, watts.
    pub noise: f64,
    /// Carrier wavelength, meters.
    pub wavelength: f64,
    /// Radar cross section of the target, m^2.
    pub rcs: f64,
    /// Minimum summed echo power, watts.
    pub sense_threshold: f64,
    /// Minimum worst-case SINR, linear.
    pub sinr_threshold: f64,
    /// Big-M constant for the SINR disjunction. `None` derives a safe value
    /// from each instance.
    pub big_m: Option<f64>,
}

impl RadioParams {
    /// Builds linear parameters from the dB/dBm quantities used in configs.
    #[allow(clippy::too_many_arguments)]
    pub fn from_db(
        tx_power_dbm: f64,
        tx_gain_db: f64,
        noise_dbm: f64,
        carrier_hz: f64,
        rcs_m2: f64,
        sense_threshold_dbm: f64,
        sinr_threshold_db: f64,
        big_m: Option<f64>,
    ) -> Result<Self, MetricsError> {
        let params = Self {
            tx_power: dbm_to_watts(tx_power_dbm),
            tx_gain: db_to_linear(tx_gain_db),
            noise: dbm_to_watts(noise_dbm),
            wavelength: SPEED_OF_LIGHT / carrier_hz,
            rcs: rcs_m2,
            sense_threshold: dbm_to_watts(sense_threshold_dbm),
            sinr_threshold: db_to_linear(sinr_threshold_db),
            big_m,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let checks = [
            ("tx_power", self.tx_power),
            ("noise", self.noise),
            ("wavelength", self.wavelength),
            ("rcs", self.rcs),
            ("sense_threshold", self.sense_threshold),
            ("sinr_threshold", self.sinr_threshold),
        ];
        for (name, value) in checks {
            if !(value > 0.0 && value.is_finite()) {
                return Err(MetricsError::NonPositive { name, value });
            }
        }
        if let Some(z) = self.big_m {
            if !(z > 0.0 && z.is_finite()) {
                return Err(MetricsError::NonPositive { name: "big_m", value: z });
            }
        }
        if !(self.tx_gain > 1.0) {
            return Err(MetricsError::GainTooSmall(self.tx_gain));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl CostWeights {
    pub fn new(alpha1: f64, alpha2: f64) -> Result<Self, MetricsError> {
        if alpha1 < 0.0 || alpha2 < 0.0 || ((alpha1 + alpha2) - 1.0).abs() > 1e-9 {
            return Err(MetricsError::BadWeights(alpha1, alpha2));
        }
        Ok(Self { alpha1, alpha2 })
    }
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            alpha1: 0.5,
            alpha2: 0.5,
        }
    }
}

/// Which candidate sites carry a base station.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Deployment {
    pub flags: Vec<bool>,
}

impl Deployment {
    pub fn none(k: usize) -> Self {
        Self { flags: vec![false; k] }
    }

    pub fn all(k: usize) -> Self {
        Self { flags: vec![true; k] }
    }

    pub fn from_sites(k: usize, sites: &[usize]) -> Self {
        let mut d = Self::none(k);
        for &s in sites {
            d.flags[s] = true;
        }
        d
    }

    /// Deployment whose flags are the low `k` bits of `bits`.
    pub fn from_bits(k: usize, bits: u64) -> Self {
        Self {
            flags: (0..k).map(|b| bits >> b & 1 == 1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }

    pub fn is_deployed(&self, k: usize) -> bool {
        self.flags[k]
    }

    pub fn deployed(&self) -> impl Iterator<Item = usize> + '_ {
        self.flags.iter().enumerate().filter(|(_, f)| **f).map(|(k, _)| k)
    }
}

/// Monostatic echo power returned from a target at distance `d`.
pub fn echo_power(distance: f64, params: &RadioParams) -> f64 {
    params.tx_power * params.tx_gain * params.wavelength.powi(2) * params.rcs
        / ((4.0 * PI).powi(3) * distance.powi(4))
}

/// SINR from site `k` at one lattice point.
pub fn point_sinr(
    k: usize,
    point: usize,
    deployment: &Deployment,
    maps: &[ChannelMap],
    params: &RadioParams,
) -> f64 {
    if !deployment.is_deployed(k) {
        return 0.0;
    }
    let signal = params.tx_power * params.tx_gain * maps[k].gains[point];
    let interference: f64 = deployment
        .deployed()
        .filter(|&b| b != k)
        .map(|b| params.tx_power * maps[b].gains[point])
        .sum();
    signal / (interference + params.noise)
}

/// Worst-case SINR of site `k` over a cell, from per-site extrema.
///
/// `site_stats` holds one entry per candidate site for the same cell.
/// `trimmed` selects the outlier-trimmed extrema.
pub fn worst_case_sinr(
    k: usize,
    site_stats: &[CellChannelStats],
    trimmed: bool,
    deployment: &Deployment,
    params: &RadioParams,
) -> f64 {
    if !deployment.is_deployed(k) {
        return 0.0;
    }
    let signal = params.tx_power * params.tx_gain * site_stats[k].serving_gain(trimmed);
    let interference: f64 = deployment
        .deployed()
        .filter(|&b| b != k)
        .map(|b| params.tx_power * site_stats[b].interfering_gain(trimmed))
        .sum();
    signal / (interference + params.noise)
}

/// Best worst-case SINR over all sites at a cell.
pub fn best_worst_case_sinr(
    site_stats: &[CellChannelStats],
    trimmed: bool,
    deployment: &Deployment,
    params: &RadioParams,
) -> f64 {
    (0..site_stats.len())
        .map(|k| worst_case_sinr(k, site_stats, trimmed, deployment, params))
        .fold(0.0, f64::max)
}

/// Summed echo power from deployed sites.
pub fn sensing_power(site_stats: &[CellChannelStats], trimmed: bool, deployment: &Deployment) -> f64 {
    deployment.deployed().map(|k| site_stats[k].echo(trimmed)).sum()
}

pub fn los_count(site_stats: &[CellChannelStats], trimmed: bool, deployment: &Deployment) -> usize {
    deployment
        .deployed()
        .filter(|&k| site_stats[k].los_indicator(trimmed))
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFeasibility {
    pub sensing_ok: bool,
    pub los_ok: bool,
    pub sinr_ok: bool,
}

impl CellFeasibility {
    pub fn all(&self) -> bool {
        self.sensing_ok && self.los_ok && self.sinr_ok
    }
}

/// Sensing, LoS-count and SINR predicates for one cell.
pub fn cell_feasible(
    site_stats: &[CellChannelStats],
    trimmed: bool,
    deployment: &Deployment,
    params: &RadioParams,
) -> CellFeasibility {
    CellFeasibility {
        sensing_ok: meets(sensing_power(site_stats, trimmed, deployment), params.sense_threshold),
        los_ok: los_count(site_stats, trimmed, deployment) >= MIN_LOS_SITES,
        sinr_ok: meets(
            best_worst_case_sinr(site_stats, trimmed, deployment, params),
            params.sinr_threshold,
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRadioViolation {
    pub cell: CellIndex,
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub ok: bool,
    pub corridor: ValidationReport,
    pub radio_violations: Vec<CellRadioViolation>,
}

/// Full feasibility check of a corridor and deployment.
pub fn verify_solution(
    mask: &CorridorMask,
    deployment: &Deployment,
    stats: &StatsGrid,
    params: &RadioParams,
) -> VerificationReport {
    let corridor = validate_corridor(mask);
    let mut radio_violations = Vec::new();
    for cell in mask.active_cells() {
        let f = cell_feasible(stats.at(cell), stats.use_trimmed, deployment, params);
        if !f.all() {
            let mut failed = Vec::new();
            if !f.sensing_ok {
                failed.push("sensing".to_string());
            }
            if !f.los_ok {
                failed.push("los".to_string());
            }
            if !f.sinr_ok {
                failed.push("sinr".to_string());
            }
            radio_violations.push(CellRadioViolation { cell, failed });
        }
    }
    VerificationReport {
        ok: corridor.ok && radio_violations.is_empty(),
        corridor,
        radio_violations,
    }
}

/// Weighted corridor length plus deployed-site count.
pub fn solution_cost(mask: &CorridorMask, deployment: &Deployment, weights: &CostWeights) -> f64 {
    cost_of(mask.count(), deployment.count(), weights)
}

pub fn cost_of(length: usize, sites: usize, weights: &CostWeights) -> f64 {
    weights.alpha1 * length as f64 + weights.alpha2 * sites as f64
}

/// Smallest Big-M that never cuts off a deactivated SINR row on `stats`:
/// the largest possible interference-plus-noise term scaled by the threshold.
pub fn safe_big_m(stats: &StatsGrid, params: &RadioParams) -> f64 {
    let mut worst: f64 = 0.0;
    for cell in 0..stats.side * stats.side {
        let site_stats = stats.at(CellIndex::from_offset(cell, stats.side));
        let total: f64 = site_stats
            .iter()
            .map(|s| params.tx_power * s.interfering_gain(stats.use_trimmed))
            .sum();
        for s in site_stats {
            let others = total - params.tx_power * s.interfering_gain(stats.use_trimmed);
            worst = worst.max(params.sinr_threshold * (others.max(0.0) + params.noise));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(h_min: f64, h_max: f64, los: bool, echo: f64) -> CellChannelStats {
        CellChannelStats {
            h_min,
            h_max,
            h_min_trim: h_min,
            h_max_trim: h_max,
            los,
            echo_min: if los { echo } else { 0.0 },
            los_trim: los,
            echo_min_trim: if los { echo } else { 0.0 },
        }
    }

    fn params() -> RadioParams {
        RadioParams {
            tx_power: 1.0,
            tx_gain: 15.85,
            noise: 1e-14,
            wavelength: 0.3,
            rcs: 1.0,
            sense_threshold: 1e-12,
            sinr_threshold: 2.0,
            big_m: None,
        }
    }

    #[test]
    fn db_conversions() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
        assert!((dbm_to_watts(-110.0) / 1e-14 - 1.0).abs() < 1e-12);
        assert!((db_to_linear(3.0) - 1.995_262_314_968_879_5).abs() < 1e-12);
        for x in [-140.0, -3.5, 0.0, 12.0, 77.7] {
            let back = linear_to_db(db_to_linear(x));
            assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn single_site_sinr_closed_form() {
        let p = params();
        let site = [stats(1e-9, 1e-9, true, 0.0)];
        let d = Deployment::all(1);
        let g = worst_case_sinr(0, &site, false, &d, &p);
        assert!((g / 1.585e6 - 1.0).abs() < 1e-12);
        assert_eq!(worst_case_sinr(0, &site, false, &Deployment::none(1), &p), 0.0);
    }

    #[test]
    fn two_site_sinr_closed_form() {
        let p = params();
        let sites = [stats(1e-9, 1e-9, true, 0.0), stats(2e-9, 2e-9, true, 0.0)];
        let g = worst_case_sinr(0, &sites, false, &Deployment::all(2), &p);
        let expect = 1.585e-8 / (2e-9 + 1e-14);
        assert!((g / expect - 1.0).abs() < 1e-12);
        assert!((g - 7.92).abs() < 0.01);
    }

    #[test]
    fn tight_threshold_boundary_is_met() {
        let p = params();
        let h = p.sinr_threshold * p.noise / (p.tx_power * p.tx_gain);
        let site = [stats(h, h, true, 1.0)];
        let g = worst_case_sinr(0, &site, false, &Deployment::all(1), &p);
        assert!((g / p.sinr_threshold - 1.0).abs() < 1e-12);
        assert!(meets(g, p.sinr_threshold));
    }

    #[test]
    fn nothing_deployed_fails_everything() {
        let p = params();
        let sites = vec![stats(1e-6, 1e-6, true, 1.0); 4];
        let f = cell_feasible(&sites, false, &Deployment::none(4), &p);
        assert_eq!(f, CellFeasibility { sensing_ok: false, los_ok: false, sinr_ok: false });
    }

    #[test]
    fn sensing_is_additive_and_los_needs_three() {
        let mut p = params();
        p.sinr_threshold = 1e-6;
        let sites = vec![stats(1e-9, 1e-9, true, p.sense_threshold / 2.0); 3];
        let f = cell_feasible(&sites, false, &Deployment::all(3), &p);
        assert!(f.sensing_ok && f.los_ok);
        let two = Deployment::from_sites(3, &[0, 1]);
        let f = cell_feasible(&sites, false, &two, &p);
        assert!(f.sensing_ok);
        assert!(!f.los_ok);
    }

    #[test]
    fn sinr_is_not_monotone_in_deployment() {
        // Site 0 alone is fine; adding the strong interferer 1 breaks it and
        // site 1 itself is too weak once site 0 interferes.
        let p = params();
        let sites = [stats(1e-9, 1e-9, true, 0.0), stats(1e-10, 1e-8, true, 0.0)];
        let alone = cell_feasible(&sites, false, &Deployment::from_sites(2, &[0]), &p);
        let both = cell_feasible(&sites, false, &Deployment::all(2), &p);
        assert!(alone.sinr_ok);
        assert!(!both.sinr_ok);
    }

    #[test]
    fn cost_values() {
        let w = CostWeights::new(0.5, 0.5).unwrap();
        assert_eq!(cost_of(19, 8, &w), 13.5);
        assert_eq!(cost_of(199, 7, &w), 103.0);
        assert_eq!(cost_of(0, 0, &w), 0.0);
        assert!(CostWeights::new(0.6, 0.6).is_err());
        assert!(CostWeights::new(-0.1, 1.1).is_err());
    }

    #[test]
    fn echo_spot_value() {
        let p = RadioParams::from_db(30.0, 12.0, -110.0, 1e9, 1.0, -75.0, 3.0, None).unwrap();
        let dbm = watts_to_dbm(echo_power(125.0, &p));
        assert!((dbm - -85.3).abs() < 0.1, "{dbm}");
    }

    #[test]
    fn radio_params_validation() {
        assert!(RadioParams::from_db(30.0, -1.0, -110.0, 1e9, 1.0, -75.0, 3.0, None).is_err());
        assert!(RadioParams::from_db(30.0, 12.0, -110.0, 1e9, 0.0, -75.0, 3.0, None).is_err());
        assert!(RadioParams::from_db(30.0, 12.0, -110.0, 1e9, 1.0, -75.0, 3.0, Some(-1.0)).is_err());
    }
}
