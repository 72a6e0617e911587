//! Cost accounting over a finished run.

use serde::{Deserialize, Serialize};

use crate::scenario::Tariff;
use crate::store::SnapshotStream;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CostError {
    #[error("demand interval {interval} min does not divide the {horizon}-minute horizon into whole {step}-minute steps")]
    Interval { interval: u32, horizon: u32, step: u32 },
    #[error("tariff covers {tariff} steps but the stream has {stream}")]
    Length { tariff: usize, stream: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub energy_cost_usd: f64,
    pub demand_charge_usd: f64,
    pub upstream_purchase_usd: f64,
    /// Charging energy cost per step.
    pub energy_cost_series: Vec<f64>,
    /// LMP-priced substation purchase per step.
    pub upstream_cost_series: Vec<f64>,
    /// Average total station power of each demand window.
    pub demand_window_kw: Vec<f64>,
}

fn step_hours(stream: &SnapshotStream) -> f64 {
    f64::from(stream.header.grid.step_minutes) / 60.0
}

fn check_len(stream: &SnapshotStream, tariff: &Tariff) -> Result<(), CostError> {
    let n = stream.len();
    if tariff.tou_price.len() < n || tariff.lmp.len() < n {
        return Err(CostError::Length { tariff: tariff.tou_price.len().min(tariff.lmp.len()), stream: n });
    }
    Ok(())
}

pub fn energy_cost_series(stream: &SnapshotStream, tariff: &Tariff) -> Vec<f64> {
    let h = step_hours(stream);
    stream
        .snapshots
        .iter()
        .map(|s| s.stations.iter().map(|st| st.p_kw * h * tariff.tou_price[s.t]).sum())
        .collect()
}

pub fn upstream_cost_series(stream: &SnapshotStream, tariff: &Tariff) -> Vec<f64> {
    let h = step_hours(stream);
    stream.snapshots.iter().map(|s| s.substation_p_kw * h * tariff.lmp[s.t] / 1000.0).collect()
}

/// Total charging energy cost in dollars.
pub fn energy_cost(stream: &SnapshotStream, tariff: &Tariff) -> f64 {
    energy_cost_series(stream, tariff).iter().sum()
}

/// Substation energy valued at the locational marginal price, in dollars.
pub fn upstream_cost(stream: &SnapshotStream, tariff: &Tariff) -> f64 {
    upstream_cost_series(stream, tariff).iter().sum()
}

/// Average total station power of each non-overlapping demand window.
pub fn demand_windows(stream: &SnapshotStream, tariff: &Tariff) -> Result<Vec<f64>, CostError> {
    let step = stream.header.grid.step_minutes;
    let horizon = step * stream.len() as u32;
    let interval = tariff.demand_interval_minutes;
    if interval == 0 || !interval.is_multiple_of(step) || !horizon.is_multiple_of(interval) {
        return Err(CostError::Interval { interval, horizon, step });
    }
    let per_window = (interval / step) as usize;
    Ok(stream
        .snapshots
        .chunks(per_window)
        .map(|w| w.iter().map(|s| s.total_station_kw()).sum::<f64>() / per_window as f64)
        .collect())
}

/// Demand rate times the largest window-average station power.
pub fn demand_charge(stream: &SnapshotStream, tariff: &Tariff) -> Result<f64, CostError> {
    let peak = demand_windows(stream, tariff)?.into_iter().fold(0.0, f64::max);
    Ok(tariff.demand_rate_per_kw * peak)
}

impl CostReport {
    pub fn compute(stream: &SnapshotStream, tariff: &Tariff) -> Result<Self, CostError> {
        check_len(stream, tariff)?;
        let energy_cost_series = energy_cost_series(stream, tariff);
        let upstream_cost_series = upstream_cost_series(stream, tariff);
        let demand_window_kw = demand_windows(stream, tariff)?;
        let peak = demand_window_kw.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            energy_cost_usd: energy_cost_series.iter().sum(),
            demand_charge_usd: tariff.demand_rate_per_kw * peak,
            upstream_purchase_usd: upstream_cost_series.iter().sum(),
            energy_cost_series,
            upstream_cost_series,
            demand_window_kw,
        })
    }
}
