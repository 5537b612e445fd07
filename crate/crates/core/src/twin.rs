//! The twin's simulation engine: priority- and channel-aware PRB allocation
//! plus per-UE throughput prediction.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::{db_to_linear, efficiency_cap, LinkBudgetParams};
use crate::sim::{CellId, CellState, MeasurementReport, UeId};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub tick: u64,
    pub grants: BTreeMap<UeId, u32>,
    pub cell_totals: BTreeMap<CellId, u32>,
}

impl AllocationPlan {
    pub fn grant(&self, ue: UeId) -> u32 {
        self.grants.get(&ue).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedKpi {
    pub ue_id: UeId,
    pub predicted_mbps: f64,
    pub spectral_efficiency: f64,
}

/// Achievable spectral efficiency: Shannon bound capped by the CQI ladder.
pub fn spectral_efficiency(sinr_db: f64, cqi: u8) -> f64 {
    (1.0 + db_to_linear(sinr_db)).log2().min(efficiency_cap(cqi))
}

pub fn predict_throughput(grant: u32, sinr_db: f64, cqi: u8, params: &LinkBudgetParams) -> f64 {
    if grant == 0 {
        return 0.0;
    }
    f64::from(grant) * params.prb_bandwidth_hz * spectral_efficiency(sinr_db, cqi) / 1e6
}

pub fn allocate_prbs(
    reports: &[MeasurementReport],
    cells: &[CellState],
    params: &LinkBudgetParams,
) -> Result<AllocationPlan> {
    allocate_prbs_weighted(reports, cells, &BTreeMap::new(), params)
}

/// Greedy per-PRB allocation maximizing priority-weighted served
/// throughput. `boosts` multiplies the priority weight of listed UEs.
///
/// Each PRB of a cell goes to the UE with the largest
/// `weight * min(per_prb_rate, remaining_demand)`; ties go to the lowest
/// UE id. A cell stops allocating once no UE has positive marginal utility.
pub fn allocate_prbs_weighted(
    reports: &[MeasurementReport],
    cells: &[CellState],
    boosts: &BTreeMap<UeId, f64>,
    params: &LinkBudgetParams,
) -> Result<AllocationPlan> {
    struct Candidate {
        ue: UeId,
        weight: f64,
        rate: f64,
        remaining: f64,
        grant: u32,
    }

    let mut per_cell: BTreeMap<CellId, Vec<Candidate>> = cells.iter().map(|c| (c.cell_id, Vec::new())).collect();
    for r in reports {
        let bucket = per_cell.get_mut(&r.serving_cell).ok_or_else(|| {
            Error::domain(format!("report for UE {} references unknown cell {}", r.ue_id, r.serving_cell))
        })?;
        bucket.push(Candidate {
            ue: r.ue_id,
            weight: f64::from(r.priority) * boosts.get(&r.ue_id).copied().unwrap_or(1.0),
            rate: predict_throughput(1, r.channel.sinr_db, r.channel.cqi, params),
            remaining: r.demand_mbps.max(0.0),
            grant: 0,
        });
    }

    let mut plan = AllocationPlan {
        tick: reports.first().map_or(0, |r| r.tick),
        grants: BTreeMap::new(),
        cell_totals: cells.iter().map(|c| (c.cell_id, c.total_prbs)).collect(),
    };
    for cell in cells {
        let cands = per_cell.get_mut(&cell.cell_id).expect("bucket per cell");
        cands.sort_by_key(|c| c.ue);
        for _ in 0..cell.total_prbs {
            let mut best: Option<(usize, f64)> = None;
            for (i, c) in cands.iter().enumerate() {
                let u = c.weight * c.rate.min(c.remaining);
                if u > 0.0 && best.is_none_or(|(_, b)| u > b) {
                    best = Some((i, u));
                }
            }
            let Some((i, _)) = best else { break };
            let c = &mut cands[i];
            c.grant += 1;
            c.remaining = (c.remaining - c.rate).max(0.0);
        }
        for c in cands.iter() {
            plan.grants.insert(c.ue, c.grant);
        }
    }
    Ok(plan)
}

/// Output of one twin evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinOutput {
    pub plan: AllocationPlan,
    pub kpis: Vec<PredictedKpi>,
    pub elapsed_ms: f64,
}

pub fn twin_tick(
    reports: &[MeasurementReport],
    cells: &[CellState],
    boosts: &BTreeMap<UeId, f64>,
    params: &LinkBudgetParams,
) -> Result<TwinOutput> {
    let start = Instant::now();
    let plan = allocate_prbs_weighted(reports, cells, boosts, params)?;
    let kpis = reports
        .iter()
        .map(|r| {
            let grant = plan.grant(r.ue_id);
            PredictedKpi {
                ue_id: r.ue_id,
                predicted_mbps: predict_throughput(grant, r.channel.sinr_db, r.channel.cqi, params),
                spectral_efficiency: spectral_efficiency(r.channel.sinr_db, r.channel.cqi),
            }
        })
        .collect();
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(TwinOutput { plan, kpis, elapsed_ms })
}

#[derive(Serialize)]
struct PlanLine {
    tick: u64,
    ue_id: UeId,
    prbs: u32,
    predicted_mbps: f64,
}

/// One line per UE: tick, ue_id, prbs, predicted_mbps.
pub fn write_plan_jsonl<W: std::io::Write>(
    mut w: W,
    plan: &AllocationPlan,
    kpis: &[PredictedKpi],
) -> std::io::Result<()> {
    for k in kpis {
        let line =
            PlanLine { tick: plan.tick, ue_id: k.ue_id, prbs: plan.grant(k.ue_id), predicted_mbps: k.predicted_mbps };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
