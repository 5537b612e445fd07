//! Seeded discrete-time simulation of the live RAN: cells, moving UEs,
//! correlated shadowing, serving-cell reselection and per-tick reports.
//!
//! One call to [`SimState::step`] advances 10 ms of simulated time (by
//! default) and runs a fixed pipeline:
//!
//! 0. settle the previous tick's allocation into `achieved_mbps`
//! 1. mobility with reflective walls
//! 2. shadowing evolution
//! 3. serving-cell reselection with hysteresis
//! 4. true channel sampling
//! 5. fault corruption of reports
//! 6. traffic demand resampling
//! 7. report emission

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::anomaly::{inject_fault, FaultSpec};
use crate::error::{Error, Result};
use crate::radio::{self, ChannelSample, LinkBudgetParams};
use crate::twin::{predict_throughput, AllocationPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(pub u32);

impl fmt::Display for UeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    pub min_speed_mps: f64,
    pub max_speed_mps: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self { min_speed_mps: 0.5, max_speed_mps: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    /// Mean demand for priority classes 1, 2, 3 and 4.
    pub mean_demand_mbps: [f64; 4],
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self { mean_demand_mbps: [0.5, 1.0, 1.5, 2.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_cells: usize,
    pub n_ues: usize,
    pub area_m: f64,
    pub tick_ms: f64,
    pub n_ticks: u64,
    pub seed: u64,
    pub cell_tx_power_per_re_dbm: f64,
    pub cell_prbs: u32,
    pub hysteresis_db: f64,
    pub shadowing_correlation: f64,
    pub link_params: LinkBudgetParams,
    pub mobility: MobilityConfig,
    pub traffic: TrafficConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_cells: 3,
            n_ues: 50,
            area_m: 500.0,
            tick_ms: 10.0,
            n_ticks: 2000,
            seed: 42,
            cell_tx_power_per_re_dbm: 0.0,
            cell_prbs: 50,
            hysteresis_db: 3.0,
            shadowing_correlation: 0.9,
            link_params: LinkBudgetParams::default(),
            mobility: MobilityConfig::default(),
            traffic: TrafficConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cells == 0 {
            return Err(Error::config("n_cells", "must be >= 1"));
        }
        if self.n_ues == 0 {
            return Err(Error::config("n_ues", "must be >= 1"));
        }
        if !(self.area_m > 0.0) || !self.area_m.is_finite() {
            return Err(Error::config("area_m", "must be positive and finite"));
        }
        if !(self.tick_ms > 0.0) || !self.tick_ms.is_finite() {
            return Err(Error::config("tick_ms", "must be > 0"));
        }
        if !self.cell_tx_power_per_re_dbm.is_finite() {
            return Err(Error::config("cell_tx_power_per_re_dbm", "must be finite"));
        }
        if self.cell_prbs == 0 {
            return Err(Error::config("cell_prbs", "must be > 0"));
        }
        if !(self.hysteresis_db >= 0.0) {
            return Err(Error::config("hysteresis_db", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.shadowing_correlation) {
            return Err(Error::config("shadowing_correlation", "must lie in [0, 1]"));
        }
        let m = &self.mobility;
        if !(m.min_speed_mps >= 0.0) || !(m.max_speed_mps >= m.min_speed_mps) || !m.max_speed_mps.is_finite() {
            return Err(Error::config("mobility", "speeds must satisfy 0 <= min_speed_mps <= max_speed_mps"));
        }
        for (i, d) in self.traffic.mean_demand_mbps.iter().enumerate() {
            if !(*d > 0.0) || !d.is_finite() {
                return Err(Error::config(format!("traffic.mean_demand_mbps[{i}]"), "must be positive"));
            }
        }
        self.link_params.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub cell_id: CellId,
    pub position: Point,
    pub tx_power_per_re_dbm: f64,
    pub total_prbs: u32,
}

/// A fault currently corrupting a UE's reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveFault {
    pub spec: FaultSpec,
    pub remaining_ticks: u32,
}

/// PRB boost installed by a remediation action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrbBoost {
    pub factor: f64,
    /// Last report tick whose allocation is boosted.
    pub until_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeState {
    pub ue_id: UeId,
    pub position: Point,
    pub velocity: Point,
    pub serving_cell: CellId,
    pub traffic_priority: u8,
    pub demand_mbps: f64,
    /// Shadowing towards each cell, indexed like `SimState::cells`.
    pub shadowing_db: Vec<f64>,
    pub active_fault: Option<ActiveFault>,
    pub granted_prbs: u32,
    /// Uncorrupted channel of the last emitted report.
    pub true_channel: Option<ChannelSample>,
    pub achieved_mbps: f64,
    pub pinned: bool,
    pub boost: Option<PrbBoost>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementReport {
    pub tick: u64,
    pub ue_id: UeId,
    pub serving_cell: CellId,
    pub channel: ChannelSample,
    pub neighbor_rsrp_dbm: BTreeMap<CellId, f64>,
    pub demand_mbps: f64,
    pub priority: u8,
    pub achieved_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickKpis {
    pub tick: u64,
    pub handovers: u32,
    pub faulted_ues: u32,
    pub mean_sinr_db: f64,
    pub total_demand_mbps: f64,
    pub total_achieved_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub config: SimConfig,
    pub tick: u64,
    pub cells: Vec<CellState>,
    pub ues: Vec<UeState>,
    rng: ChaCha8Rng,
}

/// Pick the serving cell with hysteresis. A neighbor wins only if it beats
/// the serving cell by strictly more than `hysteresis_db`; among winners the
/// strongest is chosen, ties going to the lowest id.
pub fn select_serving_cell(
    serving: CellId,
    rsrp_by_cell: &BTreeMap<CellId, f64>,
    hysteresis_db: f64,
) -> Result<CellId> {
    let serving_rsrp = *rsrp_by_cell
        .get(&serving)
        .ok_or_else(|| Error::domain(format!("serving cell {serving} missing from RSRP map")))?;
    let mut best = serving;
    let mut best_rsrp = serving_rsrp + hysteresis_db;
    for (&cell, &rsrp) in rsrp_by_cell {
        if cell != serving && rsrp > best_rsrp {
            best = cell;
            best_rsrp = rsrp;
        }
    }
    Ok(best)
}

fn strongest_cell(rsrp_by_cell: &BTreeMap<CellId, f64>) -> CellId {
    let mut best: Option<(CellId, f64)> = None;
    for (&cell, &rsrp) in rsrp_by_cell {
        if best.is_none_or(|(_, b)| rsrp > b) {
            best = Some((cell, rsrp));
        }
    }
    best.expect("at least one cell").0
}

fn grid_positions(n: usize, area: f64) -> Vec<Point> {
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    (0..n)
        .map(|i| Point {
            x: ((i % cols) as f64 + 0.5) * area / cols as f64,
            y: ((i / cols) as f64 + 0.5) * area / rows as f64,
        })
        .collect()
}

fn reflect(pos: &mut f64, vel: &mut f64, area: f64) {
    loop {
        if *pos < 0.0 {
            *pos = -*pos;
            *vel = -*vel;
        } else if *pos > area {
            *pos = 2.0 * area - *pos;
            *vel = -*vel;
        } else {
            break;
        }
    }
}

impl SimState {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let cells: Vec<CellState> = grid_positions(config.n_cells, config.area_m)
            .into_iter()
            .enumerate()
            .map(|(i, position)| CellState {
                cell_id: CellId(i as u32),
                position,
                tx_power_per_re_dbm: config.cell_tx_power_per_re_dbm,
                total_prbs: config.cell_prbs,
            })
            .collect();

        let shadow = Normal::new(0.0, config.link_params.shadowing_sigma_db)
            .map_err(|e| Error::config("link_params.shadowing_sigma_db", e.to_string()))?;
        let mut ues = Vec::with_capacity(config.n_ues);
        for i in 0..config.n_ues {
            let position = Point { x: rng.random_range(0.0..=config.area_m), y: rng.random_range(0.0..=config.area_m) };
            let speed = if config.mobility.max_speed_mps > config.mobility.min_speed_mps {
                rng.random_range(config.mobility.min_speed_mps..config.mobility.max_speed_mps)
            } else {
                config.mobility.min_speed_mps
            };
            let heading = rng.random_range(0.0..std::f64::consts::TAU);
            let priority = rng.random_range(1..=4u8);
            let shadowing_db: Vec<f64> = (0..cells.len()).map(|_| shadow.sample(&mut rng)).collect();
            ues.push(UeState {
                ue_id: UeId(i as u32),
                position,
                velocity: Point { x: speed * heading.cos(), y: speed * heading.sin() },
                serving_cell: CellId(0),
                traffic_priority: priority,
                demand_mbps: 0.0,
                shadowing_db,
                active_fault: None,
                granted_prbs: 0,
                true_channel: None,
                achieved_mbps: 0.0,
                pinned: false,
                boost: None,
            });
        }
        let mut state = SimState { config, tick: 0, cells, ues, rng };
        for idx in 0..state.ues.len() {
            let map = state.rsrp_map(idx)?;
            state.ues[idx].serving_cell = strongest_cell(&map);
        }
        for idx in 0..state.ues.len() {
            state.ues[idx].demand_mbps = state.sample_demand(state.ues[idx].traffic_priority)?;
        }
        Ok(state)
    }

    pub fn ue(&self, id: UeId) -> Option<&UeState> {
        self.ues.iter().find(|u| u.ue_id == id)
    }

    fn ue_index(&self, id: UeId) -> Result<usize> {
        self.ues.iter().position(|u| u.ue_id == id).ok_or_else(|| Error::domain(format!("unknown UE {id}")))
    }

    fn cell_index(&self, id: CellId) -> Result<usize> {
        self.cells.iter().position(|c| c.cell_id == id).ok_or_else(|| Error::domain(format!("unknown cell {id}")))
    }

    fn sample_demand(&mut self, priority: u8) -> Result<f64> {
        let mean = self.config.traffic.mean_demand_mbps[usize::from(priority.clamp(1, 4) - 1)];
        let exp = Exp::new(1.0 / mean).map_err(|e| Error::config("traffic", e.to_string()))?;
        Ok(exp.sample(&mut self.rng))
    }

    /// Received reference power from every cell at UE `idx`, from geometry
    /// and the current shadowing state.
    pub fn rsrp_map(&self, idx: usize) -> Result<BTreeMap<CellId, f64>> {
        let ue = &self.ues[idx];
        self.cells
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                let d = ue.position.distance(&cell.position).max(f64::MIN_POSITIVE);
                let pl = radio::path_loss_db(d, &self.config.link_params)?;
                Ok((cell.cell_id, radio::rsrp_dbm(cell.tx_power_per_re_dbm, pl, ue.shadowing_db[c])))
            })
            .collect()
    }

    /// Install a fault on a UE, replacing any fault already active.
    pub fn set_fault(&mut self, ue: UeId, spec: FaultSpec) -> Result<()> {
        spec.validate()?;
        let idx = self.ue_index(ue)?;
        self.ues[idx].active_fault = Some(ActiveFault { remaining_ticks: spec.duration_ticks, spec });
        Ok(())
    }

    pub fn force_handover(&mut self, ue: UeId, target: CellId) -> Result<()> {
        let idx = self.ue_index(ue)?;
        self.cell_index(target)?;
        let u = &mut self.ues[idx];
        if u.serving_cell != target {
            u.serving_cell = target;
            u.pinned = true;
        }
        Ok(())
    }

    /// Boost the UE's allocation weight for reports up to `tick + duration`.
    pub fn boost_prbs(&mut self, ue: UeId, factor: f64, duration_ticks: u32) -> Result<()> {
        if !(factor > 1.0) || !factor.is_finite() {
            return Err(Error::domain(format!("boost factor must be > 1, got {factor}")));
        }
        let idx = self.ue_index(ue)?;
        let until_tick = self.tick + u64::from(duration_ticks);
        self.ues[idx].boost = Some(PrbBoost { factor, until_tick });
        Ok(())
    }

    /// Boost multipliers in force for the allocation of `tick`'s reports.
    pub fn active_boosts(&self, tick: u64) -> BTreeMap<UeId, f64> {
        self.ues
            .iter()
            .filter_map(|u| match u.boost {
                Some(b) if tick <= b.until_tick => Some((u.ue_id, b.factor)),
                _ => None,
            })
            .collect()
    }

    /// Record the grants the twin decided for the current tick; they are
    /// settled into `achieved_mbps` on the next step.
    pub fn apply_allocation(&mut self, plan: &AllocationPlan) {
        for ue in &mut self.ues {
            ue.granted_prbs = plan.grants.get(&ue.ue_id).copied().unwrap_or(0);
        }
    }

    pub fn step(&mut self) -> Result<(Vec<MeasurementReport>, TickKpis)> {
        let cfg = self.config.clone();
        let dt = cfg.tick_ms / 1000.0;
        self.tick += 1;
        let tick = self.tick;

        // 0. settle last tick's grants on last tick's true channel
        for ue in &mut self.ues {
            ue.achieved_mbps = match ue.true_channel {
                Some(ch) => {
                    predict_throughput(ue.granted_prbs, ch.sinr_db, ch.cqi, &cfg.link_params).min(ue.demand_mbps)
                }
                None => 0.0,
            };
            if ue.boost.is_some_and(|b| tick > b.until_tick) {
                ue.boost = None;
            }
        }

        // 1. mobility
        for ue in &mut self.ues {
            ue.position.x += ue.velocity.x * dt;
            ue.position.y += ue.velocity.y * dt;
            reflect(&mut ue.position.x, &mut ue.velocity.x, cfg.area_m);
            reflect(&mut ue.position.y, &mut ue.velocity.y, cfg.area_m);
        }

        // 2. shadowing
        let rho = cfg.shadowing_correlation;
        let innovation = (1.0 - rho * rho).sqrt();
        let shadow = Normal::new(0.0, cfg.link_params.shadowing_sigma_db)
            .map_err(|e| Error::config("link_params.shadowing_sigma_db", e.to_string()))?;
        for ue in &mut self.ues {
            for s in &mut ue.shadowing_db {
                let z = shadow.sample(&mut self.rng);
                *s = rho * *s + innovation * z;
            }
        }

        // 3. reselection
        let mut handovers = 0;
        let mut maps = Vec::with_capacity(self.ues.len());
        for idx in 0..self.ues.len() {
            let map = self.rsrp_map(idx)?;
            let ue = &mut self.ues[idx];
            if ue.pinned {
                ue.pinned = false;
            } else {
                let next = select_serving_cell(ue.serving_cell, &map, cfg.hysteresis_db)?;
                if next != ue.serving_cell {
                    ue.serving_cell = next;
                    handovers += 1;
                }
            }
            maps.push(map);
        }

        // 4. true channel
        let noise = cfg.link_params.noise_per_re_dbm();
        let mut reports = Vec::with_capacity(self.ues.len());
        for (idx, map) in maps.into_iter().enumerate() {
            let serving = self.ues[idx].serving_cell;
            let serving_prbs = self.cells[self.cell_index(serving)?].total_prbs;
            let interferers: Vec<f64> = map.iter().filter(|(c, _)| **c != serving).map(|(_, p)| *p).collect();
            let channel = radio::channel_sample(map[&serving], &interferers, noise, serving_prbs)?;
            let ue = &mut self.ues[idx];
            ue.true_channel = Some(channel);
            let mut neighbor_rsrp_dbm = map;
            neighbor_rsrp_dbm.remove(&serving);
            reports.push(MeasurementReport {
                tick,
                ue_id: ue.ue_id,
                serving_cell: serving,
                channel,
                neighbor_rsrp_dbm,
                demand_mbps: 0.0,
                priority: ue.traffic_priority,
                achieved_mbps: ue.achieved_mbps,
            });
        }

        // 5. fault corruption
        let mut faulted = 0;
        for (ue, report) in self.ues.iter_mut().zip(reports.iter_mut()) {
            if let Some(fault) = ue.active_fault.as_mut() {
                *report = inject_fault(report, &fault.spec, &mut self.rng)?;
                faulted += 1;
                fault.remaining_ticks -= 1;
                if fault.remaining_ticks == 0 {
                    ue.active_fault = None;
                }
            }
        }

        // 6. demand
        for idx in 0..self.ues.len() {
            let d = self.sample_demand(self.ues[idx].traffic_priority)?;
            self.ues[idx].demand_mbps = d;
            reports[idx].demand_mbps = d;
        }

        // 7. emit
        let n = reports.len().max(1) as f64;
        let kpis = TickKpis {
            tick,
            handovers,
            faulted_ues: faulted,
            mean_sinr_db: self.ues.iter().filter_map(|u| u.true_channel.map(|c| c.sinr_db)).sum::<f64>() / n,
            total_demand_mbps: reports.iter().map(|r| r.demand_mbps).sum(),
            total_achieved_mbps: reports.iter().map(|r| r.achieved_mbps).sum(),
        };
        Ok((reports, kpis))
    }
}

/// Write reports as JSON lines, one report per line.
pub fn write_reports_jsonl<W: std::io::Write>(mut w: W, reports: &[MeasurementReport]) -> std::io::Result<()> {
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anomaly::{AnomalyClass, FaultSpec};

    fn small(seed: u64) -> SimConfig {
        SimConfig { n_ues: 12, seed, ..SimConfig::default() }
    }

    #[test]
    fn single_cell_serves_everyone() {
        let s = SimState::new(SimConfig { n_cells: 1, ..small(1) }).unwrap();
        assert!(s.ues.iter().all(|u| u.serving_cell == CellId(0)));
    }

    #[test]
    fn init_is_deterministic() {
        let a = serde_json::to_vec(&SimState::new(small(7)).unwrap()).unwrap();
        let b = serde_json::to_vec(&SimState::new(small(7)).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_vec(&SimState::new(small(8)).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_structure() {
        let s = SimState::new(SimConfig { n_cells: 3, n_ues: 50, seed: 42, ..Default::default() }).unwrap();
        assert_eq!(s.ues.len(), 50);
        assert_eq!(s.cells.len(), 3);
        for u in &s.ues {
            assert!(u.serving_cell.0 < 3);
            assert!((1..=4).contains(&u.traffic_priority));
            assert_eq!(u.shadowing_db.len(), 3);
        }
    }

    #[test]
    fn initial_serving_cell_is_strongest() {
        let s = SimState::new(small(3)).unwrap();
        for idx in 0..s.ues.len() {
            let map = s.rsrp_map(idx).unwrap();
            let best = map.values().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(map[&s.ues[idx].serving_cell], best);
        }
    }

    #[test]
    fn invalid_config_names_field() {
        for (cfg, field) in [
            (SimConfig { n_cells: 0, ..Default::default() }, "n_cells"),
            (SimConfig { n_ues: 0, ..Default::default() }, "n_ues"),
            (SimConfig { tick_ms: 0.0, ..Default::default() }, "tick_ms"),
        ] {
            match SimState::new(cfg) {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected config error, got {other:?}"),
            }
        }
    }

    #[test]
    fn config_rejects_unknown_keys_and_fills_defaults() {
        let cfg = SimConfig::from_toml_str("n_ues = 7\n[link_params]\nshadowing_sigma_db = 4.0\n").unwrap();
        assert_eq!(cfg.n_ues, 7);
        assert_eq!(cfg.n_cells, 3);
        assert_eq!(cfg.link_params.shadowing_sigma_db, 4.0);
        assert_eq!(cfg.link_params.path_loss_exponent, 3.5);
        assert!(SimConfig::from_toml_str("n_uez = 7\n").is_err());
        assert!(SimConfig::from_toml_str("[link_params]\nbogus = 1\n").is_err());
        let round = SimConfig::from_toml_str(&SimConfig::default().to_toml_string()).unwrap();
        assert_eq!(round, SimConfig::default());
    }

    #[test]
    fn frozen_dynamics() {
        let cfg = SimConfig {
            shadowing_correlation: 1.0,
            mobility: MobilityConfig { min_speed_mps: 0.0, max_speed_mps: 0.0 },
            ..small(5)
        };
        let mut s = SimState::new(cfg).unwrap();
        let (r1, _) = s.step().unwrap();
        let pos: Vec<Point> = s.ues.iter().map(|u| u.position).collect();
        let (r2, _) = s.step().unwrap();
        assert_eq!(pos, s.ues.iter().map(|u| u.position).collect::<Vec<_>>());
        for (a, b) in r1.iter().zip(&r2) {
            assert_eq!(a.channel.rsrp_dbm, b.channel.rsrp_dbm);
        }
    }

    #[test]
    fn stepping_is_deterministic_and_ticks_increase() {
        let mut a = SimState::new(small(9)).unwrap();
        a.step().unwrap();
        let mut b = a.clone();
        for expected in 2..20u64 {
            let (ra, ka) = a.step().unwrap();
            let (rb, kb) = b.step().unwrap();
            assert_eq!(ra, rb);
            assert_eq!(ka, kb);
            assert_eq!(ra.len(), 12);
            assert!(ra.iter().all(|r| r.tick == expected));
            assert!(ra.iter().all(|r| !r.neighbor_rsrp_dbm.contains_key(&r.serving_cell)));
        }
    }

    #[test]
    fn reselection_rules() {
        let one: BTreeMap<_, _> = [(CellId(0), -100.0)].into();
        assert_eq!(select_serving_cell(CellId(0), &one, 3.0).unwrap(), CellId(0));
        let edge: BTreeMap<_, _> = [(CellId(0), -100.0), (CellId(1), -97.0)].into();
        assert_eq!(select_serving_cell(CellId(0), &edge, 3.0).unwrap(), CellId(0));
        let over: BTreeMap<_, _> = [(CellId(0), -100.0), (CellId(1), -95.0)].into();
        assert_eq!(select_serving_cell(CellId(0), &over, 3.0).unwrap(), CellId(1));
        let tie: BTreeMap<_, _> = [(CellId(0), -100.0), (CellId(1), -90.0), (CellId(2), -90.0)].into();
        assert_eq!(select_serving_cell(CellId(0), &tie, 3.0).unwrap(), CellId(1));
        assert!(select_serving_cell(CellId(5), &one, 3.0).is_err());
    }

    #[test]
    fn forced_handover_sticks_for_one_reselection() {
        let mut s = SimState::new(SimConfig { shadowing_correlation: 1.0, ..small(11) }).unwrap();
        s.step().unwrap();
        let ue = s.ues[0].ue_id;
        let current = s.ues[0].serving_cell;
        let target = s.cells.iter().map(|c| c.cell_id).find(|c| *c != current).unwrap();
        s.force_handover(ue, target).unwrap();
        let (reports, _) = s.step().unwrap();
        assert_eq!(reports[0].serving_cell, target);
        assert!(s.force_handover(UeId(999), target).is_err());
        assert!(s.force_handover(ue, CellId(999)).is_err());
    }

    #[test]
    fn forced_handover_to_current_cell_is_noop() {
        let mut s = SimState::new(small(12)).unwrap();
        let before = s.clone();
        let ue = s.ues[3].ue_id;
        let cell = s.ues[3].serving_cell;
        s.force_handover(ue, cell).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn faults_expire_after_duration() {
        let mut s = SimState::new(small(13)).unwrap();
        let spec = FaultSpec { class: AnomalyClass::RsrpError, offset_db: -20.0, jitter_db: 0.0, duration_ticks: 3 };
        s.set_fault(UeId(2), spec).unwrap();
        for _ in 0..3 {
            let (_, k) = s.step().unwrap();
            assert_eq!(k.faulted_ues, 1);
        }
        let (_, k) = s.step().unwrap();
        assert_eq!(k.faulted_ues, 0);
    }

    #[test]
    fn boost_expires() {
        let mut s = SimState::new(small(14)).unwrap();
        s.boost_prbs(UeId(1), 2.0, 2).unwrap();
        assert_eq!(s.active_boosts(1).get(&UeId(1)), Some(&2.0));
        assert_eq!(s.active_boosts(2).get(&UeId(1)), Some(&2.0));
        assert!(s.active_boosts(3).is_empty());
        assert!(s.boost_prbs(UeId(1), 1.0, 2).is_err());
    }
}
