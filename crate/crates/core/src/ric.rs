//! Near-RT RIC abstraction: an ordered in-process bus, the digital-twin
//! xApp (twin allocation + anomaly inference + debounced remediation) and
//! the lockstep closed loop that ties it to the simulator.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::path::Path;
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::anomaly::{extract_features, standardize, AnomalyClass, FaultSpec, FeatureStats, N_CLASSES};
use crate::error::{Error, Result};
use crate::mlp::{argmax, MlpModel};
use crate::radio::LinkBudgetParams;
use crate::sim::{CellId, CellState, MeasurementReport, SimConfig, SimState, UeId};
use crate::twin::{twin_tick, AllocationPlan, PredictedKpi};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Indication {
    pub tick: u64,
    pub reports: Vec<MeasurementReport>,
    /// PRB boost multipliers in force on the RAN side for this tick.
    #[serde(default)]
    pub prb_boosts: BTreeMap<UeId, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ControlKind {
    PrbBoost { factor: f64, duration_ticks: u32 },
    ForceHandover { target_cell: CellId },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlAction {
    pub tick: u64,
    pub ue_id: UeId,
    pub kind: ControlKind,
    pub cause: AnomalyClass,
}

/// Wire form of everything crossing the bus, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Indication(Indication),
    Control(ControlAction),
}

pub fn write_message<W: Write>(mut w: W, msg: &Message) -> std::io::Result<()> {
    serde_json::to_writer(&mut w, msg)?;
    w.write_all(b"\n")
}

/// Lossless, ordered fan-out of indications to every subscriber.
///
/// Channels are unbounded so a single-context lockstep loop can publish
/// and consume on the same thread; the lockstep itself bounds the backlog.
#[derive(Debug, Default)]
pub struct Bus {
    subscribers: Vec<Sender<Arc<Indication>>>,
    last_tick: Option<u64>,
}

pub struct Subscription {
    rx: Receiver<Arc<Indication>>,
}

impl Subscription {
    pub fn try_recv(&self) -> Option<Arc<Indication>> {
        self.rx.try_recv().ok()
    }

    pub fn recv(&self) -> Option<Arc<Indication>> {
        self.rx.recv().ok()
    }

    pub fn drain(&self) -> Vec<Arc<Indication>> {
        self.rx.try_iter().collect()
    }
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&mut self) -> Subscription {
        let (tx, rx) = mpsc::channel();
        self.subscribers.push(tx);
        Subscription { rx }
    }

    pub fn publish(&mut self, indication: Indication) -> Result<()> {
        if let Some(last) = self.last_tick {
            if indication.tick <= last {
                return Err(Error::Protocol(format!(
                    "tick {} published after tick {last}; ticks must strictly increase",
                    indication.tick
                )));
            }
        }
        if let Some(r) = indication.reports.iter().find(|r| r.tick != indication.tick) {
            return Err(Error::Protocol(format!(
                "indication for tick {} carries a report from tick {}",
                indication.tick, r.tick
            )));
        }
        self.last_tick = Some(indication.tick);
        let msg = Arc::new(indication);
        // subscribers that hung up are dropped
        self.subscribers.retain(|tx| tx.send(Arc::clone(&msg)).is_ok());
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Remedy {
    ForceHandover,
    PrbBoost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemediationPolicy {
    pub confirm_ticks: u32,
    pub clear_ticks: u32,
    pub rsrp_error: Remedy,
    pub rsrq_error: Remedy,
    pub sinr_error: Remedy,
    pub boost_factor: f64,
    pub boost_duration_ticks: u32,
}

impl Default for RemediationPolicy {
    fn default() -> Self {
        Self {
            confirm_ticks: 3,
            clear_ticks: 10,
            rsrp_error: Remedy::ForceHandover,
            rsrq_error: Remedy::ForceHandover,
            sinr_error: Remedy::PrbBoost,
            boost_factor: 2.0,
            boost_duration_ticks: 100,
        }
    }
}

impl RemediationPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.confirm_ticks == 0 {
            return Err(Error::config("policy.confirm_ticks", "must be >= 1"));
        }
        if !(self.boost_factor > 1.0) || !self.boost_factor.is_finite() {
            return Err(Error::config("policy.boost_factor", "must be > 1"));
        }
        Ok(())
    }

    fn remedy(&self, class: AnomalyClass) -> Option<Remedy> {
        match class {
            AnomalyClass::Normal => None,
            AnomalyClass::RsrpError => Some(self.rsrp_error),
            AnomalyClass::RsrqError => Some(self.rsrq_error),
            AnomalyClass::SinrError => Some(self.sinr_error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub ue_id: UeId,
    pub class: AnomalyClass,
    pub probs: [f64; N_CLASSES],
}

#[derive(Debug, Clone, Default)]
struct Debounce {
    recent: VecDeque<AnomalyClass>,
    normal_run: u32,
    disarmed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XappOutput {
    pub plan: AllocationPlan,
    pub kpis: Vec<PredictedKpi>,
    pub actions: Vec<ControlAction>,
    pub detections: Vec<Detection>,
    pub twin_elapsed_ms: f64,
}

/// The digital-twin xApp: runs the twin, classifies every UE and issues
/// debounced remediation actions.
pub struct DtXapp {
    model: Arc<MlpModel>,
    stats: FeatureStats,
    cells: Vec<CellState>,
    params: LinkBudgetParams,
    policy: RemediationPolicy,
    state: BTreeMap<UeId, Debounce>,
}

impl DtXapp {
    pub fn new(
        model: Arc<MlpModel>,
        stats: FeatureStats,
        cells: Vec<CellState>,
        params: LinkBudgetParams,
        policy: RemediationPolicy,
    ) -> Result<Self> {
        policy.validate()?;
        if model.dims().first() != Some(&crate::anomaly::N_FEATURES) {
            return Err(Error::config("model", "input dimension must be 8"));
        }
        Ok(Self { model, stats, cells, params, policy, state: BTreeMap::new() })
    }

    /// Swap in a retrained model; the old one stays valid for any reader
    /// still holding it.
    pub fn replace_model(&mut self, model: Arc<MlpModel>) {
        self.model = model;
    }

    pub fn on_indication(&mut self, ind: &Indication) -> Result<XappOutput> {
        let twin = twin_tick(&ind.reports, &self.cells, &ind.prb_boosts, &self.params)?;
        let mut actions = Vec::new();
        let mut detections = Vec::new();
        let confirm = self.policy.confirm_ticks as usize;
        for (report, kpi) in ind.reports.iter().zip(&twin.kpis) {
            let features = extract_features(report, kpi, &twin.plan)?;
            let z = standardize(&features, &self.stats);
            let fwd = self.model.forward(z.as_slice())?;
            let class = AnomalyClass::ALL[argmax(&fwd.probs)];
            let st = self.state.entry(report.ue_id).or_default();
            if class == AnomalyClass::Normal {
                st.recent.clear();
                st.normal_run += 1;
                if st.disarmed && st.normal_run >= self.policy.clear_ticks {
                    st.disarmed = false;
                }
                continue;
            }
            detections.push(Detection { ue_id: report.ue_id, class, probs: fwd.probs });
            st.normal_run = 0;
            st.recent.push_back(class);
            while st.recent.len() > confirm {
                st.recent.pop_front();
            }
            if st.disarmed || st.recent.len() < confirm {
                continue;
            }
            let cause = majority(&st.recent);
            st.recent.clear();
            st.disarmed = true;
            actions.push(self.choose_action(ind.tick, report, cause));
        }
        Ok(XappOutput { plan: twin.plan, kpis: twin.kpis, actions, detections, twin_elapsed_ms: twin.elapsed_ms })
    }

    fn choose_action(&self, tick: u64, report: &MeasurementReport, cause: AnomalyClass) -> ControlAction {
        let boost = ControlKind::PrbBoost {
            factor: self.policy.boost_factor,
            duration_ticks: self.policy.boost_duration_ticks,
        };
        let kind = match self.policy.remedy(cause) {
            Some(Remedy::ForceHandover) => strongest_neighbor(report)
                .map(|target_cell| ControlKind::ForceHandover { target_cell })
                .unwrap_or(boost),
            _ => boost,
        };
        ControlAction { tick, ue_id: report.ue_id, kind, cause }
    }
}

/// Most frequent class in the window; ties go to the most recent one.
fn majority(window: &VecDeque<AnomalyClass>) -> AnomalyClass {
    let mut counts = [0usize; N_CLASSES];
    for c in window {
        counts[c.code() as usize] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    *window.iter().rev().find(|c| counts[c.code() as usize] == best).expect("non-empty window")
}

fn strongest_neighbor(report: &MeasurementReport) -> Option<CellId> {
    let mut best: Option<(CellId, f64)> = None;
    for (&cell, &rsrp) in &report.neighbor_rsrp_dbm {
        if best.is_none_or(|(_, b)| rsrp > b) {
            best = Some((cell, rsrp));
        }
    }
    best.map(|(c, _)| c)
}

pub fn apply_control(sim: &mut SimState, action: &ControlAction) -> Result<()> {
    match action.kind {
        ControlKind::ForceHandover { target_cell } => sim.force_handover(action.ue_id, target_cell),
        ControlKind::PrbBoost { factor, duration_ticks } => sim.boost_prbs(action.ue_id, factor, duration_ticks),
    }
}

/// A fault injection planned for the closed loop. `tick` is the first
/// report tick that carries the corruption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledFault {
    pub tick: u64,
    pub ue_id: UeId,
    pub fault: FaultSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleEntry {
    tick: u64,
    ue_id: UeId,
    class: AnomalyClass,
    offset_db: Option<f64>,
    jitter_db: Option<f64>,
    duration_ticks: Option<u32>,
}

/// Parse a JSON array of `{tick, ue_id, class, [offset_db], [jitter_db],
/// [duration_ticks]}`; omitted magnitudes take the class defaults.
pub fn parse_schedule(text: &str) -> Result<Vec<ScheduledFault>> {
    let entries: Vec<ScheduleEntry> =
        serde_json::from_str(text).map_err(|e| Error::format("fault schedule", e.to_string()))?;
    entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            let base = FaultSpec::default_for(e.class)
                .map_err(|err| Error::format(format!("fault schedule entry {i}"), err.to_string()))?;
            let fault = FaultSpec {
                offset_db: e.offset_db.unwrap_or(base.offset_db),
                jitter_db: e.jitter_db.unwrap_or(base.jitter_db),
                duration_ticks: e.duration_ticks.unwrap_or(base.duration_ticks),
                ..base
            };
            fault.validate().map_err(|err| Error::format(format!("fault schedule entry {i}"), err.to_string()))?;
            if e.tick == 0 {
                return Err(Error::format(format!("fault schedule entry {i}"), "tick must be >= 1"));
            }
            Ok(ScheduledFault { tick: e.tick, ue_id: e.ue_id, fault })
        })
        .collect()
}

pub fn schedule_to_json(schedule: &[ScheduledFault]) -> String {
    let entries: Vec<serde_json::Value> = schedule
        .iter()
        .map(|s| {
            serde_json::json!({
                "tick": s.tick,
                "ue_id": s.ue_id,
                "class": s.fault.class,
                "offset_db": s.fault.offset_db,
                "jitter_db": s.fault.jitter_db,
                "duration_ticks": s.fault.duration_ticks,
            })
        })
        .collect();
    serde_json::to_string_pretty(&entries).expect("schedule serializes")
}

/// Three faults at default magnitudes, one per error class.
pub fn default_demo_schedule() -> Vec<ScheduledFault> {
    [(300, 5, AnomalyClass::RsrpError), (800, 17, AnomalyClass::RsrqError), (1300, 33, AnomalyClass::SinrError)]
        .into_iter()
        .map(|(tick, ue, class)| ScheduledFault {
            tick,
            ue_id: UeId(ue),
            fault: FaultSpec::default_for(class).expect("error class"),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub detections: Vec<Detection>,
    pub actions: Vec<ControlAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub fault_id: usize,
    pub ue_id: UeId,
    pub class: AnomalyClass,
    pub onset_tick: u64,
    pub end_tick: u64,
    pub baseline_mbps: f64,
    pub detect_tick: Option<u64>,
    pub action_tick: Option<u64>,
    pub restore_tick: Option<u64>,
}

impl FaultRecord {
    pub fn detection_latency_ticks(&self) -> Option<u64> {
        self.detect_tick.map(|t| t - self.onset_tick)
    }

    pub fn restoration_latency_ticks(&self) -> Option<u64> {
        Some(self.restore_tick? - self.action_tick?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub ticks: Vec<TickRecord>,
    pub faults: Vec<FaultRecord>,
}

impl EpisodeLog {
    pub fn total_actions(&self) -> usize {
        self.ticks.iter().map(|t| t.actions.len()).sum()
    }

    /// Tick records that carry detections or actions, one JSON per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for t in self.ticks.iter().filter(|t| !t.detections.is_empty() || !t.actions.is_empty()) {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let opt = |v: Option<u64>| v.map(|t| t.to_string()).unwrap_or_default();
        writeln!(w, "fault_id,ue_id,class,onset_tick,detect_tick,action_tick,restore_tick")?;
        for f in &self.faults {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                f.fault_id,
                f.ue_id,
                f.class.code(),
                f.onset_tick,
                opt(f.detect_tick),
                opt(f.action_tick),
                opt(f.restore_tick)
            )?;
        }
        Ok(())
    }
}

/// One tick of the RAN-side trajectory: what the UEs reported and what the
/// twin allocated.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTick {
    pub reports: Vec<MeasurementReport>,
    pub plan: AllocationPlan,
}

#[derive(Debug, Clone, Default)]
pub struct LoopOptions {
    pub record_trajectory: bool,
    /// Also log every indication into `messages` (large).
    pub log_indications: bool,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopOutcome {
    pub log: EpisodeLog,
    pub messages: Vec<Message>,
    pub trajectory: Vec<TrajectoryTick>,
    pub twin_elapsed_ms: Vec<f64>,
}

const BASELINE_TICKS: usize = 20;
const RESTORE_FRACTION: f64 = 0.8;

/// Step the simulator for `config.n_ticks`, route every tick through the
/// bus to the xApp and apply its plan and actions before the next tick.
pub fn closed_loop_run(
    config: &SimConfig,
    model: Arc<MlpModel>,
    stats: FeatureStats,
    schedule: &[ScheduledFault],
    policy: &RemediationPolicy,
    options: &LoopOptions,
) -> Result<ClosedLoopOutcome> {
    let mut sim = SimState::new(config.clone())?;
    for f in schedule {
        if sim.ue(f.ue_id).is_none() {
            return Err(Error::config("schedule", format!("unknown UE {} in fault schedule", f.ue_id)));
        }
    }
    let mut xapp = DtXapp::new(model, stats, sim.cells.clone(), config.link_params, policy.clone())?;
    let mut bus = Bus::new();
    let sub = bus.subscribe();

    let mut by_tick: BTreeMap<u64, Vec<&ScheduledFault>> = BTreeMap::new();
    for f in schedule {
        by_tick.entry(f.tick).or_default().push(f);
    }
    let mut faults: Vec<FaultRecord> = Vec::new();
    let mut history: BTreeMap<UeId, VecDeque<f64>> = BTreeMap::new();
    let mut outcome = ClosedLoopOutcome {
        log: EpisodeLog { ticks: Vec::new(), faults: Vec::new() },
        messages: Vec::new(),
        trajectory: Vec::new(),
        twin_elapsed_ms: Vec::with_capacity(config.n_ticks as usize),
    };

    for _ in 0..config.n_ticks {
        let next_tick = sim.tick + 1;
        for f in by_tick.get(&next_tick).into_iter().flatten() {
            sim.set_fault(f.ue_id, f.fault)?;
            let baseline = history
                .get(&f.ue_id)
                .filter(|h| !h.is_empty())
                .map(|h| h.iter().sum::<f64>() / h.len() as f64)
                .unwrap_or(0.0);
            faults.push(FaultRecord {
                fault_id: faults.len(),
                ue_id: f.ue_id,
                class: f.fault.class,
                onset_tick: next_tick,
                end_tick: next_tick + u64::from(f.fault.duration_ticks) - 1,
                baseline_mbps: baseline,
                detect_tick: None,
                action_tick: None,
                restore_tick: None,
            });
        }

        let (reports, _) = sim.step()?;
        let tick = sim.tick;
        let indication = Indication { tick, prb_boosts: sim.active_boosts(tick), reports };
        if options.log_indications {
            outcome.messages.push(Message::Indication(indication.clone()));
        }
        bus.publish(indication)?;
        let received = sub.recv().ok_or_else(|| Error::Pipeline("bus subscription closed".into()))?;
        let out = xapp.on_indication(&received)?;
        outcome.twin_elapsed_ms.push(out.twin_elapsed_ms);

        sim.apply_allocation(&out.plan);
        for a in &out.actions {
            apply_control(&mut sim, a)?;
            outcome.messages.push(Message::Control(*a));
        }

        for r in &received.reports {
            let h = history.entry(r.ue_id).or_default();
            h.push_back(r.achieved_mbps);
            while h.len() > BASELINE_TICKS {
                h.pop_front();
            }
        }
        for f in &mut faults {
            let in_window = (f.onset_tick..=f.end_tick).contains(&tick);
            for a in out.actions.iter().filter(|a| a.ue_id == f.ue_id && in_window) {
                if f.action_tick.is_none() {
                    f.action_tick = Some(tick);
                }
                if f.detect_tick.is_none() && a.cause == f.class {
                    f.detect_tick = Some(tick);
                }
            }
            if let (Some(action), None) = (f.action_tick, f.restore_tick) {
                if tick > action {
                    let achieved =
                        received.reports.iter().find(|r| r.ue_id == f.ue_id).map_or(0.0, |r| r.achieved_mbps);
                    if achieved >= RESTORE_FRACTION * f.baseline_mbps {
                        f.restore_tick = Some(tick);
                    }
                }
            }
        }

        if options.record_trajectory {
            outcome.trajectory.push(TrajectoryTick { reports: received.reports.clone(), plan: out.plan.clone() });
        }
        outcome.log.ticks.push(TickRecord { tick, detections: out.detections, actions: out.actions });
    }
    outcome.log.faults = faults;
    Ok(outcome)
}

/// The RAN plus twin with no xApp in the loop.
pub fn open_loop_trajectory(config: &SimConfig, schedule: &[ScheduledFault]) -> Result<Vec<TrajectoryTick>> {
    let mut sim = SimState::new(config.clone())?;
    let mut out = Vec::with_capacity(config.n_ticks as usize);
    for _ in 0..config.n_ticks {
        let next_tick = sim.tick + 1;
        for f in schedule.iter().filter(|f| f.tick == next_tick) {
            sim.set_fault(f.ue_id, f.fault)?;
        }
        let (reports, _) = sim.step()?;
        let twin = twin_tick(&reports, &sim.cells, &sim.active_boosts(sim.tick), &sim.config.link_params)?;
        sim.apply_allocation(&twin.plan);
        out.push(TrajectoryTick { reports, plan: twin.plan });
    }
    Ok(out)
}

pub fn write_messages_jsonl(path: &Path, messages: &[Message]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for m in messages {
        write_message(&mut w, m).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A model whose output is always Normal: zero weights, a positive bias on
/// the Normal logit.
pub fn always_normal_model(hidden: &[usize]) -> Result<MlpModel> {
    let mut m = MlpModel::zeros(hidden)?;
    m.layers.last_mut().expect("output layer").biases[0] = 1.0;
    Ok(m)
}
