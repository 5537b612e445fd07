//! Fault injection, the 8-wide feature vector, labeled dataset generation,
//! stratified splitting and feature standardization.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::cqi_from_sinr;
use crate::sim::{MeasurementReport, SimConfig, SimState, UeId};
use crate::twin::{twin_tick, AllocationPlan, PredictedKpi};

pub const N_FEATURES: usize = 8;
pub const N_CLASSES: usize = 4;

pub const FEATURE_NAMES: [&str; N_FEATURES] =
    ["rsrp_dbm", "rsrq_db", "sinr_db", "cqi", "achieved_mbps", "predicted_mbps", "grant_fraction", "priority"];

pub const DATASET_HEADER: [&str; 11] = [
    "rsrp_dbm",
    "rsrq_db",
    "sinr_db",
    "cqi",
    "achieved_mbps",
    "predicted_mbps",
    "grant_fraction",
    "priority",
    "label",
    "ue_id",
    "tick",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnomalyClass {
    Normal = 0,
    RsrpError = 1,
    RsrqError = 2,
    SinrError = 3,
}

impl AnomalyClass {
    pub const ALL: [AnomalyClass; N_CLASSES] =
        [AnomalyClass::Normal, AnomalyClass::RsrpError, AnomalyClass::RsrqError, AnomalyClass::SinrError];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(usize::from(code))
            .copied()
            .ok_or_else(|| Error::domain(format!("class code {code} outside 0..3")))
    }

    pub fn name(self) -> &'static str {
        match self {
            AnomalyClass::Normal => "Normal",
            AnomalyClass::RsrpError => "RsrpError",
            AnomalyClass::RsrqError => "RsrqError",
            AnomalyClass::SinrError => "SinrError",
        }
    }
}

impl fmt::Display for AnomalyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub class: AnomalyClass,
    pub offset_db: f64,
    pub jitter_db: f64,
    pub duration_ticks: u32,
}

impl FaultSpec {
    /// Default fault magnitude for an error class.
    pub fn default_for(class: AnomalyClass) -> Result<Self> {
        let (offset_db, jitter_db) = match class {
            AnomalyClass::Normal => return Err(Error::domain("Normal has no fault")),
            AnomalyClass::RsrpError => (-20.0, 3.0),
            AnomalyClass::RsrqError => (-10.0, 2.0),
            AnomalyClass::SinrError => (-15.0, 3.0),
        };
        Ok(Self { class, offset_db, jitter_db, duration_ticks: 50 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.class == AnomalyClass::Normal {
            return Err(Error::domain("fault class must be an error class, not Normal"));
        }
        if !self.offset_db.is_finite() {
            return Err(Error::domain("fault offset must be finite"));
        }
        if !(self.jitter_db >= 0.0) || !self.jitter_db.is_finite() {
            return Err(Error::domain("fault jitter must be >= 0"));
        }
        if self.duration_ticks == 0 {
            return Err(Error::domain("fault duration must be > 0 ticks"));
        }
        Ok(())
    }
}

/// Corrupt the field family owned by `spec.class`. SINR faults drag the
/// CQI along, since the UE derives CQI from its SINR estimate.
pub fn inject_fault<R: Rng + ?Sized>(
    report: &MeasurementReport,
    spec: &FaultSpec,
    rng: &mut R,
) -> Result<MeasurementReport> {
    spec.validate()?;
    let jitter = if spec.jitter_db > 0.0 { rng.random_range(-spec.jitter_db..=spec.jitter_db) } else { 0.0 };
    let delta = spec.offset_db + jitter;
    let mut out = report.clone();
    let ch = &mut out.channel;
    match spec.class {
        AnomalyClass::RsrpError => ch.rsrp_dbm += delta,
        AnomalyClass::RsrqError => ch.rsrq_db = (ch.rsrq_db + delta).min(0.0),
        AnomalyClass::SinrError => {
            ch.sinr_db += delta;
            ch.cqi = cqi_from_sinr(ch.sinr_db);
        }
        AnomalyClass::Normal => unreachable!("validated above"),
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

pub fn extract_features(
    report: &MeasurementReport,
    kpi: &PredictedKpi,
    plan: &AllocationPlan,
) -> Result<FeatureVector> {
    if kpi.ue_id != report.ue_id {
        return Err(Error::domain(format!("KPI for UE {} does not match report for UE {}", kpi.ue_id, report.ue_id)));
    }
    if plan.tick != report.tick {
        return Err(Error::domain(format!("plan tick {} does not match report tick {}", plan.tick, report.tick)));
    }
    let total = plan.cell_totals.get(&report.serving_cell).copied().unwrap_or(0);
    let grant_fraction = if total == 0 { 0.0 } else { f64::from(plan.grant(report.ue_id)) / f64::from(total) };
    let ch = &report.channel;
    Ok(FeatureVector([
        ch.rsrp_dbm,
        ch.rsrq_db,
        ch.sinr_db,
        f64::from(ch.cqi),
        report.achieved_mbps,
        kpi.predicted_mbps,
        grant_fraction,
        f64::from(report.priority),
    ]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: AnomalyClass,
    pub ue_id: UeId,
    pub tick: u64,
}

/// Split `n` into integer counts proportional to `weights`, using the
/// largest-remainder method. Ties on the remainder go to the lower index.
pub fn largest_remainder(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Parameters of the labeled-data collection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n_samples: usize,
    /// Fractions for Normal, RsrpError, RsrqError, SinrError.
    pub class_mix: [f64; N_CLASSES],
    /// Fault used for RsrpError, RsrqError and SinrError, in that order.
    pub faults: [FaultSpec; 3],
    pub seed: u64,
    /// Ticks simulated before any fault or sample.
    pub warmup_ticks: u64,
    /// Concurrent faults kept alive per error class.
    pub faults_per_class: usize,
    pub normal_emit_prob: f64,
    pub fault_emit_prob: f64,
    pub max_ticks: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_samples: 2505,
            class_mix: [0.25; 4],
            faults: [
                FaultSpec::default_for(AnomalyClass::RsrpError).unwrap(),
                FaultSpec::default_for(AnomalyClass::RsrqError).unwrap(),
                FaultSpec::default_for(AnomalyClass::SinrError).unwrap(),
            ],
            seed: 2505,
            warmup_ticks: 20,
            faults_per_class: 2,
            normal_emit_prob: 0.02,
            fault_emit_prob: 0.25,
            max_ticks: 1_000_000,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::config("n_samples", "n_samples must be positive"));
        }
        if self.class_mix.iter().any(|f| !(*f >= 0.0) || !f.is_finite()) {
            return Err(Error::config("class_mix", "fractions must be finite and >= 0"));
        }
        let sum: f64 = self.class_mix.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config("class_mix", format!("fractions sum to {sum}, expected 1")));
        }
        for (i, f) in self.faults.iter().enumerate() {
            f.validate().map_err(|e| Error::config(format!("faults[{i}]"), e.to_string()))?;
            if f.class != AnomalyClass::ALL[i + 1] {
                return Err(Error::config(
                    format!("faults[{i}]"),
                    format!("expected class {}", AnomalyClass::ALL[i + 1]),
                ));
            }
        }
        for (name, p) in [("normal_emit_prob", self.normal_emit_prob), ("fault_emit_prob", self.fault_emit_prob)] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::config(name, "must lie in (0, 1]"));
            }
        }
        if self.faults_per_class == 0 {
            return Err(Error::config("faults_per_class", "must be >= 1"));
        }
        Ok(())
    }
}

/// One fault as it was applied during generation; `first_tick..=last_tick`
/// are the report ticks it corrupted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub ue_id: UeId,
    pub class: AnomalyClass,
    pub first_tick: u64,
    pub last_tick: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    pub samples: Vec<LabeledSample>,
    pub faults: Vec<FaultEvent>,
    pub ticks_simulated: u64,
}

/// Run the simulator with the twin allocating every tick, inject faults at
/// seeded (tick, UE) slots, and sample labeled snapshots until every class
/// reaches its quota.
pub fn generate_dataset(sim_config: &SimConfig, cfg: &DatasetConfig) -> Result<GeneratedDataset> {
    cfg.validate()?;
    let targets = largest_remainder(cfg.n_samples, &cfg.class_mix);
    let mut counts = [0usize; N_CLASSES];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sim = SimState::new(sim_config.clone())?;
    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut faults: Vec<FaultEvent> = Vec::new();

    while counts.iter().zip(&targets).any(|(c, t)| c < t) {
        if sim.tick >= cfg.max_ticks {
            return Err(Error::Pipeline(format!(
                "dataset incomplete after {} ticks: counts {counts:?}, targets {targets:?}",
                sim.tick
            )));
        }
        let sampling = sim.tick >= cfg.warmup_ticks;
        if sampling {
            for (k, spec) in cfg.faults.iter().enumerate() {
                let class = spec.class;
                if counts[k + 1] >= targets[k + 1] {
                    continue;
                }
                let active =
                    sim.ues.iter().filter(|u| u.active_fault.as_ref().is_some_and(|f| f.spec.class == class)).count();
                for _ in active..cfg.faults_per_class {
                    let free: Vec<UeId> =
                        sim.ues.iter().filter(|u| u.active_fault.is_none()).map(|u| u.ue_id).collect();
                    let Some(&ue) = free.get(rng.random_range(0..free.len().max(1))) else {
                        break;
                    };
                    sim.set_fault(ue, *spec)?;
                    faults.push(FaultEvent {
                        ue_id: ue,
                        class,
                        first_tick: sim.tick + 1,
                        last_tick: sim.tick + u64::from(spec.duration_ticks),
                    });
                }
            }
        }
        let active: Vec<AnomalyClass> =
            sim.ues.iter().map(|u| u.active_fault.as_ref().map_or(AnomalyClass::Normal, |f| f.spec.class)).collect();

        let (reports, _) = sim.step()?;
        let boosts = sim.active_boosts(sim.tick);
        let out = twin_tick(&reports, &sim.cells, &boosts, &sim.config.link_params)?;
        sim.apply_allocation(&out.plan);

        for ((report, kpi), &label) in reports.iter().zip(&out.kpis).zip(&active) {
            let p = if label == AnomalyClass::Normal { cfg.normal_emit_prob } else { cfg.fault_emit_prob };
            let draw: f64 = rng.random();
            let k = label.code() as usize;
            if !sampling || draw >= p || counts[k] >= targets[k] {
                continue;
            }
            let features = extract_features(report, kpi, &out.plan)?;
            if !features.is_finite() {
                return Err(Error::Numeric {
                    iteration: sim.tick as usize,
                    reason: format!("non-finite features for UE {}", report.ue_id),
                });
            }
            samples.push(LabeledSample { features, label, ue_id: report.ue_id, tick: report.tick });
            counts[k] += 1;
        }
    }
    Ok(GeneratedDataset { samples, faults, ticks_simulated: sim.tick })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
    pub warnings: Vec<String>,
}

/// Stratified split. Each class contributes `floor(f * count)` training
/// samples, topped up by largest remainder until the training set holds
/// `floor(f * n)` samples overall; a class never gives up its last test
/// sample to the top-up.
pub fn split_dataset(data: &[LabeledSample], train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config("train_fraction", "must lie strictly between 0 and 1"));
    }
    if data.is_empty() {
        return Err(Error::Stratification("cannot split an empty dataset".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); N_CLASSES];
    for (i, s) in data.iter().enumerate() {
        by_class[s.label.code() as usize].push(i);
    }
    let quotas: Vec<f64> = by_class.iter().map(|v| train_fraction * v.len() as f64).collect();
    let mut n_train: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let want = (train_fraction * data.len() as f64).floor() as usize;
    let mut order: Vec<usize> = (0..N_CLASSES).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let mut missing = want.saturating_sub(n_train.iter().sum());
    // a class already at its cap passes its turn to the next remainder
    while missing > 0 {
        let before = missing;
        for &c in &order {
            if missing > 0 && n_train[c] + 1 < by_class[c].len() {
                n_train[c] += 1;
                missing -= 1;
            }
        }
        if missing == before {
            break;
        }
    }

    let mut warnings = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(want);
    let mut test = Vec::with_capacity(data.len() - want);
    for (c, idx) in by_class.iter_mut().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            warnings.push(format!(
                "class {} has {} sample(s); it cannot be stratified and stays in the test split",
                AnomalyClass::ALL[c],
                idx.len()
            ));
        }
        idx.shuffle(&mut rng);
        train.extend(idx[..n_train[c]].iter().map(|&i| data[i].clone()));
        test.extend(idx[n_train[c]..].iter().map(|&i| data[i].clone()));
    }
    if train.is_empty() {
        warnings.push("training split is empty".into());
    }
    Ok(Split { train, test, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: [f64; N_FEATURES],
    pub std: [f64; N_FEATURES],
}

impl FeatureStats {
    /// Population mean and standard deviation per feature. Constant
    /// features get std 1 and a warning.
    pub fn fit(features: &[FeatureVector]) -> Result<(Self, Vec<String>)> {
        if features.is_empty() {
            return Err(Error::domain("cannot fit feature statistics on no samples"));
        }
        let n = features.len() as f64;
        let mut mean = [0.0; N_FEATURES];
        for f in features {
            for (m, v) in mean.iter_mut().zip(f.0) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = [0.0; N_FEATURES];
        for f in features {
            for j in 0..N_FEATURES {
                std[j] += (f.0[j] - mean[j]).powi(2);
            }
        }
        let mut warnings = Vec::new();
        for (j, s) in std.iter_mut().enumerate() {
            *s = (*s / n).sqrt();
            if !(*s > 0.0) {
                warnings.push(format!("feature {} is constant; std replaced by 1", FEATURE_NAMES[j]));
                *s = 1.0;
            }
        }
        Ok((Self { mean, std }, warnings))
    }

    pub fn identity() -> Self {
        Self { mean: [0.0; N_FEATURES], std: [1.0; N_FEATURES] }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::format("feature stats", e.to_string());
        out.write_record(["feature", "mean", "std"]).map_err(io)?;
        for j in 0..N_FEATURES {
            out.write_record([FEATURE_NAMES[j].to_string(), fmt_f64(self.mean[j]), fmt_f64(self.std[j])])
                .map_err(io)?;
        }
        out.flush().map_err(|e| Error::format("feature stats", e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers().map_err(|e| Error::format("feature stats header", e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["feature", "mean", "std"] {
            return Err(Error::format("feature stats header", "expected `feature,mean,std`"));
        }
        let mut stats = Self::identity();
        let mut seen = 0;
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::format(format!("feature stats line {line}"), e.to_string()))?;
            if i >= N_FEATURES {
                return Err(Error::format(format!("feature stats line {line}"), "more than 8 rows"));
            }
            if rec.len() != 3 || rec.get(0) != Some(FEATURE_NAMES[i]) {
                return Err(Error::format(
                    format!("feature stats line {line}"),
                    format!("expected feature `{}`", FEATURE_NAMES[i]),
                ));
            }
            stats.mean[i] = parse_f64(&rec[1], &format!("feature stats line {line} mean"))?;
            let std = parse_f64(&rec[2], &format!("feature stats line {line} std"))?;
            if !(std > 0.0) {
                return Err(Error::format(format!("feature stats line {line} std"), "must be > 0"));
            }
            stats.std[i] = std;
            seen += 1;
        }
        if seen != N_FEATURES {
            return Err(Error::format("feature stats", format!("expected 8 rows, found {seen}")));
        }
        Ok(stats)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f)
    }
}

pub fn standardize(features: &FeatureVector, stats: &FeatureStats) -> FeatureVector {
    let mut out = [0.0; N_FEATURES];
    for j in 0..N_FEATURES {
        let std = if stats.std[j] > 0.0 { stats.std[j] } else { 1.0 };
        out[j] = (features.0[j] - stats.mean[j]) / std;
    }
    FeatureVector(out)
}

/// 17 significant digits: exact round trip for every f64.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn parse_f64(s: &str, field: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::format(field, format!("`{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::format(field, "value must be finite"));
    }
    Ok(v)
}

pub fn write_dataset_csv<W: Write>(w: W, samples: &[LabeledSample]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::format("dataset", e.to_string());
    out.write_record(DATASET_HEADER).map_err(err)?;
    for s in samples {
        let mut rec: Vec<String> = s.features.0.iter().map(|v| fmt_f64(*v)).collect();
        rec.push(s.label.code().to_string());
        rec.push(s.ue_id.0.to_string());
        rec.push(s.tick.to_string());
        out.write_record(&rec).map_err(err)?;
    }
    out.flush().map_err(|e| Error::format("dataset", e.to_string()))?;
    Ok(())
}

/// Parse a dataset CSV; errors name the 1-based file line.
pub fn read_dataset_csv<R: Read>(r: R) -> Result<Vec<LabeledSample>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let headers = rdr.headers().map_err(|e| Error::format("dataset header", e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != DATASET_HEADER {
        return Err(Error::format("dataset header (line 1)", format!("expected `{}`", DATASET_HEADER.join(","))));
    }
    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let field = |name: &str| format!("dataset line {line} {name}");
        let rec = rec.map_err(|e| Error::format(format!("dataset line {line}"), e.to_string()))?;
        if rec.len() != DATASET_HEADER.len() {
            return Err(Error::format(
                format!("dataset line {line}"),
                format!("expected {} fields, found {}", DATASET_HEADER.len(), rec.len()),
            ));
        }
        let mut f = [0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            f[j] = parse_f64(&rec[j], &field(DATASET_HEADER[j]))?;
        }
        let code: u8 = rec[8]
            .trim()
            .parse()
            .map_err(|_| Error::format(field("label"), format!("`{}` is not a class code", &rec[8])))?;
        let label = AnomalyClass::from_code(code).map_err(|e| Error::format(field("label"), e.to_string()))?;
        let ue: u32 =
            rec[9].trim().parse().map_err(|_| Error::format(field("ue_id"), format!("`{}` is not an id", &rec[9])))?;
        let tick: u64 = rec[10]
            .trim()
            .parse()
            .map_err(|_| Error::format(field("tick"), format!("`{}` is not a tick", &rec[10])))?;
        samples.push(LabeledSample { features: FeatureVector(f), label, ue_id: UeId(ue), tick });
    }
    Ok(samples)
}

pub fn save_dataset(path: &Path, samples: &[LabeledSample]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_csv(std::io::BufWriter::new(f), samples)
}

pub fn load_dataset(path: &Path) -> Result<Vec<LabeledSample>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset_csv(std::io::BufReader::new(f))
}
