//! Experiment presets, JSON configuration, rate calibration and CSV reports.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::PowerParams;
use crate::error::{invalid, Error, Result};
use crate::markov::{analyze, estimate_diversity, CurvePoint, OutageCurve, SeriesSource};
use crate::policy::PolicyKind;
use crate::sim::{sweep, SlotSchedule, SweepSpec, DEFAULT_WARMUP_SLOTS};
use crate::state::{NetworkConfig, DEFAULT_STATE_CAP};

/// Column order of every curve CSV.
pub const CSV_HEADER: &str = "snr_db,p_out,source,policy,K,LD,LE,rho,alpha,eta,ci";

/// Rate grid searched when calibrating.
pub const DEFAULT_RATE_GRID: [f64; 4] = [0.5, 1.0, 1.5, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Table3,
    Custom,
}

impl PresetName {
    pub const BUILTIN: [PresetName; 5] = [
        PresetName::Fig3,
        PresetName::Fig4,
        PresetName::Fig5,
        PresetName::Fig6,
        PresetName::Table3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Fig3 => "fig3",
            PresetName::Fig4 => "fig4",
            PresetName::Fig5 => "fig5",
            PresetName::Fig6 => "fig6",
            PresetName::Table3 => "table3",
            PresetName::Custom => "custom",
        }
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig3" => Ok(PresetName::Fig3),
            "fig4" => Ok(PresetName::Fig4),
            "fig5" => Ok(PresetName::Fig5),
            "fig6" => Ok(PresetName::Fig6),
            "table3" => Ok(PresetName::Table3),
            "custom" => Ok(PresetName::Custom),
            other => Err(invalid("preset", format!("unknown preset `{other}`"))),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_warmup() -> u64 {
    DEFAULT_WARMUP_SLOTS
}

fn default_cap() -> u64 {
    DEFAULT_STATE_CAP
}

fn default_grid() -> Vec<f64> {
    DEFAULT_RATE_GRID.to_vec()
}

fn default_tolerance() -> f64 {
    0.03
}

/// Network dimensions with uniform mean gain. Powers come from the SNR grid
/// (`σ²` fixed) and the rate from [`RateSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub num_relays: usize,
    pub buffer_capacity: u32,
    pub storage_capacity: u32,
    /// Mean gain of every link; defaults to 1.
    #[serde(default = "one")]
    pub mean_gain: f64,
    pub harvest_coeff: f64,
    pub relay_coeff: f64,
}

impl NetworkSpec {
    pub fn config(&self, noise_power: f64, target_rate: f64) -> Result<NetworkConfig> {
        NetworkConfig::uniform(
            self.num_relays,
            self.buffer_capacity,
            self.storage_capacity,
            self.mean_gain,
            PowerParams {
                source_power: noise_power,
                relay_coeff: self.relay_coeff,
                harvest_coeff: self.harvest_coeff,
                noise_power,
                target_rate,
            },
        )
    }
}

/// Calibrate the unstated target rate on an outage anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    pub anchor_snr_db: f64,
    pub anchor_p_out: f64,
    pub network: NetworkSpec,
    #[serde(default = "default_grid")]
    pub candidates: Vec<f64>,
    /// Largest acceptable `|P_out − target|` at the anchor.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RateSpec {
    Fixed { target_rate: f64 },
    Calibrated(CalibrationSpec),
}

/// A parameter swept along one curve at each SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Vary {
    BufferCapacity(Vec<u32>),
    StorageCapacity(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub label: String,
    pub policy: PolicyKind,
    pub network: NetworkSpec,
    /// Overrides the preset's SNR grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vary: Option<Vary>,
    #[serde(default = "yes")]
    pub simulated: bool,
    #[serde(default)]
    pub analytical: bool,
    /// Overrides the preset's slot budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<SlotSchedule>,
}

impl CurveSpec {
    fn networks(&self) -> Vec<NetworkSpec> {
        match &self.vary {
            None => vec![self.network],
            Some(Vary::BufferCapacity(values)) => values
                .iter()
                .map(|&v| NetworkSpec {
                    buffer_capacity: v,
                    ..self.network
                })
                .collect(),
            Some(Vary::StorageCapacity(values)) => values
                .iter()
                .map(|&v| NetworkSpec {
                    storage_capacity: v,
                    ..self.network
                })
                .collect(),
        }
    }
}

/// Pass/fail checks evaluated after a preset runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    /// Analytical and simulated values agree within
    /// `max(ci_multiple·ci, relative·p_analytical)` at every point.
    Agreement {
        curve: String,
        ci_multiple: f64,
        relative: f64,
    },
    /// dB-slope of the simulated series (analytical when not simulated).
    Diversity {
        curve: String,
        snr_lo: f64,
        snr_hi: f64,
        expected: f64,
        tolerance: f64,
    },
    /// Bounds on one point of a curve.
    PointRange {
        curve: String,
        snr_db: f64,
        #[serde(default)]
        buffer_capacity: Option<u32>,
        #[serde(default)]
        storage_capacity: Option<u32>,
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
    },
    /// Outage does not increase along SNR (and along the varied parameter),
    /// up to confidence-interval overlap.
    Monotone { curve: String },
    /// `better` is pointwise no worse than `worse`, up to CI overlap.
    Dominates { better: String, worse: String },
}

impl Check {
    fn curves(&self) -> Vec<&str> {
        match self {
            Check::Agreement { curve, .. }
            | Check::Diversity { curve, .. }
            | Check::PointRange { curve, .. }
            | Check::Monotone { curve } => vec![curve],
            Check::Dominates { better, worse } => vec![better, worse],
        }
    }
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPreset {
    pub name: PresetName,
    #[serde(default)]
    pub description: String,
    pub seed: u64,
    pub snr_db: Vec<f64>,
    pub rate: RateSpec,
    pub slots: SlotSchedule,
    #[serde(default = "default_warmup")]
    pub warmup_slots: u64,
    #[serde(default = "default_cap")]
    pub state_cap: u64,
    #[serde(default = "one")]
    pub noise_power: f64,
    pub curves: Vec<CurveSpec>,
    #[serde(default)]
    pub checks: Vec<Check>,
}

fn check_grid(field: &'static str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid(field, "SNR grid is empty"));
    }
    if grid.iter().any(|s| !s.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(
            field,
            "SNR grid must be finite and strictly increasing",
        ));
    }
    Ok(())
}

impl ExperimentPreset {
    pub fn validate(&self) -> Result<()> {
        check_grid("snr_db", &self.snr_db)?;
        if self.curves.is_empty() {
            return Err(invalid("curves", "at least one curve is required"));
        }
        if self.noise_power.is_nan() || self.noise_power <= 0.0 {
            return Err(invalid("noise_power", "must be > 0"));
        }
        let probe_rate = match &self.rate {
            RateSpec::Fixed { target_rate } => *target_rate,
            RateSpec::Calibrated(c) => {
                if c.candidates.is_empty() {
                    return Err(invalid("candidates", "calibration grid is empty"));
                }
                c.network.config(self.noise_power, c.candidates[0])?;
                c.candidates[0]
            }
        };
        let mut labels = HashSet::new();
        for curve in &self.curves {
            if !labels.insert(curve.label.as_str()) {
                return Err(invalid(
                    "label",
                    format!("duplicate curve label `{}`", curve.label),
                ));
            }
            if let Some(grid) = &curve.snr_db {
                check_grid("snr_db", grid)?;
            }
            if !curve.simulated && !curve.analytical {
                return Err(invalid(
                    "simulated",
                    format!("curve `{}` has no series enabled", curve.label),
                ));
            }
            for net in curve.networks() {
                net.config(self.noise_power, probe_rate)?;
            }
        }
        for check in &self.checks {
            for name in check.curves() {
                if !labels.contains(name) {
                    return Err(invalid("checks", format!("unknown curve `{name}`")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let preset: Self = serde_json::from_str(text)?;
        preset.validate()?;
        Ok(preset)
    }

    /// Built-in preset, or `None` for [`PresetName::Custom`].
    pub fn builtin(name: PresetName) -> Option<Self> {
        match name {
            PresetName::Fig3 => Some(fig3()),
            PresetName::Fig4 => Some(fig4()),
            PresetName::Fig5 => Some(fig5()),
            PresetName::Fig6 => Some(fig6()),
            PresetName::Table3 => Some(table3()),
            PresetName::Custom => None,
        }
    }
}

/// Reads and validates a JSON experiment file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentPreset> {
    let text = fs::read_to_string(path)?;
    ExperimentPreset::from_json(&text)
}

pub fn save_config(preset: &ExperimentPreset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, preset.to_json()? + "\n")?;
    Ok(())
}

fn net(k: usize, ld: u32, le: u32, gain: f64, rho: f64, alpha: f64) -> NetworkSpec {
    NetworkSpec {
        num_relays: k,
        buffer_capacity: ld,
        storage_capacity: le,
        mean_gain: gain,
        harvest_coeff: rho,
        relay_coeff: alpha,
    }
}

fn curve(label: &str, policy: PolicyKind, network: NetworkSpec, analytical: bool) -> CurveSpec {
    CurveSpec {
        label: label.into(),
        policy,
        network,
        snr_db: None,
        vary: None,
        simulated: true,
        analytical,
        slots: None,
    }
}

fn fig3_network() -> NetworkSpec {
    net(2, 3, 2, 1.0, 0.5, 1.0)
}

/// Rate calibrated on outage 0.1 at 8 dB for the two-relay network.
fn anchored_rate() -> RateSpec {
    RateSpec::Calibrated(CalibrationSpec {
        anchor_snr_db: 8.0,
        anchor_p_out: 0.1,
        network: fig3_network(),
        candidates: default_grid(),
        tolerance: default_tolerance(),
    })
}

fn even_grid(lo: i32, hi: i32, step: i32) -> Vec<f64> {
    (lo..=hi).step_by(step as usize).map(f64::from).collect()
}

fn fig3() -> ExperimentPreset {
    ExperimentPreset {
        name: PresetName::Fig3,
        description: "Two relays: analysis vs simulation, with alternating and max-min baselines"
            .into(),
        seed: 3,
        snr_db: even_grid(0, 14, 2),
        rate: anchored_rate(),
        slots: SlotSchedule::Fixed(10_000_000),
        warmup_slots: DEFAULT_WARMUP_SLOTS,
        state_cap: DEFAULT_STATE_CAP,
        noise_power: 1.0,
        curves: vec![
            curve("proposed", PolicyKind::Proposed, fig3_network(), true),
            curve(
                "alternating",
                PolicyKind::Alternating,
                fig3_network(),
                false,
            ),
            curve("maxmin", PolicyKind::MaxMin, fig3_network(), false),
        ],
        checks: vec![
            Check::Agreement {
                curve: "proposed".into(),
                ci_multiple: 3.0,
                relative: 0.05,
            },
            Check::Monotone {
                curve: "proposed".into(),
            },
        ],
    }
}

fn fig4() -> ExperimentPreset {
    let k = |k| net(k, 3, 2, 1.0, 0.5, 1.0);
    ExperimentPreset {
        name: PresetName::Fig4,
        description: "Outage against SNR for K = 2, 4, 6 relays".into(),
        seed: 4,
        snr_db: even_grid(0, 14, 2),
        rate: anchored_rate(),
        slots: SlotSchedule::Fixed(10_000_000),
        warmup_slots: DEFAULT_WARMUP_SLOTS,
        state_cap: DEFAULT_STATE_CAP,
        noise_power: 1.0,
        curves: vec![
            curve("proposed_k2", PolicyKind::Proposed, k(2), true),
            curve("proposed_k4", PolicyKind::Proposed, k(4), true),
            curve("proposed_k6", PolicyKind::Proposed, k(6), false),
            curve("alternating_k6", PolicyKind::Alternating, k(6), false),
        ],
        checks: vec![
            Check::Monotone {
                curve: "proposed_k2".into(),
            },
            Check::Monotone {
                curve: "proposed_k4".into(),
            },
            Check::Monotone {
                curve: "proposed_k6".into(),
            },
            Check::Dominates {
                better: "proposed_k4".into(),
                worse: "proposed_k2".into(),
            },
            Check::Dominates {
                better: "proposed_k6".into(),
                worse: "proposed_k4".into(),
            },
        ],
    }
}

/// Relay power coefficients shown; the figure does not list its grid.
pub const FIG5_ALPHAS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

fn fig5() -> ExperimentPreset {
    ExperimentPreset {
        name: PresetName::Fig5,
        description: "Influence of the relay power coefficient (K = 6, L_D = 3, L_E = 10)".into(),
        seed: 5,
        snr_db: even_grid(0, 14, 2),
        rate: anchored_rate(),
        slots: SlotSchedule::Fixed(2_000_000),
        warmup_slots: DEFAULT_WARMUP_SLOTS,
        state_cap: DEFAULT_STATE_CAP,
        noise_power: 1.0,
        curves: FIG5_ALPHAS
            .iter()
            .map(|&a| {
                curve(
                    &format!("alpha_{a:.1}"),
                    PolicyKind::Proposed,
                    net(6, 3, 10, 1.0, 0.5, a),
                    false,
                )
            })
            .collect(),
        checks: vec![],
    }
}

fn fig6() -> ExperimentPreset {
    let base = net(3, 3, 10, 0.5, 0.5, 0.4);
    ExperimentPreset {
        name: PresetName::Fig6,
        description: "Influence of buffer and storage sizes (K = 3, gain 0.5, alpha 0.4, 10 dB)"
            .into(),
        seed: 6,
        snr_db: vec![10.0],
        rate: anchored_rate(),
        slots: SlotSchedule::Fixed(10_000_000),
        warmup_slots: DEFAULT_WARMUP_SLOTS,
        state_cap: DEFAULT_STATE_CAP,
        noise_power: 1.0,
        curves: vec![
            CurveSpec {
                vary: Some(Vary::BufferCapacity((1..=6).collect())),
                ..curve("buffer_size", PolicyKind::Proposed, base, false)
            },
            CurveSpec {
                vary: Some(Vary::StorageCapacity((1..=10).collect())),
                ..curve(
                    "storage_size",
                    PolicyKind::Proposed,
                    NetworkSpec {
                        buffer_capacity: 3,
                        ..base
                    },
                    false,
                )
            },
        ],
        checks: vec![
            Check::PointRange {
                curve: "buffer_size".into(),
                snr_db: 10.0,
                buffer_capacity: Some(1),
                storage_capacity: Some(10),
                min: Some(0.45),
                max: None,
            },
            Check::PointRange {
                curve: "storage_size".into(),
                snr_db: 10.0,
                buffer_capacity: Some(3),
                storage_capacity: Some(1),
                min: Some(0.08),
                max: Some(0.16),
            },
            Check::Monotone {
                curve: "buffer_size".into(),
            },
            Check::Monotone {
                curve: "storage_size".into(),
            },
        ],
    }
}

fn table3() -> ExperimentPreset {
    let k6 = net(6, 3, 2, 1.0, 0.5, 1.0);
    ExperimentPreset {
        name: PresetName::Table3,
        description: "Diversity order with K = 6 (proposed 6-7 dB, alternating 16-17 dB)".into(),
        seed: 33,
        snr_db: vec![6.0, 7.0],
        rate: anchored_rate(),
        slots: SlotSchedule::Fixed(100_000_000),
        warmup_slots: DEFAULT_WARMUP_SLOTS,
        state_cap: DEFAULT_STATE_CAP,
        noise_power: 1.0,
        curves: vec![
            curve("proposed", PolicyKind::Proposed, k6, false),
            CurveSpec {
                snr_db: Some(vec![16.0, 17.0]),
                slots: Some(SlotSchedule::Fixed(10_000_000)),
                ..curve("alternating", PolicyKind::Alternating, k6, false)
            },
        ],
        checks: vec![Check::Diversity {
            curve: "proposed".into(),
            snr_lo: 6.0,
            snr_hi: 7.0,
            expected: 12.0,
            tolerance: 2.0,
        }],
    }
}

/// Outcome of a rate calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub target_rate: f64,
    /// Outage at the anchor with the chosen rate.
    pub p_out: f64,
    /// `|p_out − target|`.
    pub residual: f64,
    /// Whether the target lies between the smallest and largest outage over
    /// the candidate grid.
    pub in_range: bool,
    pub tolerance: f64,
    /// `(rate, outage)` for every candidate.
    pub evaluations: Vec<(f64, f64)>,
}

impl CalibrationResult {
    pub fn succeeded(&self) -> bool {
        self.in_range && self.residual <= self.tolerance
    }
}

/// Picks the candidate rate whose analytical outage at `anchor_snr_db` is
/// closest to `target` in log scale.
pub fn calibrate_rate(
    anchor_snr_db: f64,
    target: f64,
    config: &NetworkConfig,
    candidates: &[f64],
    tolerance: f64,
    cap: u64,
) -> Result<CalibrationResult> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Calibration(format!(
            "target outage {target} is outside the achievable range (0, 1)"
        )));
    }
    if candidates.is_empty() {
        return Err(Error::Calibration("empty candidate grid".into()));
    }
    let evaluations: Vec<(f64, f64)> = candidates
        .par_iter()
        .map(|&rate| {
            let a = analyze(
                &config.with_target_rate(rate).with_snr_db(anchor_snr_db),
                cap,
            )?;
            Ok((rate, a.p_out))
        })
        .collect::<Result<_>>()?;
    let distance = |p: f64| {
        if p > 0.0 {
            (p.log10() - target.log10()).abs()
        } else {
            f64::INFINITY
        }
    };
    let &(target_rate, p_out) = evaluations
        .iter()
        .min_by(|a, b| distance(a.1).total_cmp(&distance(b.1)))
        .expect("nonempty");
    let lo = evaluations
        .iter()
        .map(|e| e.1)
        .fold(f64::INFINITY, f64::min);
    let hi = evaluations
        .iter()
        .map(|e| e.1)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(CalibrationResult {
        target_rate,
        p_out,
        residual: (p_out - target).abs(),
        in_range: lo - tolerance <= target && target <= hi + tolerance,
        tolerance,
        evaluations,
    })
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub snr_db: f64,
    pub p_out: f64,
    pub source: SeriesSource,
    pub policy: PolicyKind,
    pub network: NetworkSpec,
    pub target_rate: f64,
    pub ci: Option<f64>,
}

impl CurveRow {
    pub fn to_csv(&self) -> String {
        let n = &self.network;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.snr_db,
            self.p_out,
            self.source.name(),
            self.policy.name(),
            n.num_relays,
            n.buffer_capacity,
            n.storage_capacity,
            n.harvest_coeff,
            n.relay_coeff,
            self.target_rate,
            self.ci.map(|c| c.to_string()).unwrap_or_default(),
        )
    }
}

pub fn write_csv<W: Write>(rows: &[CurveRow], mut out: W) -> std::io::Result<()> {
    out.write_all(CSV_HEADER.as_bytes())?;
    out.write_all(b"\n")?;
    for row in rows {
        out.write_all(row.to_csv().as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveResult {
    pub label: String,
    pub rows: Vec<CurveRow>,
}

impl CurveResult {
    /// Rows of one network variant and source, in SNR order.
    fn series(&self, network: &NetworkSpec, source: SeriesSource) -> Vec<&CurveRow> {
        self.rows
            .iter()
            .filter(|r| &r.network == network && r.source == source)
            .collect()
    }

    fn networks(&self) -> Vec<NetworkSpec> {
        let mut out: Vec<NetworkSpec> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.network) {
                out.push(r.network);
            }
        }
        out
    }

    fn sources(&self) -> Vec<SeriesSource> {
        [SeriesSource::Analytical, SeriesSource::Simulated]
            .into_iter()
            .filter(|s| self.rows.iter().any(|r| r.source == *s))
            .collect()
    }

    /// Simulated series when present, analytical otherwise.
    fn primary_source(&self) -> SeriesSource {
        if self
            .rows
            .iter()
            .any(|r| r.source == SeriesSource::Simulated)
        {
            SeriesSource::Simulated
        } else {
            SeriesSource::Analytical
        }
    }

    fn curve_for(&self, network: &NetworkSpec, source: SeriesSource) -> OutageCurve {
        OutageCurve {
            points: self
                .series(network, source)
                .into_iter()
                .map(|r| CurvePoint {
                    snr_db: r.snr_db,
                    p_out: r.p_out,
                    source,
                    ci_halfwidth: r.ci,
                })
                .collect(),
        }
    }

    /// Largest `|analytical − simulated|` over matching points.
    pub fn max_deviation(&self) -> Option<f64> {
        let mut worst: Option<f64> = None;
        for net in self.networks() {
            let an = self.series(&net, SeriesSource::Analytical);
            let sim = self.series(&net, SeriesSource::Simulated);
            for a in &an {
                if let Some(s) = sim.iter().find(|s| s.snr_db == a.snr_db) {
                    let d = (a.p_out - s.p_out).abs();
                    worst = Some(worst.map_or(d, |w: f64| w.max(d)));
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub description: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub preset: PresetName,
    pub target_rate: f64,
    pub calibration: Option<CalibrationResult>,
    pub curves: Vec<CurveResult>,
    pub checks: Vec<CheckOutcome>,
    pub warnings: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn curve(&self, label: &str) -> Option<&CurveResult> {
        self.curves.iter().find(|c| c.label == label)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "preset: {}", self.preset.as_str());
        let _ = writeln!(s, "target_rate: {}", self.target_rate);
        if let Some(c) = &self.calibration {
            let status = if c.succeeded() { "ok" } else { "FAILED" };
            let _ = writeln!(
                s,
                "calibration: {status} (p_out {:.6} at anchor, residual {:.6}, tolerance {}, target in range: {})",
                c.p_out, c.residual, c.tolerance, c.in_range
            );
            for (rate, p) in &c.evaluations {
                let _ = writeln!(s, "  rate {rate}: p_out {p:.6}");
            }
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        for curve in &self.curves {
            let _ = writeln!(s, "curve {}:", curve.label);
            if let Some(d) = curve.max_deviation() {
                let _ = writeln!(s, "  max |analytical - simulated|: {d:.6}");
            }
            for net in curve.networks() {
                for source in curve.sources() {
                    let c = curve.curve_for(&net, source);
                    if c.points.len() < 2 {
                        continue;
                    }
                    let n = c.points.len();
                    let (lo, hi) = (c.points[n - 2].snr_db, c.points[n - 1].snr_db);
                    let d = estimate_diversity(&c, lo, hi)
                        .map(|d| format!("{d:.3}"))
                        .unwrap_or_else(|e| format!("n/a ({e})"));
                    let _ = writeln!(
                        s,
                        "  diversity {} K={} LD={} LE={} ({lo}->{hi} dB): {d}",
                        source.name(),
                        net.num_relays,
                        net.buffer_capacity,
                        net.storage_capacity
                    );
                }
            }
        }
        for c in &self.checks {
            let _ = writeln!(
                s,
                "check {}: {} ({})",
                if c.passed { "PASS" } else { "FAIL" },
                c.description,
                c.detail
            );
        }
        let _ = writeln!(
            s,
            "overall: {}",
            if self.passed() { "PASS" } else { "FAIL" }
        );
        s
    }
}

fn run_curve(
    preset: &ExperimentPreset,
    spec: &CurveSpec,
    rate: f64,
    warnings: &mut Vec<String>,
) -> Result<CurveResult> {
    let grid = spec.snr_db.clone().unwrap_or_else(|| preset.snr_db.clone());
    let slots = spec.slots.unwrap_or(preset.slots);
    let mut rows = Vec::new();
    for (v, net) in spec.networks().into_iter().enumerate() {
        let config = net.config(preset.noise_power, rate)?;
        let mut analytical = spec.analytical;
        if analytical && spec.policy != PolicyKind::Proposed {
            warnings.push(format!(
                "{}: baselines have no analytical model",
                spec.label
            ));
            analytical = false;
        }
        if analytical && config.state_count() > preset.state_cap as u128 {
            warnings.push(format!(
                "{}: {} states exceed the cap of {}; simulation only",
                spec.label,
                config.state_count(),
                preset.state_cap
            ));
            analytical = false;
        }
        let mut curve = OutageCurve::default();
        if spec.simulated {
            curve = sweep(&SweepSpec {
                config: config.clone(),
                policy: spec.policy,
                snr_db: grid.clone(),
                slots,
                warmup_slots: preset.warmup_slots,
                seed: crate::sim::derive_seed(preset.seed, v as u64),
                analytical,
                state_cap: preset.state_cap,
            })?;
        } else if analytical {
            let points = grid
                .par_iter()
                .map(|&snr| {
                    Ok(CurvePoint {
                        snr_db: snr,
                        p_out: analyze(&config.with_snr_db(snr), preset.state_cap)?.p_out,
                        source: SeriesSource::Analytical,
                        ci_halfwidth: None,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            curve.points = points;
        }
        rows.extend(curve.points.into_iter().map(|p| CurveRow {
            snr_db: p.snr_db,
            p_out: p.p_out,
            source: p.source,
            policy: spec.policy,
            network: net,
            target_rate: rate,
            ci: p.ci_halfwidth,
        }));
    }
    Ok(CurveResult {
        label: spec.label.clone(),
        rows,
    })
}

fn ci_of(row: &CurveRow) -> f64 {
    row.ci.unwrap_or(0.0)
}

/// Slack for comparing two estimates: interval overlap plus round-off.
fn slack(a: &CurveRow, b: &CurveRow) -> f64 {
    ci_of(a) + ci_of(b) + 1e-12
}

fn evaluate_check(check: &Check, curves: &[CurveResult]) -> CheckOutcome {
    let find = |label: &str| {
        curves
            .iter()
            .find(|c| c.label == label)
            .expect("validated label")
    };
    match check {
        Check::Agreement {
            curve,
            ci_multiple,
            relative,
        } => {
            let c = find(curve);
            let mut worst = String::new();
            let mut passed = true;
            let mut compared = 0;
            for net in c.networks() {
                let sim = c.series(&net, SeriesSource::Simulated);
                for a in c.series(&net, SeriesSource::Analytical) {
                    let Some(s) = sim.iter().find(|s| s.snr_db == a.snr_db) else {
                        continue;
                    };
                    compared += 1;
                    let allowed = (ci_multiple * ci_of(s)).max(relative * a.p_out);
                    let dev = (a.p_out - s.p_out).abs();
                    if dev > allowed {
                        passed = false;
                        worst = format!(
                            "{} dB: analytical {:.6} vs simulated {:.6} (allowed {:.6})",
                            a.snr_db, a.p_out, s.p_out, allowed
                        );
                    }
                }
            }
            if compared == 0 {
                passed = false;
                worst = "no analytical/simulated pairs".into();
            }
            CheckOutcome {
                description: format!("{curve}: analytical vs simulated agreement"),
                passed,
                detail: if worst.is_empty() {
                    format!("{compared} points within max({ci_multiple}·CI, {relative} relative)")
                } else {
                    worst
                },
            }
        }
        Check::Diversity {
            curve,
            snr_lo,
            snr_hi,
            expected,
            tolerance,
        } => {
            let c = find(curve);
            let source = c.primary_source();
            let nets = c.networks();
            let result = estimate_diversity(&c.curve_for(&nets[0], source), *snr_lo, *snr_hi);
            match result {
                Ok(d) => CheckOutcome {
                    description: format!(
                        "{curve}: diversity {snr_lo}->{snr_hi} dB = {expected} ± {tolerance}"
                    ),
                    passed: (d - expected).abs() <= *tolerance,
                    detail: format!("measured {d:.3}"),
                },
                Err(e) => CheckOutcome {
                    description: format!("{curve}: diversity {snr_lo}->{snr_hi} dB"),
                    passed: false,
                    detail: e.to_string(),
                },
            }
        }
        Check::PointRange {
            curve,
            snr_db,
            buffer_capacity,
            storage_capacity,
            min,
            max,
        } => {
            let c = find(curve);
            let source = c.primary_source();
            let row = c.rows.iter().find(|r| {
                r.source == source
                    && r.snr_db == *snr_db
                    && buffer_capacity.is_none_or(|b| r.network.buffer_capacity == b)
                    && storage_capacity.is_none_or(|s| r.network.storage_capacity == s)
            });
            let description = format!(
                "{curve}: p_out at {snr_db} dB (LD={buffer_capacity:?}, LE={storage_capacity:?}) in [{}, {}]",
                min.map_or("-".into(), |v| v.to_string()),
                max.map_or("-".into(), |v| v.to_string())
            );
            match row {
                Some(r) => CheckOutcome {
                    description,
                    passed: min.is_none_or(|m| r.p_out >= m) && max.is_none_or(|m| r.p_out <= m),
                    detail: format!("measured {:.6} ± {:.6}", r.p_out, ci_of(r)),
                },
                None => CheckOutcome {
                    description,
                    passed: false,
                    detail: "no such point".into(),
                },
            }
        }
        Check::Monotone { curve } => {
            let c = find(curve);
            let mut violations = Vec::new();
            for source in c.sources() {
                // Along SNR for each network variant.
                for net in c.networks() {
                    let s = c.series(&net, source);
                    for w in s.windows(2) {
                        if w[1].p_out > w[0].p_out + slack(w[0], w[1]) {
                            violations.push(format!(
                                "{} {}->{} dB",
                                source.name(),
                                w[0].snr_db,
                                w[1].snr_db
                            ));
                        }
                    }
                }
                // Along the varied parameter at each SNR.
                let nets = c.networks();
                for pair in nets.windows(2) {
                    let (a, b) = (c.series(&pair[0], source), c.series(&pair[1], source));
                    for (ra, rb) in a.iter().zip(&b) {
                        if rb.p_out > ra.p_out + slack(ra, rb) {
                            violations.push(format!(
                                "{} LD {}->{} LE {}->{} at {} dB",
                                source.name(),
                                pair[0].buffer_capacity,
                                pair[1].buffer_capacity,
                                pair[0].storage_capacity,
                                pair[1].storage_capacity,
                                ra.snr_db
                            ));
                        }
                    }
                }
            }
            CheckOutcome {
                description: format!("{curve}: outage nonincreasing"),
                passed: violations.is_empty(),
                detail: if violations.is_empty() {
                    "no violations".into()
                } else {
                    violations.join("; ")
                },
            }
        }
        Check::Dominates { better, worse } => {
            let (b, w) = (find(better), find(worse));
            let mut violations = Vec::new();
            for source in b.sources() {
                for rb in b.rows.iter().filter(|r| r.source == source) {
                    if let Some(rw) = w
                        .rows
                        .iter()
                        .find(|r| r.source == source && r.snr_db == rb.snr_db)
                    {
                        if rb.p_out > rw.p_out + slack(rb, rw) {
                            violations.push(format!("{} {} dB", source.name(), rb.snr_db));
                        }
                    }
                }
            }
            CheckOutcome {
                description: format!("{better} no worse than {worse}"),
                passed: violations.is_empty(),
                detail: if violations.is_empty() {
                    "no violations".into()
                } else {
                    violations.join("; ")
                },
            }
        }
    }
}

/// Resolves the target rate, runs every curve, evaluates the checks and,
/// when `out_dir` is given, writes one CSV per curve plus a summary report.
pub fn run_experiment(
    preset: &ExperimentPreset,
    out_dir: Option<&Path>,
) -> Result<ExperimentReport> {
    preset.validate()?;
    let mut warnings = Vec::new();
    let (target_rate, calibration) = match &preset.rate {
        RateSpec::Fixed { target_rate } => (*target_rate, None),
        RateSpec::Calibrated(c) => {
            let config = c.network.config(preset.noise_power, c.candidates[0])?;
            let result = calibrate_rate(
                c.anchor_snr_db,
                c.anchor_p_out,
                &config,
                &c.candidates,
                c.tolerance,
                preset.state_cap,
            )?;
            if !result.succeeded() {
                warnings.push(format!(
                    "rate calibration failed: best rate {} gives p_out {:.4} at {} dB (target {}, tolerance {})",
                    result.target_rate, result.p_out, c.anchor_snr_db, c.anchor_p_out, c.tolerance
                ));
            }
            (result.target_rate, Some(result))
        }
    };

    let mut curves = Vec::with_capacity(preset.curves.len());
    for spec in &preset.curves {
        curves.push(run_curve(preset, spec, target_rate, &mut warnings)?);
    }
    let checks = preset
        .checks
        .iter()
        .map(|c| evaluate_check(c, &curves))
        .collect();

    let mut report = ExperimentReport {
        preset: preset.name,
        target_rate,
        calibration,
        curves,
        checks,
        warnings,
        files: Vec::new(),
    };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let name = preset.name.as_str();
        for curve in &report.curves {
            let path = dir.join(format!("{name}_{}.csv", curve.label));
            let mut buf = Vec::new();
            write_csv(&curve.rows, &mut buf)?;
            fs::write(&path, buf)?;
            report.files.push(path);
        }
        let path = dir.join(format!("{name}_summary.txt"));
        fs::write(&path, report.summary())?;
        report.files.push(path);
    }
    Ok(report)
}
