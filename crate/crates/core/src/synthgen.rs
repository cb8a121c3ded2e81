//! Synthetic aquarium-controller logs with labelled fault injections.
//!
//! The baseline is a small discrete-event simulation: periodic sensor rounds,
//! scheduled feeding runs in which the droid works inside
//! `droid_status Operating` / `Waiting` critical sections, daily lighting
//! with `light*_ontime` set at sunset, switched fans, periodic network
//! heartbeats and excludable noise commands. Injections break exactly one of
//! those rules each, and [`validate`] replays a log against the same rules.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use chrono::{NaiveDate, NaiveTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log_model::{Argument, ClassMap, CommandClass, LogEntry, Timestamp};

/// Minimum number of entries between ranges of different injections.
pub const MIN_INJECTION_GAP: u64 = 22;

const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// A feed command issued inside another run's critical section, whose
    /// closing `Waiting` never appears.
    MutualExclusion,
    /// `light*_ontime` re-emitted in the middle of the day.
    Reboot,
    /// A network target reported `Lost`.
    SingleFailure,
    /// A feeding run outside the schedule.
    ManualOperation,
    /// Consecutive sensor rounds all reading zero.
    MassDuplicate,
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AnomalyKind::MutualExclusion => "mutual_exclusion",
            AnomalyKind::Reboot => "reboot",
            AnomalyKind::SingleFailure => "single_failure",
            AnomalyKind::ManualOperation => "manual_operation",
            AnomalyKind::MassDuplicate => "mass_duplicate",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub name: String,
    pub period_minutes: u32,
    pub mean: f64,
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
    #[serde(default = "one")]
    pub decimals: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightSpec {
    pub name: String,
    /// Time the light switches on in the morning, also the `ontime` payload.
    pub on_time: String,
    pub sunset: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TankSpec {
    pub tank: u32,
    pub amount: f64,
    pub tank_pos: f64,
    pub lift_pos: f64,
    pub swing_h: f64,
    pub swing_v: f64,
    pub movediff: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedingSpec {
    pub times: Vec<String>,
    pub tanks: Vec<TankSpec>,
    /// Feed commands further than this from a slot count as manual.
    #[serde(default = "default_tolerance")]
    pub tolerance_minutes: u32,
}

fn default_tolerance() -> u32 {
    30
}

/// A two-state actuator switched on and off at fixed times of day.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchSpec {
    pub command: String,
    pub on: String,
    pub off: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub address: String,
    pub period_minutes: u32,
}

/// Unrelated traffic (front-end, phones) that pre-processing should drop.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub command: String,
    pub mean_interval_minutes: f64,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub kind: AnomalyKind,
    /// Simulated hours since the start of the log.
    pub at_hours: f64,
    /// Tank to feed for manual operation; the intruding tank for mutual exclusion.
    #[serde(default)]
    pub tank: Option<u32>,
    /// Network target for a single failure.
    #[serde(default)]
    pub target: Option<String>,
    /// Number of zero rounds for a mass duplicate.
    #[serde(default)]
    pub count: Option<u32>,
}

impl Injection {
    pub fn new(kind: AnomalyKind, at_hours: f64) -> Self {
        Injection {
            kind,
            at_hours,
            tank: None,
            target: None,
            count: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub start_date: String,
    pub duration_hours: f64,
    #[serde(default = "one_u64")]
    pub first_id: u64,
    pub sensors: Vec<SensorSpec>,
    pub lights: Vec<LightSpec>,
    pub feeding: FeedingSpec,
    #[serde(default)]
    pub switches: Vec<SwitchSpec>,
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub noise: Vec<NoiseSpec>,
    #[serde(default)]
    pub injections: Vec<Injection>,
}

fn one_u64() -> u64 {
    1
}

fn sensor(name: &str, period: u32, mean: f64, stddev: f64, min: f64, max: f64) -> SensorSpec {
    SensorSpec {
        name: name.into(),
        period_minutes: period,
        mean,
        stddev,
        min,
        max,
        decimals: 1,
    }
}

impl Default for ScenarioConfig {
    /// A three-tank aquarium whose baseline uses 39 distinct commands once
    /// noise is filtered out.
    fn default() -> Self {
        let tank = |tank, amount, tank_pos, lift_pos, swing_v, movediff: &str| TankSpec {
            tank,
            amount,
            tank_pos,
            lift_pos,
            swing_h: 0.0,
            swing_v,
            movediff: movediff.into(),
        };
        let light = |name: &str, on: &str, sunset: &str| LightSpec {
            name: name.into(),
            on_time: on.into(),
            sunset: sunset.into(),
        };
        let switch = |cmd: &str, on: &str, off: &str| SwitchSpec {
            command: cmd.into(),
            on: on.into(),
            off: off.into(),
        };
        let noise = |cmd: &str, every: f64, values: &[&str]| NoiseSpec {
            command: cmd.into(),
            mean_interval_minutes: every,
            values: values.iter().map(|s| s.to_string()).collect(),
        };
        ScenarioConfig {
            seed: 1,
            start_date: "2015-05-01".into(),
            duration_hours: 24.0,
            first_id: 1,
            sensors: vec![
                sensor("air", 10, 26.5, 0.4, 10.0, 40.0),
                sensor("humidity", 10, 26.0, 1.5, 5.0, 95.0),
                sensor("water1", 10, 26.0, 0.3, 15.0, 35.0),
                sensor("water2", 10, 27.0, 0.3, 15.0, 35.0),
                sensor("water3", 10, 27.8, 0.3, 15.0, 35.0),
                sensor("pressure", 30, 999.0, 2.5, 950.0, 1050.0),
                sensor("cputemp", 30, 49.0, 1.5, 20.0, 90.0),
                sensor("level_1", 30, 8.5, 0.3, 1.0, 20.0),
                sensor("level_2", 30, 8.8, 0.3, 1.0, 20.0),
                sensor("level_3", 30, 9.0, 0.3, 1.0, 20.0),
                sensor("ph1", 60, 7.2, 0.1, 5.0, 9.0),
                sensor("ph2", 60, 7.0, 0.1, 5.0, 9.0),
                sensor("ph3", 60, 6.9, 0.1, 5.0, 9.0),
                sensor("lux", 30, 420.0, 40.0, 1.0, 2000.0),
                sensor("co2", 60, 410.0, 15.0, 300.0, 2000.0),
                sensor("flow1", 60, 3.1, 0.2, 0.5, 10.0),
                sensor("flow2", 60, 2.9, 0.2, 0.5, 10.0),
                sensor("flow3", 60, 3.3, 0.2, 0.5, 10.0),
                sensor("nh3", 60, 0.2, 0.02, 0.01, 5.0),
                sensor("no2", 60, 0.3, 0.03, 0.01, 5.0),
            ],
            lights: vec![
                light("light1", "06:45", "18:00"),
                light("light2", "06:50", "18:00"),
                light("light3", "06:35", "18:00"),
            ],
            feeding: FeedingSpec {
                times: vec!["08:00".into(), "12:00".into(), "16:00".into()],
                tanks: vec![
                    tank(1, 4000.0, 12.0, 0.0, 5.0, "2,0"),
                    tank(2, 10000.0, 16.0, 5.0, -20.0, "4,2"),
                    tank(3, 4800.0, 20.0, 7.0, 0.0, "4,4"),
                ],
                tolerance_minutes: 30,
            },
            switches: vec![
                switch("fan1_status", "13:05", "16:40"),
                switch("fan3_status", "14:20", "17:10"),
            ],
            targets: vec![
                TargetSpec {
                    address: "192.168.68.93".into(),
                    period_minutes: 60,
                },
                TargetSpec {
                    address: "192.168.68.94".into(),
                    period_minutes: 60,
                },
            ],
            noise: vec![
                noise("location_X", 90.0, &["home", "away"]),
                noise(
                    "tweet_sentiment",
                    45.0,
                    &["positive", "negative", "neutral"],
                ),
            ],
            injections: Vec::new(),
        }
    }
}

fn parse_hhmm(s: &str) -> Result<i64> {
    let t = NaiveTime::parse_from_str(s.trim(), "%H:%M")
        .map_err(|_| Error::config(format!("bad time of day {s:?}, expected HH:MM")))?;
    Ok(i64::from(t.num_seconds_from_midnight()))
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    fn start(&self) -> Result<Timestamp> {
        let date = NaiveDate::parse_from_str(self.start_date.trim(), "%Y-%m-%d")
            .map_err(|_| Error::config(format!("bad start_date {:?}", self.start_date)))?;
        Ok(Timestamp::from_naive(
            date.and_hms_opt(0, 0, 0).expect("midnight"),
        ))
    }

    fn duration_secs(&self) -> i64 {
        (self.duration_hours * 3600.0).round() as i64
    }

    pub fn check(&self) -> Result<()> {
        self.start()?;
        if self.duration_hours.is_nan() || self.duration_hours <= 0.0 {
            return Err(Error::config("duration_hours must be positive"));
        }
        for s in &self.sensors {
            if s.period_minutes == 0 {
                return Err(Error::config(format!(
                    "sensor {} has a zero period",
                    s.name
                )));
            }
            if !(s.min > 0.0 && s.min < s.max && s.stddev >= 0.0) {
                return Err(Error::config(format!(
                    "sensor {} needs 0 < min < max and stddev >= 0",
                    s.name
                )));
            }
        }
        for t in &self.targets {
            if t.period_minutes == 0 {
                return Err(Error::config(format!(
                    "target {} has a zero period",
                    t.address
                )));
            }
        }
        for n in &self.noise {
            if n.mean_interval_minutes.is_nan()
                || n.mean_interval_minutes <= 0.0
                || n.values.is_empty()
            {
                return Err(Error::config(format!(
                    "noise {} needs a positive interval and values",
                    n.command
                )));
            }
        }
        for l in &self.lights {
            parse_hhmm(&l.on_time)?;
            parse_hhmm(&l.sunset)?;
        }
        for t in &self.feeding.times {
            parse_hhmm(t)?;
        }
        for s in &self.switches {
            parse_hhmm(&s.on)?;
            parse_hhmm(&s.off)?;
        }
        if self.feeding.tanks.is_empty() && !self.feeding.times.is_empty() {
            return Err(Error::config("feeding times given without tanks"));
        }
        for inj in &self.injections {
            if !(inj.at_hours >= 0.0 && inj.at_hours < self.duration_hours) {
                return Err(Error::config(format!(
                    "{} injection at {}h lies outside the {}h scenario",
                    inj.kind, inj.at_hours, self.duration_hours
                )));
            }
        }
        Ok(())
    }

    /// Class map covering every command the scenario can emit.
    pub fn class_map(&self) -> ClassMap {
        let mut map = ClassMap::new();
        let mut put = |c: &str, class| map.insert(c, class).expect("plain command name");
        for s in &self.sensors {
            put(&s.name, CommandClass::SensorValue);
        }
        put("lightning", CommandClass::SensorValue);
        for t in &self.feeding.tanks {
            put(
                &format!("feed_tank_{}", t.tank),
                CommandClass::ActuatorDrive,
            );
        }
        for c in [
            "droid_status",
            "droid_tank_pos",
            "droid_lift_pos",
            "droid_swing_h",
            "droid_swing_v",
            "droid_movediff",
        ] {
            put(c, CommandClass::ActuatorDrive);
        }
        for l in &self.lights {
            put(&format!("{}_status", l.name), CommandClass::ActuatorDrive);
            put(&format!("{}_ontime", l.name), CommandClass::ActuatorDrive);
        }
        for s in &self.switches {
            put(&s.command, CommandClass::ActuatorDrive);
        }
        for t in &self.targets {
            put(&target_command(&t.address), CommandClass::NetworkStatus);
        }
        for n in &self.noise {
            put(&n.command, CommandClass::Other);
        }
        map
    }
}

fn target_command(address: &str) -> String {
    format!("target_{address}_status")
}

/// A labelled stretch of the generated log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRange {
    pub kind: AnomalyKind,
    pub first_id: u64,
    pub last_id: u64,
}

impl TruthRange {
    pub fn contains(&self, id: u64) -> bool {
        (self.first_id..=self.last_id).contains(&id)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroundTruth(pub Vec<TruthRange>);

impl GroundTruth {
    pub fn ranges(&self) -> &[TruthRange] {
        &self.0
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticLog {
    pub entries: Vec<LogEntry>,
    pub truth: GroundTruth,
}

impl SyntheticLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        crate::log_model::write_log(&self.entries, out)
    }
}

struct Row {
    at: i64,
    group: u64,
    seq: u32,
    command: String,
    argument: Argument,
    /// Truth range this row belongs to.
    label: Option<usize>,
}

#[derive(Default)]
struct Timeline {
    rows: Vec<Row>,
    groups: u64,
    labels: Vec<AnomalyKind>,
}

impl Timeline {
    fn group(&mut self, label: Option<usize>) -> Group<'_> {
        self.groups += 1;
        let group = self.groups;
        Group {
            timeline: self,
            group,
            seq: 0,
            label,
        }
    }

    fn label(&mut self, kind: AnomalyKind) -> usize {
        self.labels.push(kind);
        self.labels.len() - 1
    }
}

struct Group<'a> {
    timeline: &'a mut Timeline,
    group: u64,
    seq: u32,
    label: Option<usize>,
}

impl Group<'_> {
    fn push(&mut self, at: i64, command: impl Into<String>, argument: Argument) {
        self.timeline.rows.push(Row {
            at,
            group: self.group,
            seq: self.seq,
            command: command.into(),
            argument,
            label: self.label,
        });
        self.seq += 1;
    }

    fn num(&mut self, at: i64, command: impl Into<String>, v: f64) {
        self.push(at, command, Argument::Numeric(v));
    }

    fn text(&mut self, at: i64, command: impl Into<String>, s: &str) {
        self.push(at, command, Argument::Text(s.to_string()));
    }
}

fn round_to(v: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (v * scale).round() / scale
}

/// Emits one tank's feeding run starting at `t`; returns the end time.
fn feeding_run(g: &mut Group<'_>, rng: &mut ChaCha8Rng, tank: &TankSpec, mut t: i64) -> i64 {
    g.num(t, format!("feed_tank_{}", tank.tank), tank.amount);
    t += rng.random_range(8..=15);
    g.num(t, "droid_swing_h", tank.swing_h);
    g.num(t, "droid_swing_v", tank.swing_v);
    t += rng.random_range(0..=1);
    g.text(t, "droid_status", "Operating");
    t += rng.random_range(2..=5);
    g.text(t, "droid_movediff", &tank.movediff);
    t += rng.random_range(15..=60);
    g.text(t, "droid_status", "Waiting");
    g.num(t, "droid_tank_pos", tank.tank_pos);
    t += rng.random_range(0..=1);
    g.num(t, "droid_lift_pos", tank.lift_pos);
    t
}

/// A feeding run whose critical section is entered, then interrupted by a
/// second feed command; the closing `Waiting` is never written.
fn interrupted_run(
    g: &mut Group<'_>,
    rng: &mut ChaCha8Rng,
    tank: &TankSpec,
    intruder: &TankSpec,
    mut t: i64,
) -> i64 {
    g.num(t, format!("feed_tank_{}", tank.tank), tank.amount);
    t += rng.random_range(8..=15);
    g.num(t, "droid_swing_h", tank.swing_h);
    g.num(t, "droid_swing_v", tank.swing_v);
    t += rng.random_range(0..=1);
    g.text(t, "droid_status", "Operating");
    t += rng.random_range(2..=5);
    g.text(t, "droid_movediff", &tank.movediff);
    t += rng.random_range(60..=130);
    g.num(t, "droid_lift_pos", intruder.lift_pos + 5.0);
    t += rng.random_range(60..=120);
    g.num(t, format!("feed_tank_{}", intruder.tank), 1000.0);
    t
}

fn find_tank(cfg: &ScenarioConfig, tank: Option<u32>, fallback: usize) -> Result<&TankSpec> {
    match tank {
        Some(id) => cfg
            .feeding
            .tanks
            .iter()
            .find(|t| t.tank == id)
            .ok_or_else(|| Error::config(format!("no tank {id} under [feeding]"))),
        None => cfg
            .feeding
            .tanks
            .get(fallback.min(cfg.feeding.tanks.len().saturating_sub(1)))
            .ok_or_else(|| Error::config("injection needs at least one tank")),
    }
}

/// Generates a log and its ground truth. Output depends only on `cfg`.
pub fn generate(cfg: &ScenarioConfig) -> Result<SyntheticLog> {
    cfg.check()?;
    let start = cfg.start()?;
    let t0 = start.epoch_seconds();
    let end = t0 + cfg.duration_secs();
    let days = (cfg.duration_secs() + SECONDS_PER_DAY - 1) / SECONDS_PER_DAY;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tl = Timeline::default();

    let tolerance = i64::from(cfg.feeding.tolerance_minutes) * 60;
    let feed_slots: Vec<i64> = cfg
        .feeding
        .times
        .iter()
        .map(|s| parse_hhmm(s))
        .collect::<Result<_>>()?;
    let near_feed = |at: i64| {
        let tod = (at - t0).rem_euclid(SECONDS_PER_DAY);
        feed_slots
            .iter()
            .any(|&s| (tod - s).abs() <= tolerance + 600)
    };

    // Injections that reshape baseline events are resolved first.
    let mut interrupted: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    let mut zero_rounds: BTreeMap<i64, usize> = BTreeMap::new();
    let round_period = cfg
        .sensors
        .iter()
        .map(|s| s.period_minutes)
        .min()
        .map(|p| i64::from(p) * 60);

    for inj in &cfg.injections {
        let at = t0 + (inj.at_hours * 3600.0).round() as i64;
        match inj.kind {
            AnomalyKind::MutualExclusion => {
                let slot = (0..=days)
                    .flat_map(|d| feed_slots.iter().map(move |s| t0 + d * SECONDS_PER_DAY + s))
                    .filter(|&s| s >= at && s < end)
                    .min()
                    .ok_or_else(|| {
                        Error::config("mutual exclusion injection has no feeding slot after it")
                    })?;
                let intruder = find_tank(cfg, inj.tank, 1)?;
                let pos = cfg
                    .feeding
                    .tanks
                    .iter()
                    .position(|t| t.tank == intruder.tank)
                    .unwrap_or(0);
                let label = tl.label(inj.kind);
                if interrupted.insert(slot, (label, pos)).is_some() {
                    return Err(Error::config(
                        "two mutual exclusion injections share a feeding slot",
                    ));
                }
            }
            AnomalyKind::MassDuplicate => {
                let period =
                    round_period.ok_or_else(|| Error::config("mass duplicate needs sensors"))?;
                let count = inj.count.unwrap_or(50);
                let first = t0 + ((at - t0 + period - 1) / period) * period;
                for r in 0..i64::from(count) {
                    let tick = first + r * period;
                    if tick >= end {
                        return Err(Error::config(
                            "mass duplicate runs past the end of the scenario",
                        ));
                    }
                    let label = tl.label(inj.kind);
                    if zero_rounds.insert(tick, label).is_some() {
                        return Err(Error::config("overlapping mass duplicate injections"));
                    }
                }
            }
            _ => {}
        }
    }

    // Sensor rounds: one group per tick holding every sensor due then.
    let normals: Vec<Normal<f64>> = cfg
        .sensors
        .iter()
        .map(|s| {
            Normal::new(s.mean, s.stddev)
                .map_err(|e| Error::config(format!("sensor {}: {e}", s.name)))
        })
        .collect::<Result<_>>()?;
    if let Some(period) = round_period {
        let mut tick = t0;
        while tick < end {
            let zero = zero_rounds.get(&tick).copied();
            let mut g = tl.group(zero);
            for (i, (s, dist)) in cfg.sensors.iter().zip(&normals).enumerate() {
                if (tick - t0) % (i64::from(s.period_minutes) * 60) != 0 {
                    continue;
                }
                // Always draw so that a zero round leaves later values unchanged.
                let v = round_to(dist.sample(&mut rng), s.decimals).clamp(s.min, s.max);
                if zero.is_some() {
                    g.num(tick, s.name.as_str(), 0.0);
                    if i == 0 {
                        g.push(tick, "lightning", Argument::None);
                    }
                } else {
                    g.num(tick, s.name.as_str(), v);
                }
            }
            tick += period;
        }
    }

    // Network heartbeats.
    for t in &cfg.targets {
        let period = i64::from(t.period_minutes) * 60;
        let mut tick = t0;
        while tick < end {
            tl.group(None)
                .text(tick, target_command(&t.address), "Alive");
            tick += period;
        }
    }

    for day in 0..days {
        let midnight = t0 + day * SECONDS_PER_DAY;

        for &slot in &feed_slots {
            let begin = midnight + slot;
            if begin >= end {
                continue;
            }
            let mut t = begin + rng.random_range(0..=120);
            if let Some(&(label, intruder)) = interrupted.get(&begin) {
                let mut g = tl.group(Some(label));
                let first = &cfg.feeding.tanks[0];
                let other = &cfg.feeding.tanks[intruder];
                t = interrupted_run(&mut g, &mut rng, first, other, t);
                let mut g = tl.group(None);
                for tank in &cfg.feeding.tanks[1..] {
                    t += rng.random_range(15..=35);
                    t = feeding_run(&mut g, &mut rng, tank, t);
                }
            } else {
                let mut g = tl.group(None);
                for (i, tank) in cfg.feeding.tanks.iter().enumerate() {
                    if i > 0 {
                        t += rng.random_range(15..=35);
                    }
                    t = feeding_run(&mut g, &mut rng, tank, t);
                }
            }
        }

        let mut morning = tl.group(None);
        for l in &cfg.lights {
            let at = midnight + parse_hhmm(&l.on_time)?;
            if at < end {
                morning.text(at, format!("{}_status", l.name), "on");
            }
        }
        let mut evening = tl.group(None);
        let dusk_jitter = rng.random_range(0..=300);
        for l in &cfg.lights {
            let at = midnight + parse_hhmm(&l.sunset)? + dusk_jitter;
            if at < end {
                evening.text(at, format!("{}_status", l.name), "off");
                evening.text(at, format!("{}_ontime", l.name), &l.on_time);
            }
        }

        for s in &cfg.switches {
            for (when, state) in [(&s.on, "on"), (&s.off, "off")] {
                let at = midnight + parse_hhmm(when)? + rng.random_range(0..=240);
                if at < end {
                    tl.group(None).text(at, s.command.as_str(), state);
                }
            }
        }
    }

    for n in &cfg.noise {
        let gap = Exp::new(1.0 / (n.mean_interval_minutes * 60.0))
            .map_err(|e| Error::config(e.to_string()))?;
        let mut t = t0 as f64;
        loop {
            t += gap.sample(&mut rng);
            let at = t.round() as i64;
            if at >= end {
                break;
            }
            let v = &n.values[rng.random_range(0..n.values.len())];
            tl.group(None).text(at, n.command.as_str(), v);
        }
    }

    // Point injections.
    for inj in &cfg.injections {
        let at = t0 + (inj.at_hours * 3600.0).round() as i64;
        match inj.kind {
            AnomalyKind::Reboot => {
                if cfg.lights.is_empty() {
                    return Err(Error::config("reboot injection needs lights"));
                }
                let tod = (at - t0).rem_euclid(SECONDS_PER_DAY);
                for l in &cfg.lights {
                    if (tod - parse_hhmm(&l.sunset)?).abs() <= 3600 {
                        return Err(Error::config("reboot injection too close to sunset"));
                    }
                }
                let label = tl.label(inj.kind);
                let mut g = tl.group(Some(label));
                for l in cfg.lights.iter().rev() {
                    g.text(at, format!("{}_status", l.name), "on");
                }
                for l in cfg.lights.iter().rev() {
                    g.text(at, format!("{}_ontime", l.name), &l.on_time);
                }
            }
            AnomalyKind::SingleFailure => {
                let address = match &inj.target {
                    Some(a) => a.clone(),
                    None => cfg
                        .targets
                        .first()
                        .map(|t| t.address.clone())
                        .ok_or_else(|| Error::config("single failure needs a network target"))?,
                };
                let label = tl.label(inj.kind);
                tl.group(Some(label))
                    .text(at, target_command(&address), "Lost");
            }
            AnomalyKind::ManualOperation => {
                if near_feed(at) {
                    return Err(Error::config(
                        "manual operation injection overlaps a feeding slot",
                    ));
                }
                let tank = find_tank(cfg, inj.tank, 0)?;
                let label = tl.label(inj.kind);
                let mut g = tl.group(Some(label));
                feeding_run(&mut g, &mut rng, tank, at);
            }
            AnomalyKind::MutualExclusion | AnomalyKind::MassDuplicate => {}
        }
    }

    // Assemble in time order; ties keep group creation order.
    let Timeline {
        mut rows, labels, ..
    } = tl;
    rows.sort_by_key(|r| (r.at, r.group, r.seq));
    let mut spans: Vec<Option<(u64, u64)>> = vec![None; labels.len()];
    let entries: Vec<LogEntry> = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let id = cfg.first_id + i as u64;
            if let Some(l) = r.label {
                let span = spans[l].get_or_insert((id, id));
                span.1 = id;
            }
            LogEntry::new(
                id,
                Timestamp::from_epoch_seconds(r.at),
                r.command,
                r.argument,
            )
        })
        .collect();

    let mut ranges: Vec<TruthRange> = labels
        .iter()
        .zip(&spans)
        .filter_map(|(kind, span)| {
            span.map(|(first_id, last_id)| TruthRange {
                kind: *kind,
                first_id,
                last_id,
            })
        })
        .collect();
    if ranges.len() != labels.len() {
        return Err(Error::config("an injection produced no log entries"));
    }
    ranges.sort_by_key(|r| (r.first_id, r.last_id));
    check_spacing(&ranges)?;

    Ok(SyntheticLog {
        entries,
        truth: GroundTruth(ranges),
    })
}

fn check_spacing(ranges: &[TruthRange]) -> Result<()> {
    for pair in ranges.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.kind == AnomalyKind::MassDuplicate
            && b.kind == AnomalyKind::MassDuplicate
            && b.first_id > a.last_id
        {
            continue;
        }
        if b.first_id <= a.last_id + MIN_INJECTION_GAP {
            return Err(Error::config(format!(
                "{} at ids {}..{} and {} at ids {}..{} are closer than {MIN_INJECTION_GAP} entries",
                a.kind, a.first_id, a.last_id, b.kind, b.first_id, b.last_id
            )));
        }
    }
    Ok(())
}

/// Result of replaying a log against the baseline rules.
#[derive(Debug, Clone, Default)]
pub struct Validation {
    pub ok: bool,
    /// Entry ids that break a baseline rule.
    pub violations: Vec<u64>,
    pub diagnostics: Vec<String>,
}

/// Replays `entries` against the rules the generator's baseline obeys and
/// checks that every truth range breaks them and nothing else does.
///
/// Rules: feed commands only near a scheduled slot and never inside an
/// `Operating` section; no `Operating` while one is open; `*_ontime` only
/// around sunset; no `Lost` network status; no zero sensor readings and no
/// `lightning` rows. After a violation the droid state machine resyncs.
pub fn validate(cfg: &ScenarioConfig, entries: &[LogEntry], truth: &GroundTruth) -> Validation {
    let mut out = Validation::default();
    let (t0, slots, sunsets) = match (|| -> Result<_> {
        let t0 = cfg.start()?.epoch_seconds();
        let slots: Vec<i64> = cfg
            .feeding
            .times
            .iter()
            .map(|s| parse_hhmm(s))
            .collect::<Result<_>>()?;
        let sunsets: BTreeMap<String, i64> = cfg
            .lights
            .iter()
            .map(|l| Ok((format!("{}_ontime", l.name), parse_hhmm(&l.sunset)?)))
            .collect::<Result<_>>()?;
        Ok((t0, slots, sunsets))
    })() {
        Ok(v) => v,
        Err(e) => {
            out.diagnostics.push(format!("bad scenario: {e}"));
            return out;
        }
    };
    let tolerance = i64::from(cfg.feeding.tolerance_minutes) * 60;
    let sensors: Vec<&str> = cfg.sensors.iter().map(|s| s.name.as_str()).collect();
    let time_of_day = |e: &LogEntry| (e.timestamp.epoch_seconds() - t0).rem_euclid(SECONDS_PER_DAY);

    let mut open: Option<u64> = None;
    for e in entries {
        let mut bad = |why: String| {
            out.violations.push(e.id);
            out.diagnostics.push(format!("entry {}: {why}", e.id));
        };
        let cmd = e.command.as_str();
        if cmd == "droid_status" {
            match e.string_arg() {
                Some("Operating") => {
                    if let Some(prev) = open {
                        bad(format!("Operating while section from {prev} is still open"));
                    }
                    open = Some(e.id);
                }
                Some("Waiting") => open = None,
                _ => {}
            }
        } else if cmd.starts_with("feed_tank_") {
            if let Some(prev) = open.take() {
                bad(format!("feed inside the critical section opened at {prev}"));
            } else {
                let tod = time_of_day(e);
                if !slots
                    .iter()
                    .any(|&s| tod >= s - tolerance && tod <= s + tolerance)
                {
                    bad("feed outside the schedule".into());
                }
            }
        } else if let Some(&sunset) = sunsets.get(cmd) {
            if (time_of_day(e) - sunset).abs() > tolerance {
                bad("ontime set away from sunset".into());
            }
        } else if cmd.starts_with("target_") && cmd.ends_with("_status") {
            if e.string_arg() == Some("Lost") {
                bad("network target lost".into());
            }
        } else if cmd == "lightning" {
            bad("lightning marker".into());
        } else if sensors.contains(&cmd) && e.numeric_arg() == Some(0.0) {
            bad("sensor reads zero".into());
        }
    }

    let (lo, hi) = match (entries.first(), entries.last()) {
        (Some(a), Some(b)) => (a.id, b.id),
        _ => (1, 0),
    };
    for r in truth.ranges() {
        if r.first_id > r.last_id || r.first_id < lo || r.last_id > hi {
            out.diagnostics.push(format!(
                "{} range {}..{} is outside the log",
                r.kind, r.first_id, r.last_id
            ));
            continue;
        }
        if !out.violations.iter().any(|&v| r.contains(v)) {
            out.diagnostics.push(format!(
                "{} range {}..{} breaks no baseline rule",
                r.kind, r.first_id, r.last_id
            ));
        }
    }
    let unlabeled: Vec<u64> = out
        .violations
        .iter()
        .copied()
        .filter(|&v| !truth.ranges().iter().any(|r| r.contains(v)))
        .collect();
    for v in &unlabeled {
        out.diagnostics
            .push(format!("violation at entry {v} is not in the ground truth"));
    }
    let truth_ok = truth.ranges().iter().all(|r| {
        r.first_id <= r.last_id
            && r.first_id >= lo
            && r.last_id <= hi
            && out.violations.iter().any(|&v| r.contains(v))
    });
    out.ok = truth_ok && unlabeled.is_empty();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log_model::{parse_log_with, ParseOptions};

    fn scenario(hours: f64, injections: Vec<Injection>) -> ScenarioConfig {
        ScenarioConfig {
            duration_hours: hours,
            injections,
            ..Default::default()
        }
    }

    #[test]
    fn clean_baseline() {
        let cfg = scenario(24.0, vec![]);
        let log = generate(&cfg).unwrap();
        assert!(log.truth.ranges().is_empty());
        assert!(!log.entries.is_empty());
        let v = validate(&cfg, &log.entries, &log.truth);
        assert!(v.ok, "{:?}", v.diagnostics);
        assert!(v.violations.is_empty());
    }

    #[test]
    fn baseline_parses_without_warnings() {
        let log = generate(&scenario(48.0, vec![])).unwrap();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let parsed = parse_log_with(&buf[..], ParseOptions::default()).unwrap();
        assert!(parsed.warnings.is_empty());
        assert_eq!(parsed.entries(), log.entries);
    }

    #[test]
    fn same_config_same_bytes() {
        let cfg = scenario(30.0, vec![Injection::new(AnomalyKind::SingleFailure, 10.3)]);
        let render = || {
            let mut buf = Vec::new();
            generate(&cfg).unwrap().write_csv(&mut buf).unwrap();
            buf
        };
        assert_eq!(render(), render());
        let mut other = cfg.clone();
        other.seed = 2;
        let mut buf = Vec::new();
        generate(&other).unwrap().write_csv(&mut buf).unwrap();
        assert_ne!(render(), buf);
    }

    /// Tracks the droid critical section independently of `validate`.
    fn has_unmatched_operating(entries: &[LogEntry]) -> bool {
        let mut open = false;
        for e in entries {
            match (e.command.as_str(), e.string_arg()) {
                ("droid_status", Some("Operating")) => open = true,
                ("droid_status", Some("Waiting")) => open = false,
                _ => {}
            }
        }
        open
    }

    #[test]
    fn mutual_exclusion_range_has_unmatched_operating() {
        let cfg = scenario(
            24.0,
            vec![Injection::new(AnomalyKind::MutualExclusion, 11.5)],
        );
        let log = generate(&cfg).unwrap();
        assert_eq!(log.truth.ranges().len(), 1);
        let r = &log.truth.ranges()[0];
        assert_eq!(r.kind, AnomalyKind::MutualExclusion);
        let inside: Vec<_> = log
            .entries
            .iter()
            .filter(|e| r.contains(e.id))
            .cloned()
            .collect();
        assert!(has_unmatched_operating(&inside));
        assert!(validate(&cfg, &log.entries, &log.truth).ok);
    }

    #[test]
    fn mass_duplicate_ranges() {
        let mut inj = Injection::new(AnomalyKind::MassDuplicate, 20.0);
        inj.count = Some(50);
        let cfg = scenario(36.0, vec![inj]);
        let log = generate(&cfg).unwrap();
        let ranges = log.truth.ranges();
        assert_eq!(ranges.len(), 50);
        assert!(ranges.windows(2).all(|p| p[0].last_id < p[1].first_id));
        let payload = |r: &TruthRange| -> Vec<(String, Argument)> {
            log.entries
                .iter()
                .filter(|e| r.contains(e.id))
                .map(|e| (e.command.clone(), e.argument.clone()))
                .collect()
        };
        // Rounds on the coarser sensor grid carry more sensors; the rest match exactly.
        let first = payload(&ranges[1]);
        let same = ranges.iter().filter(|r| payload(r) == first).count();
        assert!(same >= 30, "only {same} identical rounds");
        assert!(validate(&cfg, &log.entries, &log.truth).ok);
    }

    #[test]
    fn every_kind_validates_and_shift_is_caught() {
        let mut md = Injection::new(AnomalyKind::MassDuplicate, 50.0);
        md.count = Some(5);
        let cfg = scenario(
            72.0,
            vec![
                Injection::new(AnomalyKind::MutualExclusion, 7.0),
                Injection::new(AnomalyKind::Reboot, 13.6),
                Injection::new(AnomalyKind::SingleFailure, 21.2),
                Injection::new(AnomalyKind::ManualOperation, 33.8),
                md,
            ],
        );
        let log = generate(&cfg).unwrap();
        let kinds: std::collections::BTreeSet<_> =
            log.truth.ranges().iter().map(|r| r.kind).collect();
        assert_eq!(kinds.len(), 5);
        let v = validate(&cfg, &log.entries, &log.truth);
        assert!(v.ok, "{:?}", v.diagnostics);

        let mut shifted = log.truth.clone();
        for r in &mut shifted.0 {
            r.first_id += 100;
            r.last_id += 100;
        }
        assert!(!validate(&cfg, &log.entries, &shifted).ok);
        assert!(!validate(&cfg, &log.entries, &GroundTruth::default()).ok);
    }

    #[test]
    fn configuration_errors() {
        let late = scenario(10.0, vec![Injection::new(AnomalyKind::SingleFailure, 12.0)]);
        assert!(matches!(generate(&late), Err(Error::Config(_))));
        let manual_at_noon = scenario(
            24.0,
            vec![Injection::new(AnomalyKind::ManualOperation, 12.0)],
        );
        assert!(matches!(generate(&manual_at_noon), Err(Error::Config(_))));
        let crowded = scenario(
            24.0,
            vec![
                Injection::new(AnomalyKind::SingleFailure, 3.0),
                Injection::new(AnomalyKind::Reboot, 3.01),
            ],
        );
        assert!(matches!(generate(&crowded), Err(Error::Config(_))));
    }

    #[test]
    fn default_baseline_uses_39_commands() {
        let cfg = scenario(24.0, vec![]);
        let log = generate(&cfg).unwrap();
        let kept =
            crate::log_model::filter_entries(&log.entries, &Default::default(), &cfg.class_map());
        let commands: std::collections::BTreeSet<_> =
            kept.iter().map(|e| e.command.as_str()).collect();
        assert_eq!(commands.len(), 39);
    }

    #[test]
    fn toml_round_trip_and_class_map() {
        let cfg = scenario(12.0, vec![Injection::new(AnomalyKind::Reboot, 2.0)]);
        let text = toml::to_string(&cfg).unwrap();
        let back = ScenarioConfig::from_toml(&text).unwrap();
        assert_eq!(back.injections, cfg.injections);
        let classes = cfg.class_map();
        assert_eq!(classes.classify("humidity"), CommandClass::SensorValue);
        assert_eq!(
            classes.classify("droid_status"),
            CommandClass::ActuatorDrive
        );
        assert_eq!(
            classes.classify("target_192.168.68.93_status"),
            CommandClass::NetworkStatus
        );
        assert_eq!(classes.classify("location_X"), CommandClass::Other);
    }

    #[test]
    fn truth_json_shape() {
        let truth = GroundTruth(vec![TruthRange {
            kind: AnomalyKind::Reboot,
            first_id: 3,
            last_id: 8,
        }]);
        let text = serde_json::to_string(&truth).unwrap();
        assert_eq!(text, r#"[{"kind":"reboot","first_id":3,"last_id":8}]"#);
    }
}
