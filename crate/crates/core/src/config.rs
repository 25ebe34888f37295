//! Scenario files.
//!
//! A flat INI-style document: `[section]` headers, `key = value` lines, and
//! comments starting with `#` or `;`. Every key is optional except the machine
//! constants; omitted keys take the simulator defaults.
//!
//! ```text
//! [machine]
//! r = 0.5
//! l_d = 0.003
//! l_q = 0.005
//! psi = 0.1
//! pole_pairs = 4
//!
//! [simulation]        # duration, dt_plant, dt_ctrl, horizon, v_max, sampling = zoh | per_stage
//! [initial]           # i_d, i_q, theta
//! [torque]            # profile = constant | step | sinusoid | trapezoid | table, plus its keys
//! [speed]             # mode = prescribed (profile keys) | mechanical (inertia, friction, initial_speed)
//! [load]              # load torque profile for mode = mechanical
//! [controller]        # kp, ki, alpha_z, z_step = lookahead | full_budget
//! [output]            # controllers = oflc, flc_z0, id_zero; decimation
//! ```
//!
//! Profile keys: `value` (constant); `initial`, `final`, `at` (step);
//! `offset`, `amplitude`, `frequency`, `phase` (sinusoid); `low`, `high`,
//! `rise_start`, `rise_end`, `fall_start`, `fall_end` (trapezoid);
//! `points = t0:v0, t1:v1, ...` (table).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::machine::{DqState, MachineParams};
use crate::sim::{ControllerKind, MechanicalModel, Profile, Sampling, Scenario, SpeedSource};
use crate::torque_loop::{PiGains, ZStep};

const DEFAULT_DURATION: f64 = 0.1;

/// Command-line level settings that sit next to a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario_path: Option<PathBuf>,
    pub controllers: Vec<ControllerKind>,
    pub out_dir: Option<PathBuf>,
    /// Keep every n-th control frame in the trace.
    pub decimation: usize,
    pub overrides: Overrides,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario_path: None,
            controllers: vec![ControllerKind::Oflc, ControllerKind::FlcZ0, ControllerKind::IdZero],
            out_dir: None,
            decimation: 1,
            overrides: Overrides::default(),
        }
    }
}

/// Values that replace the scenario file's settings.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Overrides {
    pub v_max: Option<f64>,
    pub horizon: Option<f64>,
    pub kp: Option<f64>,
    pub ki: Option<f64>,
    pub alpha_z: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, s: &mut Scenario) -> Result<()> {
        if let Some(v) = self.v_max {
            s.v_max = v;
        }
        if let Some(h) = self.horizon {
            s.horizon = h;
        }
        if let Some(kp) = self.kp {
            s.gains.kp = kp;
        }
        if let Some(ki) = self.ki {
            s.gains.ki = ki;
        }
        if let Some(a) = self.alpha_z {
            s.alpha_z = a;
        }
        s.validate()
    }
}

struct Entry {
    value: String,
    line: usize,
}

struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

struct Document {
    sections: BTreeMap<String, Section>,
}

impl Document {
    fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, Section> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw.find(['#', ';']) {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Parse {
                        line,
                        reason: "section header is missing `]`".into(),
                    })?
                    .trim()
                    .to_ascii_lowercase();
                if !KNOWN_SECTIONS.contains(&name.as_str()) {
                    return Err(Error::Parse {
                        line,
                        reason: format!("unknown section [{name}]"),
                    });
                }
                if sections.contains_key(&name) {
                    return Err(Error::Parse {
                        line,
                        reason: format!("section [{name}] appears twice"),
                    });
                }
                sections.insert(
                    name.clone(),
                    Section {
                        line,
                        entries: BTreeMap::new(),
                    },
                );
                current = Some(name);
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                reason: format!("expected `key = value`, found `{content}`"),
            })?;
            let key = key.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(Error::Parse {
                    line,
                    reason: "empty key".into(),
                });
            }
            let section = current.as_ref().ok_or_else(|| Error::Parse {
                line,
                reason: format!("key `{key}` appears before any [section]"),
            })?;
            let entries = &mut sections.get_mut(section).expect("section exists").entries;
            if entries.contains_key(&key) {
                return Err(Error::Parse {
                    line,
                    reason: format!("duplicate key `{key}` in [{section}]"),
                });
            }
            entries.insert(
                key,
                Entry {
                    value: value.trim().to_string(),
                    line,
                },
            );
        }
        Ok(Document { sections })
    }

    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        self.sections.get(section)?.entries.get(key).map(|e| e.line)
    }
}

const KNOWN_SECTIONS: &[&str] = &[
    "machine",
    "simulation",
    "initial",
    "torque",
    "speed",
    "load",
    "controller",
    "output",
];

/// Reads typed values out of one section and tracks which keys were used.
struct Reader<'a> {
    name: &'static str,
    section: Option<&'a Section>,
    used: Vec<&'static str>,
}

impl<'a> Reader<'a> {
    fn new(doc: &'a Document, name: &'static str) -> Self {
        Reader {
            name,
            section: doc.sections.get(name),
            used: Vec::new(),
        }
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Entry> {
        self.used.push(key);
        self.section?.entries.get(key)
    }

    fn field(&self, key: &str) -> String {
        format!("{}.{}", self.name, key)
    }

    fn f64_opt(&mut self, key: &'static str) -> Result<Option<f64>> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        let v: f64 = e.value.parse().map_err(|_| Error::Parse {
            line: e.line,
            reason: format!("`{}` is not a number: `{}`", self.field(key), e.value),
        })?;
        if !v.is_finite() {
            return Err(Error::Validation {
                field: self.field(key),
                line: Some(e.line),
                reason: "must be finite".into(),
            });
        }
        Ok(Some(v))
    }

    fn f64_or(&mut self, key: &'static str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn f64_req(&mut self, key: &'static str) -> Result<f64> {
        self.f64_opt(key)?.ok_or_else(|| Error::Validation {
            field: self.field(key),
            line: self.section.map(|s| s.line),
            reason: "required".into(),
        })
    }

    fn str_opt(&mut self, key: &'static str) -> Option<(&'a str, usize)> {
        self.raw(key).map(|e| (e.value.as_str(), e.line))
    }

    fn finish(self) -> Result<()> {
        if let Some(section) = self.section {
            for (key, e) in &section.entries {
                if !self.used.contains(&key.as_str()) {
                    return Err(Error::Parse {
                        line: e.line,
                        reason: format!("unknown key `{key}` in [{}]", self.name),
                    });
                }
            }
        }
        Ok(())
    }
}

fn read_profile(r: &mut Reader<'_>, default: Profile) -> Result<Profile> {
    let Some((kind, line)) = r.str_opt("profile") else {
        return Ok(default);
    };
    let profile = match kind.to_ascii_lowercase().as_str() {
        "constant" => Profile::Constant(r.f64_req("value")?),
        "step" => Profile::Step {
            initial: r.f64_or("initial", 0.0)?,
            final_value: r.f64_req("final")?,
            at: r.f64_or("at", 0.0)?,
        },
        "sinusoid" => Profile::Sinusoid {
            offset: r.f64_or("offset", 0.0)?,
            amplitude: r.f64_req("amplitude")?,
            frequency: r.f64_req("frequency")?,
            phase: r.f64_or("phase", 0.0)?,
        },
        "trapezoid" => Profile::Trapezoid {
            low: r.f64_or("low", 0.0)?,
            high: r.f64_req("high")?,
            rise_start: r.f64_req("rise_start")?,
            rise_end: r.f64_req("rise_end")?,
            fall_start: r.f64_req("fall_start")?,
            fall_end: r.f64_req("fall_end")?,
        },
        "table" => {
            let (text, line) = r.str_opt("points").ok_or_else(|| Error::Validation {
                field: r.field("points"),
                line: Some(line),
                reason: "table profile needs `points`".into(),
            })?;
            let mut points = Vec::new();
            for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let parsed = item
                    .split_once(':')
                    .and_then(|(t, v)| Some((t.trim().parse().ok()?, v.trim().parse().ok()?)));
                points.push(parsed.ok_or_else(|| Error::Parse {
                    line,
                    reason: format!("table point `{item}` is not `time:value`"),
                })?);
            }
            Profile::Table(points)
        }
        other => {
            return Err(Error::Validation {
                field: r.field("profile"),
                line: Some(line),
                reason: format!("unknown profile `{other}`"),
            })
        }
    };
    profile
        .validate(&r.field("profile"))
        .map_err(|e| with_line(e, Some(line)))?;
    Ok(profile)
}

fn with_line(e: Error, line: Option<usize>) -> Error {
    match e {
        Error::Validation { field, reason, .. } => Error::Validation { field, line, reason },
        other => other,
    }
}

/// Parses a scenario document into a validated [`Scenario`] and the run
/// settings stored alongside it.
pub fn parse_config(text: &str) -> Result<(Scenario, RunConfig)> {
    let doc = Document::parse(text)?;

    let mut m = Reader::new(&doc, "machine");
    if m.section.is_none() {
        return Err(Error::validation("machine", "section [machine] is required"));
    }
    let pole_pairs = match m.str_opt("pole_pairs") {
        None => {
            return Err(Error::Validation {
                field: "machine.pole_pairs".into(),
                line: m.section.map(|s| s.line),
                reason: "required".into(),
            })
        }
        Some((v, line)) => v.parse::<u32>().map_err(|_| Error::Validation {
            field: "machine.pole_pairs".into(),
            line: Some(line),
            reason: format!("must be a positive integer, got `{v}`"),
        })?,
    };
    let params = MachineParams {
        r: m.f64_req("r")?,
        l_d: m.f64_req("l_d")?,
        l_q: m.f64_req("l_q")?,
        psi: m.f64_req("psi")?,
        pole_pairs,
    };
    m.finish()?;
    params.validate().map_err(|e| match e {
        Error::InvalidParams { field, reason } => Error::Validation {
            field: format!("machine.{field}"),
            line: doc.line_of("machine", field),
            reason,
        },
        other => other,
    })?;

    let mut tq = Reader::new(&doc, "torque");
    let torque = read_profile(&mut tq, Profile::Constant(0.0))?;
    tq.finish()?;

    let mut sp = Reader::new(&doc, "speed");
    let mode = sp.str_opt("mode").map(|(m, l)| (m.to_ascii_lowercase(), l));
    let speed = match mode.as_ref().map(|(m, l)| (m.as_str(), *l)) {
        None | Some(("prescribed", _)) => SpeedSource::Prescribed(read_profile(&mut sp, Profile::Constant(0.0))?),
        Some(("mechanical", _)) => {
            let mut ld = Reader::new(&doc, "load");
            let load = read_profile(&mut ld, Profile::Constant(0.0))?;
            ld.finish()?;
            SpeedSource::Mechanical(MechanicalModel {
                inertia: sp.f64_req("inertia")?,
                friction: sp.f64_or("friction", 0.0)?,
                load,
                initial_speed: sp.f64_or("initial_speed", 0.0)?,
            })
        }
        Some((other, line)) => {
            return Err(Error::Validation {
                field: "speed.mode".into(),
                line: Some(line),
                reason: format!("unknown speed mode `{other}` (expected prescribed or mechanical)"),
            })
        }
    };
    sp.finish()?;
    if !matches!(speed, SpeedSource::Mechanical(_)) && doc.sections.contains_key("load") {
        return Err(Error::Parse {
            line: doc.sections["load"].line,
            reason: "[load] only applies with speed mode = mechanical".into(),
        });
    }

    let mut scenario = Scenario::new(params, DEFAULT_DURATION, torque, speed);

    let mut sim = Reader::new(&doc, "simulation");
    scenario.duration = sim.f64_or("duration", scenario.duration)?;
    scenario.dt_plant = sim.f64_or("dt_plant", scenario.dt_plant)?;
    scenario.dt_ctrl = sim.f64_or("dt_ctrl", scenario.dt_ctrl)?;
    scenario.horizon = sim.f64_or("horizon", scenario.horizon)?;
    scenario.v_max = sim.f64_or("v_max", scenario.v_max)?;
    if let Some((v, line)) = sim.str_opt("sampling") {
        scenario.sampling = match v.to_ascii_lowercase().as_str() {
            "zoh" => Sampling::ZeroOrderHold,
            "per_stage" => Sampling::PerStage,
            other => {
                return Err(Error::Validation {
                    field: "simulation.sampling".into(),
                    line: Some(line),
                    reason: format!("unknown sampling `{other}` (expected zoh or per_stage)"),
                })
            }
        };
    }
    sim.finish()?;

    let mut init = Reader::new(&doc, "initial");
    scenario.initial = DqState::new(init.f64_or("i_d", 0.0)?, init.f64_or("i_q", 0.0)?);
    scenario.initial_theta = init.f64_or("theta", 0.0)?;
    init.finish()?;

    let mut ctl = Reader::new(&doc, "controller");
    let defaults = PiGains::default();
    scenario.gains = PiGains::new(ctl.f64_or("kp", defaults.kp)?, ctl.f64_or("ki", defaults.ki)?);
    scenario.alpha_z = ctl.f64_or("alpha_z", scenario.alpha_z)?;
    if let Some((v, line)) = ctl.str_opt("z_step") {
        scenario.z_step = match v.to_ascii_lowercase().as_str() {
            "lookahead" => ZStep::Lookahead,
            "full_budget" => ZStep::FullBudget,
            other => {
                return Err(Error::Validation {
                    field: "controller.z_step".into(),
                    line: Some(line),
                    reason: format!("unknown z_step `{other}` (expected lookahead or full_budget)"),
                })
            }
        };
    }
    ctl.finish()?;

    let mut run = RunConfig::default();
    let mut out = Reader::new(&doc, "output");
    if let Some((list, line)) = out.str_opt("controllers") {
        let mut kinds = Vec::new();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let kind: ControllerKind = name.parse().map_err(|e| with_line(e, Some(line)))?;
            if !kinds.contains(&kind) {
                kinds.push(kind);
            }
        }
        if kinds.is_empty() {
            return Err(Error::Validation {
                field: "output.controllers".into(),
                line: Some(line),
                reason: "at least one controller is required".into(),
            });
        }
        run.controllers = kinds;
    }
    if let Some((v, line)) = out.str_opt("decimation") {
        run.decimation = match v.parse::<usize>() {
            Ok(n) if n >= 1 => n,
            _ => {
                return Err(Error::Validation {
                    field: "output.decimation".into(),
                    line: Some(line),
                    reason: format!("must be an integer >= 1, got `{v}`"),
                })
            }
        };
    }
    if let Some((dir, _)) = out.str_opt("dir") {
        run.out_dir = Some(PathBuf::from(dir));
    }
    out.finish()?;

    scenario.validate().map_err(|e| anchor(e, &doc))?;
    Ok((scenario, run))
}

/// Attaches the line of the first named key to a scenario validation error.
fn anchor(e: Error, doc: &Document) -> Error {
    match e {
        Error::Validation {
            field,
            line: None,
            reason,
        } => {
            let line = field.split(',').map(str::trim).find_map(|key| {
                doc.sections
                    .iter()
                    .find_map(|(_, s)| s.entries.get(key).map(|e| e.line))
            });
            Error::Validation { field, line, reason }
        }
        other => other,
    }
}

fn write_profile(out: &mut String, p: &Profile) {
    match p {
        Profile::Constant(v) => {
            let _ = writeln!(out, "profile = constant\nvalue = {v}");
        }
        Profile::Step {
            initial,
            final_value,
            at,
        } => {
            let _ = writeln!(
                out,
                "profile = step\ninitial = {initial}\nfinal = {final_value}\nat = {at}"
            );
        }
        Profile::Sinusoid {
            offset,
            amplitude,
            frequency,
            phase,
        } => {
            let _ = writeln!(
                out,
                "profile = sinusoid\noffset = {offset}\namplitude = {amplitude}\nfrequency = {frequency}\nphase = {phase}"
            );
        }
        Profile::Trapezoid {
            low,
            high,
            rise_start,
            rise_end,
            fall_start,
            fall_end,
        } => {
            let _ = writeln!(
                out,
                "profile = trapezoid\nlow = {low}\nhigh = {high}\nrise_start = {rise_start}\nrise_end = {rise_end}\nfall_start = {fall_start}\nfall_end = {fall_end}"
            );
        }
        Profile::Table(points) => {
            let items: Vec<String> = points.iter().map(|(t, v)| format!("{t}:{v}")).collect();
            let _ = writeln!(out, "profile = table\npoints = {}", items.join(", "));
        }
    }
}

/// Writes a document that [`parse_config`] reads back to the same scenario
/// and run settings. Floats use the shortest exact representation.
pub fn serialize(s: &Scenario, run: &RunConfig) -> String {
    let mut out = String::new();
    let p = &s.params;
    let _ = writeln!(
        out,
        "[machine]\nr = {}\nl_d = {}\nl_q = {}\npsi = {}\npole_pairs = {}\n",
        p.r, p.l_d, p.l_q, p.psi, p.pole_pairs
    );
    let sampling = match s.sampling {
        Sampling::ZeroOrderHold => "zoh",
        Sampling::PerStage => "per_stage",
    };
    let _ = writeln!(
        out,
        "[simulation]\nduration = {}\ndt_plant = {}\ndt_ctrl = {}\nhorizon = {}\nv_max = {}\nsampling = {sampling}\n",
        s.duration, s.dt_plant, s.dt_ctrl, s.horizon, s.v_max
    );
    let _ = writeln!(
        out,
        "[initial]\ni_d = {}\ni_q = {}\ntheta = {}\n",
        s.initial.i_d, s.initial.i_q, s.initial_theta
    );
    out.push_str("[torque]\n");
    write_profile(&mut out, &s.torque);
    out.push('\n');
    out.push_str("[speed]\n");
    match &s.speed {
        SpeedSource::Prescribed(profile) => {
            out.push_str("mode = prescribed\n");
            write_profile(&mut out, profile);
            out.push('\n');
        }
        SpeedSource::Mechanical(m) => {
            let _ = writeln!(
                out,
                "mode = mechanical\ninertia = {}\nfriction = {}\ninitial_speed = {}\n",
                m.inertia, m.friction, m.initial_speed
            );
            out.push_str("[load]\n");
            write_profile(&mut out, &m.load);
            out.push('\n');
        }
    }
    let z_step = match s.z_step {
        ZStep::Lookahead => "lookahead",
        ZStep::FullBudget => "full_budget",
    };
    let _ = writeln!(
        out,
        "[controller]\nkp = {}\nki = {}\nalpha_z = {}\nz_step = {z_step}\n",
        s.gains.kp, s.gains.ki, s.alpha_z
    );
    let names: Vec<&str> = run.controllers.iter().map(|k| k.name()).collect();
    let _ = writeln!(
        out,
        "[output]\ncontrollers = {}\ndecimation = {}",
        names.join(", "),
        run.decimation
    );
    if let Some(dir) = &run.out_dir {
        let _ = writeln!(out, "dir = {}", dir.display());
    }
    out
}
