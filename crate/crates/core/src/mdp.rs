//! Agent-facing state, transitions, the per-hour cost and forecast injection.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{ensure_finite, Error, Result};

/// Default history depth `k`: the observation carries `k + 1` room temperatures.
pub const DEFAULT_DEPTH: usize = 4;

/// What a learning agent sees at the start of an hour.
///
/// `u_phys_history` holds the delivered (not requested) average heater power of
/// the `k` hours preceding the decision, oldest first. Together with the room
/// temperature history it makes the slow mass temperature inferable.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentObservation {
    pub t_room_history: Vec<f64>,
    pub u_phys_history: Vec<f64>,
    pub t_ambient: f64,
    pub timeslot: usize,
}

impl AgentObservation {
    /// Current room temperature (newest history entry).
    pub fn t_room(&self) -> f64 {
        *self.t_room_history.last().expect("history is never empty")
    }

    pub fn depth(&self) -> usize {
        self.t_room_history.len() - 1
    }
}

/// Builds an observation from raw hourly samples, keeping the newest `depth + 1`
/// room temperatures and `depth` powers. Short histories are padded at the front
/// by repeating the earliest sample; missing powers are padded with zero.
pub fn make_observation(
    t_room_samples: &[f64],
    u_phys_samples: &[f64],
    t_ambient: f64,
    timeslot: usize,
    depth: usize,
) -> Result<AgentObservation> {
    let first = *t_room_samples
        .first()
        .ok_or_else(|| Error::invalid("room temperature history is empty"))?;
    let t_room_history = pad_tail(t_room_samples, depth + 1, first);
    let u_first = u_phys_samples.first().copied().unwrap_or(0.0);
    let u_phys_history = pad_tail(u_phys_samples, depth, u_first);
    ensure_finite("t_ambient", t_ambient)?;
    Ok(AgentObservation {
        t_room_history,
        u_phys_history,
        t_ambient,
        timeslot,
    })
}

fn pad_tail(samples: &[f64], len: usize, fill: f64) -> Vec<f64> {
    let take = samples.len().min(len);
    let mut out = vec![fill; len - take];
    out.extend_from_slice(&samples[samples.len() - take..]);
    out
}

/// Rolling hourly history used while stepping an episode.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    depth: usize,
    t_room: VecDeque<f64>,
    u_phys: VecDeque<f64>,
}

impl HistoryBuffer {
    pub fn new(depth: usize) -> Self {
        HistoryBuffer {
            depth,
            t_room: VecDeque::with_capacity(depth + 1),
            u_phys: VecDeque::with_capacity(depth),
        }
    }

    pub fn push_room(&mut self, t_room: f64) {
        if self.t_room.len() == self.depth + 1 {
            self.t_room.pop_front();
        }
        self.t_room.push_back(t_room);
    }

    pub fn push_power(&mut self, u_phys: f64) {
        if self.depth == 0 {
            return;
        }
        if self.u_phys.len() == self.depth {
            self.u_phys.pop_front();
        }
        self.u_phys.push_back(u_phys);
    }

    pub fn observe(&self, t_ambient: f64, timeslot: usize) -> Result<AgentObservation> {
        let rooms: Vec<f64> = self.t_room.iter().copied().collect();
        let powers: Vec<f64> = self.u_phys.iter().copied().collect();
        make_observation(&rooms, &powers, t_ambient, timeslot, self.depth)
    }
}

/// One recorded hour: `(x_i, u_i, x_{i+1}, u^phys_i)`.
///
/// `hidden` optionally carries the simulator's true mass temperature at both
/// ends of the hour. Learning agents never read it; it exists for audits.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: AgentObservation,
    pub action: u8,
    pub next_obs: AgentObservation,
    pub u_phys: f64,
    pub hidden: Option<[f64; 2]>,
}

/// Append-only collection of transitions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperienceBatch {
    pub transitions: Vec<Transition>,
    pub seed: u64,
    /// Number of simulated days that produced this batch.
    pub days: usize,
}

impl ExperienceBatch {
    pub fn new(seed: u64) -> Self {
        ExperienceBatch {
            transitions: Vec::new(),
            seed,
            days: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.action > 1 {
            return Err(Error::invalid(format!("action {} is not binary", t.action)));
        }
        ensure_finite("u_phys", t.u_phys)?;
        if t.u_phys < 0.0 {
            return Err(Error::invalid(format!("negative u_phys {}", t.u_phys)));
        }
        if let Some(first) = self.transitions.first() {
            if first.obs.depth() != t.obs.depth() || t.next_obs.depth() != t.obs.depth() {
                return Err(Error::Shape {
                    expected: first.obs.depth(),
                    got: t.obs.depth(),
                    context: "transition history depth",
                });
            }
        }
        self.transitions.push(t);
        Ok(())
    }

    /// A copy holding the first `n` transitions, as recorded after `days` days.
    pub fn snapshot(&self, n: usize, days: usize) -> ExperienceBatch {
        ExperienceBatch {
            transitions: self.transitions[..n.min(self.len())].to_vec(),
            seed: self.seed,
            days,
        }
    }

    pub fn depth(&self) -> Option<usize> {
        self.transitions.first().map(|t| t.obs.depth())
    }
}

/// Forecast exogenous inputs over the 2T planning window, one value per hour.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastBundle {
    pub prices: Vec<f64>,
    pub t_ambient: Vec<f64>,
}

impl ForecastBundle {
    pub fn new(prices: Vec<f64>, t_ambient: Vec<f64>) -> Result<Self> {
        if prices.len() != t_ambient.len() {
            return Err(Error::Shape {
                expected: prices.len(),
                got: t_ambient.len(),
                context: "forecast ambient length",
            });
        }
        for p in &prices {
            ensure_finite("forecast price", *p)?;
        }
        for t in &t_ambient {
            ensure_finite("forecast ambient", *t)?;
        }
        Ok(ForecastBundle { prices, t_ambient })
    }

    /// Number of hourly slots covered (2T).
    pub fn horizon(&self) -> usize {
        self.prices.len()
    }
}

/// Energy cost of one slot in €: `price [€/MWh] × u_phys [kW] × dt [h] / 1000`.
pub fn step_cost(price: f64, u_phys: f64, dt_hours: f64) -> Result<f64> {
    ensure_finite("price", price)?;
    ensure_finite("u_phys", u_phys)?;
    if u_phys < 0.0 {
        return Err(Error::invalid(format!("negative u_phys {u_phys}")));
    }
    if !(dt_hours > 0.0) {
        return Err(Error::invalid(format!("dt_hours must be > 0, got {dt_hours}")));
    }
    Ok(price * u_phys * dt_hours / 1000.0)
}

/// Replaces the exogenous part of an observation with the forecast for `target_slot`.
pub fn inject_forecast(
    obs: &AgentObservation,
    forecasts: &ForecastBundle,
    target_slot: usize,
) -> Result<AgentObservation> {
    if target_slot >= forecasts.horizon() {
        return Err(Error::invalid(format!(
            "slot {target_slot} outside forecast horizon {}",
            forecasts.horizon()
        )));
    }
    Ok(AgentObservation {
        t_room_history: obs.t_room_history.clone(),
        u_phys_history: obs.u_phys_history.clone(),
        t_ambient: forecasts.t_ambient[target_slot],
        timeslot: target_slot,
    })
}

const BATCH_MAGIC: &str = "physq-batch";
const BATCH_VERSION: &str = "v1";

/// Writes the batch as text: a header line, then one transition per line.
///
/// Header: `physq-batch v1 depth=<k> count=<n> seed=<s> days=<d>`.
/// Line fields, whitespace separated: `slot t_ambient t_room[0..=k] u_phys[0..k]`
/// for the observation, `action`, the same block for the next observation,
/// `u_phys`, then the true mass temperatures `t_mass t_mass_next` (`-` if unknown).
pub fn save_batch(batch: &ExperienceBatch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let depth = batch.depth().unwrap_or(DEFAULT_DEPTH);
    let mut out = String::new();
    writeln!(
        out,
        "{BATCH_MAGIC} {BATCH_VERSION} depth={depth} count={} seed={} days={}",
        batch.len(),
        batch.seed,
        batch.days
    )
    .unwrap();
    for t in &batch.transitions {
        write_obs(&mut out, &t.obs);
        write!(out, " {}", t.action).unwrap();
        write_obs(&mut out, &t.next_obs);
        write!(out, " {}", t.u_phys).unwrap();
        match t.hidden {
            Some([a, b]) => writeln!(out, " {a} {b}").unwrap(),
            None => out.push_str(" - -\n"),
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_obs(out: &mut String, o: &AgentObservation) {
    if !out.ends_with('\n') && !out.is_empty() {
        out.push(' ');
    }
    write!(out, "{} {}", o.timeslot, o.t_ambient).unwrap();
    for v in o.t_room_history.iter().chain(&o.u_phys_history) {
        write!(out, " {v}").unwrap();
    }
}

pub fn load_batch(path: impl AsRef<Path>) -> Result<ExperienceBatch> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Truncated {
        path: path.to_path_buf(),
        last_good_line: 0,
        message: "missing header".into(),
    })?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut head = header.split_whitespace();
    if head.next() != Some(BATCH_MAGIC) {
        return Err(parse_err(1, "not a batch file".into()));
    }
    let version = head.next().unwrap_or("");
    if version != BATCH_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: version.to_string(),
            expected: BATCH_VERSION,
        });
    }
    let mut depth = None;
    let mut count = None;
    let mut seed = 0;
    let mut days = 0;
    for kv in head {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("bad header field `{kv}`")))?;
        let n: u64 = v
            .parse()
            .map_err(|_| parse_err(1, format!("bad header value `{kv}`")))?;
        match k {
            "depth" => depth = Some(n as usize),
            "count" => count = Some(n as usize),
            "seed" => seed = n,
            "days" => days = n as usize,
            _ => return Err(parse_err(1, format!("unknown header field `{k}`"))),
        }
    }
    let depth = depth.ok_or_else(|| parse_err(1, "header lacks depth".into()))?;
    let count = count.ok_or_else(|| parse_err(1, "header lacks count".into()))?;
    let obs_fields = 2 + (depth + 1) + depth;
    let n_fields = 2 * obs_fields + 4;
    let body: Vec<&str> = lines.collect();
    let mut batch = ExperienceBatch {
        transitions: Vec::with_capacity(count),
        seed,
        days,
    };
    for (idx, raw) in body.iter().enumerate() {
        let line_no = idx + 2;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.len() != n_fields {
            if idx + 1 == body.len() && batch.len() < count {
                return Err(Error::Truncated {
                    path: path.to_path_buf(),
                    last_good_line: line_no - 1,
                    message: format!("line {line_no} has {} of {n_fields} fields", fields.len()),
                });
            }
            return Err(parse_err(
                line_no,
                format!("expected {n_fields} fields, found {}", fields.len()),
            ));
        }
        let t = parse_transition(&fields, depth)
            .map_err(|m| parse_err(line_no, m))?;
        batch
            .push(t)
            .map_err(|e| parse_err(line_no, e.to_string()))?;
    }
    if batch.len() != count {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            last_good_line: batch.len() + 1,
            message: format!("header declares {count} transitions, found {}", batch.len()),
        });
    }
    Ok(batch)
}

fn parse_transition(fields: &[&str], depth: usize) -> std::result::Result<Transition, String> {
    let num = |s: &str| s.parse::<f64>().map_err(|_| format!("bad number `{s}`"));
    let obs_len = 2 + (depth + 1) + depth;
    let obs_at = |off: usize| -> std::result::Result<AgentObservation, String> {
        let f = &fields[off..off + obs_len];
        Ok(AgentObservation {
            timeslot: f[0].parse().map_err(|_| format!("bad slot `{}`", f[0]))?,
            t_ambient: num(f[1])?,
            t_room_history: f[2..3 + depth].iter().map(|s| num(s)).collect::<Result<_, _>>()?,
            u_phys_history: f[3 + depth..].iter().map(|s| num(s)).collect::<Result<_, _>>()?,
        })
    };
    let obs = obs_at(0)?;
    let action: u8 = fields[obs_len]
        .parse()
        .map_err(|_| format!("bad action `{}`", fields[obs_len]))?;
    let next_obs = obs_at(obs_len + 1)?;
    let rest = &fields[2 * obs_len + 1..];
    let u_phys = num(rest[0])?;
    let hidden = match (rest[1], rest[2]) {
        ("-", "-") => None,
        (a, b) => Some([num(a)?, num(b)?]),
    };
    Ok(Transition {
        obs,
        action,
        next_obs,
        u_phys,
        hidden,
    })
}
