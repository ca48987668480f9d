use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Lower edge of the comfort band enforced by the backup controller (°C).
pub const COMFORT_MIN: f64 = 18.0;
/// Upper edge of the comfort band enforced by the backup controller (°C).
pub const COMFORT_MAX: f64 = 22.0;
pub const MINUTES_PER_HOUR: usize = 60;

/// Lumped parameters of the two-node (room air, building mass) thermal circuit.
///
/// Units: capacities in kWh/°C, resistances in °C/kW, power in kW. The mass node
/// only exchanges heat with the room; the room exchanges heat with the mass, the
/// ambient air and the heater.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RcParams {
    pub room_capacity: f64,
    pub mass_capacity: f64,
    pub resist_room_mass: f64,
    pub resist_room_ambient: f64,
    pub heater_power_max: f64,
}

impl Default for RcParams {
    /// Room time constant 3 h, mass (building) time constant 40 h, 10 kW heater.
    fn default() -> Self {
        RcParams {
            room_capacity: 4.0,
            mass_capacity: 10.0,
            resist_room_mass: 1.0,
            resist_room_ambient: 3.0,
            heater_power_max: 10.0,
        }
    }
}

impl RcParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("room_capacity", self.room_capacity),
            ("mass_capacity", self.mass_capacity),
            ("resist_room_mass", self.resist_room_mass),
            ("resist_room_ambient", self.resist_room_ambient),
            ("heater_power_max", self.heater_power_max),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("building.{name} must be > 0, got {v}")));
            }
        }
        if self.room_time_constant() >= self.mass_time_constant() {
            return Err(Error::Config(format!(
                "room time constant {:.2} h must be shorter than mass time constant {:.2} h",
                self.room_time_constant(),
                self.mass_time_constant()
            )));
        }
        Ok(())
    }

    /// Fast time constant: room capacity times the parallel resistance seen by the room (h).
    pub fn room_time_constant(&self) -> f64 {
        let r = self.resist_room_mass * self.resist_room_ambient
            / (self.resist_room_mass + self.resist_room_ambient);
        self.room_capacity * r
    }

    /// Slow time constant: mass capacity discharging through room and envelope in series (h).
    pub fn mass_time_constant(&self) -> f64 {
        self.mass_capacity * (self.resist_room_mass + self.resist_room_ambient)
    }

    /// Continuous-time system `dx/dt = A x + B u + C t_a` with `x = (t_room, t_mass)`, time in hours.
    pub fn continuous(&self) -> ([[f64; 2]; 2], [f64; 2], [f64; 2]) {
        let (cr, cm) = (self.room_capacity, self.mass_capacity);
        let (rrm, rra) = (self.resist_room_mass, self.resist_room_ambient);
        let a = [
            [-(1.0 / rrm + 1.0 / rra) / cr, 1.0 / (rrm * cr)],
            [1.0 / (rrm * cm), -1.0 / (rrm * cm)],
        ];
        (a, [1.0 / cr, 0.0], [1.0 / (rra * cr), 0.0])
    }

    /// Whether the heater can hold `t_room` at steady state against `t_ambient`.
    pub fn can_hold(&self, t_room: f64, t_ambient: f64) -> bool {
        t_ambient + self.heater_power_max * self.resist_room_ambient >= t_room
    }

    /// Exact discrete model of `minutes` consecutive simulator substeps with
    /// power and ambient held constant.
    pub fn discretize(&self, minutes: usize) -> LinearThermalModel {
        LinearThermalModel::one_minute(self).compose(minutes)
    }
}

/// Ground-truth simulator state. Only `t_room` is visible to learning agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t_room: f64,
    pub t_mass: f64,
    pub minute_of_sim: u64,
}

impl SimState {
    pub fn new(t_room: f64, t_mass: f64) -> Self {
        SimState {
            t_room,
            t_mass,
            minute_of_sim: 0,
        }
    }
}

/// One forward-Euler step of the RC equations. Only one-minute steps are supported.
pub fn rc_substep(
    state: SimState,
    params: &RcParams,
    u_phys: f64,
    t_ambient: f64,
    dt_minutes: u32,
) -> Result<SimState> {
    if dt_minutes != 1 {
        return Err(Error::invalid(format!(
            "substep length must be 1 minute, got {dt_minutes}"
        )));
    }
    ensure_finite("t_room", state.t_room)?;
    ensure_finite("t_mass", state.t_mass)?;
    ensure_finite("t_ambient", t_ambient)?;
    ensure_finite("u_phys", u_phys)?;
    if !(0.0..=params.heater_power_max).contains(&u_phys) {
        return Err(Error::invalid(format!(
            "u_phys {u_phys} outside [0, {}]",
            params.heater_power_max
        )));
    }
    let (t_room, t_mass) = euler(state.t_room, state.t_mass, params, u_phys, t_ambient);
    Ok(SimState {
        t_room,
        t_mass,
        minute_of_sim: state.minute_of_sim + 1,
    })
}

#[inline]
fn euler(t_room: f64, t_mass: f64, p: &RcParams, u_phys: f64, t_ambient: f64) -> (f64, f64) {
    const H: f64 = 1.0 / 60.0;
    let q_mass = (t_mass - t_room) / p.resist_room_mass;
    let q_amb = (t_ambient - t_room) / p.resist_room_ambient;
    let d_room = (q_mass + q_amb + u_phys) / p.room_capacity;
    let d_mass = -q_mass / p.mass_capacity;
    (t_room + H * d_room, t_mass + H * d_mass)
}

/// Maps a requested binary action to delivered heater power according to the
/// comfort band: heat is cut above 22 °C and forced below 18 °C.
pub fn backup_override(t_room: f64, u_requested: u8, params: &RcParams) -> f64 {
    if t_room > COMFORT_MAX {
        0.0
    } else if t_room < COMFORT_MIN {
        params.heater_power_max
    } else {
        f64::from(u_requested.min(1)) * params.heater_power_max
    }
}

/// Summary of one simulated hour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourOutcome {
    pub state: SimState,
    /// Time-averaged delivered heater power (kW); this is what gets billed.
    pub u_phys_avg: f64,
    pub minutes_overridden: u32,
    /// Minute of the first override, if any.
    pub first_override_minute: Option<u32>,
    /// Minimum room temperature sampled at the start of each minute.
    pub min_t_room: f64,
    pub max_t_room: f64,
    /// Minutes that started outside the comfort band.
    pub minutes_outside_band: u32,
    /// Minutes that started above the band with the heater delivering power.
    pub heater_on_above_band: u32,
}

/// Simulates one hour minute by minute. `request(minute, t_room)` supplies the
/// requested binary action at the start of every minute.
///
/// The backup controller checks the room temperature every minute. Once it
/// overrides the request, the override power is held for the remainder of the
/// hour; a held heat-on override is still released if the room exceeds the band.
pub fn step_hour_with<F>(
    state: SimState,
    params: &RcParams,
    t_ambient: f64,
    mut request: F,
) -> Result<HourOutcome>
where
    F: FnMut(usize, f64) -> u8,
{
    ensure_finite("t_ambient", t_ambient)?;
    let mut s = state;
    let mut held: Option<f64> = None;
    let mut energy = 0.0;
    let mut out = HourOutcome {
        state,
        u_phys_avg: 0.0,
        minutes_overridden: 0,
        first_override_minute: None,
        min_t_room: f64::INFINITY,
        max_t_room: f64::NEG_INFINITY,
        minutes_outside_band: 0,
        heater_on_above_band: 0,
    };
    for minute in 0..MINUTES_PER_HOUR {
        let requested = request(minute, s.t_room).min(1);
        let mapped = f64::from(requested) * params.heater_power_max;
        let u = match held {
            Some(h) if h > 0.0 && s.t_room > COMFORT_MAX => {
                held = Some(0.0);
                0.0
            }
            Some(h) => h,
            None => {
                let b = backup_override(s.t_room, requested, params);
                if b != mapped {
                    held = Some(b);
                    out.first_override_minute = Some(minute as u32);
                }
                b
            }
        };
        if u != mapped {
            out.minutes_overridden += 1;
        }
        out.min_t_room = out.min_t_room.min(s.t_room);
        out.max_t_room = out.max_t_room.max(s.t_room);
        if !(COMFORT_MIN..=COMFORT_MAX).contains(&s.t_room) {
            out.minutes_outside_band += 1;
        }
        if s.t_room > COMFORT_MAX && u > 0.0 {
            out.heater_on_above_band += 1;
        }
        energy += u;
        s = rc_substep(s, params, u, t_ambient, 1)?;
    }
    out.state = s;
    out.u_phys_avg = energy / MINUTES_PER_HOUR as f64;
    Ok(out)
}

/// One decision hour with a constant requested action.
pub fn env_step_hour(
    state: SimState,
    params: &RcParams,
    u_requested: u8,
    t_ambient: f64,
) -> Result<HourOutcome> {
    if u_requested > 1 {
        return Err(Error::invalid(format!("action must be 0 or 1, got {u_requested}")));
    }
    step_hour_with(state, params, t_ambient, |_, _| u_requested)
}

/// Discrete-time affine model `x' = A x + b u + c t_a` over a fixed step.
///
/// Row 0 is the room, row 1 the mass. With `b[1] = c[1] = 0` this is exactly the
/// first-order building model used as the physics prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearThermalModel {
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
    pub c: [f64; 2],
}

impl LinearThermalModel {
    /// The simulator's own one-minute Euler map.
    pub fn one_minute(p: &RcParams) -> Self {
        let (a, b, c) = p.continuous();
        let h = 1.0 / 60.0;
        LinearThermalModel {
            a: [
                [1.0 + h * a[0][0], h * a[0][1]],
                [h * a[1][0], 1.0 + h * a[1][1]],
            ],
            b: [h * b[0], h * b[1]],
            c: [h * c[0], h * c[1]],
        }
    }

    /// Applies this model `n` times with constant inputs.
    pub fn compose(&self, n: usize) -> Self {
        let mut acc = LinearThermalModel {
            a: [[1.0, 0.0], [0.0, 1.0]],
            b: [0.0; 2],
            c: [0.0; 2],
        };
        for _ in 0..n {
            acc = LinearThermalModel {
                a: mat_mul(&self.a, &acc.a),
                b: add(mat_vec(&self.a, &acc.b), self.b),
                c: add(mat_vec(&self.a, &acc.c), self.c),
            };
        }
        acc
    }

    #[inline]
    pub fn step(&self, x: [f64; 2], u_kw: f64, t_ambient: f64) -> [f64; 2] {
        [
            self.a[0][0] * x[0] + self.a[0][1] * x[1] + self.b[0] * u_kw + self.c[0] * t_ambient,
            self.a[1][0] * x[0] + self.a[1][1] * x[1] + self.b[1] * u_kw + self.c[1] * t_ambient,
        ]
    }

    /// Largest absolute row sum of `A`, used to bound how a state error propagates in one step.
    pub fn state_gain(&self) -> f64 {
        self.a
            .iter()
            .map(|row| row[0].abs() + row[1].abs())
            .fold(0.0, f64::max)
    }
}

fn mat_mul(x: &[[f64; 2]; 2], y: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut r = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
        }
    }
    r
}

fn mat_vec(x: &[[f64; 2]; 2], v: &[f64; 2]) -> [f64; 2] {
    [x[0][0] * v[0] + x[0][1] * v[1], x[1][0] * v[0] + x[1][1] * v[1]]
}

fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}
