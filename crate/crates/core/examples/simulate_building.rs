//! Steps the RC building for a day under a fixed request pattern and shows
//! where the backup controller overrides it.
//!
//! `cargo run --example simulate_building -- [ambient_c]`

use physq::thermal::{env_step_hour, RcParams, SimState};

fn main() -> physq::Result<()> {
    let t_a: f64 = std::env::args().nth(1).map_or(0.0, |s| s.parse().expect("ambient must be a number"));
    let params = RcParams::default();
    println!(
        "room time constant {:.2} h, mass time constant {:.2} h",
        params.room_time_constant(),
        params.mass_time_constant()
    );
    let mut s = SimState::new(20.0, 20.0);
    println!("hour request  T_r     T_m     u_phys  overridden");
    for hour in 0..24 {
        // heat only in the afternoon; the backup fills in when the room gets cold
        let request = u8::from((12..18).contains(&hour));
        let out = env_step_hour(s, &params, request, t_a)?;
        println!(
            "{hour:4} {request:7}  {:6.2}  {:6.2}  {:6.2}  {:3} min",
            out.state.t_room, out.state.t_mass, out.u_phys_avg, out.minutes_overridden
        );
        s = out.state;
    }
    Ok(())
}
