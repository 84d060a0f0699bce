//! Builds a scenario from the default link budget and prints what each user
//! sees: serving satellites, path gains, Rician factors and pilot sharing.

use dmimo::scenario::{noise_power, path_loss_db, slant_range};
use dmimo::{Scenario, SystemConfig};

fn main() -> dmimo::Result<()> {
    let mut cfg = SystemConfig::desk_scale();
    cfg.geometry.user_elevation_deg = [25.0, 45.0];
    cfg.geometry.satellite_elevation_offsets_deg = vec![0.0, 10.0, 25.0, 40.0];
    cfg.rng_seed = 7;

    let range = slant_range(cfg.geometry.altitude, 30f64.to_radians());
    println!("slant range at 30 deg elevation: {:.1} km", range / 1e3);
    println!("path loss there: {:.2} dB", path_loss_db(range, &cfg)?);
    println!("noise power over 1 MHz: {:.3e} W", noise_power(1e6, &cfg)?);

    let sc = Scenario::generate(cfg)?;
    println!("\n{} satellites, {} users, {} antennas", sc.num_satellites(), sc.num_users(), sc.num_antennas());
    for k in 0..sc.num_users() {
        let others: Vec<usize> = sc.pilots.cohort(k).iter().copied().filter(|&j| j != k).collect();
        println!("user {k}: pilot {} (shared with {others:?})", sc.pilots.pilot_of(k));
        for &m in sc.serving(k) {
            let l = sc.link(m, k);
            println!(
                "  sat {m}: elevation {:5.1} deg, beta {:.3e}, K {:5.1}",
                l.elevation.to_degrees(),
                l.beta,
                l.rician
            );
        }
    }
    Ok(())
}
