//! Exploratory script: self-consistent mean of the limiting tagged
//! particle by Picard iteration.
//!
//! The limiting mean satisfies `m(t) = E[Z] int_0^t E[w(Y(s) - m(s))] ds`
//! where `Y` is the tagged particle driven by `m` itself. No constructive
//! solver comes with a convergence guarantee, so this stays a script:
//! iterate `m -> E[Z] int E[w(Y^m(s) - m(s))] ds` with Monte Carlo tagged
//! particles on a time grid and report the sup-change per sweep. Started
//! from the exponential-exponential fixed point the iteration should
//! settle near the closed-form wave speed.
//!
//! Run: `cargo run --release --example picard_mean`

use flockline::meanfield::{tagged_particle, GumbelFixedPoint};
use flockline::model::Model;
use flockline::rng::{replica_seed, Rng};

fn main() {
    let model = Model::exp_exp(1.0, 1.0).unwrap();
    let fp = GumbelFixedPoint::new(1.0, 1.0).unwrap();
    let horizon = 5.0;
    let steps = 100usize;
    let dt = horizon / steps as f64;
    let replicas = 4000usize;
    let sweeps = 24usize;

    // mean path on the grid; index k is time k * dt
    let mut mean_path = vec![0.0f64; steps + 1];

    let interp = |path: &[f64], s: f64| -> f64 {
        let pos = (s / dt).clamp(0.0, steps as f64);
        let k = (pos as usize).min(steps - 1);
        let frac = pos - k as f64;
        path[k] * (1.0 - frac) + path[k + 1] * frac
    };

    println!(
        "sweep  sup|dm|      m(T)/T    (target {:.6})",
        fp.wave_speed()
    );
    for sweep in 0..sweeps {
        // average rate seen by the tagged particle on the grid
        let mut rate_sum = vec![0.0f64; steps + 1];
        let path = mean_path.clone();
        for r in 0..replicas {
            let mut rng = Rng::new(replica_seed(0xF1CA2D ^ sweep as u64, r as u64));
            let y0 = fp.sample(&mut rng);
            let traj =
                tagged_particle(|s| interp(&path, s), y0, &model, horizon, &mut rng).unwrap();
            for (k, slot) in rate_sum.iter_mut().enumerate() {
                let s = k as f64 * dt;
                *slot += model.rate.eval(traj.position_at(s) - interp(&path, s));
            }
        }
        // next mean: E[Z] times the cumulative trapezoid of the mean rate
        let varsigma = model.jump.mean();
        let mut next = vec![0.0f64; steps + 1];
        for k in 1..=steps {
            let lo = rate_sum[k - 1] / replicas as f64;
            let hi = rate_sum[k] / replicas as f64;
            next[k] = next[k - 1] + varsigma * 0.5 * (lo + hi) * dt;
        }
        let sup_change = mean_path
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        mean_path = next;
        println!(
            "{sweep:>5}  {sup_change:>9.5}  {:>9.6}",
            mean_path[steps] / horizon
        );
    }
    let velocity = mean_path[steps] / horizon;
    let target = fp.wave_speed();
    println!(
        "final velocity {velocity:.6}, closed form {target:.6}, rel err {:.4}",
        (velocity - target).abs() / target
    );
}
