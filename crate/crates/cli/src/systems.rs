//! Toy systems for synthetic data, discretized with forward Euler.

use std::str::FromStr;

use koopman_lmi::{Episode, SnapshotDataset, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum System {
    /// `ẋ = [0 1; −2 −0.5] x + [0; 1] u`
    Linear2d,
    /// `ẍ = −0.3 ẋ + x − x³ + u`
    Duffing,
    /// `ẍ = (1 − x²) ẋ − x + u`
    Vanderpol,
}

impl FromStr for System {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear2d" => Ok(System::Linear2d),
            "duffing" => Ok(System::Duffing),
            "vanderpol" => Ok(System::Vanderpol),
            other => Err(format!("unknown system `{other}`")),
        }
    }
}

impl System {
    pub fn default_dt(self) -> f64 {
        match self {
            System::Linear2d => 0.1,
            System::Duffing | System::Vanderpol => 0.05,
        }
    }

    /// Continuous-time vector field.
    pub fn field(self, x: &[f64; 2], u: f64) -> [f64; 2] {
        let [p, v] = *x;
        match self {
            System::Linear2d => [v, -2.0 * p - 0.5 * v + u],
            System::Duffing => [v, -0.3 * v + p - p * p * p + u],
            System::Vanderpol => [v, (1.0 - p * p) * v - p + u],
        }
    }

    pub fn step(self, x: &[f64; 2], u: f64, dt: f64) -> [f64; 2] {
        let f = self.field(x, u);
        [x[0] + dt * f[0], x[1] + dt * f[1]]
    }

    /// Exact discrete `(A, B)` of the Euler-discretized linear system.
    #[cfg(test)]
    pub fn linear_ground_truth(dt: f64) -> ([[f64; 2]; 2], [f64; 2]) {
        ([[1.0, dt], [-2.0 * dt, 1.0 - 0.5 * dt]], [0.0, dt])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateOptions {
    pub system: System,
    /// States per episode.
    pub steps: usize,
    pub episodes: usize,
    pub seed: u64,
    pub noise_std: f64,
    pub dt: f64,
    /// Inputs are uniform on `[−input_amplitude, input_amplitude]`.
    pub input_amplitude: f64,
}

impl GenerateOptions {
    pub fn validate(&self) -> Result<(), String> {
        if self.steps < 2 {
            return Err(format!("steps must be at least 2, got {}", self.steps));
        }
        if self.episodes == 0 {
            return Err("episodes must be at least 1".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err("noise_std must be finite and non-negative".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err("dt must be positive".into());
        }
        if !(self.input_amplitude >= 0.0 && self.input_amplitude.is_finite()) {
            return Err("input amplitude must be finite and non-negative".into());
        }
        Ok(())
    }
}

/// Simulates `episodes` trajectories from uniform initial states on
/// `[−1, 1]²`. Noise is added to the recorded states only.
pub fn generate(opts: &GenerateOptions) -> Result<SnapshotDataset, String> {
    opts.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let noise = Normal::new(0.0, opts.noise_std).map_err(|e| e.to_string())?;
    let mut episodes = Vec::with_capacity(opts.episodes);
    for _ in 0..opts.episodes {
        let mut x = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
        let inputs: Vec<f64> =
            (0..opts.steps - 1).map(|_| opts.input_amplitude * rng.random_range(-1.0..=1.0)).collect();
        let mut states = Vec::with_capacity(opts.steps);
        for k in 0..opts.steps {
            let mut rec = x;
            if opts.noise_std > 0.0 {
                rec[0] += noise.sample(&mut rng);
                rec[1] += noise.sample(&mut rng);
            }
            states.push(Vector::from_column_slice(&rec));
            if let Some(&u) = inputs.get(k) {
                x = opts.system.step(&x, u, opts.dt);
            }
        }
        if states.iter().any(|s| !s.iter().all(|v| v.is_finite())) {
            return Err("simulation diverged; reduce dt or steps".into());
        }
        let inputs = inputs.into_iter().map(|u| Vector::from_element(1, u)).collect();
        episodes.push(Episode::new(states, inputs));
    }
    SnapshotDataset::new(2, 1, episodes).map_err(|e| e.to_string())
}
