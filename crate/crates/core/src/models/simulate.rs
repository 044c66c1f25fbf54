use super::StateSpaceModel;
use crate::rng::RngStream;

/// A simulated hidden path and its observation record.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<f64>,
    pub observations: Vec<f64>,
}

/// Simulates `len` steps `(X_k, Y_k)`, `k = 0..len`, starting from the initial law.
pub fn simulate(model: &dyn StateSpaceModel, len: usize, rng: &mut RngStream) -> Trajectory {
    if len == 0 {
        return Trajectory {
            states: Vec::new(),
            observations: Vec::new(),
        };
    }
    let x0 = model.sample_initial(rng);
    simulate_from(model, x0, len, rng)
}

/// Simulates `len` steps with `X_0 = x0` fixed.
pub fn simulate_from(model: &dyn StateSpaceModel, x0: f64, len: usize, rng: &mut RngStream) -> Trajectory {
    let mut states = Vec::with_capacity(len);
    let mut observations = Vec::with_capacity(len);
    let mut x = x0;
    for k in 0..len {
        if k > 0 {
            x = model.sample_transition(x, rng);
        }
        states.push(x);
        observations.push(model.sample_observation(x, rng));
    }
    Trajectory { states, observations }
}
