//! Time integrators for the incremental potential:
//!
//!   E(x) = ½‖x − x̃‖²_M + α h² (Ψ(x) + B(x))
//!
//! Implicit Euler: x̃ = xᵗ + h vᵗ, α = 1, vᵗ⁺¹ = (xᵗ⁺¹ − xᵗ)/h.
//! BDF2: x̃ = (4xᵗ − xᵗ⁻¹)/3 + (2h/9)(4vᵗ − vᵗ⁻¹), α = 4/9,
//!       vᵗ⁺¹ = (4vᵗ − vᵗ⁻¹)/3 + (2h/3)·aᵗ⁺¹ with aᵗ⁺¹ = 9/(4h²)(xᵗ⁺¹ − x̃),
//! which reproduces the classical difference form
//! vᵗ⁺¹ = (3xᵗ⁺¹ − 4xᵗ + xᵗ⁻¹)/(2h). The first BDF2 step has no history
//! and falls back to implicit Euler.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    ImplicitEuler,
    Bdf2,
}

#[derive(Debug, Clone, Copy)]
pub struct TimestepConfig {
    pub h: f64,
    pub integrator: Integrator,
}

impl TimestepConfig {
    /// IP scaling α for the elastic + barrier terms.
    pub fn alpha(&self, state: &KinematicState) -> f64 {
        match self.effective(state) {
            Integrator::ImplicitEuler => 1.0,
            Integrator::Bdf2 => 4.0 / 9.0,
        }
    }

    /// BDF2 without history degrades to implicit Euler for that step.
    pub fn effective(&self, state: &KinematicState) -> Integrator {
        match self.integrator {
            Integrator::Bdf2 if state.prev.is_some() => Integrator::Bdf2,
            Integrator::Bdf2 => Integrator::ImplicitEuler,
            ie => ie,
        }
    }
}

/// Positions/velocities at the current step plus one step of history for
/// BDF2 (absent before the second step).
#[derive(Debug, Clone)]
pub struct KinematicState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// (x at t−1, v at t−1)
    pub prev: Option<(Vec<f64>, Vec<f64>)>,
}

impl KinematicState {
    pub fn at_rest(x: Vec<f64>) -> Self {
        let v = vec![0.0; x.len()];
        KinematicState { x, v, prev: None }
    }
}

/// Predictor position x̃ for the incremental potential.
pub fn predictor(state: &KinematicState, cfg: &TimestepConfig) -> Vec<f64> {
    let h = cfg.h;
    match cfg.effective(state) {
        Integrator::ImplicitEuler => {
            state.x.iter().zip(&state.v).map(|(x, v)| x + h * v).collect()
        }
        Integrator::Bdf2 => {
            let (xp, vp) = state.prev.as_ref().unwrap();
            state
                .x
                .iter()
                .zip(&state.v)
                .zip(xp.iter().zip(vp))
                .map(|((x, v), (xo, vo))| (4.0 * x - xo) / 3.0 + (2.0 * h / 9.0) * (4.0 * v - vo))
                .collect()
        }
    }
}

/// Advance the kinematic state to the solved position x_new.
pub fn advance(state: &KinematicState, x_new: &[f64], x_tilde: &[f64], cfg: &TimestepConfig) -> KinematicState {
    let h = cfg.h;
    let v_new: Vec<f64> = match cfg.effective(state) {
        Integrator::ImplicitEuler => x_new.iter().zip(&state.x).map(|(xn, x)| (xn - x) / h).collect(),
        Integrator::Bdf2 => {
            let (_, vp) = state.prev.as_ref().unwrap();
            state
                .v
                .iter()
                .zip(vp)
                .zip(x_new.iter().zip(x_tilde))
                .map(|((v, vo), (xn, xt))| {
                    let accel = 9.0 / (4.0 * h * h) * (xn - xt);
                    (4.0 * v - vo) / 3.0 + (2.0 * h / 3.0) * accel
                })
                .collect()
        }
    };
    KinematicState {
        x: x_new.to_vec(),
        v: v_new,
        prev: Some((state.x.clone(), state.v.clone())),
    }
}
