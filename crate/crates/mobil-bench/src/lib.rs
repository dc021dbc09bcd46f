//! Fixtures shared by the criterion benches.

use mobil_core::env::SimulationMode;
use mobil_core::experiment::build_operator;
use mobil_core::mobil::{mobil_prox_round, ModelUpdate};
use mobil_core::*;

/// Default benchmark with an exact simulator model, ready for repeated rounds.
pub struct ProxFixture {
    pub bench: Benchmark,
    pub model: PredictiveModel,
    pub state: ProxState,
}

impl ProxFixture {
    pub fn new() -> Self {
        let bench = Benchmark::generate(&BenchmarkParams::default(), 0).expect("default benchmark");
        let model = PredictiveModel::new(ModelKind::ExactSimulator, &bench, SimulationMode::ClosedForm, ModelUpdate::Ftl, 0);
        let state = ProxState::new(Point::zeros(bench.policy_dim()));
        ProxFixture { bench, model, state }
    }

    /// One noiseless round at the current policy with weight n².
    pub fn round(&mut self) -> Result<()> {
        let n = self.state.n as f64;
        let g = self.bench.exact_loss(&self.state.pi)?.quadratic()?.grad(&self.state.pi);
        mobil_prox_round(&mut self.state, &g, n * n, n * n, (n + 1.0).powi(2), &mut self.model, &self.bench.set)
    }
}

impl Default for ProxFixture {
    fn default() -> Self {
        Self::new()
    }
}

pub fn config(lines: &str) -> ExperimentConfig {
    ExperimentConfig::parse_text(lines).expect("valid bench config")
}

/// Random bilinear game over two simplices of the given size.
pub fn bilinear_game(dim: usize) -> MonotoneOperator {
    build_operator(&config(&format!("vi.problem=bilinear\nvi.dim={dim}\n"))).expect("game")
}

/// Random monotone affine operator on a box.
pub fn affine_operator(dim: usize) -> MonotoneOperator {
    build_operator(&config(&format!("vi.problem=affine\nvi.dim={dim}\n"))).expect("operator")
}
