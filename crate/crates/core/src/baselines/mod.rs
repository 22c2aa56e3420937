//! Classical reference controllers: open-loop inversion, PI with
//! swarm-tuned gains and a dynamic matrix controller.

mod ident;
mod open_loop;
mod pi;
mod pso;
mod qdmc;

pub use ident::{
    command_for_inputs, identify_model, identify_step_response, inputs_for_command, ChannelResponse, IdentConfig,
    InputChannel, StepResponseModel,
};
pub use open_loop::{open_loop_command, open_loop_speed, OpenLoop};
pub use pi::{pi_step, PiConfig, PiController, PiGains};
pub use pso::{pi_tracking_rmse, pso_minimize, pso_tune, PsoConfig, PsoIteration, PsoResult};
pub use qdmc::{build_dynamic_matrix, qdmc_objective, qdmc_solve, Qdmc, QdmcConfig};
