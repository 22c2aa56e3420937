//! Experiment orchestration: closed-loop runs of any controller, repeated
//! evaluation, ablation training and the metrics reported on them.

mod ablation;
mod metrics;
mod plot;
mod run;
mod training;

pub use ablation::{action_change, actor_input_dim, run_ablation, train_arm, AblationResult, AblationVariant, ArmResult};
pub use metrics::{
    cross_correlation_lag, first_crossing, learning_curve, local_rmse, mean_abs_change, moving_average, moving_band,
    rmse, MetricsReport, BAND_WINDOW, LAG_SEARCH_STEPS, LOCAL_RMSE_WINDOW,
};
pub use plot::{write_curves_long, write_long_format};
pub use run::{
    config_hash, run_controller, run_experiment, AgentHandle, Controller, ControllerSpec, ExperimentResult,
    OpenLoopController, PiRunner, QdmcRunner, RunMeta, RunRecord, RunRow,
};
pub use training::{train, TrainMode, TrainedAgent, LEARNING_CURVE_WINDOW};
