//! Data generators: the call-center queue and multinomial sampling schemes.

mod multinomial;
mod queue;

pub use multinomial::{sample_multinomial, sample_multinomial_dataset, SyntheticScheme};
pub use queue::{
    call_center_replication, pooled_mean_wait, sample_daily_rate, simulate_call_center, simulate_true_system,
    true_system_replication, CallCenterConfig, RateModel, TrueModelConfig, WindowStats,
};
