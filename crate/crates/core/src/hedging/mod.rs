//! Hedging episodes: accounting, the entropic-risk objective, trade masks,
//! delta policies and their training.

mod accounting;
mod checkpoint;
mod mask;
mod policy;
mod risk;
mod train;

pub use accounting::{
    episode_rows, loss_gradient, settle_episode, termination_loss, write_episode_csv, CostModel, EpisodeAccount,
    EpisodeRow, HedgeEpisodeResult,
};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use mask::{average_trade_frequency, combine_mask, compute_trade_mask, fill_mask_row, TradeMask};
pub use policy::{Architecture, DeltaPolicy, EpisodeInput, EpisodeTape, PolicyConfig};
pub use risk::{entropy_risk, entropy_risk_with_weights, RiskConfig};
pub use train::{
    check_policy_gradient, episode_deltas, evaluate_policy, flat_parameters, risk_and_gradient, train_policy,
    AlphaSchedule, EpochRecord, MaskSource, PolicyEvaluation, TrainConfig, TrainedPolicy, TrainingLog,
};
