//! Offline expert demonstrations, their symmetry augmentation, and the
//! imitation and environment reward terms.

mod d4;
mod expert;
mod reward;

pub use d4::D4;
pub use expert::{build_expert_db, d4_augment, pairs_from_frames, ExpertDb, ExpertPair, ExpertRecord, EXPERT_DB_SCHEMA};
pub use reward::{
    discriminator_loss, discriminator_loss_logits, gail_reward, safety_penalty, speed_bonus, success_reward, synthesize_reward,
    terminal_reward, RewardBreakdown, RewardConfig, RewardContext, RunningNorm, GAIL_EPS, LAMBDA_AGENT, LAMBDA_EXPERT,
};
