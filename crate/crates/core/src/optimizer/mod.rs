//! Attack objective and the iterative mask optimization loop.

mod adam;
mod checkpoint;
mod loss;
mod train;

pub use adam::Adam;
pub use checkpoint::{
    load_checkpoint_mask, load_meta, read_history_csv, save_checkpoint, write_history_csv, CheckpointMeta,
    HISTORY_FILE, MASK_FILE, META_FILE, SUPPORT_FILE,
};
pub use loss::{
    draw_params, loss_sim_normalized, loss_sim_raw, loss_tv, loss_tv_normalized, probe_cosines,
    sim_normalized_with_params, total_loss, total_loss_with_grad, tv_gradient_normalized, LossBreakdown,
    Member,
};
pub use train::{
    optimize_targeted, optimize_universal, AttackMode, HistoryRecord, OptimizerConfig, PlateauConfig,
    TrainingHistory,
};
