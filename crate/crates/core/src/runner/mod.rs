//! Training, evaluation and checkpointing of all model variants.

mod checkpoint;
mod config;
mod data;
mod eval;
mod kmeans;
mod optim;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, VERSION as CHECKPOINT_VERSION};
pub use config::{RunConfig, Variant};
pub use data::{Dataset, Split};
pub use eval::{
    analyze_latent, conditioning, evaluate, evaluate_model, protocol_name, reference_embeddings,
    reference_embeddings_for, respond,
    select_group_validation, select_response_test, validation_perplexity, EvalContext, Evaluation, GenerationRow,
    LatentAnalysis, PerturbationProbe, TestSelection, BASELINE_THRESHOLD,
};
pub use kmeans::KMeans;
pub use optim::Adam;
pub use train::{baseline_step, build_model, context_feature, execution, group_set, train, TrainOutcome, TrainState};
