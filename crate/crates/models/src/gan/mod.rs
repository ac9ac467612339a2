//! Second stage: refinement generator, multiscale critic and their training loop.

mod discriminator;
mod generator;
mod train;

pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use generator::{Generator, GeneratorConfig, GeneratorTrace, GENERATOR_INPUT_CHANNELS};
pub use train::{
    sample_grid, train_application, GanEpochStats, GanObserver, GanPair, GanTrainConfig,
    GanTrainer, Objective, StepStats, MAX_EPOCHS,
};
