pub mod audio;
pub mod exec;
pub mod f0_transform;
pub mod harmony;
pub mod midi;
pub mod note;
pub mod pipeline;
pub mod pitch;
pub mod synth;
pub mod tokenizer;
