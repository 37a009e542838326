//! Experiment drivers: configs, the four system conditions, threshold
//! sweeps and the synthetic rare-word task.

mod config;
mod pipeline;
mod sweep;
mod synthetic;

pub use config::{Condition, DictionaryKind, ExperimentConfig};
pub use pipeline::{
    examples, lexicon_from_text, lexicon_to_text, prepare, rare_word_accuracy, read_lexicon, run_experiment, score, train_model, translate,
    write_lexicon, ExperimentResult, LexiconEntry, PreparedData, RareWordAccuracy,
};
pub use sweep::{bar_chart_svg, parse_thresholds, sweep_csv, sweep_threshold, SweepRow, SweepSpec};
pub use synthetic::{gen_synthetic_task, synthetic_defaults, SyntheticSpec, SyntheticTask};
