//! Experiment orchestration behind the `altisr` CLI: resolved run
//! configuration, one function per command, and report assembly.
//!
//! Layout produced under the configured roots:
//!
//! ```text
//! data_root/      {train,val,test}/scene_NNNN/alt_AAA/..., pretrain/, manifest.json
//! pairs_root/     {split}/scene_NNNN/alt_AAA/patch_NN/{lr,hr}.png, index.json, stats.csv
//! checkpoint_dir/ <name>.ckpt, <name>.log.csv, <name>.config.toml
//! report_dir/     results/<name>.csv, report.csv, report.md, psd.csv, psd_hf.csv
//! ```

mod commands;
mod config;
mod report;

pub use commands::{
    cmd_adapt, cmd_eval_baseline, cmd_generate, cmd_meta_train, cmd_preprocess, cmd_train,
    cmd_train_aal, load_pairs, AltitudeStats, GenerateSummary, MetaSummary, PairEntry,
    PreprocessSummary, CONFIG_FILE,
};
pub use config::{Profile, RunConfig};
pub use report::{
    cmd_report, method_rank, read_results, write_results, ReportSummary, ResultRow, METHOD_BICUBIC,
    METHOD_FINETUNE_ALL, METHOD_META_ADAPTED, METHOD_META_UNADAPTED, METHOD_PRETRAIN,
    METHOD_WITH_ALTITUDE,
};

use crate::error::Error;

/// Process exit status for an error: 2 usage, 3 missing prerequisite,
/// 4 numeric failure, 1 anything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::MissingPrerequisite(_) | Error::EmptyDataset => 3,
        Error::NanLoss { .. } | Error::NonFinite { .. } => 4,
        _ => 1,
    }
}
