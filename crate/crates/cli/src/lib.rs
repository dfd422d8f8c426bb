//! Batch front end: dataset and design ingestion, run configuration,
//! chain orchestration and artifact output.

pub mod config;
pub mod dataset;
pub mod design;
pub mod output;
pub mod pipeline;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

/// Numerical breakdowns and broken invariants map to 2, everything else
/// (bad input, domain errors, IO) to 1.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let numerical = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<dpclust::Error>(),
            Some(dpclust::Error::Numerical(_) | dpclust::Error::Invariant(_))
        )
    });
    if numerical {
        EXIT_NUMERICAL
    } else {
        EXIT_INVALID
    }
}
