//! Rendering, evaluation and on-disk formats.

mod ablate;
pub mod cli;
mod corpus;
mod eval;
mod io;
mod metrics;
mod render;

pub use io::{
    fmap_from_bytes, fmap_to_bytes, read_fmap, read_png, to_u8, write_atomic, write_fmap, write_png,
    FMAP_MAGIC, FMAP_VERSION,
};
pub use metrics::{compute_metrics, psnr, ssim, Metrics, PSNR_CAP};
pub use render::{render_time, render_view, synthesize_view, time_interval, BlendMode, RenderRequest, Renderer, ViewJacobians,
    CONSISTENCY_SIGMA,};
pub use ablate::{
    run_config, run_suite, score_time_models, score_view_model, AblationReport, Comparison, ComparisonResult, RunKind,
    RunResult, Suite, SuiteConfig,
};
pub use corpus::{compare_blending, corpus_dirs, corpus_samples, read_corpus, BlendComparison, CorpusSample, CORPUS_VIEWS};
pub use eval::{
    evaluate, midpoint_sweep, thread_budget, Aggregate, MetricsReport, SampleMetrics, EVAL_BORDER, METRICS_VERSION,
    THREADS_ENV,
};
