//! Evaluation: metrics, datasets, readers, the benchmark runner and ablations.

mod ablation;
mod bench;
mod dataset;
mod metrics;
mod reader;

pub use ablation::{run_ablation, AblationCell, AblationGrid, AblationRow, AblationTable};
pub use bench::{
    run_benchmark, BenchOptions, Benchmark, EvalMode, EvalReport, QuestionRecord, ReportConfig,
    RetrievalSummary, RetrievalTrace, Summary, TimingSummary, BENCH_PROJECT, ORACLE_SESSION_LIMIT,
};
pub use dataset::{parse_dataset_date, BenchmarkQuestion, Dataset, QuestionType, Session, Turn};
pub use metrics::{
    ndcg_at_k, normalize_answer, recall_at_k, soft_em, token_f1, wilson_ci, wilson_interval,
};
pub use reader::{
    render_prompt, truncate_answer, EchoReader, HttpReader, OracleReader, Reader, ReaderQuery,
    MAX_ANSWER_TOKENS, PROMPT_TEMPLATE,
};
