//! Synthetic Interventions: estimate every unit's outcome trajectory under
//! every intervention from panel data where each unit was observed under
//! only one of them.
//!
//! The modules follow the data flow of a run:
//!
//! - [`panel`]: unit series, Day-0 event alignment, the aligned matrix.
//! - [`mobility`] and [`bucket`]: turning mobility reports into discrete
//!   intervention labels and donor groups.
//! - [`svt`] and [`engine`]: low-rank denoising, donor weights, and
//!   counterfactual prediction.
//! - [`projection`]: exponential extrapolation and peak estimates.
//! - [`io`], [`config`], [`pipeline`]: file formats and the end-to-end run.

pub mod bucket;
pub mod config;
pub mod engine;
pub mod io;
pub mod mobility;
pub mod panel;
pub mod pipeline;
pub mod projection;
pub mod svt;

pub use bucket::{bucket_interventions, BucketSpec, InterventionPartition};
pub use config::RunConfig;
pub use engine::{fit_weights, predict_counterfactual, run_si, self_validation, top_donors, CounterfactualSet, SiModel};
pub use mobility::{mobility_score, MobilityCategory, MobilityScoreSpec};
pub use panel::{align_to_event, build_aligned_panel, AlignedPanel, AlignmentSpec, Panel, UnitSeries};
pub use projection::{fit_exponential, project_peak, ExpFit, Projection};
pub use svt::{select_rank, svt, DenoisedBlock, RankRule, SvtConfig};
