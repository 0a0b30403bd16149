pub mod cli;
pub mod distill;
pub mod heatmap;
pub mod manifest;
pub mod metrics;
pub mod num;
pub mod report;
pub mod resample;
pub mod scorer;
pub mod streaming;
pub mod vlmprob;

pub use num::Real;

pub type Heatmap32 = heatmap::Heatmap<f32>;
pub type Heatmap64 = heatmap::Heatmap<f64>;
pub type AttentionStack32 = heatmap::AttentionStack<f32>;
pub type AttentionStack64 = heatmap::AttentionStack<f64>;
pub type ClipOutcome32 = metrics::ClipOutcome<f32>;
pub type ClipOutcome64 = metrics::ClipOutcome<f64>;
pub type LossBreakdown32 = distill::LossBreakdown<f32>;
pub type LossBreakdown64 = distill::LossBreakdown<f64>;
pub type Mlp32 = distill::Mlp<f32>;
pub type Mlp64 = distill::Mlp<f64>;
