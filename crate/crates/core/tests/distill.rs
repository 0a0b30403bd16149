//! Pure logit matching drives the student onto the teacher.

use crashbench::distill::{train_toy, DistillConfig, ToyConfig};

#[test]
fn logit_matching_converges_to_the_teacher() {
    let config = DistillConfig {
        alpha_hard: 0.0,
        alpha_logit: 1.0,
        alpha_feat: 0.0,
        tau: 1.0,
        phase1_steps: 50_000,
        total_steps: 50_000,
        feature_layer_pairs: vec![],
        tau_squared: true,
    };
    let toy = ToyConfig { student_hidden: vec![32, 32], train_size: 4096, learning_rate: 0.3, ..ToyConfig::default() };
    let report = train_toy::<f64>(&config, &toy, 1).unwrap();
    assert!(report.mean_abs_dp < 0.05, "mean |dp| {}", report.mean_abs_dp);
    // the student is scored against labels the teacher never saw, so it
    // cannot beat the teacher by more than sampling noise
    assert!(report.brier > report.teacher_brier - 0.01);
}
