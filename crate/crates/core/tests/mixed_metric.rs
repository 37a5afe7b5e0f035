//! A user-style metric that is both x-dependent and genuinely Finslerian
//! (nonzero C-tensor): every consistency check must still hold, with the
//! curvature terms and C-terms active simultaneously.

use cartan_lab::report::{RunConfig, Verdict};
use cartan_lab::suite::run_suite;

#[test]
fn curved_randers_type_dual_passes_all_consistency_checks() {
    let cfg = RunConfig {
        metric: "sqrt(x2^2*(p1^2+p2^2)) + 0.05*x2*p1".into(),
        builtin: false,
        dim: 2,
        kind: cartan_lab::metric::MetricKind::K,
        seed: 42,
        num_points: 26,
        coordinate_box: vec![(-1.0, 1.0), (0.5, 2.0)],
        shells: vec![1.0],
        checks: vec![],
        tolerances: Default::default(),
        alternate_frame: true,
    };
    let rep = run_suite(&cfg).unwrap();
    assert_eq!(
        rep.summary.verdict,
        Verdict::Pass,
        "failed: {:?}",
        rep.summary.failed_checks
    );
    // the dual is genuinely Finslerian: the vertical bundle-like record
    // reports a nonzero C-tensor on both computation paths
    let bl = rep
        .checks
        .iter()
        .find(|c| c.check_id == "bundle-like/vertical-iff")
        .unwrap();
    assert!(bl.passed());
    assert!(
        bl.details.iter().any(|d| d.contains("nonzero")),
        "expected a nonzero C-tensor finding: {:?}",
        bl.details
    );
    // and it is not of constant curvature: the fit residual is large
    let fit = rep.curvature_fit.expect("classifier should run with >= 25 shell points");
    assert!(
        fit.residual > 1e-3,
        "a curved Randers-type dual must not fit a constant, residual {}",
        fit.residual
    );
}
