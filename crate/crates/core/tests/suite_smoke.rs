use cartan_lab::builtins::BUILTINS;
use cartan_lab::report::{RunConfig, Verdict};
use cartan_lab::suite::run_suite;

#[test]
fn full_suite_all_builtins() {
    for b in BUILTINS {
        let cfg = RunConfig {
            metric: b.name.into(),
            builtin: true,
            dim: b.dim,
            kind: b.kind,
            seed: 42,
            num_points: 30,
            coordinate_box: b.coordinate_box.to_vec(),
            shells: vec![1.0],
            checks: vec![],
            tolerances: Default::default(),
            alternate_frame: false,
        };
        let start = std::time::Instant::now();
        let rep = run_suite(&cfg).unwrap_or_else(|e| panic!("{}: {e}", b.name));
        let elapsed = start.elapsed().as_secs_f64();
        eprintln!("=== {} ({elapsed:.2}s) summary {:?} expected_match {:?}", b.name, rep.summary.verdict, rep.summary.expected_match);
        for c in &rep.checks {
            if c.verdict != Verdict::Pass {
                eprintln!("  [{:?}] {} residual {:.3e} tol {:.3e} {:?}", c.verdict, c.check_id, c.max_residual, c.tolerance, c.details);
            }
        }
        if let Some(fit) = &rep.curvature_fit {
            eprintln!("  fit c = {:.8} residual {:.3e} ang {:?}", fit.c_hat, fit.residual, fit.ang_on_matched_shell);
        }
        assert_eq!(rep.summary.verdict, Verdict::Pass, "{} failed: {:?}", b.name, rep.summary.failed_checks);
        assert_eq!(rep.summary.expected_match, Some(true), "{} expectations", b.name);
    }
}
