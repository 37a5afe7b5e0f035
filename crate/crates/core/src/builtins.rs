//! Built-in metric registry with declared expectations, used for smoke
//! tests and for exit-code semantics of the command-line runner.

use crate::metric::MetricKind;

#[derive(Clone, Debug)]
pub struct Builtin {
    pub name: &'static str,
    pub dim: usize,
    pub kind: MetricKind,
    pub text: &'static str,
    pub coordinate_box: &'static [(f64, f64)],
    /// expected constant of the curvature fit
    pub expected_c_hat: f64,
    /// tolerance on the fitted constant
    pub c_hat_tol: f64,
    /// whether the dual metric is Riemannian (C-tensor vanishes), i.e.
    /// whether the vertical bundle-like check passes
    pub expected_riemannian: bool,
    /// whether the four shell conditions come out all-true
    pub expected_all_equivalent: bool,
    pub note: &'static str,
}

pub const BUILTINS: &[Builtin] = &[
    Builtin {
        name: "euclidean-2d",
        dim: 2,
        kind: MetricKind::KSquared,
        text: "p1^2 + p2^2",
        coordinate_box: &[(-1.0, 1.0), (-1.0, 1.0)],
        expected_c_hat: 0.0,
        c_hat_tol: 1e-6,
        expected_riemannian: true,
        expected_all_equivalent: false,
        note: "flat dual; angular curvature equals the angular metric",
    },
    Builtin {
        name: "euclidean-3d",
        dim: 3,
        kind: MetricKind::KSquared,
        text: "p1^2 + p2^2 + p3^2",
        coordinate_box: &[(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)],
        expected_c_hat: 0.0,
        c_hat_tol: 1e-6,
        expected_riemannian: true,
        expected_all_equivalent: false,
        note: "flat dual in three dimensions",
    },
    Builtin {
        name: "hyperbolic-2d",
        dim: 2,
        kind: MetricKind::KSquared,
        text: "x2^2 * (p1^2 + p2^2)",
        coordinate_box: &[(-1.0, 1.0), (0.5, 2.0)],
        expected_c_hat: -1.0,
        c_hat_tol: 1e-4,
        expected_riemannian: true,
        expected_all_equivalent: true,
        note: "upper half-plane dual; constant curvature -1, unit matched shell",
    },
    Builtin {
        name: "hyperbolic-2d-scaled",
        dim: 2,
        kind: MetricKind::KSquared,
        text: "4 * x2^2 * (p1^2 + p2^2)",
        coordinate_box: &[(-1.0, 1.0), (0.5, 2.0)],
        expected_c_hat: -4.0,
        c_hat_tol: 1e-3,
        expected_riemannian: true,
        expected_all_equivalent: true,
        note: "base metric scaled by 1/4; constant curvature -4, matched shell 1/2",
    },
    Builtin {
        name: "randers-2d-eps0.1",
        dim: 2,
        kind: MetricKind::K,
        text: "sqrt(p1^2 + p2^2) + 0.1*p1",
        coordinate_box: &[(-1.0, 1.0), (-1.0, 1.0)],
        expected_c_hat: 0.0,
        c_hat_tol: 1e-6,
        expected_riemannian: false,
        expected_all_equivalent: false,
        note: "locally Minkowski Randers-type dual; nonzero C-tensor",
    },
    Builtin {
        name: "randers-3d-eps0.05",
        dim: 3,
        kind: MetricKind::K,
        text: "sqrt(p1^2 + p2^2 + p3^2) + 0.05*p1",
        coordinate_box: &[(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)],
        expected_c_hat: 0.0,
        c_hat_tol: 1e-6,
        expected_riemannian: false,
        expected_all_equivalent: false,
        note: "three-dimensional Randers-type dual",
    },
];

/// Resolve a builtin by name. The bare name `euclidean` resolves through
/// the requested dimension (default 2).
pub fn find(name: &str, dim: Option<usize>) -> Option<&'static Builtin> {
    if let Some(b) = BUILTINS.iter().find(|b| b.name == name) {
        return Some(b);
    }
    let canonical = match (name, dim.unwrap_or(2)) {
        ("euclidean", 2) => "euclidean-2d",
        ("euclidean", 3) => "euclidean-3d",
        ("hyperbolic", 2) => "hyperbolic-2d",
        _ => return None,
    };
    BUILTINS.iter().find(|b| b.name == canonical)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::{sample_points, SampleConfig};
    use crate::tensors::CartanGeometry;

    #[test]
    fn registry_contains_the_documented_metrics() {
        assert!(find("euclidean", Some(2)).is_some());
        assert_eq!(find("euclidean", Some(3)).unwrap().name, "euclidean-3d");
        let h = find("hyperbolic-2d", None).unwrap();
        assert_eq!(h.text, "x2^2 * (p1^2 + p2^2)");
        assert!(find("randers-2d-eps0.1", None).is_some());
        assert!(find("no-such-metric", None).is_none());
    }

    #[test]
    fn every_builtin_parses_and_passes_axioms_at_seeded_points() {
        for b in BUILTINS {
            let geo = CartanGeometry::new(b.text, b.dim, b.kind)
                .unwrap_or_else(|e| panic!("{} failed to build: {e}", b.name));
            let cfg = SampleConfig::new(7, 10, b.coordinate_box.to_vec());
            let pts = sample_points(&geo, &cfg)
                .unwrap_or_else(|e| panic!("{} failed to sample: {e}", b.name));
            let mut ev = crate::expr::Evaluator::new();
            for sp in &pts {
                let (_, gup, _, _) = geo.fundamental_metrics(&sp.pt).unwrap();
                let eig = nalgebra::linalg::SymmetricEigen::new(gup);
                assert!(
                    eig.eigenvalues.iter().all(|&l| l > 0.0),
                    "{}: non-PD Hessian",
                    b.name
                );
                ev.begin_point(&geo.exprs);
                let d = ev.eval(&geo.exprs, geo.k2_defect, &sp.pt).unwrap();
                assert!(d.abs() < 1e-9, "{}: K^2 Euler defect {d}", b.name);
            }
        }
    }
}
