//! Cartan metric functions: parsing, canonical `K^2` storage, exact
//! differentiation with a multi-index cache, and homogeneity diagnostics.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::expr::{eval_once, ExprContext, ExprId, PhasePoint, UnaryFn, Var};
use crate::parse::parse_into;

/// Whether the user supplied `K` itself or `K^2`.
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
pub enum MetricKind {
    #[serde(rename = "K")]
    K,
    #[serde(rename = "K-squared", alias = "K2")]
    KSquared,
}

/// A parsed metric function. The canonical stored root is always `K^2`
/// (smooth wherever `p != 0`); when the user supplies `K` the root is its
/// square and `K` itself is recovered as `sqrt(K^2)`.
pub struct MetricExpression {
    pub dim: usize,
    pub kind: MetricKind,
    /// Canonical root: `K^2`.
    pub k2: ExprId,
    /// The tree exactly as parsed (before the kind squaring rule).
    pub parsed: ExprId,
    source: String,
    derivative_cache: HashMap<Vec<(Var, u32)>, ExprId>,
}

impl MetricExpression {
    pub fn source(&self) -> &str {
        &self.source
    }

    /// Stable fingerprint of the canonical AST.
    pub fn fingerprint(&self, ctx: &ExprContext) -> u64 {
        ctx.fingerprint(self.k2)
    }

    /// Cached multi-index derivative of the canonical root `K^2`.
    /// The cache key is the sorted multi-index, so listing order is
    /// irrelevant and repeated queries return the identical tree.
    pub fn differentiate(
        &mut self,
        ctx: &mut ExprContext,
        multi: &[(Var, u32)],
    ) -> Result<ExprId> {
        let mut key: Vec<(Var, u32)> = multi.iter().copied().filter(|&(_, o)| o > 0).collect();
        key.sort();
        if let Some(&d) = self.derivative_cache.get(&key) {
            return Ok(d);
        }
        let d = ctx.diff_multi(self.k2, &key)?;
        self.derivative_cache.insert(key, d);
        Ok(d)
    }

    pub fn cached_derivatives(&self) -> usize {
        self.derivative_cache.len()
    }
}

/// Parse a metric expression. `dim >= 2`; every variable index in `text`
/// must be within `1..=dim`. For `kind = K` the stored root is the square
/// of the parsed tree.
pub fn parse_metric(
    ctx: &mut ExprContext,
    text: &str,
    dim: usize,
    kind: MetricKind,
) -> Result<MetricExpression> {
    let parsed = parse_into(ctx, text, dim)?;
    let k2 = match kind {
        MetricKind::KSquared => parsed,
        MetricKind::K => ctx.mul(parsed, parsed),
    };
    Ok(MetricExpression {
        dim,
        kind,
        k2,
        parsed,
        source: text.to_string(),
        derivative_cache: HashMap::new(),
    })
}

/// `K = sqrt(K^2)` as an expression.
pub fn k_expr(ctx: &mut ExprContext, m: &MetricExpression) -> ExprId {
    ctx.fun(UnaryFn::Sqrt, m.k2)
}

/// Euler defect `p_i df/dp_i - degree * f` evaluated at `pt`; zero for a
/// positively `degree`-homogeneous `f`.
pub fn euler_defect(
    ctx: &mut ExprContext,
    e: ExprId,
    degree: f64,
    pt: &PhasePoint,
) -> Result<f64> {
    let defect = euler_defect_expr(ctx, e, degree, pt.dim())?;
    eval_once(ctx, defect, pt)
}

/// The defect as a reusable expression (callers evaluating many points
/// should build this once).
pub fn euler_defect_expr(
    ctx: &mut ExprContext,
    e: ExprId,
    degree: f64,
    dim: usize,
) -> Result<ExprId> {
    let mut radial = ctx.zero();
    for i in 0..dim {
        let pi = ctx.var(Var::momentum(i));
        let d = ctx.diff(e, Var::momentum(i))?;
        let t = ctx.mul(pi, d);
        radial = ctx.add(radial, t);
    }
    let deg = ctx.num(degree);
    let scaled = ctx.mul(deg, e);
    Ok(ctx.sub(radial, scaled))
}

/// Thin wrapper: parse an expression and evaluate it at one point.
pub fn eval_expr(text: &str, dim: usize, pt: &PhasePoint) -> Result<f64> {
    if pt.dim() != dim {
        return Err(Error::DimMismatch { expected: dim, got: pt.dim() });
    }
    let mut ctx = ExprContext::new();
    let id = parse_into(&mut ctx, text, dim)?;
    eval_once(&ctx, id, pt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: Vec<f64>, p: Vec<f64>) -> PhasePoint {
        PhasePoint::new(x, p).unwrap()
    }

    #[test]
    fn kind_squaring_rule() {
        // K = sqrt(p1^2+p2^2) + 0.1 p1 stores root (sqrt(..) + 0.1 p1)^2
        let mut ctx = ExprContext::new();
        let m = parse_metric(&mut ctx, "sqrt(p1^2+p2^2) + 0.1*p1", 2, MetricKind::K).unwrap();
        let at = pt(vec![0.0, 0.0], vec![1.0, 0.0]);
        let v = eval_once(&ctx, m.k2, &at).unwrap();
        assert!((v - 1.21).abs() < 1e-15, "(1 + 0.1)^2 = 1.21, got {v}");
    }

    #[test]
    fn derivative_cache_idempotent() {
        let mut ctx = ExprContext::new();
        let mut m = parse_metric(&mut ctx, "x2^2*(p1^2+p2^2)", 2, MetricKind::KSquared).unwrap();
        let d1 = m
            .differentiate(&mut ctx, &[(Var::momentum(0), 1), (Var::coord(1), 1)])
            .unwrap();
        let d2 = m
            .differentiate(&mut ctx, &[(Var::coord(1), 1), (Var::momentum(0), 1)])
            .unwrap();
        assert_eq!(d1, d2);
        assert_eq!(m.cached_derivatives(), 1);

        // cached tree equals fresh symbolic differentiation of the root
        let mut fresh_ctx = ExprContext::new();
        let mut fresh =
            parse_metric(&mut fresh_ctx, "x2^2*(p1^2+p2^2)", 2, MetricKind::KSquared).unwrap();
        let df = fresh
            .differentiate(&mut fresh_ctx, &[(Var::momentum(0), 1), (Var::coord(1), 1)])
            .unwrap();
        assert!(ctx.structurally_equal(d1, &fresh_ctx, df));

        let at = pt(vec![0.0, 1.0], vec![1.0, 0.0]);
        assert!((eval_once(&ctx, d1, &at).unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn euler_defect_exact_homogeneous() {
        let mut ctx = ExprContext::new();
        let m = parse_metric(&mut ctx, "p1^2 + p2^2", 2, MetricKind::KSquared).unwrap();
        let at = pt(vec![0.3, -0.4], vec![1.7, 0.9]);
        let d = euler_defect(&mut ctx, m.k2, 2.0, &at).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn euler_defect_inhomogeneous_shift() {
        // K^2 + 1 with degree 2 at a point where K = 1 gives -2.
        let mut ctx = ExprContext::new();
        let m = parse_metric(&mut ctx, "p1^2 + p2^2", 2, MetricKind::KSquared).unwrap();
        let one = ctx.one();
        let shifted = ctx.add(m.k2, one);
        let at = pt(vec![0.0, 0.0], vec![1.0, 0.0]);
        let d = euler_defect(&mut ctx, shifted, 2.0, &at).unwrap();
        assert!((d + 2.0).abs() < 1e-15);
    }

    #[test]
    fn eval_expr_wrapper() {
        let at = pt(vec![0.0, 0.0], vec![3.0, 4.0]);
        assert_eq!(eval_expr("p1^2+p2^2", 2, &at).unwrap(), 25.0);
        assert_eq!(eval_expr("sqrt(p1^2+p2^2)", 2, &at).unwrap(), 5.0);
        let at2 = pt(vec![0.0, 2.0], vec![1.0, 1.0]);
        assert_eq!(eval_expr("x2^2*(p1^2+p2^2)", 2, &at2).unwrap(), 8.0);
    }
}

#[cfg(test)]
mod bracket_oracle_tests {
    use super::*;
    use crate::expr::{eval_once, Var};
    use crate::tensors::CartanGeometry;

    #[test]
    fn poisson_of_inverse_metric_entry_matches_hand_differentiation() {
        // hyperbolic dual: g_11 = 1/x2^2, K^2 = x2^2(p1^2+p2^2).
        // Term-by-term: {g_11, K^2} = -dK^2/dp_k dg_11/dx^k = 4 p2 / x2.
        let mut exprs = crate::expr::ExprContext::new();
        let m2 = parse_metric(&mut exprs, "x2^2 * (p1^2 + p2^2)", 2, MetricKind::KSquared).unwrap();
        let g11 = parse_metric(&mut exprs, "1 / x2^2", 2, MetricKind::KSquared).unwrap();
        let br = exprs.poisson_bracket(g11.k2, m2.k2, 2).unwrap();
        let hand = |x2: f64, p2: f64| 4.0 * p2 / x2;
        for (x2, p) in [(1.0, [1.0, 0.0]), (1.0, [0.6, 0.8]), (1.7, [0.3, -0.9])] {
            let pt = PhasePoint::new(vec![0.0, x2], vec![p[0], p[1]]).unwrap();
            let got = eval_once(&exprs, br, &pt).unwrap();
            let want = hand(x2, p[1]);
            assert!((got - want).abs() < 1e-12, "bracket {got} vs hand {want}");
        }
    }

    #[test]
    fn delta_derivative_of_momentum_flat_case() {
        // with a flat dual the connection vanishes, so delta p1/delta x^1 = 0
        let mut geo = CartanGeometry::new("p1^2 + p2^2", 2, MetricKind::KSquared).unwrap();
        let p1 = geo.exprs.var(Var::momentum(0));
        let d = geo.delta_derivative(p1, 0).unwrap();
        assert_eq!(geo.exprs.as_const(d), Some(0.0));
    }
}
