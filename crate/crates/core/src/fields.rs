//! Symbolic vector fields on the cotangent bundle, written in adapted
//! components, with covariant differentiation, Lie brackets and curvature
//! operators built on the Levi-Civita tables of `CartanGeometry`.
//!
//! Everything here produces expressions; evaluation happens wherever the
//! caller takes the resulting `SymField` to a point.

use crate::error::Result;
use crate::expr::{Evaluator, ExprId, PhasePoint, Var};
use crate::tensors::{CartanGeometry, SymPair, TangentVector};
use nalgebra::DVector;

/// A vector field with expression coefficients on the adapted basis:
/// `h[i]` on `delta/delta x^i`, `v[i]` on `d/dp_i`.
#[derive(Clone)]
pub struct SymField {
    pub h: Vec<ExprId>,
    pub v: Vec<ExprId>,
}

impl SymField {
    pub fn zero(geo: &CartanGeometry) -> Self {
        let z = geo.exprs.zero();
        SymField { h: vec![z; geo.dim], v: vec![z; geo.dim] }
    }

    /// Evaluate at a point into a numeric tangent vector.
    pub fn at(&self, geo: &CartanGeometry, ev: &mut Evaluator, pt: &PhasePoint) -> Result<TangentVector> {
        let n = geo.dim;
        let mut h = DVector::zeros(n);
        let mut v = DVector::zeros(n);
        for i in 0..n {
            h[i] = ev.eval(&geo.exprs, self.h[i], pt)?;
            v[i] = ev.eval(&geo.exprs, self.v[i], pt)?;
        }
        Ok(TangentVector::new(h, v, pt.clone()))
    }
}

impl CartanGeometry {
    /// The Liouville-Hamilton field `C* = p_i d^i`.
    pub fn field_cstar(&mut self) -> SymField {
        let n = self.dim;
        let mut f = SymField { h: vec![self.exprs.zero(); n], v: vec![self.exprs.zero(); n] };
        for i in 0..n {
            f.v[i] = self.exprs.var(Var::momentum(i));
        }
        f
    }

    /// `xi = J(C*) = l^i delta/delta x^i`.
    pub fn field_xi(&mut self) -> Result<SymField> {
        let ell = self.full()?.ell.clone();
        let z = self.exprs.zero();
        Ok(SymField { h: ell, v: vec![z; self.dim] })
    }

    /// Apply a field to a scalar: `X(f) = X_h^i delta f/delta x^i + X_vi df/dp_i`.
    pub fn apply_field(&mut self, x: &SymField, f: ExprId) -> Result<ExprId> {
        let n = self.dim;
        let mut acc = self.exprs.zero();
        for i in 0..n {
            let df = self.delta_derivative(f, i)?;
            let t = self.exprs.mul(x.h[i], df);
            acc = self.exprs.add(acc, t);
            let dp = self.exprs.diff(f, Var::momentum(i))?;
            let t = self.exprs.mul(x.v[i], dp);
            acc = self.exprs.add(acc, t);
        }
        Ok(acc)
    }

    pub fn field_add(&mut self, a: &SymField, b: &SymField) -> SymField {
        let n = self.dim;
        let mut out = SymField { h: Vec::with_capacity(n), v: Vec::with_capacity(n) };
        for i in 0..n {
            out.h.push(self.exprs.add(a.h[i], b.h[i]));
            out.v.push(self.exprs.add(a.v[i], b.v[i]));
        }
        out
    }

    pub fn field_sub(&mut self, a: &SymField, b: &SymField) -> SymField {
        let n = self.dim;
        let mut out = SymField { h: Vec::with_capacity(n), v: Vec::with_capacity(n) };
        for i in 0..n {
            out.h.push(self.exprs.sub(a.h[i], b.h[i]));
            out.v.push(self.exprs.sub(a.v[i], b.v[i]));
        }
        out
    }

    pub fn field_scale(&mut self, c: ExprId, a: &SymField) -> SymField {
        let n = self.dim;
        let mut out = SymField { h: Vec::with_capacity(n), v: Vec::with_capacity(n) };
        for i in 0..n {
            out.h.push(self.exprs.mul(c, a.h[i]));
            out.v.push(self.exprs.mul(c, a.v[i]));
        }
        out
    }

    /// Sasaki pairing `G(X, Y)` as an expression.
    pub fn pair_sym(&mut self, x: &SymField, y: &SymField) -> Result<ExprId> {
        let n = self.dim;
        let g_down = self.full()?.g_down.clone();
        let g_up = self.g_up.clone();
        let mut acc = self.exprs.zero();
        for i in 0..n {
            for j in 0..n {
                let t1 = self.exprs.mul(x.h[i], y.h[j]);
                let t1 = self.exprs.mul(g_down[i][j], t1);
                acc = self.exprs.add(acc, t1);
                let t2 = self.exprs.mul(x.v[i], y.v[j]);
                let t2 = self.exprs.mul(g_up[i][j], t2);
                acc = self.exprs.add(acc, t2);
            }
        }
        Ok(acc)
    }

    /// Liouville form `omega(X) = p_i X_h^i`.
    pub fn omega_sym(&mut self, x: &SymField) -> ExprId {
        let n = self.dim;
        let mut acc = self.exprs.zero();
        for i in 0..n {
            let pi = self.exprs.var(Var::momentum(i));
            let t = self.exprs.mul(pi, x.h[i]);
            acc = self.exprs.add(acc, t);
        }
        acc
    }

    /// Symplectic pairing `dp ^ dx (X, Y) = X_vi Y_h^i - Y_vi X_h^i` in
    /// adapted components (equals the natural-component value because the
    /// canonical nonlinear connection is symmetric).
    pub fn symplectic_sym(&mut self, x: &SymField, y: &SymField) -> ExprId {
        let n = self.dim;
        let mut acc = self.exprs.zero();
        for i in 0..n {
            let t1 = self.exprs.mul(x.v[i], y.h[i]);
            let t2 = self.exprs.mul(y.v[i], x.h[i]);
            let d = self.exprs.sub(t1, t2);
            acc = self.exprs.add(acc, d);
        }
        acc
    }

    /// Almost complex structure on a field:
    /// `(JX)_h^j = g^{kj} X_vk`, `(JX)_vj = -g_ij X_h^i`.
    pub fn j_apply_sym(&mut self, x: &SymField) -> Result<SymField> {
        let n = self.dim;
        let g_down = self.full()?.g_down.clone();
        let g_up = self.g_up.clone();
        let mut out = SymField::zero(self);
        for j in 0..n {
            let mut acc = self.exprs.zero();
            for k in 0..n {
                let t = self.exprs.mul(g_up[k][j], x.v[k]);
                acc = self.exprs.add(acc, t);
            }
            out.h[j] = acc;
            let mut acc = self.exprs.zero();
            for i in 0..n {
                let t = self.exprs.mul(g_down[i][j], x.h[i]);
                acc = self.exprs.add(acc, t);
            }
            out.v[j] = self.exprs.neg(acc);
        }
        Ok(out)
    }

    /// Covariant derivative `nabla_X Y` using the Levi-Civita tables:
    /// `X(Y^b) B_b + X^a Y^b nabla_{B_a} B_b`.
    pub fn cov_derivative(&mut self, x: &SymField, y: &SymField) -> Result<SymField> {
        let n = self.dim;
        let lc_hh: Vec<Vec<SymPair>> = self.full()?.lc.hh.clone();
        let lc_hv: Vec<Vec<SymPair>> = self.full()?.lc.hv.clone();
        let lc_vh: Vec<Vec<SymPair>> = self.full()?.lc.vh.clone();
        let lc_vv: Vec<Vec<SymPair>> = self.full()?.lc.vv.clone();

        let mut out = SymField::zero(self);
        // transport of the coefficients
        for j in 0..n {
            let dh = self.apply_field(x, y.h[j])?;
            out.h[j] = dh;
            let dv = self.apply_field(x, y.v[j])?;
            out.v[j] = dv;
        }
        // connection terms, all four block combinations
        for a in 0..n {
            for b in 0..n {
                let whh = self.exprs.mul(x.h[a], y.h[b]);
                let whv = self.exprs.mul(x.h[a], y.v[b]);
                let wvh = self.exprs.mul(x.v[a], y.h[b]);
                let wvv = self.exprs.mul(x.v[a], y.v[b]);
                for k in 0..n {
                    let mut acc_h = out.h[k];
                    let mut acc_v = out.v[k];
                    let t = self.exprs.mul(whh, lc_hh[a][b].h[k]);
                    acc_h = self.exprs.add(acc_h, t);
                    let t = self.exprs.mul(whh, lc_hh[a][b].v[k]);
                    acc_v = self.exprs.add(acc_v, t);
                    let t = self.exprs.mul(whv, lc_hv[a][b].h[k]);
                    acc_h = self.exprs.add(acc_h, t);
                    let t = self.exprs.mul(whv, lc_hv[a][b].v[k]);
                    acc_v = self.exprs.add(acc_v, t);
                    let t = self.exprs.mul(wvh, lc_vh[a][b].h[k]);
                    acc_h = self.exprs.add(acc_h, t);
                    let t = self.exprs.mul(wvh, lc_vh[a][b].v[k]);
                    acc_v = self.exprs.add(acc_v, t);
                    let t = self.exprs.mul(wvv, lc_vv[a][b].h[k]);
                    acc_h = self.exprs.add(acc_h, t);
                    let t = self.exprs.mul(wvv, lc_vv[a][b].v[k]);
                    acc_v = self.exprs.add(acc_v, t);
                    out.h[k] = acc_h;
                    out.v[k] = acc_v;
                }
            }
        }
        Ok(out)
    }

    /// Lie bracket `[X, Y]` of symbolic fields. Basis brackets:
    /// `[delta_i, delta_j] = r3_bracket(i,j,k) d^k`,
    /// `[delta_i, d^j] = -N^j_ik d^k`, `[d^i, d^j] = 0`.
    pub fn lie_bracket_sym(&mut self, x: &SymField, y: &SymField) -> Result<SymField> {
        let n = self.dim;
        let r3b = self.full()?.r3_bracket.clone();
        let n_up = self.full()?.n_up.clone();
        let mut out = SymField::zero(self);
        for j in 0..n {
            let a = self.apply_field(x, y.h[j])?;
            let b = self.apply_field(y, x.h[j])?;
            out.h[j] = self.exprs.sub(a, b);
            let a = self.apply_field(x, y.v[j])?;
            let b = self.apply_field(y, x.v[j])?;
            out.v[j] = self.exprs.sub(a, b);
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    // horizontal-horizontal
                    let w = self.exprs.mul(x.h[i], y.h[j]);
                    let t = self.exprs.mul(w, r3b.get(i, j, k));
                    out.v[k] = self.exprs.add(out.v[k], t);
                    // horizontal-vertical: X_h^i Y_vj [delta_i, d^j]
                    let w = self.exprs.mul(x.h[i], y.v[j]);
                    let t = self.exprs.mul(w, n_up.get(j, i, k));
                    out.v[k] = self.exprs.sub(out.v[k], t);
                    // vertical-horizontal: X_vj Y_h^i [d^j, delta_i]
                    let w = self.exprs.mul(x.v[j], y.h[i]);
                    let t = self.exprs.mul(w, n_up.get(j, i, k));
                    out.v[k] = self.exprs.add(out.v[k], t);
                }
            }
        }
        Ok(out)
    }

    /// Curvature operator `R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z
    /// - nabla_bracket(X,Y) Z`.
    pub fn curvature_op(&mut self, x: &SymField, y: &SymField, z: &SymField) -> Result<SymField> {
        let nyz = self.cov_derivative(y, z)?;
        let nxnyz = self.cov_derivative(x, &nyz)?;
        let nxz = self.cov_derivative(x, z)?;
        let nynxz = self.cov_derivative(y, &nxz)?;
        let br = self.lie_bracket_sym(x, y)?;
        let nbrz = self.cov_derivative(&br, z)?;
        let d = self.field_sub(&nxnyz, &nynxz);
        Ok(self.field_sub(&d, &nbrz))
    }

    /// Normal component of a field with respect to the level sets of `K`:
    /// `G(W, C*)/K^2` (the coefficient of `C*`).
    pub fn normal_coefficient(&mut self, w: &SymField) -> Result<ExprId> {
        let n = self.dim;
        let ell = self.full()?.ell.clone();
        let mut acc = self.exprs.zero();
        for i in 0..n {
            let t = self.exprs.mul(w.v[i], ell[i]);
            acc = self.exprs.add(acc, t);
        }
        Ok(self.exprs.div(acc, self.k2))
    }

    /// Induced (level-set) covariant derivative via the Gauss split:
    /// `bar nabla_X Y = nabla_X Y - G(nabla_X Y, C*/K) C*/K`.
    pub fn cov_derivative_induced(&mut self, x: &SymField, y: &SymField) -> Result<SymField> {
        let w = self.cov_derivative(x, y)?;
        self.tangential_part(&w)
    }

    /// Remove the `C*` component of a field.
    pub fn tangential_part(&mut self, w: &SymField) -> Result<SymField> {
        let n = self.dim;
        let coeff = self.normal_coefficient(w)?;
        let mut out = w.clone();
        for i in 0..n {
            let pi = self.exprs.var(Var::momentum(i));
            let t = self.exprs.mul(coeff, pi);
            out.v[i] = self.exprs.sub(out.v[i], t);
        }
        Ok(out)
    }

    /// Curvature of the induced connection (arguments must be tangent to
    /// the level sets for the result to be the leaf curvature).
    pub fn curvature_induced(
        &mut self,
        x: &SymField,
        y: &SymField,
        z: &SymField,
    ) -> Result<SymField> {
        let nyz = self.cov_derivative_induced(y, z)?;
        let nxnyz = self.cov_derivative_induced(x, &nyz)?;
        let nxz = self.cov_derivative_induced(x, z)?;
        let nynxz = self.cov_derivative_induced(y, &nxz)?;
        let br = self.lie_bracket_sym(x, y)?;
        let nbrz = self.cov_derivative_induced(&br, z)?;
        let d = self.field_sub(&nxnyz, &nynxz);
        Ok(self.field_sub(&d, &nbrz))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::eval_once;
    use crate::metric::MetricKind;
    use crate::oracle::{koszul_oracle, AdaptedGeometry, FdConfig};

    fn pt(x: Vec<f64>, p: Vec<f64>) -> PhasePoint {
        PhasePoint::new(x, p).unwrap()
    }

    fn hyperbolic() -> CartanGeometry {
        CartanGeometry::new("x2^2 * (p1^2 + p2^2)", 2, MetricKind::KSquared).unwrap()
    }

    fn basis_field(geo: &mut CartanGeometry, alpha: usize) -> SymField {
        let n = geo.dim;
        let one = geo.exprs.one();
        let mut f = SymField::zero(geo);
        if alpha < n {
            f.h[alpha] = one;
        } else {
            f.v[alpha - n] = one;
        }
        f
    }

    #[test]
    fn bracket_of_adapted_basis_matches_tensor() {
        let mut geo = hyperbolic();
        let d0 = basis_field(&mut geo, 0);
        let d1 = basis_field(&mut geo, 1);
        let br = geo.lie_bracket_sym(&d0, &d1).unwrap();
        let at = pt(vec![0.2, 1.3], vec![0.7, -0.4]);
        let ts = geo.tensor_set(&at).unwrap();
        let mut ev = Evaluator::new();
        ev.begin_point(&geo.exprs);
        for k in 0..2 {
            let v = ev.eval(&geo.exprs, br.v[k], &at).unwrap();
            // bracket orientation is the negative of the stored r3
            assert!((v + ts.r3.get(0, 1, k)).abs() < 1e-12, "k={k}: {v}");
            let h = ev.eval(&geo.exprs, br.h[k], &at).unwrap();
            assert_eq!(h, 0.0);
        }
    }

    #[test]
    fn lc_tables_match_koszul_oracle() {
        // two-path check of every adapted-basis pair on the curved metric
        let geo = hyperbolic();
        let at = pt(vec![0.1, 1.1], vec![0.8, 0.5]);
        let table = crate::tensors::levi_civita_natural(&geo, &at).unwrap();

        let g_down_f = |q: &PhasePoint| {
            let (_, _, gd, _) = geo.fundamental_metrics(q)?;
            Ok(gd)
        };
        let g_up_f = |q: &PhasePoint| {
            let (_, gu, _, _) = geo.fundamental_metrics(q)?;
            Ok(gu)
        };
        let n_f = |q: &PhasePoint| {
            let ts = geo.tensor_set(q)?;
            Ok(ts.nconn)
        };
        let adapted = AdaptedGeometry {
            dim: 2,
            g_down: Box::new(g_down_f),
            g_up: Box::new(g_up_f),
            nonlinear: Box::new(n_f),
        };
        let oracle = koszul_oracle(&adapted, &at, &FdConfig::default()).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                for k in 0..2 {
                    let dh = (table[a][b].0[k] - oracle[a][b].0[k]).abs();
                    let dv = (table[a][b].1[k] - oracle[a][b].1[k]).abs();
                    assert!(dh < 1e-4 && dv < 1e-4, "pair ({a},{b}) comp {k}: {dh} {dv}");
                }
            }
        }
    }

    #[test]
    fn torsion_freeness_on_basis_fields() {
        // nabla_X Y - nabla_Y X = [X, Y] for adapted basis fields
        let mut geo = hyperbolic();
        let at = pt(vec![0.0, 1.4], vec![0.6, 0.9]);
        let mut ev = Evaluator::new();
        for a in 0..4 {
            for b in 0..4 {
                let fa = basis_field(&mut geo, a);
                let fb = basis_field(&mut geo, b);
                let nab = geo.cov_derivative(&fa, &fb).unwrap();
                let nba = geo.cov_derivative(&fb, &fa).unwrap();
                let diff = geo.field_sub(&nab, &nba);
                let br = geo.lie_bracket_sym(&fa, &fb).unwrap();
                ev.begin_point(&geo.exprs);
                for k in 0..2 {
                    let lhs_h = ev.eval(&geo.exprs, diff.h[k], &at).unwrap();
                    let rhs_h = ev.eval(&geo.exprs, br.h[k], &at).unwrap();
                    let lhs_v = ev.eval(&geo.exprs, diff.v[k], &at).unwrap();
                    let rhs_v = ev.eval(&geo.exprs, br.v[k], &at).unwrap();
                    assert!((lhs_h - rhs_h).abs() < 1e-9, "pair ({a},{b})");
                    assert!((lhs_v - rhs_v).abs() < 1e-9, "pair ({a},{b})");
                }
            }
        }
    }

    #[test]
    fn metric_compatibility_via_symbolic_fields() {
        // Z G(X,Y) = G(nabla_Z X, Y) + G(X, nabla_Z Y) for basis fields
        let mut geo = hyperbolic();
        let at = pt(vec![0.3, 0.9], vec![1.1, 0.2]);
        let mut ev = Evaluator::new();
        for z in 0..4 {
            for xb in 0..4 {
                for yb in 0..4 {
                    let fz = basis_field(&mut geo, z);
                    let fx = basis_field(&mut geo, xb);
                    let fy = basis_field(&mut geo, yb);
                    let gxy = geo.pair_sym(&fx, &fy).unwrap();
                    let dz = geo.apply_field(&fz, gxy).unwrap();
                    let nzx = geo.cov_derivative(&fz, &fx).unwrap();
                    let nzy = geo.cov_derivative(&fz, &fy).unwrap();
                    let t1 = geo.pair_sym(&nzx, &fy).unwrap();
                    let t2 = geo.pair_sym(&fx, &nzy).unwrap();
                    ev.begin_point(&geo.exprs);
                    let lhs = ev.eval(&geo.exprs, dz, &at).unwrap();
                    let r1 = ev.eval(&geo.exprs, t1, &at).unwrap();
                    let r2 = ev.eval(&geo.exprs, t2, &at).unwrap();
                    assert!(
                        (lhs - r1 - r2).abs() < 1e-9,
                        "triple ({z},{xb},{yb}): {lhs} vs {}",
                        r1 + r2
                    );
                }
            }
        }
    }

    #[test]
    fn xi_and_cstar_cov_derivatives() {
        // nabla_xi xi = 0, nabla_{C*} C* = C*, nabla_xi C* = 0,
        // nabla_{C*} xi = xi
        let mut geo = hyperbolic();
        let xi = geo.field_xi().unwrap();
        let cstar = geo.field_cstar();
        let at = pt(vec![0.5, 1.2], vec![0.4, 1.0]);
        let mut ev = Evaluator::new();

        let cases = [
            (geo.cov_derivative(&xi, &xi).unwrap(), None),
            (geo.cov_derivative(&cstar, &cstar).unwrap(), Some(&cstar)),
            (geo.cov_derivative(&xi, &cstar).unwrap(), None),
            (geo.cov_derivative(&cstar, &xi).unwrap(), Some(&xi)),
        ];
        for (idx, (got, want)) in cases.iter().enumerate() {
            ev.begin_point(&geo.exprs);
            for k in 0..2 {
                let gh = ev.eval(&geo.exprs, got.h[k], &at).unwrap();
                let gv = ev.eval(&geo.exprs, got.v[k], &at).unwrap();
                let (wh, wv) = match want {
                    Some(f) => (
                        eval_once(&geo.exprs, f.h[k], &at).unwrap(),
                        eval_once(&geo.exprs, f.v[k], &at).unwrap(),
                    ),
                    None => (0.0, 0.0),
                };
                assert!((gh - wh).abs() < 1e-9, "case {idx} h[{k}]: {gh} vs {wh}");
                assert!((gv - wv).abs() < 1e-9, "case {idx} v[{k}]: {gv} vs {wv}");
            }
        }
    }

    #[test]
    fn induced_derivative_is_tangent() {
        let mut geo = hyperbolic();
        let xi = geo.field_xi().unwrap();
        let nxx = geo.cov_derivative_induced(&xi, &xi).unwrap();
        let coeff = geo.normal_coefficient(&nxx).unwrap();
        let at = pt(vec![0.1, 0.8], vec![0.9, 0.7]);
        let v = eval_once(&geo.exprs, coeff, &at).unwrap();
        assert!(v.abs() < 1e-12);
    }
}
