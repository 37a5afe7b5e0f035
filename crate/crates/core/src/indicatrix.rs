//! Geometry of the level sets `I*M(c) = {K = c}`: unit normal, second
//! fundamental form, induced connection, the curvature relations between
//! ambient and level-set connections, the contact structure on the unit
//! shell, and the non-Sasakian obstruction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{Evaluator, PhasePoint, Var};
use crate::fields::SymField;
use crate::frame::{FrameBundle, FrameVec, OrthoFrame};
use crate::tensors::{sasaki_metric_apply, CartanGeometry, CartanTensorSet, TangentVector};

/// A phase point lying on the level set `K = c` (within 1e-10).
#[derive(Clone, Debug)]
pub struct IndicatrixPoint {
    pub pt: PhasePoint,
    pub c: f64,
}

impl IndicatrixPoint {
    /// Project a point to the shell by momentum scaling (`K` is positively
    /// 1-homogeneous, so `p -> (c/K) p` lands exactly on the shell).
    pub fn project(geo: &CartanGeometry, pt: &PhasePoint, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Config(format!("shell level must be positive, got {c}")));
        }
        let (k, _, _, _) = geo.fundamental_metrics(pt)?;
        let scaled = pt.scaled_momenta(c / k);
        let (k2, _, _, _) = geo.fundamental_metrics(&scaled)?;
        if (k2 - c).abs() > 1e-10 * c.max(1.0) {
            return Err(Error::Config(format!("projection missed the shell: K = {k2}, c = {c}")));
        }
        Ok(IndicatrixPoint { pt: scaled, c })
    }
}

/// Frame components of a tangent vector: coefficients on
/// `(xi, dbar_a, C*, delbar^a)`.
pub struct FrameComponents {
    pub xi: f64,
    pub delta_bar: DVector<f64>,
    pub cstar: f64,
    pub del_bar: DVector<f64>,
}

/// Decompose an adapted-components tangent vector in the frame at a point.
pub fn frame_components(
    ts: &CartanTensorSet,
    fr: &OrthoFrame,
    x: &TangentVector,
) -> Result<FrameComponents> {
    if x.base != ts.at {
        return Err(Error::BasePointMismatch);
    }
    let n = ts.dim();
    let m = n - 1;
    let mut xi = 0.0;
    let mut cstar = 0.0;
    for i in 0..n {
        xi += ts.at.p[i] * x.h[i];
        cstar += ts.ell[i] * x.v[i];
    }
    xi /= ts.k2;
    cstar /= ts.k2;
    let mut delta_bar = DVector::zeros(m);
    let mut del_bar = DVector::zeros(m);
    for c in 0..m {
        for k in 0..n {
            delta_bar[c] += x.h[k] * fr.e[(c, k)];
            del_bar[c] += x.v[k] * fr.ebar[(c, k)];
        }
    }
    Ok(FrameComponents { xi, delta_bar, cstar, del_bar })
}

fn tangency_residual(ts: &CartanTensorSet, x: &TangentVector) -> f64 {
    let mut acc = 0.0;
    for i in 0..ts.dim() {
        acc += ts.ell[i] * x.v[i];
    }
    acc.abs() / ts.k2.max(1.0)
}

/// Covariant derivative of the constant-frame-coefficient extension of `y`
/// along `x`, evaluated through the frame connection (projection path).
pub fn cov_derivative_vectors(
    geo: &CartanGeometry,
    bundle: &FrameBundle,
    ts: &CartanTensorSet,
    fr: &OrthoFrame,
    x: &TangentVector,
    y: &TangentVector,
) -> Result<TangentVector> {
    let n = geo.dim;
    let cx = frame_components(ts, fr, x)?;
    let cy = frame_components(ts, fr, y)?;
    let order = crate::frame::frame_order(n);
    let coeff = |c: &FrameComponents, fv: FrameVec| -> f64 {
        match fv {
            FrameVec::Xi => c.xi,
            FrameVec::Cstar => c.cstar,
            FrameVec::DeltaBar(a) => c.delta_bar[a],
            FrameVec::DelBar(a) => c.del_bar[a],
        }
    };
    let mut ev = Evaluator::new();
    ev.begin_point(&geo.exprs);
    let mut out = TangentVector::zero(ts.at.clone());
    for &fa in &order {
        let wa = coeff(&cx, fa);
        if wa == 0.0 {
            continue;
        }
        for &fb in &order {
            let wb = coeff(&cy, fb);
            if wb == 0.0 {
                continue;
            }
            let field = bundle.conn.get(fa, fb);
            for i in 0..n {
                out.h[i] += wa * wb * ev.eval(&geo.exprs, field.h[i], &ts.at)?;
                out.v[i] += wa * wb * ev.eval(&geo.exprs, field.v[i], &ts.at)?;
            }
        }
    }
    Ok(out)
}

/// Second fundamental form `H(X, Y) = G(nabla_X Y, nu) nu` with
/// `nu = C*/c`; returns the coefficient `lambda` in `H = lambda C*`.
pub fn second_fundamental_form(
    geo: &CartanGeometry,
    bundle: &FrameBundle,
    ts: &CartanTensorSet,
    fr: &OrthoFrame,
    ip: &IndicatrixPoint,
    x: &TangentVector,
    y: &TangentVector,
) -> Result<f64> {
    if ts.at != ip.pt {
        return Err(Error::BasePointMismatch);
    }
    let rx = tangency_residual(ts, x);
    let ry = tangency_residual(ts, y);
    if rx > 1e-8 || ry > 1e-8 {
        return Err(Error::NonTangent { residual: rx.max(ry) });
    }
    let w = cov_derivative_vectors(geo, bundle, ts, fr, x, y)?;
    // G(W, C*)/K^2 is the C* coefficient
    let mut acc = 0.0;
    for i in 0..geo.dim {
        acc += ts.ell[i] * w.v[i];
    }
    Ok(acc / ts.k2)
}

/// Induced connection value `bar nabla_X Y = nabla_X Y - H(X, Y)` for
/// constant-frame-coefficient extensions; the result is tangent.
pub fn induced_connection(
    geo: &CartanGeometry,
    bundle: &FrameBundle,
    ts: &CartanTensorSet,
    fr: &OrthoFrame,
    ip: &IndicatrixPoint,
    x: &TangentVector,
    y: &TangentVector,
) -> Result<TangentVector> {
    let lambda = second_fundamental_form(geo, bundle, ts, fr, ip, x, y)?;
    let mut w = cov_derivative_vectors(geo, bundle, ts, fr, x, y)?;
    for i in 0..geo.dim {
        w.v[i] -= lambda * ts.at.p[i];
    }
    Ok(w)
}

/// Canonical symplectic pairing `theta(X, Y) = dp_i ^ dx^i (X, Y)` in
/// natural components (equals `d omega (X, Y)`).
pub fn symplectic_eval(
    ts: &CartanTensorSet,
    x: &TangentVector,
    y: &TangentVector,
) -> Result<f64> {
    if x.base != ts.at || y.base != ts.at {
        return Err(Error::BasePointMismatch);
    }
    let n = ts.dim();
    // natural momentum components w_j = v_j + N_ij h^i
    let nat = |t: &TangentVector, j: usize| -> f64 {
        let mut w = t.v[j];
        for i in 0..n {
            w += ts.nconn[(i, j)] * t.h[i];
        }
        w
    };
    let mut acc = 0.0;
    for i in 0..n {
        acc += nat(x, i) * y.h[i] - nat(y, i) * x.h[i];
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Curvature relations between the ambient and level-set connections
// ---------------------------------------------------------------------------

/// One relation: left side `R(X,Y)Z`, right side `bar R(X,Y)Z + correction`.
pub struct GaussRow {
    pub label: String,
    pub lhs: SymField,
    pub rhs: SymField,
}

pub struct GaussRelationForms {
    pub rows: Vec<GaussRow>,
}

/// Build the seven curvature-relation rows for one frame bundle. Curvature
/// corrections carry the bracket orientation of `R`.
pub fn gauss_relation_forms(
    geo: &mut CartanGeometry,
    bundle: &FrameBundle,
) -> Result<GaussRelationForms> {
    let n = geo.dim;
    let m = n - 1;
    let fs = &bundle.fs;
    let k2 = geo.k2;
    let z = geo.exprs.zero();

    // frame projections with the bracket orientation
    let r3b = geo.full()?.r3_bracket.clone();
    let c_down = geo.full()?.c_down.clone();
    let r2 = geo.full()?.r2.clone();
    let tg = geo.full()?.tg_vertical.clone();
    let mut rb_f = vec![z; m * m * m];
    let mut g_f = vec![z; m * m * m];
    let mut rb2_f = vec![vec![z; m]; m];
    for a in 0..m {
        for b in 0..m {
            let mut acc2 = z;
            for i in 0..n {
                for j in 0..n {
                    let w = geo.exprs.mul(fs.ebar[a][i], fs.ebar[b][j]);
                    let t = geo.exprs.mul(w, r2[i][j]);
                    acc2 = geo.exprs.sub(acc2, t);
                }
            }
            rb2_f[a][b] = acc2;
            for c in 0..m {
                let mut accr = z;
                let mut accg = z;
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let w = geo.exprs.mul(fs.ebar[a][i], fs.ebar[b][j]);
                            let w = geo.exprs.mul(w, fs.ebar[c][k]);
                            let t = geo.exprs.mul(w, r3b.get(i, j, k));
                            accr = geo.exprs.add(accr, t);
                            let t = geo.exprs.mul(w, c_down.get(i, j, k));
                            accg = geo.exprs.add(accg, t);
                        }
                    }
                }
                let at = (a * m + b) * m + c;
                rb_f[at] = accr;
                g_f[at] = accg;
            }
        }
    }

    let cstar = fs.cstar.clone();
    let mut rows = Vec::new();

    // Row 1: R(dbar_a, dbar_b) delbar^c = bar R + (1/K^2) Rb_abe g^{ec} C*
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let x = fs.delta_bar[a].clone();
                let y = fs.delta_bar[b].clone();
                let zv = fs.del_bar[c].clone();
                let lhs = geo.curvature_op(&x, &y, &zv)?;
                let bar = geo.curvature_induced(&x, &y, &zv)?;
                let mut coeff = z;
                for e in 0..m {
                    let at = (a * m + b) * m + e;
                    let t = geo.exprs.mul(rb_f[at], fs.gram_up[e][c]);
                    coeff = geo.exprs.add(coeff, t);
                }
                let coeff = geo.exprs.div(coeff, k2);
                let corr = geo.field_scale(coeff, &cstar);
                let rhs = geo.field_add(&bar, &corr);
                rows.push(GaussRow {
                    label: format!("hh-v({a}{b}{c})"),
                    lhs,
                    rhs,
                });
            }
        }
    }

    // Row 2: R(dbar_a, delbar^b) dbar_c = bar R
    //        + (1/2K^2) (Rb_ace + g_ace) g^{eb} C*
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let x = fs.delta_bar[a].clone();
                let y = fs.del_bar[b].clone();
                let zv = fs.delta_bar[c].clone();
                let lhs = geo.curvature_op(&x, &y, &zv)?;
                let bar = geo.curvature_induced(&x, &y, &zv)?;
                let mut coeff = z;
                for e in 0..m {
                    let at = (a * m + c) * m + e;
                    let s = geo.exprs.add(rb_f[at], g_f[at]);
                    let t = geo.exprs.mul(s, fs.gram_up[e][b]);
                    coeff = geo.exprs.add(coeff, t);
                }
                let two = geo.exprs.num(2.0);
                let two_k2 = geo.exprs.mul(two, k2);
                let coeff = geo.exprs.div(coeff, two_k2);
                let corr = geo.field_scale(coeff, &cstar);
                let rhs = geo.field_add(&bar, &corr);
                rows.push(GaussRow {
                    label: format!("hv-h({a}{b}{c})"),
                    lhs,
                    rhs,
                });
            }
        }
    }

    // Row 3: R(delbar^a, delbar^b) delbar^c = bar R
    //        + (1/K^2)(g^{ac} delbar^b - g^{bc} delbar^a)
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let x = fs.del_bar[a].clone();
                let y = fs.del_bar[b].clone();
                let zv = fs.del_bar[c].clone();
                let lhs = geo.curvature_op(&x, &y, &zv)?;
                let bar = geo.curvature_induced(&x, &y, &zv)?;
                let ca = geo.exprs.div(fs.gram_up[a][c], k2);
                let cb = geo.exprs.div(fs.gram_up[b][c], k2);
                let t1 = geo.field_scale(ca, &fs.del_bar[b].clone());
                let t2 = geo.field_scale(cb, &fs.del_bar[a].clone());
                let corr = geo.field_sub(&t1, &t2);
                let rhs_t = geo.field_add(&bar, &corr);
                rows.push(GaussRow {
                    label: format!("vv-v({a}{b}{c})"),
                    lhs,
                    rhs: rhs_t,
                });
            }
        }
    }

    // Row 4: R(dbar_a, delbar^b) delbar^c = bar R
    //        - (1/2K^2) Ebar_a^k E_i^b E_j^c tg(k,i,j) C*
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let x = fs.delta_bar[a].clone();
                let y = fs.del_bar[b].clone();
                let zv = fs.del_bar[c].clone();
                let lhs = geo.curvature_op(&x, &y, &zv)?;
                let bar = geo.curvature_induced(&x, &y, &zv)?;
                let mut coeff = z;
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            let w = geo.exprs.mul(fs.ebar[a][k], fs.e[b][i]);
                            let w = geo.exprs.mul(w, fs.e[c][j]);
                            let t = geo.exprs.mul(w, tg.get(k, i, j));
                            coeff = geo.exprs.add(coeff, t);
                        }
                    }
                }
                let mtwo = geo.exprs.num(-2.0);
                let m2k2 = geo.exprs.mul(mtwo, k2);
                let coeff = geo.exprs.div(coeff, m2k2);
                let corr = geo.field_scale(coeff, &cstar);
                let rhs = geo.field_add(&bar, &corr);
                rows.push(GaussRow {
                    label: format!("hv-v({a}{b}{c})"),
                    lhs,
                    rhs,
                });
            }
        }
    }

    // Rows 5-7 involve xi; curvature projections of R2 enter with the
    // bracket orientation.
    // Row 5: R(dbar_a, delbar^b) xi = bar R + (1/2K^2) Rb2_ad g^{db} C*
    for a in 0..m {
        for b in 0..m {
            let x = fs.delta_bar[a].clone();
            let y = fs.del_bar[b].clone();
            let xi = fs.xi.clone();
            let lhs = geo.curvature_op(&x, &y, &xi)?;
            let bar = geo.curvature_induced(&x, &y, &xi)?;
            let mut coeff = z;
            for d in 0..m {
                let t = geo.exprs.mul(rb2_f[a][d], fs.gram_up[d][b]);
                coeff = geo.exprs.add(coeff, t);
            }
            let two = geo.exprs.num(2.0);
            let two_k2 = geo.exprs.mul(two, k2);
            let coeff = geo.exprs.div(coeff, two_k2);
            let corr = geo.field_scale(coeff, &cstar);
            let rhs = geo.field_add(&bar, &corr);
            rows.push(GaussRow { label: format!("hv-xi({a}{b})"), lhs, rhs });
        }
    }

    // Row 6: R(delbar^a, xi) dbar_b = bar R + (1/2K^2) Rb2_bd g^{da} C*
    for a in 0..m {
        for b in 0..m {
            let x = fs.del_bar[a].clone();
            let xi = fs.xi.clone();
            let zv = fs.delta_bar[b].clone();
            let lhs = geo.curvature_op(&x, &xi, &zv)?;
            let bar = geo.curvature_induced(&x, &xi, &zv)?;
            let mut coeff = z;
            for d in 0..m {
                let t = geo.exprs.mul(rb2_f[b][d], fs.gram_up[d][a]);
                coeff = geo.exprs.add(coeff, t);
            }
            let two = geo.exprs.num(2.0);
            let two_k2 = geo.exprs.mul(two, k2);
            let coeff = geo.exprs.div(coeff, two_k2);
            let corr = geo.field_scale(coeff, &cstar);
            let rhs = geo.field_add(&bar, &corr);
            rows.push(GaussRow { label: format!("v-xi-h({a}{b})"), lhs, rhs });
        }
    }

    // Row 7: R(dbar_a, xi) delbar^b = bar R + (1/K^2) Rb2_ad g^{db} C*
    for a in 0..m {
        for b in 0..m {
            let x = fs.delta_bar[a].clone();
            let xi = fs.xi.clone();
            let zv = fs.del_bar[b].clone();
            let lhs = geo.curvature_op(&x, &xi, &zv)?;
            let bar = geo.curvature_induced(&x, &xi, &zv)?;
            let mut coeff = z;
            for d in 0..m {
                let t = geo.exprs.mul(rb2_f[a][d], fs.gram_up[d][b]);
                coeff = geo.exprs.add(coeff, t);
            }
            let coeff = geo.exprs.div(coeff, k2);
            let corr = geo.field_scale(coeff, &cstar);
            let rhs = geo.field_add(&bar, &corr);
            rows.push(GaussRow { label: format!("h-xi-v({a}{b})"), lhs, rhs });
        }
    }

    Ok(GaussRelationForms { rows })
}

impl GaussRelationForms {
    /// Max componentwise residual per row at one point.
    pub fn residuals_at(
        &self,
        geo: &CartanGeometry,
        pt: &PhasePoint,
    ) -> Result<Vec<(String, f64)>> {
        let mut ev = Evaluator::new();
        ev.begin_point(&geo.exprs);
        let mut out = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let mut worst = 0.0f64;
            for i in 0..geo.dim {
                let a = ev.eval(&geo.exprs, row.lhs.h[i], pt)?;
                let b = ev.eval(&geo.exprs, row.rhs.h[i], pt)?;
                worst = worst.max((a - b).abs());
                let a = ev.eval(&geo.exprs, row.lhs.v[i], pt)?;
                let b = ev.eval(&geo.exprs, row.rhs.v[i], pt)?;
                worst = worst.max((a - b).abs());
            }
            out.push((row.label.clone(), worst));
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Contact structure on the unit shell
// ---------------------------------------------------------------------------

/// The contact structure data at an indicatrix point: the endomorphism
/// `phi` (`-J` on the contact distribution, `phi(xi) = 0`), the Liouville
/// form, and membership in the contact distribution
/// `D = {X : G(X, xi) = G(X, C*) = 0}`.
pub struct ContactData<'a> {
    pub ts: &'a CartanTensorSet,
    pub fr: &'a OrthoFrame,
}

impl ContactData<'_> {
    pub fn phi(&self, x: &TangentVector) -> Result<TangentVector> {
        phi_apply(self.ts, x)
    }

    pub fn omega(&self, x: &TangentVector) -> f64 {
        omega_eval(self.ts, x)
    }

    /// Distance of `x` from the contact distribution: max of the two
    /// defining pairings (scaled).
    pub fn distribution_defect(&self, x: &TangentVector) -> Result<f64> {
        let gxi = sasaki_metric_apply(self.ts, x, &self.fr.xi)?;
        let gc = sasaki_metric_apply(self.ts, x, &self.fr.cstar)?;
        Ok((gxi.abs().max(gc.abs())) / self.ts.k2.max(1.0))
    }
}

/// Apply the contact endomorphism `phi = -J` on the contact distribution,
/// `phi(xi) = 0`, to a tangent vector.
pub fn phi_apply(ts: &CartanTensorSet, x: &TangentVector) -> Result<TangentVector> {
    let j = crate::tensors::almost_complex_apply(ts, x)?;
    let n = ts.dim();
    // omega(X) and G(X, C*)
    let mut om = 0.0;
    let mut gc = 0.0;
    for i in 0..n {
        om += ts.at.p[i] * x.h[i];
        gc += ts.ell[i] * x.v[i];
    }
    let mut out = TangentVector::zero(ts.at.clone());
    for i in 0..n {
        // -J(X) - (omega/K^2) C* + (G(X,C*)/K^2) xi
        out.h[i] = -j.h[i] + gc / ts.k2 * ts.ell[i];
        out.v[i] = -j.v[i] - om / ts.k2 * ts.at.p[i];
    }
    Ok(out)
}

/// Liouville form value.
pub fn omega_eval(ts: &CartanTensorSet, x: &TangentVector) -> f64 {
    let mut om = 0.0;
    for i in 0..ts.dim() {
        om += ts.at.p[i] * x.h[i];
    }
    om
}

/// Residuals of the contact axioms at one indicatrix point, evaluated on a
/// supplied set of tangent vectors (typically the frame plus random
/// contact-distribution vectors).
#[derive(Debug, Clone, Default)]
pub struct ContactResiduals {
    /// `phi(xi)`
    pub phi_xi: f64,
    /// `phi^2 + I - xi (x) omega` on tangent vectors
    pub phi_square: f64,
    /// `omega(phi X)`
    pub omega_phi: f64,
    /// `d omega(X,Y) - G(X, phi Y)` on the contact distribution
    pub d_omega_match: f64,
    /// `G(phi X, phi Y) - G(X, Y) + omega(X) omega(Y)`
    pub compatibility: f64,
    /// `omega(xi) - K^2`
    pub omega_xi: f64,
}

pub fn contact_axioms_check(
    ts: &CartanTensorSet,
    fr: &OrthoFrame,
    tangents: &[TangentVector],
    contact_vectors: &[TangentVector],
) -> Result<ContactResiduals> {
    let n = ts.dim();
    let mut r = ContactResiduals::default();

    let xi = fr.xi.clone();
    let phi_of_xi = phi_apply(ts, &xi)?;
    for i in 0..n {
        r.phi_xi = r.phi_xi.max(phi_of_xi.h[i].abs()).max(phi_of_xi.v[i].abs());
    }
    r.omega_xi = (omega_eval(ts, &xi) - ts.k2).abs();

    for x in tangents.iter().chain(contact_vectors.iter()) {
        let px = phi_apply(ts, x)?;
        let ppx = phi_apply(ts, &px)?;
        let om = omega_eval(ts, x);
        for i in 0..n {
            let want_h = -x.h[i] + xi.h[i] * om;
            let want_v = -x.v[i] + xi.v[i] * om;
            r.phi_square = r
                .phi_square
                .max((ppx.h[i] - want_h).abs())
                .max((ppx.v[i] - want_v).abs());
        }
        r.omega_phi = r.omega_phi.max(omega_eval(ts, &px).abs());
    }

    for x in contact_vectors {
        for y in contact_vectors {
            let py = phi_apply(ts, y)?;
            let saspy = sasaki_metric_apply(ts, x, &py)?;
            let dom = symplectic_eval(ts, x, y)?;
            r.d_omega_match = r.d_omega_match.max((dom - saspy).abs());
            let px = phi_apply(ts, x)?;
            let gpp = sasaki_metric_apply(ts, &px, &py)?;
            let gxy = sasaki_metric_apply(ts, x, y)?;
            let omx = omega_eval(ts, x);
            let omy = omega_eval(ts, y);
            r.compatibility = r.compatibility.max((gpp - gxy + omx * omy).abs());
        }
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// Sasakian obstruction
// ---------------------------------------------------------------------------

/// Symbolic `phi` on a field:
/// `phi(W) = -J(W) - (omega(W)/K^2) C* + (G(W,C*)/K^2) xi`.
fn phi_field(geo: &mut CartanGeometry, w: &SymField) -> Result<SymField> {
    let n = geo.dim;
    let jw = geo.j_apply_sym(w)?;
    let om = geo.omega_sym(w);
    let om_over = geo.exprs.div(om, geo.k2);
    let ell = geo.full()?.ell.clone();
    let mut gc = geo.exprs.zero();
    for i in 0..n {
        let t = geo.exprs.mul(w.v[i], ell[i]);
        gc = geo.exprs.add(gc, t);
    }
    let gc_over = geo.exprs.div(gc, geo.k2);
    let mut out = SymField::zero(geo);
    for i in 0..n {
        let t = geo.exprs.mul(gc_over, ell[i]);
        out.h[i] = geo.exprs.sub(t, jw.h[i]);
        let pi = geo.exprs.var(Var::momentum(i));
        let t = geo.exprs.mul(om_over, pi);
        let neg = geo.exprs.add(jw.v[i], t);
        out.v[i] = geo.exprs.neg(neg);
    }
    Ok(out)
}

/// `tilde nabla_X Y` on the unit shell, with `eta = omega`, the metric the
/// restriction of `G`, and the connection the induced one:
/// `bar nabla_X Y - omega(X) bar nabla_Y xi - omega(Y) bar nabla_X xi
///  + (d omega(X,Y) + 1/2 L_xi G(X,Y)) xi`.
fn tilde_nabla(
    geo: &mut CartanGeometry,
    x: &SymField,
    y: &SymField,
    xi: &SymField,
) -> Result<SymField> {
    let base = geo.cov_derivative_induced(x, y)?;
    let nxxi = geo.cov_derivative_induced(x, xi)?;
    let nyxi = geo.cov_derivative_induced(y, xi)?;
    let omx = geo.omega_sym(x);
    let omy = geo.omega_sym(y);
    let t1 = geo.field_scale(omx, &nyxi);
    let t2 = geo.field_scale(omy, &nxxi);
    let dom = geo.symplectic_sym(x, y);
    let lx = geo.pair_sym(&nxxi, y)?;
    let ly = geo.pair_sym(x, &nyxi)?;
    let lie = geo.exprs.add(lx, ly);
    let half = geo.exprs.num(0.5);
    let lie_half = geo.exprs.mul(half, lie);
    let coeff = geo.exprs.add(dom, lie_half);
    let t3 = geo.field_scale(coeff, xi);
    let s1 = geo.field_sub(&base, &t1);
    let s2 = geo.field_sub(&s1, &t2);
    Ok(geo.field_add(&s2, &t3))
}

/// `(tilde nabla_X phi) Y = tilde nabla_X (phi Y) - phi(tilde nabla_X Y)`.
pub fn sasakian_defect_field(
    geo: &mut CartanGeometry,
    x: &SymField,
    y: &SymField,
    xi: &SymField,
) -> Result<SymField> {
    let py = phi_field(geo, y)?;
    let t1 = tilde_nabla(geo, x, &py, xi)?;
    let txy = tilde_nabla(geo, x, y, xi)?;
    let t2 = phi_field(geo, &txy)?;
    Ok(geo.field_sub(&t1, &t2))
}

/// Obstruction data for the Sasakian question on the unit shell.
pub struct SasakianForms {
    /// `(pair label, defect field)` over contact-frame pairs
    pub defects: Vec<(FrameVec, FrameVec, SymField)>,
}

pub fn sasakian_forms(geo: &mut CartanGeometry, bundle: &FrameBundle) -> Result<SasakianForms> {
    let m = geo.dim - 1;
    let xi = bundle.fs.xi.clone();
    let mut pairs: Vec<(FrameVec, SymField)> = Vec::new();
    for a in 0..m {
        pairs.push((FrameVec::DeltaBar(a), bundle.fs.delta_bar[a].clone()));
        pairs.push((FrameVec::DelBar(a), bundle.fs.del_bar[a].clone()));
    }
    let mut defects = Vec::new();
    for (fx, xf) in &pairs {
        for (fy, yf) in &pairs {
            let d = sasakian_defect_field(geo, xf, yf, &xi)?;
            defects.push((*fx, *fy, d));
        }
    }
    Ok(SasakianForms { defects })
}

/// Pointwise obstruction report.
#[derive(Debug, Clone)]
pub struct SasakianReport {
    /// max Sasaki norm of `(tilde nabla_X phi) Y` over contact-frame pairs
    pub max_norm: f64,
    /// `G((tilde nabla_{delbar^a} phi) delbar^b, xi)/K^2` matrix
    pub xi_component_vv: DMatrix<f64>,
    /// `G((tilde nabla_{dbar_a} phi) dbar_b, xi)/K^2` matrix
    pub xi_component_hh: DMatrix<f64>,
}

pub fn sasakian_obstruction(
    geo: &CartanGeometry,
    forms: &SasakianForms,
    ts: &CartanTensorSet,
) -> Result<SasakianReport> {
    let n = geo.dim;
    let m = n - 1;
    let mut ev = Evaluator::new();
    ev.begin_point(&geo.exprs);
    let mut max_norm = 0.0f64;
    let mut xi_vv = DMatrix::zeros(m, m);
    let mut xi_hh = DMatrix::zeros(m, m);
    for (fx, fy, d) in &forms.defects {
        let w = d.at(geo, &mut ev, &ts.at)?;
        let norm2 = sasaki_metric_apply(ts, &w, &w)?;
        max_norm = max_norm.max(norm2.max(0.0).sqrt());
        // xi component: G(W, xi)/K^2 = (p . W_h)/K^2
        let mut om = 0.0;
        for i in 0..n {
            om += ts.at.p[i] * w.h[i];
        }
        let xi_comp = om / ts.k2;
        match (fx, fy) {
            (FrameVec::DelBar(a), FrameVec::DelBar(b)) => xi_vv[(*a, *b)] = xi_comp,
            (FrameVec::DeltaBar(a), FrameVec::DeltaBar(b)) => xi_hh[(*a, *b)] = xi_comp,
            _ => {}
        }
    }
    Ok(SasakianReport { max_norm, xi_component_vv: xi_vv, xi_component_hh: xi_hh })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{choose_pivot, frame_at};
    use crate::metric::MetricKind;

    fn pt(x: Vec<f64>, p: Vec<f64>) -> PhasePoint {
        PhasePoint::new(x, p).unwrap()
    }

    fn euclidean() -> CartanGeometry {
        CartanGeometry::new("p1^2 + p2^2", 2, MetricKind::KSquared).unwrap()
    }

    fn hyperbolic() -> CartanGeometry {
        CartanGeometry::new("x2^2 * (p1^2 + p2^2)", 2, MetricKind::KSquared).unwrap()
    }

    fn randers() -> CartanGeometry {
        CartanGeometry::new("sqrt(p1^2+p2^2) + 0.1*p1", 2, MetricKind::K).unwrap()
    }

    fn bundle_at(geo: &mut CartanGeometry, at: &PhasePoint) -> (FrameBundle, OrthoFrame) {
        let (_, _, _, ell) = geo.fundamental_metrics(at).unwrap();
        let (pivot, margin) = choose_pivot(&ell).unwrap();
        let bundle = FrameBundle::build(geo, pivot, false).unwrap();
        let fr = frame_at(geo, &bundle.fs, at, margin).unwrap();
        (bundle, fr)
    }

    #[test]
    fn projection_is_idempotent_and_on_shell() {
        let geo = hyperbolic();
        let raw = pt(vec![0.2, 1.7], vec![0.9, -0.4]);
        let ip = IndicatrixPoint::project(&geo, &raw, 1.0).unwrap();
        let (k, _, _, _) = geo.fundamental_metrics(&ip.pt).unwrap();
        assert!((k - 1.0).abs() < 1e-12);
        let ip2 = IndicatrixPoint::project(&geo, &ip.pt, 1.0).unwrap();
        for i in 0..2 {
            assert!((ip2.pt.p[i] - ip.pt.p[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn second_fundamental_form_values() {
        // H(delbar^a, delbar^b) = -(1/K^2) g^{ab}; H(xi, xi) = 0;
        // mixed (dbar, delbar) rows have no normal part
        for (mut geo, raw) in [
            (euclidean(), pt(vec![0.0, 0.0], vec![1.0, 0.0])),
            (hyperbolic(), pt(vec![0.0, 1.0], vec![0.28, 0.96])),
            (randers(), pt(vec![0.0, 0.0], vec![1.0, 0.3])),
        ] {
            let ip = IndicatrixPoint::project(&geo, &raw, 1.0).unwrap();
            let ts = geo.tensor_set(&ip.pt).unwrap();
            let (bundle, fr) = bundle_at(&mut geo, &ip.pt);
            let m = geo.dim - 1;
            for a in 0..m {
                for b in 0..m {
                    let x = fr.vector(FrameVec::DelBar(a));
                    let y = fr.vector(FrameVec::DelBar(b));
                    let lam = second_fundamental_form(&geo, &bundle, &ts, &fr, &ip, &x, &y).unwrap();
                    let want = -fr.g_frame_up[(a, b)] / ts.k2;
                    assert!((lam - want).abs() < 1e-9, "H coeff {lam} vs {want}");
                    let mixed =
                        second_fundamental_form(&geo, &bundle, &ts, &fr, &ip, &fr.xi, &y).unwrap();
                    assert!(mixed.abs() < 1e-9);
                }
            }
            let hxx = second_fundamental_form(&geo, &bundle, &ts, &fr, &ip, &fr.xi, &fr.xi).unwrap();
            assert!(hxx.abs() < 1e-10);
            // non-tangent input is rejected
            let bad = fr.cstar.clone();
            assert!(matches!(
                second_fundamental_form(&geo, &bundle, &ts, &fr, &ip, &bad, &fr.xi),
                Err(Error::NonTangent { .. })
            ));
        }
    }

    #[test]
    fn induced_connection_is_tangent() {
        let mut geo = hyperbolic();
        let ip = IndicatrixPoint::project(&geo, &pt(vec![0.1, 1.2], vec![0.7, 0.4]), 1.0).unwrap();
        let ts = geo.tensor_set(&ip.pt).unwrap();
        let (bundle, fr) = bundle_at(&mut geo, &ip.pt);
        for x in [fr.vector(FrameVec::DelBar(0)), fr.vector(FrameVec::DeltaBar(0)), fr.xi.clone()] {
            for y in [fr.vector(FrameVec::DelBar(0)), fr.vector(FrameVec::DeltaBar(0))] {
                let w = induced_connection(&geo, &bundle, &ts, &fr, &ip, &x, &y).unwrap();
                let mut acc = 0.0;
                for i in 0..2 {
                    acc += ts.ell[i] * w.v[i];
                }
                assert!(acc.abs() / ts.k2 < 1e-8, "not tangent: {acc}");
            }
        }
    }

    #[test]
    fn symplectic_canonical_pairing() {
        let geo = euclidean();
        let at = pt(vec![0.3, 0.1], vec![0.8, 0.6]);
        let ts = geo.tensor_set(&at).unwrap();
        let n = 2;
        // theta(d^i, d/dx^j) = delta^i_j ; antisymmetry theta(X, X) = 0
        for i in 0..n {
            for j in 0..n {
                let mut x = TangentVector::zero(at.clone());
                x.v[i] = 1.0;
                let mut y = TangentVector::zero(at.clone());
                y.h[j] = 1.0;
                let v = symplectic_eval(&ts, &x, &y).unwrap();
                let want = if i == j { 1.0 } else { 0.0 };
                assert_eq!(v, want);
                assert_eq!(symplectic_eval(&ts, &x, &x).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn d_omega_equals_minus_g_j() {
        // d omega(X, Y) = -G(X, JY) at random-ish tangent vectors
        let geo = hyperbolic();
        let at = pt(vec![0.2, 0.9], vec![0.5, 0.8]);
        let ts = geo.tensor_set(&at).unwrap();
        let vecs = [
            TangentVector::new(
                DVector::from_vec(vec![0.3, -0.7]),
                DVector::from_vec(vec![0.2, 0.5]),
                at.clone(),
            ),
            TangentVector::new(
                DVector::from_vec(vec![-1.1, 0.4]),
                DVector::from_vec(vec![0.9, -0.3]),
                at.clone(),
            ),
        ];
        for x in &vecs {
            for y in &vecs {
                let jy = crate::tensors::almost_complex_apply(&ts, y).unwrap();
                let rhs = -sasaki_metric_apply(&ts, x, &jy).unwrap();
                let lhs = symplectic_eval(&ts, x, y).unwrap();
                assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn gauss_relations_hold() {
        for (mut geo, raw) in [
            (euclidean(), pt(vec![0.0, 0.0], vec![1.0, 0.35])),
            (hyperbolic(), pt(vec![0.3, 1.1], vec![0.8, 0.3])),
            (randers(), pt(vec![0.0, 0.0], vec![1.0, 0.25])),
        ] {
            let ip = IndicatrixPoint::project(&geo, &raw, 1.0).unwrap();
            let (bundle, _) = bundle_at(&mut geo, &ip.pt);
            let forms = gauss_relation_forms(&mut geo, &bundle).unwrap();
            let residuals = forms.residuals_at(&geo, &ip.pt).unwrap();
            for (label, r) in residuals {
                assert!(r < 1e-5, "relation {label} residual {r}");
            }
        }
    }

    #[test]
    fn euclidean_fiber_sphere_curvature() {
        // with a flat ambient space, the level-set curvature on the fiber
        // pair is forced: bar R(delbar^a, delbar^b) delbar^c
        // = -(1/K^2)(g^{ac} delbar^b - g^{bc} delbar^a)
        let mut geo = euclidean();
        let ip = IndicatrixPoint::project(&geo, &pt(vec![0.0, 0.0], vec![0.6, 0.8]), 1.0).unwrap();
        let (bundle, _fr) = bundle_at(&mut geo, &ip.pt);
        let x = bundle.fs.del_bar[0].clone();
        let bar = geo.curvature_induced(&x.clone(), &x.clone(), &x.clone()).unwrap();
        // with a single frame direction (n = 2) the antisymmetric combination
        // vanishes identically
        let mut ev = Evaluator::new();
        ev.begin_point(&geo.exprs);
        for i in 0..2 {
            assert!(ev.eval(&geo.exprs, bar.h[i], &ip.pt).unwrap().abs() < 1e-10);
            assert!(ev.eval(&geo.exprs, bar.v[i], &ip.pt).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn contact_axioms_on_unit_shell() {
        for (mut geo, raw) in [
            (euclidean(), pt(vec![0.0, 0.0], vec![1.0, 0.3])),
            (hyperbolic(), pt(vec![0.4, 1.3], vec![0.7, 0.2])),
            (randers(), pt(vec![0.0, 0.0], vec![1.0, 0.28])),
        ] {
            let ip = IndicatrixPoint::project(&geo, &raw, 1.0).unwrap();
            let ts = geo.tensor_set(&ip.pt).unwrap();
            let (_bundle, fr) = bundle_at(&mut geo, &ip.pt);
            let m = geo.dim - 1;
            let mut tangents = vec![fr.xi.clone()];
            let mut contact = Vec::new();
            for a in 0..m {
                tangents.push(fr.vector(FrameVec::DeltaBar(a)));
                tangents.push(fr.vector(FrameVec::DelBar(a)));
                contact.push(fr.vector(FrameVec::DeltaBar(a)));
                contact.push(fr.vector(FrameVec::DelBar(a)));
            }
            // a couple of mixed contact vectors
            let mix = TangentVector::new(
                &fr.vector(FrameVec::DeltaBar(0)).h * 0.7 + &fr.vector(FrameVec::DelBar(0)).h * 0.2,
                &fr.vector(FrameVec::DeltaBar(0)).v * 0.7 + &fr.vector(FrameVec::DelBar(0)).v * 0.2,
                ip.pt.clone(),
            );
            contact.push(mix);
            let r = contact_axioms_check(&ts, &fr, &tangents, &contact).unwrap();
            assert!(r.phi_xi < 1e-10, "{r:?}");
            assert!(r.phi_square < 1e-9, "{r:?}");
            assert!(r.omega_phi < 1e-9, "{r:?}");
            assert!(r.d_omega_match < 1e-8, "{r:?}");
            assert!(r.compatibility < 1e-8, "{r:?}");
            assert!(r.omega_xi < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn sasakian_obstruction_euclidean_halves() {
        // on the flat dual the xi components of the defect are exactly
        // -(1/2) g_ab (horizontal pair) and -(1/2) g^ab (vertical pair)
        let mut geo = euclidean();
        let ip = IndicatrixPoint::project(&geo, &pt(vec![0.0, 0.0], vec![1.0, 0.0]), 1.0).unwrap();
        let ts = geo.tensor_set(&ip.pt).unwrap();
        let (bundle, fr) = bundle_at(&mut geo, &ip.pt);
        let forms = sasakian_forms(&mut geo, &bundle).unwrap();
        let rep = sasakian_obstruction(&geo, &forms, &ts).unwrap();
        assert!(
            (rep.xi_component_vv[(0, 0)] + 0.5 * fr.g_frame_up[(0, 0)]).abs() < 1e-9,
            "vv xi component {}",
            rep.xi_component_vv[(0, 0)]
        );
        assert!(
            (rep.xi_component_hh[(0, 0)] + 0.5 * fr.g_frame_down[(0, 0)]).abs() < 1e-9,
            "hh xi component {}",
            rep.xi_component_hh[(0, 0)]
        );
        assert!(rep.max_norm > 0.49);
    }

    #[test]
    fn sasakian_obstruction_positive_all_metrics() {
        for (mut geo, raw) in [
            (euclidean(), pt(vec![0.0, 0.0], vec![0.9, 0.42])),
            (hyperbolic(), pt(vec![0.2, 1.2], vec![0.6, 0.3])),
            (randers(), pt(vec![0.0, 0.0], vec![1.0, 0.31])),
        ] {
            let ip = IndicatrixPoint::project(&geo, &raw, 1.0).unwrap();
            let ts = geo.tensor_set(&ip.pt).unwrap();
            let (bundle, _) = bundle_at(&mut geo, &ip.pt);
            let forms = sasakian_forms(&mut geo, &bundle).unwrap();
            let rep = sasakian_obstruction(&geo, &forms, &ts).unwrap();
            assert!(rep.max_norm > 0.25, "obstruction too small: {}", rep.max_norm);
        }
    }

    #[test]
    fn scan_shift_identities() {
        // Shifting the second argument by a constant multiple of xi never
        // changes the defect ((tilde nabla_X phi) xi = 0 pointwise on the
        // unit shell). Shifting the first argument contributes exactly
        // f (tilde nabla_xi phi) Y, which vanishes precisely on shells
        // where xi is Killing; the full difference must match that term.
        let mut geo = hyperbolic();
        let ip = IndicatrixPoint::project(&geo, &pt(vec![0.0, 1.05], vec![0.75, 0.3]), 1.0).unwrap();
        let (bundle, _) = bundle_at(&mut geo, &ip.pt);
        let xi = bundle.fs.xi.clone();
        let x0 = bundle.fs.delta_bar[0].clone();
        let y0 = bundle.fs.del_bar[0].clone();
        let base = sasakian_defect_field(&mut geo, &x0, &y0, &xi).unwrap();
        let xi_slot = sasakian_defect_field(&mut geo, &xi, &y0, &xi).unwrap();
        for (f, g) in [(0.7, -0.4), (-1.3, 0.9)] {
            let fc = geo.exprs.num(f);
            let gc = geo.exprs.num(g);
            let fxi = geo.field_scale(fc, &xi);
            let gxi = geo.field_scale(gc, &xi);
            let xs = geo.field_add(&x0, &fxi);
            let ys = geo.field_add(&y0, &gxi);
            let shifted = sasakian_defect_field(&mut geo, &xs, &ys, &xi).unwrap();
            let diff = geo.field_sub(&shifted, &base);
            let expected = geo.field_scale(fc, &xi_slot);
            let resid = geo.field_sub(&diff, &expected);
            let mut ev = Evaluator::new();
            ev.begin_point(&geo.exprs);
            for i in 0..2 {
                let h = ev.eval(&geo.exprs, resid.h[i], &ip.pt).unwrap();
                let v = ev.eval(&geo.exprs, resid.v[i], &ip.pt).unwrap();
                assert!(h.abs() < 1e-8 && v.abs() < 1e-8, "shift identity broke: {h} {v}");
            }
        }
    }
}
