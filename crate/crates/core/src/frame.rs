//! The orthogonal frame `{xi, dbar/dbar x^a, C*, dbar^a}` adapted to the
//! Liouville-Hamilton direction: pivot-frozen symbolic construction, frame
//! metric, the eight Lie-bracket rows, the Levi-Civita components in the
//! frame, and frame-projected tensors.
//!
//! The frame rows `E^a` span the annihilator of `l^i = g^ij p_j` among
//! vertical components. The pivot index is chosen numerically at a sample
//! point and then frozen, so `E` is a smooth (symbolic) local frame around
//! that point; points too close to a pivot switch are rejected for
//! derivative-bearing checks.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{Evaluator, ExprId, PhasePoint, Var};
use crate::fields::SymField;
use crate::tensors::{sym_inverse, CartanGeometry, CartanTensorSet, SymMat, TangentVector};

/// Pivot-margin threshold: the runner-up `|l^i|` must stay below this
/// fraction of the pivot for a point to carry derivative-bearing checks.
pub const PIVOT_MARGIN: f64 = 0.9;

/// Frame vector labels in table order `xi, dbar_a.., C*, delbar^a..`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum FrameVec {
    Xi,
    DeltaBar(usize),
    Cstar,
    DelBar(usize),
}

/// All `2n` frame vectors in canonical order.
pub fn frame_order(n: usize) -> Vec<FrameVec> {
    let mut v = Vec::with_capacity(2 * n);
    v.push(FrameVec::Xi);
    for a in 0..n - 1 {
        v.push(FrameVec::DeltaBar(a));
    }
    v.push(FrameVec::Cstar);
    for a in 0..n - 1 {
        v.push(FrameVec::DelBar(a));
    }
    v
}

/// Symbolic frame data for one frozen pivot (and optional alternate
/// admissible row mix).
pub struct FrameSymbols {
    pub pivot: usize,
    pub alternate: bool,
    /// `E_i^a`, rows `a = 0..n-1`.
    pub e: Vec<Vec<ExprId>>,
    /// `Ebar_a^i`, rows `a = 0..n-1`.
    pub ebar: Vec<Vec<ExprId>>,
    /// `g^ab = E_i^a g^ij E_j^b` and its inverse `g_ab`.
    pub gram_up: SymMat,
    pub gram_down: SymMat,
    pub xi: SymField,
    pub cstar: SymField,
    pub delta_bar: Vec<SymField>,
    pub del_bar: Vec<SymField>,
}

impl FrameSymbols {
    /// Build the frame symbols for a frozen pivot. `alternate` applies a
    /// fixed rotation to the rows of `E` (another admissible frame for the
    /// same distribution; frame-invariant verdicts must not change).
    pub fn build(geo: &mut CartanGeometry, pivot: usize, alternate: bool) -> Result<Self> {
        let n = geo.dim;
        if pivot >= n {
            return Err(Error::Config(format!("pivot {pivot} out of range for dim {n}")));
        }
        let ell = geo.full()?.ell.clone();
        let g_up = geo.g_up.clone();
        let ctx = &mut geo.exprs;

        // raw rows: for each non-pivot coordinate index, e_idx - (l^idx/l^m) e_m
        let mut raw: Vec<Vec<ExprId>> = Vec::with_capacity(n - 1);
        for idx in 0..n {
            if idx == pivot {
                continue;
            }
            let mut row = vec![ctx.zero(); n];
            row[idx] = ctx.one();
            let ratio = ctx.div(ell[idx], ell[pivot]);
            row[pivot] = ctx.neg(ratio);
            raw.push(row);
        }
        // optional admissible remix of the rows
        let e: Vec<Vec<ExprId>> = if !alternate || n == 2 {
            if alternate {
                // one row only: flip its sign
                let mut row = vec![ctx.zero(); n];
                for i in 0..n {
                    row[i] = ctx.neg(raw[0][i]);
                }
                vec![row]
            } else {
                raw
            }
        } else {
            // rotate row pairs by a fixed angle
            let c = ctx.num(0.5f64.sqrt());
            let mut out = raw.clone();
            for pair in 0..(n - 1) / 2 + usize::from((n - 1) % 2 == 0) {
                let (r0, r1) = (2 * pair, 2 * pair + 1);
                if r1 >= n - 1 {
                    break;
                }
                for i in 0..n {
                    let a = raw[r0][i];
                    let b = raw[r1][i];
                    let ca = ctx.mul(c, a);
                    let cb = ctx.mul(c, b);
                    out[r0][i] = ctx.sub(ca, cb);
                    out[r1][i] = ctx.add(ca, cb);
                }
            }
            out
        };

        // frame Gram matrix g^ab = E_i^a g^ij E_j^b
        let m = n - 1;
        let mut gram_up = vec![vec![ctx.zero(); m]; m];
        for a in 0..m {
            for b in a..m {
                let mut acc = ctx.zero();
                for i in 0..n {
                    for j in 0..n {
                        let t = ctx.mul(e[a][i], g_up[i][j]);
                        let t = ctx.mul(t, e[b][j]);
                        acc = ctx.add(acc, t);
                    }
                }
                gram_up[a][b] = acc;
                gram_up[b][a] = acc;
            }
        }
        let (_, gram_down) = sym_inverse(ctx, &gram_up)?;

        // Ebar_a^i = E_j^b g_ba g^ji
        let mut ebar = vec![vec![ctx.zero(); n]; m];
        for a in 0..m {
            for i in 0..n {
                let mut acc = ctx.zero();
                for b in 0..m {
                    for j in 0..n {
                        let t = ctx.mul(e[b][j], gram_down[b][a]);
                        let t = ctx.mul(t, g_up[j][i]);
                        acc = ctx.add(acc, t);
                    }
                }
                ebar[a][i] = acc;
            }
        }

        let z = ctx.zero();
        let xi = SymField { h: ell.clone(), v: vec![z; n] };
        let mut cstar = SymField { h: vec![z; n], v: vec![z; n] };
        for i in 0..n {
            cstar.v[i] = ctx.var(Var::momentum(i));
        }
        let delta_bar: Vec<SymField> = (0..m)
            .map(|a| SymField { h: ebar[a].clone(), v: vec![z; n] })
            .collect();
        let del_bar: Vec<SymField> = (0..m)
            .map(|a| SymField { h: vec![z; n], v: e[a].clone() })
            .collect();

        Ok(FrameSymbols {
            pivot,
            alternate,
            e,
            ebar,
            gram_up,
            gram_down,
            xi,
            cstar,
            delta_bar,
            del_bar,
        })
    }

    pub fn field(&self, which: FrameVec) -> &SymField {
        match which {
            FrameVec::Xi => &self.xi,
            FrameVec::Cstar => &self.cstar,
            FrameVec::DeltaBar(a) => &self.delta_bar[a],
            FrameVec::DelBar(a) => &self.del_bar[a],
        }
    }

    /// Natural components of the frame field at a (nearby) point, for the
    /// numeric Lie-bracket oracle. The pivot stays frozen.
    pub fn natural_components(
        &self,
        geo: &CartanGeometry,
        which: FrameVec,
        q: &PhasePoint,
    ) -> Result<Vec<f64>> {
        let n = geo.dim;
        let f = self.field(which);
        let mut ev = Evaluator::new();
        ev.begin_point(&geo.exprs);
        let mut out = vec![0.0; 2 * n];
        let nconn = &geo.full()?.nconn;
        for i in 0..n {
            let h = ev.eval(&geo.exprs, f.h[i], q)?;
            out[i] = h;
            out[n + i] += ev.eval(&geo.exprs, f.v[i], q)?;
            for j in 0..n {
                out[n + j] += ev.eval(&geo.exprs, nconn[i][j], q)? * h;
            }
        }
        Ok(out)
    }
}

/// Numeric frame data at a point.
pub struct OrthoFrame {
    pub at: PhasePoint,
    pub pivot: usize,
    pub alternate: bool,
    /// runner-up `|l|` over pivot `|l|`
    pub margin: f64,
    pub e: DMatrix<f64>,
    pub ebar: DMatrix<f64>,
    pub g_frame_up: DMatrix<f64>,
    pub g_frame_down: DMatrix<f64>,
    pub xi: TangentVector,
    pub cstar: TangentVector,
}

impl OrthoFrame {
    pub fn rows(&self) -> usize {
        self.e.nrows()
    }

    pub fn margin_ok(&self) -> bool {
        self.margin <= PIVOT_MARGIN
    }

    /// Adapted components of a frame vector.
    pub fn vector(&self, which: FrameVec) -> TangentVector {
        let n = self.at.dim();
        match which {
            FrameVec::Xi => self.xi.clone(),
            FrameVec::Cstar => self.cstar.clone(),
            FrameVec::DeltaBar(a) => TangentVector::new(
                DVector::from_fn(n, |i, _| self.ebar[(a, i)]),
                DVector::zeros(n),
                self.at.clone(),
            ),
            FrameVec::DelBar(a) => TangentVector::new(
                DVector::zeros(n),
                DVector::from_fn(n, |i, _| self.e[(a, i)]),
                self.at.clone(),
            ),
        }
    }
}

/// Choose the pivot at a point: `argmax_i |l^i|`, ties to the lowest index.
pub fn choose_pivot(ell: &DVector<f64>) -> Result<(usize, f64)> {
    let n = ell.len();
    let l1: f64 = ell.iter().map(|v| v.abs()).sum();
    let mut pivot = 0;
    for i in 1..n {
        if ell[i].abs() > ell[pivot].abs() {
            pivot = i;
        }
    }
    let lmax = ell[pivot].abs();
    if lmax < 1e-8 * l1.max(1.0) {
        return Err(Error::DegenerateFrame { max_ell: lmax });
    }
    let mut runner = 0.0f64;
    for i in 0..n {
        if i != pivot {
            runner = runner.max(ell[i].abs());
        }
    }
    Ok((pivot, runner / lmax))
}

/// Build the numeric frame at a point (the pivot is chosen there).
pub fn build_frame(geo: &mut CartanGeometry, pt: &PhasePoint) -> Result<OrthoFrame> {
    let (_, _, _, ell) = geo.fundamental_metrics(pt)?;
    let (pivot, margin) = choose_pivot(&ell)?;
    let fs = FrameSymbols::build(geo, pivot, false)?;
    frame_at(geo, &fs, pt, margin)
}

/// As [`build_frame`], but reject points whose runner-up momentum-dual
/// component is too close to the pivot; derivative-bearing checks need a
/// safety margin around pivot switches.
pub fn build_frame_strict(geo: &mut CartanGeometry, pt: &PhasePoint) -> Result<OrthoFrame> {
    let fr = build_frame(geo, pt)?;
    if !fr.margin_ok() {
        return Err(Error::PivotMargin { ratio: fr.margin });
    }
    Ok(fr)
}

/// Evaluate frame symbols at a point.
pub fn frame_at(
    geo: &CartanGeometry,
    fs: &FrameSymbols,
    pt: &PhasePoint,
    margin: f64,
) -> Result<OrthoFrame> {
    let n = geo.dim;
    let m = n - 1;
    let mut ev = Evaluator::new();
    ev.begin_point(&geo.exprs);
    let mut e = DMatrix::zeros(m, n);
    let mut ebar = DMatrix::zeros(m, n);
    for a in 0..m {
        for i in 0..n {
            e[(a, i)] = ev.eval(&geo.exprs, fs.e[a][i], pt)?;
            ebar[(a, i)] = ev.eval(&geo.exprs, fs.ebar[a][i], pt)?;
        }
    }
    let mut gup = DMatrix::zeros(m, m);
    let mut gdown = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            gup[(a, b)] = ev.eval(&geo.exprs, fs.gram_up[a][b], pt)?;
            gdown[(a, b)] = ev.eval(&geo.exprs, fs.gram_down[a][b], pt)?;
        }
    }
    let xi = fs.xi.at(geo, &mut ev, pt)?;
    let cstar = fs.cstar.at(geo, &mut ev, pt)?;
    Ok(OrthoFrame {
        at: pt.clone(),
        pivot: fs.pivot,
        alternate: fs.alternate,
        margin,
        e,
        ebar,
        g_frame_up: gup,
        g_frame_down: gdown,
        xi,
        cstar,
    })
}

/// Frame-projected tensors (classification orientation for the curvature).
pub struct FrameTensors {
    /// `R_abc = Ebar^3 r3`
    pub r_abc: Vec<f64>,
    /// `R_ab = Ebar^2 r2`
    pub r_ab: DMatrix<f64>,
    /// `R_a^b = R_ac g^cb`
    pub r_a_up_b: DMatrix<f64>,
    /// `g_abc` projections of the lowered C-tensor
    pub g_abc: Vec<f64>,
    /// `Gamma^c_ab`
    pub gamma_abc: Vec<f64>,
    /// `N^c_ab`
    pub n_abc: Vec<f64>,
    pub m: usize,
}

impl FrameTensors {
    #[inline]
    pub fn idx(&self, a: usize, b: usize, c: usize) -> usize {
        (a * self.m + b) * self.m + c
    }
}

/// Project the pointwise tensors onto the frame.
pub fn frame_tensors(ts: &CartanTensorSet, fr: &OrthoFrame) -> FrameTensors {
    let n = ts.dim();
    let m = n - 1;
    let mut r_abc = vec![0.0; m * m * m];
    let mut g_abc = vec![0.0; m * m * m];
    let mut gamma_abc = vec![0.0; m * m * m];
    let mut n_abc = vec![0.0; m * m * m];
    let mut r_ab = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += fr.ebar[(a, i)] * fr.ebar[(b, j)] * ts.r2[(i, j)];
                }
            }
            r_ab[(a, b)] = acc;
            for c in 0..m {
                let (mut accr, mut accg, mut accgam, mut accn) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let w3 = fr.ebar[(a, i)] * fr.ebar[(b, j)] * fr.ebar[(c, k)];
                            accr += w3 * ts.r3.get(i, j, k);
                            accg += w3 * ts.c_down.get(i, j, k);
                            let wmix = fr.ebar[(a, i)] * fr.ebar[(b, j)] * fr.e[(c, k)];
                            accgam += wmix * ts.gamma.get(k, i, j);
                            accn += wmix * ts.n_up.get(k, i, j);
                        }
                    }
                }
                let at = (a * m + b) * m + c;
                r_abc[at] = accr;
                g_abc[at] = accg;
                gamma_abc[at] = accgam;
                n_abc[at] = accn;
            }
        }
    }
    let r_a_up_b = &r_ab * &fr.g_frame_up;
    FrameTensors { r_abc, r_ab, r_a_up_b, g_abc, gamma_abc, n_abc, m }
}

/// Gram matrix of the full frame under the Sasaki metric, and the block
/// target it must equal: `diag(K^2, g_ab, K^2, g^ab)`.
pub fn frame_gram(
    ts: &CartanTensorSet,
    fr: &OrthoFrame,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = ts.dim();
    let order = frame_order(n);
    let nb = order.len();
    let mut gram = DMatrix::zeros(nb, nb);
    for (r, &fv) in order.iter().enumerate() {
        for (c, &fw) in order.iter().enumerate() {
            let x = fr.vector(fv);
            let y = fr.vector(fw);
            gram[(r, c)] = crate::tensors::sasaki_metric_apply(ts, &x, &y)?;
        }
    }
    let mut target = DMatrix::zeros(nb, nb);
    let m = n - 1;
    target[(0, 0)] = ts.k2;
    target[(m + 1, m + 1)] = ts.k2;
    for a in 0..m {
        for b in 0..m {
            target[(1 + a, 1 + b)] = fr.g_frame_down[(a, b)];
            target[(m + 2 + a, m + 2 + b)] = fr.g_frame_up[(a, b)];
        }
    }
    Ok((gram, target))
}

// ---------------------------------------------------------------------------
// Lie bracket rows: closed forms vs numeric oracle
// ---------------------------------------------------------------------------

/// Symbolic derivative helpers over the frozen-pivot frame.
pub struct FrameDerivatives {
    /// `dbar(Ebar_b^i)/dbar x^a` as `[a][b][i]`
    pub dbar_ebar: Vec<Vec<Vec<ExprId>>>,
    /// `dbar(E_i^b)/dbar x^a` as `[a][b][i]`
    pub dbar_e: Vec<Vec<Vec<ExprId>>>,
    /// `delbar^a(E_i^b)` as `[a][b][i]`
    pub delbar_e: Vec<Vec<Vec<ExprId>>>,
    /// `delbar^a(Ebar_b^i)` as `[a][b][i]`
    pub delbar_ebar: Vec<Vec<Vec<ExprId>>>,
    /// `xi(E_i^a)`, `xi(Ebar_a^i)` as `[a][i]`
    pub xi_e: Vec<Vec<ExprId>>,
    pub xi_ebar: Vec<Vec<ExprId>>,
    /// `C*(E_i^a)`, `C*(Ebar_a^i)` as `[a][i]`
    pub cstar_e: Vec<Vec<ExprId>>,
    pub cstar_ebar: Vec<Vec<ExprId>>,
    /// `dbar(g^{ji})/dbar x^a` contracted with `p_j`: `[a][i]`
    pub p_dbar_gup: Vec<Vec<ExprId>>,
}

pub fn frame_derivatives(geo: &mut CartanGeometry, fs: &FrameSymbols) -> Result<FrameDerivatives> {
    let n = geo.dim;
    let m = n - 1;
    let mut der = FrameDerivatives {
        dbar_ebar: vec![vec![vec![geo.exprs.zero(); n]; m]; m],
        dbar_e: vec![vec![vec![geo.exprs.zero(); n]; m]; m],
        delbar_e: vec![vec![vec![geo.exprs.zero(); n]; m]; m],
        delbar_ebar: vec![vec![vec![geo.exprs.zero(); n]; m]; m],
        xi_e: vec![vec![geo.exprs.zero(); n]; m],
        xi_ebar: vec![vec![geo.exprs.zero(); n]; m],
        cstar_e: vec![vec![geo.exprs.zero(); n]; m],
        cstar_ebar: vec![vec![geo.exprs.zero(); n]; m],
        p_dbar_gup: vec![vec![geo.exprs.zero(); n]; m],
    };
    let g_up = geo.g_up.clone();
    for a in 0..m {
        for b in 0..m {
            for i in 0..n {
                der.dbar_ebar[a][b][i] = {
                    let f = fs.ebar[b][i];
                    let da = dbar_scalar(geo, fs, a, f)?;
                    da
                };
                der.dbar_e[a][b][i] = {
                    let f = fs.e[b][i];
                    dbar_scalar(geo, fs, a, f)?
                };
                der.delbar_e[a][b][i] = delbar_scalar(geo, fs, a, fs.e[b][i])?;
                der.delbar_ebar[a][b][i] = delbar_scalar(geo, fs, a, fs.ebar[b][i])?;
            }
        }
        for i in 0..n {
            der.xi_e[a][i] = {
                let xi = fs.xi.clone();
                geo.apply_field(&xi, fs.e[a][i])?
            };
            der.xi_ebar[a][i] = {
                let xi = fs.xi.clone();
                geo.apply_field(&xi, fs.ebar[a][i])?
            };
            der.cstar_e[a][i] = {
                let c = fs.cstar.clone();
                geo.apply_field(&c, fs.e[a][i])?
            };
            der.cstar_ebar[a][i] = {
                let c = fs.cstar.clone();
                geo.apply_field(&c, fs.ebar[a][i])?
            };
            let mut acc = geo.exprs.zero();
            for j in 0..n {
                let d = dbar_scalar(geo, fs, a, g_up[j][i])?;
                let pj = geo.exprs.var(Var::momentum(j));
                let t = geo.exprs.mul(pj, d);
                acc = geo.exprs.add(acc, t);
            }
            der.p_dbar_gup[a][i] = acc;
        }
    }
    Ok(der)
}

/// `dbar f / dbar x^a = Ebar_a^k delta f / delta x^k`
fn dbar_scalar(geo: &mut CartanGeometry, fs: &FrameSymbols, a: usize, f: ExprId) -> Result<ExprId> {
    let n = geo.dim;
    let mut acc = geo.exprs.zero();
    for k in 0..n {
        let d = geo.delta_derivative(f, k)?;
        let t = geo.exprs.mul(fs.ebar[a][k], d);
        acc = geo.exprs.add(acc, t);
    }
    Ok(acc)
}

/// `delbar^a f = E_k^a d f / dp_k`
fn delbar_scalar(
    geo: &mut CartanGeometry,
    fs: &FrameSymbols,
    a: usize,
    f: ExprId,
) -> Result<ExprId> {
    let n = geo.dim;
    let mut acc = geo.exprs.zero();
    for k in 0..n {
        let d = geo.exprs.diff(f, Var::momentum(k))?;
        let t = geo.exprs.mul(fs.e[a][k], d);
        acc = geo.exprs.add(acc, t);
    }
    Ok(acc)
}

/// The eight closed-form bracket rows as symbolic fields in adapted
/// components, keyed by the pair of frame vectors (in the order stated).
pub struct FrameBrackets {
    pub rows: HashMap<(FrameVec, FrameVec), SymField>,
}

/// Build the closed-form right-hand sides of the frame bracket table.
/// The curvature terms carry the bracket orientation.
pub fn frame_bracket_forms(
    geo: &mut CartanGeometry,
    fs: &FrameSymbols,
    der: &FrameDerivatives,
) -> Result<FrameBrackets> {
    let n = geo.dim;
    let m = n - 1;
    let r3b = geo.full()?.r3_bracket.clone();
    let n_up = geo.full()?.n_up.clone();
    let nconn = geo.full()?.nconn.clone();
    let ell = geo.full()?.ell.clone();
    let g_up = geo.g_up.clone();
    let mut rows = HashMap::new();

    // [dbar_a, dbar_b] = (dbar Ebar_b^i/dx^a - dbar Ebar_a^i/dx^b) delta_i
    //                    + Ebar_a^i Ebar_b^j Rbrk_ijs d^s
    for a in 0..m {
        for b in 0..m {
            let mut f = SymField::zero(geo);
            for i in 0..n {
                f.h[i] = geo.exprs.sub(der.dbar_ebar[a][b][i], der.dbar_ebar[b][a][i]);
            }
            for s in 0..n {
                let mut acc = geo.exprs.zero();
                for i in 0..n {
                    for j in 0..n {
                        let w = geo.exprs.mul(fs.ebar[a][i], fs.ebar[b][j]);
                        let t = geo.exprs.mul(w, r3b.get(i, j, s));
                        acc = geo.exprs.add(acc, t);
                    }
                }
                f.v[s] = acc;
            }
            rows.insert((FrameVec::DeltaBar(a), FrameVec::DeltaBar(b)), f);
        }
    }

    // [dbar_a, delbar^b] = (dbar E_i^b/dx^a - Ebar_a^k E_j^b N^j_ki) d^i
    //                      - delbar^b(Ebar_a^i) delta_i
    for a in 0..m {
        for b in 0..m {
            let mut f = SymField::zero(geo);
            for i in 0..n {
                let mut acc = der.dbar_e[a][b][i];
                for k in 0..n {
                    for j in 0..n {
                        let w = geo.exprs.mul(fs.ebar[a][k], fs.e[b][j]);
                        let t = geo.exprs.mul(w, n_up.get(j, k, i));
                        acc = geo.exprs.sub(acc, t);
                    }
                }
                f.v[i] = acc;
                f.h[i] = geo.exprs.neg(der.delbar_ebar[b][a][i]);
            }
            rows.insert((FrameVec::DeltaBar(a), FrameVec::DelBar(b)), f);
        }
    }

    // [delbar^a, delbar^b] = (delbar^a(E_i^b) - delbar^b(E_i^a)) d^i
    for a in 0..m {
        for b in 0..m {
            let mut f = SymField::zero(geo);
            for i in 0..n {
                f.v[i] = geo.exprs.sub(der.delbar_e[a][b][i], der.delbar_e[b][a][i]);
            }
            rows.insert((FrameVec::DelBar(a), FrameVec::DelBar(b)), f);
        }
    }

    // [dbar_a, xi] = (Ebar_a^j N_jk g^{ki} + p_j dbar(g^{ji})/dx^a
    //               - xi(Ebar_a^i)) delta_i + Ebar_a^i l^j Rbrk_ijs d^s
    for a in 0..m {
        let mut f = SymField::zero(geo);
        for i in 0..n {
            let mut acc = der.p_dbar_gup[a][i];
            for j in 0..n {
                for k in 0..n {
                    let w = geo.exprs.mul(fs.ebar[a][j], nconn[j][k]);
                    let t = geo.exprs.mul(w, g_up[k][i]);
                    acc = geo.exprs.add(acc, t);
                }
            }
            f.h[i] = geo.exprs.sub(acc, der.xi_ebar[a][i]);
        }
        for s in 0..n {
            let mut acc = geo.exprs.zero();
            for i in 0..n {
                for j in 0..n {
                    let w = geo.exprs.mul(fs.ebar[a][i], ell[j]);
                    let t = geo.exprs.mul(w, r3b.get(i, j, s));
                    acc = geo.exprs.add(acc, t);
                }
            }
            f.v[s] = acc;
        }
        rows.insert((FrameVec::DeltaBar(a), FrameVec::Xi), f);
    }

    // [delbar^a, xi] = g^{ab} dbar_b + (E_j^a l^h N^j_hi - xi(E_i^a)) d^i
    for a in 0..m {
        let mut f = SymField::zero(geo);
        for i in 0..n {
            let mut acc = geo.exprs.zero();
            for b in 0..m {
                let t = geo.exprs.mul(fs.gram_up[a][b], fs.ebar[b][i]);
                acc = geo.exprs.add(acc, t);
            }
            f.h[i] = acc;
            let mut acc = geo.exprs.zero();
            for j in 0..n {
                for h in 0..n {
                    let w = geo.exprs.mul(fs.e[a][j], ell[h]);
                    let t = geo.exprs.mul(w, n_up.get(j, h, i));
                    acc = geo.exprs.add(acc, t);
                }
            }
            f.v[i] = geo.exprs.sub(acc, der.xi_e[a][i]);
        }
        rows.insert((FrameVec::DelBar(a), FrameVec::Xi), f);
    }

    // [dbar_a, C*] = -C*(Ebar_a^i) delta_i
    for a in 0..m {
        let mut f = SymField::zero(geo);
        for i in 0..n {
            f.h[i] = geo.exprs.neg(der.cstar_ebar[a][i]);
        }
        rows.insert((FrameVec::DeltaBar(a), FrameVec::Cstar), f);
    }

    // [delbar^a, C*] = delbar^a - C*(E_i^a) d^i
    for a in 0..m {
        let mut f = SymField::zero(geo);
        for i in 0..n {
            f.v[i] = geo.exprs.sub(fs.e[a][i], der.cstar_e[a][i]);
        }
        rows.insert((FrameVec::DelBar(a), FrameVec::Cstar), f);
    }

    // [xi, C*] = -xi ; [xi, xi] = [C*, C*] = 0
    let mut f = SymField::zero(geo);
    for i in 0..n {
        f.h[i] = geo.exprs.neg(fs.xi.h[i]);
    }
    rows.insert((FrameVec::Xi, FrameVec::Cstar), f);
    rows.insert((FrameVec::Xi, FrameVec::Xi), SymField::zero(geo));
    rows.insert((FrameVec::Cstar, FrameVec::Cstar), SymField::zero(geo));

    Ok(FrameBrackets { rows })
}

/// Every ordered pair the bracket table covers (the eight row families).
pub fn bracket_pairs(n: usize) -> Vec<(FrameVec, FrameVec)> {
    let m = n - 1;
    let mut pairs: Vec<(FrameVec, FrameVec)> = vec![
        (FrameVec::Xi, FrameVec::Cstar),
        (FrameVec::Xi, FrameVec::Xi),
        (FrameVec::Cstar, FrameVec::Cstar),
    ];
    for a in 0..m {
        pairs.push((FrameVec::DeltaBar(a), FrameVec::Xi));
        pairs.push((FrameVec::DelBar(a), FrameVec::Xi));
        pairs.push((FrameVec::DeltaBar(a), FrameVec::Cstar));
        pairs.push((FrameVec::DelBar(a), FrameVec::Cstar));
        for b in 0..m {
            pairs.push((FrameVec::DeltaBar(a), FrameVec::DeltaBar(b)));
            pairs.push((FrameVec::DeltaBar(a), FrameVec::DelBar(b)));
            pairs.push((FrameVec::DelBar(a), FrameVec::DelBar(b)));
        }
    }
    pairs
}

/// Evaluate the whole bracket table at a point: closed forms vs the
/// numeric Lie-bracket oracle, one residual per row.
pub fn bracket_table_residuals(
    geo: &CartanGeometry,
    fs: &FrameSymbols,
    forms: &FrameBrackets,
    pt: &PhasePoint,
    cfg: &crate::oracle::FdConfig,
) -> Result<Vec<((FrameVec, FrameVec), f64)>> {
    bracket_pairs(geo.dim)
        .into_iter()
        .map(|(x, y)| bracket_row_residual(geo, fs, forms, x, y, pt, cfg).map(|r| ((x, y), r)))
        .collect()
}

/// Residual of one bracket row: closed form vs the numeric Lie-bracket
/// oracle applied to the frozen-pivot frame fields, in adapted components.
pub fn bracket_row_residual(
    geo: &CartanGeometry,
    fs: &FrameSymbols,
    forms: &FrameBrackets,
    x: FrameVec,
    y: FrameVec,
    pt: &PhasePoint,
    cfg: &crate::oracle::FdConfig,
) -> Result<f64> {
    let n = geo.dim;
    let xf = |q: &PhasePoint| fs.natural_components(geo, x, q);
    let yf = |q: &PhasePoint| fs.natural_components(geo, y, q);
    let numeric = crate::oracle::lie_bracket_numeric(&xf, &yf, pt, cfg)?;
    // convert numeric natural components to adapted ones
    let ts = geo.tensor_set(pt)?;
    let mut vh = DVector::zeros(n);
    let mut vv = DVector::zeros(n);
    for i in 0..n {
        vh[i] = numeric[i];
        vv[i] = numeric[n + i];
    }
    for j in 0..n {
        for i in 0..n {
            vv[j] -= ts.nconn[(i, j)] * vh[i];
        }
    }
    let form = forms
        .rows
        .get(&(x, y))
        .ok_or_else(|| Error::Config("bracket row not built".into()))?;
    let mut ev = Evaluator::new();
    ev.begin_point(&geo.exprs);
    let mut resid = 0.0f64;
    for i in 0..n {
        let fh = ev.eval(&geo.exprs, form.h[i], pt)?;
        let fv = ev.eval(&geo.exprs, form.v[i], pt)?;
        resid = resid.max((fh - vh[i]).abs()).max((fv - vv[i]).abs());
    }
    Ok(resid)
}

// ---------------------------------------------------------------------------
// Levi-Civita connection on the frame: projection path and closed forms
// ---------------------------------------------------------------------------

/// Both computation paths for `nabla_{F_x} F_y` over all frame pairs.
/// `proj` applies the natural-basis Levi-Civita tables through the
/// coefficient rule; `form` assembles the closed-form right-hand sides from
/// pre-projected frame tensors. Both are symbolic fields in adapted
/// components.
pub struct FrameConnection {
    pub proj: HashMap<(FrameVec, FrameVec), SymField>,
    pub form: HashMap<(FrameVec, FrameVec), SymField>,
}

impl FrameConnection {
    pub fn get(&self, x: FrameVec, y: FrameVec) -> &SymField {
        &self.proj[&(x, y)]
    }
}

/// Assemble `alpha xi + t^c dbar_c + beta C* + s_c delbar^c` into adapted
/// components.
fn assemble(
    geo: &mut CartanGeometry,
    fs: &FrameSymbols,
    alpha: ExprId,
    t: &[ExprId],
    beta: ExprId,
    s: &[ExprId],
) -> SymField {
    let n = geo.dim;
    let m = n - 1;
    let mut out = SymField::zero(geo);
    for i in 0..n {
        let mut h = geo.exprs.mul(alpha, fs.xi.h[i]);
        for c in 0..m {
            let tc = geo.exprs.mul(t[c], fs.ebar[c][i]);
            h = geo.exprs.add(h, tc);
        }
        out.h[i] = h;
        let pi = geo.exprs.var(Var::momentum(i));
        let mut v = geo.exprs.mul(beta, pi);
        for c in 0..m {
            let sc = geo.exprs.mul(s[c], fs.e[c][i]);
            v = geo.exprs.add(v, sc);
        }
        out.v[i] = v;
    }
    out
}

pub fn frame_connection(
    geo: &mut CartanGeometry,
    fs: &FrameSymbols,
    der: &FrameDerivatives,
    brackets: &FrameBrackets,
) -> Result<FrameConnection> {
    let n = geo.dim;
    let m = n - 1;
    let order = frame_order(n);
    let z = geo.exprs.zero();

    // --- projection path over every ordered pair ---
    let mut proj = HashMap::new();
    for &x in &order {
        for &y in &order {
            let fx = fs.field(x).clone();
            let fy = fs.field(y).clone();
            let d = geo.cov_derivative(&fx, &fy)?;
            proj.insert((x, y), d);
        }
    }

    // --- pre-projected ingredient tensors ---
    let full_r3b = geo.full()?.r3_bracket.clone();
    let full_cdown = geo.full()?.c_down.clone();
    let full_gamma = geo.full()?.gamma.clone();
    let full_r2 = geo.full()?.r2.clone();
    let full_tg = geo.full()?.tg_vertical.clone();
    let lc_hv = geo.full()?.lc.hv.clone();
    let g_up = geo.g_up.clone();
    let g_down = geo.full()?.g_down.clone();
    let k2 = geo.k2;

    // frame projections
    let mut rb_f = vec![z; m * m * m];
    let mut g_f = vec![z; m * m * m];
    let mut rb2_f = vec![vec![z; m]; m]; // bracket-oriented R2 projection
    let mut gamma_proj = vec![vec![vec![z; n]; m]; m]; // natural-index k
    for a in 0..m {
        for b in 0..m {
            let mut acc2 = z;
            for i in 0..n {
                for j in 0..n {
                    let w = geo.exprs.mul(fs.ebar[a][i], fs.ebar[b][j]);
                    let t = geo.exprs.mul(w, full_r2[i][j]);
                    acc2 = geo.exprs.sub(acc2, t); // bracket orientation = -r2
                }
            }
            rb2_f[a][b] = acc2;
            for k in 0..n {
                let mut accg = z;
                for i in 0..n {
                    for j in 0..n {
                        let w = geo.exprs.mul(fs.ebar[a][i], fs.ebar[b][j]);
                        let t = geo.exprs.mul(w, full_gamma.get(k, i, j));
                        accg = geo.exprs.add(accg, t);
                    }
                }
                gamma_proj[a][b][k] = accg;
            }
            for c in 0..m {
                let mut accr = z;
                let mut accgf = z;
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let w = geo.exprs.mul(fs.ebar[a][i], fs.ebar[b][j]);
                            let w = geo.exprs.mul(w, fs.ebar[c][k]);
                            let t = geo.exprs.mul(w, full_r3b.get(i, j, k));
                            accr = geo.exprs.add(accr, t);
                            let t = geo.exprs.mul(w, full_cdown.get(i, j, k));
                            accgf = geo.exprs.add(accgf, t);
                        }
                    }
                }
                let at = (a * m + b) * m + c;
                rb_f[at] = accr;
                g_f[at] = accgf;
            }
        }
    }

    let dot_p = |geo: &mut CartanGeometry, v: &[ExprId]| -> ExprId {
        let mut acc = geo.exprs.zero();
        for (i, &vi) in v.iter().enumerate() {
            let pi = geo.exprs.var(Var::momentum(i));
            let t = geo.exprs.mul(pi, vi);
            acc = geo.exprs.add(acc, t);
        }
        acc
    };

    let mut form: HashMap<(FrameVec, FrameVec), SymField> = HashMap::new();

    // nabla_{dbar_a} dbar_b
    for a in 0..m {
        for b in 0..m {
            let mut t = vec![z; m];
            for c in 0..m {
                let mut acc = z;
                for k in 0..n {
                    let u = geo.exprs.add(der.dbar_ebar[a][b][k], gamma_proj[a][b][k]);
                    let w = geo.exprs.mul(u, fs.e[c][k]);
                    acc = geo.exprs.add(acc, w);
                }
                t[c] = acc;
            }
            let u: Vec<ExprId> = (0..n)
                .map(|k| geo.exprs.add(der.dbar_ebar[a][b][k], gamma_proj[a][b][k]))
                .collect();
            let up = dot_p(geo, &u);
            let alpha = geo.exprs.div(up, k2);
            let mut s = vec![z; m];
            for c in 0..m {
                let at = (a * m + b) * m + c;
                let sum = geo.exprs.add(rb_f[at], g_f[at]);
                let half = geo.exprs.num(0.5);
                s[c] = geo.exprs.mul(half, sum);
            }
            let fld = assemble(geo, fs, alpha, &t, z, &s);
            form.insert((FrameVec::DeltaBar(a), FrameVec::DeltaBar(b)), fld);
        }
    }

    // nabla_{delbar^a} delbar^b
    for a in 0..m {
        for b in 0..m {
            // s_d = delbar^a(E_i^b) Ebar_d^i + 1/2 E_i^a E_j^b Ebar_d^k g_k^{ij}
            let mut s = vec![z; m];
            for d in 0..m {
                let mut acc = z;
                for i in 0..n {
                    let t = geo.exprs.mul(der.delbar_e[a][b][i], fs.ebar[d][i]);
                    acc = geo.exprs.add(acc, t);
                }
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            for h in 0..n {
                                let w = geo.exprs.mul(fs.e[a][i], fs.e[b][j]);
                                let w = geo.exprs.mul(w, fs.ebar[d][k]);
                                let w = geo.exprs.mul(w, g_down[k][h]);
                                let w = geo.exprs.mul(w, geo.c_up.get(i, j, h));
                                let half = geo.exprs.num(0.5);
                                let w = geo.exprs.mul(half, w);
                                acc = geo.exprs.add(acc, w);
                            }
                        }
                    }
                }
                s[d] = acc;
            }
            let beta = {
                let q = geo.exprs.div(fs.gram_up[a][b], k2);
                geo.exprs.neg(q)
            };
            // horizontal: -1/2 E_i^a E_j^b tg(k,i,j) g^{kh} (split on xi / dbar)
            let mut u = vec![z; n];
            for h in 0..n {
                let mut acc = z;
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let w = geo.exprs.mul(fs.e[a][i], fs.e[b][j]);
                            let w = geo.exprs.mul(w, full_tg.get(k, i, j));
                            let w = geo.exprs.mul(w, g_up[k][h]);
                            acc = geo.exprs.add(acc, w);
                        }
                    }
                }
                let half = geo.exprs.num(-0.5);
                u[h] = geo.exprs.mul(half, acc);
            }
            let mut t = vec![z; m];
            for c in 0..m {
                let mut acc = z;
                for h in 0..n {
                    let w = geo.exprs.mul(u[h], fs.e[c][h]);
                    acc = geo.exprs.add(acc, w);
                }
                t[c] = acc;
            }
            let up = dot_p(geo, &u);
            let alpha = geo.exprs.div(up, k2);
            let fld = assemble(geo, fs, alpha, &t, beta, &s);
            form.insert((FrameVec::DelBar(a), FrameVec::DelBar(b)), fld);
        }
    }

    // nabla_{dbar_a} delbar^b
    for a in 0..m {
        for b in 0..m {
            // t^d = -1/2 (g_f(a,c,e) + rb_f(a,c,e)) g^{eb} g^{cd}
            let mut t = vec![z; m];
            for d in 0..m {
                let mut acc = z;
                for c in 0..m {
                    for e in 0..m {
                        let at = (a * m + c) * m + e;
                        let sum = geo.exprs.add(g_f[at], rb_f[at]);
                        let w = geo.exprs.mul(sum, fs.gram_up[e][b]);
                        let w = geo.exprs.mul(w, fs.gram_up[c][d]);
                        acc = geo.exprs.add(acc, w);
                    }
                }
                let nh = geo.exprs.num(-0.5);
                t[d] = geo.exprs.mul(nh, acc);
            }
            // alpha = -(1/2K^2) Rb2_a^b
            let alpha = {
                let mut acc = z;
                for c in 0..m {
                    let w = geo.exprs.mul(rb2_f[a][c], fs.gram_up[c][b]);
                    acc = geo.exprs.add(acc, w);
                }
                let m2 = geo.exprs.num(-2.0);
                let den = geo.exprs.mul(m2, k2);
                geo.exprs.div(acc, den)
            };
            // s_d: transport + projected hv vertical block
            let mut s = vec![z; m];
            for d in 0..m {
                let mut acc = z;
                for i in 0..n {
                    let w = geo.exprs.mul(der.dbar_e[a][b][i], fs.ebar[d][i]);
                    acc = geo.exprs.add(acc, w);
                }
                for k in 0..n {
                    for i in 0..n {
                        for h in 0..n {
                            let w = geo.exprs.mul(fs.ebar[a][k], fs.e[b][i]);
                            let w = geo.exprs.mul(w, lc_hv[k][i].v[h]);
                            let w = geo.exprs.mul(w, fs.ebar[d][h]);
                            acc = geo.exprs.add(acc, w);
                        }
                    }
                }
                s[d] = acc;
            }
            let fld = assemble(geo, fs, alpha, &t, z, &s);
            form.insert((FrameVec::DeltaBar(a), FrameVec::DelBar(b)), fld);
        }
    }

    // nabla_{delbar^b} dbar_a = nabla_{dbar_a} delbar^b - [dbar_a, delbar^b]
    for a in 0..m {
        for b in 0..m {
            let base = form[&(FrameVec::DeltaBar(a), FrameVec::DelBar(b))].clone();
            let br = brackets.rows[&(FrameVec::DeltaBar(a), FrameVec::DelBar(b))].clone();
            let fld = geo.field_sub(&base, &br);
            form.insert((FrameVec::DelBar(b), FrameVec::DeltaBar(a)), fld);
        }
    }

    // nabla_{dbar_a} xi: t^d = -g^{cd} (T1(a,c) + Gamma(a,c)) . p,
    // s_d = 1/2 Rb2_f(a,d)
    for a in 0..m {
        let mut t = vec![z; m];
        for d in 0..m {
            let mut acc = z;
            for c in 0..m {
                let u: Vec<ExprId> = (0..n)
                    .map(|k| geo.exprs.add(der.dbar_ebar[a][c][k], gamma_proj[a][c][k]))
                    .collect();
                let up = dot_p(geo, &u);
                let w = geo.exprs.mul(fs.gram_up[c][d], up);
                acc = geo.exprs.add(acc, w);
            }
            t[d] = geo.exprs.neg(acc);
        }
        let mut s = vec![z; m];
        for d in 0..m {
            let half = geo.exprs.num(0.5);
            s[d] = geo.exprs.mul(half, rb2_f[a][d]);
        }
        let fld = assemble(geo, fs, z, &t, z, &s);
        form.insert((FrameVec::DeltaBar(a), FrameVec::Xi), fld);
    }

    // nabla_xi dbar_a = nabla_{dbar_a} xi - [dbar_a, xi]
    for a in 0..m {
        let base = form[&(FrameVec::DeltaBar(a), FrameVec::Xi)].clone();
        let br = brackets.rows[&(FrameVec::DeltaBar(a), FrameVec::Xi)].clone();
        let fld = geo.field_sub(&base, &br);
        form.insert((FrameVec::Xi, FrameVec::DeltaBar(a)), fld);
    }

    // nabla_{delbar^a} xi = (g^{ad} + 1/2 Rb2^{ad}) dbar_d
    for a in 0..m {
        let mut t = vec![z; m];
        for d in 0..m {
            let mut acc = fs.gram_up[a][d];
            for b in 0..m {
                for c in 0..m {
                    let w = geo.exprs.mul(rb2_f[b][c], fs.gram_up[b][a]);
                    let w = geo.exprs.mul(w, fs.gram_up[c][d]);
                    let half = geo.exprs.num(0.5);
                    let w = geo.exprs.mul(half, w);
                    acc = geo.exprs.add(acc, w);
                }
            }
            t[d] = acc;
        }
        let fld = assemble(geo, fs, z, &t, z, &vec![z; m]);
        form.insert((FrameVec::DelBar(a), FrameVec::Xi), fld);
    }

    // nabla_xi delbar^a = nabla_{delbar^a} xi - [delbar^a, xi]
    for a in 0..m {
        let base = form[&(FrameVec::DelBar(a), FrameVec::Xi)].clone();
        let br = brackets.rows[&(FrameVec::DelBar(a), FrameVec::Xi)].clone();
        let fld = geo.field_sub(&base, &br);
        form.insert((FrameVec::Xi, FrameVec::DelBar(a)), fld);
    }

    // C* rows and the xi/C* diagonal
    for a in 0..m {
        form.insert((FrameVec::DeltaBar(a), FrameVec::Cstar), SymField::zero(geo));
        let br = brackets.rows[&(FrameVec::DeltaBar(a), FrameVec::Cstar)].clone();
        let zero = SymField::zero(geo);
        let fld = geo.field_sub(&zero, &br);
        form.insert((FrameVec::Cstar, FrameVec::DeltaBar(a)), fld);

        form.insert((FrameVec::DelBar(a), FrameVec::Cstar), fs.del_bar[a].clone());
        let br = brackets.rows[&(FrameVec::DelBar(a), FrameVec::Cstar)].clone();
        let fld = geo.field_sub(&fs.del_bar[a].clone(), &br);
        form.insert((FrameVec::Cstar, FrameVec::DelBar(a)), fld);
    }
    form.insert((FrameVec::Xi, FrameVec::Cstar), SymField::zero(geo));
    form.insert((FrameVec::Cstar, FrameVec::Xi), fs.xi.clone());
    form.insert((FrameVec::Xi, FrameVec::Xi), SymField::zero(geo));
    form.insert((FrameVec::Cstar, FrameVec::Cstar), fs.cstar.clone());

    Ok(FrameConnection { proj, form })
}

/// Max componentwise disagreement between the projection path and the
/// closed forms over every frame pair at one point.
pub fn connection_agreement(
    geo: &CartanGeometry,
    fc: &FrameConnection,
    pt: &PhasePoint,
) -> Result<f64> {
    let n = geo.dim;
    let mut ev = Evaluator::new();
    ev.begin_point(&geo.exprs);
    let mut worst = 0.0f64;
    for (key, p) in &fc.proj {
        let f = &fc.form[key];
        for i in 0..n {
            let a = ev.eval(&geo.exprs, p.h[i], pt)?;
            let b = ev.eval(&geo.exprs, f.h[i], pt)?;
            worst = worst.max((a - b).abs());
            let a = ev.eval(&geo.exprs, p.v[i], pt)?;
            let b = ev.eval(&geo.exprs, f.v[i], pt)?;
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Convenience bundle: symbols, derivatives, bracket rows and both
/// connection paths for one frozen pivot.
pub struct FrameBundle {
    pub fs: FrameSymbols,
    pub der: FrameDerivatives,
    pub brackets: FrameBrackets,
    pub conn: FrameConnection,
}

impl FrameBundle {
    pub fn build(geo: &mut CartanGeometry, pivot: usize, alternate: bool) -> Result<Self> {
        let fs = FrameSymbols::build(geo, pivot, alternate)?;
        let der = frame_derivatives(geo, &fs)?;
        let brackets = frame_bracket_forms(geo, &fs, &der)?;
        let conn = frame_connection(geo, &fs, &der, &brackets)?;
        Ok(FrameBundle { fs, der, brackets, conn })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::MetricKind;
    use crate::oracle::FdConfig;

    fn pt(x: Vec<f64>, p: Vec<f64>) -> PhasePoint {
        PhasePoint::new(x, p).unwrap()
    }

    fn euclidean() -> CartanGeometry {
        CartanGeometry::new("p1^2 + p2^2", 2, MetricKind::KSquared).unwrap()
    }

    fn hyperbolic() -> CartanGeometry {
        CartanGeometry::new("x2^2 * (p1^2 + p2^2)", 2, MetricKind::KSquared).unwrap()
    }

    fn randers3() -> CartanGeometry {
        CartanGeometry::new("sqrt(p1^2+p2^2+p3^2) + 0.05*p1", 3, MetricKind::K).unwrap()
    }

    #[test]
    fn euclidean_frame_axis_point() {
        let mut geo = euclidean();
        let fr = build_frame(&mut geo, &pt(vec![0.0, 0.0], vec![1.0, 0.0])).unwrap();
        assert_eq!(fr.pivot, 0);
        assert_eq!(fr.e[(0, 0)], 0.0);
        assert_eq!(fr.e[(0, 1)], 1.0);
        assert_eq!(fr.g_frame_up[(0, 0)], 1.0);
        // xi = delta/delta x^1 here
        assert_eq!(fr.xi.h[0], 1.0);
        assert_eq!(fr.xi.h[1], 0.0);
    }

    #[test]
    fn euclidean_frame_diagonal_point() {
        // p = (1,1)/sqrt(2): tie in |l^i| resolves to the lowest index,
        // E = [(-1, 1)], frame Gram = 2
        let mut geo = euclidean();
        let s = 1.0 / 2.0f64.sqrt();
        let at = pt(vec![0.0, 0.0], vec![s, s]);
        let (_, _, _, ell) = geo.fundamental_metrics(&at).unwrap();
        let (pivot, margin) = choose_pivot(&ell).unwrap();
        assert_eq!(pivot, 0);
        assert!((margin - 1.0).abs() < 1e-12, "diagonal point is a margin rejection");
        let fs = FrameSymbols::build(&mut geo, pivot, false).unwrap();
        let fr = frame_at(&geo, &fs, &at, margin).unwrap();
        assert!(!fr.margin_ok());
        assert!((fr.e[(0, 0)] + 1.0).abs() < 1e-12);
        assert!((fr.e[(0, 1)] - 1.0).abs() < 1e-12);
        assert!((fr.g_frame_up[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn frame_invariants_all_metrics() {
        for (mut geo, at) in [
            (euclidean(), pt(vec![0.0, 0.0], vec![0.8, 0.3])),
            (hyperbolic(), pt(vec![0.0, 1.0], vec![0.6, 0.8])),
            (randers3(), pt(vec![0.0, 0.0, 0.0], vec![1.0, 0.3, 0.2])),
        ] {
            let ts = geo.tensor_set(&at).unwrap();
            let fr = build_frame(&mut geo, &at).unwrap();
            let n = geo.dim;
            let m = n - 1;
            // E annihilates l
            for a in 0..m {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += fr.e[(a, i)] * ts.ell[i];
                }
                assert!(acc.abs() < 1e-10, "E l = {acc}");
            }
            // left inverse: Ebar_a^i E_i^b = delta_a^b
            for a in 0..m {
                for b in 0..m {
                    let mut acc = 0.0;
                    for i in 0..n {
                        acc += fr.ebar[(a, i)] * fr.e[(b, i)];
                    }
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((acc - want).abs() < 1e-10, "reconstruction {a}{b}: {acc}");
                }
            }
            // rank of E
            let svd = fr.e.clone().svd(false, false);
            let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(smin > 1e-8, "rank deficiency: {smin}");
            // Gram matrix equals the block target
            let (gram, target) = frame_gram(&ts, &fr).unwrap();
            let err = (gram - target).amax();
            assert!(err < 1e-9, "frame Gram error {err}");
        }
    }

    #[test]
    fn bracket_rows_match_numeric_oracle() {
        let cfg = FdConfig::default();
        for (mut geo, at) in [
            (euclidean(), pt(vec![0.0, 0.0], vec![0.9, 0.2])),
            (hyperbolic(), pt(vec![0.2, 1.1], vec![0.7, 0.25])),
            (randers3(), pt(vec![0.0, 0.0, 0.0], vec![1.0, 0.25, 0.15])),
        ] {
            let n = geo.dim;
            let (_, _, _, ell) = geo.fundamental_metrics(&at).unwrap();
            let (pivot, margin) = choose_pivot(&ell).unwrap();
            assert!(margin <= PIVOT_MARGIN, "test points must clear the margin");
            let fs = FrameSymbols::build(&mut geo, pivot, false).unwrap();
            let der = frame_derivatives(&mut geo, &fs).unwrap();
            let forms = frame_bracket_forms(&mut geo, &fs, &der).unwrap();
            let m = n - 1;
            let mut pairs: Vec<(FrameVec, FrameVec)> = vec![
                (FrameVec::Xi, FrameVec::Cstar),
                (FrameVec::Xi, FrameVec::Xi),
                (FrameVec::Cstar, FrameVec::Cstar),
            ];
            for a in 0..m {
                pairs.push((FrameVec::DeltaBar(a), FrameVec::Xi));
                pairs.push((FrameVec::DelBar(a), FrameVec::Xi));
                pairs.push((FrameVec::DeltaBar(a), FrameVec::Cstar));
                pairs.push((FrameVec::DelBar(a), FrameVec::Cstar));
                for b in 0..m {
                    pairs.push((FrameVec::DeltaBar(a), FrameVec::DeltaBar(b)));
                    pairs.push((FrameVec::DeltaBar(a), FrameVec::DelBar(b)));
                    pairs.push((FrameVec::DelBar(a), FrameVec::DelBar(b)));
                }
            }
            for (x, y) in pairs {
                let r = bracket_row_residual(&geo, &fs, &forms, x, y, &at, &cfg).unwrap();
                assert!(r < 1e-5, "bracket row ({x:?}, {y:?}) residual {r}");
            }
        }
    }

    #[test]
    fn alternate_frame_changes_components_not_invariants() {
        let mut geo = hyperbolic();
        let at = pt(vec![0.1, 1.2], vec![0.8, 0.3]);
        let ts = geo.tensor_set(&at).unwrap();
        let (_, _, _, ell) = geo.fundamental_metrics(&at).unwrap();
        let (pivot, margin) = choose_pivot(&ell).unwrap();
        let fs0 = FrameSymbols::build(&mut geo, pivot, false).unwrap();
        let fs1 = FrameSymbols::build(&mut geo, pivot, true).unwrap();
        let fr0 = frame_at(&geo, &fs0, &at, margin).unwrap();
        let fr1 = frame_at(&geo, &fs1, &at, margin).unwrap();
        // components differ
        assert!((fr0.e[(0, 0)] + fr1.e[(0, 0)]).abs() < 1e-12);
        // invariants agree: both Grams match their own block targets
        for fr in [&fr0, &fr1] {
            let (gram, target) = frame_gram(&ts, fr).unwrap();
            assert!((gram - target).amax() < 1e-9);
        }
        // and the frame-projected scalar R_ab g^ab (trace) is invariant
        let t0 = frame_tensors(&ts, &fr0);
        let t1 = frame_tensors(&ts, &fr1);
        let tr0 = (&t0.r_ab * &fr0.g_frame_up).trace();
        let tr1 = (&t1.r_ab * &fr1.g_frame_up).trace();
        assert!((tr0 - tr1).abs() < 1e-9, "{tr0} vs {tr1}");
    }

    #[test]
    fn hyperbolic_frame_r_ab_on_unit_shell() {
        // R_ab = -g_ab(frame) on K = 1 for the curvature -1 dual
        let mut geo = hyperbolic();
        let at = pt(vec![0.4, 1.0], vec![0.28, 0.96]);
        let ts = geo.tensor_set(&at).unwrap();
        assert!((ts.k - 1.0).abs() < 1e-12);
        let fr = build_frame(&mut geo, &at).unwrap();
        let ft = frame_tensors(&ts, &fr);
        let m = geo.dim - 1;
        for a in 0..m {
            for b in 0..m {
                assert!(
                    (ft.r_ab[(a, b)] + fr.g_frame_down[(a, b)]).abs() < 1e-9,
                    "R_ab + g_ab = {}",
                    ft.r_ab[(a, b)] + fr.g_frame_down[(a, b)]
                );
            }
        }
    }

    #[test]
    fn degenerate_frame_rejected() {
        let ell = DVector::from_vec(vec![0.0, 0.0]);
        assert!(matches!(choose_pivot(&ell), Err(Error::DegenerateFrame { .. })));
    }

    #[test]
    fn pivot_margin_rejection() {
        let mut geo = euclidean();
        // momenta near the diagonal put the runner-up inside the margin
        let s = 1.0 / 2.0f64.sqrt();
        let close = pt(vec![0.0, 0.0], vec![s, s * 0.99]);
        assert!(matches!(
            build_frame_strict(&mut geo, &close),
            Err(Error::PivotMargin { .. })
        ));
        // a well-separated point passes
        let good = pt(vec![0.0, 0.0], vec![1.0, 0.3]);
        assert!(build_frame_strict(&mut geo, &good).is_ok());
    }

    #[test]
    fn connection_two_paths_agree() {
        for (mut geo, at) in [
            (euclidean(), pt(vec![0.0, 0.0], vec![0.9, 0.2])),
            (hyperbolic(), pt(vec![0.2, 1.1], vec![0.7, 0.25])),
            (randers3(), pt(vec![0.0, 0.0, 0.0], vec![1.0, 0.25, 0.15])),
        ] {
            let (_, _, _, ell) = geo.fundamental_metrics(&at).unwrap();
            let (pivot, _) = choose_pivot(&ell).unwrap();
            let bundle = FrameBundle::build(&mut geo, pivot, false).unwrap();
            let worst = connection_agreement(&geo, &bundle.conn, &at).unwrap();
            assert!(worst < 1e-5, "paths disagree by {worst} (dim {})", geo.dim);
        }
    }

    #[test]
    fn liouville_rows_vanish_pointwise() {
        // nabla_xi xi = nabla_xi C* = 0, nabla_{C*} C* = C*,
        // nabla_{dbar_a} C* = 0, nabla_{delbar^a} C* = delbar^a
        let mut geo = hyperbolic();
        let at = pt(vec![0.3, 0.9], vec![0.8, 0.45]);
        let (_, _, _, ell) = geo.fundamental_metrics(&at).unwrap();
        let (pivot, _) = choose_pivot(&ell).unwrap();
        let bundle = FrameBundle::build(&mut geo, pivot, false).unwrap();
        let mut ev = Evaluator::new();
        ev.begin_point(&geo.exprs);
        let norm_of = |geo: &CartanGeometry, ev: &mut Evaluator, f: &SymField| -> f64 {
            let mut w = 0.0f64;
            for i in 0..geo.dim {
                w = w.max(ev.eval(&geo.exprs, f.h[i], &at).unwrap().abs());
                w = w.max(ev.eval(&geo.exprs, f.v[i], &at).unwrap().abs());
            }
            w
        };
        let p = &bundle.conn.proj;
        assert!(norm_of(&geo, &mut ev, &p[&(FrameVec::Xi, FrameVec::Xi)]) < 1e-9);
        assert!(norm_of(&geo, &mut ev, &p[&(FrameVec::Xi, FrameVec::Cstar)]) < 1e-9);
        assert!(norm_of(&geo, &mut ev, &p[&(FrameVec::DeltaBar(0), FrameVec::Cstar)]) < 1e-9);
        // nabla_{C*}C* - C* = 0
        let cc = p[&(FrameVec::Cstar, FrameVec::Cstar)].clone();
        let diff = geo.field_sub(&cc, &bundle.fs.cstar.clone());
        ev.begin_point(&geo.exprs);
        assert!(norm_of(&geo, &mut ev, &diff) < 1e-9);
        // nabla_{delbar^a} C* - delbar^a = 0
        let dc = p[&(FrameVec::DelBar(0), FrameVec::Cstar)].clone();
        let diff = geo.field_sub(&dc, &bundle.fs.del_bar[0].clone());
        ev.begin_point(&geo.exprs);
        assert!(norm_of(&geo, &mut ev, &diff) < 1e-9);
    }

    #[test]
    fn vertical_pair_normal_part_is_minus_gab_over_k2() {
        // the only frame pair with a normal component: H(delbar^a, delbar^b)
        // = -(1/K^2) g^ab C*
        for (mut geo, at) in [
            (euclidean(), pt(vec![0.0, 0.0], vec![0.9, 0.2])),
            (hyperbolic(), pt(vec![0.2, 1.1], vec![0.7, 0.25])),
            (randers3(), pt(vec![0.0, 0.0, 0.0], vec![1.0, 0.25, 0.15])),
        ] {
            let (_, _, _, ell) = geo.fundamental_metrics(&at).unwrap();
            let (pivot, _) = choose_pivot(&ell).unwrap();
            let bundle = FrameBundle::build(&mut geo, pivot, false).unwrap();
            let m = geo.dim - 1;
            let mut ev = Evaluator::new();
            for a in 0..m {
                for b in 0..m {
                    let w = bundle.conn.proj[&(FrameVec::DelBar(a), FrameVec::DelBar(b))].clone();
                    let coeff = geo.normal_coefficient(&w).unwrap();
                    ev.begin_point(&geo.exprs);
                    let got = ev.eval(&geo.exprs, coeff, &at).unwrap();
                    let gab = ev.eval(&geo.exprs, bundle.fs.gram_up[a][b], &at).unwrap();
                    let k2 = ev.eval(&geo.exprs, geo.k2, &at).unwrap();
                    assert!(
                        (got + gab / k2).abs() < 1e-9,
                        "normal coeff {got} vs {}",
                        -gab / k2
                    );
                }
            }
        }
    }
}
