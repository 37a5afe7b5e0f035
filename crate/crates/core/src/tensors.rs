//! Fundamental tensors of a Cartan space and of the Sasaki-lifted metric on
//! the cotangent bundle, computed symbolically once per metric and evaluated
//! numerically per point.
//!
//! Index conventions (all zero-based in code):
//! - `g_up[i][j] = g^ij = 1/2 d^i d^j K^2`, `g_down` its inverse,
//!   `ell^i = g^ij p_j`.
//! - `N[i][j] = N_ij` canonical nonlinear connection,
//!   `n_up(j,i,k) = d^j N_ik`.
//! - `r3(i,j,k) = R_ijk = delta N_ik / delta x^j - delta N_jk / delta x^i`,
//!   oriented so that for a Riemannian dual `K^2 = a^ij(x) p_i p_j` the
//!   constant-curvature fit `R_ij = c K^2 h_ij` returns the sectional
//!   curvature of `a_ij`. The adapted-basis Lie bracket carries the
//!   opposite orientation, `[delta_i, delta_j] = -R_ijk d^k`; connection
//!   coefficients below use that bracket orientation where it enters.
//! - `r2[i][j] = l^k R_ikj` (middle index contracted).
//! - `gamma(k,i,j) = Gamma^k_ij`, `c_up(i,j,k) = d^k g^ij`,
//!   `c_down(i,j,k) = g_is g_jt g_kh c_up(s,t,h)`.
//! - `h = g_down - p p^T / K^2`, `ang = r2 + h`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{Evaluator, ExprContext, ExprId, PhasePoint, UnaryFn, Var};
use crate::metric::{parse_metric, MetricExpression, MetricKind};

/// Dense third-order array with fixed extent `n` per axis.
#[derive(Clone, Debug)]
pub struct Ten3 {
    n: usize,
    data: Vec<f64>,
}

impl Ten3 {
    pub fn zeros(n: usize) -> Self {
        Ten3 { n, data: vec![0.0; n * n * n] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.n + j) * self.n + k] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn dim(&self) -> usize {
        self.n
    }
}

pub type SymMat = Vec<Vec<ExprId>>;
pub type SymVec = Vec<ExprId>;

/// Symbolic third-order array; indexing mirrors `Ten3`.
#[derive(Clone)]
pub struct SymTen3 {
    n: usize,
    data: Vec<ExprId>,
}

impl SymTen3 {
    fn filled(n: usize, fill: ExprId) -> Self {
        SymTen3 { n, data: vec![fill; n * n * n] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> ExprId {
        self.data[(i * self.n + j) * self.n + k]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, k: usize, v: ExprId) {
        self.data[(i * self.n + j) * self.n + k] = v;
    }
}

/// Coefficients of a covariant derivative of one adapted basis field along
/// another: components on `delta/delta x^k` and on `d/dp_k`.
#[derive(Clone)]
pub struct SymPair {
    pub h: SymVec,
    pub v: SymVec,
}

/// Natural-basis Levi-Civita coefficient tables on the adapted basis.
pub struct LcTables {
    /// `nabla_{delta_i} delta_j`
    pub hh: Vec<Vec<SymPair>>,
    /// `nabla_{delta_i} d^j`
    pub hv: Vec<Vec<SymPair>>,
    /// `nabla_{d^i} delta_j`
    pub vh: Vec<Vec<SymPair>>,
    /// `nabla_{d^i} d^j`
    pub vv: Vec<Vec<SymPair>>,
}

/// Symbolic objects that require the inverse metric tree (dim <= 3).
pub struct FullSymbols {
    pub g_det: ExprId,
    pub g_down: SymMat,
    pub ell: SymVec,
    pub nconn: SymMat,
    pub n_up: SymTen3,
    /// Curvature of the nonlinear connection, classification orientation.
    pub r3: SymTen3,
    /// The same tensor with the bracket orientation (`[delta_i, delta_j]
    /// = r3_bracket(i,j,k) d^k`); equals `-r3` entrywise.
    pub r3_bracket: SymTen3,
    pub r2: SymMat,
    pub gamma: SymTen3,
    pub c_down: SymTen3,
    pub h: SymMat,
    pub ang: SymMat,
    /// `delta g^ij / delta x^k` as `(k, i, j)`
    pub dgup_delta: SymTen3,
    /// `delta g_ij / delta x^k` as `(k, i, j)`
    pub dgdown_delta: SymTen3,
    /// vertical totally-geodesic condition
    /// `delta g^ij/delta x^k + N^i_ks g^sj + N^j_ks g^si` as `(k, i, j)`
    pub tg_vertical: SymTen3,
    /// `delta K^2 / delta x^i`
    pub dk2_delta: SymVec,
    pub lc: LcTables,
}

/// A Cartan metric with its full symbolic tensor pipeline. Everything the
/// pipeline can precompute is built in the constructor, so values of `self`
/// are immutable afterwards and safe to share across worker threads.
pub struct CartanGeometry {
    pub exprs: ExprContext,
    pub metric: MetricExpression,
    pub dim: usize,
    pub k2: ExprId,
    pub k: ExprId,
    pub g_up: SymMat,
    pub c_up: SymTen3,
    /// Euler defect of `K^2` at degree 2.
    pub k2_defect: ExprId,
    /// Euler defects of each `g^ij` at degree 0.
    pub gup_defect: SymMat,
    full: Option<FullSymbols>,
}

pub(crate) fn sym_inverse(ctx: &mut ExprContext, m: &SymMat) -> Result<(ExprId, SymMat)> {
    let n = m.len();
    match n {
        1 => {
            let det = m[0][0];
            let one = ctx.one();
            let inv = ctx.div(one, det);
            Ok((det, vec![vec![inv]]))
        }
        2 => {
            let ad = ctx.mul(m[0][0], m[1][1]);
            let bc = ctx.mul(m[0][1], m[1][0]);
            let det = ctx.sub(ad, bc);
            let mut out = vec![vec![ctx.zero(); 2]; 2];
            out[0][0] = ctx.div(m[1][1], det);
            out[1][1] = ctx.div(m[0][0], det);
            let nb = ctx.neg(m[0][1]);
            out[0][1] = ctx.div(nb, det);
            let nc = ctx.neg(m[1][0]);
            out[1][0] = ctx.div(nc, det);
            Ok((det, out))
        }
        3 => {
            let minor = |ctx: &mut ExprContext, r: [usize; 2], c: [usize; 2]| {
                let a = ctx.mul(m[r[0]][c[0]], m[r[1]][c[1]]);
                let b = ctx.mul(m[r[0]][c[1]], m[r[1]][c[0]]);
                ctx.sub(a, b)
            };
            let m00 = minor(ctx, [1, 2], [1, 2]);
            let m01 = minor(ctx, [1, 2], [0, 2]);
            let m02 = minor(ctx, [1, 2], [0, 1]);
            let m10 = minor(ctx, [0, 2], [1, 2]);
            let m11 = minor(ctx, [0, 2], [0, 2]);
            let m12 = minor(ctx, [0, 2], [0, 1]);
            let m20 = minor(ctx, [0, 1], [1, 2]);
            let m21 = minor(ctx, [0, 1], [0, 2]);
            let m22 = minor(ctx, [0, 1], [0, 1]);
            let t0 = ctx.mul(m[0][0], m00);
            let t1 = ctx.mul(m[0][1], m01);
            let t2 = ctx.mul(m[0][2], m02);
            let d01 = ctx.sub(t0, t1);
            let det = ctx.add(d01, t2);
            // adjugate = transposed cofactors; cofactor sign pattern applied
            let neg = |ctx: &mut ExprContext, e: ExprId| ctx.neg(e);
            let cof = [
                [m00, neg(ctx, m01), m02],
                [neg(ctx, m10), m11, neg(ctx, m12)],
                [m20, neg(ctx, m21), m22],
            ];
            let mut out = vec![vec![ctx.zero(); 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    out[i][j] = ctx.div(cof[j][i], det);
                }
            }
            Ok((det, out))
        }
        d => Err(Error::SymbolicUnavailable { dim: d }),
    }
}

impl CartanGeometry {
    /// Parse and build the symbolic pipeline. For `dim <= 3` every tensor
    /// (connection, curvature, Levi-Civita tables) is built eagerly so the
    /// geometry can afterwards be shared immutably across threads.
    pub fn new(text: &str, dim: usize, kind: MetricKind) -> Result<Self> {
        let mut exprs = ExprContext::new();
        let metric = parse_metric(&mut exprs, text, dim, kind)?;
        Self::from_metric(exprs, metric)
    }

    pub fn from_metric(mut exprs: ExprContext, metric: MetricExpression) -> Result<Self> {
        let dim = metric.dim;
        let k2 = metric.k2;
        let k = exprs.fun(UnaryFn::Sqrt, k2);

        // g^ij = 1/2 d^i d^j K^2 (build upper triangle, mirror ids)
        let half = exprs.num(0.5);
        let mut g_up = vec![vec![exprs.zero(); dim]; dim];
        for i in 0..dim {
            let di = exprs.diff(k2, Var::momentum(i))?;
            for j in i..dim {
                let dij = exprs.diff(di, Var::momentum(j))?;
                let v = exprs.mul(half, dij);
                g_up[i][j] = v;
                g_up[j][i] = v;
            }
        }

        // c_up(i,j,k) = d^k g^ij
        let mut c_up = SymTen3::filled(dim, exprs.zero());
        for i in 0..dim {
            for j in 0..dim {
                for kk in 0..dim {
                    let d = exprs.diff(g_up[i][j], Var::momentum(kk))?;
                    c_up.set(i, j, kk, d);
                }
            }
        }

        let k2_defect = crate::metric::euler_defect_expr(&mut exprs, k2, 2.0, dim)?;
        let mut gup_defect = vec![vec![exprs.zero(); dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                gup_defect[i][j] =
                    crate::metric::euler_defect_expr(&mut exprs, g_up[i][j], 0.0, dim)?;
            }
        }

        let mut geo = CartanGeometry {
            exprs,
            metric,
            dim,
            k2,
            k,
            g_up,
            c_up,
            k2_defect,
            gup_defect,
            full: None,
        };
        if dim <= 3 {
            geo.build_full()?;
        }
        Ok(geo)
    }

    pub fn full(&self) -> Result<&FullSymbols> {
        self.full.as_ref().ok_or(Error::SymbolicUnavailable { dim: self.dim })
    }

    fn build_full(&mut self) -> Result<()> {
        let n = self.dim;
        let ctx = &mut self.exprs;
        let k2 = self.k2;
        let g_up = self.g_up.clone();

        let (g_det, g_down) = sym_inverse(ctx, &g_up)?;

        // ell^i = g^ij p_j
        let mut ell = vec![ctx.zero(); n];
        for i in 0..n {
            let mut acc = ctx.zero();
            for j in 0..n {
                let pj = ctx.var(Var::momentum(j));
                let t = ctx.mul(g_up[i][j], pj);
                acc = ctx.add(acc, t);
            }
            ell[i] = acc;
        }

        // N_ij = 1/4 {g_ij, K^2} - 1/4 (g_ik d2K2/dp_k dx^j + g_jk d2K2/dp_k dx^i)
        let quarter = ctx.num(0.25);
        let mut mixed_k2 = vec![vec![ctx.zero(); n]; n]; // d^k d_{x^j} K^2 as [k][j]
        for kk in 0..n {
            let dk = ctx.diff(k2, Var::momentum(kk))?;
            for j in 0..n {
                mixed_k2[kk][j] = ctx.diff(dk, Var::coord(j))?;
            }
        }
        let mut nconn = vec![vec![ctx.zero(); n]; n];
        for i in 0..n {
            for j in i..n {
                let br = ctx.poisson_bracket(g_down[i][j], k2, n)?;
                let mut corr = ctx.zero();
                for kk in 0..n {
                    let t1 = ctx.mul(g_down[i][kk], mixed_k2[kk][j]);
                    let t2 = ctx.mul(g_down[j][kk], mixed_k2[kk][i]);
                    let t = ctx.add(t1, t2);
                    corr = ctx.add(corr, t);
                }
                let d = ctx.sub(br, corr);
                let v = ctx.mul(quarter, d);
                nconn[i][j] = v;
                nconn[j][i] = v;
            }
        }

        // N^j_ik = d^j N_ik, stored (j, i, k)
        let mut n_up = SymTen3::filled(n, ctx.zero());
        for j in 0..n {
            for i in 0..n {
                for kk in 0..n {
                    let d = ctx.diff(nconn[i][kk], Var::momentum(j))?;
                    n_up.set(j, i, kk, d);
                }
            }
        }

        // delta f / delta x^i = d_{x^i} f + N_ij d^j f
        let delta = |ctx: &mut ExprContext, f: ExprId, i: usize| -> Result<ExprId> {
            let mut acc = ctx.diff(f, Var::coord(i))?;
            for j in 0..n {
                let df = ctx.diff(f, Var::momentum(j))?;
                let t = ctx.mul(nconn[i][j], df);
                acc = ctx.add(acc, t);
            }
            Ok(acc)
        };

        // r3 in classification orientation; the bracket coefficient of
        // [delta_i, delta_j] is delta N_jk/dx^i - delta N_ik/dx^j = -r3.
        let mut dn_delta = SymTen3::filled(n, ctx.zero()); // (i, j, k) = delta N_jk / delta x^i
        for i in 0..n {
            for j in 0..n {
                for kk in 0..n {
                    let d = delta(ctx, nconn[j][kk], i)?;
                    dn_delta.set(i, j, kk, d);
                }
            }
        }
        let mut r3 = SymTen3::filled(n, ctx.zero());
        let mut r3_bracket = SymTen3::filled(n, ctx.zero());
        for i in 0..n {
            for j in 0..n {
                for kk in 0..n {
                    let d = ctx.sub(dn_delta.get(j, i, kk), dn_delta.get(i, j, kk));
                    r3.set(i, j, kk, d);
                    let b = ctx.neg(d);
                    r3_bracket.set(i, j, kk, b);
                }
            }
        }

        // R_ij = l^k R_ikj
        let mut r2 = vec![vec![ctx.zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = ctx.zero();
                for kk in 0..n {
                    let t = ctx.mul(ell[kk], r3.get(i, kk, j));
                    acc = ctx.add(acc, t);
                }
                r2[i][j] = acc;
            }
        }

        // delta-derivatives of both metric blocks
        let mut dgup_delta = SymTen3::filled(n, ctx.zero());
        let mut dgdown_delta = SymTen3::filled(n, ctx.zero());
        for kk in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let du = delta(ctx, g_up[i][j], kk)?;
                    dgup_delta.set(kk, i, j, du);
                    let dd = delta(ctx, g_down[i][j], kk)?;
                    dgdown_delta.set(kk, i, j, dd);
                }
            }
        }

        // Gamma^k_ij = g^kh/2 (delta g_ih/dx^j + delta g_jh/dx^i - delta g_ij/dx^h)
        let half = ctx.num(0.5);
        let mut gamma = SymTen3::filled(n, ctx.zero());
        for kk in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut acc = ctx.zero();
                    for hh in 0..n {
                        let s1 = dgdown_delta.get(j, i, hh);
                        let s2 = dgdown_delta.get(i, j, hh);
                        let s3 = dgdown_delta.get(hh, i, j);
                        let sum = ctx.add(s1, s2);
                        let sum = ctx.sub(sum, s3);
                        let t = ctx.mul(g_up[kk][hh], sum);
                        acc = ctx.add(acc, t);
                    }
                    let v = ctx.mul(half, acc);
                    gamma.set(kk, i, j, v);
                }
            }
        }

        // g_ijk = g_is g_jt g_kh d^h g^st
        let mut c_down = SymTen3::filled(n, ctx.zero());
        for i in 0..n {
            for j in 0..n {
                for kk in 0..n {
                    let mut acc = ctx.zero();
                    for s in 0..n {
                        for t in 0..n {
                            for hh in 0..n {
                                let m1 = ctx.mul(g_down[i][s], g_down[j][t]);
                                let m2 = ctx.mul(m1, g_down[kk][hh]);
                                let m3 = ctx.mul(m2, self.c_up.get(s, t, hh));
                                acc = ctx.add(acc, m3);
                            }
                        }
                    }
                    c_down.set(i, j, kk, acc);
                }
            }
        }

        // h_ij = g_ij - p_i p_j / K^2 ; ang = R_ij + h_ij
        let mut h = vec![vec![ctx.zero(); n]; n];
        let mut ang = vec![vec![ctx.zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                let pi = ctx.var(Var::momentum(i));
                let pj = ctx.var(Var::momentum(j));
                let pp = ctx.mul(pi, pj);
                let q = ctx.div(pp, k2);
                h[i][j] = ctx.sub(g_down[i][j], q);
                ang[i][j] = ctx.add(r2[i][j], h[i][j]);
            }
        }

        // vertical totally-geodesic condition (k, i, j)
        let mut tg_vertical = SymTen3::filled(n, ctx.zero());
        for kk in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut acc = dgup_delta.get(kk, i, j);
                    for s in 0..n {
                        let t1 = ctx.mul(n_up.get(i, kk, s), g_up[s][j]);
                        let t2 = ctx.mul(n_up.get(j, kk, s), g_up[s][i]);
                        let t = ctx.add(t1, t2);
                        acc = ctx.add(acc, t);
                    }
                    tg_vertical.set(kk, i, j, acc);
                }
            }
        }

        let mut dk2_delta = vec![ctx.zero(); n];
        for i in 0..n {
            dk2_delta[i] = delta(ctx, k2, i)?;
        }

        // --- Levi-Civita coefficient tables on the adapted basis ---
        // helper contraction tables
        // mixed_nv(k, i, j) = d^k (N_is g^sj)
        let mut mixed_nv = SymTen3::filled(n, ctx.zero());
        for kk in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut inner = ctx.zero();
                    for s in 0..n {
                        let t = ctx.mul(nconn[i][s], g_up[s][j]);
                        inner = ctx.add(inner, t);
                    }
                    let d = ctx.diff(inner, Var::momentum(kk))?;
                    mixed_nv.set(kk, i, j, d);
                }
            }
        }
        // lowered C: g_i^{jk} = g_ih d^h g^{jk}, stored (i, j, k)
        let mut c_mixed = SymTen3::filled(n, ctx.zero());
        for i in 0..n {
            for j in 0..n {
                for kk in 0..n {
                    let mut acc = ctx.zero();
                    for hh in 0..n {
                        let t = ctx.mul(g_down[i][hh], self.c_up.get(j, kk, hh));
                        acc = ctx.add(acc, t);
                    }
                    c_mixed.set(i, j, kk, acc);
                }
            }
        }

        let zero_pair = SymPair { h: vec![ctx.zero(); n], v: vec![ctx.zero(); n] };
        let mut hh_t = vec![vec![zero_pair.clone(); n]; n];
        let mut hv_t = vec![vec![zero_pair.clone(); n]; n];
        let mut vh_t = vec![vec![zero_pair.clone(); n]; n];
        let mut vv_t = vec![vec![zero_pair.clone(); n]; n];

        for i in 0..n {
            for j in 0..n {
                // nabla_{delta_i} delta_j: horizontal Gamma^k_ij, vertical
                // 1/2 (bracket curvature + g_ijk)
                let mut pair = zero_pair.clone();
                for kk in 0..n {
                    pair.h[kk] = gamma.get(kk, i, j);
                    let s = ctx.add(r3_bracket.get(i, j, kk), c_down.get(i, j, kk));
                    pair.v[kk] = ctx.mul(half, s);
                }
                hh_t[i][j] = pair;

                // nabla_{delta_i} d^j:
                //   horizontal: -1/2 (g_i^{jk} + R_ish g^{hj} g^{sk})
                //   vertical:    1/2 (delta g^{jk}/dx^i + d^k(N_is g^sj) - d^j(N_is g^sk)) g_kh
                let mut pair = zero_pair.clone();
                for kk in 0..n {
                    let mut acc = c_mixed.get(i, j, kk);
                    for s in 0..n {
                        for hh2 in 0..n {
                            let t1 = ctx.mul(r3_bracket.get(i, s, hh2), g_up[hh2][j]);
                            let t = ctx.mul(t1, g_up[s][kk]);
                            acc = ctx.add(acc, t);
                        }
                    }
                    let hm = ctx.mul(half, acc);
                    pair.h[kk] = ctx.neg(hm);
                }
                for hh2 in 0..n {
                    let mut acc = ctx.zero();
                    for kk in 0..n {
                        let a = dgup_delta.get(i, j, kk);
                        let b = mixed_nv.get(kk, i, j);
                        let c = mixed_nv.get(j, i, kk);
                        let s = ctx.add(a, b);
                        let s = ctx.sub(s, c);
                        let t = ctx.mul(s, g_down[kk][hh2]);
                        acc = ctx.add(acc, t);
                    }
                    pair.v[hh2] = ctx.mul(half, acc);
                }
                hv_t[i][j] = pair;

                // nabla_{d^i} d^j:
                //   horizontal: -1/2 (delta g^{ij}/dx^k + N^i_ks g^sj + N^j_ks g^si) g^{kh}
                //   vertical:    1/2 g_k^{ij}
                let mut pair = zero_pair.clone();
                for hh2 in 0..n {
                    let mut acc = ctx.zero();
                    for kk in 0..n {
                        let t = ctx.mul(tg_vertical.get(kk, i, j), g_up[kk][hh2]);
                        acc = ctx.add(acc, t);
                    }
                    let hm = ctx.mul(half, acc);
                    pair.h[hh2] = ctx.neg(hm);
                }
                for kk in 0..n {
                    pair.v[kk] = ctx.mul(half, c_mixed.get(kk, i, j));
                }
                vv_t[i][j] = pair;
            }
        }
        // nabla_{d^j} delta_i = nabla_{delta_i} d^j + N^j_ih d^h
        for i in 0..n {
            for j in 0..n {
                let mut pair = hv_t[i][j].clone();
                for hh2 in 0..n {
                    pair.v[hh2] = ctx.add(pair.v[hh2], n_up.get(j, i, hh2));
                }
                vh_t[j][i] = pair;
            }
        }

        self.full = Some(FullSymbols {
            g_det,
            g_down,
            ell,
            nconn,
            n_up,
            r3,
            r3_bracket,
            r2,
            gamma,
            c_down,
            h,
            ang,
            dgup_delta,
            dgdown_delta,
            tg_vertical,
            dk2_delta,
            lc: LcTables { hh: hh_t, hv: hv_t, vh: vh_t, vv: vv_t },
        });
        Ok(())
    }

    /// `delta f / delta x^i = d f/dx^i + N_ij d f/dp_j` as an expression.
    pub fn delta_derivative(&mut self, f: ExprId, i: usize) -> Result<ExprId> {
        let n = self.dim;
        let nconn = self.full()?.nconn.clone();
        let ctx = &mut self.exprs;
        let mut acc = ctx.diff(f, Var::coord(i))?;
        for j in 0..n {
            let df = ctx.diff(f, Var::momentum(j))?;
            let t = ctx.mul(nconn[i][j], df);
            acc = ctx.add(acc, t);
        }
        Ok(acc)
    }

    fn eval_mat(&self, ev: &mut Evaluator, m: &SymMat, pt: &PhasePoint) -> Result<DMatrix<f64>> {
        let n = m.len();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = ev.eval(&self.exprs, m[i][j], pt)?;
            }
        }
        Ok(out)
    }

    fn eval_ten3(&self, ev: &mut Evaluator, t: &SymTen3, pt: &PhasePoint) -> Result<Ten3> {
        let n = t.n;
        let mut out = Ten3::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    out.set(i, j, k, ev.eval(&self.exprs, t.get(i, j, k), pt)?);
                }
            }
        }
        Ok(out)
    }

    /// Evaluate the complete tensor set at a point (dim <= 3).
    pub fn tensor_set(&self, pt: &PhasePoint) -> Result<CartanTensorSet> {
        let mut ev = Evaluator::new();
        ev.begin_point(&self.exprs);
        self.tensor_set_with(&mut ev, pt)
    }

    pub fn tensor_set_with(&self, ev: &mut Evaluator, pt: &PhasePoint) -> Result<CartanTensorSet> {
        if pt.dim() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: pt.dim() });
        }
        let full = self.full()?;
        let k2 = ev.eval(&self.exprs, self.k2, pt)?;
        if !(k2 > 0.0) {
            return Err(Error::NonPositiveK { k2 });
        }
        let g_up = self.eval_mat(ev, &self.g_up, pt)?;
        let eig = nalgebra::linalg::SymmetricEigen::new(g_up.clone());
        let eig_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let eig_max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let cond = if eig_min.abs() > 0.0 { eig_max.abs() / eig_min.abs() } else { f64::INFINITY };
        if !cond.is_finite() || cond > 1e12 {
            return Err(Error::SingularMetric { cond });
        }
        let g_down = self.eval_mat(ev, &full.g_down, pt)?;
        let n = self.dim;
        let ell = DVector::from_fn(n, |i, _| {
            ev.eval(&self.exprs, full.ell[i], pt).unwrap_or(f64::NAN)
        });

        Ok(CartanTensorSet {
            at: pt.clone(),
            k: k2.sqrt(),
            k2,
            g_up,
            g_down,
            ell,
            eig_min,
            eig_max,
            cond,
            nconn: self.eval_mat(ev, &full.nconn, pt)?,
            n_up: self.eval_ten3(ev, &full.n_up, pt)?,
            r3: self.eval_ten3(ev, &full.r3, pt)?,
            r2: self.eval_mat(ev, &full.r2, pt)?,
            gamma: self.eval_ten3(ev, &full.gamma, pt)?,
            c_up: self.eval_ten3(ev, &self.c_up, pt)?,
            c_down: self.eval_ten3(ev, &full.c_down, pt)?,
            h: self.eval_mat(ev, &full.h, pt)?,
            ang: self.eval_mat(ev, &full.ang, pt)?,
        })
    }

    /// Metric data only (works in any dimension): `K`, `g^ij`, its inverse
    /// by pivoted elimination and `l = g^ij p_j`.
    pub fn fundamental_metrics(
        &self,
        pt: &PhasePoint,
    ) -> Result<(f64, DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
        let mut ev = Evaluator::new();
        self.fundamental_metrics_with(&mut ev, pt)
    }

    /// As `fundamental_metrics`, reusing an evaluation scratchpad (worth
    /// it when called repeatedly, e.g. by finite-difference oracles).
    pub fn fundamental_metrics_with(
        &self,
        ev: &mut Evaluator,
        pt: &PhasePoint,
    ) -> Result<(f64, DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
        if pt.dim() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: pt.dim() });
        }
        ev.begin_point(&self.exprs);
        let k2 = ev.eval(&self.exprs, self.k2, pt)?;
        if !(k2 > 0.0) {
            return Err(Error::NonPositiveK { k2 });
        }
        let g_up = self.eval_mat(ev, &self.g_up, pt)?;
        let eig = nalgebra::linalg::SymmetricEigen::new(g_up.clone());
        let eig_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let eig_max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let cond = if eig_min.abs() > 0.0 { eig_max.abs() / eig_min.abs() } else { f64::INFINITY };
        if !cond.is_finite() || cond > 1e12 {
            return Err(Error::SingularMetric { cond });
        }
        let g_down = g_up
            .clone()
            .lu()
            .try_inverse()
            .ok_or(Error::SingularMetric { cond })?;
        let p = DVector::from_fn(self.dim, |i, _| pt.p[i]);
        let ell = &g_up * p;
        Ok((k2.sqrt(), g_up, g_down, ell))
    }

    /// Nonlinear-connection values only, with a reusable scratchpad.
    pub fn nonlinear_connection_with(
        &self,
        ev: &mut Evaluator,
        pt: &PhasePoint,
    ) -> Result<DMatrix<f64>> {
        let full = self.full()?;
        ev.begin_point(&self.exprs);
        self.eval_mat(ev, &full.nconn, pt)
    }

    /// Nonlinear connection values at a point. For `dim <= 3` this
    /// evaluates the symbolic pipeline; for larger dimensions the values of
    /// `N` and `d^j N_ik` are assembled from derivatives of the numeric
    /// inverse through `d(g_down) = -g_down (d g_up) g_down`.
    pub fn nonlinear_connection(&self, pt: &PhasePoint) -> Result<(DMatrix<f64>, Ten3)> {
        if self.dim <= 3 {
            let ts = self.tensor_set(pt)?;
            return Ok((ts.nconn, ts.n_up));
        }
        self.nonlinear_connection_by_identity(pt)
    }

    fn nonlinear_connection_by_identity(&self, pt: &PhasePoint) -> Result<(DMatrix<f64>, Ten3)> {
        let n = self.dim;
        let mut ev = Evaluator::new();
        ev.begin_point(&self.exprs);
        // This path re-derives everything from derivatives of K^2 alone, so
        // it has to build a few symbolic derivative tables on the fly; they
        // are small (no inverse trees involved).
        let mut ctx_local = ExprContext::new();
        // Rebuild K^2 in a scratch context to keep the shared arena immutable.
        let metric2 = parse_metric(&mut ctx_local, self.metric.source(), n, self.metric.kind)?;
        let k2 = metric2.k2;
        let mut ev2 = Evaluator::new();
        ev2.begin_point(&ctx_local);

        // numeric g_up and its first/second derivatives in all variables
        let half = 0.5;
        let mut dk2_p: Vec<ExprId> = Vec::with_capacity(n);
        for i in 0..n {
            dk2_p.push(ctx_local.diff(k2, Var::momentum(i))?);
        }
        let mut gup_sym = vec![vec![ctx_local.zero(); n]; n];
        for i in 0..n {
            for j in i..n {
                let d = ctx_local.diff(dk2_p[i], Var::momentum(j))?;
                gup_sym[i][j] = d;
                gup_sym[j][i] = d;
            }
        }
        let evals = |ctx: &ExprContext, ev: &mut Evaluator, e: ExprId| -> Result<f64> {
            ev.eval(ctx, e, pt)
        };
        let mut gup = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                gup[(i, j)] = half * evals(&ctx_local, &mut ev2, gup_sym[i][j])?;
            }
        }
        let gdown = gup
            .clone()
            .lu()
            .try_inverse()
            .ok_or(Error::SingularMetric { cond: f64::INFINITY })?;

        let all_vars: Vec<Var> = (0..n)
            .map(Var::coord)
            .chain((0..n).map(Var::momentum))
            .collect();
        // first derivatives of g_up per variable
        let mut dgup: Vec<DMatrix<f64>> = Vec::with_capacity(2 * n);
        let mut dgup_sym: Vec<SymMat> = Vec::with_capacity(2 * n);
        for &v in &all_vars {
            let mut m_sym = vec![vec![ctx_local.zero(); n]; n];
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let d = ctx_local.diff(gup_sym[i][j], v)?;
                    m_sym[i][j] = d;
                    m[(i, j)] = half * evals(&ctx_local, &mut ev2, d)?;
                }
            }
            dgup_sym.push(m_sym);
            dgup.push(m);
        }
        // d(g_down)/dv = -g_down dgup g_down
        let dgdown: Vec<DMatrix<f64>> =
            dgup.iter().map(|dg| -(&gdown * dg * &gdown)).collect();

        // mixed d^k d_{x^j} K^2 values
        let mut mixed = DMatrix::zeros(n, n); // (k, j)
        let mut mixed_sym = vec![vec![ctx_local.zero(); n]; n];
        for k in 0..n {
            for j in 0..n {
                let d = ctx_local.diff(dk2_p[k], Var::coord(j))?;
                mixed_sym[k][j] = d;
                mixed[(k, j)] = evals(&ctx_local, &mut ev2, d)?;
            }
        }
        let dk2_x: Vec<f64> = (0..n)
            .map(|j| {
                let d = ctx_local.diff(k2, Var::coord(j)).unwrap();
                evals(&ctx_local, &mut ev2, d)
            })
            .collect::<Result<_>>()?;
        let dk2_pv: Vec<f64> = (0..n)
            .map(|i| evals(&ctx_local, &mut ev2, dk2_p[i]))
            .collect::<Result<_>>()?;

        let nmat_entry = |dgd_p: &[DMatrix<f64>],
                          dgd_x: &[DMatrix<f64>],
                          i: usize,
                          j: usize|
         -> f64 {
            // {g_ij, K^2} = d^k g_ij dK2/dx^k - dK2/dp_k dg_ij/dx^k
            let mut br = 0.0;
            for k in 0..n {
                br += dgd_p[k][(i, j)] * dk2_x[k] - dk2_pv[k] * dgd_x[k][(i, j)];
            }
            let mut corr = 0.0;
            for k in 0..n {
                corr += gdown[(i, k)] * mixed[(k, j)] + gdown[(j, k)] * mixed[(k, i)];
            }
            0.25 * (br - corr)
        };
        let dgdown_x = &dgdown[..n];
        let dgdown_p = &dgdown[n..];
        let mut nmat = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                nmat[(i, j)] = nmat_entry(dgdown_p, dgdown_x, i, j);
            }
        }

        // d^m N_ik needs second derivatives of g_down: differentiate the
        // inverse identity once more.
        let mut n_up = Ten3::zeros(n);
        for m_i in 0..n {
            let vm = Var::momentum(m_i);
            // second derivative matrices d_vm d_v (g_up) and mixed K^2 3rd derivatives
            let mut d2gup: Vec<DMatrix<f64>> = Vec::with_capacity(2 * n);
            for (vi, _) in all_vars.iter().enumerate() {
                let mut m = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let d = ctx_local.diff(dgup_sym[vi][i][j], vm)?;
                        m[(i, j)] = half * evals(&ctx_local, &mut ev2, d)?;
                    }
                }
                d2gup.push(m);
            }
            let dgdown_m = &dgdown[n + m_i];
            // d_vm d_v (g_down)
            let d2gdown: Vec<DMatrix<f64>> = (0..2 * n)
                .map(|vi| {
                    let a = dgdown_m * &dgup[vi] * &gdown;
                    let b = &gdown * &d2gup[vi] * &gdown;
                    let c = &gdown * &dgup[vi] * dgdown_m;
                    -(a + b + c) - DMatrix::<f64>::zeros(n, n)
                })
                .collect();
            // d^m of mixed and dk2 tables
            let mut dmixed = DMatrix::zeros(n, n);
            for k in 0..n {
                for j in 0..n {
                    let d = ctx_local.diff(mixed_sym[k][j], vm)?;
                    dmixed[(k, j)] = evals(&ctx_local, &mut ev2, d)?;
                }
            }
            let dk2_x_m: Vec<f64> = (0..n).map(|j| mixed[(m_i, j)]).collect();
            let mut gup_m_row = vec![0.0; n];
            for k in 0..n {
                gup_m_row[k] = 2.0 * gup[(m_i, k)];
            }
            let d2gdown_x = &d2gdown[..n];
            let d2gdown_p = &d2gdown[n..];
            for i in 0..n {
                for k in 0..n {
                    // differentiate nmat_entry(i, k) by p_m term by term
                    let mut br = 0.0;
                    for kk in 0..n {
                        br += d2gdown_p[kk][(i, k)] * dk2_x[kk]
                            + dgdown_p[kk][(i, k)] * dk2_x_m[kk]
                            - gup_m_row[kk] * dgdown_x[kk][(i, k)]
                            - dk2_pv[kk] * d2gdown_x[kk][(i, k)];
                    }
                    let mut corr = 0.0;
                    for kk in 0..n {
                        corr += dgdown_m[(i, kk)] * mixed[(kk, k)]
                            + gdown[(i, kk)] * dmixed[(kk, k)]
                            + dgdown_m[(k, kk)] * mixed[(kk, i)]
                            + gdown[(k, kk)] * dmixed[(kk, i)];
                    }
                    n_up.set(m_i, i, k, 0.25 * (br - corr));
                }
            }
        }
        Ok((nmat, n_up))
    }
}

/// Pointwise values of every fundamental tensor.
pub struct CartanTensorSet {
    pub at: PhasePoint,
    pub k: f64,
    pub k2: f64,
    pub g_up: DMatrix<f64>,
    pub g_down: DMatrix<f64>,
    pub ell: DVector<f64>,
    pub eig_min: f64,
    pub eig_max: f64,
    pub cond: f64,
    pub nconn: DMatrix<f64>,
    pub n_up: Ten3,
    pub r3: Ten3,
    pub r2: DMatrix<f64>,
    pub gamma: Ten3,
    pub c_up: Ten3,
    pub c_down: Ten3,
    pub h: DMatrix<f64>,
    pub ang: DMatrix<f64>,
}

/// Residuals of the structural identities every Cartan space satisfies.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityResiduals {
    /// `g^ij p_i p_j - K^2` (relative)
    pub metric_norm: f64,
    /// `p_k d^k g^ij`
    pub c_radial: f64,
    /// `R_ijk g^kh p_h`
    pub r3_radial: f64,
    /// cyclic sum `R_ijk + R_jki + R_kij`
    pub r3_cyclic: f64,
    /// `R_ij - R_ji`
    pub r2_symmetry: f64,
    /// `h_ij l^j`
    pub h_radial: f64,
    /// `max |N_ij - N_ji|` (reported, not asserted)
    pub n_asymmetry: f64,
    /// `Gamma^k_ij - Gamma^k_ji` (structural symmetry)
    pub gamma_symmetry: f64,
    /// total symmetry defect of `c_up` and `c_down`
    pub c_symmetry: f64,
}

impl CartanTensorSet {
    pub fn dim(&self) -> usize {
        self.at.dim()
    }

    pub fn identity_residuals(&self) -> IdentityResiduals {
        let n = self.dim();
        let mut r = IdentityResiduals::default();
        let mut gpp = 0.0;
        for i in 0..n {
            for j in 0..n {
                gpp += self.g_up[(i, j)] * self.at.p[i] * self.at.p[j];
            }
        }
        r.metric_norm = (gpp - self.k2).abs() / self.k2.abs().max(1.0);
        for i in 0..n {
            for j in 0..n {
                let mut c_rad = 0.0;
                for k in 0..n {
                    c_rad += self.at.p[k] * self.c_up.get(i, j, k);
                }
                r.c_radial = r.c_radial.max(c_rad.abs());
                let mut hr = 0.0;
                for k in 0..n {
                    hr += self.h[(i, k)] * self.ell[k];
                }
                r.h_radial = r.h_radial.max(hr.abs());
                r.r2_symmetry = r.r2_symmetry.max((self.r2[(i, j)] - self.r2[(j, i)]).abs());
                r.n_asymmetry = r.n_asymmetry.max((self.nconn[(i, j)] - self.nconn[(j, i)]).abs());
                let mut rad = 0.0;
                for k in 0..n {
                    rad += self.r3.get(i, j, k) * self.ell[k];
                }
                r.r3_radial = r.r3_radial.max(rad.abs());
                for k in 0..n {
                    let cyc = self.r3.get(i, j, k) + self.r3.get(j, k, i) + self.r3.get(k, i, j);
                    r.r3_cyclic = r.r3_cyclic.max(cyc.abs());
                    r.gamma_symmetry = r
                        .gamma_symmetry
                        .max((self.gamma.get(k, i, j) - self.gamma.get(k, j, i)).abs());
                    let perms = [
                        self.c_up.get(i, j, k),
                        self.c_up.get(j, i, k),
                        self.c_up.get(i, k, j),
                        self.c_up.get(k, j, i),
                    ];
                    for w in perms.windows(2) {
                        r.c_symmetry = r.c_symmetry.max((w[0] - w[1]).abs());
                    }
                    let permsd = [
                        self.c_down.get(i, j, k),
                        self.c_down.get(j, i, k),
                        self.c_down.get(i, k, j),
                        self.c_down.get(k, j, i),
                    ];
                    for w in permsd.windows(2) {
                        r.c_symmetry = r.c_symmetry.max((w[0] - w[1]).abs());
                    }
                }
            }
        }
        r
    }
}

/// A tangent vector of the cotangent bundle in adapted components:
/// `h^i` on `delta/delta x^i` and `v_i` on `d/dp_i`.
#[derive(Clone, Debug)]
pub struct TangentVector {
    pub h: DVector<f64>,
    pub v: DVector<f64>,
    pub base: PhasePoint,
}

impl TangentVector {
    pub fn new(h: DVector<f64>, v: DVector<f64>, base: PhasePoint) -> Self {
        TangentVector { h, v, base }
    }

    pub fn zero(base: PhasePoint) -> Self {
        let n = base.dim();
        TangentVector { h: DVector::zeros(n), v: DVector::zeros(n), base }
    }
}

/// h-v curvature of the nonlinear connection at a point:
/// `R_ijk` (classification orientation) and its contraction `R_ij`.
pub fn hv_curvature(geo: &CartanGeometry, pt: &PhasePoint) -> Result<(Ten3, DMatrix<f64>)> {
    let ts = geo.tensor_set(pt)?;
    Ok((ts.r3, ts.r2))
}

/// Horizontal Christoffel block `Gamma^k_ij` at a point.
pub fn christoffel_h(geo: &CartanGeometry, pt: &PhasePoint) -> Result<Ten3> {
    Ok(geo.tensor_set(pt)?.gamma)
}

/// The C-tensors: `d^k g^ij` and its triple lowering (both totally
/// symmetric, radially annihilated).
pub fn c_tensors(geo: &CartanGeometry, pt: &PhasePoint) -> Result<(Ten3, Ten3)> {
    let ts = geo.tensor_set(pt)?;
    Ok((ts.c_up, ts.c_down))
}

/// Sasaki product `G(X, Y) = g_ij X^i_h Y^j_h + g^ij X_vi Y_vj`.
pub fn sasaki_metric_apply(
    ts: &CartanTensorSet,
    x: &TangentVector,
    y: &TangentVector,
) -> Result<f64> {
    if x.base != ts.at || y.base != ts.at {
        return Err(Error::BasePointMismatch);
    }
    Ok((&ts.g_down * &x.h).dot(&y.h) + (&ts.g_up * &x.v).dot(&y.v))
}

/// Almost complex structure: `J(d^k) = g^kj delta_j`, `J(delta_i) = -g_ij d^j`.
pub fn almost_complex_apply(ts: &CartanTensorSet, x: &TangentVector) -> Result<TangentVector> {
    if x.base != ts.at {
        return Err(Error::BasePointMismatch);
    }
    let h = ts.g_up.transpose() * &x.v;
    let v = -(ts.g_down.transpose() * &x.h);
    Ok(TangentVector { h, v, base: x.base.clone() })
}

/// Angular metric and angular curvature as matrices.
pub fn angular_tensors(ts: &CartanTensorSet) -> (DMatrix<f64>, DMatrix<f64>) {
    (ts.h.clone(), ts.ang.clone())
}

/// Numeric Levi-Civita coefficients on the adapted basis at a point.
/// Basis order: `0..n` horizontal, `n..2n` vertical; entry `(a, b)` holds
/// adapted components of the derivative of basis `b` along basis `a`.
pub fn levi_civita_natural(
    geo: &CartanGeometry,
    pt: &PhasePoint,
) -> Result<Vec<Vec<(DVector<f64>, DVector<f64>)>>> {
    let full = geo.full()?;
    let n = geo.dim;
    let mut ev = Evaluator::new();
    ev.begin_point(&geo.exprs);
    let mut out = vec![vec![(DVector::zeros(n), DVector::zeros(n)); 2 * n]; 2 * n];
    let fill = |ev: &mut Evaluator, pair: &SymPair| -> Result<(DVector<f64>, DVector<f64>)> {
        let mut h = DVector::zeros(n);
        let mut v = DVector::zeros(n);
        for k in 0..n {
            h[k] = ev.eval(&geo.exprs, pair.h[k], pt)?;
            v[k] = ev.eval(&geo.exprs, pair.v[k], pt)?;
        }
        Ok((h, v))
    };
    for i in 0..n {
        for j in 0..n {
            out[i][j] = fill(&mut ev, &full.lc.hh[i][j])?;
            out[i][n + j] = fill(&mut ev, &full.lc.hv[i][j])?;
            out[n + i][j] = fill(&mut ev, &full.lc.vh[i][j])?;
            out[n + i][n + j] = fill(&mut ev, &full.lc.vv[i][j])?;
        }
    }
    Ok(out)
}


#[cfg(test)]
mod wrapper_tests {
    use super::*;
    use crate::metric::MetricKind;

    #[test]
    fn named_tensor_wrappers() {
        let geo =
            CartanGeometry::new("x2^2 * (p1^2 + p2^2)", 2, MetricKind::KSquared).unwrap();
        let at = PhasePoint::new(vec![0.3, 1.0], vec![0.6, 0.8]).unwrap();
        let (r3, r2) = hv_curvature(&geo, &at).unwrap();
        assert!(r3.max_abs() > 0.1);
        assert!((r2[(0, 0)] + geo.tensor_set(&at).unwrap().h[(0, 0)]).abs() < 1e-9);
        let gamma = christoffel_h(&geo, &at).unwrap();
        assert!((gamma.get(1, 0, 0) - 1.0).abs() < 1e-9, "hyperbolic Christoffel");
        let (cu, cd) = c_tensors(&geo, &at).unwrap();
        assert_eq!(cu.max_abs(), 0.0);
        assert_eq!(cd.max_abs(), 0.0);
    }
}
