//! Independent numeric ground truth: central finite differences, numeric Lie
//! brackets, a Koszul-formula connection solver, and a Riemannian oracle for
//! dual metrics of the form `K^2 = a^{ij}(x) p_i p_j`.
//!
//! None of this shares differentiation or inversion code with the symbolic
//! pipeline it cross-checks. Derivatives here are finite differences (or, in
//! the Riemannian oracle, hyperdual forward-mode propagation), and matrix
//! inverses use their own elimination.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{ExprContext, ExprId, NodeView, PhasePoint, UnaryFn, Var, VarKind};

/// Central-difference configuration.
#[derive(Clone, Copy, Debug)]
pub struct FdConfig {
    /// Base step (default 1e-5).
    pub step: f64,
    /// Scale the step per coordinate as `h_i = step * max(1, |coord_i|)`.
    pub scale_by_magnitude: bool,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig { step: 1e-5, scale_by_magnitude: true }
    }
}

impl FdConfig {
    pub fn with_step(step: f64) -> Self {
        FdConfig { step, scale_by_magnitude: true }
    }

    fn step_for(&self, coord: f64) -> f64 {
        if self.scale_by_magnitude {
            self.step * coord.abs().max(1.0)
        } else {
            self.step
        }
    }
}

/// A scalar function of a phase point.
pub type PointFn<'a> = &'a dyn Fn(&PhasePoint) -> Result<f64>;

/// A vector field given by its 2n natural components `(d/dx^i, d/dp_i)`.
pub type NaturalField<'a> = &'a dyn Fn(&PhasePoint) -> Result<Vec<f64>>;

fn shifted(pt: &PhasePoint, v: Var, delta: f64) -> PhasePoint {
    let mut q = pt.clone();
    match v.kind {
        VarKind::Coord => q.x[v.index] += delta,
        VarKind::Momentum => q.p[v.index] += delta,
    }
    q
}

/// Central finite-difference partial derivative. Supports total order 1
/// (2-point stencil), repeated order 2 (3-point) and mixed order 2
/// (4-point); error is O(step^2).
pub fn fd_partial(
    f: PointFn,
    pt: &PhasePoint,
    multi: &[(Var, u32)],
    cfg: &FdConfig,
) -> Result<f64> {
    let mut vars: Vec<Var> = Vec::new();
    for &(v, order) in multi {
        for _ in 0..order {
            vars.push(v);
        }
    }
    match vars.as_slice() {
        [v] => {
            let h = cfg.step_for(pt.var(*v));
            let fp = f(&shifted(pt, *v, h))?;
            let fm = f(&shifted(pt, *v, -h))?;
            Ok((fp - fm) / (2.0 * h))
        }
        [a, b] if a == b => {
            let h = cfg.step_for(pt.var(*a));
            let fp = f(&shifted(pt, *a, h))?;
            let f0 = f(pt)?;
            let fm = f(&shifted(pt, *a, -h))?;
            Ok((fp - 2.0 * f0 + fm) / (h * h))
        }
        [a, b] => {
            let ha = cfg.step_for(pt.var(*a));
            let hb = cfg.step_for(pt.var(*b));
            let pp = f(&shifted(&shifted(pt, *a, ha), *b, hb))?;
            let pm = f(&shifted(&shifted(pt, *a, ha), *b, -hb))?;
            let mp = f(&shifted(&shifted(pt, *a, -ha), *b, hb))?;
            let mm = f(&shifted(&shifted(pt, *a, -ha), *b, -hb))?;
            Ok((pp - pm - mp + mm) / (4.0 * ha * hb))
        }
        [] => f(pt),
        _ => Err(Error::Oracle(format!(
            "fd_partial supports total order <= 2, got {}",
            vars.len()
        ))),
    }
}

/// Directional derivative of `f` along the constant displacement `v`
/// (first n entries displace x, last n displace p). Central difference.
pub fn fd_directional(f: PointFn, pt: &PhasePoint, v: &[f64], cfg: &FdConfig) -> Result<f64> {
    let n = pt.dim();
    debug_assert_eq!(v.len(), 2 * n);
    let vmax = v.iter().fold(0.0f64, |m, &c| m.max(c.abs()));
    if vmax == 0.0 {
        return Ok(0.0);
    }
    let pmax = pt
        .x
        .iter()
        .chain(pt.p.iter())
        .fold(0.0f64, |m, &c| m.max(c.abs()));
    let scale = if cfg.scale_by_magnitude { pmax.max(1.0) } else { 1.0 };
    let h = cfg.step * scale / vmax;
    let mut plus = pt.clone();
    let mut minus = pt.clone();
    for i in 0..n {
        plus.x[i] += h * v[i];
        plus.p[i] += h * v[n + i];
        minus.x[i] -= h * v[i];
        minus.p[i] -= h * v[n + i];
    }
    Ok((f(&plus)? - f(&minus)?) / (2.0 * h))
}

/// Numeric Lie bracket `[X, Y]` of two vector fields at `pt`, in natural
/// components: `[X,Y] = D_{X(pt)} Y - D_{Y(pt)} X` with central differences.
pub fn lie_bracket_numeric(
    x_field: NaturalField,
    y_field: NaturalField,
    pt: &PhasePoint,
    cfg: &FdConfig,
) -> Result<Vec<f64>> {
    let n = pt.dim();
    let xv = x_field(pt)?;
    let yv = y_field(pt)?;
    let dy = directional_field_derivative(y_field, pt, &xv, cfg)?;
    let dx = directional_field_derivative(x_field, pt, &yv, cfg)?;
    let mut out = vec![0.0; 2 * n];
    for i in 0..2 * n {
        out[i] = dy[i] - dx[i];
    }
    Ok(out)
}

fn directional_field_derivative(
    field: NaturalField,
    pt: &PhasePoint,
    v: &[f64],
    cfg: &FdConfig,
) -> Result<Vec<f64>> {
    let n = pt.dim();
    let vmax = v.iter().fold(0.0f64, |m, &c| m.max(c.abs()));
    if vmax == 0.0 {
        return Ok(vec![0.0; 2 * n]);
    }
    let pmax = pt
        .x
        .iter()
        .chain(pt.p.iter())
        .fold(0.0f64, |m, &c| m.max(c.abs()));
    let scale = if cfg.scale_by_magnitude { pmax.max(1.0) } else { 1.0 };
    let h = cfg.step * scale / vmax;
    let mut plus = pt.clone();
    let mut minus = pt.clone();
    for i in 0..n {
        plus.x[i] += h * v[i];
        plus.p[i] += h * v[n + i];
        minus.x[i] -= h * v[i];
        minus.p[i] -= h * v[n + i];
    }
    let fp = field(&plus)?;
    let fm = field(&minus)?;
    Ok(fp.iter().zip(fm.iter()).map(|(a, b)| (a - b) / (2.0 * h)).collect())
}

/// Pointwise evaluators defining the adapted geometry for the Koszul oracle:
/// the two metric blocks and the nonlinear connection that defines the
/// horizontal fields.
pub struct AdaptedGeometry<'a> {
    pub dim: usize,
    pub g_down: Box<dyn Fn(&PhasePoint) -> Result<DMatrix<f64>> + 'a>,
    pub g_up: Box<dyn Fn(&PhasePoint) -> Result<DMatrix<f64>> + 'a>,
    pub nonlinear: Box<dyn Fn(&PhasePoint) -> Result<DMatrix<f64>> + 'a>,
}

impl AdaptedGeometry<'_> {
    /// Natural components of the adapted basis field `alpha` (0..n are the
    /// horizontal `delta/delta x^i`, n..2n the vertical `d/dp_i`).
    pub fn basis_field(&self, alpha: usize, q: &PhasePoint) -> Result<Vec<f64>> {
        let n = self.dim;
        let mut out = vec![0.0; 2 * n];
        if alpha < n {
            out[alpha] = 1.0;
            let nc = (self.nonlinear)(q)?;
            for j in 0..n {
                out[n + j] = nc[(alpha, j)];
            }
        } else {
            out[n + (alpha - n)] = 1.0;
        }
        Ok(out)
    }

    /// Convert natural components to adapted components at `q`.
    pub fn to_adapted(&self, q: &PhasePoint, natural: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.dim;
        let nc = (self.nonlinear)(q)?;
        let h = DVector::from_fn(n, |i, _| natural[i]);
        let mut v = DVector::from_fn(n, |j, _| natural[n + j]);
        for j in 0..n {
            for i in 0..n {
                v[j] -= nc[(i, j)] * natural[i];
            }
        }
        Ok((h, v))
    }

    /// Sasaki product of two adapted-component vectors at `q`.
    pub fn pair(
        &self,
        q: &PhasePoint,
        a: &(DVector<f64>, DVector<f64>),
        b: &(DVector<f64>, DVector<f64>),
    ) -> Result<f64> {
        let gd = (self.g_down)(q)?;
        let gu = (self.g_up)(q)?;
        Ok((gd.clone() * &a.0).dot(&b.0) + (gu.clone() * &a.1).dot(&b.1))
    }

    /// Scalar field `q -> G_q(B_beta(q), B_gamma(q))` for two basis fields.
    fn basis_pair_fn(&self, beta: usize, gamma: usize, q: &PhasePoint) -> Result<f64> {
        let n = self.dim;
        // adapted components of basis fields are constants by construction
        let gd = (self.g_down)(q)?;
        let gu = (self.g_up)(q)?;
        match (beta < n, gamma < n) {
            (true, true) => Ok(gd[(beta, gamma)]),
            (false, false) => Ok(gu[(beta - n, gamma - n)]),
            _ => Ok(0.0),
        }
    }
}

/// Connection coefficients solved from the six-term Koszul identity using
/// finite-difference directional derivatives and numeric Lie brackets.
/// Entry `(alpha, beta)` holds the adapted components of the covariant
/// derivative of basis field `beta` along basis field `alpha`.
pub fn koszul_oracle(
    geom: &AdaptedGeometry,
    pt: &PhasePoint,
    cfg: &FdConfig,
) -> Result<Vec<Vec<(DVector<f64>, DVector<f64>)>>> {
    let n = geom.dim;
    let nb = 2 * n;

    // Gram matrix of the adapted basis at pt (block diagonal).
    let gd = (geom.g_down)(pt)?;
    let gu = (geom.g_up)(pt)?;
    let mut gram = DMatrix::zeros(nb, nb);
    for i in 0..n {
        for j in 0..n {
            gram[(i, j)] = gd[(i, j)];
            gram[(n + i, n + j)] = gu[(i, j)];
        }
    }
    let lu = gram.clone().lu();
    if lu.determinant().abs() < 1e-300 {
        return Err(Error::Oracle("singular Gram matrix of the adapted basis".into()));
    }

    // Numeric brackets [B_a, B_b] in adapted components, for all pairs.
    let mut brackets = vec![vec![(DVector::zeros(n), DVector::zeros(n)); nb]; nb];
    for a in 0..nb {
        for b in (a + 1)..nb {
            let fa = |q: &PhasePoint| geom.basis_field(a, q);
            let fb = |q: &PhasePoint| geom.basis_field(b, q);
            let br = lie_bracket_numeric(&fa, &fb, pt, cfg)?;
            let ad = geom.to_adapted(pt, &br)?;
            brackets[b][a] = (-ad.0.clone(), -ad.1.clone());
            brackets[a][b] = ad;
        }
    }

    // Directional derivatives B_a G(B_b, B_c): symmetric in (b, c).
    let mut dg = vec![vec![vec![0.0; nb]; nb]; nb];
    for a in 0..nb {
        let va = geom.basis_field(a, pt)?;
        for b in 0..nb {
            for c in b..nb {
                let f = |q: &PhasePoint| geom.basis_pair_fn(b, c, q);
                let d = fd_directional(&f, pt, &va, cfg)?;
                dg[a][b][c] = d;
                dg[a][c][b] = d;
            }
        }
    }

    let basis_adapted = |a: usize| -> (DVector<f64>, DVector<f64>) {
        let mut h = DVector::zeros(n);
        let mut v = DVector::zeros(n);
        if a < n {
            h[a] = 1.0;
        } else {
            v[a - n] = 1.0;
        }
        (h, v)
    };

    let mut table = vec![vec![(DVector::zeros(n), DVector::zeros(n)); nb]; nb];
    for x in 0..nb {
        for y in 0..nb {
            let mut rhs = DVector::zeros(nb);
            for z in 0..nb {
                let bz = basis_adapted(z);
                let by = basis_adapted(y);
                let bx = basis_adapted(x);
                let term = dg[x][y][z] + dg[y][x][z] - dg[z][x][y]
                    - geom.pair(pt, &brackets[x][z], &by)?
                    - geom.pair(pt, &brackets[y][z], &bx)?
                    + geom.pair(pt, &brackets[x][y], &bz)?;
                rhs[z] = 0.5 * term;
            }
            let coeff = lu
                .solve(&rhs)
                .ok_or_else(|| Error::Oracle("Koszul solve failed".into()))?;
            let h = DVector::from_fn(n, |i, _| coeff[i]);
            let v = DVector::from_fn(n, |i, _| coeff[n + i]);
            table[x][y] = (h, v);
        }
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Hyperdual numbers: exact first/second derivatives in two directions.
// ---------------------------------------------------------------------------

/// `v + a d1 + b d2 + c d1 d2` with `d1^2 = d2^2 = 0`. Propagates the value,
/// both first derivatives and the mixed second derivative exactly.
#[derive(Clone, Copy, Debug)]
struct Hd2 {
    v: f64,
    a: f64,
    b: f64,
    c: f64,
}

impl Hd2 {
    fn constant(v: f64) -> Self {
        Hd2 { v, a: 0.0, b: 0.0, c: 0.0 }
    }

    fn add(self, o: Self) -> Self {
        Hd2 { v: self.v + o.v, a: self.a + o.a, b: self.b + o.b, c: self.c + o.c }
    }

    fn sub(self, o: Self) -> Self {
        Hd2 { v: self.v - o.v, a: self.a - o.a, b: self.b - o.b, c: self.c - o.c }
    }

    fn mul(self, o: Self) -> Self {
        Hd2 {
            v: self.v * o.v,
            a: self.a * o.v + self.v * o.a,
            b: self.b * o.v + self.v * o.b,
            c: self.c * o.v + self.a * o.b + self.b * o.a + self.v * o.c,
        }
    }

    /// Chain rule through a scalar function with derivatives `d1 = u'(v)`,
    /// `d2 = u''(v)`.
    fn lift(self, u: f64, du: f64, ddu: f64) -> Self {
        Hd2 {
            v: u,
            a: du * self.a,
            b: du * self.b,
            c: ddu * self.a * self.b + du * self.c,
        }
    }

    fn recip(self) -> Self {
        let inv = 1.0 / self.v;
        self.lift(inv, -inv * inv, 2.0 * inv * inv * inv)
    }

    fn div(self, o: Self) -> Self {
        self.mul(o.recip())
    }

    fn powf_const(self, e: f64) -> Self {
        let u = self.v.powf(e);
        let du = e * self.v.powf(e - 1.0);
        let ddu = e * (e - 1.0) * self.v.powf(e - 2.0);
        self.lift(u, du, ddu)
    }

    fn fun(self, f: UnaryFn) -> Self {
        match f {
            UnaryFn::Sqrt => {
                let s = self.v.sqrt();
                self.lift(s, 0.5 / s, -0.25 / (s * s * s))
            }
            UnaryFn::Exp => {
                let e = self.v.exp();
                self.lift(e, e, e)
            }
            UnaryFn::Log => self.lift(self.v.ln(), 1.0 / self.v, -1.0 / (self.v * self.v)),
            UnaryFn::Sin => self.lift(self.v.sin(), self.v.cos(), -self.v.sin()),
            UnaryFn::Cos => self.lift(self.v.cos(), -self.v.sin(), -self.v.cos()),
        }
    }
}

/// Evaluate an expression with hyperdual seeds on coordinates `k` and `l`
/// (momenta are plain values). Returns (value, d/dx_k, d/dx_l, d2/dx_k dx_l).
fn eval_hd2_coords(
    ctx: &ExprContext,
    id: ExprId,
    pt: &PhasePoint,
    k: usize,
    l: usize,
) -> Result<(f64, f64, f64, f64)> {
    fn walk(ctx: &ExprContext, id: ExprId, pt: &PhasePoint, k: usize, l: usize) -> Result<Hd2> {
        let r = match ctx.node(id) {
            NodeView::Num(v) => Hd2::constant(v),
            NodeView::Var(var) => {
                let mut h = Hd2::constant(pt.var(var));
                if var.kind == VarKind::Coord {
                    if var.index == k {
                        h.a = 1.0;
                    }
                    if var.index == l {
                        h.b = 1.0;
                    }
                }
                h
            }
            NodeView::Add(x, y) => walk(ctx, x, pt, k, l)?.add(walk(ctx, y, pt, k, l)?),
            NodeView::Sub(x, y) => walk(ctx, x, pt, k, l)?.sub(walk(ctx, y, pt, k, l)?),
            NodeView::Mul(x, y) => walk(ctx, x, pt, k, l)?.mul(walk(ctx, y, pt, k, l)?),
            NodeView::Div(x, y) => walk(ctx, x, pt, k, l)?.div(walk(ctx, y, pt, k, l)?),
            NodeView::Pow(x, y) => {
                let base = walk(ctx, x, pt, k, l)?;
                let exp = walk(ctx, y, pt, k, l)?;
                if exp.a == 0.0 && exp.b == 0.0 && exp.c == 0.0 {
                    base.powf_const(exp.v)
                } else if base.a == 0.0 && base.b == 0.0 && base.c == 0.0 {
                    // c^g = exp(g ln c)
                    exp.mul(Hd2::constant(base.v.ln())).fun(UnaryFn::Exp)
                } else {
                    return Err(Error::Oracle(
                        "hyperdual power with two non-constant operands".into(),
                    ));
                }
            }
            NodeView::Neg(x) => Hd2::constant(0.0).sub(walk(ctx, x, pt, k, l)?),
            NodeView::Fun(f, x) => walk(ctx, x, pt, k, l)?.fun(f),
        };
        Ok(r)
    }
    let h = walk(ctx, id, pt, k, l)?;
    if !(h.v.is_finite() && h.a.is_finite() && h.b.is_finite() && h.c.is_finite()) {
        return Err(Error::Oracle("hyperdual evaluation left the domain".into()));
    }
    Ok((h.v, h.a, h.b, h.c))
}

/// Ground truth for a Riemannian base metric given through its dual
/// `a^{ij}(x)`: Levi-Civita Christoffel symbols `gamma^h_ij`, their first
/// coordinate derivatives, and (for n = 2) the Gaussian curvature.
pub struct RiemannOracle {
    pub dim: usize,
    pub a_down: DMatrix<f64>,
    /// `gamma[h][i][j]`
    pub christoffels: Vec<Vec<Vec<f64>>>,
    /// Gaussian curvature at the point (n = 2 only).
    pub gaussian_curvature: Option<f64>,
}

/// Evaluate the oracle at coordinates `x` (momenta in `pt` are ignored by
/// `a^{ij}` but required for expression evaluation plumbing).
pub fn riemann_oracle(
    ctx: &ExprContext,
    a_up: &[Vec<ExprId>],
    pt: &PhasePoint,
) -> Result<RiemannOracle> {
    let n = a_up.len();
    // values and exact first/second coordinate derivatives of a^{ij}
    let mut val = DMatrix::zeros(n, n);
    let mut d1 = vec![DMatrix::zeros(n, n); n];
    let mut d2 = vec![vec![DMatrix::zeros(n, n); n]; n];
    for k in 0..n {
        for l in k..n {
            for i in 0..n {
                for j in 0..n {
                    let (v, da, db, dab) = eval_hd2_coords(ctx, a_up[i][j], pt, k, l)?;
                    val[(i, j)] = v;
                    d1[k][(i, j)] = da;
                    d1[l][(i, j)] = db;
                    d2[k][l][(i, j)] = dab;
                    d2[l][k][(i, j)] = dab;
                }
            }
        }
    }

    let a_down = val
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Oracle("a^{ij} is singular at the sample point".into()))?;

    // d(a_down) = -a_down (dA) a_down
    let d1_down: Vec<DMatrix<f64>> =
        (0..n).map(|k| -(&a_down * &d1[k] * &a_down)).collect();
    // d_l d_k (a_down) via differentiating the identity once more
    let mut d2_down = vec![vec![DMatrix::zeros(n, n); n]; n];
    for k in 0..n {
        for l in 0..n {
            let t1 = &a_down * &d1[l] * &a_down * &d1[k] * &a_down;
            let t2 = &a_down * &d1[k] * &a_down * &d1[l] * &a_down;
            let t3 = &a_down * &d2[k][l] * &a_down;
            d2_down[k][l] = t1 + t2 - t3;
        }
    }

    // gamma^h_ij = 1/2 a^{hk} (d_i a_jk + d_j a_ik - d_k a_ij)
    let gamma_of = |di: &[DMatrix<f64>], base: &DMatrix<f64>| -> Vec<Vec<Vec<f64>>> {
        let mut g = vec![vec![vec![0.0; n]; n]; n];
        for h in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += base[(h, k)]
                            * (di[i][(j, k)] + di[j][(i, k)] - di[k][(i, j)]);
                    }
                    g[h][i][j] = 0.5 * s;
                }
            }
        }
        g
    };
    let christoffels = gamma_of(&d1_down, &val);

    // d_l gamma^h_ij, needed for the curvature tensor
    let mut dgamma = vec![vec![vec![vec![0.0; n]; n]; n]; n]; // [l][h][i][j]
    for l in 0..n {
        for h in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += d1[l][(h, k)]
                            * (d1_down[i][(j, k)] + d1_down[j][(i, k)] - d1_down[k][(i, j)]);
                        s += val[(h, k)]
                            * (d2_down[l][i][(j, k)] + d2_down[l][j][(i, k)]
                                - d2_down[l][k][(i, j)]);
                    }
                    dgamma[l][h][i][j] = 0.5 * s;
                }
            }
        }
    }

    // R^l_{kij} = d_i G^l_jk - d_j G^l_ik + G^m_jk G^l_im - G^m_ik G^l_jm
    let riem = |l: usize, k: usize, i: usize, j: usize| -> f64 {
        let mut r = dgamma[i][l][j][k] - dgamma[j][l][i][k];
        for m in 0..n {
            r += christoffels[m][j][k] * christoffels[l][i][m]
                - christoffels[m][i][k] * christoffels[l][j][m];
        }
        r
    };

    let gaussian_curvature = if n == 2 {
        let mut num = 0.0;
        for l in 0..2 {
            num += a_down[(0, l)] * riem(l, 1, 0, 1);
        }
        let den = a_down[(0, 0)] * a_down[(1, 1)] - a_down[(0, 1)] * a_down[(1, 0)];
        Some(num / den)
    } else {
        None
    };

    Ok(RiemannOracle { dim: n, a_down, christoffels, gaussian_curvature })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_into;

    fn pt(x: Vec<f64>, p: Vec<f64>) -> PhasePoint {
        PhasePoint::new(x, p).unwrap()
    }

    #[test]
    fn fd_simple_square() {
        let f = |q: &PhasePoint| Ok(q.p[0] * q.p[0]);
        let at = pt(vec![0.0, 0.0], vec![1.0, 0.0]);
        let d = fd_partial(&f, &at, &[(Var::momentum(0), 1)], &FdConfig::default()).unwrap();
        assert!((d - 2.0).abs() < 1e-8, "{d}");
    }

    #[test]
    fn fd_constant_is_zero() {
        let f = |_: &PhasePoint| Ok(42.0);
        let at = pt(vec![0.0, 0.0], vec![1.0, 0.0]);
        let d = fd_partial(&f, &at, &[(Var::coord(0), 1)], &FdConfig::default()).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn fd_mixed_second() {
        // f = x1 * p2^2: d2f/dx1 dp2 = 2 p2
        let f = |q: &PhasePoint| Ok(q.x[0] * q.p[1] * q.p[1]);
        let at = pt(vec![0.5, 0.0], vec![1.0, 0.7]);
        let d = fd_partial(
            &f,
            &at,
            &[(Var::coord(0), 1), (Var::momentum(1), 1)],
            &FdConfig::default(),
        )
        .unwrap();
        assert!((d - 1.4).abs() < 1e-6, "{d}");
    }

    #[test]
    fn bracket_of_coordinate_fields_vanishes() {
        let n = 2usize;
        let fx = move |_q: &PhasePoint| Ok({
            let mut v = vec![0.0; 2 * n];
            v[0] = 1.0;
            v
        });
        let fp = move |_q: &PhasePoint| Ok({
            let mut v = vec![0.0; 2 * n];
            v[3] = 1.0;
            v
        });
        let at = pt(vec![0.3, 0.4], vec![1.0, 2.0]);
        let br = lie_bracket_numeric(&fx, &fp, &at, &FdConfig::default()).unwrap();
        for c in br {
            assert!(c.abs() < 1e-7);
        }
    }

    #[test]
    fn hyperbolic_plane_curvature_is_minus_one() {
        // a^{ij} = x2^2 delta_ij  =>  a_ij = delta_ij / x2^2, curvature -1
        let mut ctx = ExprContext::new();
        let e = parse_into(&mut ctx, "x2^2", 2).unwrap();
        let z = ctx.zero();
        let a_up = vec![vec![e, z], vec![z, e]];
        let at = pt(vec![0.0, 1.0], vec![1.0, 0.0]);
        let orc = riemann_oracle(&ctx, &a_up, &at).unwrap();
        let k = orc.gaussian_curvature.unwrap();
        assert!((k + 1.0).abs() < 1e-8, "curvature {k}");

        // and at another height of the half-plane
        let at2 = pt(vec![0.7, 1.8], vec![1.0, 0.0]);
        let orc2 = riemann_oracle(&ctx, &a_up, &at2).unwrap();
        assert!((orc2.gaussian_curvature.unwrap() + 1.0).abs() < 1e-8);
    }

    #[test]
    fn hyperbolic_scaling_law() {
        // a_ij = 4 delta_ij / x2^2  (dual a^{ij} = x2^2/4 delta)  => curvature -1/4
        let mut ctx = ExprContext::new();
        let e = parse_into(&mut ctx, "x2^2/4", 2).unwrap();
        let z = ctx.zero();
        let a_up = vec![vec![e, z], vec![z, e]];
        let at = pt(vec![0.0, 1.3], vec![1.0, 0.0]);
        let orc = riemann_oracle(&ctx, &a_up, &at).unwrap();
        assert!((orc.gaussian_curvature.unwrap() + 0.25).abs() < 1e-8);
    }

    #[test]
    fn flat_metric_zero_christoffels() {
        let ctx = ExprContext::new();
        let one = ctx.one();
        let z = ctx.zero();
        let a_up = vec![vec![one, z], vec![z, one]];
        let at = pt(vec![0.2, -0.4], vec![1.0, 0.0]);
        let orc = riemann_oracle(&ctx, &a_up, &at).unwrap();
        assert_eq!(orc.gaussian_curvature.unwrap(), 0.0);
        for h in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(orc.christoffels[h][i][j], 0.0);
                }
            }
        }
    }

    #[test]
    fn hyperbolic_christoffels_match_closed_form() {
        let mut ctx = ExprContext::new();
        let e = parse_into(&mut ctx, "x2^2", 2).unwrap();
        let z = ctx.zero();
        let a_up = vec![vec![e, z], vec![z, e]];
        let y = 1.7;
        let at = pt(vec![0.0, y], vec![1.0, 0.0]);
        let orc = riemann_oracle(&ctx, &a_up, &at).unwrap();
        let g = &orc.christoffels;
        assert!((g[0][0][1] + 1.0 / y).abs() < 1e-12);
        assert!((g[0][1][0] + 1.0 / y).abs() < 1e-12);
        assert!((g[1][0][0] - 1.0 / y).abs() < 1e-12);
        assert!((g[1][1][1] + 1.0 / y).abs() < 1e-12);
        assert!(g[0][0][0].abs() < 1e-12);
        assert!(g[1][0][1].abs() < 1e-12);
    }

    #[test]
    fn richardson_consistency() {
        // halving the step cuts the FD error by ~4x on a transcendental
        let f = |q: &PhasePoint| Ok((q.p[0]).sin() * (q.x[0]).exp());
        let at = pt(vec![0.6, 0.0], vec![0.9, 0.0]);
        let exact = 0.9f64.cos() * 0.6f64.exp();
        let coarse = fd_partial(
            &f,
            &at,
            &[(Var::momentum(0), 1)],
            &FdConfig { step: 1e-3, scale_by_magnitude: false },
        )
        .unwrap();
        let fine = fd_partial(
            &f,
            &at,
            &[(Var::momentum(0), 1)],
            &FdConfig { step: 5e-4, scale_by_magnitude: false },
        )
        .unwrap();
        let ratio = (coarse - exact).abs() / (fine - exact).abs();
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }
}
