//! Hash-consed expression trees over phase-space variables `x1..xn`, `p1..pn`
//! with exact symbolic differentiation and fast memoized point evaluation.
//!
//! Trees are immutable once interned. Building (parsing, differentiating)
//! requires `&mut ExprContext`; evaluation is pure and takes `&ExprContext`,
//! so a fully built context can be shared across threads.
//!
//! Simplification is deliberately limited to constant folding and zero/one
//! rules; anything stronger would make derivative caches harder to reason
//! about and is not needed for tolerance-based checks.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Index of an interned node. Children always have smaller ids than parents,
/// so arena order is a topological order.
pub type ExprId = u32;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum VarKind {
    Coord,
    Momentum,
}

/// A phase-space variable. `index` is zero-based; the DSL surface syntax
/// (`x1`, `p2`, ...) is one-based.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct Var {
    pub kind: VarKind,
    pub index: usize,
}

impl Var {
    pub fn coord(index: usize) -> Self {
        Var { kind: VarKind::Coord, index }
    }
    pub fn momentum(index: usize) -> Self {
        Var { kind: VarKind::Momentum, index }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            VarKind::Coord => write!(f, "x{}", self.index + 1),
            VarKind::Momentum => write!(f, "p{}", self.index + 1),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum UnaryFn {
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
}

impl UnaryFn {
    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Sqrt => "sqrt",
            UnaryFn::Exp => "exp",
            UnaryFn::Log => "log",
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            UnaryFn::Sqrt => v.sqrt(),
            UnaryFn::Exp => v.exp(),
            UnaryFn::Log => v.ln(),
            UnaryFn::Sin => v.sin(),
            UnaryFn::Cos => v.cos(),
        }
    }
}

/// Interned node. Constants store the f64 bit pattern so the node is `Eq + Hash`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Node {
    Num(u64),
    Var(Var),
    Add(ExprId, ExprId),
    Sub(ExprId, ExprId),
    Mul(ExprId, ExprId),
    Div(ExprId, ExprId),
    Pow(ExprId, ExprId),
    Neg(ExprId),
    Fun(UnaryFn, ExprId),
}

/// Read-only node structure exposed to independent evaluators.
#[derive(Clone, Copy, Debug)]
pub enum NodeView {
    Num(f64),
    Var(Var),
    Add(ExprId, ExprId),
    Sub(ExprId, ExprId),
    Mul(ExprId, ExprId),
    Div(ExprId, ExprId),
    Pow(ExprId, ExprId),
    Neg(ExprId),
    Fun(UnaryFn, ExprId),
}

/// A point of the slit cotangent bundle: `n` coordinates and `n` momenta,
/// with `p != 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if x.len() != p.len() {
            return Err(Error::DimMismatch { expected: x.len(), got: p.len() });
        }
        if p.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroMomentum);
        }
        Ok(PhasePoint { x, p })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn var(&self, v: Var) -> f64 {
        match v.kind {
            VarKind::Coord => self.x[v.index],
            VarKind::Momentum => self.p[v.index],
        }
    }

    /// Rescale momenta in place-free fashion: `p -> lambda p`.
    pub fn scaled_momenta(&self, lambda: f64) -> PhasePoint {
        PhasePoint { x: self.x.clone(), p: self.p.iter().map(|&v| lambda * v).collect() }
    }
}

/// Arena of hash-consed expressions plus the single-step derivative cache.
pub struct ExprContext {
    nodes: Vec<Node>,
    dedup: HashMap<Node, ExprId>,
    diff_cache: HashMap<(ExprId, Var), ExprId>,
    zero: ExprId,
    one: ExprId,
}

impl Default for ExprContext {
    fn default() -> Self {
        Self::new()
    }
}

impl ExprContext {
    pub fn new() -> Self {
        let mut ctx = ExprContext {
            nodes: Vec::new(),
            dedup: HashMap::new(),
            diff_cache: HashMap::new(),
            zero: 0,
            one: 0,
        };
        ctx.zero = ctx.intern(Node::Num(0f64.to_bits()));
        ctx.one = ctx.intern(Node::Num(1f64.to_bits()));
        ctx
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn intern(&mut self, node: Node) -> ExprId {
        if let Some(&id) = self.dedup.get(&node) {
            return id;
        }
        let id = self.nodes.len() as ExprId;
        self.nodes.push(node);
        self.dedup.insert(node, id);
        id
    }

    pub fn zero(&self) -> ExprId {
        self.zero
    }

    pub fn one(&self) -> ExprId {
        self.one
    }

    pub fn num(&mut self, v: f64) -> ExprId {
        // normalize -0.0 so interning is stable
        let v = if v == 0.0 { 0.0 } else { v };
        self.intern(Node::Num(v.to_bits()))
    }

    pub fn var(&mut self, v: Var) -> ExprId {
        self.intern(Node::Var(v))
    }

    pub fn as_const(&self, id: ExprId) -> Option<f64> {
        match self.nodes[id as usize] {
            Node::Num(bits) => Some(f64::from_bits(bits)),
            _ => None,
        }
    }

    fn is_zero(&self, id: ExprId) -> bool {
        self.as_const(id) == Some(0.0)
    }

    fn is_one(&self, id: ExprId) -> bool {
        self.as_const(id) == Some(1.0)
    }

    pub fn add(&mut self, a: ExprId, b: ExprId) -> ExprId {
        if self.is_zero(a) {
            return b;
        }
        if self.is_zero(b) {
            return a;
        }
        if let (Some(x), Some(y)) = (self.as_const(a), self.as_const(b)) {
            return self.num(x + y);
        }
        self.intern(Node::Add(a, b))
    }

    pub fn sub(&mut self, a: ExprId, b: ExprId) -> ExprId {
        if self.is_zero(b) {
            return a;
        }
        if self.is_zero(a) {
            return self.neg(b);
        }
        if let (Some(x), Some(y)) = (self.as_const(a), self.as_const(b)) {
            return self.num(x - y);
        }
        self.intern(Node::Sub(a, b))
    }

    pub fn mul(&mut self, a: ExprId, b: ExprId) -> ExprId {
        if self.is_zero(a) || self.is_zero(b) {
            return self.zero;
        }
        if self.is_one(a) {
            return b;
        }
        if self.is_one(b) {
            return a;
        }
        if let (Some(x), Some(y)) = (self.as_const(a), self.as_const(b)) {
            return self.num(x * y);
        }
        self.intern(Node::Mul(a, b))
    }

    pub fn div(&mut self, a: ExprId, b: ExprId) -> ExprId {
        if self.is_zero(a) {
            return self.zero;
        }
        if self.is_one(b) {
            return a;
        }
        if let (Some(x), Some(y)) = (self.as_const(a), self.as_const(b)) {
            if y != 0.0 {
                return self.num(x / y);
            }
        }
        self.intern(Node::Div(a, b))
    }

    pub fn pow(&mut self, base: ExprId, exp: ExprId) -> ExprId {
        if self.is_one(exp) {
            return base;
        }
        if self.is_zero(exp) || self.is_one(base) {
            return self.one;
        }
        if let (Some(x), Some(y)) = (self.as_const(base), self.as_const(exp)) {
            let v = x.powf(y);
            if v.is_finite() {
                return self.num(v);
            }
        }
        self.intern(Node::Pow(base, exp))
    }

    pub fn neg(&mut self, a: ExprId) -> ExprId {
        if let Node::Neg(inner) = self.nodes[a as usize] {
            return inner;
        }
        if let Some(x) = self.as_const(a) {
            return self.num(-x);
        }
        self.intern(Node::Neg(a))
    }

    pub fn fun(&mut self, f: UnaryFn, a: ExprId) -> ExprId {
        if let Some(x) = self.as_const(a) {
            let v = f.apply(x);
            if v.is_finite() {
                return self.num(v);
            }
        }
        self.intern(Node::Fun(f, a))
    }

    /// Sum of a slice of terms (left fold; empty sum is 0).
    pub fn sum(&mut self, terms: &[ExprId]) -> ExprId {
        let mut acc = self.zero;
        for &t in terms {
            acc = self.add(acc, t);
        }
        acc
    }

    /// True when no variable occurs in the cone of `id`.
    pub fn is_constant_tree(&self, id: ExprId) -> bool {
        match self.nodes[id as usize] {
            Node::Num(_) => true,
            Node::Var(_) => false,
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                self.is_constant_tree(a) && self.is_constant_tree(b)
            }
            Node::Neg(a) | Node::Fun(_, a) => self.is_constant_tree(a),
        }
    }

    /// Largest one-based variable index used, per kind: `(max_x, max_p)`.
    pub fn max_indices(&self, id: ExprId) -> (usize, usize) {
        fn walk(ctx: &ExprContext, id: ExprId, mx: &mut usize, mp: &mut usize) {
            match ctx.nodes[id as usize] {
                Node::Num(_) => {}
                Node::Var(v) => match v.kind {
                    VarKind::Coord => *mx = (*mx).max(v.index + 1),
                    VarKind::Momentum => *mp = (*mp).max(v.index + 1),
                },
                Node::Add(a, b)
                | Node::Sub(a, b)
                | Node::Mul(a, b)
                | Node::Div(a, b)
                | Node::Pow(a, b) => {
                    walk(ctx, a, mx, mp);
                    walk(ctx, b, mx, mp);
                }
                Node::Neg(a) | Node::Fun(_, a) => walk(ctx, a, mx, mp),
            }
        }
        let (mut mx, mut mp) = (0, 0);
        walk(self, id, &mut mx, &mut mp);
        (mx, mp)
    }

    /// Exact partial derivative with respect to one variable. Memoized.
    pub fn diff(&mut self, id: ExprId, v: Var) -> Result<ExprId> {
        if let Some(&d) = self.diff_cache.get(&(id, v)) {
            return Ok(d);
        }
        let node = self.nodes[id as usize];
        let d = match node {
            Node::Num(_) => self.zero,
            Node::Var(w) => {
                if w == v {
                    self.one
                } else {
                    self.zero
                }
            }
            Node::Add(a, b) => {
                let (da, db) = (self.diff(a, v)?, self.diff(b, v)?);
                self.add(da, db)
            }
            Node::Sub(a, b) => {
                let (da, db) = (self.diff(a, v)?, self.diff(b, v)?);
                self.sub(da, db)
            }
            Node::Mul(a, b) => {
                let (da, db) = (self.diff(a, v)?, self.diff(b, v)?);
                let t1 = self.mul(da, b);
                let t2 = self.mul(a, db);
                self.add(t1, t2)
            }
            Node::Div(a, b) => {
                // (a'b - ab') / b^2
                let (da, db) = (self.diff(a, v)?, self.diff(b, v)?);
                let t1 = self.mul(da, b);
                let t2 = self.mul(a, db);
                let numer = self.sub(t1, t2);
                let denom = self.mul(b, b);
                self.div(numer, denom)
            }
            Node::Pow(base, exp) => {
                match (self.as_const(base), self.as_const(exp)) {
                    (_, Some(c)) => {
                        // d(f^c) = c f^(c-1) f'
                        let dbase = self.diff(base, v)?;
                        if self.is_zero(dbase) {
                            self.zero
                        } else {
                            let cm1 = self.num(c - 1.0);
                            let pw = self.pow(base, cm1);
                            let cc = self.num(c);
                            let t = self.mul(cc, pw);
                            self.mul(t, dbase)
                        }
                    }
                    (Some(c), None) => {
                        // d(c^g) = c^g ln(c) g'
                        if c <= 0.0 {
                            return Err(Error::Derivative(format!(
                                "cannot differentiate {c}^g with non-positive base"
                            )));
                        }
                        let dexp = self.diff(exp, v)?;
                        let lnc = self.num(c.ln());
                        let t = self.mul(id, lnc);
                        self.mul(t, dexp)
                    }
                    (None, None) => {
                        return Err(Error::Derivative(
                            "exponent and base both non-constant; rejected by the DSL".into(),
                        ))
                    }
                }
            }
            Node::Neg(a) => {
                let da = self.diff(a, v)?;
                self.neg(da)
            }
            Node::Fun(f, a) => {
                let da = self.diff(a, v)?;
                if self.is_zero(da) {
                    self.zero
                } else {
                    let outer = match f {
                        UnaryFn::Sqrt => {
                            // 1 / (2 sqrt a)
                            let two = self.num(2.0);
                            let s = self.fun(UnaryFn::Sqrt, a);
                            let d = self.mul(two, s);
                            self.div(self.one, d)
                        }
                        UnaryFn::Exp => self.fun(UnaryFn::Exp, a),
                        UnaryFn::Log => self.div(self.one, a),
                        UnaryFn::Sin => self.fun(UnaryFn::Cos, a),
                        UnaryFn::Cos => {
                            let s = self.fun(UnaryFn::Sin, a);
                            self.neg(s)
                        }
                    };
                    self.mul(outer, da)
                }
            }
        };
        self.diff_cache.insert((id, v), d);
        Ok(d)
    }

    /// Derivative for a multi-index given as `(variable, order)` pairs.
    /// Entries are expanded and sorted, so the result id is identical
    /// regardless of the order in which the entries are listed.
    pub fn diff_multi(&mut self, id: ExprId, multi: &[(Var, u32)]) -> Result<ExprId> {
        let total: u32 = multi.iter().map(|&(_, o)| o).sum();
        if total > 6 {
            return Err(Error::Derivative(format!(
                "total derivative order {total} exceeds the supported maximum of 6"
            )));
        }
        let mut vars: Vec<Var> = Vec::new();
        for &(v, order) in multi {
            for _ in 0..order {
                vars.push(v);
            }
        }
        vars.sort();
        let mut cur = id;
        for v in vars {
            cur = self.diff(cur, v)?;
        }
        Ok(cur)
    }

    /// Poisson bracket `{f, g} = df/dp_i dg/dx^i - dg/dp_i df/dx^i`.
    pub fn poisson_bracket(&mut self, f: ExprId, g: ExprId, dim: usize) -> Result<ExprId> {
        let mut acc = self.zero;
        for i in 0..dim {
            let fp = self.diff(f, Var::momentum(i))?;
            let gx = self.diff(g, Var::coord(i))?;
            let gp = self.diff(g, Var::momentum(i))?;
            let fx = self.diff(f, Var::coord(i))?;
            let t1 = self.mul(fp, gx);
            let t2 = self.mul(gp, fx);
            let d = self.sub(t1, t2);
            acc = self.add(acc, d);
        }
        Ok(acc)
    }

    /// Render a node for diagnostics.
    pub fn render(&self, id: ExprId) -> String {
        let mut s = String::new();
        self.render_prec(id, 0, &mut s);
        s
    }

    fn render_prec(&self, id: ExprId, parent_prec: u8, out: &mut String) {
        // precedence: 1 add/sub, 2 mul/div, 3 neg, 4 pow, 5 atom
        let (prec, text): (u8, Option<String>) = match self.nodes[id as usize] {
            Node::Num(bits) => (5, Some(format!("{}", f64::from_bits(bits)))),
            Node::Var(v) => (5, Some(v.to_string())),
            _ => (
                match self.nodes[id as usize] {
                    Node::Add(..) | Node::Sub(..) => 1,
                    Node::Mul(..) | Node::Div(..) => 2,
                    Node::Neg(..) => 3,
                    Node::Pow(..) => 4,
                    _ => 5,
                },
                None,
            ),
        };
        if let Some(t) = text {
            out.push_str(&t);
            return;
        }
        let need_paren = prec < parent_prec;
        if need_paren {
            out.push('(');
        }
        match self.nodes[id as usize] {
            Node::Add(a, b) => {
                self.render_prec(a, 1, out);
                out.push_str(" + ");
                self.render_prec(b, 2, out);
            }
            Node::Sub(a, b) => {
                self.render_prec(a, 1, out);
                out.push_str(" - ");
                self.render_prec(b, 2, out);
            }
            Node::Mul(a, b) => {
                self.render_prec(a, 2, out);
                out.push('*');
                self.render_prec(b, 3, out);
            }
            Node::Div(a, b) => {
                self.render_prec(a, 2, out);
                out.push('/');
                self.render_prec(b, 3, out);
            }
            Node::Neg(a) => {
                out.push('-');
                self.render_prec(a, 3, out);
            }
            Node::Pow(a, b) => {
                self.render_prec(a, 5, out);
                out.push('^');
                self.render_prec(b, 4, out);
            }
            Node::Fun(f, a) => {
                out.push_str(f.name());
                out.push('(');
                self.render_prec(a, 0, out);
                out.push(')');
            }
            Node::Num(_) | Node::Var(_) => unreachable!(),
        }
        if need_paren {
            out.push(')');
        }
    }

    /// Structural equality of trees living in (possibly) different contexts.
    pub fn structurally_equal(&self, id: ExprId, other: &ExprContext, other_id: ExprId) -> bool {
        match (self.nodes[id as usize], other.nodes[other_id as usize]) {
            (Node::Num(a), Node::Num(b)) => a == b,
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Add(a1, b1), Node::Add(a2, b2))
            | (Node::Sub(a1, b1), Node::Sub(a2, b2))
            | (Node::Mul(a1, b1), Node::Mul(a2, b2))
            | (Node::Div(a1, b1), Node::Div(a2, b2))
            | (Node::Pow(a1, b1), Node::Pow(a2, b2)) => {
                self.structurally_equal(a1, other, a2) && self.structurally_equal(b1, other, b2)
            }
            (Node::Neg(a1), Node::Neg(a2)) => self.structurally_equal(a1, other, a2),
            (Node::Fun(f1, a1), Node::Fun(f2, a2)) => {
                f1 == f2 && self.structurally_equal(a1, other, a2)
            }
            _ => false,
        }
    }

    /// Read-only structural view of a node, for callers that walk trees
    /// with their own evaluation semantics (e.g. the numeric oracles).
    pub fn node(&self, id: ExprId) -> NodeView {
        match self.nodes[id as usize] {
            Node::Num(bits) => NodeView::Num(f64::from_bits(bits)),
            Node::Var(v) => NodeView::Var(v),
            Node::Add(a, b) => NodeView::Add(a, b),
            Node::Sub(a, b) => NodeView::Sub(a, b),
            Node::Mul(a, b) => NodeView::Mul(a, b),
            Node::Div(a, b) => NodeView::Div(a, b),
            Node::Pow(a, b) => NodeView::Pow(a, b),
            Node::Neg(a) => NodeView::Neg(a),
            Node::Fun(f, a) => NodeView::Fun(f, a),
        }
    }

    /// Stable 64-bit fingerprint of the tree (FNV-1a over a canonical
    /// preorder serialization). Used for metric fingerprints in reports.
    pub fn fingerprint(&self, id: ExprId) -> u64 {
        fn feed(h: &mut u64, bytes: &[u8]) {
            for &b in bytes {
                *h ^= b as u64;
                *h = h.wrapping_mul(0x100000001b3);
            }
        }
        fn walk(ctx: &ExprContext, id: ExprId, h: &mut u64) {
            match ctx.nodes[id as usize] {
                Node::Num(bits) => {
                    feed(h, &[1]);
                    feed(h, &bits.to_le_bytes());
                }
                Node::Var(v) => {
                    feed(h, &[2, if v.kind == VarKind::Coord { 0 } else { 1 }]);
                    feed(h, &(v.index as u32).to_le_bytes());
                }
                Node::Add(a, b) => {
                    feed(h, &[3]);
                    walk(ctx, a, h);
                    walk(ctx, b, h);
                }
                Node::Sub(a, b) => {
                    feed(h, &[4]);
                    walk(ctx, a, h);
                    walk(ctx, b, h);
                }
                Node::Mul(a, b) => {
                    feed(h, &[5]);
                    walk(ctx, a, h);
                    walk(ctx, b, h);
                }
                Node::Div(a, b) => {
                    feed(h, &[6]);
                    walk(ctx, a, h);
                    walk(ctx, b, h);
                }
                Node::Pow(a, b) => {
                    feed(h, &[7]);
                    walk(ctx, a, h);
                    walk(ctx, b, h);
                }
                Node::Neg(a) => {
                    feed(h, &[8]);
                    walk(ctx, a, h);
                }
                Node::Fun(f, a) => {
                    feed(h, &[9, f.name().as_bytes()[0], f.name().as_bytes()[2]]);
                    walk(ctx, a, h);
                }
            }
        }
        let mut h = 0xcbf29ce484222325u64;
        walk(self, id, &mut h);
        h
    }
}

/// Reusable evaluation scratchpad. Epoch tagging avoids clearing between
/// points; values computed for one point are shared across every expression
/// evaluated at that point.
pub struct Evaluator {
    epoch: u32,
    slots: Vec<(u32, f64)>,
}

impl Default for Evaluator {
    fn default() -> Self {
        Self::new()
    }
}

impl Evaluator {
    pub fn new() -> Self {
        Evaluator { epoch: 0, slots: Vec::new() }
    }

    /// Start evaluating at a new point (invalidates memoized values).
    pub fn begin_point(&mut self, ctx: &ExprContext) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.slots.len() < ctx.len() {
            self.slots.resize(ctx.len(), (0, 0.0));
        }
    }

    /// Evaluate `id` at `pt`. Deterministic: identical input bits give
    /// identical output bits.
    pub fn eval(&mut self, ctx: &ExprContext, id: ExprId, pt: &PhasePoint) -> Result<f64> {
        if self.slots.len() < ctx.len() {
            self.slots.resize(ctx.len(), (0, 0.0));
        }
        self.eval_rec(ctx, id, pt)
    }

    fn eval_rec(&mut self, ctx: &ExprContext, id: ExprId, pt: &PhasePoint) -> Result<f64> {
        let slot = self.slots[id as usize];
        if slot.0 == self.epoch && self.epoch != 0 {
            return Ok(slot.1);
        }
        let v = match ctx.nodes[id as usize] {
            Node::Num(bits) => f64::from_bits(bits),
            Node::Var(var) => {
                if var.index >= pt.dim() {
                    return Err(Error::DimMismatch { expected: var.index + 1, got: pt.dim() });
                }
                pt.var(var)
            }
            Node::Add(a, b) => self.eval_rec(ctx, a, pt)? + self.eval_rec(ctx, b, pt)?,
            Node::Sub(a, b) => self.eval_rec(ctx, a, pt)? - self.eval_rec(ctx, b, pt)?,
            Node::Mul(a, b) => self.eval_rec(ctx, a, pt)? * self.eval_rec(ctx, b, pt)?,
            Node::Div(a, b) => {
                let den = self.eval_rec(ctx, b, pt)?;
                if den == 0.0 {
                    return Err(Error::Domain {
                        expr: ctx.render(id),
                        reason: "division by zero".into(),
                    });
                }
                self.eval_rec(ctx, a, pt)? / den
            }
            Node::Pow(a, b) => {
                let base = self.eval_rec(ctx, a, pt)?;
                let exp = self.eval_rec(ctx, b, pt)?;
                let v = base.powf(exp);
                if !v.is_finite() {
                    return Err(Error::Domain {
                        expr: ctx.render(id),
                        reason: format!("{base}^{exp} is not finite"),
                    });
                }
                v
            }
            Node::Neg(a) => -self.eval_rec(ctx, a, pt)?,
            Node::Fun(f, a) => {
                let arg = self.eval_rec(ctx, a, pt)?;
                match f {
                    UnaryFn::Sqrt if arg < 0.0 => {
                        return Err(Error::Domain {
                            expr: ctx.render(id),
                            reason: format!("sqrt of negative argument {arg}"),
                        })
                    }
                    UnaryFn::Log if arg <= 0.0 => {
                        return Err(Error::Domain {
                            expr: ctx.render(id),
                            reason: format!("log of non-positive argument {arg}"),
                        })
                    }
                    _ => f.apply(arg),
                }
            }
        };
        self.slots[id as usize] = (self.epoch, v);
        Ok(v)
    }
}

/// One-shot convenience evaluation.
pub fn eval_once(ctx: &ExprContext, id: ExprId, pt: &PhasePoint) -> Result<f64> {
    let mut ev = Evaluator::new();
    ev.begin_point(ctx);
    ev.eval(ctx, id, pt)
}
