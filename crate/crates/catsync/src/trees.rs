//! Decorated rooted trees for the manifold series.
//!
//! Each series coefficient is a sum over rooted trees with four node types —
//! ξ, U, a, h — where a node's children encode the Taylor slots of the dressed
//! coefficient attached to it. Nodes of type U and h carry geometric m-sums
//! (cohomology solves) that shift their whole subtree by `S^m`; the ± labels
//! of a/h nodes are kept symbolic in the enumerated topology and summed
//! during evaluation, which makes the topology counts match the series'
//! diagrammatic bookkeeping (2 trees for ξ at order 2, 4 for a_α, …).
//!
//! The trees are the verification oracle: the recursion is the production
//! path, and `eval_tree` re-derives each coefficient by nested quadrature
//! following the tree ordering, with identically truncated m-sums. A
//! combinatorial bound — at most `(2n−1)/3` internal U-nodes in an order-n
//! tree — controls the small-μ growth of the series;
//! `certify_internal_u_bound` checks it exhaustively at small orders and
//! constructs the saturating family.

use crate::catmap::{CatMap, Sign, TorusPoint};
use crate::constants::PhaseConstants;
use crate::coupling::CouplingSpec;
use crate::grid::{cumulative_integral, GridSpec};
use crate::series::adaptive_depth;
use crate::trig::{TrigPoly, TWO_PI};
use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::rc::Rc;
use thiserror::Error;

/// Default cap on exhaustive enumeration order.
pub const DEFAULT_ENUM_MAX: usize = 6;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("order {0} exceeds the enumeration cap {1}")]
    SizeLimit(usize, usize),
    #[error("internal-U bound violated at order {n}: tree has {count} > {bound}")]
    BoundViolation { n: usize, count: usize, bound: usize },
}

/// Node types: ξ and U come from the clock equation, a and h from the torus
/// equation; U and h are the cohomology (m-summed) types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeType {
    Xi,
    UCap,
    AComp,
    HComp,
}

impl NodeType {
    pub fn is_clock(self) -> bool {
        matches!(self, NodeType::Xi | NodeType::UCap)
    }

    pub fn is_torus(self) -> bool {
        !self.is_clock()
    }

    /// Carries a symbolic ± label?
    pub fn is_signed(self) -> bool {
        self.is_torus()
    }

    pub fn short(self) -> &'static str {
        match self {
            NodeType::Xi => "xi",
            NodeType::UCap => "U",
            NodeType::AComp => "a",
            NodeType::HComp => "h",
        }
    }
}

/// A subtree; children are kept in canonical (sorted) order so structurally
/// equal subtrees compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeNode {
    pub eta: NodeType,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn leaf(eta: NodeType) -> Self {
        TreeNode { eta, children: Vec::new() }
    }

    pub fn order(&self) -> usize {
        1 + self.children.iter().map(|c| c.order()).sum::<usize>()
    }

    pub fn is_end_node(&self) -> bool {
        self.children.is_empty()
    }

    /// Number of internal (non-leaf) U-nodes.
    pub fn internal_u_count(&self) -> usize {
        let own = usize::from(self.eta == NodeType::UCap && !self.children.is_empty());
        own + self.children.iter().map(|c| c.internal_u_count()).sum::<usize>()
    }

    /// The chain constraint: a clock-type node with exactly one child must
    /// not have a clock-type child (that term is resummed into the kernel).
    pub fn is_admissible(&self) -> bool {
        if self.eta.is_clock() && self.children.len() == 1 && self.children[0].eta.is_clock() {
            return false;
        }
        self.children.iter().all(|c| c.is_admissible())
    }
}

/// A topology with the root's target attached: for a/h targets the root sign
/// is fixed by the caller; all other signs stay symbolic until evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoratedTree {
    pub root: TreeNode,
    pub root_sign: Option<Sign>,
}

impl DecoratedTree {
    pub fn order(&self) -> usize {
        self.root.order()
    }
}

/// All subtree shapes of the given order (root type free, signs symbolic).
fn catalog(n: usize, memo: &mut Vec<Vec<TreeNode>>) -> Vec<TreeNode> {
    while memo.len() <= n {
        memo.push(Vec::new());
    }
    if !memo[n].is_empty() || n == 0 {
        return memo[n].clone();
    }
    let mut out = Vec::new();
    if n == 1 {
        for eta in [NodeType::Xi, NodeType::UCap, NodeType::AComp, NodeType::HComp] {
            out.push(TreeNode::leaf(eta));
        }
        memo[1] = out.clone();
        return out;
    }
    let mut pool: Vec<TreeNode> = Vec::new();
    for k in 1..n {
        pool.extend(catalog(k, memo));
    }
    pool.sort();
    // sorted multisets of subtrees with total order n-1
    let mut multisets: Vec<Vec<TreeNode>> = Vec::new();
    fn extend(
        pool: &[TreeNode],
        start: usize,
        remaining: usize,
        current: &mut Vec<TreeNode>,
        out: &mut Vec<Vec<TreeNode>>,
    ) {
        if remaining == 0 {
            out.push(current.clone());
            return;
        }
        for idx in start..pool.len() {
            let ord = pool[idx].order();
            if ord > remaining {
                continue;
            }
            current.push(pool[idx].clone());
            extend(pool, idx, remaining - ord, current, out);
            current.pop();
        }
    }
    extend(&pool, 0, n - 1, &mut Vec::new(), &mut multisets);
    for eta in [NodeType::Xi, NodeType::UCap, NodeType::AComp, NodeType::HComp] {
        for ms in &multisets {
            let node = TreeNode { eta, children: ms.clone() };
            if node.is_admissible() {
                out.push(node);
            }
        }
    }
    memo[n] = out.clone();
    out
}

/// Exhaustive, duplicate-free enumeration of order-n topologies with the
/// given root target. `sign` applies to a/h targets only.
pub fn enumerate_theta_star(
    n: usize,
    eta: NodeType,
    sign: Option<Sign>,
    enum_max: usize,
) -> Result<Vec<DecoratedTree>, TreeError> {
    if n == 0 || n > enum_max {
        return Err(TreeError::SizeLimit(n, enum_max));
    }
    let mut memo = Vec::new();
    let all = catalog(n, &mut memo);
    Ok(all
        .into_iter()
        .filter(|t| t.eta == eta)
        .map(|root| DecoratedTree { root, root_sign: if eta.is_signed() { sign } else { None } })
        .collect())
}

/// Count of internal U-nodes, the quantity controlled by the `(2n−1)/3` bound.
pub fn count_internal_type1(tree: &DecoratedTree) -> usize {
    tree.root.internal_u_count()
}

/// The saturating family: a depth-k tree whose internal nodes are all U-type,
/// binary branching except at the last internal level, which holds a single
/// torus leaf. Its order is `n = 2^k − 1 + 2^{k−1}` and it meets the bound
/// `(2n−1)/3 = 2^k − 1` exactly.
pub fn saturating_tree(k: u32) -> DecoratedTree {
    fn level(depth: u32) -> TreeNode {
        if depth == 1 {
            TreeNode { eta: NodeType::UCap, children: vec![TreeNode::leaf(NodeType::AComp)] }
        } else {
            let child = level(depth - 1);
            TreeNode { eta: NodeType::UCap, children: vec![child.clone(), child] }
        }
    }
    assert!(k >= 1);
    DecoratedTree { root: level(k), root_sign: None }
}

pub fn saturating_order(k: u32) -> usize {
    (1usize << k) - 1 + (1usize << (k - 1))
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct LemmaRow {
    pub n: usize,
    pub tree_count: usize,
    pub max_internal_u: usize,
    pub bound: usize,
    pub saturated: bool,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct LemmaReport {
    pub rows: Vec<LemmaRow>,
    pub saturating_orders_found: Vec<usize>,
}

/// Exhaustively verify `N_i¹(θ) ≤ (2n−1)/3` up to `n_max`, reporting where
/// the bound is attained.
pub fn certify_internal_u_bound(n_max: usize, enum_max: usize) -> Result<LemmaReport, TreeError> {
    if n_max > enum_max {
        return Err(TreeError::SizeLimit(n_max, enum_max));
    }
    let mut memo = Vec::new();
    let mut rows = Vec::new();
    let mut saturated_at = Vec::new();
    for n in 1..=n_max {
        let all = catalog(n, &mut memo);
        let bound = (2 * n - 1) / 3;
        let mut max_u = 0;
        for t in &all {
            let c = t.internal_u_count();
            if c > bound {
                return Err(TreeError::BoundViolation { n, count: c, bound });
            }
            max_u = max_u.max(c);
        }
        let saturated = max_u == bound && bound > 0;
        if saturated {
            saturated_at.push(n);
        }
        rows.push(LemmaRow { n, tree_count: all.len(), max_internal_u: max_u, bound, saturated });
    }
    Ok(LemmaReport { rows, saturating_orders_found: saturated_at })
}

/// DOT rendering; arrows point from child to parent, following the diagram
/// convention of the series bookkeeping.
pub fn render_dot(tree: &DecoratedTree, name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph {name} {{");
    let _ = writeln!(out, "  rankdir=RL;");
    let mut counter = 0usize;
    fn visit(node: &TreeNode, id: usize, counter: &mut usize, out: &mut String) {
        let shape = match node.eta {
            NodeType::Xi => "circle, style=filled, fillcolor=black, fontcolor=white",
            NodeType::UCap => "circle",
            NodeType::AComp => "box, style=filled, fillcolor=black, fontcolor=white",
            NodeType::HComp => "box",
        };
        let _ = writeln!(out, "  v{id} [label=\"{}\", shape={shape}];", node.eta.short());
        for child in &node.children {
            *counter += 1;
            let cid = *counter;
            let _ = writeln!(out, "  v{cid} -> v{id};");
            visit(child, cid, counter, out);
        }
    }
    visit(&tree.root, 0, &mut counter, &mut out);
    let _ = writeln!(out, "}}");
    out
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Value of a subtree: ξ/a interior nodes yield a function of the parent's
/// time variable on the shared grid, m-summed nodes yield scalars.
#[derive(Clone, Debug)]
pub enum NodeValue {
    Row(Vec<f64>),
    Scalar(f64),
}

/// Evaluation context at a fixed lattice denominator; all `S^m` shifts are
/// exact integer maps mod `n_phi`, so tree and recursion see identical base
/// points.
pub struct TreeEvalCtx {
    pub cat: CatMap,
    pub constants: PhaseConstants,
    pub grid: GridSpec,
    pub t: Vec<f64>,
    pub m_sum: usize,
    g_taylor_raw: RefCell<HashMap<[usize; 3], Rc<TrigPoly>>>,
    f_taylor_raw: RefCell<HashMap<(Sign, [usize; 3]), Rc<TrigPoly>>>,
    gee_rows: RefCell<HashMap<(i64, i64), Rc<Vec<f64>>>>,
    spec: CouplingSpec,
}

impl TreeEvalCtx {
    pub fn new(spec: &CouplingSpec, constants: PhaseConstants, grid: GridSpec, m_sum: usize) -> Self {
        TreeEvalCtx {
            cat: CatMap::new(),
            constants,
            t: grid.t_values(),
            grid,
            m_sum,
            g_taylor_raw: RefCell::new(HashMap::new()),
            f_taylor_raw: RefCell::new(HashMap::new()),
            gee_rows: RefCell::new(HashMap::new()),
            spec: spec.clone(),
        }
    }

    fn phi_of(&self, coords: (i64, i64)) -> [f64; 2] {
        let n = self.grid.n_phi as f64;
        [TWO_PI * coords.0 as f64 / n, TWO_PI * coords.1 as f64 / n]
    }

    fn shift(&self, coords: (i64, i64), m: i64) -> (i64, i64) {
        let n = self.grid.n_phi as i64;
        let p = self.cat.pow_mod(m, n);
        (
            (p[0][0] * coords.0 + p[0][1] * coords.1).rem_euclid(n),
            (p[1][0] * coords.0 + p[1][1] * coords.1).rem_euclid(n),
        )
    }

    /// Raw mixed partial (no 1/q!) of g or f_σ.
    fn coeff_poly(&self, kind: Option<Sign>, q: [usize; 3]) -> Rc<TrigPoly> {
        match kind {
            None => Rc::clone(self.g_taylor_raw.borrow_mut().entry(q).or_insert_with(|| {
                Rc::new(self.spec.g.mixed_partial(q, self.cat.x_plus, self.cat.x_minus))
            })),
            Some(sign) => {
                Rc::clone(self.f_taylor_raw.borrow_mut().entry((sign, q)).or_insert_with(|| {
                    let f = crate::trig::eigen_component(
                        &self.spec.f1,
                        &self.spec.f2,
                        self.cat.eigvec(sign),
                    );
                    Rc::new(f.mixed_partial(q, self.cat.x_plus, self.cat.x_minus))
                }))
            }
        }
    }

    /// 𝒢(ψ, t_k) row at a lattice point (closed form).
    fn gee_row(&self, coords: (i64, i64)) -> Rc<Vec<f64>> {
        if let Some(hit) = self.gee_rows.borrow().get(&coords) {
            return Rc::clone(hit);
        }
        let phi = self.phi_of(coords);
        let sphi = self.cat.apply(TorusPoint::new(phi[0], phi[1]));
        let g1 = self.spec.g.deriv(2);
        let row: Vec<f64> = self
            .t
            .iter()
            .map(|&tk| g1.unperturbed_t_integral(sphi.0, self.constants.w0, 0.0, tk))
            .collect();
        let rc = Rc::new(row);
        self.gee_rows.borrow_mut().insert(coords, Rc::clone(&rc));
        rc
    }
}

struct Evaluator<'a> {
    ctx: &'a TreeEvalCtx,
    memo: HashMap<(usize, u8, i64, i64), Rc<NodeValue>>,
    ids: HashMap<*const TreeNode, usize>,
    /// fold magnitudes instead of signed values (family-bound diagnostic)
    abs_mode: bool,
}

fn sign_code(s: Option<Sign>) -> u8 {
    match s {
        None => 0,
        Some(Sign::Plus) => 1,
        Some(Sign::Minus) => 2,
    }
}

impl<'a> Evaluator<'a> {
    fn new(ctx: &'a TreeEvalCtx, tree: &DecoratedTree, abs_mode: bool) -> Self {
        let mut ids = HashMap::new();
        fn walk(node: &TreeNode, ids: &mut HashMap<*const TreeNode, usize>) {
            let id = ids.len();
            ids.insert(node as *const TreeNode, id);
            for c in &node.children {
                walk(c, ids);
            }
        }
        walk(&tree.root, &mut ids);
        Evaluator { ctx, memo: HashMap::new(), ids, abs_mode }
    }

    fn eval(&mut self, node: &TreeNode, sign: Option<Sign>, coords: (i64, i64)) -> Rc<NodeValue> {
        let id = self.ids[&(node as *const TreeNode)];
        let key = (id, sign_code(sign), coords.0, coords.1);
        if let Some(hit) = self.memo.get(&key) {
            return Rc::clone(hit);
        }
        let value = Rc::new(self.eval_uncached(node, sign, coords));
        self.memo.insert(key, Rc::clone(&value));
        value
    }

    /// Integrand in the node's own time variable, summed over sign
    /// assignments of symbolic children with multiset weights that reproduce
    /// the recursion's Taylor combinatorics.
    fn integrand(&mut self, node: &TreeNode, sign: Option<Sign>, coords: (i64, i64)) -> Vec<f64> {
        let ctx = self.ctx;
        let width = ctx.t.len();
        let mu = ctx.constants.mu;
        let kind = match node.eta {
            NodeType::Xi | NodeType::UCap => None,
            _ => Some(sign.expect("torus node needs a sign")),
        };
        // group identical symbolic children: weight 1/Π m_g!
        let mut group_weight = 1.0;
        {
            let mut k = 0;
            while k < node.children.len() {
                let mut run = 1;
                while k + run < node.children.len() && node.children[k + run] == node.children[k] {
                    run += 1;
                }
                group_weight /= (1..=run).map(|v| v as f64).product::<f64>();
                k += run;
            }
        }
        let signed_slots: Vec<usize> = node
            .children
            .iter()
            .enumerate()
            .filter(|(_, c)| c.eta.is_signed())
            .map(|(i, _)| i)
            .collect();
        let n_u_children = node.children.iter().filter(|c| c.eta == NodeType::UCap).count();
        let gee = ctx.gee_row(coords);
        let exp_s1: Vec<f64> = if n_u_children > 0 {
            gee.iter().map(|&v| (mu * v * n_u_children as f64).exp()).collect()
        } else {
            Vec::new()
        };

        let mut total = vec![0.0; width];
        let n_assign = 1usize << signed_slots.len();
        for mask in 0..n_assign {
            let child_sign = |slot: usize| -> Option<Sign> {
                signed_slots.iter().position(|&s| s == slot).map(|pos| {
                    if mask >> pos & 1 == 0 {
                        Sign::Plus
                    } else {
                        Sign::Minus
                    }
                })
            };
            let mut q = [0usize; 3];
            for (slot, c) in node.children.iter().enumerate() {
                if c.eta.is_clock() {
                    q[2] += 1;
                } else {
                    match child_sign(slot).unwrap() {
                        Sign::Plus => q[0] += 1,
                        Sign::Minus => q[1] += 1,
                    }
                }
            }
            let poly = ctx.coeff_poly(kind, q);
            if poly.is_zero() {
                continue;
            }
            let mut row = vec![1.0; width];
            let mut scalar = group_weight;
            for (slot, c) in node.children.iter().enumerate() {
                let cs = child_sign(slot);
                let v = self.eval(c, cs, coords);
                match (&*v, c.eta) {
                    (NodeValue::Scalar(s), NodeType::UCap) => scalar *= *s,
                    (NodeValue::Scalar(s), NodeType::HComp) => {
                        // an h-child enters through λ_σ h_σ
                        scalar *= *s * ctx.cat.lambda(cs.unwrap());
                    }
                    (NodeValue::Row(r), _) => {
                        for k in 0..width {
                            row[k] *= r[k];
                        }
                    }
                    _ => unreachable!("value kind mismatch"),
                }
            }
            if scalar == 0.0 {
                continue;
            }
            let phi = ctx.phi_of(coords);
            let sphi = ctx.cat.apply(TorusPoint::new(phi[0], phi[1]));
            let mut coeff = vec![0.0; width];
            poly.accumulate_unperturbed_row(sphi.0, ctx.constants.w0, &ctx.t, 1.0, &mut coeff);
            for k in 0..width {
                let mut v = scalar * coeff[k] * row[k];
                if n_u_children > 0 {
                    v *= exp_s1[k];
                }
                total[k] += if self.abs_mode { v.abs() } else { v };
            }
        }
        total
    }

    fn eval_uncached(
        &mut self,
        node: &TreeNode,
        sign: Option<Sign>,
        coords: (i64, i64),
    ) -> NodeValue {
        let ctx = self.ctx;
        let width = ctx.t.len();
        let h = ctx.grid.t_step();
        let mu = ctx.constants.mu;
        let fold = |v: f64, abs: bool| if abs { v.abs() } else { v };
        match node.eta {
            NodeType::Xi => {
                let integrand = self.integrand(node, None, coords);
                let gee = ctx.gee_row(coords);
                let damped: Vec<f64> =
                    integrand.iter().zip(gee.iter()).map(|(v, g)| v * (-mu * g).exp()).collect();
                let mut cum = vec![0.0; width];
                cumulative_integral(&damped, h, &mut cum);
                let out: Vec<f64> =
                    cum.iter().zip(gee.iter()).map(|(c, g)| c * (mu * g).exp()).collect();
                NodeValue::Row(out)
            }
            NodeType::AComp => {
                let integrand = self.integrand(node, sign, coords);
                let mut cum = vec![0.0; width];
                cumulative_integral(&integrand, h, &mut cum);
                NodeValue::Row(cum)
            }
            NodeType::UCap => {
                let lambda_u = ctx.constants.lambda_u();
                let depth = adaptive_depth(lambda_u, ctx.m_sum);
                let mut acc = 0.0;
                let mut scale = 1.0; // λ^{-m-1} at m = -1
                let mut cum = vec![0.0; width];
                for mm in 1..=depth {
                    let shifted = ctx.shift(coords, -(mm as i64));
                    let integrand = self.integrand(node, None, shifted);
                    let gee = ctx.gee_row(shifted);
                    let damped: Vec<f64> = integrand
                        .iter()
                        .zip(gee.iter())
                        .map(|(v, g)| v * (-mu * g).exp())
                        .collect();
                    cumulative_integral(&damped, h, &mut cum);
                    // e^{μ𝒢(ψ,2π)} = e^{μΓ}
                    let term = scale * cum[width - 1] * (mu * gee[width - 1]).exp();
                    acc += fold(term, self.abs_mode);
                    scale *= lambda_u;
                }
                NodeValue::Scalar(acc)
            }
            NodeType::HComp => {
                let alpha = sign.expect("h node needs a sign");
                let lam = ctx.cat.lambda(alpha);
                let mut acc = 0.0;
                let mut cum = vec![0.0; width];
                match alpha {
                    Sign::Plus => {
                        let mut scale = -1.0 / lam;
                        for mm in 0..=ctx.m_sum {
                            let shifted = ctx.shift(coords, mm as i64);
                            let integrand = self.integrand(node, sign, shifted);
                            cumulative_integral(&integrand, h, &mut cum);
                            acc += fold(scale * cum[width - 1], self.abs_mode);
                            scale /= lam;
                        }
                    }
                    Sign::Minus => {
                        let mut scale = 1.0;
                        for mm in 1..=ctx.m_sum {
                            let shifted = ctx.shift(coords, -(mm as i64));
                            let integrand = self.integrand(node, sign, shifted);
                            cumulative_integral(&integrand, h, &mut cum);
                            acc += fold(scale * cum[width - 1], self.abs_mode);
                            scale *= lam;
                        }
                    }
                }
                NodeValue::Scalar(acc)
            }
        }
    }
}

/// Evaluate one tree at a lattice point. Row-valued for ξ/a targets (indexed
/// by t), scalar for U/h targets.
pub fn eval_tree(tree: &DecoratedTree, ctx: &TreeEvalCtx, coords: (i64, i64)) -> NodeValue {
    let mut ev = Evaluator::new(ctx, tree, false);
    let v = ev.eval(&tree.root, tree.root_sign, coords);
    (*v).clone()
}

/// Upper bound on `Σ_{θ ∈ family(θ̄)} |Val(θ)|` (the m-label family of one
/// topology): magnitudes are folded at every accumulation point, so each
/// member is dominated by the triangle inequality.
pub fn family_abs_bound(tree: &DecoratedTree, ctx: &TreeEvalCtx, coords: (i64, i64)) -> f64 {
    let mut ev = Evaluator::new(ctx, tree, true);
    match &*ev.eval(&tree.root, tree.root_sign, coords) {
        NodeValue::Scalar(s) => s.abs(),
        NodeValue::Row(r) => r.iter().fold(0.0, |m, v| m.max(v.abs())),
    }
}

/// Σ over the order-n topologies of a target, evaluated at a lattice point.
pub fn eval_target_sum(
    n: usize,
    eta: NodeType,
    sign: Option<Sign>,
    ctx: &TreeEvalCtx,
    coords: (i64, i64),
    enum_max: usize,
) -> Result<NodeValue, TreeError> {
    let trees = enumerate_theta_star(n, eta, sign, enum_max)?;
    let width = ctx.t.len();
    let mut row = vec![0.0; width];
    let mut scalar = 0.0;
    for tree in &trees {
        match eval_tree(tree, ctx, coords) {
            NodeValue::Row(r) => {
                for k in 0..width {
                    row[k] += r[k];
                }
            }
            NodeValue::Scalar(s) => scalar += s,
        }
    }
    Ok(match eta {
        NodeType::UCap | NodeType::HComp => NodeValue::Scalar(scalar),
        _ => NodeValue::Row(row),
    })
}
