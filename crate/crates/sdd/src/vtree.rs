//! Variable trees: full binary trees whose leaves are the circuit variables.

use crate::cnf::Var;
use crate::error::{Result, SddError};

pub type VtreeId = u32;

const NONE: u32 = u32::MAX;

/// Recursive description of a vtree, used to build and transform trees.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Shape {
    Leaf(Var),
    Node(Box<Shape>, Box<Shape>),
}

impl Shape {
    pub fn node(l: Shape, r: Shape) -> Shape {
        Shape::Node(Box::new(l), Box::new(r))
    }

    pub fn left_linear(vars: &[Var]) -> Shape {
        assert!(!vars.is_empty());
        let mut s = Shape::Leaf(vars[0]);
        for &v in &vars[1..] {
            s = Shape::node(s, Shape::Leaf(v));
        }
        s
    }

    pub fn right_linear(vars: &[Var]) -> Shape {
        assert!(!vars.is_empty());
        let mut s = Shape::Leaf(vars[vars.len() - 1]);
        for &v in vars[..vars.len() - 1].iter().rev() {
            s = Shape::node(Shape::Leaf(v), s);
        }
        s
    }

    pub fn balanced(vars: &[Var]) -> Shape {
        assert!(!vars.is_empty());
        if vars.len() == 1 {
            return Shape::Leaf(vars[0]);
        }
        let mid = vars.len() / 2;
        Shape::node(Shape::balanced(&vars[..mid]), Shape::balanced(&vars[mid..]))
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Shape::Leaf(v) => out.push(*v),
            Shape::Node(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }
}

#[derive(Clone, Debug)]
struct VNode {
    parent: u32,
    left: u32,
    right: u32,
    var: Var,
    /// In-order leaf positions covered, inclusive.
    lo: u32,
    hi: u32,
    depth: u32,
}

/// Immutable vtree. Node ids are assigned in post-order, so the root has the
/// largest id and children always precede their parent.
#[derive(Clone, Debug)]
pub struct Vtree {
    nodes: Vec<VNode>,
    leaf_of: Vec<u32>,
    in_order: Vec<Var>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    RotateLeft,
    RotateRight,
    Swap,
}

impl Vtree {
    pub fn from_shape(shape: &Shape) -> Result<Self> {
        let vars = shape.vars();
        let max = vars.iter().copied().max().unwrap_or(0);
        let mut leaf_of = vec![NONE; max as usize + 1];
        for &v in &vars {
            if v == 0 {
                return Err(SddError::ZeroLiteral);
            }
            if leaf_of[v as usize] != NONE {
                return Err(SddError::DuplicateVar(v));
            }
            leaf_of[v as usize] = 0;
        }
        let mut t = Vtree {
            nodes: Vec::with_capacity(2 * vars.len()),
            leaf_of,
            in_order: Vec::with_capacity(vars.len()),
        };
        let root = t.build(shape, 0);
        t.nodes[root as usize].parent = NONE;
        Ok(t)
    }

    fn build(&mut self, shape: &Shape, depth: u32) -> u32 {
        match shape {
            Shape::Leaf(v) => {
                let pos = self.in_order.len() as u32;
                self.in_order.push(*v);
                let id = self.nodes.len() as u32;
                self.nodes.push(VNode {
                    parent: NONE,
                    left: NONE,
                    right: NONE,
                    var: *v,
                    lo: pos,
                    hi: pos,
                    depth,
                });
                self.leaf_of[*v as usize] = id;
                id
            }
            Shape::Node(l, r) => {
                let li = self.build(l, depth + 1);
                let ri = self.build(r, depth + 1);
                let id = self.nodes.len() as u32;
                let (lo, hi) = (self.nodes[li as usize].lo, self.nodes[ri as usize].hi);
                self.nodes.push(VNode {
                    parent: NONE,
                    left: li,
                    right: ri,
                    var: 0,
                    lo,
                    hi,
                    depth,
                });
                self.nodes[li as usize].parent = id;
                self.nodes[ri as usize].parent = id;
                id
            }
        }
    }

    pub fn left_linear(vars: &[Var]) -> Self {
        Self::from_shape(&Shape::left_linear(vars)).expect("distinct variables")
    }

    pub fn right_linear(vars: &[Var]) -> Self {
        Self::from_shape(&Shape::right_linear(vars)).expect("distinct variables")
    }

    pub fn balanced(vars: &[Var]) -> Self {
        Self::from_shape(&Shape::balanced(vars)).expect("distinct variables")
    }

    pub fn root(&self) -> VtreeId {
        (self.nodes.len() - 1) as VtreeId
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_vars(&self) -> usize {
        self.in_order.len()
    }

    /// Largest variable index present.
    pub fn max_var(&self) -> Var {
        (self.leaf_of.len() - 1) as Var
    }

    pub fn is_leaf(&self, v: VtreeId) -> bool {
        self.nodes[v as usize].left == NONE
    }

    pub fn left(&self, v: VtreeId) -> VtreeId {
        self.nodes[v as usize].left
    }

    pub fn right(&self, v: VtreeId) -> VtreeId {
        self.nodes[v as usize].right
    }

    pub fn parent(&self, v: VtreeId) -> Option<VtreeId> {
        let p = self.nodes[v as usize].parent;
        (p != NONE).then_some(p)
    }

    pub fn depth(&self, v: VtreeId) -> u32 {
        self.nodes[v as usize].depth
    }

    /// Variable of a leaf node.
    pub fn var(&self, v: VtreeId) -> Option<Var> {
        self.is_leaf(v).then(|| self.nodes[v as usize].var)
    }

    pub fn leaf_of(&self, var: Var) -> Option<VtreeId> {
        self.leaf_of
            .get(var as usize)
            .copied()
            .filter(|&id| id != NONE)
    }

    pub fn contains_var(&self, var: Var) -> bool {
        self.leaf_of(var).is_some()
    }

    /// Variables under `v`, in in-order position.
    pub fn vars_under(&self, v: VtreeId) -> &[Var] {
        let n = &self.nodes[v as usize];
        &self.in_order[n.lo as usize..=n.hi as usize]
    }

    pub fn vars(&self) -> &[Var] {
        &self.in_order
    }

    pub fn num_vars_under(&self, v: VtreeId) -> usize {
        let n = &self.nodes[v as usize];
        (n.hi - n.lo + 1) as usize
    }

    /// True when `desc` lies in the subtree rooted at `anc` (inclusive).
    pub fn is_within(&self, desc: VtreeId, anc: VtreeId) -> bool {
        let (a, d) = (&self.nodes[anc as usize], &self.nodes[desc as usize]);
        a.lo <= d.lo && d.hi <= a.hi
    }

    pub fn lca(&self, mut a: VtreeId, b: VtreeId) -> VtreeId {
        while !self.is_within(b, a) {
            a = self.nodes[a as usize].parent;
        }
        a
    }

    /// Child of `anc` whose subtree holds `desc`; `desc` must be a strict descendant.
    pub fn child_toward(&self, anc: VtreeId, desc: VtreeId) -> VtreeId {
        let l = self.left(anc);
        if self.is_within(desc, l) {
            l
        } else {
            debug_assert!(self.is_within(desc, self.right(anc)));
            self.right(anc)
        }
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = VtreeId> + '_ {
        (0..self.nodes.len() as VtreeId).filter(|&v| !self.is_leaf(v))
    }

    pub fn shape(&self) -> Shape {
        self.shape_of(self.root())
    }

    pub fn shape_of(&self, v: VtreeId) -> Shape {
        if self.is_leaf(v) {
            Shape::Leaf(self.nodes[v as usize].var)
        } else {
            Shape::node(self.shape_of(self.left(v)), self.shape_of(self.right(v)))
        }
    }

    fn shape_rewrite(&self, v: VtreeId, target: VtreeId, f: &mut dyn FnMut(Shape) -> Shape) -> Shape {
        if v == target {
            return f(self.shape_of(v));
        }
        if self.is_leaf(v) || !self.is_within(target, v) {
            return self.shape_of(v);
        }
        Shape::node(
            self.shape_rewrite(self.left(v), target, f),
            self.shape_rewrite(self.right(v), target, f),
        )
    }

    /// Applies a local move at internal node `v`; `None` if not applicable.
    ///
    /// Rotate right: `(a b) c -> a (b c)`; rotate left: `a (b c) -> (a b) c`;
    /// swap: `a b -> b a`.
    pub fn apply_move(&self, v: VtreeId, mv: Move) -> Option<Vtree> {
        if self.is_leaf(v) {
            return None;
        }
        let applicable = match mv {
            Move::RotateRight => !self.is_leaf(self.left(v)),
            Move::RotateLeft => !self.is_leaf(self.right(v)),
            Move::Swap => true,
        };
        if !applicable {
            return None;
        }
        let mut rewrite = |s: Shape| match (mv, s) {
            (Move::Swap, Shape::Node(l, r)) => Shape::Node(r, l),
            (Move::RotateRight, Shape::Node(l, c)) => match *l {
                Shape::Node(a, b) => Shape::node(*a, Shape::Node(b, c)),
                _ => unreachable!(),
            },
            (Move::RotateLeft, Shape::Node(a, r)) => match *r {
                Shape::Node(b, c) => Shape::node(Shape::Node(a, b), *c),
                _ => unreachable!(),
            },
            _ => unreachable!(),
        };
        let shape = self.shape_rewrite(self.root(), v, &mut rewrite);
        Some(Vtree::from_shape(&shape).expect("moves preserve the variable set"))
    }

    /// Restricts the tree to `vars`, contracting unary paths.
    pub fn project(&self, vars: &[Var]) -> Result<Projection> {
        if vars.is_empty() {
            return Err(SddError::UnknownVars("empty projection".into()));
        }
        for &v in vars {
            if !self.contains_var(v) {
                return Err(SddError::UnknownVars(format!("variable {v} not in vtree")));
            }
        }
        let mut keep = vec![false; self.max_var() as usize + 1];
        for &v in vars {
            keep[v as usize] = true;
        }
        // For every master node, the restricted shape of its subtree.
        let mut shapes: Vec<Option<Shape>> = vec![None; self.nodes.len()];
        for id in 0..self.nodes.len() {
            let idu = id as u32;
            shapes[id] = if self.is_leaf(idu) {
                let var = self.nodes[id].var;
                keep[var as usize].then_some(Shape::Leaf(var))
            } else {
                let l = shapes[self.left(idu) as usize].clone();
                let r = shapes[self.right(idu) as usize].clone();
                match (l, r) {
                    (Some(l), Some(r)) => Some(Shape::node(l, r)),
                    (Some(s), None) | (None, Some(s)) => Some(s),
                    (None, None) => None,
                }
            };
        }
        let shape = shapes[self.root() as usize].take().expect("non-empty projection");
        let projected = Vtree::from_shape(&shape)?;
        // Map every master node to the projected node whose leaves are
        // vars ∩ vars(master node).
        let mut proj_of = vec![NONE; self.nodes.len()];
        for id in 0..self.nodes.len() {
            let idu = id as u32;
            proj_of[id] = if self.is_leaf(idu) {
                let var = self.nodes[id].var;
                if keep[var as usize] {
                    projected.leaf_of(var).unwrap()
                } else {
                    NONE
                }
            } else {
                let l = proj_of[self.left(idu) as usize];
                let r = proj_of[self.right(idu) as usize];
                match (l != NONE, r != NONE) {
                    (true, true) => projected.nodes[l as usize].parent,
                    (true, false) => l,
                    (false, true) => r,
                    (false, false) => NONE,
                }
            };
        }
        Ok(Projection {
            vtree: projected,
            proj_of,
        })
    }

    /// Order-insensitive fingerprint of the variables under each node.
    pub(crate) fn var_signatures(&self) -> Vec<u64> {
        let mut sig = vec![0u64; self.nodes.len()];
        for id in 0..self.nodes.len() {
            let idu = id as u32;
            sig[id] = if self.is_leaf(idu) {
                splitmix(self.nodes[id].var as u64)
            } else {
                sig[self.left(idu) as usize].wrapping_add(sig[self.right(idu) as usize])
            };
        }
        sig
    }

    pub fn to_text(&self) -> String {
        crate::io::vtree_to_text(self)
    }
}

impl PartialEq for Vtree {
    fn eq(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }
}

pub(crate) fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// A vtree restricted to a subset of variables, together with the map from
/// master nodes to projected nodes.
#[derive(Clone, Debug)]
pub struct Projection {
    pub vtree: Vtree,
    proj_of: Vec<u32>,
}

impl Projection {
    /// Projected node covering `vars ∩ vars(master)`, if that set is non-empty.
    pub fn of_master(&self, master: VtreeId) -> Option<VtreeId> {
        let p = self.proj_of[master as usize];
        (p != NONE).then_some(p)
    }

    pub fn identity(vtree: &Vtree) -> Projection {
        Projection {
            vtree: vtree.clone(),
            proj_of: (0..vtree.num_nodes() as u32).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn left_linear_structure() {
        let t = Vtree::left_linear(&[1, 2, 3, 4]);
        assert_eq!(t.num_nodes(), 7);
        let r = t.root();
        assert!(t.is_leaf(t.right(r)));
        assert_eq!(t.var(t.right(r)), Some(4));
        assert_eq!(t.vars_under(t.left(r)), &[1, 2, 3]);
        assert_eq!(t.lca(t.leaf_of(1).unwrap(), t.leaf_of(2).unwrap()), t.left(t.left(r)));
    }

    #[test]
    fn rejects_duplicate_leaves() {
        let s = Shape::node(Shape::Leaf(1), Shape::Leaf(1));
        assert!(Vtree::from_shape(&s).is_err());
    }

    #[test]
    fn moves_preserve_leaves() {
        let t = Vtree::balanced(&[1, 2, 3, 4, 5, 6]);
        for v in t.internal_nodes().collect::<Vec<_>>() {
            for mv in [Move::RotateLeft, Move::RotateRight, Move::Swap] {
                if let Some(n) = t.apply_move(v, mv) {
                    let mut vars = n.vars().to_vec();
                    vars.sort();
                    assert_eq!(vars, vec![1, 2, 3, 4, 5, 6]);
                    if mv != Move::Swap {
                        assert_eq!(n.vars(), t.vars());
                    }
                }
            }
        }
        let rr = Vtree::left_linear(&[1, 2, 3]).apply_move(4, Move::RotateRight).unwrap();
        assert_eq!(rr, Vtree::right_linear(&[1, 2, 3]));
    }

    #[test]
    fn projection_of_contiguous_chunk_is_unchanged() {
        let master = Shape::node(
            Shape::right_linear(&[1, 2, 3]),
            Shape::right_linear(&[4, 5, 6, 7]),
        );
        let t = Vtree::from_shape(&master).unwrap();
        let p = t.project(&[4, 5, 6, 7]).unwrap();
        assert_eq!(p.vtree.shape(), Shape::right_linear(&[4, 5, 6, 7]));
        assert_eq!(p.of_master(t.root()), Some(p.vtree.root()));
        assert_eq!(p.of_master(t.left(t.root())), None);
    }

    #[test]
    fn projection_leaf_set() {
        let t = Vtree::left_linear(&(1..=12).collect::<Vec<_>>());
        let p = t.project(&[2, 5, 9]).unwrap();
        let mut vars = p.vtree.vars().to_vec();
        vars.sort();
        assert_eq!(vars, vec![2, 5, 9]);
        assert!(t.project(&[13]).is_err());
    }
}
