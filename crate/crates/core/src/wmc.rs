//! Weighted model counting over a g-conditioned MixColumn circuit with
//! word indicator variables, and the weight permutation that lets one
//! circuit serve every value of g.

use num_bigint::BigUint;
use sdd::ac::{Circuit, OpCounts, Semiring};
use sdd::{CompileOptions, Literal, NodeId, SddManager, Shape, Var, Vtree, FALSE};

use crate::cipher::{ByteVar, Variant};
use crate::encode::{encode, VarMap};
use crate::attack::MergedBeliefs;
use crate::error::{Error, Result};

/// Words that keep indicator variables once the others are merged away.
pub const RETAINED: [ByteVar; 10] = [
    ByteVar::X1,
    ByteVar::X2,
    ByteVar::X3,
    ByteVar::X4,
    ByteVar::X12,
    ByteVar::X23,
    ByteVar::M1,
    ByteVar::M2,
    ByteVar::M3,
    ByteVar::M4,
];

pub fn retained_index(b: ByteVar) -> Option<usize> {
    RETAINED.iter().position(|&r| r == b)
}

/// Literal weights indexed by [`Literal::index`]; unlisted literals weigh 1.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightFunction {
    pub weights: Vec<f64>,
}

impl WeightFunction {
    pub fn ones(num_vars: u32) -> WeightFunction {
        WeightFunction {
            weights: vec![1.0; 2 * num_vars as usize],
        }
    }

    pub fn get(&self, lit: Literal) -> f64 {
        self.weights[lit.index()]
    }

    pub fn set(&mut self, lit: Literal, w: f64) {
        debug_assert!(w >= 0.0 && w.is_finite());
        self.weights[lit.index()] = w;
    }

    /// One `literal weight` line per literal whose weight is not 1.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, &w) in self.weights.iter().enumerate() {
            if w != 1.0 {
                let lit = Literal::new(i as u32 / 2 + 1, i % 2 == 0);
                out.push_str(&format!("{} {w:e}\n", lit.to_dimacs()));
            }
        }
        out
    }
}

/// Forward value and the partial derivative of the root with respect to
/// every literal weight.
#[derive(Clone, Debug)]
pub struct EvalTrace {
    pub value: f64,
    pub derivatives: Vec<f64>,
    pub forward_ops: OpCounts,
    pub backward_ops: OpCounts,
}

impl EvalTrace {
    pub fn derivative(&self, lit: Literal) -> f64 {
        self.derivatives[lit.index()]
    }
}

/// Image of word `byte` under the map sending traces with `g` to traces
/// with `g2`: fix `x1, x2, x3` and shift `x4` by `d = g ⊕ g2`.
pub fn byte_bijection(variant: Variant, g: u8, g2: u8, byte: ByteVar, x: u8) -> Result<u8> {
    use ByteVar::*;
    let d = g ^ g2;
    let t = variant.xtime(d);
    Ok(match byte {
        X1 | X2 | X3 | X12 | X23 => x,
        X4 | M1 | M2 => x ^ d,
        M3 => x ^ t ^ d,
        M4 => x ^ t,
        other => return Err(Error::UnknownByte(format!("{} is merged away", other.name()))),
    })
}

/// Vtree with the bit variables balanced in variable order on the left and
/// the indicator variables (one balanced group per retained word) on the
/// right.
pub fn indicator_vtree(map: &VarMap, words: usize) -> Vtree {
    let n = map.num_vars();
    let q = map.variant().size() as u32;
    let bits: Vec<Var> = (1..=n).collect();
    let groups: Vec<Shape> = (0..words as u32)
        .map(|r| Shape::balanced(&(0..q).map(|j| n + r * q + j + 1).collect::<Vec<_>>()))
        .collect();
    fn join(mut v: Vec<Shape>) -> Shape {
        if v.len() == 1 {
            return v.pop().unwrap();
        }
        let right = v.split_off(v.len() / 2);
        Shape::node(join(v), join(right))
    }
    let shape = if groups.is_empty() {
        Shape::balanced(&bits)
    } else {
        Shape::node(Shape::balanced(&bits), join(groups))
    };
    Vtree::from_shape(&shape).expect("distinct variables")
}

/// Conjoins `b_{v=j} ⇔ (v = j)` for every listed word. Indicator `j` of the
/// `r`-th word is variable `first_var + r·|V| + j`.
pub fn add_byte_indicators(mgr: &mut SddManager, f: NodeId, map: &VarMap, words: &[ByteVar], first_var: Var) -> NodeId {
    let q = map.variant().size() as u32;
    let mut f = f;
    for (r, &b) in words.iter().enumerate() {
        let ind: Vec<Var> = (0..q).map(|j| first_var + r as u32 * q + j).collect();
        let negs: Vec<Literal> = ind.iter().map(|&v| Literal::new(v, false)).collect();
        // All-negative base shared by the q one-hot terms.
        let alpha = mgr.term(&negs);
        let mut c = FALSE;
        for j in 0..q {
            let rest = mgr.condition(alpha, &[Literal::new(ind[j as usize], false)]);
            let on = mgr.var(ind[j as usize], true);
            let hot = mgr.and(rest, on);
            let value = mgr.term(&map.literals(b, j as u8));
            let e = mgr.and(hot, value);
            c = mgr.or(c, e);
        }
        f = mgr.and(f, c);
    }
    f
}

/// SDD(M | g = γ) with indicators for the retained words, frozen into an
/// arithmetic circuit.
pub struct IndicatorSdd {
    pub variant: Variant,
    pub g: u8,
    pub map: VarMap,
    manager: SddManager,
    root: NodeId,
    circuit: Circuit,
}

impl IndicatorSdd {
    pub fn build(variant: Variant, g: u8) -> Result<IndicatorSdd> {
        let (cnf, map) = encode(variant);
        let vtree = indicator_vtree(&map, RETAINED.len());
        let opts = CompileOptions {
            minimize: false,
            ..CompileOptions::default()
        };
        let c = sdd::compile_cnf(&cnf, vtree, &opts)?;
        let mut manager = c.manager;
        let conditioned = manager.condition(c.root, &map.literals(ByteVar::G, g));
        let root = add_byte_indicators(&mut manager, conditioned, &map, &RETAINED, map.num_vars() + 1);
        let circuit = Circuit::from_sdd(&manager, root);
        Ok(IndicatorSdd {
            variant,
            g,
            map,
            manager,
            root,
            circuit,
        })
    }

    pub fn manager(&self) -> &SddManager {
        &self.manager
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn num_vars(&self) -> u32 {
        self.map.num_vars() + (RETAINED.len() * self.variant.size()) as u32
    }

    /// Indicator variable of value `j` of the `r`-th retained word.
    pub fn indicator(&self, r: usize, j: u8) -> Var {
        self.map.num_vars() + (r * self.variant.size()) as u32 + j as u32 + 1
    }

    pub fn indicators_of(&self, b: ByteVar) -> Option<Vec<Var>> {
        let r = retained_index(b)?;
        Some((0..self.variant.size()).map(|j| self.indicator(r, j as u8)).collect())
    }

    /// Models over all variables except the conditioned bits of g.
    pub fn model_count(&self) -> BigUint {
        self.manager.model_count_scoped(self.root, &self.map.bits(ByteVar::G))
    }

    /// All weights 1, except the bits of g, which are pinned to γ so the
    /// smoothed circuit does not count them as free.
    pub fn base_weights(&self) -> WeightFunction {
        let mut w = WeightFunction::ones(self.num_vars());
        for lit in self.map.literals(ByteVar::G, self.g) {
            w.set(lit.negate(), 0.0);
        }
        w
    }

    pub fn wmc(&self, w: &WeightFunction) -> f64 {
        self.circuit.value(&w.weights, Semiring::Real)
    }

    /// Natural log of the weighted count, evaluated in the log semiring.
    pub fn log_wmc(&self, w: &WeightFunction) -> f64 {
        let lw: Vec<f64> = w.weights.iter().map(|x| x.ln()).collect();
        self.circuit.value(&lw, Semiring::Log)
    }

    /// Forward pass plus one backward pass. With `targets`, only the
    /// derivatives of those variables' literals are computed.
    pub fn wmc_with_derivatives(&self, w: &WeightFunction, targets: Option<&[Var]>) -> EvalTrace {
        let (val, forward_ops) = self.circuit.forward(&w.weights, Semiring::Real);
        let (derivatives, backward_ops) = self.circuit.backward(&val, targets);
        EvalTrace {
            value: self.circuit.root_value(&val),
            derivatives,
            forward_ops,
            backward_ops,
        }
    }

    /// Max-product value and a maximizing assignment (`assignment[v - 1]`).
    pub fn max_product(&self, w: &WeightFunction) -> (f64, Vec<bool>, OpCounts) {
        self.circuit.mpe(&w.weights)
    }

    /// Value of a retained word in a circuit assignment.
    pub fn decode(&self, assignment: &[bool], b: ByteVar) -> u8 {
        (0..self.variant.width()).fold(0u8, |acc, bit| {
            acc | (assignment[self.map.var(b, bit) as usize - 1] as u8) << bit
        })
    }
}

/// Weights that evaluate the circuit compiled for `ic.g` as if it were
/// compiled for `merged.g`: `w(b_{v=j}) = p̂(v = φ_v(j))`. With a target,
/// that word's indicator for the target value is clamped true and the
/// others false.
pub fn weights_from_beliefs(ic: &IndicatorSdd, merged: &MergedBeliefs, target: Option<(ByteVar, u8)>) -> WeightFunction {
    let mut w = ic.base_weights();
    for (r, &b) in RETAINED.iter().enumerate() {
        for j in 0..ic.variant.size() {
            let image = byte_bijection(ic.variant, ic.g, merged.g, b, j as u8).unwrap();
            let ind = ic.indicator(r, j as u8);
            match target {
                Some((t, value)) if t == b => {
                    let hit = image == value;
                    w.set(Literal::new(ind, true), if hit { 1.0 } else { 0.0 });
                    w.set(Literal::new(ind, false), if hit { 0.0 } else { 1.0 });
                }
                _ => w.set(Literal::new(ind, true), merged.beliefs[r][image as usize]),
            }
        }
    }
    w
}
