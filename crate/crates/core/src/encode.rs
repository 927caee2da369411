//! Bit-level CNF encoding of the MixColumn relation.

use std::fmt::Write as _;

use sdd::{Cnf, Var};

use crate::cipher::{ByteVar, Relation, Variant};

/// Assignment of CNF variables to word bits. Bit 0 is the least significant.
///
/// Numbering is bit-major (`bit * 21 + word + 1`), so the variables that
/// interact through the bitwise xors sit next to each other in the
/// natural variable order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarMap {
    variant: Variant,
}

impl VarMap {
    pub fn new(variant: Variant) -> Self {
        VarMap { variant }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn num_vars(&self) -> u32 {
        21 * self.variant.width()
    }

    pub fn var(&self, byte: ByteVar, bit: u32) -> Var {
        debug_assert!(bit < self.variant.width());
        bit * 21 + byte.index() as u32 + 1
    }

    pub fn bits(&self, byte: ByteVar) -> Vec<Var> {
        (0..self.variant.width()).map(|b| self.var(byte, b)).collect()
    }

    /// Inverse of [`VarMap::var`].
    pub fn lookup(&self, var: Var) -> Option<(ByteVar, u32)> {
        if var == 0 || var > self.num_vars() {
            return None;
        }
        let i = var - 1;
        Some((ByteVar::ALL[(i % 21) as usize], i / 21))
    }

    /// Literals fixing `byte` to `value`.
    pub fn literals(&self, byte: ByteVar, value: u8) -> Vec<sdd::Literal> {
        (0..self.variant.width())
            .map(|b| sdd::Literal::new(self.var(byte, b), value >> b & 1 == 1))
            .collect()
    }

    /// Variable assignment (indexed by `var - 1`) of a full trace.
    pub fn assignment(&self, trace: &crate::cipher::ColumnTrace) -> Vec<bool> {
        let mut a = vec![false; self.num_vars() as usize];
        for b in ByteVar::ALL {
            for bit in 0..self.variant.width() {
                a[self.var(b, bit) as usize - 1] = trace.get(b) >> bit & 1 == 1;
            }
        }
        a
    }

    /// Sidecar text: one `name.bit index` line per variable, in variable order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in 1..=self.num_vars() {
            let (b, bit) = self.lookup(v).unwrap();
            writeln!(out, "{}.{} {}", b.name(), bit, v).unwrap();
        }
        out
    }
}

fn xor_clauses(cnf: &mut Cnf, a: Var, b: Var, c: Var) {
    let (a, b, c) = (a as i32, b as i32, c as i32);
    for cl in [[-a, -b, -c], [a, b, -c], [a, -b, c], [-a, b, c]] {
        cnf.add_clause(&cl).unwrap();
    }
}

fn eq_clauses(cnf: &mut Cnf, a: Var, b: Var) {
    let (a, b) = (a as i32, b as i32);
    cnf.add_clause(&[-a, b]).unwrap();
    cnf.add_clause(&[a, -b]).unwrap();
}

/// CNF whose models are exactly the bit patterns of valid column traces.
pub fn encode(variant: Variant) -> (Cnf, VarMap) {
    let map = VarMap::new(variant);
    let w = variant.width();
    let r = variant.reduction();
    let mut cnf = Cnf::new(map.num_vars());
    for rel in Relation::ALL {
        match rel {
            Relation::Xor(a, b, c) => {
                for bit in 0..w {
                    xor_clauses(&mut cnf, map.var(a, bit), map.var(b, bit), map.var(c, bit));
                }
            }
            Relation::Xtime(a, t) => {
                let hi = map.var(a, w - 1);
                eq_clauses(&mut cnf, map.var(t, 0), hi);
                for bit in 1..w {
                    let low = map.var(a, bit - 1);
                    if r >> bit & 1 == 1 {
                        xor_clauses(&mut cnf, low, hi, map.var(t, bit));
                    } else {
                        eq_clauses(&mut cnf, map.var(t, bit), low);
                    }
                }
            }
        }
    }
    (cnf, map)
}

pub fn encode_mix_column() -> (Cnf, VarMap) {
    encode(Variant::Full)
}

pub fn encode_mini_mix_column() -> (Cnf, VarMap) {
    encode(Variant::Mini)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cipher::ColumnTrace;
    use rand::{Rng, SeedableRng};

    #[test]
    fn sizes() {
        let (full, _) = encode_mix_column();
        assert_eq!(full.num_vars(), 168);
        assert_eq!(full.clauses().len(), 13 * 8 * 4 + 4 * (5 * 2 + 3 * 4));
        let (mini, _) = encode_mini_mix_column();
        assert_eq!(mini.num_vars(), 84);
        assert_eq!(mini.clauses().len(), 13 * 4 * 4 + 4 * (3 * 2 + 4));
    }

    #[test]
    fn var_map_is_a_bijection() {
        for v in [Variant::Mini, Variant::Full] {
            let m = VarMap::new(v);
            let mut seen = vec![false; m.num_vars() as usize + 1];
            for b in ByteVar::ALL {
                for bit in 0..v.width() {
                    let x = m.var(b, bit);
                    assert!(!seen[x as usize]);
                    seen[x as usize] = true;
                    assert_eq!(m.lookup(x), Some((b, bit)));
                }
            }
            assert!(seen[1..].iter().all(|&s| s));
        }
        assert_eq!(VarMap::new(Variant::Full).to_text().lines().next(), Some("x1.0 1"));
    }

    #[test]
    fn full_encoding_accepts_traces_and_rejects_flips() {
        let (cnf, map) = encode_mix_column();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let x: [u8; 4] = rng.random();
            let mut a = map.assignment(&ColumnTrace::new(Variant::Full, x));
            assert!(cnf.is_satisfied_by(&a));
            let flip = rng.random_range(0..a.len());
            a[flip] = !a[flip];
            assert!(!cnf.is_satisfied_by(&a));
        }
    }

    #[test]
    fn mini_encoding_accepts_every_trace() {
        let (cnf, map) = encode_mini_mix_column();
        for n in 0u32..1 << 16 {
            let x = [0, 1, 2, 3].map(|i| (n >> (4 * i) & 0xf) as u8);
            let t = ColumnTrace::new(Variant::Mini, x);
            let a = map.assignment(&t);
            assert!(cnf.is_satisfied_by(&a));
            // Any single-bit change breaks some relation.
            let mut b = a.clone();
            let flip = (n as usize * 7) % b.len();
            b[flip] = !b[flip];
            assert!(!cnf.is_satisfied_by(&b));
        }
    }
}
