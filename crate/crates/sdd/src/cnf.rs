//! Clausal formulas and the DIMACS text format.

use std::fmt::Write as _;

use crate::error::{Result, SddError};

/// 1-based Boolean variable index.
pub type Var = u32;

/// A signed literal: positive for `var`, negative for `¬var`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal(i32);

impl Literal {
    pub fn new(var: Var, positive: bool) -> Self {
        assert!(var > 0, "variables are 1-based");
        let v = var as i32;
        Literal(if positive { v } else { -v })
    }

    pub fn from_dimacs(lit: i32) -> Result<Self> {
        if lit == 0 {
            return Err(SddError::ZeroLiteral);
        }
        Ok(Literal(lit))
    }

    pub fn var(self) -> Var {
        self.0.unsigned_abs()
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn negate(self) -> Self {
        Literal(-self.0)
    }

    pub fn to_dimacs(self) -> i32 {
        self.0
    }

    /// Dense index: `2 * (var - 1) + (negative as usize)`.
    pub fn index(self) -> usize {
        2 * (self.var() as usize - 1) + usize::from(!self.is_positive())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Cnf {
    num_vars: u32,
    clauses: Vec<Vec<Literal>>,
}

impl Cnf {
    pub fn new(num_vars: u32) -> Self {
        Cnf {
            num_vars,
            clauses: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn clauses(&self) -> &[Vec<Literal>] {
        &self.clauses
    }

    pub fn add_clause(&mut self, lits: &[i32]) -> Result<()> {
        let mut clause = Vec::with_capacity(lits.len());
        for &l in lits {
            let lit = Literal::from_dimacs(l)?;
            if lit.var() > self.num_vars {
                return Err(SddError::VarOutOfRange {
                    var: lit.var(),
                    num_vars: self.num_vars,
                });
            }
            if clause.iter().any(|c: &Literal| c.var() == lit.var()) {
                return Err(SddError::DuplicateVar(lit.var()));
            }
            clause.push(lit);
        }
        self.clauses.push(clause);
        Ok(())
    }

    /// `assignment[v - 1]` is the value of variable `v`.
    pub fn is_satisfied_by(&self, assignment: &[bool]) -> bool {
        self.clauses.iter().all(|c| {
            c.iter()
                .any(|l| assignment[l.var() as usize - 1] == l.is_positive())
        })
    }

    pub fn average_width(&self) -> f64 {
        if self.clauses.is_empty() {
            return 0.0;
        }
        let total: usize = self.clauses.iter().map(Vec::len).sum();
        total as f64 / self.clauses.len() as f64
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.num_vars, self.clauses.len());
        for clause in &self.clauses {
            for l in clause {
                write!(out, "{} ", l.to_dimacs()).unwrap();
            }
            out.push_str("0\n");
        }
        out
    }

    pub fn parse_dimacs(text: &str) -> Result<Self> {
        let mut cnf: Option<Cnf> = None;
        let mut expected = 0usize;
        let mut pending: Vec<i32> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('c') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('p') {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 || parts[0] != "cnf" {
                    return Err(SddError::Parse {
                        line: line_no,
                        msg: "expected `p cnf <vars> <clauses>`".into(),
                    });
                }
                let parse = |s: &str| {
                    s.parse::<usize>().map_err(|e| SddError::Parse {
                        line: line_no,
                        msg: e.to_string(),
                    })
                };
                cnf = Some(Cnf::new(parse(parts[1])? as u32));
                expected = parse(parts[2])?;
                continue;
            }
            let Some(c) = cnf.as_mut() else {
                return Err(SddError::Parse {
                    line: line_no,
                    msg: "clause before header".into(),
                });
            };
            for tok in line.split_whitespace() {
                let lit: i32 = tok.parse().map_err(|_| SddError::Parse {
                    line: line_no,
                    msg: format!("bad literal `{tok}`"),
                })?;
                if lit == 0 {
                    c.add_clause(&pending).map_err(|e| SddError::Parse {
                        line: line_no,
                        msg: e.to_string(),
                    })?;
                    pending.clear();
                } else {
                    pending.push(lit);
                }
            }
        }
        let cnf = cnf.ok_or(SddError::Parse {
            line: 0,
            msg: "missing header".into(),
        })?;
        if !pending.is_empty() {
            return Err(SddError::Parse {
                line: text.lines().count(),
                msg: "unterminated clause".into(),
            });
        }
        if cnf.clauses.len() != expected {
            return Err(SddError::Parse {
                line: 0,
                msg: format!("header declares {expected} clauses, found {}", cnf.clauses.len()),
            });
        }
        Ok(cnf)
    }
}
