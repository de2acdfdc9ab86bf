use std::collections::HashMap;
use std::sync::Arc;

use super::{checked_div, checked_pow, Expr, ExprError, Func, Node};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Op {
    Num(u64),
    Var(usize),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Pow(usize, usize),
    Call(Func, usize),
}

/// A batch of expressions flattened into one instruction list with common
/// subexpressions merged structurally. Evaluating the tape once yields every
/// output, which is how component grids and their derivatives are evaluated.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    outputs: Vec<usize>,
    arity: usize,
}

struct Builder {
    ops: Vec<Op>,
    interned: HashMap<Op, usize>,
    by_ptr: HashMap<*const Node, usize>,
}

impl Builder {
    fn push(&mut self, op: Op) -> usize {
        *self.interned.entry(op).or_insert_with(|| {
            self.ops.push(op);
            self.ops.len() - 1
        })
    }

    fn visit(&mut self, e: &Expr) -> usize {
        let key = Arc::as_ptr(&e.0);
        if let Some(&slot) = self.by_ptr.get(&key) {
            return slot;
        }
        let op = match e.node() {
            Node::Num(v) => Op::Num(v.to_bits()),
            Node::Var(i) => Op::Var(*i),
            Node::Neg(a) => Op::Neg(self.visit(a)),
            Node::Add(a, b) => Op::Add(self.visit(a), self.visit(b)),
            Node::Sub(a, b) => Op::Sub(self.visit(a), self.visit(b)),
            Node::Mul(a, b) => Op::Mul(self.visit(a), self.visit(b)),
            Node::Div(a, b) => Op::Div(self.visit(a), self.visit(b)),
            Node::Pow(a, b) => Op::Pow(self.visit(a), self.visit(b)),
            Node::Call(f, a) => Op::Call(*f, self.visit(a)),
        };
        let slot = self.push(op);
        self.by_ptr.insert(key, slot);
        slot
    }
}

impl Tape {
    pub fn compile(exprs: &[Expr]) -> Tape {
        let mut b = Builder { ops: Vec::new(), interned: HashMap::new(), by_ptr: HashMap::new() };
        let outputs = exprs.iter().map(|e| b.visit(e)).collect();
        let arity = b
            .ops
            .iter()
            .filter_map(|op| match op {
                Op::Var(i) => Some(i + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        Tape { ops: b.ops, outputs, arity }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn output_count(&self) -> usize {
        self.outputs.len()
    }

    /// Evaluate every output at `p`, writing into `out`.
    pub fn eval_into(&self, p: &[f64], out: &mut Vec<f64>) -> Result<(), ExprError> {
        if p.len() < self.arity {
            return Err(ExprError::Arity { got: p.len(), needed: self.arity });
        }
        let mut regs: Vec<f64> = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let v = match *op {
                Op::Num(bits) => f64::from_bits(bits),
                Op::Var(i) => p[i],
                Op::Neg(a) => -regs[a],
                Op::Add(a, b) => regs[a] + regs[b],
                Op::Sub(a, b) => regs[a] - regs[b],
                Op::Mul(a, b) => regs[a] * regs[b],
                Op::Div(a, b) => checked_div(regs[a], regs[b])?,
                Op::Pow(a, b) => checked_pow(regs[a], regs[b])?,
                Op::Call(f, a) => f.apply(regs[a])?,
            };
            if !v.is_finite() {
                return Err(ExprError::NonFinite);
            }
            regs.push(v);
        }
        out.clear();
        out.extend(self.outputs.iter().map(|&slot| regs[slot]));
        Ok(())
    }

    pub fn eval(&self, p: &[f64]) -> Result<Vec<f64>, ExprError> {
        let mut out = Vec::with_capacity(self.outputs.len());
        self.eval_into(p, &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    #[test]
    fn tape_matches_recursive_eval() {
        let exprs: Vec<Expr> = ["x1*x2 + sin(x1)", "4/(1+x1^2+x2^2)^2", "x1*x2 + sin(x1) - 1"]
            .iter()
            .map(|s| parse_expr(s, 2).unwrap())
            .collect();
        let tape = Tape::compile(&exprs);
        let x = [0.3, -0.7];
        let vals = tape.eval(&x).unwrap();
        for (e, v) in exprs.iter().zip(&vals) {
            assert_eq!(e.eval(&x).unwrap(), *v);
        }
    }

    #[test]
    fn structural_sharing_across_outputs() {
        let a = parse_expr("sin(x1*x2)", 2).unwrap();
        let b = parse_expr("sin(x1*x2) + 1", 2).unwrap();
        let tape = Tape::compile(&[a, b]);
        // x1, x2, mul, sin, 1, add
        assert_eq!(tape.len(), 6);
    }

    #[test]
    fn domain_errors_propagate() {
        let tape = Tape::compile(&[parse_expr("log(x1)", 1).unwrap()]);
        assert!(tape.eval(&[-1.0]).is_err());
    }
}
