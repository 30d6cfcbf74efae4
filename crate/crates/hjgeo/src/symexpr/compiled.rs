//! Stack-machine form of an expression for tight evaluation loops.
//!
//! Variables are resolved to slot indices once at compile time, so repeated
//! evaluation (RK4 stages, large sample grids) does no name lookups and no
//! allocation beyond a reusable stack. Domain violations (log of a
//! nonpositive number, sqrt of a negative, fractional power of a nonpositive
//! base) produce NaN, which callers detect as non-finite state.

use super::{BinOp, Expr, UnaryOp};

#[derive(Debug, Clone)]
enum Instr {
    Const(f64),
    Load(usize),
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Add,
    Sub,
    Mul,
    Div,
    PowInt(i32),
    PowReal(f64),
}

#[derive(Debug, Clone)]
pub struct CompiledExpr {
    prog: Vec<Instr>,
    max_stack: usize,
}

impl CompiledExpr {
    /// Compile `expr` against the slot order `vars`. Panics if the
    /// expression mentions a variable not listed in `vars`.
    pub fn new(expr: &Expr, vars: &[&str]) -> CompiledExpr {
        let mut prog = Vec::new();
        emit(expr, vars, &mut prog);
        let mut depth: usize = 0;
        let mut max_stack = 0;
        for instr in &prog {
            match instr {
                Instr::Const(_) | Instr::Load(_) => depth += 1,
                Instr::Add | Instr::Sub | Instr::Mul | Instr::Div => depth -= 1,
                _ => {}
            }
            max_stack = max_stack.max(depth);
        }
        CompiledExpr { prog, max_stack }
    }

    pub fn eval(&self, slots: &[f64]) -> f64 {
        let mut stack = Vec::with_capacity(self.max_stack);
        self.eval_with(slots, &mut stack)
    }

    /// Evaluate reusing caller-provided stack storage.
    pub fn eval_with(&self, slots: &[f64], stack: &mut Vec<f64>) -> f64 {
        stack.clear();
        for instr in &self.prog {
            match instr {
                Instr::Const(c) => stack.push(*c),
                Instr::Load(i) => stack.push(slots[*i]),
                Instr::Neg => unary(stack, |x| -x),
                Instr::Sin => unary(stack, f64::sin),
                Instr::Cos => unary(stack, f64::cos),
                Instr::Exp => unary(stack, f64::exp),
                Instr::Log => unary(stack, |x| if x > 0.0 { x.ln() } else { f64::NAN }),
                Instr::Sqrt => unary(stack, |x| if x >= 0.0 { x.sqrt() } else { f64::NAN }),
                Instr::Add => binary(stack, |a, b| a + b),
                Instr::Sub => binary(stack, |a, b| a - b),
                Instr::Mul => binary(stack, |a, b| a * b),
                Instr::Div => binary(stack, |a, b| a / b),
                Instr::PowInt(k) => unary(stack, |x| x.powi(*k)),
                Instr::PowReal(c) => {
                    unary(stack, |x| if x > 0.0 { x.powf(*c) } else { f64::NAN })
                }
            }
        }
        debug_assert_eq!(stack.len(), 1);
        stack[0]
    }
}

#[inline]
fn unary(stack: &mut Vec<f64>, f: impl Fn(f64) -> f64) {
    let top = stack.last_mut().expect("stack underflow");
    *top = f(*top);
}

#[inline]
fn binary(stack: &mut Vec<f64>, f: impl Fn(f64, f64) -> f64) {
    let b = stack.pop().expect("stack underflow");
    let a = stack.last_mut().expect("stack underflow");
    *a = f(*a, b);
}

fn emit(expr: &Expr, vars: &[&str], prog: &mut Vec<Instr>) {
    match expr {
        Expr::Const(c) => prog.push(Instr::Const(*c)),
        Expr::Var(name) => {
            let slot = vars
                .iter()
                .position(|v| v == name)
                .unwrap_or_else(|| panic!("variable `{name}` missing from slot order {vars:?}"));
            prog.push(Instr::Load(slot));
        }
        Expr::Unary(op, a) => {
            emit(a, vars, prog);
            prog.push(match op {
                UnaryOp::Neg => Instr::Neg,
                UnaryOp::Sin => Instr::Sin,
                UnaryOp::Cos => Instr::Cos,
                UnaryOp::Exp => Instr::Exp,
                UnaryOp::Log => Instr::Log,
                UnaryOp::Sqrt => Instr::Sqrt,
            });
        }
        Expr::Binary(op, a, b) => {
            emit(a, vars, prog);
            emit(b, vars, prog);
            prog.push(match op {
                BinOp::Add => Instr::Add,
                BinOp::Sub => Instr::Sub,
                BinOp::Mul => Instr::Mul,
                BinOp::Div => Instr::Div,
            });
        }
        Expr::Pow(a, c) => {
            emit(a, vars, prog);
            if c.fract() == 0.0 && c.abs() <= i32::MAX as f64 {
                prog.push(Instr::PowInt(*c as i32));
            } else {
                prog.push(Instr::PowReal(*c));
            }
        }
    }
}
