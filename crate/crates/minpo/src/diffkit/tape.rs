//! Define-by-run recording of scalar expressions into replayable programs.
//!
//! A [`Var`] behaves like an ordinary number; arithmetic on it appends
//! instructions to a thread-local tape. [`Program::record`] runs a closure on
//! symbolic parameter/input variables and freezes the resulting instruction
//! list. The frozen program can then be re-executed at arbitrary parameter and
//! input values (see `exec`), which is what the training loop does thousands
//! of times per run without paying the graph-construction cost again.
//!
//! Constants are folded at record time: operations between constants never hit
//! the tape, `x + 0`, `x * 1` and `x * 0` collapse, and multiplications by a
//! constant become dedicated `MulK`/`AddK` instructions. Jets built on top of
//! `Var` therefore shed all their structurally-zero component arithmetic.

use std::cell::RefCell;

use crate::scalar::Scalar;

/// Instruction opcodes. `a`/`b`/`c` index previously produced slots, `k` is an
/// immediate constant. Each instruction writes exactly one new slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    /// Lane-uniform constant `k`.
    Const,
    Add,
    Sub,
    Mul,
    Div,
    /// `a * b + c`.
    MulAdd,
    /// `a + k`.
    AddK,
    /// `a * k`.
    MulK,
    /// `a / k`.
    DivK,
    /// `k * a + b`.
    MulKAdd,
    Neg,
    Abs,
    /// Sign of the value with `sign(0) = 0`; zero derivative.
    Sign,
    Exp,
    Sin,
    Cos,
    Sinh,
    Cosh,
    Tanh,
    /// `a.powi(k as i32)`.
    PowI,
    /// `a.powf(k)`.
    PowF,
}

#[derive(Clone, Copy, Debug)]
pub struct Instr {
    pub op: Op,
    pub a: u32,
    pub b: u32,
    pub c: u32,
    pub k: f64,
    /// First-touch flags of the reverse sweep (see `exec`).
    pub assign: u8,
}

/// Operand positions whose adjoint write is the first touch of that slot
/// during the reverse sweep.
pub const ASSIGN_A: u8 = 1;
pub const ASSIGN_B: u8 = 2;
pub const ASSIGN_C: u8 = 4;

impl Op {
    /// How many of (a, b, c) this op reads.
    fn arity(self) -> usize {
        match self {
            Op::Const => 0,
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::MulKAdd => 2,
            Op::MulAdd => 3,
            _ => 1,
        }
    }
}

/// A recorded straight-line computation with parameter and input leaves.
///
/// Slot layout: parameters occupy slots `0..n_params`, per-point inputs
/// `n_params..n_params+n_inputs`, and instruction `i` writes slot
/// `n_params + n_inputs + i`.
#[derive(Clone, Debug)]
pub struct Program {
    pub(crate) instrs: Vec<Instr>,
    pub(crate) n_params: usize,
    pub(crate) n_inputs: usize,
    pub(crate) outputs: Vec<u32>,
    /// Parameters that actually appear in the graph; the rest carry no
    /// adjoint.
    pub(crate) param_used: Vec<bool>,
}

impl Program {
    pub fn n_params(&self) -> usize {
        self.n_params
    }
    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }
    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }
    pub fn n_slots(&self) -> usize {
        self.n_params + self.n_inputs + self.instrs.len()
    }
    pub fn len(&self) -> usize {
        self.instrs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    /// Record a closure of `n_params` parameter leaves and `n_inputs` input
    /// leaves into a program. The closure returns the output variables.
    ///
    /// Panics if a recording is already active on this thread.
    pub fn record<F>(n_params: usize, n_inputs: usize, f: F) -> Program
    where
        F: FnOnce(&[Var], &[Var]) -> Vec<Var>,
    {
        TAPE.with(|t| {
            let mut tape = t.borrow_mut();
            assert!(tape.is_none(), "nested program recording is not supported");
            *tape = Some(TapeBuf {
                instrs: Vec::new(),
                n_leaves: (n_params + n_inputs) as u32,
            });
        });
        let params: Vec<Var> = (0..n_params).map(|i| Var::Slot(i as u32)).collect();
        let inputs: Vec<Var> = (0..n_inputs).map(|i| Var::Slot((n_params + i) as u32)).collect();
        let outs = f(&params, &inputs);
        let mut buf = TAPE.with(|t| t.borrow_mut().take()).expect("recorder vanished");
        let outputs = outs
            .into_iter()
            .map(|v| match v {
                Var::Slot(s) => s,
                // A constant output still needs a slot to read back.
                Var::Konst(k) => {
                    buf.instrs.push(Instr { op: Op::Const, a: 0, b: 0, c: 0, k, assign: 0 });
                    buf.n_leaves + buf.instrs.len() as u32 - 1
                }
            })
            .collect();
        let mut prog = Program {
            instrs: buf.instrs,
            n_params,
            n_inputs,
            outputs,
            param_used: vec![false; n_params],
        };
        prog.mark_first_touches();
        prog
    }

    /// Walk the instruction list in reverse order, flagging the first adjoint
    /// write into every slot so the reverse sweep can skip buffer zeroing.
    /// Output slots are seeded up front, so they always accumulate.
    fn mark_first_touches(&mut self) {
        let mut touched = vec![false; self.n_slots()];
        for &o in &self.outputs {
            touched[o as usize] = true;
        }
        for ins in self.instrs.iter_mut().rev() {
            ins.assign = 0;
            let ops = [(ins.a, ASSIGN_A), (ins.b, ASSIGN_B), (ins.c, ASSIGN_C)];
            for &(slot, flag) in ops.iter().take(ins.op.arity()) {
                if !touched[slot as usize] {
                    touched[slot as usize] = true;
                    ins.assign |= flag;
                }
            }
        }
        for p in 0..self.n_params {
            self.param_used[p] = touched[p];
        }
    }
}

struct TapeBuf {
    instrs: Vec<Instr>,
    n_leaves: u32,
}

thread_local! {
    static TAPE: RefCell<Option<TapeBuf>> = const { RefCell::new(None) };
}

fn push(op: Op, a: u32, b: u32, c: u32, k: f64) -> Var {
    TAPE.with(|t| {
        let mut borrow = t.borrow_mut();
        let tape = borrow
            .as_mut()
            .expect("Var arithmetic used outside Program::record");
        tape.instrs.push(Instr { op, a, b, c, k, assign: 0 });
        Var::Slot(tape.n_leaves + tape.instrs.len() as u32 - 1)
    })
}

/// Differentiable scalar value: either a recorded graph node or a constant
/// folded at record time.
#[derive(Clone, Copy, Debug)]
pub enum Var {
    Slot(u32),
    Konst(f64),
}

impl Var {
    fn unary(self, op: Op, f: impl Fn(f64) -> f64) -> Var {
        match self {
            Var::Konst(k) => Var::Konst(f(k)),
            Var::Slot(a) => push(op, a, 0, 0, 0.0),
        }
    }
}

impl std::ops::Add for Var {
    type Output = Var;
    fn add(self, rhs: Var) -> Var {
        match (self, rhs) {
            (Var::Konst(x), Var::Konst(y)) => Var::Konst(x + y),
            (Var::Slot(a), Var::Konst(k)) | (Var::Konst(k), Var::Slot(a)) => {
                if k == 0.0 {
                    Var::Slot(a)
                } else {
                    push(Op::AddK, a, 0, 0, k)
                }
            }
            (Var::Slot(a), Var::Slot(b)) => push(Op::Add, a, b, 0, 0.0),
        }
    }
}

impl std::ops::Sub for Var {
    type Output = Var;
    fn sub(self, rhs: Var) -> Var {
        match (self, rhs) {
            (Var::Konst(x), Var::Konst(y)) => Var::Konst(x - y),
            (Var::Slot(a), Var::Konst(k)) => {
                if k == 0.0 {
                    Var::Slot(a)
                } else {
                    push(Op::AddK, a, 0, 0, -k)
                }
            }
            (Var::Konst(k), Var::Slot(b)) => {
                let neg = push(Op::Neg, b, 0, 0, 0.0);
                neg + Var::Konst(k)
            }
            (Var::Slot(a), Var::Slot(b)) => push(Op::Sub, a, b, 0, 0.0),
        }
    }
}

impl std::ops::Mul for Var {
    type Output = Var;
    fn mul(self, rhs: Var) -> Var {
        match (self, rhs) {
            (Var::Konst(x), Var::Konst(y)) => Var::Konst(x * y),
            (Var::Slot(a), Var::Konst(k)) | (Var::Konst(k), Var::Slot(a)) => {
                if k == 0.0 {
                    Var::Konst(0.0)
                } else if k == 1.0 {
                    Var::Slot(a)
                } else {
                    push(Op::MulK, a, 0, 0, k)
                }
            }
            (Var::Slot(a), Var::Slot(b)) => push(Op::Mul, a, b, 0, 0.0),
        }
    }
}

impl std::ops::Div for Var {
    type Output = Var;
    fn div(self, rhs: Var) -> Var {
        match (self, rhs) {
            (Var::Konst(x), Var::Konst(y)) => Var::Konst(x / y),
            (Var::Slot(a), Var::Konst(k)) => {
                if k == 1.0 {
                    Var::Slot(a)
                } else {
                    push(Op::DivK, a, 0, 0, k)
                }
            }
            (Var::Konst(k), Var::Slot(b)) => {
                if k == 0.0 {
                    Var::Konst(0.0)
                } else {
                    let kslot = push(Op::Const, 0, 0, 0, k);
                    let ka = match kslot {
                        Var::Slot(s) => s,
                        Var::Konst(_) => unreachable!(),
                    };
                    push(Op::Div, ka, b, 0, 0.0)
                }
            }
            (Var::Slot(a), Var::Slot(b)) => push(Op::Div, a, b, 0, 0.0),
        }
    }
}

impl std::ops::Neg for Var {
    type Output = Var;
    fn neg(self) -> Var {
        match self {
            Var::Konst(k) => Var::Konst(-k),
            Var::Slot(a) => push(Op::Neg, a, 0, 0, 0.0),
        }
    }
}

impl Scalar for Var {
    fn from_f64(c: f64) -> Self {
        Var::Konst(c)
    }

    fn mul_add(self, b: Self, c: Self) -> Self {
        match (self, b, c) {
            (Var::Slot(a), Var::Slot(bb), Var::Slot(cc)) => push(Op::MulAdd, a, bb, cc, 0.0),
            (Var::Slot(a), Var::Konst(k), Var::Slot(cc))
            | (Var::Konst(k), Var::Slot(a), Var::Slot(cc)) => {
                if k == 0.0 {
                    Var::Slot(cc)
                } else {
                    push(Op::MulKAdd, a, cc, 0, k)
                }
            }
            _ => self * b + c,
        }
    }

    fn exp(self) -> Self {
        self.unary(Op::Exp, f64::exp)
    }
    fn sin(self) -> Self {
        self.unary(Op::Sin, f64::sin)
    }
    fn cos(self) -> Self {
        self.unary(Op::Cos, f64::cos)
    }
    fn sinh(self) -> Self {
        self.unary(Op::Sinh, f64::sinh)
    }
    fn cosh(self) -> Self {
        self.unary(Op::Cosh, f64::cosh)
    }
    fn tanh(self) -> Self {
        self.unary(Op::Tanh, f64::tanh)
    }
    fn abs(self) -> Self {
        self.unary(Op::Abs, f64::abs)
    }
    fn signum0(self) -> Self {
        self.unary(Op::Sign, |k| Scalar::signum0(k))
    }
    fn powi(self, n: i32) -> Self {
        match self {
            Var::Konst(k) => Var::Konst(k.powi(n)),
            Var::Slot(a) => push(Op::PowI, a, 0, 0, n as f64),
        }
    }
    fn powf_const(self, p: f64) -> Self {
        match self {
            Var::Konst(k) => Var::Konst(k.powf(p)),
            Var::Slot(a) => push(Op::PowF, a, 0, 0, p),
        }
    }
    fn is_finite_all(&self) -> bool {
        match self {
            Var::Konst(k) => k.is_finite(),
            Var::Slot(_) => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_folding_keeps_tape_small() {
        let prog = Program::record(0, 1, |_, x| {
            let zero = Var::Konst(0.0);
            let one = Var::Konst(1.0);
            // All of these fold away.
            let y = (x[0] + zero) * one + zero * x[0];
            vec![y]
        });
        assert_eq!(prog.len(), 0);
        assert_eq!(prog.outputs, vec![0]);
    }

    #[test]
    fn records_basic_expression() {
        let prog = Program::record(1, 1, |p, x| {
            let y = p[0] * x[0] + Var::Konst(2.0);
            vec![y]
        });
        assert_eq!(prog.n_params(), 1);
        assert_eq!(prog.n_inputs(), 1);
        assert_eq!(prog.len(), 2); // Mul, AddK
    }
}
