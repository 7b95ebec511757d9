//! Program execution: generic single-point replay and the batched
//! forward/reverse engine used by training.
//!
//! The batched engine processes lanes (collocation points) in fixed-width
//! chunks. Values live in a slot-major scratch buffer so the per-instruction
//! inner loop runs over contiguous lanes and vectorises. Reverse partials are
//! reconstructed from stored values, adjoints are written with a first-touch
//! assignment scheme (no buffer zeroing), and parameter slots are broadcast
//! once per pass since they are lane-uniform.
//!
//! Operand indices are in bounds by construction of the recorder, which makes
//! the unchecked buffer accesses in the inner loops sound.

use super::tape::{Instr, Op, Program, ASSIGN_A, ASSIGN_B, ASSIGN_C};
use crate::scalar::Scalar;

/// Lanes processed together by the batched executor.
pub const CHUNK: usize = 32;

impl Program {
    /// Replay the program at one point with any scalar backend.
    pub fn exec_generic<S: Scalar>(&self, params: &[S], inputs: &[S]) -> Vec<S> {
        assert_eq!(params.len(), self.n_params, "parameter count mismatch");
        assert_eq!(inputs.len(), self.n_inputs, "input arity mismatch");
        let mut vals: Vec<S> = Vec::with_capacity(self.n_slots());
        vals.extend_from_slice(params);
        vals.extend_from_slice(inputs);
        for ins in &self.instrs {
            let v = eval_instr(ins, &vals);
            vals.push(v);
        }
        self.outputs.iter().map(|&o| vals[o as usize]).collect()
    }

    /// Replay at one f64 point, checking every intermediate for finiteness.
    /// Returns the offending instruction slot on failure.
    pub fn exec_checked(&self, params: &[f64], inputs: &[f64]) -> Result<Vec<f64>, u32> {
        let mut vals: Vec<f64> = Vec::with_capacity(self.n_slots());
        vals.extend_from_slice(params);
        vals.extend_from_slice(inputs);
        for (i, ins) in self.instrs.iter().enumerate() {
            let v = eval_instr(ins, &vals);
            if !v.is_finite() {
                return Err((self.n_params + self.n_inputs + i) as u32);
            }
            vals.push(v);
        }
        Ok(self.outputs.iter().map(|&o| vals[o as usize]).collect())
    }
}

fn eval_instr<S: Scalar>(ins: &Instr, vals: &[S]) -> S {
    let a = || vals[ins.a as usize];
    let b = || vals[ins.b as usize];
    let c = || vals[ins.c as usize];
    match ins.op {
        Op::Const => S::from_f64(ins.k),
        Op::Add => a() + b(),
        Op::Sub => a() - b(),
        Op::Mul => a() * b(),
        Op::Div => a() / b(),
        Op::MulAdd => a().mul_add(b(), c()),
        Op::AddK => a() + S::from_f64(ins.k),
        Op::MulK => a() * S::from_f64(ins.k),
        Op::DivK => a() / S::from_f64(ins.k),
        Op::MulKAdd => a().mul_add(S::from_f64(ins.k), b()),
        Op::Neg => -a(),
        Op::Abs => a().abs(),
        Op::Sign => a().signum0(),
        Op::Exp => a().exp(),
        Op::Sin => a().sin(),
        Op::Cos => a().cos(),
        Op::Sinh => a().sinh(),
        Op::Cosh => a().cosh(),
        Op::Tanh => a().tanh(),
        Op::PowI => a().powi(ins.k as i32),
        Op::PowF => a().powf_const(ins.k),
    }
}

/// Scratch buffers for one chunk of lanes; reuse across chunks and passes.
pub struct ChunkBuf {
    pub vals: Vec<f64>,
    pub adj: Vec<f64>,
}

impl ChunkBuf {
    pub fn for_program(prog: &Program) -> Self {
        ChunkBuf {
            vals: vec![0.0; prog.n_slots() * CHUNK],
            adj: vec![0.0; prog.n_slots() * CHUNK],
        }
    }
}

/// Disjoint row views: the output slot of an instruction is always a fresh
/// slot, so the mutable output row never aliases the operand rows, and the
/// compiler can vectorise the lane loops.
#[inline(always)]
unsafe fn row<'a>(base: *const f64, at: usize) -> &'a [f64; CHUNK] {
    &*(base.add(at) as *const [f64; CHUNK])
}

#[inline(always)]
unsafe fn row_mut<'a>(base: *mut f64, at: usize) -> &'a mut [f64; CHUNK] {
    &mut *(base.add(at) as *mut [f64; CHUNK])
}

impl Program {
    /// Broadcast lane-uniform parameter values; call once per pass.
    pub fn fill_params(&self, params: &[f64], buf: &mut ChunkBuf) {
        debug_assert_eq!(params.len(), self.n_params);
        for (p, &pv) in params.iter().enumerate() {
            buf.vals[p * CHUNK..(p + 1) * CHUNK]
                .iter_mut()
                .for_each(|v| *v = pv);
        }
    }

    /// Forward-evaluate lanes `lane0..lane0+n` (`1 <= n <= CHUNK`), with
    /// parameters already broadcast by [`fill_params`](Self::fill_params).
    /// Lanes beyond `n` are filled with lane `lane0 + n - 1` values so the
    /// vector loops stay branch-free.
    pub fn forward_chunk(&self, inputs: &[&[f64]], lane0: usize, n: usize, buf: &mut ChunkBuf) {
        debug_assert!(n >= 1 && n <= CHUNK);
        let vals = &mut buf.vals;
        for (k, arr) in inputs.iter().enumerate() {
            let base = (self.n_params + k) * CHUNK;
            for c in 0..CHUNK {
                vals[base + c] = arr[lane0 + c.min(n - 1)];
            }
        }
        let first = self.n_params + self.n_inputs;
        let v = vals.as_mut_ptr();
        for (i, ins) in self.instrs.iter().enumerate() {
            let o = (first + i) * CHUNK;
            forward_instr(ins, v, o);
        }
    }

    /// Read output `o` of lane `lane0 + c` after a forward pass.
    #[inline]
    pub fn output(&self, buf: &ChunkBuf, o: usize, c: usize) -> f64 {
        buf.vals[self.outputs[o] as usize * CHUNK + c]
    }

    /// Reverse sweep over a chunk previously run with `forward_chunk`.
    /// `seeds[o][c]` is the adjoint of output `o` in lane `c`. Parameter
    /// gradients (summed over lanes) are accumulated into `grad`.
    pub fn reverse_chunk(&self, seeds: &[[f64; CHUNK]], buf: &mut ChunkBuf, grad: &mut [f64]) {
        debug_assert_eq!(seeds.len(), self.outputs.len());
        // Output slots take their seeds on a zeroed base; every other slot is
        // first-touch assigned during the sweep, so no global zeroing.
        for &o in &self.outputs {
            let base = o as usize * CHUNK;
            buf.adj[base..base + CHUNK].iter_mut().for_each(|v| *v = 0.0);
        }
        for (o, seed) in seeds.iter().enumerate() {
            let base = self.outputs[o] as usize * CHUNK;
            for c in 0..CHUNK {
                buf.adj[base + c] += seed[c];
            }
        }
        let first = self.n_params + self.n_inputs;
        let v = buf.vals.as_ptr();
        let adj = buf.adj.as_mut_ptr();
        for (i, ins) in self.instrs.iter().enumerate().rev() {
            let o = (first + i) * CHUNK;
            reverse_instr(ins, v, adj, o);
        }
        for p in 0..self.n_params {
            if !self.param_used[p] {
                continue;
            }
            let mut s = 0.0;
            for c in 0..CHUNK {
                s += buf.adj[p * CHUNK + c];
            }
            grad[p] += s;
        }
    }
}

fn forward_instr(ins: &Instr, v: *mut f64, o: usize) {
    let k = ins.k;
    let out = unsafe { row_mut(v, o) };
    let a = unsafe { row(v, ins.a as usize * CHUNK) };
    let b = unsafe { row(v, ins.b as usize * CHUNK) };
    let cc = unsafe { row(v, ins.c as usize * CHUNK) };
    macro_rules! lanes {
        (|$c:ident| $body:expr) => {
            for $c in 0..CHUNK {
                out[$c] = $body;
            }
        };
    }
    match ins.op {
        Op::Const => lanes!(|c| {
            let _ = c;
            k
        }),
        Op::Add => lanes!(|c| a[c] + b[c]),
        Op::Sub => lanes!(|c| a[c] - b[c]),
        Op::Mul => lanes!(|c| a[c] * b[c]),
        Op::Div => lanes!(|c| a[c] / b[c]),
        Op::MulAdd => lanes!(|c| a[c] * b[c] + cc[c]),
        Op::AddK => lanes!(|c| a[c] + k),
        Op::MulK => lanes!(|c| a[c] * k),
        Op::DivK => lanes!(|c| a[c] / k),
        Op::MulKAdd => lanes!(|c| k * a[c] + b[c]),
        Op::Neg => lanes!(|c| -a[c]),
        Op::Abs => lanes!(|c| a[c].abs()),
        Op::Sign => lanes!(|c| Scalar::signum0(a[c])),
        Op::Exp => lanes!(|c| a[c].exp()),
        Op::Sin => lanes!(|c| a[c].sin()),
        Op::Cos => lanes!(|c| a[c].cos()),
        Op::Sinh => lanes!(|c| a[c].sinh()),
        Op::Cosh => lanes!(|c| a[c].cosh()),
        Op::Tanh => lanes!(|c| a[c].tanh()),
        Op::PowI => lanes!(|c| a[c].powi(k as i32)),
        Op::PowF => lanes!(|c| a[c].powf(k)),
    }
}

fn reverse_instr(ins: &Instr, v: *const f64, adj: *mut f64, o: usize) {
    let k = ins.k;
    let g = unsafe { row(adj as *const f64, o) };
    let va = unsafe { row(v, ins.a as usize * CHUNK) };
    let vb = unsafe { row(v, ins.b as usize * CHUNK) };
    let vo = unsafe { row(v, o) };
    // Accumulate or first-touch assign `partial * g` into the operand slot.
    // Operand slots strictly precede the output slot, so the target row never
    // aliases the adjoint row being read.
    macro_rules! acc {
        ($slot:expr, $flag:expr, |$c:ident| $p:expr) => {
            let tgt = unsafe { row_mut(adj, $slot as usize * CHUNK) };
            if ins.assign & $flag != 0 {
                for $c in 0..CHUNK {
                    tgt[$c] = $p * g[$c];
                }
            } else {
                for $c in 0..CHUNK {
                    tgt[$c] += $p * g[$c];
                }
            }
        };
    }
    match ins.op {
        Op::Const => {}
        Op::Add => {
            acc!(ins.a, ASSIGN_A, |c| 1.0);
            acc!(ins.b, ASSIGN_B, |c| 1.0);
        }
        Op::Sub => {
            acc!(ins.a, ASSIGN_A, |c| 1.0);
            acc!(ins.b, ASSIGN_B, |c| -1.0);
        }
        Op::Mul => {
            acc!(ins.a, ASSIGN_A, |c| vb[c]);
            acc!(ins.b, ASSIGN_B, |c| va[c]);
        }
        Op::Div => {
            acc!(ins.a, ASSIGN_A, |c| 1.0 / vb[c]);
            acc!(ins.b, ASSIGN_B, |c| -vo[c] / vb[c]);
        }
        Op::MulAdd => {
            acc!(ins.a, ASSIGN_A, |c| vb[c]);
            acc!(ins.b, ASSIGN_B, |c| va[c]);
            acc!(ins.c, ASSIGN_C, |c| 1.0);
        }
        Op::AddK => {
            acc!(ins.a, ASSIGN_A, |c| 1.0);
        }
        Op::MulK => {
            acc!(ins.a, ASSIGN_A, |c| k);
        }
        Op::DivK => {
            acc!(ins.a, ASSIGN_A, |c| 1.0 / k);
        }
        Op::MulKAdd => {
            acc!(ins.a, ASSIGN_A, |c| k);
            acc!(ins.b, ASSIGN_B, |c| 1.0);
        }
        Op::Neg => {
            acc!(ins.a, ASSIGN_A, |c| -1.0);
        }
        Op::Abs => {
            acc!(ins.a, ASSIGN_A, |c| Scalar::signum0(va[c]));
        }
        Op::Sign => {
            if ins.assign & ASSIGN_A != 0 {
                let tgt = unsafe { row_mut(adj, ins.a as usize * CHUNK) };
                tgt.iter_mut().for_each(|t| *t = 0.0);
            }
        }
        Op::Exp => {
            acc!(ins.a, ASSIGN_A, |c| vo[c]);
        }
        Op::Sin => {
            acc!(ins.a, ASSIGN_A, |c| va[c].cos());
        }
        Op::Cos => {
            acc!(ins.a, ASSIGN_A, |c| -va[c].sin());
        }
        Op::Sinh => {
            acc!(ins.a, ASSIGN_A, |c| va[c].cosh());
        }
        Op::Cosh => {
            acc!(ins.a, ASSIGN_A, |c| va[c].sinh());
        }
        Op::Tanh => {
            acc!(ins.a, ASSIGN_A, |c| 1.0 - vo[c] * vo[c]);
        }
        Op::PowI => {
            acc!(ins.a, ASSIGN_A, |c| k * va[c].powi(k as i32 - 1));
        }
        Op::PowF => {
            acc!(ins.a, ASSIGN_A, |c| k * va[c].powf(k - 1.0));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Scalar;

    #[test]
    fn generic_replay_matches_direct_eval() {
        let prog = Program::record(1, 2, |p, x| {
            let y = (x[0] * x[1]).sin() * p[0] + x[0].exp();
            vec![y]
        });
        let f = |p: f64, a: f64, b: f64| (a * b).sin() * p + a.exp();
        let out = prog.exec_generic(&[1.7], &[0.3, -0.8]);
        assert!((out[0] - f(1.7, 0.3, -0.8)).abs() < 1e-15);
    }

    #[test]
    fn batched_forward_and_reverse_match_scalar_path() {
        let prog = Program::record(2, 1, |p, x| {
            let y = (p[0] * x[0]).tanh() * p[1] + p[0];
            vec![y]
        });
        let xs: Vec<f64> = (0..75).map(|i| -1.0 + 0.027 * i as f64).collect();
        let params = [0.7, -1.3];
        let mut buf = ChunkBuf::for_program(&prog);
        prog.fill_params(&params, &mut buf);
        let mut grad = vec![0.0; 2];
        let mut outs = vec![0.0; xs.len()];
        let mut lane0 = 0;
        while lane0 < xs.len() {
            let n = (xs.len() - lane0).min(CHUNK);
            prog.forward_chunk(&[&xs], lane0, n, &mut buf);
            let mut seeds = [[0.0; CHUNK]];
            for c in 0..CHUNK {
                seeds[0][c] = 0.0;
            }
            for c in 0..n {
                outs[lane0 + c] = prog.output(&buf, 0, c);
                seeds[0][c] = 1.0;
            }
            prog.reverse_chunk(&seeds, &mut buf, &mut grad);
            lane0 += n;
        }
        for (i, &x) in xs.iter().enumerate() {
            let want = (0.7 * x).tanh() * -1.3 + 0.7;
            assert!((outs[i] - want).abs() < 1e-14);
        }
        let f = |p: &[f64]| -> f64 {
            xs.iter().map(|&x| (p[0] * x).tanh() * p[1] + p[0]).sum()
        };
        for j in 0..2 {
            let h = 1e-6;
            let mut pp = params.to_vec();
            pp[j] += h;
            let up = f(&pp);
            pp[j] -= 2.0 * h;
            let dn = f(&pp);
            let fd = (up - dn) / (2.0 * h);
            assert!(
                (grad[j] - fd).abs() <= 1e-5 * (1.0 + fd.abs()),
                "grad[{j}] = {} vs fd {}",
                grad[j],
                fd
            );
        }
    }

    #[test]
    fn taylor_replay_gives_input_derivatives() {
        use crate::diffkit::taylor::Taylor;
        let prog = Program::record(0, 1, |_, x| vec![(x[0] * x[0] * x[0]).tanh()]);
        let x0 = 0.4;
        let seed = Taylor::<f64, 3>::var(x0);
        let out = prog.exec_generic::<Taylor<f64, 3>>(&[], &[seed]);
        let f = |x: f64| (x * x * x).tanh();
        let h = 1e-5;
        let d1 = (f(x0 + h) - f(x0 - h)) / (2.0 * h);
        let d2 = (f(x0 + h) - 2.0 * f(x0) + f(x0 - h)) / (h * h);
        assert!((out[0].derivative(1) - d1).abs() < 1e-9);
        assert!((out[0].derivative(2) - d2).abs() < 1e-5);
    }

    #[test]
    fn first_touch_flags_make_zeroing_unnecessary() {
        // Adjoints must come out right even when the buffer holds garbage
        // from a previous pass.
        let prog = Program::record(3, 1, |p, x| {
            let h = (p[0] * x[0] + p[1]).tanh();
            let y = h * h * p[2] + p[0];
            vec![y]
        });
        let params = [0.4, -0.2, 1.1];
        let xs = [0.9; CHUNK];
        let mut buf = ChunkBuf::for_program(&prog);
        buf.adj.iter_mut().for_each(|v| *v = f64::NAN);
        prog.fill_params(&params, &mut buf);
        prog.forward_chunk(&[&xs], 0, CHUNK, &mut buf);
        let mut seeds = [[0.0; CHUNK]];
        seeds[0][0] = 1.0;
        let mut grad = vec![0.0; 3];
        prog.reverse_chunk(&seeds, &mut buf, &mut grad);
        assert!(grad.iter().all(|g| g.is_finite()), "{grad:?}");
        let g_ref = crate::diffkit::param_gradient(&prog, &params, &[0.9]).unwrap();
        for j in 0..3 {
            assert!((grad[j] - g_ref[j]).abs() < 1e-13, "{grad:?} vs {g_ref:?}");
        }
    }
}
