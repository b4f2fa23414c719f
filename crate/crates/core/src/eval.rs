//! Program interpretation over fitness cases.
//!
//! Three interpreters share one set of primitive semantics:
//!
//! * [`interpret_case`] runs a program on a single case with a scalar
//!   evaluation stack;
//! * [`eval_block_scalar`] runs it once over a block of cases, each stack
//!   entry holding a whole column of intermediate values;
//! * [`eval_block_bits`] does the same over packed Boolean words.
//!
//! All three walk the prefix genome backwards with an explicit stack.

use crate::data::{BitCaseTable, Dataset, FitnessCaseTable};
use crate::genome::{Node, Program};

/// Denominators with magnitude below this make division return 1.0.
pub const DIVISION_GUARD: f64 = 1e-9;

#[inline(always)]
fn truthy(v: f64) -> bool {
    v > 0.0
}

#[inline(always)]
fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

#[inline(always)]
fn protected_div(a: f64, b: f64) -> f64 {
    if b.abs() < DIVISION_GUARD {
        1.0
    } else {
        a / b
    }
}

#[inline(always)]
fn apply_binary(op: Node, a: f64, b: f64) -> f64 {
    match op {
        Node::Mul => a * b,
        Node::Div => protected_div(a, b),
        Node::Add => a + b,
        Node::Sub => a - b,
        Node::Gt => flag(a > b),
        Node::Lt => flag(a < b),
        Node::Eq => flag(a == b),
        Node::And => flag(truthy(a) && truthy(b)),
        Node::Or => flag(truthy(a) || truthy(b)),
        Node::Nand => flag(!(truthy(a) && truthy(b))),
        Node::Nor => flag(!(truthy(a) || truthy(b))),
        other => unreachable!("{other:?} is not binary"),
    }
}

/// Runs `program` on one fitness case.
pub fn interpret_case(program: &Program, features: &[f64]) -> f64 {
    let mut stack: Vec<f64> = Vec::with_capacity(program.depth() * 2);
    for &node in program.nodes().iter().rev() {
        let value = match node {
            Node::Var(i) => features[i as usize],
            Node::Const(c) => c,
            Node::If => {
                let cond = stack.pop().expect("stack underflow");
                let then = stack.pop().expect("stack underflow");
                let otherwise = stack.pop().expect("stack underflow");
                if truthy(cond) {
                    then
                } else {
                    otherwise
                }
            }
            op => {
                let a = stack.pop().expect("stack underflow");
                let b = stack.pop().expect("stack underflow");
                apply_binary(op, a, b)
            }
        };
        stack.push(value);
    }
    stack.pop().expect("empty program")
}

/// Maps a program output to the positive class.
#[inline]
pub fn classify(output: f64) -> bool {
    output > 0.0 && output.is_finite()
}

/// Reusable buffers for the block interpreters.
#[derive(Default)]
pub struct Scratch {
    reals: Vec<Vec<f64>>,
    words: Vec<Vec<u64>>,
}

enum Lane<'t, T> {
    Column(&'t [T]),
    Owned(Vec<T>),
}

impl<T> Lane<'_, T> {
    fn values(&self) -> &[T] {
        match self {
            Lane::Column(c) => c,
            Lane::Owned(v) => v,
        }
    }

    fn recycle(self, pool: &mut Vec<Vec<T>>) {
        if let Lane::Owned(v) = self {
            pool.push(v);
        }
    }
}

fn lane_binary<'t, T: Copy>(
    pool: &mut Vec<Vec<T>>,
    a: Lane<'t, T>,
    b: Lane<'t, T>,
    f: impl Fn(T, T) -> T,
) -> Lane<'t, T> {
    match (a, b) {
        (Lane::Owned(mut xs), b) => {
            for (x, &y) in xs.iter_mut().zip(b.values()) {
                *x = f(*x, y);
            }
            b.recycle(pool);
            Lane::Owned(xs)
        }
        (a, Lane::Owned(mut ys)) => {
            for (y, &x) in ys.iter_mut().zip(a.values()) {
                *y = f(x, *y);
            }
            Lane::Owned(ys)
        }
        (Lane::Column(xs), Lane::Column(ys)) => {
            let mut out = pool.pop().unwrap_or_default();
            out.clear();
            out.extend(xs.iter().zip(ys).map(|(&x, &y)| f(x, y)));
            Lane::Owned(out)
        }
    }
}

/// Hits of `program` on one block of a real-valued table.
pub fn eval_block_scalar(
    program: &Program,
    table: &FitnessCaseTable,
    block: usize,
    scratch: &mut Scratch,
) -> u64 {
    let range = table.block_range(block);
    let len = range.len();
    let pool = &mut scratch.reals;
    let mut stack: Vec<Lane<f64>> = Vec::with_capacity(program.depth() * 2);

    for &node in program.nodes().iter().rev() {
        let lane = match node {
            Node::Var(i) => Lane::Column(&table.column(i as usize)[range.clone()]),
            Node::Const(c) => {
                let mut v = pool.pop().unwrap_or_default();
                v.clear();
                v.resize(len, c);
                Lane::Owned(v)
            }
            Node::If => {
                let cond = stack.pop().expect("stack underflow");
                let then = stack.pop().expect("stack underflow");
                let otherwise = stack.pop().expect("stack underflow");
                let mut out = pool.pop().unwrap_or_default();
                out.clear();
                out.extend(
                    cond.values()
                        .iter()
                        .zip(then.values())
                        .zip(otherwise.values())
                        .map(|((&c, &t), &e)| if truthy(c) { t } else { e }),
                );
                cond.recycle(pool);
                then.recycle(pool);
                otherwise.recycle(pool);
                Lane::Owned(out)
            }
            op => {
                let a = stack.pop().expect("stack underflow");
                let b = stack.pop().expect("stack underflow");
                match op {
                    Node::Mul => lane_binary(pool, a, b, |x, y| x * y),
                    Node::Div => lane_binary(pool, a, b, protected_div),
                    Node::Add => lane_binary(pool, a, b, |x, y| x + y),
                    Node::Sub => lane_binary(pool, a, b, |x, y| x - y),
                    Node::Gt => lane_binary(pool, a, b, |x, y| flag(x > y)),
                    Node::Lt => lane_binary(pool, a, b, |x, y| flag(x < y)),
                    Node::Eq => lane_binary(pool, a, b, |x, y| flag(x == y)),
                    Node::And => lane_binary(pool, a, b, |x, y| flag(truthy(x) && truthy(y))),
                    Node::Or => lane_binary(pool, a, b, |x, y| flag(truthy(x) || truthy(y))),
                    Node::Nand => lane_binary(pool, a, b, |x, y| flag(!(truthy(x) && truthy(y)))),
                    Node::Nor => lane_binary(pool, a, b, |x, y| flag(!(truthy(x) || truthy(y)))),
                    _ => unreachable!(),
                }
            }
        };
        stack.push(lane);
    }

    let out = stack.pop().expect("empty program");
    debug_assert!(stack.is_empty());
    let hits = out
        .values()
        .iter()
        .zip(&table.targets()[range])
        .filter(|(&y, &t)| classify(y) == t)
        .count();
    out.recycle(pool);
    hits as u64
}

/// Hits of a Boolean `program` on one block of packed words, in raw cases.
pub fn eval_block_bits(
    program: &Program,
    table: &BitCaseTable,
    block: usize,
    scratch: &mut Scratch,
) -> u64 {
    let range = table.block_range(block);
    let pool = &mut scratch.words;
    let mut stack: Vec<Lane<u64>> = Vec::with_capacity(program.depth() * 2);

    for &node in program.nodes().iter().rev() {
        let lane = match node {
            Node::Var(i) => Lane::Column(&table.input_words(i as usize)[range.clone()]),
            op => {
                let a = stack.pop().expect("stack underflow");
                let b = stack.pop().expect("stack underflow");
                match op {
                    Node::And => lane_binary(pool, a, b, |x, y| x & y),
                    Node::Or => lane_binary(pool, a, b, |x, y| x | y),
                    Node::Nand => lane_binary(pool, a, b, |x, y| !(x & y)),
                    Node::Nor => lane_binary(pool, a, b, |x, y| !(x | y)),
                    other => panic!("{other:?} is not a Boolean primitive"),
                }
            }
        };
        stack.push(lane);
    }

    let out = stack.pop().expect("empty program");
    let targets = &table.target_words()[range.clone()];
    let hits: u64 = out
        .values()
        .iter()
        .zip(targets)
        .zip(range)
        .map(|((&y, &t), w)| u64::from((!(y ^ t) & table.word_mask(w)).count_ones()))
        .sum();
    out.recycle(pool);
    hits
}

pub fn eval_block(data: &Dataset, program: &Program, block: usize, scratch: &mut Scratch) -> u64 {
    match data {
        Dataset::Real(t) => eval_block_scalar(program, t, block, scratch),
        Dataset::Bits(t) => eval_block_bits(program, t, block, scratch),
    }
}

/// Hits over every block.
pub fn evaluate_full(data: &Dataset, program: &Program, scratch: &mut Scratch) -> u64 {
    (0..data.block_count())
        .map(|b| eval_block(data, program, b, scratch))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    /// Still being evaluated, or evaluated to completion.
    Active,
    /// Lost every tournament it is in; evaluation stopped.
    Loser,
    /// In no tournament; never evaluated.
    NotSampled,
    /// Full fitness inherited without evaluation.
    KnownFull,
}

/// Per-member evaluation progress within one generation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalState {
    pub hits: u64,
    pub cases_evaluated: u64,
    pub status: Status,
    /// One flag per tournament slot the member occupies.
    pub lost_flags: Vec<bool>,
    pub nodes_executed: u64,
    pub blocks_evaluated: usize,
}

impl EvalState {
    pub fn active(memberships: usize) -> Self {
        EvalState {
            hits: 0,
            cases_evaluated: 0,
            status: Status::Active,
            lost_flags: vec![false; memberships],
            nodes_executed: 0,
            blocks_evaluated: 0,
        }
    }

    pub fn known_full(hits: u64, total_cases: u64, memberships: usize) -> Self {
        EvalState {
            hits,
            cases_evaluated: total_cases,
            status: Status::KnownFull,
            ..Self::active(memberships)
        }
    }

    pub fn not_sampled() -> Self {
        EvalState {
            status: Status::NotSampled,
            ..Self::active(0)
        }
    }

    /// Adds one block's result.
    pub fn record_block(&mut self, block_hits: u64, block_cases: u64, nodes: u64) {
        assert_eq!(
            self.status,
            Status::Active,
            "only active members are evaluated"
        );
        assert!(
            block_hits <= block_cases,
            "interpreter reported {block_hits} hits for {block_cases} cases"
        );
        self.hits += block_hits;
        self.cases_evaluated += block_cases;
        self.nodes_executed += nodes;
        self.blocks_evaluated += 1;
    }

    pub fn remaining(&self, total_cases: u64) -> u64 {
        total_cases - self.cases_evaluated
    }

    /// Whether `hits` is the member's full-evaluation fitness.
    pub fn is_complete(&self, total_cases: u64) -> bool {
        match self.status {
            Status::KnownFull => true,
            Status::Active | Status::Loser => self.cases_evaluated == total_cases,
            Status::NotSampled => false,
        }
    }

    pub fn fitness(&self, total_cases: u64) -> Option<u64> {
        self.is_complete(total_cases).then_some(self.hits)
    }
}

/// Accumulates one block's hits into `state`.
pub fn update_state(state: &mut EvalState, block_hits: u64, block_cases: u64) {
    state.record_block(block_hits, block_cases, 0);
}
