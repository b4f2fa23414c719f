//! Program representation and the genetic operators.
//!
//! Programs are stored as a flat prefix (pre-order) sequence of nodes. Every
//! operator works directly on that sequence: a subtree is the contiguous run
//! of nodes starting at some index whose arities sum to one complete
//! expression.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::GenomeError;

/// Magnitude bound for randomly drawn constants.
pub const CONSTANT_RANGE: f64 = 20_000.0;

/// Attempts an operator makes before falling back to a copy of its parent.
pub const OPERATOR_ATTEMPTS: usize = 10;

/// Maximum depth of the random subtree grown by mutation.
pub const MUTATION_DEPTH: usize = 4;

/// Ramped half-and-half depth range used for the initial population.
pub const INIT_MIN_DEPTH: usize = 2;
pub const INIT_MAX_DEPTH: usize = 6;

const INIT_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node {
    Mul,
    Div,
    Add,
    Sub,
    Gt,
    Lt,
    Eq,
    And,
    Or,
    Nand,
    Nor,
    If,
    /// Input terminal: a feature column or a Boolean input line.
    Var(u16),
    Const(f64),
}

impl Node {
    pub fn arity(self) -> usize {
        match self {
            Node::Var(_) | Node::Const(_) => 0,
            Node::If => 3,
            _ => 2,
        }
    }

    pub fn is_terminal(self) -> bool {
        self.arity() == 0
    }

    fn symbol(self) -> &'static str {
        match self {
            Node::Mul => "*",
            Node::Div => "/",
            Node::Add => "+",
            Node::Sub => "-",
            Node::Gt => ">",
            Node::Lt => "<",
            Node::Eq => "==",
            Node::And => "AND",
            Node::Or => "OR",
            Node::Nand => "NAND",
            Node::Nor => "NOR",
            Node::If => "IF",
            Node::Var(_) | Node::Const(_) => "",
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Node::Var(i) => write!(f, "x{i}"),
            Node::Const(c) => {
                let text = c.to_string();
                if text.contains('.') {
                    f.write_str(&text)
                } else {
                    write!(f, "{text}.0")
                }
            }
            op => f.write_str(op.symbol()),
        }
    }
}

impl FromStr for Node {
    type Err = GenomeError;

    fn from_str(token: &str) -> Result<Self, Self::Err> {
        let node = match token {
            "*" => Node::Mul,
            "/" => Node::Div,
            "+" => Node::Add,
            "-" => Node::Sub,
            ">" => Node::Gt,
            "<" => Node::Lt,
            "==" => Node::Eq,
            "AND" => Node::And,
            "OR" => Node::Or,
            "NAND" => Node::Nand,
            "NOR" => Node::Nor,
            "IF" => Node::If,
            _ => {
                if let Some(index) = token.strip_prefix('x') {
                    let index = index
                        .parse()
                        .map_err(|_| GenomeError::BadToken(token.to_string()))?;
                    Node::Var(index)
                } else {
                    let value: f64 = token
                        .parse()
                        .map_err(|_| GenomeError::BadToken(token.to_string()))?;
                    if !value.is_finite() {
                        return Err(GenomeError::BadToken(token.to_string()));
                    }
                    Node::Const(value)
                }
            }
        };
        Ok(node)
    }
}

const CLASSIFICATION_FUNCTIONS: [Node; 10] = [
    Node::Mul,
    Node::Div,
    Node::Add,
    Node::Sub,
    Node::Gt,
    Node::Lt,
    Node::Eq,
    Node::And,
    Node::Or,
    Node::If,
];

const BOOLEAN_FUNCTIONS: [Node; 4] = [Node::And, Node::Or, Node::Nand, Node::Nor];

/// The primitives available to a problem.
#[derive(Clone, Debug, PartialEq)]
pub enum FunctionSet {
    /// Real-valued arithmetic, comparison and logic over feature columns,
    /// plus random constants.
    Classification { features: usize },
    /// AND/OR/NAND/NOR over Boolean input lines, no constants.
    Boolean { inputs: usize },
}

impl FunctionSet {
    pub fn functions(&self) -> &'static [Node] {
        match self {
            FunctionSet::Classification { .. } => &CLASSIFICATION_FUNCTIONS,
            FunctionSet::Boolean { .. } => &BOOLEAN_FUNCTIONS,
        }
    }

    pub fn variables(&self) -> usize {
        match *self {
            FunctionSet::Classification { features } => features,
            FunctionSet::Boolean { inputs } => inputs,
        }
    }

    pub fn has_constants(&self) -> bool {
        matches!(self, FunctionSet::Classification { .. })
    }

    /// Number of distinct terminal kinds: one per variable, plus one for the
    /// ephemeral random constant when the set has constants.
    fn terminal_kinds(&self) -> usize {
        self.variables() + usize::from(self.has_constants())
    }

    pub fn random_terminal<R: Rng + ?Sized>(&self, rng: &mut R) -> Node {
        let pick = rng.gen_range(0..self.terminal_kinds());
        if pick < self.variables() {
            Node::Var(pick as u16)
        } else {
            Node::Const(rng.gen_range(-CONSTANT_RANGE..=CONSTANT_RANGE))
        }
    }

    pub fn random_function<R: Rng + ?Sized>(&self, rng: &mut R) -> Node {
        let functions = self.functions();
        functions[rng.gen_range(0..functions.len())]
    }

    /// Whether `node` belongs to this set.
    pub fn admits(&self, node: Node) -> bool {
        match node {
            Node::Var(i) => (i as usize) < self.variables(),
            Node::Const(c) => self.has_constants() && c.is_finite(),
            op => self.functions().contains(&op),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub max_depth: usize,
    pub max_size: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_depth: 50,
            max_size: 1000,
        }
    }
}

impl Limits {
    fn admit(&self, nodes: &[Node]) -> bool {
        nodes.len() <= self.max_size && depth_of(nodes) <= self.max_depth
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMethod {
    Grow,
    Full,
}

/// How a program came to exist in its generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Initial,
    /// Cloned from a parent with no operator applied.
    Copy,
    Crossover,
    Mutation,
    /// An operator exhausted its attempts and returned its input unchanged.
    Fallback,
    Elite,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    nodes: Vec<Node>,
    depth: usize,
    /// Genetically identical to a member of the previous generation.
    pub unmodified: bool,
    /// Full-evaluation hits carried over from that member, when known.
    pub cached_fitness: Option<u64>,
    pub origin: Origin,
}

impl Program {
    /// Builds a program from a prefix sequence, checking arity consistency.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self, GenomeError> {
        if nodes.is_empty() {
            return Err(GenomeError::Empty);
        }
        if !is_arity_consistent(&nodes) {
            return Err(GenomeError::Inconsistent);
        }
        Ok(Self::fresh(nodes, Origin::Initial))
    }

    fn fresh(nodes: Vec<Node>, origin: Origin) -> Self {
        debug_assert!(is_arity_consistent(&nodes));
        let depth = depth_of(&nodes);
        Program {
            nodes,
            depth,
            unmodified: false,
            cached_fitness: None,
            origin,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Node-for-node genome identity, ignoring bookkeeping flags.
    pub fn same_genome(&self, other: &Program) -> bool {
        self.nodes == other.nodes
    }

    /// A copy standing for this program in the next generation: unmodified,
    /// carrying `fitness` if the full fitness of this program is known.
    pub fn inherit(&self, fitness: Option<u64>, origin: Origin) -> Program {
        Program {
            nodes: self.nodes.clone(),
            depth: self.depth,
            unmodified: true,
            cached_fitness: fitness,
            origin,
        }
    }

    fn with_origin(&self, origin: Origin) -> Program {
        let mut copy = self.clone();
        copy.origin = origin;
        copy
    }

    /// Checks that every node belongs to `set`.
    pub fn check_against(&self, set: &FunctionSet) -> Result<(), GenomeError> {
        match self.nodes.iter().find(|n| !set.admits(**n)) {
            Some(node) => Err(GenomeError::ForeignNode(node.to_string())),
            None => Ok(()),
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, node) in self.nodes.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{node}")?;
        }
        Ok(())
    }
}

impl FromStr for Program {
    type Err = GenomeError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let nodes = text
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<Vec<Node>, _>>()?;
        Program::from_nodes(nodes)
    }
}

/// True when `nodes` is exactly one complete prefix expression.
pub fn is_arity_consistent(nodes: &[Node]) -> bool {
    let mut open = 1usize;
    for (i, node) in nodes.iter().enumerate() {
        if open == 0 {
            return false;
        }
        open = open - 1 + node.arity();
        if open == 0 && i + 1 != nodes.len() {
            return false;
        }
    }
    open == 0 && !nodes.is_empty()
}

/// One past the last node of the subtree rooted at `start`.
pub fn subtree_end(nodes: &[Node], start: usize) -> usize {
    let mut open = 1usize;
    let mut i = start;
    while open > 0 {
        open = open - 1 + nodes[i].arity();
        i += 1;
    }
    i
}

/// Depth of a prefix expression; a lone terminal has depth 1.
pub fn depth_of(nodes: &[Node]) -> usize {
    // Pending child counts of the ancestors on the current path.
    let mut pending: Vec<usize> = Vec::with_capacity(16);
    let mut deepest = 0;
    for node in nodes {
        deepest = deepest.max(pending.len() + 1);
        if node.arity() > 0 {
            pending.push(node.arity());
        } else {
            while let Some(top) = pending.last_mut() {
                *top -= 1;
                if *top > 0 {
                    break;
                }
                pending.pop();
            }
        }
    }
    deepest
}

fn grow_into<R: Rng + ?Sized>(
    rng: &mut R,
    set: &FunctionSet,
    method: InitMethod,
    depth: usize,
    out: &mut Vec<Node>,
) {
    let node = if depth <= 1 {
        set.random_terminal(rng)
    } else {
        match method {
            InitMethod::Full => set.random_function(rng),
            InitMethod::Grow => {
                let functions = set.functions().len();
                let pick = rng.gen_range(0..functions + set.terminal_kinds());
                if pick < functions {
                    set.functions()[pick]
                } else {
                    set.random_terminal(rng)
                }
            }
        }
    };
    out.push(node);
    for _ in 0..node.arity() {
        grow_into(rng, set, method, depth - 1, out);
    }
}

/// Generates a random program no deeper than `max_init_depth`.
///
/// Retries when the tree exceeds the size limit; after enough failures a
/// single terminal is returned, which is always within limits.
pub fn random_program<R: Rng + ?Sized>(
    rng: &mut R,
    set: &FunctionSet,
    limits: &Limits,
    method: InitMethod,
    max_init_depth: usize,
) -> Program {
    assert!(max_init_depth >= 1, "initial depth must be at least 1");
    assert!(
        max_init_depth <= limits.max_depth,
        "initial depth exceeds the depth limit"
    );
    let mut nodes = Vec::new();
    for _ in 0..INIT_ATTEMPTS {
        nodes.clear();
        grow_into(rng, set, method, max_init_depth, &mut nodes);
        if nodes.len() <= limits.max_size {
            return Program::fresh(nodes, Origin::Initial);
        }
    }
    Program::fresh(vec![set.random_terminal(rng)], Origin::Initial)
}

/// Ramped half-and-half over depths `INIT_MIN_DEPTH..=INIT_MAX_DEPTH`
/// (clamped to the depth limit), alternating full and grow.
pub fn ramped_half_and_half<R: Rng + ?Sized>(
    rng: &mut R,
    set: &FunctionSet,
    limits: &Limits,
    count: usize,
) -> Vec<Program> {
    let top = INIT_MAX_DEPTH.min(limits.max_depth);
    let bottom = INIT_MIN_DEPTH.min(top);
    let ramp = top - bottom + 1;
    (0..count)
        .map(|i| {
            let depth = bottom + i % ramp;
            let method = if (i / ramp).is_multiple_of(2) {
                InitMethod::Full
            } else {
                InitMethod::Grow
            };
            random_program(rng, set, limits, method, depth)
        })
        .collect()
}

fn splice(host: &[Node], at: usize, end: usize, graft: &[Node]) -> Vec<Node> {
    let mut out = Vec::with_capacity(host.len() - (end - at) + graft.len());
    out.extend_from_slice(&host[..at]);
    out.extend_from_slice(graft);
    out.extend_from_slice(&host[end..]);
    out
}

/// Wraps an operator result. A result identical to one of `sources` is that
/// source (same flags and cached fitness); anything else is new.
fn offspring(nodes: Vec<Node>, sources: &[&Program], origin: Origin) -> Program {
    match sources.iter().find(|p| p.nodes == nodes) {
        Some(source) => source.with_origin(origin),
        None => Program::fresh(nodes, origin),
    }
}

fn crossover_inner<R: Rng + ?Sized>(
    a: &Program,
    b: &Program,
    rng: &mut R,
    limits: &Limits,
) -> (Program, Program) {
    let mut last = None;
    for _ in 0..OPERATOR_ATTEMPTS {
        let at_a = rng.gen_range(0..a.size());
        let at_b = rng.gen_range(0..b.size());
        let end_a = subtree_end(&a.nodes, at_a);
        let end_b = subtree_end(&b.nodes, at_b);
        let child_a = splice(&a.nodes, at_a, end_a, &b.nodes[at_b..end_b]);
        let child_b = splice(&b.nodes, at_b, end_b, &a.nodes[at_a..end_a]);
        let ok = (limits.admit(&child_a), limits.admit(&child_b));
        let done = ok.0 && ok.1;
        last = Some((child_a, child_b, ok));
        if done {
            break;
        }
    }
    let (child_a, child_b, (ok_a, ok_b)) = last.expect("at least one attempt");
    let pick = |child: Vec<Node>, ok: bool, own: &Program| {
        if ok {
            offspring(child, &[a, b], Origin::Crossover)
        } else {
            own.with_origin(Origin::Fallback)
        }
    };
    (pick(child_a, ok_a, a), pick(child_b, ok_b, b))
}

/// Exchanges one uniformly chosen subtree between the parents.
///
/// Both parents are treated as members of the previous generation, so an
/// offspring identical to either parent comes back `unmodified` with that
/// parent's cached fitness. When no attempt keeps an offspring within
/// limits it is replaced by a verbatim copy of its own parent.
pub fn subtree_crossover<R: Rng + ?Sized>(
    parent_a: &Program,
    parent_b: &Program,
    rng: &mut R,
    limits: &Limits,
) -> (Program, Program) {
    let a = parent_a.inherit(parent_a.cached_fitness, Origin::Copy);
    let b = parent_b.inherit(parent_b.cached_fitness, Origin::Copy);
    crossover_inner(&a, &b, rng, limits)
}

fn mutation_inner<R, G>(parent: &Program, rng: &mut R, limits: &Limits, mut grow: G) -> Program
where
    R: Rng + ?Sized,
    G: FnMut(&mut R) -> Vec<Node>,
{
    for _ in 0..OPERATOR_ATTEMPTS {
        let at = rng.gen_range(0..parent.size());
        let end = subtree_end(&parent.nodes, at);
        let graft = grow(rng);
        let child = splice(&parent.nodes, at, end, &graft);
        if limits.admit(&child) {
            return offspring(child, &[parent], Origin::Mutation);
        }
    }
    parent.with_origin(Origin::Fallback)
}

fn grow_subtree<R: Rng + ?Sized>(rng: &mut R, set: &FunctionSet) -> Vec<Node> {
    let mut nodes = Vec::new();
    grow_into(rng, set, InitMethod::Grow, MUTATION_DEPTH, &mut nodes);
    nodes
}

/// Replaces one uniformly chosen subtree with a freshly grown one.
///
/// The parent is treated as a member of the previous generation: if every
/// attempt breaks the limits, the result is its verbatim copy marked
/// `unmodified`.
pub fn subtree_mutation<R: Rng + ?Sized>(
    parent: &Program,
    rng: &mut R,
    set: &FunctionSet,
    limits: &Limits,
) -> Program {
    let parent = parent.inherit(parent.cached_fitness, Origin::Copy);
    mutation_inner(&parent, rng, limits, |r| grow_subtree(r, set))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BreedParams {
    pub p_crossover: f64,
    pub p_mutation: f64,
}

/// Produces two children from two parents.
///
/// Each parent is cloned as an unmodified copy carrying `fitness_*` (the
/// parent's full fitness, when known). Crossover is applied to the pair
/// with probability `p_crossover`, then each child independently undergoes
/// mutation with probability `p_mutation`.
pub fn breed<R: Rng + ?Sized>(
    parents: (&Program, &Program),
    fitness: (Option<u64>, Option<u64>),
    rng: &mut R,
    set: &FunctionSet,
    limits: &Limits,
    params: BreedParams,
) -> (Program, Program) {
    let a = parents.0.inherit(fitness.0, Origin::Copy);
    let b = parents.1.inherit(fitness.1, Origin::Copy);
    let (mut first, mut second) = if rng.gen_bool(params.p_crossover) {
        crossover_inner(&a, &b, rng, limits)
    } else {
        (a, b)
    };
    if rng.gen_bool(params.p_mutation) {
        first = mutation_inner(&first, rng, limits, |r| grow_subtree(r, set));
    }
    if rng.gen_bool(params.p_mutation) {
        second = mutation_inner(&second, rng, limits, |r| grow_subtree(r, set));
    }
    (first, second)
}
