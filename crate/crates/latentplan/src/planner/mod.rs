//! Forward state-space search over latent bitvectors: A* with pluggable
//! successor functions (compiled STRIPS problems or the learned
//! five-filter successor generator) and the goal-count heuristic.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::ama1::StripsProblem;
use crate::bits::LatentBitVector;
use crate::error::Result;

pub mod ama2_succ;

pub use ama2_succ::{Ama2Successors, SuccConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Solved,
    Timeout,
    Exhausted,
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub status: PlanStatus,
    /// State sequence from init to goal inclusive (when solved).
    pub states: Vec<LatentBitVector>,
    /// Generating action ids, one per transition.
    pub action_ids: Vec<u32>,
    pub expanded: usize,
    pub generated: usize,
    pub wall: Duration,
}

impl PlanResult {
    pub fn plan_length(&self) -> usize {
        self.action_ids.len()
    }

    pub fn solved(&self) -> bool {
        self.status == PlanStatus::Solved
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SearchLimits {
    pub time: Duration,
    pub max_expansions: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits { time: Duration::from_secs(180), max_expansions: usize::MAX }
    }
}

/// Successor generation interface. Takes `&mut self` so implementations
/// may memoize; results must stay deterministic.
pub trait SuccessorFn {
    fn successors(&mut self, s: &LatentBitVector) -> Result<Vec<(u32, LatentBitVector)>>;
}

impl<F> SuccessorFn for F
where
    F: FnMut(&LatentBitVector) -> Result<Vec<(u32, LatentBitVector)>>,
{
    fn successors(&mut self, s: &LatentBitVector) -> Result<Vec<(u32, LatentBitVector)>> {
        self(s)
    }
}

/// Hamming distance between the state and the goal.
pub fn goal_count(s: &LatentBitVector, goal: &LatentBitVector) -> Result<usize> {
    s.hamming(goal)
}

struct Node {
    state: LatentBitVector,
    g: u32,
    parent: Option<usize>,
    action: u32,
}

#[derive(PartialEq, Eq)]
struct HeapEntry {
    f: u64,
    g: u32,
    seq: u64,
    node: usize,
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap: smallest f first, ties broken by larger g, then FIFO
        other
            .f
            .cmp(&self.f)
            .then(self.g.cmp(&other.g))
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Best-first search on f = g + h with unit costs. With h = 0 this is
/// Dijkstra and the result is optimal. The closed list uses exact
/// bitvector equality; tie-breaking is fixed for reproducibility.
pub fn astar<S: SuccessorFn, H: Fn(&LatentBitVector) -> usize>(
    init: &LatentBitVector,
    goal: &LatentBitVector,
    succ: &mut S,
    h: H,
    limits: SearchLimits,
) -> Result<PlanResult> {
    let start_time = Instant::now();
    let mut nodes: Vec<Node> = Vec::new();
    let mut best_g: HashMap<LatentBitVector, u32> = HashMap::new();
    let mut open: BinaryHeap<HeapEntry> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut expanded = 0usize;
    let mut generated = 0usize;

    nodes.push(Node { state: init.clone(), g: 0, parent: None, action: 0 });
    best_g.insert(init.clone(), 0);
    open.push(HeapEntry { f: h(init) as u64, g: 0, seq, node: 0 });

    while let Some(entry) = open.pop() {
        let node_idx = entry.node;
        let (state, g) = (nodes[node_idx].state.clone(), nodes[node_idx].g);
        // stale entry: a cheaper route to this state was already expanded
        if best_g.get(&state).copied().unwrap_or(u32::MAX) < g {
            continue;
        }
        if state == *goal {
            return Ok(finish(PlanStatus::Solved, &nodes, node_idx, expanded, generated, start_time));
        }
        if start_time.elapsed() >= limits.time {
            return Ok(finish(PlanStatus::Timeout, &nodes, node_idx, expanded, generated, start_time));
        }
        if expanded >= limits.max_expansions {
            return Ok(finish(PlanStatus::Timeout, &nodes, node_idx, expanded, generated, start_time));
        }
        expanded += 1;
        for (action, t) in succ.successors(&state)? {
            let ng = g + 1;
            let known = best_g.get(&t).copied().unwrap_or(u32::MAX);
            if ng < known {
                best_g.insert(t.clone(), ng);
                let f = ng as u64 + h(&t) as u64;
                nodes.push(Node { state: t, g: ng, parent: Some(node_idx), action });
                seq += 1;
                generated += 1;
                open.push(HeapEntry { f, g: ng, seq, node: nodes.len() - 1 });
            }
        }
    }
    Ok(finish(PlanStatus::Exhausted, &nodes, 0, expanded, generated, start_time))
}

fn finish(
    status: PlanStatus,
    nodes: &[Node],
    end: usize,
    expanded: usize,
    generated: usize,
    start_time: Instant,
) -> PlanResult {
    let (states, action_ids) = if status == PlanStatus::Solved {
        let mut states = Vec::new();
        let mut actions = Vec::new();
        let mut cur = Some(end);
        while let Some(i) = cur {
            states.push(nodes[i].state.clone());
            if nodes[i].parent.is_some() {
                actions.push(nodes[i].action);
            }
            cur = nodes[i].parent;
        }
        states.reverse();
        actions.reverse();
        (states, actions)
    } else {
        (Vec::new(), Vec::new())
    };
    PlanResult {
        status,
        states,
        action_ids,
        expanded,
        generated,
        wall: start_time.elapsed(),
    }
}

/// Successor function over a compiled STRIPS problem: an index from each
/// full-state precondition to its outgoing actions.
pub struct StripsSuccessors {
    problem: StripsProblem,
    index: HashMap<LatentBitVector, Vec<u32>>,
}

impl StripsSuccessors {
    pub fn new(problem: StripsProblem) -> Self {
        let mut index: HashMap<LatentBitVector, Vec<u32>> = HashMap::new();
        for a in &problem.actions {
            index.entry(a.pre.clone()).or_default().push(a.id);
        }
        StripsSuccessors { problem, index }
    }

    pub fn problem(&self) -> &StripsProblem {
        &self.problem
    }

    pub fn into_problem(self) -> StripsProblem {
        self.problem
    }
}

impl SuccessorFn for StripsSuccessors {
    fn successors(&mut self, s: &LatentBitVector) -> Result<Vec<(u32, LatentBitVector)>> {
        Ok(match self.index.get(s) {
            Some(ids) => ids
                .iter()
                .map(|&id| (id, self.problem.actions[id as usize].post()))
                .collect(),
            None => Vec::new(),
        })
    }
}
