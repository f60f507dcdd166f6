//! List scheduling with operation chaining.
//!
//! Priority is the critical-path delay from a node to any sink (ties by
//! node id). Dependent operations share a state when their summed delay
//! fits the clock budget. Memory accesses never chain and use the single
//! memory port (one per state). Operations slower than the budget take
//! several cycles in a state of their own chain.

use super::cost::CostModel;
use super::dfg::{Dfg, DfgNode};
use super::SynthError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    /// Per node: state index within the hyperblock.
    pub state: Vec<u32>,
    /// Per node: chain position (start offset in delay units).
    pub start: Vec<u32>,
    /// Per node: combinational delay.
    pub delay: Vec<u32>,
    pub nstates: u32,
    /// Per state: longest chained delay.
    pub state_delay: Vec<u32>,
    /// Per state: clock cycles spent.
    pub state_cycles: Vec<u32>,
    /// Per out-edge: state at whose end the edge may be taken.
    pub edge_ready: Vec<u32>,
}

/// Whether a node may share a state with its producers or consumers.
pub fn chainable(n: &DfgNode, delay: u32, budget: u32) -> bool {
    !n.op.is_memory() && delay <= budget
}

pub fn node_delays(nodes: &[DfgNode], m: &CostModel) -> Vec<u32> {
    nodes.iter().map(|n| m.delay(n.op.kind())).collect()
}

/// Cycles of a state from its members' (is-memory, delay) pairs: the
/// slowest multi-cycle operation (at least one cycle), plus the memory
/// penalty when the state accesses memory.
pub fn state_cycles(members: impl IntoIterator<Item = (bool, u32)>, budget: u32, mem_penalty: u64) -> u32 {
    let budget = budget.max(1);
    let mut cycles = 1;
    let mut mem = false;
    for (is_mem, d) in members {
        cycles = cycles.max(d.div_ceil(budget));
        mem |= is_mem;
    }
    cycles + if mem { mem_penalty as u32 } else { 0 }
}

pub fn schedule(d: &Dfg, m: &CostModel) -> Result<Schedule, SynthError> {
    let budget = m.clock_budget;
    if budget == 0 {
        return Err(SynthError::Unschedulable("clock budget is zero".into()));
    }
    let n = d.nodes.len();
    let delay = node_delays(&d.nodes, m);
    if let Some(i) = delay.iter().position(|&x| x == 0) {
        return Err(SynthError::Unschedulable(format!(
            "unschedulable operation: node {i} ({}) has zero delay",
            d.nodes[i].op.mnemonic()
        )));
    }
    let mut preds = vec![Vec::new(); n];
    let mut succs = vec![Vec::new(); n];
    for &(u, v) in &d.edges {
        preds[v as usize].push(u as usize);
        succs[u as usize].push(v as usize);
    }
    // Critical path to any sink.
    let mut prio = vec![0u64; n];
    for v in (0..n).rev() {
        let down = succs[v].iter().map(|&s| prio[s]).max().unwrap_or(0);
        prio[v] = delay[v] as u64 + down;
    }

    let mut state = vec![u32::MAX; n];
    let mut start = vec![0u32; n];
    let mut remaining = n;
    let mut cur = 0u32;
    while remaining > 0 {
        let mut mem_used = false;
        loop {
            let mut best: Option<(usize, u32)> = None;
            for v in 0..n {
                if state[v] != u32::MAX || preds[v].iter().any(|&u| state[u] == u32::MAX) {
                    continue;
                }
                let cv = chainable(&d.nodes[v], delay[v], budget);
                let mut s = 0;
                let mut ok = true;
                for &u in &preds[v] {
                    if state[u] == cur {
                        if cv && chainable(&d.nodes[u], delay[u], budget) {
                            s = s.max(start[u] + delay[u]);
                        } else {
                            ok = false;
                        }
                    }
                }
                if !ok || (d.nodes[v].op.is_memory() && mem_used) || (cv && s + delay[v] > budget) {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((b, _)) => prio[v] > prio[b],
                };
                if better {
                    best = Some((v, s));
                }
            }
            let Some((v, s)) = best else { break };
            state[v] = cur;
            start[v] = s;
            mem_used |= d.nodes[v].op.is_memory();
            remaining -= 1;
        }
        cur += 1;
    }
    let nstates = cur.max(1);
    let mut state_delay = vec![0u32; nstates as usize];
    let mut members: Vec<Vec<(bool, u32)>> = vec![Vec::new(); nstates as usize];
    for v in 0..n {
        let s = state[v] as usize;
        state_delay[s] = state_delay[s].max(start[v] + delay[v]);
        members[s].push((d.nodes[v].op.is_memory(), delay[v]));
    }
    let state_cycles = members
        .into_iter()
        .map(|ms| state_cycles(ms, budget, m.mem_penalty_cycles))
        .collect();
    let edge_ready = d
        .out_edges
        .iter()
        .map(|e| e.requires.iter().map(|&r| state[r as usize]).max().unwrap_or(0))
        .collect();
    Ok(Schedule {
        state,
        start,
        delay,
        nstates,
        state_delay,
        state_cycles,
        edge_ready,
    })
}

/// Checks every schedule invariant against the dependences implied by the
/// nodes themselves (not the scheduler's edge list).
pub fn validate_placement(
    nodes: &[DfgNode],
    state: &[u32],
    start: &[u32],
    delay: &[u32],
    budget: u32,
) -> Result<(), String> {
    for (u, v) in Dfg::implied_edges(nodes) {
        let (u, v) = (u as usize, v as usize);
        if u >= v {
            return Err(format!("node {v} depends on later node {u}"));
        }
        let ok = if state[u] < state[v] {
            true
        } else if state[u] == state[v] {
            chainable(&nodes[u], delay[u], budget)
                && chainable(&nodes[v], delay[v], budget)
                && start[u] + delay[u] <= start[v]
        } else {
            false
        };
        if !ok {
            return Err(format!(
                "dependence n{u} -> n{v} violated (n{u} in state {} at {}, n{v} in state {} at {})",
                state[u], start[u], state[v], start[v]
            ));
        }
    }
    let nstates = state.iter().copied().max().map_or(0, |m| m + 1);
    let mut mem = vec![0u32; nstates as usize];
    for (i, n) in nodes.iter().enumerate() {
        if chainable(n, delay[i], budget) {
            if start[i] + delay[i] > budget {
                return Err(format!("n{i} ends at {} beyond the clock budget {budget}", start[i] + delay[i]));
            }
        } else if start[i] != 0 {
            return Err(format!("unchained n{i} does not start its state"));
        }
        if n.op.is_memory() {
            mem[state[i] as usize] += 1;
            if mem[state[i] as usize] > 1 {
                return Err(format!("state {} issues more than one memory access", state[i]));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::BinOp;
    use crate::synth::dfg::{NodeOp, Src};

    fn add(args: Vec<Src>) -> DfgNode {
        DfgNode {
            op: NodeOp::Bin(BinOp::Add),
            args,
            pred: None,
            dst: None,
            value: None,
            block: 0,
        }
    }

    fn dfg(nodes: Vec<DfgNode>) -> Dfg {
        let edges = Dfg::implied_edges(&nodes);
        Dfg {
            root: crate::ir::BlockId(0),
            nodes,
            edges,
            out_edges: vec![],
            blocks: vec![],
        }
    }

    fn model(add_delay: u32, budget: u32) -> CostModel {
        let mut m = CostModel::default();
        m.op_delay.insert(crate::synth::cost::OpKind::Add, add_delay);
        m.clock_budget = budget;
        m
    }

    /// Fewest states any legal schedule of a chain of `k` unit ops can use.
    fn brute_force_chain_states(k: u32, delay: u32, budget: u32) -> u32 {
        // Enumerate all cut sets of the chain.
        let mut best = u32::MAX;
        for mask in 0u32..(1 << (k - 1)) {
            let mut states = 1;
            let mut acc = delay;
            let mut ok = delay <= budget;
            for i in 0..k - 1 {
                if mask & (1 << i) != 0 {
                    states += 1;
                    acc = delay;
                } else {
                    acc += delay;
                }
                ok &= acc <= budget;
            }
            if ok {
                best = best.min(states);
            }
        }
        best
    }

    #[test]
    fn three_chained_adds_take_two_states() {
        let d = dfg(vec![
            add(vec![Src::Reg(0), Src::Const(1)]),
            add(vec![Src::Node(0), Src::Const(1)]),
            add(vec![Src::Node(1), Src::Const(1)]),
        ]);
        let s = schedule(&d, &model(1, 2)).unwrap();
        assert_eq!(s.nstates, 2);
        assert_eq!(s.nstates, brute_force_chain_states(3, 1, 2));
        validate_placement(&d.nodes, &s.state, &s.start, &s.delay, 2).unwrap();
    }

    #[test]
    fn single_node_one_state() {
        let d = dfg(vec![add(vec![Src::Reg(0), Src::Reg(1)])]);
        assert_eq!(schedule(&d, &model(1, 2)).unwrap().nstates, 1);
    }

    #[test]
    fn independent_adds_share_state_zero() {
        let d = dfg(vec![add(vec![Src::Reg(0), Src::Reg(1)]), add(vec![Src::Reg(2), Src::Reg(3)])]);
        let s = schedule(&d, &model(1, 2)).unwrap();
        assert_eq!(s.state, vec![0, 0]);
    }

    #[test]
    fn slow_operation_becomes_multi_cycle() {
        let mut div = add(vec![Src::Reg(0), Src::Const(3)]);
        div.op = NodeOp::Bin(BinOp::Div);
        let d = dfg(vec![div, add(vec![Src::Node(0), Src::Const(1)])]);
        let m = CostModel::default();
        let s = schedule(&d, &m).unwrap();
        assert_eq!(s.state, vec![0, 1]);
        assert_eq!(s.state_cycles[0], 2);
    }

    #[test]
    fn validator_rejects_broken_chain() {
        let d = dfg(vec![add(vec![Src::Reg(0), Src::Const(1)]), add(vec![Src::Node(0), Src::Const(1)])]);
        let err = validate_placement(&d.nodes, &[0, 0], &[0, 0], &[1, 1], 2).unwrap_err();
        assert!(err.contains("violated"), "{err}");
    }

    proptest::proptest! {
        #[test]
        fn chains_match_brute_force(k in 1u32..7, delay in 1u32..4, budget in 1u32..9) {
            proptest::prop_assume!(delay <= budget);
            let mut nodes = vec![add(vec![Src::Reg(0), Src::Const(1)])];
            for i in 1..k {
                nodes.push(add(vec![Src::Node(i - 1), Src::Const(1)]));
            }
            let d = dfg(nodes);
            let s = schedule(&d, &model(delay, budget)).unwrap();
            validate_placement(&d.nodes, &s.state, &s.start, &s.delay, budget).unwrap();
            proptest::prop_assert_eq!(s.nstates, brute_force_chain_states(k, delay, budget));
        }
    }
}
