//! The accelerator's finite state machine: an idle state awaiting `start`,
//! the scheduled body states of every hyperblock, and a done state that
//! holds the outputs and `bb_idx`.
//!
//! State numbering is global: 0 is idle, hyperblock `h` owns states
//! `first_state .. first_state + states.len()`, and the last state is done.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::cost::CostModel;
use super::dfg::{Copy, Dest, Dfg, DfgNode, IfConverted, OutEdge, RegInfo, Src, Target};
use super::region::LoopRegion;
use super::schedule::{schedule, state_cycles, validate_placement, Schedule};

/// Name of the distinguished exit-identifier output.
pub const BB_IDX: &str = "bb_idx";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub reg: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitInfo {
    pub id: u32,
    /// Original exit edge (inside block, outside block).
    pub from_block: u32,
    pub to_block: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsmNode {
    #[serde(flatten)]
    pub node: DfgNode,
    /// State index within the hyperblock.
    pub state: u32,
    /// Chain position within the state.
    pub start: u32,
    pub delay: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsmEdge {
    #[serde(flatten)]
    pub edge: OutEdge,
    /// Local state at whose end the edge is evaluated.
    pub ready: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsmBlock {
    /// Loop header starting this hyperblock.
    pub root_block: u32,
    /// Global number of the first state.
    pub first_state: u32,
    pub nodes: Vec<FsmNode>,
    /// Clock cycles of each local state.
    pub states: Vec<u32>,
    /// Outgoing transitions, in priority order.
    pub edges: Vec<FsmEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsmSpec {
    pub name: String,
    pub function: String,
    pub loop_id: u32,
    pub header_block: u32,
    /// Live-in registers, in wrapper argument order (32 bits each).
    pub inputs: Vec<Port>,
    /// Data outputs; `bb_idx` is implicit and always last.
    pub outputs: Vec<String>,
    pub registers: Vec<RegInfo>,
    pub exits: Vec<ExitInfo>,
    pub mem_ports: u32,
    pub arrays: Vec<String>,
    /// Register initialisation performed when leaving the idle state.
    pub entry_copies: Vec<Copy>,
    pub blocks: Vec<FsmBlock>,
    pub clock_budget: u32,
    pub mem_penalty_cycles: u64,
}

impl FsmSpec {
    /// Body states across all hyperblocks.
    pub fn body_states(&self) -> u32 {
        self.blocks.iter().map(|b| b.states.len() as u32).sum()
    }

    /// All states, idle and done included.
    pub fn state_count(&self) -> u32 {
        self.body_states() + 2
    }

    pub fn done_state(&self) -> u32 {
        self.body_states() + 1
    }

    /// Output port names with `bb_idx` appended.
    pub fn output_ports(&self) -> Vec<String> {
        self.outputs.iter().cloned().chain([BB_IDX.to_string()]).collect()
    }

    /// Cycles spent in hyperblock `h` when it is left through edge `e`.
    pub fn segment_cycles(&self, h: usize, e: usize) -> u64 {
        let b = &self.blocks[h];
        b.states[..=b.edges[e].ready as usize].iter().map(|&c| c as u64).sum()
    }

    /// Shortest and longest cycles through one hyperblock visit.
    pub fn cycle_bounds(&self) -> (u64, u64) {
        let mut best = u64::MAX;
        let mut worst = 0;
        for (h, b) in self.blocks.iter().enumerate() {
            for e in 0..b.edges.len() {
                let c = self.segment_cycles(h, e);
                best = best.min(c);
                worst = worst.max(c);
            }
        }
        if best == u64::MAX {
            best = 0;
        }
        (best, worst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("FSM serializes")
    }

    pub fn from_json(text: &str) -> Result<FsmSpec, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    /// Diagnostic text: header lines, then one line per state with its
    /// datapath actions and guarded transitions.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "fsm {} function={} header=bb{} states={}",
            self.name,
            self.function,
            self.header_block,
            self.state_count()
        );
        for p in &self.inputs {
            let _ = writeln!(out, "input {} r{}", p.name, p.reg);
        }
        for o in self.output_ports() {
            let _ = writeln!(out, "output {o}");
        }
        for e in &self.exits {
            let _ = writeln!(out, "exit {} bb{}->bb{}", e.id, e.from_block, e.to_block);
        }
        for (i, r) in self.registers.iter().enumerate() {
            let _ = writeln!(out, "register r{i} {}", r.name);
        }
        let _ = writeln!(out, "mem_ports {}", self.mem_ports);
        let first = self.blocks.first().map_or(self.done_state(), |b| b.first_state);
        let _ = writeln!(
            out,
            "state 0 idle: if start {} -> S{first}; else -> S0",
            copies_text(&self.entry_copies)
        );
        for (h, b) in self.blocks.iter().enumerate() {
            for (k, cycles) in b.states.iter().enumerate() {
                let mut actions = Vec::new();
                for (i, n) in b.nodes.iter().enumerate() {
                    if n.state as usize == k {
                        actions.push(node_text(i, &n.node));
                    }
                }
                let mut guards = Vec::new();
                for e in b.edges.iter().filter(|e| e.ready as usize == k) {
                    let next = match e.edge.target {
                        Target::Block(t) => format!("S{}", self.blocks[t as usize].first_state),
                        Target::Exit(id) => format!("S{} bb_idx={id}", self.done_state()),
                    };
                    guards.push(format!(
                        "if {}{} -> {next}",
                        src_text(e.edge.pred),
                        copies_text(&e.edge.copies)
                    ));
                }
                if k + 1 < b.states.len() {
                    guards.push(format!("else -> S{}", b.first_state as usize + k + 1));
                }
                let _ = writeln!(
                    out,
                    "state {} hb{h}.{k} bb{} cycles={cycles}: {} | {}",
                    b.first_state as usize + k,
                    b.root_block,
                    if actions.is_empty() { "-".into() } else { actions.join("; ") },
                    guards.join("; ")
                );
            }
        }
        let _ = writeln!(out, "state {} done: hold outputs -> S0", self.done_state());
        out
    }
}

fn src_text(s: Src) -> String {
    match s {
        Src::Node(n) => format!("n{n}"),
        Src::Reg(r) => format!("r{r}"),
        Src::Const(c) => format!("#{c}"),
    }
}

fn copies_text(cs: &[Copy]) -> String {
    if cs.is_empty() {
        return String::new();
    }
    let items: Vec<String> = cs
        .iter()
        .map(|c| {
            let d = match c.dest {
                Dest::Reg(r) => format!("r{r}"),
                Dest::Output(o) => format!("o{o}"),
            };
            format!("{d}<={}", src_text(c.src))
        })
        .collect();
    format!(" [{}]", items.join(", "))
}

fn node_text(i: usize, n: &DfgNode) -> String {
    let args: Vec<String> = n.args.iter().map(|a| src_text(*a)).collect();
    let mut s = format!("n{i}={} {}", n.op.mnemonic(), args.join(","));
    if let Some(p) = n.pred {
        let _ = write!(s, " if {}", src_text(p));
    }
    if let Some(d) = n.dst {
        let _ = write!(s, " ->r{d}");
    }
    s
}

/// Makes names unique by appending `_2`, `_3`, ... to repeats.
fn uniquify(names: &mut [String], taken: &mut BTreeSet<String>) {
    for n in names.iter_mut() {
        if taken.insert(n.clone()) {
            continue;
        }
        let mut k = 2;
        while !taken.insert(format!("{n}_{k}")) {
            k += 1;
        }
        *n = format!("{n}_{k}");
    }
}

/// Assembles the FSM from the if-converted region and one schedule per
/// hyperblock.
pub fn build_fsm(
    name: &str,
    loop_id: u32,
    r: &LoopRegion,
    conv: &IfConverted,
    schedules: &[Schedule],
    model: &CostModel,
) -> FsmSpec {
    let mut taken = BTreeSet::from([BB_IDX.to_string()]);
    let mut in_names: Vec<String> = r.inputs.iter().map(|v| r.value_label(*v)).collect();
    uniquify(&mut in_names, &mut taken);
    let mut out_names: Vec<String> = r.outputs.iter().map(|(_, n)| n.clone()).collect();
    uniquify(&mut out_names, &mut taken);
    let inputs = in_names
        .into_iter()
        .zip(&conv.input_regs)
        .map(|(name, reg)| Port { name, reg: *reg })
        .collect();
    let exits = r
        .exits
        .iter()
        .enumerate()
        .map(|(i, (a, b))| ExitInfo {
            id: i as u32 + 1,
            from_block: a.0,
            to_block: b.0,
        })
        .collect();
    let mut blocks = Vec::new();
    let mut next = 1;
    let mut mem = false;
    for (d, s) in conv.hyperblocks.iter().zip(schedules) {
        let nodes: Vec<FsmNode> = d
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| FsmNode {
                node: n.clone(),
                state: s.state[i],
                start: s.start[i],
                delay: s.delay[i],
            })
            .collect();
        mem |= nodes.iter().any(|n| n.node.op.is_memory());
        let edges = d
            .out_edges
            .iter()
            .zip(&s.edge_ready)
            .map(|(e, &ready)| FsmEdge { edge: e.clone(), ready })
            .collect();
        blocks.push(FsmBlock {
            root_block: d.root.0,
            first_state: next,
            nodes,
            states: s.state_cycles.clone(),
            edges,
        });
        next += s.nstates;
    }
    FsmSpec {
        name: name.to_string(),
        function: r.func.name.clone(),
        loop_id,
        header_block: r.header.0,
        inputs,
        outputs: out_names,
        registers: conv.registers.clone(),
        exits,
        mem_ports: mem as u32,
        arrays: r.arrays.clone(),
        entry_copies: conv.entry_copies.clone(),
        blocks,
        clock_budget: model.clock_budget,
        mem_penalty_cycles: model.mem_penalty_cycles,
    }
}

/// Checks the FSM's structural invariants and re-derives schedule
/// legality from the node operands.
pub fn validate_fsm(f: &FsmSpec) -> Result<(), String> {
    let nregs = f.registers.len() as u32;
    for (i, e) in f.exits.iter().enumerate() {
        if e.id != i as u32 + 1 {
            return Err(format!("exit ids are not consecutive from 1 (position {i} has id {})", e.id));
        }
    }
    let mut names = BTreeSet::new();
    for n in f.inputs.iter().map(|p| &p.name).chain(f.outputs.iter()) {
        if n == BB_IDX || !names.insert(n.clone()) {
            return Err(format!("port name '{n}' is duplicated"));
        }
    }
    if let Some(p) = f.inputs.iter().find(|p| p.reg >= nregs) {
        return Err(format!("input '{}' maps to missing register r{}", p.name, p.reg));
    }
    if f.blocks.is_empty() {
        return Err("no body states".into());
    }
    let reg_ok = |s: Src| !matches!(s, Src::Reg(r) if r >= nregs);
    for c in &f.entry_copies {
        if matches!(c.src, Src::Node(_)) || !reg_ok(c.src) || !matches!(c.dest, Dest::Reg(r) if r < nregs) {
            return Err("malformed entry copy".into());
        }
    }
    let mut next = 1;
    let mut used_exits = BTreeSet::new();
    for (h, b) in f.blocks.iter().enumerate() {
        if b.first_state != next {
            return Err(format!("hyperblock {h} starts at state {} instead of {next}", b.first_state));
        }
        if b.states.is_empty() {
            return Err(format!("hyperblock {h} has no states"));
        }
        next += b.states.len() as u32;
        let ns = b.states.len() as u32;
        for (i, n) in b.nodes.iter().enumerate() {
            for s in n.node.operands() {
                match s {
                    Src::Node(k) if k as usize >= i => {
                        return Err(format!("hyperblock {h}: n{i} reads n{k} which is not computed before it"))
                    }
                    Src::Reg(r) if r >= nregs => return Err(format!("hyperblock {h}: n{i} reads missing r{r}")),
                    _ => {}
                }
            }
            if n.state >= ns {
                return Err(format!("hyperblock {h}: n{i} placed in missing state {}", n.state));
            }
            if n.delay == 0 {
                return Err(format!("hyperblock {h}: n{i} has zero delay"));
            }
            if matches!(n.node.dst, Some(r) if r >= nregs) {
                return Err(format!("hyperblock {h}: n{i} writes a missing register"));
            }
        }
        let raw: Vec<DfgNode> = b.nodes.iter().map(|n| n.node.clone()).collect();
        let state: Vec<u32> = b.nodes.iter().map(|n| n.state).collect();
        let start: Vec<u32> = b.nodes.iter().map(|n| n.start).collect();
        let delay: Vec<u32> = b.nodes.iter().map(|n| n.delay).collect();
        validate_placement(&raw, &state, &start, &delay, f.clock_budget).map_err(|e| format!("hyperblock {h}: {e}"))?;
        for (k, &c) in b.states.iter().enumerate() {
            let members = b
                .nodes
                .iter()
                .filter(|n| n.state as usize == k)
                .map(|n| (n.node.op.is_memory(), n.delay));
            let want = state_cycles(members, f.clock_budget, f.mem_penalty_cycles);
            if c != want {
                return Err(format!("hyperblock {h}: state {k} lasts {c} cycles, expected {want}"));
            }
        }
        if b.edges.is_empty() {
            return Err(format!("hyperblock {h} has no way out"));
        }
        for (j, e) in b.edges.iter().enumerate() {
            let ctx = format!("hyperblock {h} edge {j}");
            if e.ready >= ns {
                return Err(format!("{ctx}: ready in missing state {}", e.ready));
            }
            let mut needed: Vec<u32> = e.edge.requires.clone();
            needed.extend(
                std::iter::once(e.edge.pred)
                    .chain(e.edge.copies.iter().map(|c| c.src))
                    .filter_map(|s| match s {
                        Src::Node(n) => Some(n),
                        _ => None,
                    }),
            );
            for n in needed {
                let Some(node) = b.nodes.get(n as usize) else {
                    return Err(format!("{ctx}: refers to missing n{n}"));
                };
                if node.state > e.ready {
                    return Err(format!("{ctx}: taken in state {} before n{n} (state {})", e.ready, node.state));
                }
            }
            if !reg_ok(e.edge.pred) || e.edge.copies.iter().any(|c| !reg_ok(c.src)) {
                return Err(format!("{ctx}: reads a missing register"));
            }
            match e.edge.target {
                Target::Block(t) if t as usize >= f.blocks.len() => {
                    return Err(format!("{ctx}: jumps to missing hyperblock {t}"))
                }
                Target::Exit(id) => {
                    if id == 0 || id as usize > f.exits.len() {
                        return Err(format!("{ctx}: unknown exit id {id}"));
                    }
                    used_exits.insert(id);
                }
                _ => {}
            }
            for c in &e.edge.copies {
                let ok = match (c.dest, e.edge.target) {
                    (Dest::Reg(r), Target::Block(_)) => r < nregs,
                    (Dest::Output(o), Target::Exit(_)) => (o as usize) < f.outputs.len(),
                    _ => false,
                };
                if !ok {
                    return Err(format!("{ctx}: malformed copy"));
                }
            }
        }
    }
    if used_exits.len() != f.exits.len() {
        return Err("some exit id is never produced".into());
    }
    Ok(())
}

/// Fault injection used to show that the checks catch broken accelerators.
pub mod faults {
    use super::*;

    /// Swaps exit ids 1 and 2 in every transition (needs two exits).
    pub fn swap_exit_ids(f: &FsmSpec) -> Option<FsmSpec> {
        if f.exits.len() < 2 {
            return None;
        }
        let mut g = f.clone();
        for b in &mut g.blocks {
            for e in &mut b.edges {
                e.edge.target = match e.edge.target {
                    Target::Exit(1) => Target::Exit(2),
                    Target::Exit(2) => Target::Exit(1),
                    t => t,
                };
            }
        }
        Some(g)
    }

    /// One faulty FSM per dependence edge whose removal lets the scheduler
    /// place the consumer too early. Each variant is rescheduled from
    /// scratch without that edge; removals that still yield a schedule
    /// honoring the edge are not faults and are skipped.
    pub fn drop_dependence(f: &FsmSpec, model: &CostModel) -> Vec<(String, FsmSpec)> {
        let mut out = Vec::new();
        for (h, b) in f.blocks.iter().enumerate() {
            let nodes: Vec<DfgNode> = b.nodes.iter().map(|n| n.node.clone()).collect();
            let all = Dfg::implied_edges(&nodes);
            for (k, &(u, v)) in all.iter().enumerate() {
                let mut edges = all.clone();
                edges.remove(k);
                let d = Dfg {
                    root: crate::ir::BlockId(b.root_block),
                    nodes: nodes.clone(),
                    edges,
                    out_edges: b.edges.iter().map(|e| e.edge.clone()).collect(),
                    blocks: Vec::new(),
                };
                let Ok(s) = schedule(&d, model) else { continue };
                let (u, v) = (u as usize, v as usize);
                let delay = &s.delay;
                let honored = s.state[u] < s.state[v]
                    || (s.state[u] == s.state[v]
                        && super::super::schedule::chainable(&nodes[u], delay[u], model.clock_budget)
                        && super::super::schedule::chainable(&nodes[v], delay[v], model.clock_budget)
                        && s.start[u] + delay[u] <= s.start[v]);
                if honored {
                    continue;
                }
                let mut g = f.clone();
                replace_schedule(&mut g, h, &s);
                out.push((format!("hb{h} drop n{u}->n{v}"), g));
            }
        }
        out
    }

    fn replace_schedule(g: &mut FsmSpec, h: usize, s: &Schedule) {
        let b = &mut g.blocks[h];
        for (i, n) in b.nodes.iter_mut().enumerate() {
            n.state = s.state[i];
            n.start = s.start[i];
        }
        b.states = s.state_cycles.clone();
        for (e, &r) in b.edges.iter_mut().zip(&s.edge_ready) {
            e.ready = r;
        }
        let mut next = 1;
        for b in &mut g.blocks {
            b.first_state = next;
            next += b.states.len() as u32;
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::frontend::compile_unit;
    use crate::ir::loops::find_loops;
    use crate::synth::if_convert;

    pub(crate) fn fsm_for(src: &str, fname: &str, model: &CostModel) -> FsmSpec {
        let u = compile_unit(src, "t.c").unwrap().unit;
        let f = u.functions.iter().find(|f| f.name == fname).unwrap();
        let forest = find_loops(f);
        let r = LoopRegion::new(f, &forest, forest.roots[0].header).unwrap();
        let conv = if_convert(&r);
        let s: Vec<Schedule> = conv.hyperblocks.iter().map(|d| schedule(d, model).unwrap()).collect();
        build_fsm("loop1", 1, &r, &conv, &s, model)
    }

    const UNIT2: &str = include_str!("../../../../corpus/listings/unit2.c");

    #[test]
    fn fun3_interface() {
        let f = fsm_for(UNIT2, "fun3", &CostModel::default());
        validate_fsm(&f).unwrap();
        let ins: Vec<&str> = f.inputs.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(ins, vec!["a", "b"]);
        assert_eq!(f.output_ports(), vec!["a_out", "bb_idx"]);
        assert_eq!(f.exits.len(), 2);
        assert_eq!(f.mem_ports, 0);
        let (best, worst) = f.cycle_bounds();
        assert!(1 <= best && best <= worst);
    }

    #[test]
    fn no_live_outs_gives_only_bb_idx() {
        let f = fsm_for("int A[8]; void f(int v){ for(int i=0;i<8;i++) A[i]=v; }", "f", &CostModel::default());
        validate_fsm(&f).unwrap();
        assert_eq!(f.output_ports(), vec!["bb_idx"]);
        assert_eq!(f.mem_ports, 1);
    }

    #[test]
    fn json_round_trip_and_deterministic_text() {
        let f = fsm_for(UNIT2, "fun3", &CostModel::default());
        let g = FsmSpec::from_json(&f.to_json()).unwrap();
        assert_eq!(f, g);
        let again = fsm_for(UNIT2, "fun3", &CostModel::default());
        assert_eq!(f.to_text(), again.to_text());
        assert!(f.to_text().lines().any(|l| l.starts_with("state 0 idle")));
    }

    #[test]
    fn swapped_exits_still_validate_structurally() {
        let f = fsm_for(UNIT2, "fun3", &CostModel::default());
        let g = faults::swap_exit_ids(&f).unwrap();
        assert_ne!(f, g);
        validate_fsm(&g).unwrap();
    }

    #[test]
    fn dropped_dependences_are_rejected() {
        let mut m = CostModel::default();
        m.clock_budget = 2;
        let f = fsm_for(UNIT2, "fun3", &m);
        let faults = faults::drop_dependence(&f, &m);
        assert!(!faults.is_empty());
        for (label, g) in faults {
            assert!(validate_fsm(&g).is_err(), "{label} accepted");
        }
    }

    #[test]
    fn validator_rejects_bad_exit_numbering() {
        let mut f = fsm_for(UNIT2, "fun3", &CostModel::default());
        f.exits[1].id = 5;
        assert!(validate_fsm(&f).is_err());
    }
}
