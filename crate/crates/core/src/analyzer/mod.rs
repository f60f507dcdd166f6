//! Whole-program loop ranking: call graph, invocation frequencies, total
//! iteration estimates and top-n candidate selection.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::collector::{LoopRecord, Transcript};

/// Name of the node standing for every function without a definition in
/// the transcript.
pub const EXTERNAL: &str = "<external>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallEdge {
    pub caller: String,
    pub callee: String,
    /// Product of `count + 1` over the loops enclosing the call site.
    pub weight: u128,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallGraph {
    /// Defined functions in transcript order, then [`EXTERNAL`] if any call
    /// leaves the program.
    pub nodes: Vec<String>,
    /// One edge per call site.
    pub edges: Vec<CallEdge>,
}

/// Estimated invocations per function. Values saturate at `u128::MAX`.
pub type FrequencyMap = BTreeMap<String, u128>;

#[derive(Debug, Clone, Default)]
pub struct Analysis {
    pub graph: CallGraph,
    pub freq: FrequencyMap,
    pub notices: Vec<String>,
}

/// Product of `count + 1` over `id` and its enclosing loops.
pub fn nest_product(t: &Transcript, id: u32) -> u128 {
    let by_id: HashMap<u32, &LoopRecord> = t.loops().map(|l| (l.loop_id, l)).collect();
    nest_product_in(&by_id, id)
}

fn nest_product_in(by_id: &HashMap<u32, &LoopRecord>, id: u32) -> u128 {
    let mut product: u128 = 1;
    let mut cur = Some(id);
    let mut seen = HashSet::new();
    while let Some(i) = cur {
        if i == 0 || !seen.insert(i) {
            break;
        }
        let Some(l) = by_id.get(&i) else { break };
        product = product.saturating_mul(l.local_count as u128 + 1);
        cur = l.meta.as_ref().and_then(|m| m.parent);
    }
    product
}

/// Builds the call graph and propagates invocation frequencies from the
/// roots (functions nobody calls, frequency 1) along weighted call edges.
/// Recursive cycles are collapsed: an edge inside a strongly connected
/// component is traversed once (weight 1).
pub fn analyze_frequencies(t: &Transcript) -> Analysis {
    let by_id: HashMap<u32, &LoopRecord> = t.loops().map(|l| (l.loop_id, l)).collect();
    let mut notices = Vec::new();
    let mut nodes: Vec<String> = Vec::new();
    for f in t.functions() {
        if !nodes.contains(&f.name) {
            nodes.push(f.name.clone());
        }
    }
    for l in t.loops() {
        if !nodes.contains(&l.function) {
            nodes.push(l.function.clone());
        }
    }
    let defined: HashSet<String> = nodes.iter().cloned().collect();

    let mut edges = Vec::new();
    let mut external = Vec::new();
    for f in t.functions() {
        for s in &f.sites {
            if s.loop_id != 0 && !by_id.contains_key(&s.loop_id) {
                notices.push(format!("{}: call to '{}' names unknown loop {}", f.name, s.callee, s.loop_id));
            }
            let callee = if defined.contains(&s.callee) {
                s.callee.clone()
            } else {
                if !external.contains(&s.callee) {
                    external.push(s.callee.clone());
                }
                EXTERNAL.to_string()
            };
            edges.push(CallEdge {
                caller: f.name.clone(),
                callee,
                weight: nest_product_in(&by_id, s.loop_id),
            });
        }
    }
    for e in &external {
        notices.push(format!("'{e}' has no definition in the transcript; treated as external"));
    }

    let mut g: DiGraph<usize, u128> = DiGraph::new();
    let idx: Vec<NodeIndex> = (0..nodes.len()).map(|i| g.add_node(i)).collect();
    let pos: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    for e in &edges {
        if let (Some(&a), Some(&b)) = (pos.get(e.caller.as_str()), pos.get(e.callee.as_str())) {
            g.add_edge(idx[a], idx[b], e.weight);
        }
    }

    // Components come out callees-first; walk them callers-first.
    let mut comps = tarjan_scc(&g);
    comps.reverse();
    let mut comp_of = vec![0usize; nodes.len()];
    for (c, members) in comps.iter().enumerate() {
        for m in members {
            comp_of[g[*m]] = c;
        }
    }
    let mut freq = vec![0u128; nodes.len()];
    for (c, members) in comps.iter().enumerate() {
        let ids: Vec<usize> = members.iter().map(|m| g[*m]).collect();
        // Incoming weight from earlier components.
        let mut ext = vec![0u128; ids.len()];
        let mut has_caller = false;
        for (k, &n) in ids.iter().enumerate() {
            for e in edges.iter().filter(|e| e.callee == nodes[n]) {
                let caller = pos[e.caller.as_str()];
                if comp_of[caller] != c {
                    has_caller = true;
                    ext[k] = ext[k].saturating_add(freq[caller].saturating_mul(e.weight));
                }
            }
        }
        let cyclic = ids.len() > 1 || edges.iter().any(|e| e.caller == nodes[ids[0]] && e.callee == nodes[ids[0]]);
        if !has_caller {
            for &n in &ids {
                freq[n] = 1;
            }
            if cyclic {
                let names: Vec<&str> = ids.iter().map(|&n| nodes[n].as_str()).collect();
                notices.push(format!("unreachable from any root: {}", names.join(", ")));
            }
            continue;
        }
        for (k, &n) in ids.iter().enumerate() {
            freq[n] = ext[k];
        }
        // One traversal of each edge inside the component.
        for e in &edges {
            let (a, b) = (pos[e.caller.as_str()], pos.get(e.callee.as_str()).copied());
            let Some(b) = b else { continue };
            if comp_of[a] == c && comp_of[b] == c {
                let ka = ids.iter().position(|&x| x == a).expect("member");
                freq[b] = freq[b].saturating_add(ext[ka]);
            }
        }
    }

    let mut freq_map = FrequencyMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if n != EXTERNAL {
            freq_map.insert(n.clone(), freq[i]);
        }
    }
    if !external.is_empty() {
        nodes.push(EXTERNAL.to_string());
    }
    Analysis {
        graph: CallGraph { nodes, edges },
        freq: freq_map,
        notices,
    }
}

/// Ranking key for candidate ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankKey {
    /// Estimated total iterations.
    #[default]
    Total,
    /// Estimated total iterations times the loop's statement count.
    TotalTimesStmts,
}

impl std::str::FromStr for RankKey {
    type Err = String;
    fn from_str(s: &str) -> Result<RankKey, String> {
        match s {
            "total" => Ok(RankKey::Total),
            "total-stmts" | "total_stmts" => Ok(RankKey::TotalTimesStmts),
            _ => Err(format!("unknown ranking key '{s}' (expected 'total' or 'total-stmts')")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankEntry {
    pub loop_id: u32,
    pub unit: String,
    pub function: String,
    pub total: u128,
    pub key: u128,
    pub eligible: bool,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SelectionReport {
    /// Every loop, best first.
    pub entries: Vec<RankEntry>,
    /// Loop ids of the selected candidates, best first.
    pub chosen: Vec<u32>,
    pub notices: Vec<String>,
}

/// Loop ids enclosing `id` (nearest first).
fn ancestors(by_id: &HashMap<u32, &LoopRecord>, id: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut cur = by_id.get(&id).and_then(|l| l.meta.as_ref()).and_then(|m| m.parent);
    while let Some(p) = cur {
        if out.contains(&p) || p == id {
            break;
        }
        out.push(p);
        cur = by_id.get(&p).and_then(|l| l.meta.as_ref()).and_then(|m| m.parent);
    }
    out
}

/// Orders all loops by `key` (descending, ties by unit then id) and picks
/// the first `n` eligible ones. A loop nested in, or enclosing, an already
/// chosen loop is skipped.
pub fn rank_and_select(t: &Transcript, fm: &FrequencyMap, n: usize, key: RankKey) -> SelectionReport {
    let by_id: HashMap<u32, &LoopRecord> = t.loops().map(|l| (l.loop_id, l)).collect();
    let mut entries: Vec<RankEntry> = t
        .loops()
        .map(|l| {
            let freq = fm.get(&l.function).copied().unwrap_or(1);
            let total = freq.saturating_mul(nest_product_in(&by_id, l.loop_id));
            let k = match key {
                RankKey::Total => total,
                RankKey::TotalTimesStmts => {
                    total.saturating_mul(l.meta.as_ref().map_or(1, |m| m.stmts.max(1)) as u128)
                }
            };
            let reason = if l.has_call {
                Some("contains call".to_string())
            } else if !l.well_nested {
                Some(
                    l.meta
                        .as_ref()
                        .and_then(|m| m.unsupported.clone())
                        .unwrap_or_else(|| "not well nested".to_string()),
                )
            } else {
                None
            };
            RankEntry {
                loop_id: l.loop_id,
                unit: l.unit.clone(),
                function: l.function.clone(),
                total,
                key: k,
                eligible: reason.is_none(),
                reason,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.key
            .cmp(&a.key)
            .then_with(|| a.unit.cmp(&b.unit))
            .then_with(|| a.loop_id.cmp(&b.loop_id))
    });

    let mut chosen: Vec<u32> = Vec::new();
    for e in &mut entries {
        if !e.eligible || chosen.len() >= n {
            continue;
        }
        let anc = ancestors(&by_id, e.loop_id);
        let clash = chosen
            .iter()
            .find(|&&c| anc.contains(&c) || ancestors(&by_id, c).contains(&e.loop_id));
        if let Some(c) = clash {
            e.eligible = false;
            e.reason = Some(format!("overlaps loop{c}"));
            continue;
        }
        chosen.push(e.loop_id);
    }
    let mut notices = Vec::new();
    if chosen.len() < n {
        notices.push(format!(
            "only {} eligible loop(s) found; {} requested",
            chosen.len(),
            n
        ));
    }
    SelectionReport {
        entries,
        chosen,
        notices,
    }
}

impl SelectionReport {
    /// One `loop<id> total=<n> eligible=<0|1> reason=<text|->` line per loop.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(
                out,
                "loop{} total={} eligible={} reason={}",
                e.loop_id,
                e.total,
                e.eligible as u8,
                e.reason.as_deref().unwrap_or("-")
            );
        }
        out
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<6} {:<8} {:<16} {:<16} {:>24} {:<6} reason", "rank", "loop", "unit", "function", "total", "chosen");
        for (i, e) in self.entries.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:<6} {:<8} {:<16} {:<16} {:>24} {:<6} {}",
                i + 1,
                format!("loop{}", e.loop_id),
                e.unit,
                e.function,
                e.total,
                if self.chosen.contains(&e.loop_id) { "yes" } else { "no" },
                e.reason.as_deref().unwrap_or("-")
            );
        }
        for n in &self.notices {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collector::{parse_transcript, CallSite, FunctionRecord, LoopMeta, UnitSection};
    use proptest::prelude::*;

    const LISTING: &str = "unit1.c\nfunction=fun2\nloop1\ncount=29\ncall=1\nwell_nested=0\n-fun3\nfunction=fun1\nloop2\ncount=9\ncall=1\nwell_nested=0\n-fun2\n\nunit2.c\nfunction=fun3\nloop3\ncount=99\ncall=0\nwell_nested=1\n";

    #[test]
    fn listing_frequencies() {
        let t = parse_transcript(LISTING).unwrap();
        let a = analyze_frequencies(&t);
        assert_eq!(a.freq["fun1"], 1);
        assert_eq!(a.freq["fun2"], 10);
        assert_eq!(a.freq["fun3"], 300);
    }

    #[test]
    fn listing_selection() {
        let t = parse_transcript(LISTING).unwrap();
        let a = analyze_frequencies(&t);
        let r = rank_and_select(&t, &a.freq, 1, RankKey::Total);
        assert_eq!(r.chosen, vec![3]);
        assert_eq!(r.entries[0].total, 30000);
        for id in [1, 2] {
            let e = r.entries.iter().find(|e| e.loop_id == id).unwrap();
            assert_eq!(e.reason.as_deref(), Some("contains call"));
        }
        assert!(r.to_lines().starts_with("loop3 total=30000 eligible=1 reason=-\n"));
    }

    fn func(unit: &str, name: &str, sites: &[(&str, u32)]) -> FunctionRecord {
        let mut callees: Vec<String> = Vec::new();
        for (c, _) in sites {
            if !callees.iter().any(|x| x == c) {
                callees.push(c.to_string());
            }
        }
        FunctionRecord {
            unit: unit.into(),
            name: name.into(),
            callees,
            sites: sites.iter().map(|(c, l)| CallSite { callee: c.to_string(), loop_id: *l }).collect(),
        }
    }

    fn lp(unit: &str, f: &str, id: u32, count: u64, parent: Option<u32>) -> LoopRecord {
        LoopRecord {
            loop_id: id,
            unit: unit.into(),
            function: f.into(),
            local_count: count,
            has_call: false,
            well_nested: true,
            callees: vec![],
            mem_accesses: 0,
            meta: Some(LoopMeta { header: 1, parent, stmts: 3, heuristic: false, arrays: vec![], unsupported: None }),
        }
    }

    fn single_unit(functions: Vec<FunctionRecord>, loops: Vec<LoopRecord>) -> Transcript {
        let mut t = Transcript::new();
        t.replace_unit(UnitSection { unit: "u.c".into(), sha256: None, functions, loops });
        t
    }

    #[test]
    fn lone_function_has_frequency_one() {
        let t = single_unit(vec![func("u.c", "f", &[])], vec![]);
        assert_eq!(analyze_frequencies(&t).freq["f"], 1);
    }

    #[test]
    fn two_roots_sum() {
        let t = single_unit(
            vec![func("u.c", "f", &[]), func("u.c", "a", &[("f", 0)]), func("u.c", "b", &[("f", 0)])],
            vec![],
        );
        let a = analyze_frequencies(&t);
        assert_eq!(a.freq["f"], 2);
        assert_eq!(a.freq["a"], 1);
    }

    #[test]
    fn recursion_is_collapsed() {
        let t = single_unit(
            vec![
                func("u.c", "r", &[("r", 0), ("h", 0)]),
                func("u.c", "h", &[]),
                func("u.c", "main", &[("r", 1)]),
            ],
            vec![lp("u.c", "main", 1, 4, None)],
        );
        let a = analyze_frequencies(&t);
        // main calls r 5 times; the self-call adds one traversal.
        assert_eq!(a.freq["r"], 10);
        assert_eq!(a.freq["h"], 10);
    }

    #[test]
    fn orphan_cycle_keeps_frequency_one() {
        let t = single_unit(vec![func("u.c", "p", &[("q", 0)]), func("u.c", "q", &[("p", 0)])], vec![]);
        let a = analyze_frequencies(&t);
        assert_eq!(a.freq["p"], 1);
        assert_eq!(a.freq["q"], 1);
        assert!(a.notices.iter().any(|n| n.contains("unreachable")));
    }

    #[test]
    fn external_callee_becomes_sentinel() {
        let t = single_unit(vec![func("u.c", "f", &[("printf", 0)])], vec![]);
        let a = analyze_frequencies(&t);
        assert_eq!(a.graph.edges[0].callee, EXTERNAL);
        assert!(a.graph.nodes.contains(&EXTERNAL.to_string()));
        assert!(!a.notices.is_empty());
    }

    #[test]
    fn nested_weight_uses_enclosing_loops() {
        let t = single_unit(
            vec![func("u.c", "f", &[("g", 2)]), func("u.c", "g", &[])],
            vec![lp("u.c", "f", 1, 3, None), lp("u.c", "f", 2, 4, Some(1))],
        );
        assert_eq!(analyze_frequencies(&t).freq["g"], 20);
    }

    #[test]
    fn zero_eligible_gives_notice() {
        let mut l = lp("u.c", "f", 1, 3, None);
        l.has_call = true;
        l.well_nested = false;
        l.callees = vec!["g".into()];
        let t = single_unit(vec![func("u.c", "f", &[("g", 1)])], vec![l]);
        let a = analyze_frequencies(&t);
        let r = rank_and_select(&t, &a.freq, 2, RankKey::Total);
        assert!(r.chosen.is_empty());
        assert_eq!(r.notices.len(), 1);
    }

    #[test]
    fn ties_break_by_unit_then_id() {
        let mut t = Transcript::new();
        t.replace_unit(UnitSection {
            unit: "b.c".into(),
            sha256: None,
            functions: vec![func("b.c", "g", &[])],
            loops: vec![lp("b.c", "g", 1, 9, None)],
        });
        t.replace_unit(UnitSection {
            unit: "a.c".into(),
            sha256: None,
            functions: vec![func("a.c", "f", &[])],
            loops: vec![lp("a.c", "f", 2, 9, None)],
        });
        let a = analyze_frequencies(&t);
        let r = rank_and_select(&t, &a.freq, 1, RankKey::Total);
        assert_eq!(r.chosen, vec![2]);
        assert_eq!(r.entries[1].loop_id, 1);
    }

    #[test]
    fn inner_loop_wins_and_outer_overlaps() {
        let t = single_unit(
            vec![func("u.c", "f", &[])],
            vec![lp("u.c", "f", 1, 3, None), lp("u.c", "f", 2, 4, Some(1))],
        );
        let a = analyze_frequencies(&t);
        let r = rank_and_select(&t, &a.freq, 2, RankKey::Total);
        assert_eq!(r.chosen, vec![2]);
        assert_eq!(r.entries[1].reason.as_deref(), Some("overlaps loop2"));
    }

    #[test]
    fn alternate_key_uses_statement_count() {
        let mut small = lp("u.c", "f", 1, 10, None);
        small.meta.as_mut().unwrap().stmts = 1;
        let mut big = lp("u.c", "f", 2, 5, None);
        big.meta.as_mut().unwrap().stmts = 10;
        let t = single_unit(vec![func("u.c", "f", &[])], vec![small, big]);
        let a = analyze_frequencies(&t);
        assert_eq!(rank_and_select(&t, &a.freq, 1, RankKey::Total).chosen, vec![1]);
        assert_eq!(rank_and_select(&t, &a.freq, 1, RankKey::TotalTimesStmts).chosen, vec![2]);
    }

    /// A random DAG over `n` functions: edge (i, j) only for i < j, each
    /// call site inside a loop of the caller with some count, or outside.
    fn dag() -> impl Strategy<Value = (usize, Vec<(usize, usize, Option<u64>)>)> {
        (2usize..=8).prop_flat_map(|n| {
            let edge = (0..n, 0..n, proptest::option::of(0u64..6));
            (Just(n), proptest::collection::vec(edge, 0..14))
        })
    }

    fn build(n: usize, raw: &[(usize, usize, Option<u64>)]) -> (Transcript, Vec<(usize, usize, u128)>) {
        let mut sites: Vec<Vec<(String, u32)>> = vec![Vec::new(); n];
        let mut loops = Vec::new();
        let mut edges = Vec::new();
        let mut next = 1;
        for &(a, b, count) in raw {
            let (a, b) = (a.min(b), a.max(b));
            if a == b {
                continue;
            }
            let (loop_id, w) = match count {
                Some(c) => {
                    loops.push(lp("u.c", &format!("f{a}"), next, c, None));
                    next += 1;
                    (next - 1, c as u128 + 1)
                }
                None => (0, 1),
            };
            sites[a].push((format!("f{b}"), loop_id));
            edges.push((a, b, w));
        }
        // Loops grouped by function, as in a real transcript.
        loops.sort_by_key(|l: &LoopRecord| (l.function.clone(), l.loop_id));
        let functions = (0..n)
            .map(|i| {
                let s: Vec<(&str, u32)> = sites[i].iter().map(|(c, l)| (c.as_str(), *l)).collect();
                func("u.c", &format!("f{i}"), &s)
            })
            .collect();
        (single_unit(functions, loops), edges)
    }

    fn brute_force(n: usize, edges: &[(usize, usize, u128)]) -> Vec<u128> {
        let called: HashSet<usize> = edges.iter().map(|e| e.1).collect();
        let mut freq = vec![0u128; n];
        fn walk(v: usize, w: u128, edges: &[(usize, usize, u128)], freq: &mut [u128]) {
            freq[v] += w;
            for &(a, b, ew) in edges {
                if a == v {
                    walk(b, w * ew, edges, freq);
                }
            }
        }
        for r in (0..n).filter(|i| !called.contains(i)) {
            walk(r, 1, edges, &mut freq);
        }
        freq
    }

    proptest! {
        #[test]
        fn acyclic_frequencies_match_path_enumeration((n, raw) in dag()) {
            let (t, edges) = build(n, &raw);
            let a = analyze_frequencies(&t);
            let expect = brute_force(n, &edges);
            for (i, e) in expect.iter().enumerate() {
                prop_assert_eq!(a.freq[&format!("f{i}")], *e);
            }
        }

        #[test]
        fn ranking_is_scale_invariant((n, raw) in dag(), k in 1u128..1000) {
            let (t, _) = build(n, &raw);
            let a = analyze_frequencies(&t);
            let scaled: FrequencyMap = a.freq.iter().map(|(f, v)| (f.clone(), v * k)).collect();
            let r1 = rank_and_select(&t, &a.freq, 3, RankKey::Total);
            let r2 = rank_and_select(&t, &scaled, 3, RankKey::Total);
            let o1: Vec<u32> = r1.entries.iter().map(|e| e.loop_id).collect();
            let o2: Vec<u32> = r2.entries.iter().map(|e| e.loop_id).collect();
            prop_assert_eq!(o1, o2);
            prop_assert_eq!(r1.chosen, r2.chosen);
        }

        #[test]
        fn raising_a_count_never_lowers_rank((n, raw) in dag(), pick in 0usize..16, bump in 1u64..50) {
            let (t, _) = build(n, &raw);
            let ids: Vec<u32> = t.loops().map(|l| l.loop_id).collect();
            prop_assume!(!ids.is_empty());
            let target = ids[pick % ids.len()];
            let rank_of = |t: &Transcript| {
                let a = analyze_frequencies(t);
                rank_and_select(t, &a.freq, 1, RankKey::Total)
                    .entries
                    .iter()
                    .position(|e| e.loop_id == target)
                    .unwrap()
            };
            let before = rank_of(&t);
            let mut t2 = t.clone();
            for u in &mut t2.units {
                for l in &mut u.loops {
                    if l.loop_id == target {
                        l.local_count += bump;
                    }
                }
            }
            prop_assert!(rank_of(&t2) <= before);
        }

        #[test]
        fn chosen_loops_are_eligible((n, raw) in dag(), flags in proptest::collection::vec(any::<bool>(), 16)) {
            let (mut t, _) = build(n, &raw);
            let mut k = 0;
            for u in &mut t.units {
                for l in &mut u.loops {
                    if flags[k % flags.len()] {
                        l.well_nested = false;
                    }
                    k += 1;
                }
            }
            let a = analyze_frequencies(&t);
            let r = rank_and_select(&t, &a.freq, 4, RankKey::Total);
            for id in &r.chosen {
                let l = t.loop_by_id(*id).unwrap();
                prop_assert!(l.well_nested && !l.has_call);
            }
        }
    }
}
