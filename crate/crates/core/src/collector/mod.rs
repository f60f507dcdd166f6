//! First-run analysis passes: per-function call facts and per-loop facts,
//! accumulated into the shared transcript file.

mod transcript;

pub use transcript::{append_transcript, parse_transcript, parse_transcript_file, write_transcript, TranscriptError, HEADER_TAG};

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::frontend::callees_of;
use crate::ir::loops::{find_loops_with_default, LoopForest, LoopNode, DEFAULT_LOOP_COUNT};
use crate::ir::{BlockId, MemSpace, MirFunction, Stmt, TranslationUnit};

/// One call statement: the callee and the innermost loop around the call
/// (`0` when the call is outside every loop).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSite {
    pub callee: String,
    pub loop_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionRecord {
    pub unit: String,
    pub name: String,
    /// Distinct callees in first-call order.
    pub callees: Vec<String>,
    /// Every call statement, in block layout order.
    pub sites: Vec<CallSite>,
}

/// Facts about a loop that the body format of the transcript does not
/// carry; kept in header comment lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopMeta {
    pub header: u32,
    pub parent: Option<u32>,
    /// Non-phi statements in the loop body, nested loops included.
    pub stmts: u32,
    /// True when `local_count` is the configured default.
    pub heuristic: bool,
    /// Distinct arrays accessed in the loop body.
    pub arrays: Vec<String>,
    /// Why the loop is not synthesizable for reasons other than calls.
    pub unsupported: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopRecord {
    pub loop_id: u32,
    pub unit: String,
    pub function: String,
    pub local_count: u64,
    pub has_call: bool,
    pub well_nested: bool,
    pub callees: Vec<String>,
    pub mem_accesses: u32,
    pub meta: Option<LoopMeta>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitSection {
    pub unit: String,
    pub sha256: Option<String>,
    /// Every defined function, in emission order (callees first).
    pub functions: Vec<FunctionRecord>,
    /// Loop records, grouped by function in emission order.
    pub loops: Vec<LoopRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transcript {
    /// Next loop id to hand out; ids are never reused.
    pub next_loop: u32,
    pub units: Vec<UnitSection>,
}

impl Transcript {
    pub fn new() -> Transcript {
        Transcript {
            next_loop: 1,
            units: Vec::new(),
        }
    }

    pub fn loops(&self) -> impl Iterator<Item = &LoopRecord> {
        self.units.iter().flat_map(|u| &u.loops)
    }

    pub fn loop_by_id(&self, id: u32) -> Option<&LoopRecord> {
        self.loops().find(|l| l.loop_id == id)
    }

    pub fn functions(&self) -> impl Iterator<Item = &FunctionRecord> {
        self.units.iter().flat_map(|u| &u.functions)
    }

    pub fn unit(&self, name: &str) -> Option<&UnitSection> {
        self.units.iter().find(|u| u.unit == name)
    }

    /// Inserts `section`, replacing an existing section for the same unit
    /// in place.
    pub fn replace_unit(&mut self, section: UnitSection) {
        let max_id = section.loops.iter().map(|l| l.loop_id).max().unwrap_or(0);
        self.next_loop = self.next_loop.max(max_id + 1);
        match self.units.iter_mut().find(|u| u.unit == section.unit) {
            Some(existing) => *existing = section,
            None => self.units.push(section),
        }
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Defined functions ordered callee-before-caller over the unit-local
/// call graph, ties broken by source order.
pub fn emission_order(unit: &TranslationUnit) -> Vec<usize> {
    let index: HashMap<&str, usize> = unit
        .functions
        .iter()
        .enumerate()
        .map(|(i, f)| (f.name.as_str(), i))
        .collect();
    let mut state = vec![0u8; unit.functions.len()]; // 0 new, 1 active, 2 done
    let mut order = Vec::with_capacity(unit.functions.len());
    fn visit(
        i: usize,
        unit: &TranslationUnit,
        index: &HashMap<&str, usize>,
        state: &mut [u8],
        order: &mut Vec<usize>,
    ) {
        if state[i] != 0 {
            return;
        }
        state[i] = 1;
        for c in callees_of(&unit.functions[i]) {
            if let Some(&j) = index.get(c.as_str()) {
                visit(j, unit, index, state, order);
            }
        }
        state[i] = 2;
        order.push(i);
    }
    for i in 0..unit.functions.len() {
        visit(i, unit, &index, &mut state, &mut order);
    }
    order
}

/// Call facts for every function of a unit, in emission order. Loop ids in
/// call sites refer to the ids in `loop_ids` (keyed by function name and
/// loop header); calls outside loops get id 0.
pub fn collect_functions(
    unit: &TranslationUnit,
    forests: &[LoopForest],
    loop_ids: &HashMap<(String, BlockId), u32>,
) -> Vec<FunctionRecord> {
    emission_order(unit)
        .into_iter()
        .map(|i| {
            let f = &unit.functions[i];
            let forest = &forests[i];
            let mut sites = Vec::new();
            for b in &f.blocks {
                for s in &b.stmts {
                    if let Stmt::Call { callee, .. } = s {
                        let loop_id = innermost_loop(forest, b.id)
                            .and_then(|h| loop_ids.get(&(f.name.clone(), h)).copied())
                            .unwrap_or(0);
                        sites.push(CallSite {
                            callee: callee.clone(),
                            loop_id,
                        });
                    }
                }
            }
            FunctionRecord {
                unit: unit.name.clone(),
                name: f.name.clone(),
                callees: callees_of(f),
                sites,
            }
        })
        .collect()
}

fn innermost_loop(forest: &LoopForest, b: BlockId) -> Option<BlockId> {
    let mut best: Option<&LoopNode> = None;
    for l in forest.preorder() {
        if l.contains(b) && best.is_none_or(|cur| l.body.len() < cur.body.len()) {
            best = Some(l);
        }
    }
    best.map(|l| l.header)
}

/// Loop facts for every function of a unit, numbered from `first_id` in
/// emission order and loop preorder.
pub fn collect_loops(
    unit: &TranslationUnit,
    forests: &[LoopForest],
    first_id: u32,
) -> (Vec<LoopRecord>, HashMap<(String, BlockId), u32>) {
    let mut next = first_id;
    let mut records = Vec::new();
    let mut ids = HashMap::new();
    for i in emission_order(unit) {
        let f = &unit.functions[i];
        let forest = &forests[i];
        for l in forest.preorder() {
            ids.insert((f.name.clone(), l.header), next);
            next += 1;
        }
        for l in forest.preorder() {
            records.push(loop_record(unit, f, forest, l, &ids));
        }
    }
    (records, ids)
}

fn loop_record(
    unit: &TranslationUnit,
    f: &MirFunction,
    forest: &LoopForest,
    l: &LoopNode,
    ids: &HashMap<(String, BlockId), u32>,
) -> LoopRecord {
    let mut callees: Vec<String> = Vec::new();
    let mut mem = 0u32;
    let mut stmts = 0u32;
    let mut arrays: Vec<String> = Vec::new();
    let mut local_array = false;
    for &b in &l.body {
        for s in &f.block(b).stmts {
            if !s.is_phi() {
                stmts += 1;
            }
            match s {
                Stmt::Call { callee, .. } => {
                    if !callees.contains(callee) {
                        callees.push(callee.clone());
                    }
                }
                Stmt::Load { array, .. } | Stmt::Store { array, .. } => {
                    mem += 1;
                    if !arrays.contains(&array.name) {
                        arrays.push(array.name.clone());
                    }
                    local_array |= array.space == MemSpace::Local;
                }
                _ => {}
            }
        }
    }
    let unsupported = if l.irreducible_inside {
        Some("irreducible-control-flow".to_string())
    } else if local_array {
        Some("local-array-access".to_string())
    } else if f.loop_source_for_header(l.header).is_none() {
        Some("loop-formed-by-goto".to_string())
    } else {
        None
    };
    let has_call = !callees.is_empty();
    let parent = forest
        .ancestors(l.header)
        .first()
        .and_then(|h| ids.get(&(f.name.clone(), *h)).copied());
    LoopRecord {
        loop_id: ids[&(f.name.clone(), l.header)],
        unit: unit.name.clone(),
        function: f.name.clone(),
        local_count: l.local_count,
        has_call,
        well_nested: !has_call && unsupported.is_none(),
        callees,
        mem_accesses: mem,
        meta: Some(LoopMeta {
            header: l.header.0,
            parent,
            stmts,
            heuristic: l.heuristic,
            arrays,
            unsupported,
        }),
    }
}

/// Runs both passes over a unit and produces its transcript section.
pub fn collect_unit(unit: &TranslationUnit, source: &str, first_id: u32, default_count: u64) -> (UnitSection, Vec<String>) {
    let forests: Vec<LoopForest> = unit
        .functions
        .iter()
        .map(|f| find_loops_with_default(f, default_count))
        .collect();
    let warnings = unit
        .functions
        .iter()
        .zip(&forests)
        .flat_map(|(f, fo)| fo.warnings.iter().map(move |w| format!("{}: {}: {w}", unit.name, f.name)))
        .collect();
    let (loops, ids) = collect_loops(unit, &forests, first_id);
    let functions = collect_functions(unit, &forests, &ids);
    (
        UnitSection {
            unit: unit.name.clone(),
            sha256: Some(sha256_hex(source)),
            functions,
            loops,
        },
        warnings,
    )
}

/// Collects a unit with the default heuristic loop count.
pub fn collect_unit_default(unit: &TranslationUnit, source: &str, first_id: u32) -> (UnitSection, Vec<String>) {
    collect_unit(unit, source, first_id, DEFAULT_LOOP_COUNT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::compile_unit;

    fn unit(src: &str, name: &str) -> TranslationUnit {
        compile_unit(src, name).unwrap().unit
    }

    const UNIT1: &str = include_str!("../../../../corpus/listings/unit1.c");
    const UNIT2: &str = include_str!("../../../../corpus/listings/unit2.c");

    #[test]
    fn listing_function_records() {
        let u = unit(UNIT1, "unit1.c");
        let (sec, _) = collect_unit_default(&u, UNIT1, 1);
        let names: Vec<_> = sec.functions.iter().map(|f| (f.name.as_str(), f.callees.clone())).collect();
        assert_eq!(
            names,
            vec![("fun2", vec!["fun3".to_string()]), ("fun1", vec!["fun2".to_string()])]
        );
    }

    #[test]
    fn listing_loop_records() {
        let u1 = unit(UNIT1, "unit1.c");
        let (s1, _) = collect_unit_default(&u1, UNIT1, 1);
        let u2 = unit(UNIT2, "unit2.c");
        let (s2, _) = collect_unit_default(&u2, UNIT2, 3);
        let facts: Vec<_> = s1
            .loops
            .iter()
            .chain(&s2.loops)
            .map(|l| (l.loop_id, l.function.as_str(), l.local_count, l.has_call, l.well_nested))
            .collect();
        assert_eq!(
            facts,
            vec![(1, "fun2", 29, true, false), (2, "fun1", 9, true, false), (3, "fun3", 99, false, true)]
        );
    }

    #[test]
    fn duplicate_callee_listed_once() {
        let u = unit("int g(int x); int f(int a){ return g(a) + g(a+1); }", "t.c");
        let (sec, _) = collect_unit_default(&u, "", 1);
        assert_eq!(sec.functions[0].callees, vec!["g".to_string()]);
        assert_eq!(sec.functions[0].sites.len(), 2);
    }

    #[test]
    fn array_store_loop_is_well_nested() {
        let src = "int A[16];\nvoid f(int n) {\n  for (int i = 0; i < 16; i++) {\n    A[i] = n;\n  }\n}\n";
        let u = unit(src, "t.c");
        let (sec, _) = collect_unit_default(&u, src, 1);
        let l = &sec.loops[0];
        assert!(!l.has_call && l.well_nested);
        assert_eq!(l.mem_accesses, 1);
        assert_eq!(l.local_count, 15);
    }

    #[test]
    fn nested_loop_callees_propagate_to_parent() {
        let src = "int g(int x); int f(int n){ int s=0; for(int i=0;i<4;i++){ for(int j=0;j<5;j++){ s+=g(j); } } return s; }";
        let u = unit(src, "t.c");
        let (sec, _) = collect_unit_default(&u, src, 1);
        assert_eq!(sec.loops.len(), 2);
        assert!(sec.loops.iter().all(|l| l.has_call && l.callees == vec!["g".to_string()]));
        assert_eq!(sec.loops[1].meta.as_ref().unwrap().parent, Some(1));
        assert_eq!(sec.functions[0].sites, vec![CallSite { callee: "g".into(), loop_id: 2 }]);
    }

    #[test]
    fn listing_transcript_body_is_exact() {
        let mut t = Transcript::new();
        for (src, name) in [(UNIT1, "unit1.c"), (UNIT2, "unit2.c")] {
            let u = unit(src, name);
            let (sec, _) = collect_unit_default(&u, src, t.next_loop);
            t.replace_unit(sec);
        }
        let expected = "unit1.c\nfunction=fun2\nloop1\ncount=29\ncall=1\nwell_nested=0\n-fun3\nfunction=fun1\nloop2\ncount=9\ncall=1\nwell_nested=0\n-fun2\n\nunit2.c\nfunction=fun3\nloop3\ncount=99\ncall=0\nwell_nested=1\n";
        assert_eq!(t.body(), expected);
        assert_eq!(parse_transcript(&t.serialize()).unwrap(), t);
    }
}
