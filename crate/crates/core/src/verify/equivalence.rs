//! Randomized equivalence checking of an accelerator FSM against the
//! interpreter running the original loop region, plus the fault-injection
//! suite that shows the check has teeth.
//!
//! Each trial draws live-in values (and, when the loop touches arrays,
//! random array contents) from a generator seeded by `(seed, trial)`, so
//! trials are independent, run in parallel, and are reproducible one by
//! one. A trial whose software run exceeds the step limit is redrawn; the
//! number of redraws is reported.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::fsm_sim::simulate_fsm;
use super::interp::{run_region, Limits, Memory, Stop};
use crate::ir::loops::find_loops;
use crate::ir::{BlockId, MirFunction, MirProgram, Operand, ValueId};
use crate::synth::fsm::{faults, validate_fsm, FsmSpec};
use crate::synth::region::{copy_aliases, ExitSource, LoopRegion};
use crate::synth::CostModel;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivConfig {
    pub trials: u32,
    pub seed: u64,
    pub limits: Limits,
    /// Redraws allowed per trial when the software run does not finish.
    pub max_redraws: u32,
}

impl Default for EquivConfig {
    fn default() -> Self {
        EquivConfig {
            trials: 1000,
            seed: 1,
            limits: Limits {
                max_steps: 1_000_000,
                max_depth: 64,
            },
            max_redraws: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub trial: u32,
    pub inputs: Vec<i32>,
    pub detail: String,
}

impl std::fmt::Display for Counterexample {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "trial {} inputs {:?}: {}", self.trial, self.inputs, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EquivReport {
    pub accelerator: String,
    pub trials: u32,
    /// Trials whose inputs were redrawn because software did not finish.
    pub redrawn: u32,
    /// Trials that never found a terminating input vector.
    pub inconclusive: u32,
    /// Trials per exit id.
    pub exits: BTreeMap<u32, u32>,
    /// Trials that trapped (identically) in both executors.
    pub traps: u32,
    pub mismatches: Vec<Counterexample>,
    /// Shortest and longest observed hyperblock visit.
    pub visit_cycles: Option<(u64, u64)>,
    pub total_cycles: u64,
    pub total_visits: u64,
}

impl EquivReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }

    /// Whether every observed visit lies within `[best, worst]`.
    pub fn within(&self, best: u64, worst: u64) -> bool {
        self.visit_cycles.is_none_or(|(lo, hi)| best <= lo && hi <= worst)
    }

    pub fn to_kv(&self) -> String {
        let mut s = format!(
            "{a}.trials={}\n{a}.mismatches={}\n{a}.redrawn={}\n{a}.inconclusive={}\n{a}.traps={}\n",
            self.trials,
            self.mismatches.len(),
            self.redrawn,
            self.inconclusive,
            self.traps,
            a = self.accelerator
        );
        for (id, n) in &self.exits {
            s += &format!("{}.exit{id}={n}\n", self.accelerator);
        }
        if let Some((lo, hi)) = self.visit_cycles {
            s += &format!("{a}.observed_min_cycles={lo}\n{a}.observed_max_cycles={hi}\n", a = self.accelerator);
        }
        for m in &self.mismatches {
            s += &format!("{}.counterexample={m}\n", self.accelerator);
        }
        s
    }
}

/// A value from a mix of small and wide ranges, so that both
/// data-dependent branches and wraparound get exercised.
pub fn mixed_value(rng: &mut impl Rng) -> i32 {
    match rng.gen_range(0..10) {
        0..=3 => rng.gen_range(-16..=16),
        4..=6 => rng.gen_range(-256..=256),
        7..=8 => rng.gen_range(-65536..=65536),
        _ => rng.gen(),
    }
}

/// Generator for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u32, attempt: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((trial as u64) << 16) | attempt as u64);
    rng
}

/// Everything a trial needs about the loop, computed once.
pub struct LoopContext<'p> {
    pub program: &'p MirProgram,
    pub func: &'p MirFunction,
    pub header: BlockId,
    pub preheader: BlockId,
    pub exits: Vec<(BlockId, BlockId)>,
    pub inputs: Vec<ValueId>,
    pub outputs: Vec<ValueId>,
    pub exit_phis: Vec<Vec<ExitSource>>,
    pub arrays: Vec<String>,
    alias: Vec<Operand>,
}

impl<'p> LoopContext<'p> {
    pub fn new(program: &'p MirProgram, fsm: &FsmSpec) -> Result<LoopContext<'p>, String> {
        let func = program
            .function(&fsm.function)
            .ok_or_else(|| format!("function '{}' not found", fsm.function))?;
        let forest = find_loops(func);
        let r = LoopRegion::new(func, &forest, BlockId(fsm.header_block)).map_err(|e| e.to_string())?;
        if r.inputs.len() != fsm.inputs.len() {
            return Err(format!(
                "{}: FSM has {} inputs, loop has {}",
                fsm.name,
                fsm.inputs.len(),
                r.inputs.len()
            ));
        }
        if r.outputs.len() != fsm.outputs.len() || r.exits.len() != fsm.exits.len() {
            return Err(format!("{}: FSM interface does not match the loop", fsm.name));
        }
        Ok(LoopContext {
            program,
            func,
            header: r.header,
            preheader: r.preheader,
            exits: r.exits.clone(),
            inputs: r.inputs.clone(),
            outputs: r.outputs.iter().map(|(v, _)| *v).collect(),
            exit_phis: r.exit_phis.iter().map(|ps| ps.iter().map(|(_, s)| *s).collect()).collect(),
            arrays: r.arrays.clone(),
            alias: copy_aliases(func),
        })
    }

    /// SSA values to seed the software frame with: the live-ins and every
    /// copy of them or of a constant.
    pub fn frame_inputs(&self, vals: &[i32]) -> Vec<(ValueId, i32)> {
        let mut out: Vec<(ValueId, i32)> = self.inputs.iter().copied().zip(vals.iter().copied()).collect();
        for (w, a) in self.alias.iter().enumerate() {
            let w = ValueId(w as u32);
            match a {
                Operand::Const(c) => out.push((w, *c)),
                Operand::Value(v) if *v != w => {
                    if let Some(k) = self.inputs.iter().position(|x| x == v) {
                        out.push((w, vals[k]));
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Initial memory with random contents in the arrays the loop touches.
    pub fn random_memory(&self, base: &Memory, rng: &mut impl Rng) -> Memory {
        let mut m = base.clone();
        for a in &self.arrays {
            if let Some(v) = m.arrays.get_mut(a) {
                for x in v.iter_mut() {
                    *x = mixed_value(rng);
                }
            }
        }
        m
    }
}

enum TrialOutcome {
    Exit { id: u32, visit_cycles: Option<(u64, u64)>, cycles: u64, visits: u64 },
    Trap,
    Inconclusive,
    Mismatch(Counterexample),
}

fn run_trial(ctx: &LoopContext, fsm: &FsmSpec, base: &Memory, cfg: &EquivConfig, trial: u32) -> (TrialOutcome, u32) {
    for attempt in 0..=cfg.max_redraws {
        let mut rng = trial_rng(cfg.seed, trial, attempt);
        let inputs: Vec<i32> = (0..ctx.inputs.len()).map(|_| mixed_value(&mut rng)).collect();
        let mem = ctx.random_memory(base, &mut rng);
        let sw = run_region(
            ctx.program,
            ctx.func,
            ctx.header,
            ctx.preheader,
            &ctx.exits,
            &ctx.frame_inputs(&inputs),
            mem.clone(),
            cfg.limits,
        );
        if sw.stop == Some(Stop::StepLimit) {
            continue;
        }
        let hw = simulate_fsm(fsm, &inputs, mem, cfg.limits.max_steps);
        let mismatch = |detail: String| {
            (
                TrialOutcome::Mismatch(Counterexample {
                    trial,
                    inputs: inputs.clone(),
                    detail,
                }),
                attempt,
            )
        };
        let sw_result: Result<u32, Stop> = match (sw.exit, &sw.stop) {
            (Some(id), _) => Ok(id),
            (None, Some(s)) => Err(s.clone()),
            (None, None) => Err(Stop::Error("software run ended without a result".into())),
        };
        if let Err(Stop::Error(e)) = &sw_result {
            return mismatch(format!("software run failed: {e}"));
        }
        if sw_result != hw.bb_idx {
            let show = |r: &Result<u32, Stop>| match r {
                Ok(id) => format!("bb_idx {id}"),
                Err(s) => s.to_string(),
            };
            return mismatch(format!("software {} vs accelerator {}", show(&sw_result), show(&hw.bb_idx)));
        }
        if sw.mem != hw.mem {
            let diff = sw
                .mem
                .arrays
                .iter()
                .find(|(k, v)| hw.mem.arrays.get(*k) != Some(*v))
                .map_or_else(String::new, |(k, _)| k.clone());
            return mismatch(format!("memory differs in '{diff}'"));
        }
        let Ok(id) = sw_result else {
            return (TrialOutcome::Trap, attempt);
        };
        for src in &ctx.exit_phis[id as usize - 1] {
            if let ExitSource::Output(k) = *src {
                let want = sw.values[ctx.outputs[k].index()];
                if hw.outputs[k] != want {
                    return mismatch(format!(
                        "exit {id}: output {} = {} in software, {} in accelerator",
                        fsm.outputs[k], want, hw.outputs[k]
                    ));
                }
            }
        }
        return (
            TrialOutcome::Exit {
                id,
                visit_cycles: hw.visit_cycles,
                cycles: hw.cycles,
                visits: hw.visits.iter().sum(),
            },
            attempt,
        );
    }
    (TrialOutcome::Inconclusive, cfg.max_redraws + 1)
}

/// Runs `cfg.trials` random trials comparing `fsm` with the software loop.
pub fn check_equivalence(program: &MirProgram, fsm: &FsmSpec, cfg: &EquivConfig) -> Result<EquivReport, String> {
    let ctx = LoopContext::new(program, fsm)?;
    let base = Memory::of_program(program);
    let outcomes: Vec<(TrialOutcome, u32)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(&ctx, fsm, &base, cfg, t))
        .collect();
    let mut rep = EquivReport {
        accelerator: fsm.name.clone(),
        trials: cfg.trials,
        ..Default::default()
    };
    for (o, redraws) in outcomes {
        rep.redrawn += (redraws > 0) as u32;
        match o {
            TrialOutcome::Exit {
                id,
                visit_cycles,
                cycles,
                visits,
            } => {
                *rep.exits.entry(id).or_default() += 1;
                rep.total_cycles += cycles;
                rep.total_visits += visits;
                if let Some((lo, hi)) = visit_cycles {
                    rep.visit_cycles = Some(rep.visit_cycles.map_or((lo, hi), |(a, b)| (a.min(lo), b.max(hi))));
                }
            }
            TrialOutcome::Trap => rep.traps += 1,
            TrialOutcome::Inconclusive => rep.inconclusive += 1,
            TrialOutcome::Mismatch(c) => rep.mismatches.push(c),
        }
    }
    Ok(rep)
}

/// How an injected fault was caught.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Detection {
    Validator(String),
    Counterexample(Counterexample),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultOutcome {
    pub fault: String,
    pub detection: Option<Detection>,
}

/// The fault suite for one accelerator: exit ids 1 and 2 swapped (when
/// the loop has two or more exits) and every dependence edge whose
/// removal changes the schedule in a way that violates it.
pub fn fault_suite(fsm: &FsmSpec, model: &CostModel) -> Vec<(String, FsmSpec)> {
    let mut v = Vec::new();
    if let Some(g) = faults::swap_exit_ids(fsm) {
        v.push(("swap exit ids 1,2".to_string(), g));
    }
    v.extend(faults::drop_dependence(fsm, model));
    v
}

/// Checks each faulty FSM with the validator and, if it passes, with
/// randomized equivalence checking.
pub fn run_fault_suite(
    program: &MirProgram,
    fsm: &FsmSpec,
    model: &CostModel,
    cfg: &EquivConfig,
) -> Result<Vec<FaultOutcome>, String> {
    fault_suite(fsm, model)
        .into_iter()
        .map(|(fault, g)| {
            let detection = match validate_fsm(&g) {
                Err(e) => Some(Detection::Validator(e)),
                Ok(()) => check_equivalence(program, &g, cfg)?
                    .mismatches
                    .into_iter()
                    .next()
                    .map(Detection::Counterexample),
            };
            Ok(FaultOutcome { fault, detection })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::compile_program;
    use crate::synth::synthesize_loop;

    const UNIT1: &str = include_str!("../../../../corpus/listings/unit1.c");
    const UNIT2: &str = include_str!("../../../../corpus/listings/unit2.c");

    fn program(srcs: &[(&str, &str)]) -> MirProgram {
        let s: Vec<(String, String)> = srcs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        compile_program(&s).unwrap().program
    }

    fn fsm_of(p: &MirProgram, fname: &str, model: &CostModel) -> FsmSpec {
        let f = p.function(fname).unwrap();
        let header = find_loops(f).roots[0].header;
        synthesize_loop(f, header, 1, model).unwrap().fsm
    }

    fn cfg(trials: u32) -> EquivConfig {
        EquivConfig {
            trials,
            ..Default::default()
        }
    }

    #[test]
    fn fun3_has_no_mismatches_and_hits_both_exits() {
        let p = program(&[("unit1.c", UNIT1), ("unit2.c", UNIT2)]);
        let fsm = fsm_of(&p, "fun3", &CostModel::default());
        let rep = check_equivalence(&p, &fsm, &cfg(1000)).unwrap();
        assert!(rep.passed(), "{:?}", rep.mismatches.first());
        assert_eq!(rep.exits.len(), 2, "{:?}", rep.exits);
        assert_eq!(rep.exits.values().sum::<u32>() + rep.traps + rep.inconclusive, 1000);
        let (best, worst) = fsm.cycle_bounds();
        assert!(rep.within(best, worst));
    }

    #[test]
    fn reports_are_deterministic() {
        let p = program(&[("unit2.c", UNIT2)]);
        let fsm = fsm_of(&p, "fun3", &CostModel::default());
        let a = check_equivalence(&p, &fsm, &cfg(200)).unwrap();
        let b = check_equivalence(&p, &fsm, &cfg(200)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_kv(), b.to_kv());
    }

    #[test]
    fn single_path_loop_holds_trivially() {
        let p = program(&[("t.c", "int f(int x){ int s = 0; for (int i = 0; i < 10; i++) s = s + x; return s; }")]);
        let fsm = fsm_of(&p, "f", &CostModel::default());
        let rep = check_equivalence(&p, &fsm, &cfg(100)).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.exits.keys().copied().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn memory_loops_compare_stores_and_traps() {
        let p = program(&[(
            "t.c",
            "int A[16]; int B[16]; void f(int k, int n){ for (int i = 0; i < n; i++) { if (A[i] > k) B[i] = A[i] / k; else B[i] = 0; } }",
        )]);
        let fsm = fsm_of(&p, "f", &CostModel::default());
        let rep = check_equivalence(&p, &fsm, &cfg(500)).unwrap();
        assert!(rep.passed(), "{:?}", rep.mismatches.first());
        assert!(rep.traps > 0, "out-of-range n must trap in both executors");
        assert!(!rep.exits.is_empty());
    }

    #[test]
    fn swapped_exits_yield_a_counterexample() {
        let p = program(&[("unit2.c", UNIT2)]);
        let fsm = fsm_of(&p, "fun3", &CostModel::default());
        let bad = faults::swap_exit_ids(&fsm).unwrap();
        assert!(validate_fsm(&bad).is_ok(), "structurally fine, so only co-simulation can catch it");
        let rep = check_equivalence(&p, &bad, &cfg(100)).unwrap();
        let c = rep.mismatches.first().expect("counterexample");
        assert!(c.detail.contains("bb_idx"), "{c}");
        // The counterexample replays deterministically.
        let again = check_equivalence(&p, &bad, &cfg(100)).unwrap();
        assert_eq!(again.mismatches, rep.mismatches);
    }

    #[test]
    fn fault_suite_is_fully_detected() {
        let p = program(&[("unit2.c", UNIT2)]);
        let model = CostModel {
            clock_budget: 2,
            ..CostModel::default()
        };
        let fsm = fsm_of(&p, "fun3", &model);
        let outcomes = run_fault_suite(&p, &fsm, &model, &cfg(100)).unwrap();
        assert!(outcomes.len() >= 2, "{outcomes:?}");
        for o in &outcomes {
            assert!(o.detection.is_some(), "undetected fault {}", o.fault);
        }
    }
}
