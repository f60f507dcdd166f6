//! Whole-program co-simulation: the patched program runs in the
//! interpreter while the wrapper's register accesses are serviced by
//! simulated accelerators sharing the interpreter's memory. Every access
//! is counted, which yields the timing report.
//!
//! Accelerator `id` lives at `0x4000_0000 | id << 12`; the low twelve
//! address bits select a register of its map.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use super::fsm_sim::simulate_fsm;
use super::interp::{Externals, Interpreter, Limits, Memory, RunResult, Stop};
use crate::hdl::regmap::{layout_registers, RegisterMap, Role, CTRL_START, STATUS_DONE};
use crate::ir::loops::find_loops;
use crate::ir::{BlockId, MirProgram};
use crate::patch::wrapper::{BASE_HOOK, READ_HOOK, WRITE_HOOK};
use crate::synth::cost::format_decimal;
use crate::synth::estimate::block_sw_cycles;
use crate::synth::fsm::FsmSpec;
use crate::synth::region::LoopRegion;
use crate::synth::CostModel;

const BASE_PREFIX: u32 = 0x4000_0000;

/// Simulation base address of accelerator `loop_id`.
pub fn base_address(loop_id: u32) -> u32 {
    BASE_PREFIX | (loop_id << 12)
}

/// Access counts and cycles of one accelerator over a program run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AccelStats {
    pub calls: u64,
    /// Input, output and `bb_idx` register accesses.
    pub transfers: u64,
    /// Start writes and status reads.
    pub control_accesses: u64,
    pub cycles: u64,
    pub visits: u64,
    /// Shortest and longest hyperblock visit, in cycles.
    pub visit_cycles: Option<(u64, u64)>,
    /// Invocations per exit id.
    pub exits: BTreeMap<u32, u64>,
}

impl AccelStats {
    /// Adds the counts of `o` to `self`.
    pub fn merge(&mut self, o: &AccelStats) {
        self.calls += o.calls;
        self.transfers += o.transfers;
        self.control_accesses += o.control_accesses;
        self.cycles += o.cycles;
        self.visits += o.visits;
        if let Some((lo, hi)) = o.visit_cycles {
            self.visit_cycles = Some(self.visit_cycles.map_or((lo, hi), |(a, b)| (a.min(lo), b.max(hi))));
        }
        for (id, n) in &o.exits {
            *self.exits.entry(*id).or_default() += n;
        }
    }

    /// Whether every observed visit lies within `[best, worst]`.
    pub fn within(&self, best: u64, worst: u64) -> bool {
        self.visit_cycles.is_none_or(|(lo, hi)| best <= lo && hi <= worst)
    }
}

#[derive(Debug, Clone, Default)]
struct Device {
    inputs: Vec<i32>,
    outputs: Vec<i32>,
    bb_idx: i32,
    status: i32,
}

/// Services the wrapper hooks with simulated accelerators.
pub struct AccelSim<'a> {
    fsms: BTreeMap<u32, (&'a FsmSpec, RegisterMap)>,
    devices: BTreeMap<u32, Device>,
    pub stats: BTreeMap<u32, AccelStats>,
    pub max_states: u64,
}

impl<'a> AccelSim<'a> {
    pub fn new(fsms: &'a [FsmSpec], max_states: u64) -> Result<AccelSim<'a>, String> {
        let mut map = BTreeMap::new();
        for f in fsms {
            if f.loop_id == 0 || f.loop_id >= 1 << 18 {
                return Err(format!("loop id {} cannot be mapped to an address", f.loop_id));
            }
            if map.insert(f.loop_id, (f, layout_registers(f))).is_some() {
                return Err(format!("two accelerators for loop {}", f.loop_id));
            }
        }
        Ok(AccelSim {
            devices: map.keys().map(|&k| (k, Device::default())).collect(),
            stats: map.keys().map(|&k| (k, AccelStats::default())).collect(),
            fsms: map,
            max_states,
        })
    }

    fn decode(&self, addr: i32) -> Result<(u32, u32), Stop> {
        let a = addr as u32;
        let id = (a & !BASE_PREFIX) >> 12;
        if a & BASE_PREFIX == 0 || !self.fsms.contains_key(&id) {
            return Err(Stop::Error(format!("access to unmapped address 0x{a:08X}")));
        }
        Ok((id, a & 0xFFF))
    }

    fn role(&self, id: u32, offset: u32) -> Result<Role, Stop> {
        self.fsms[&id]
            .1
            .entries
            .iter()
            .find(|e| e.offset == offset)
            .map(|e| e.role)
            .ok_or_else(|| Stop::Error(format!("loop {id}: no register at offset 0x{offset:02X}")))
    }

    fn write(&mut self, addr: i32, value: i32, mem: &mut Memory) -> Result<i32, Stop> {
        let (id, off) = self.decode(addr)?;
        let role = self.role(id, off)?;
        let stats = self.stats.get_mut(&id).expect("stats");
        let fsm = self.fsms[&id].0;
        let dev = self.devices.get_mut(&id).expect("device");
        match role {
            Role::ControlStatus => {
                stats.control_accesses += 1;
                if value as u32 & CTRL_START == 0 {
                    return Ok(0);
                }
                stats.calls += 1;
                if dev.inputs.len() != fsm.inputs.len() {
                    dev.inputs.resize(fsm.inputs.len(), 0);
                }
                let r = simulate_fsm(fsm, &dev.inputs, std::mem::take(mem), self.max_states);
                *mem = r.mem;
                stats.cycles += r.cycles;
                stats.visits += r.visits.iter().sum::<u64>();
                if let Some((lo, hi)) = r.visit_cycles {
                    stats.visit_cycles = Some(stats.visit_cycles.map_or((lo, hi), |(a, b)| (a.min(lo), b.max(hi))));
                }
                let id = r.bb_idx?;
                *stats.exits.entry(id).or_default() += 1;
                dev.outputs = r.outputs;
                dev.bb_idx = id as i32;
                dev.status = STATUS_DONE as i32;
            }
            Role::Input(k) => {
                stats.transfers += 1;
                if dev.inputs.len() <= k {
                    dev.inputs.resize(k + 1, 0);
                }
                dev.inputs[k] = value;
            }
            Role::Output(_) | Role::BbIdx => {
                return Err(Stop::Error(format!("loop {id}: write to read-only register 0x{off:02X}")))
            }
        }
        Ok(0)
    }

    fn read(&mut self, addr: i32) -> Result<i32, Stop> {
        let (id, off) = self.decode(addr)?;
        let role = self.role(id, off)?;
        let stats = self.stats.get_mut(&id).expect("stats");
        let dev = &self.devices[&id];
        Ok(match role {
            Role::ControlStatus => {
                stats.control_accesses += 1;
                dev.status
            }
            Role::Output(k) => {
                stats.transfers += 1;
                dev.outputs.get(k).copied().unwrap_or(0)
            }
            Role::BbIdx => {
                stats.transfers += 1;
                dev.bb_idx
            }
            Role::Input(k) => {
                stats.transfers += 1;
                dev.inputs.get(k).copied().unwrap_or(0)
            }
        })
    }
}

impl Externals for AccelSim<'_> {
    fn call(&mut self, name: &str, args: &[i32], mem: &mut Memory) -> Option<Result<i32, Stop>> {
        let r = match (name, args) {
            (BASE_HOOK, [id]) => Ok(if *id > 0 && self.fsms.contains_key(&(*id as u32)) {
                base_address(*id as u32) as i32
            } else {
                0
            }),
            (WRITE_HOOK, [addr, v]) => self.write(*addr, *v, mem),
            (READ_HOOK, [addr]) => self.read(*addr),
            (BASE_HOOK | WRITE_HOOK | READ_HOOK, _) => Err(Stop::Error(format!("bad arguments to {name}"))),
            _ => return None,
        };
        Some(r)
    }
}

fn rat(n: impl Into<BigInt>) -> BigRational {
    BigRational::from_integer(n.into())
}

/// Timing of one accelerator over a program run; all times in seconds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimingReport {
    pub accelerator: String,
    pub loop_id: u32,
    pub function: String,
    pub states: u32,
    pub stats: AccelStats,
    /// CPU cycles the software loop took for the same executions.
    pub sw_cycles: u128,
    /// `reg_access_cycles × transfers / f_accel`.
    pub transfer_latency: BigRational,
    /// `reg_access_cycles × control accesses / f_accel` (start and poll).
    pub control_latency: BigRational,
    /// `(invocation_overhead × calls + reg_access × transfers) / f_accel`.
    pub call_overhead: BigRational,
    /// `cycles / f_accel`.
    pub compute: BigRational,
    /// `call_overhead + compute`.
    pub hw_time: BigRational,
    /// Software estimate for the same loop executions.
    pub sw_time: BigRational,
    /// `sw_time / hw_time`; `None` when the accelerator never ran.
    pub relative_performance: Option<BigRational>,
    pub f_cpu_hz: u64,
    pub f_accel_hz: u64,
}

impl TimingReport {
    pub fn new(fsm: &FsmSpec, stats: AccelStats, sw_cycles: u128, m: &CostModel) -> TimingReport {
        let fa = rat(m.f_accel_hz);
        let transfer_latency = rat(m.reg_access_cycles) * rat(stats.transfers) / &fa;
        let control_latency = rat(m.reg_access_cycles) * rat(stats.control_accesses) / &fa;
        let call_overhead = rat(m.invocation_overhead_cycles) * rat(stats.calls) / &fa + &transfer_latency;
        let compute = rat(stats.cycles) / &fa;
        let hw_time = &call_overhead + &compute;
        let sw_time = rat(sw_cycles) / rat(m.f_cpu_hz);
        let relative_performance = (!hw_time.is_zero()).then(|| &sw_time / &hw_time);
        TimingReport {
            accelerator: fsm.name.clone(),
            loop_id: fsm.loop_id,
            function: fsm.function.clone(),
            states: fsm.state_count(),
            stats,
            sw_cycles,
            transfer_latency,
            control_latency,
            call_overhead,
            compute,
            hw_time,
            sw_time,
            relative_performance,
            f_cpu_hz: m.f_cpu_hz,
            f_accel_hz: m.f_accel_hz,
        }
    }

    /// Transfers per invocation, when the accelerator ran.
    pub fn transfers_per_call(&self) -> Option<u64> {
        (self.stats.calls > 0).then(|| self.stats.transfers / self.stats.calls)
    }

    /// Table with the columns Clock Rate, FSM States, Execution Time and
    /// Relative Performance; software is the reference row.
    pub fn to_table(&self) -> String {
        let mhz = |hz: u64| format!("{} MHz", format_decimal(&(rat(hz) / rat(1_000_000)), 0));
        let us = |t: &BigRational| format!("{} us", format_decimal(&(t * rat(1_000_000)), 3));
        let ran = self.stats.calls > 0;
        let rows = [
            ["Implementation", "Clock Rate", "FSM States", "Execution Time", "Relative Performance"].map(String::from),
            [
                "Software".into(),
                mhz(self.f_cpu_hz),
                "-".into(),
                us(&self.sw_time),
                "1.00".into(),
            ],
            [
                format!("Accelerator {}", self.accelerator),
                mhz(self.f_accel_hz),
                self.states.to_string(),
                if ran { us(&self.hw_time) } else { "-".into() },
                self.relative_performance
                    .as_ref()
                    .map_or("-".into(), |r| format_decimal(r, 2)),
            ],
        ];
        let widths: Vec<usize> = (0..5).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut s = String::new();
        for (i, r) in rows.iter().enumerate() {
            let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(s, "| {} |", cells.join(" | "));
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                let _ = writeln!(s, "|-{}-|", rule.join("-|-"));
            }
        }
        s
    }

    /// Machine-readable `key=value` lines; rationals as `n/d` with a
    /// decimal rendering alongside.
    pub fn to_kv(&self) -> String {
        let p = &self.accelerator;
        let q = |r: &BigRational| format!("{} ({})", r, format_decimal(r, 12));
        let mut s = String::new();
        let _ = writeln!(s, "{p}.loop_id={}", self.loop_id);
        let _ = writeln!(s, "{p}.function={}", self.function);
        let _ = writeln!(s, "{p}.states={}", self.states);
        let _ = writeln!(s, "{p}.calls={}", self.stats.calls);
        let _ = writeln!(s, "{p}.transfers={}", self.stats.transfers);
        if let Some(t) = self.transfers_per_call() {
            let _ = writeln!(s, "{p}.transfers_per_call={t}");
        }
        let _ = writeln!(s, "{p}.control_accesses={}", self.stats.control_accesses);
        let _ = writeln!(s, "{p}.cycles={}", self.stats.cycles);
        let _ = writeln!(s, "{p}.visits={}", self.stats.visits);
        if let Some((lo, hi)) = self.stats.visit_cycles {
            let _ = writeln!(s, "{p}.visit_cycles_min={lo}");
            let _ = writeln!(s, "{p}.visit_cycles_max={hi}");
        }
        let _ = writeln!(s, "{p}.sw_cycles={}", self.sw_cycles);
        for (id, n) in &self.stats.exits {
            let _ = writeln!(s, "{p}.calls_exit{id}={n}");
        }
        let _ = writeln!(s, "{p}.transfer_latency_s={}", q(&self.transfer_latency));
        let _ = writeln!(s, "{p}.control_latency_s={}", q(&self.control_latency));
        let _ = writeln!(s, "{p}.call_overhead_s={}", q(&self.call_overhead));
        let _ = writeln!(s, "{p}.compute_s={}", q(&self.compute));
        let _ = writeln!(s, "{p}.hw_time_s={}", q(&self.hw_time));
        let _ = writeln!(s, "{p}.sw_time_s={}", q(&self.sw_time));
        match &self.relative_performance {
            Some(r) => {
                let _ = writeln!(s, "{p}.relative_performance={}", q(r));
            }
            None => {
                let _ = writeln!(s, "{p}.relative_performance=-");
            }
        }
        s
    }
}

/// Result of co-simulating one program run.
#[derive(Debug, Clone)]
pub struct Cosimulation {
    pub original: RunResult,
    pub patched: RunResult,
    /// One report per accelerator, in the order given.
    pub reports: Vec<TimingReport>,
}

impl Cosimulation {
    /// Same return value, program-visible memory and external call trace.
    pub fn equivalent(&self) -> bool {
        self.original.observation() == self.patched.observation()
    }

    /// Describes the first difference, if any.
    pub fn difference(&self) -> Option<String> {
        let (a, b) = (self.original.observation(), self.patched.observation());
        if a.0 != b.0 {
            return Some(format!("result {:?} vs {:?}", a.0, b.0));
        }
        if a.1 != b.1 {
            let k = a.1.iter().find(|(k, v)| b.1.get(*k) != Some(*v)).map(|(k, _)| k.clone());
            return Some(format!("memory differs in {k:?}"));
        }
        if a.2 != b.2 {
            return Some("external call trace differs".into());
        }
        None
    }
}

/// Runs `entry(args)` on `program` with the accelerators in `fsms`
/// servicing the wrapper hooks; returns the run and per-loop statistics.
pub fn run_with_accelerators(
    program: &MirProgram,
    fsms: &[FsmSpec],
    entry: &str,
    args: &[i32],
    limits: Limits,
) -> Result<(RunResult, BTreeMap<u32, AccelStats>), String> {
    let sim = AccelSim::new(fsms, limits.max_steps)?;
    let mut it = Interpreter::new(program, sim, limits);
    let ret = it.call(entry, args, 0);
    let stats = std::mem::take(&mut it.ext.stats);
    Ok((
        RunResult {
            ret,
            mem: it.mem,
            trace: it.trace,
            steps: it.steps,
        },
        stats,
    ))
}

/// Runs `entry(args)` on the original program (profiling loop blocks for
/// the software estimate) and on the patched program with the given
/// accelerators simulated; an empty `fsms` exercises the fallback path.
pub fn cosimulate(
    original: &MirProgram,
    patched: &MirProgram,
    fsms: &[FsmSpec],
    m: &CostModel,
    entry: &str,
    args: &[i32],
    limits: Limits,
) -> Result<Cosimulation, String> {
    let mut it = Interpreter::new(original, super::interp::NoExternals, limits);
    it.enable_profile();
    let ret = it.call(entry, args, 0);
    let profile = it.profile.take().unwrap_or_default();
    let original_run = RunResult {
        ret,
        mem: it.mem,
        trace: it.trace,
        steps: it.steps,
    };

    let (patched_run, mut stats) = run_with_accelerators(patched, fsms, entry, args, limits)?;

    let mut reports = Vec::new();
    for fsm in fsms {
        let f = original
            .function(&fsm.function)
            .ok_or_else(|| format!("function '{}' not found", fsm.function))?;
        let forest = find_loops(f);
        let r = LoopRegion::new(f, &forest, BlockId(fsm.header_block)).map_err(|e| e.to_string())?;
        let counts = profile.get(&fsm.function);
        let sw_cycles: u128 = r
            .body
            .iter()
            .map(|b| {
                let n = counts.map_or(0, |c| c[b.index()]) as u128;
                n * block_sw_cycles(f, *b, m) as u128
            })
            .sum();
        let st = stats.remove(&fsm.loop_id).unwrap_or_default();
        reports.push(TimingReport::new(fsm, st, sw_cycles, m));
    }
    Ok(Cosimulation {
        original: original_run,
        patched: patched_run,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::compile_program;
    use crate::patch::patch_program;
    use crate::synth::synthesize_loop;

    const UNIT1: &str = include_str!("../../../../corpus/listings/unit1.c");
    const UNIT2: &str = include_str!("../../../../corpus/listings/unit2.c");

    fn setup() -> (MirProgram, MirProgram, FsmSpec) {
        let p = compile_program(&[("unit1.c".into(), UNIT1.into()), ("unit2.c".into(), UNIT2.into())])
            .unwrap()
            .program;
        let f = p.function("fun3").unwrap();
        let h = find_loops(f).roots[0].header;
        let fsm = synthesize_loop(f, h, 3, &CostModel::default()).unwrap().fsm;
        let patched = patch_program(&p, std::slice::from_ref(&fsm)).unwrap().program;
        (p, patched, fsm)
    }

    #[test]
    fn listings_with_accelerator_match_and_count_four_transfers() {
        let (p, q, fsm) = setup();
        let m = CostModel::default();
        for (a, b) in [(1, 2), (0, 0), (7, -3)] {
            let c = cosimulate(&p, &q, std::slice::from_ref(&fsm), &m, "fun2", &[a, b], Limits::default()).unwrap();
            assert!(c.equivalent(), "{:?}", c.difference());
            let r = &c.reports[0];
            assert!(r.stats.calls > 0);
            assert_eq!(r.transfers_per_call(), Some(4));
            // One start write and one status poll per call.
            assert_eq!(r.stats.control_accesses, 2 * r.stats.calls);
            // Exact identities.
            assert_eq!(r.transfer_latency, rat(14 * r.stats.transfers) / rat(333_000_000));
            assert_eq!(r.relative_performance.clone().unwrap() * &r.hw_time, r.sw_time);
        }
    }

    #[test]
    fn fallback_has_empty_hardware_columns() {
        let (p, q, _) = setup();
        let c = cosimulate(&p, &q, &[], &CostModel::default(), "fun2", &[1, 2], Limits::default()).unwrap();
        assert!(c.equivalent());
        assert!(c.reports.is_empty());
    }

    #[test]
    fn twelve_transfers_latency() {
        let (_, _, fsm) = setup();
        let stats = AccelStats {
            calls: 1,
            transfers: 12,
            ..Default::default()
        };
        let r = TimingReport::new(&fsm, stats, 0, &CostModel::default());
        assert_eq!(r.transfer_latency, rat(12 * 14) / rat(333_000_000));
        // 168 / 333 MHz ≈ 0.504 µs.
        assert_eq!(format_decimal(&(&r.transfer_latency * rat(1_000_000)), 3), "0.505");
        assert_eq!(format_decimal(&(&r.transfer_latency * rat(1_000_000)), 2), "0.50");
    }

    #[test]
    fn table_shape() {
        let (p, q, fsm) = setup();
        let c = cosimulate(&p, &q, std::slice::from_ref(&fsm), &CostModel::default(), "fun2", &[1, 2], Limits::default())
            .unwrap();
        let t = c.reports[0].to_table();
        let head = t.lines().next().unwrap();
        for col in ["Clock Rate", "FSM States", "Execution Time", "Relative Performance"] {
            assert!(head.contains(col));
        }
        assert!(t.contains("666 MHz") && t.contains("333 MHz"));
        assert_eq!(t.lines().count(), 4);
    }
}
