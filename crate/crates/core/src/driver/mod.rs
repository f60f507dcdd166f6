//! The two-run workflow behind the command-line tool.
//!
//! * [`collect`] compiles every unit and records functions and loops in
//!   the transcript file.
//! * [`synth`] checks the transcript against the sources, ranks the loops,
//!   synthesizes the chosen ones in parallel and writes HDL, register maps,
//!   wrappers, patched sources and reports to an output directory.
//! * [`verify`] re-reads that directory, checks each accelerator against
//!   the software loop, co-simulates whole-program runs with and without
//!   the accelerators, and writes the timing report.
//! * [`report`] prints what the previous stages wrote.
//!
//! Every stage is deterministic: the same inputs and seed produce the same
//! files byte for byte.

pub mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

pub use config::Config;

use crate::analyzer::{analyze_frequencies, rank_and_select, SelectionReport};
use crate::collector::{
    collect_unit, parse_transcript, parse_transcript_file, sha256_hex, write_transcript, Transcript,
};
use crate::frontend::{compile_program, CompiledProgram};
use crate::hdl::{check_accelerator, emit_verilog, layout_registers, CheckReport, RegisterMap};
use crate::ir::loops::find_loops;
use crate::ir::{BlockId, MirProgram, Stmt};
use crate::patch::{emit_c, patch_program, platform_hooks_c, PatchedProgram};
use crate::synth::fsm::{validate_fsm, FsmSpec};
use crate::synth::{synthesize_loop, SynthError, Synthesized};
use crate::verify::cosim::{base_address, cosimulate, run_with_accelerators, AccelStats, TimingReport};
use crate::verify::equivalence::{mixed_value, trial_rng};
use crate::verify::{check_equivalence, EquivConfig, EquivReport, Limits, Stop};

/// File names inside the output directory.
pub const MANIFEST: &str = "manifest.txt";
pub const CONFIG_FILE: &str = "config.txt";
pub const SELECTION_FILE: &str = "selection.txt";
pub const ESTIMATES_FILE: &str = "estimates.txt";
pub const ACCEL_TABLE: &str = "accel_table.txt";
pub const HOOKS_FILE: &str = "accel_hw.c";
pub const VERIFY_REPORT: &str = "verify_report.txt";
pub const SOURCES_DIR: &str = "sources";
pub const PATCHED_DIR: &str = "patched";

/// A driver failure, split by exit status.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum DriverError {
    /// Bad invocation or missing inputs (exit status 2).
    #[error("{0}")]
    Usage(String),
    /// Compilation or verification failure (exit status 1).
    #[error("{0}")]
    Failed(String),
}

impl DriverError {
    pub fn exit_code(&self) -> i32 {
        match self {
            DriverError::Usage(_) => 2,
            DriverError::Failed(_) => 1,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> DriverError {
    DriverError::Failed(format!("{}: {e}", path.display()))
}

/// Source files as `(unit name, text)`, in command-line order.
pub type Sources = Vec<(String, String)>;

/// Reads source files; the unit name is the file name without directories.
pub fn read_sources(paths: &[PathBuf]) -> Result<Sources, DriverError> {
    if paths.is_empty() {
        return Err(DriverError::Usage("no source files given".into()));
    }
    let mut out: Sources = Vec::new();
    for p in paths {
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| DriverError::Usage(format!("'{}' is not a file name", p.display())))?;
        if out.iter().any(|(n, _)| *n == name) {
            return Err(DriverError::Usage(format!("two source files are named '{name}'")));
        }
        let text = std::fs::read_to_string(p).map_err(|e| DriverError::Usage(format!("{}: {e}", p.display())))?;
        out.push((name, text));
    }
    Ok(out)
}

/// Compiles all sources; the first error aborts the whole program.
pub fn compile(sources: &Sources) -> Result<CompiledProgram, DriverError> {
    compile_program(sources).map_err(|e| DriverError::Failed(e.to_diagnostic().to_string()))
}

/// Result of the collect stage.
#[derive(Debug, Clone)]
pub struct CollectOutcome {
    pub transcript: Transcript,
    pub warnings: Vec<String>,
}

/// Adds every unit of `sources` to `existing`. A unit whose text is
/// unchanged keeps its section (and loop ids); any other unit gets a fresh
/// section with new ids. Nothing is produced if any unit fails to compile.
pub fn collect_into(sources: &Sources, existing: Transcript, default_loop_count: u64) -> Result<CollectOutcome, DriverError> {
    let compiled = compile(sources)?;
    let mut warnings: Vec<String> = compiled.warnings.iter().map(|d| d.to_string()).collect();
    let mut t = existing;
    for (unit, (name, text)) in compiled.program.units.iter().zip(sources) {
        let sha = sha256_hex(text);
        if t.unit(name).is_some_and(|u| u.sha256.as_deref() == Some(sha.as_str())) {
            continue;
        }
        let (section, w) = collect_unit(unit, text, t.next_loop, default_loop_count);
        warnings.extend(w);
        t.replace_unit(section);
    }
    Ok(CollectOutcome { transcript: t, warnings })
}

/// The collect stage: updates (or creates) the transcript at `path`.
pub fn collect(sources: &Sources, path: &Path, default_loop_count: u64) -> Result<CollectOutcome, DriverError> {
    let existing = parse_transcript_file(path).map_err(|e| DriverError::Failed(format!("{}: {e}", path.display())))?;
    let out = collect_into(sources, existing, default_loop_count)?;
    write_transcript(path, &out.transcript).map_err(|e| DriverError::Failed(e.to_string()))?;
    Ok(out)
}

/// Checks that the transcript was produced from exactly these sources.
pub fn check_transcript(sources: &Sources, t: &Transcript) -> Result<(), DriverError> {
    let stale = |why: String| {
        DriverError::Failed(format!("stale transcript: {why}; rerun `loopforge collect` on the same sources"))
    };
    for (name, text) in sources {
        let Some(u) = t.unit(name) else {
            return Err(stale(format!("unit {name} is not in the transcript")));
        };
        match &u.sha256 {
            Some(h) if *h == sha256_hex(text) => {}
            Some(_) => return Err(stale(format!("unit {name} changed since it was collected"))),
            None => return Err(stale(format!("unit {name} has no checksum"))),
        }
    }
    if let Some(u) = t.units.iter().find(|u| !sources.iter().any(|(n, _)| *n == u.unit)) {
        return Err(stale(format!("unit {} is in the transcript but was not given", u.unit)));
    }
    Ok(())
}

/// Entry point for whole-program runs: `main` if defined, otherwise the
/// first function no other function calls.
pub fn choose_entry(p: &MirProgram) -> Option<String> {
    let funcs: Vec<_> = p.units.iter().flat_map(|u| &u.functions).collect();
    if funcs.iter().any(|f| f.name == "main") {
        return Some("main".into());
    }
    let called: BTreeSet<&str> = funcs
        .iter()
        .flat_map(|f| f.blocks.iter().flat_map(|b| &b.stmts))
        .filter_map(|s| match s {
            Stmt::Call { callee, .. } => Some(callee.as_str()),
            _ => None,
        })
        .collect();
    funcs
        .iter()
        .find(|f| !called.contains(f.name.as_str()))
        .or(funcs.first())
        .map(|f| f.name.clone())
}

/// What synthesis made of one selected loop.
#[derive(Debug, Clone)]
pub enum CandidateOutcome {
    Accepted(Synthesized),
    /// Synthesized, but the estimate misses the speedup threshold.
    Rejected(Synthesized),
    Failed(SynthError),
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub loop_id: u32,
    pub function: String,
    pub outcome: CandidateOutcome,
}

/// Everything the synth stage produces, before it is written out.
#[derive(Debug, Clone)]
pub struct Build {
    pub entry: Option<String>,
    pub selection: SelectionReport,
    pub candidates: Vec<Candidate>,
    /// Accepted accelerators, in selection order.
    pub accelerators: Vec<FsmSpec>,
    pub patched: PatchedProgram,
    pub notices: Vec<String>,
    /// Output files by path relative to the output directory.
    pub files: BTreeMap<String, String>,
}

fn synthesize_candidate(program: &MirProgram, t: &Transcript, id: u32, cfg: &Config) -> Candidate {
    let rec = t.loop_by_id(id).expect("selected loop is in the transcript");
    let result = (|| {
        let f = program
            .function(&rec.function)
            .ok_or_else(|| SynthError::StaleLoop(format!("function '{}' not found", rec.function)))?;
        let header = rec
            .meta
            .as_ref()
            .map(|m| BlockId(m.header))
            .ok_or_else(|| SynthError::StaleLoop(format!("loop{id} has no header information")))?;
        if find_loops(f).by_header(header).is_none() {
            return Err(SynthError::StaleLoop(format!("loop{id}: no loop at bb{} in {}", header.0, rec.function)));
        }
        synthesize_loop(f, header, id, &cfg.model)
    })();
    Candidate {
        loop_id: id,
        function: rec.function.clone(),
        outcome: match result {
            Ok(s) if s.estimate.accepted => CandidateOutcome::Accepted(s),
            Ok(s) => CandidateOutcome::Rejected(s),
            Err(e) => CandidateOutcome::Failed(e),
        },
    }
}

/// Runs selection, synthesis, HDL emission and patching in memory.
pub fn build(sources: &Sources, t: &Transcript, cfg: &Config) -> Result<Build, DriverError> {
    cfg.validate().map_err(|e| DriverError::Usage(e.to_string()))?;
    check_transcript(sources, t)?;
    let compiled = compile(sources)?;
    let program = &compiled.program;
    let analysis = analyze_frequencies(t);
    let selection = rank_and_select(t, &analysis.freq, cfg.top_n, cfg.rank);
    let mut notices = analysis.notices.clone();
    notices.extend(selection.notices.iter().cloned());

    let candidates: Vec<Candidate> = selection
        .chosen
        .par_iter()
        .map(|&id| synthesize_candidate(program, t, id, cfg))
        .collect();
    let accelerators: Vec<FsmSpec> = candidates
        .iter()
        .filter_map(|c| match &c.outcome {
            CandidateOutcome::Accepted(s) => Some(s.fsm.clone()),
            _ => None,
        })
        .collect();
    for c in &candidates {
        match &c.outcome {
            CandidateOutcome::Rejected(s) => notices.push(format!(
                "loop{} rejected: {}",
                c.loop_id,
                s.estimate.reject_reason.as_deref().unwrap_or("estimate below threshold")
            )),
            CandidateOutcome::Failed(e) => notices.push(format!("loop{} not synthesized: {e}", c.loop_id)),
            CandidateOutcome::Accepted(_) => {}
        }
    }

    let patched = patch_program(program, &accelerators).map_err(|e| DriverError::Failed(e.to_string()))?;
    let patched_fns: BTreeSet<String> = accelerators.iter().map(|f| f.function.clone()).collect();
    let emitted = emit_c(&patched.program, &compiled.asts, &patched_fns, &patched.wrappers);
    compile(&emitted).map_err(|e| DriverError::Failed(format!("patched sources do not compile: {e}")))?;

    let entry = choose_entry(program);
    let mut files = BTreeMap::new();
    for (name, text) in sources {
        files.insert(format!("{SOURCES_DIR}/{name}"), text.clone());
    }
    for (name, text) in emitted {
        files.insert(format!("{PATCHED_DIR}/{name}"), text);
    }
    files.insert(CONFIG_FILE.into(), cfg.to_kv());

    let mut sel = selection.to_table();
    sel.push('\n');
    sel += &selection.to_lines();
    files.insert(SELECTION_FILE.into(), sel);

    let mut est = String::new();
    for c in &candidates {
        let p = format!("loop{}", c.loop_id);
        let _ = writeln!(est, "{p}.function={}", c.function);
        match &c.outcome {
            CandidateOutcome::Accepted(s) | CandidateOutcome::Rejected(s) => {
                let status = if s.estimate.accepted { "accepted" } else { "rejected" };
                let _ = writeln!(est, "{p}.status={status}");
                est += &s.estimate.to_kv(&p);
            }
            CandidateOutcome::Failed(e) => {
                let _ = writeln!(est, "{p}.status=failed");
                let _ = writeln!(est, "{p}.error={e}");
            }
        }
    }
    for n in &notices {
        let _ = writeln!(est, "note={n}");
    }
    files.insert(ESTIMATES_FILE.into(), est);

    let mut table = String::new();
    for fsm in &accelerators {
        let map = layout_registers(fsm);
        let (core, wrapper) = emit_verilog(fsm, &map);
        let check = check_accelerator(fsm, &map, &core, &wrapper);
        if !check.ok() {
            return Err(DriverError::Failed(format!(
                "{}: emitted HDL fails the structural check: {}",
                fsm.name,
                check.violations.join("; ")
            )));
        }
        let n = &fsm.name;
        let w = patched
            .wrappers
            .iter()
            .find(|(_, w)| w.loop_id == fsm.loop_id)
            .map(|(_, w)| w)
            .expect("wrapper for every accelerator");
        files.insert(format!("{n}_core.v"), core);
        files.insert(format!("{n}_wrapper.v"), wrapper);
        files.insert(format!("{n}_regmap.txt"), map.to_text());
        files.insert(format!("{n}.fsm"), fsm.to_text());
        files.insert(format!("{n}.fsm.json"), fsm.to_json() + "\n");
        files.insert(format!("{n}_wrapper.c"), w.to_text());
        let _ = writeln!(
            table,
            "{n} {} {n}_regmap.txt base=0x{:08X} fsm={n}.fsm.json core={n}_core.v wrapper={n}_wrapper.v",
            w.name,
            base_address(fsm.loop_id)
        );
    }
    files.insert(ACCEL_TABLE.into(), table);
    let bases: Vec<(u32, u32)> = accelerators.iter().map(|f| (f.loop_id, base_address(f.loop_id))).collect();
    files.insert(HOOKS_FILE.into(), platform_hooks_c(&bases));

    let mut manifest = String::from("# loopforge build manifest\n");
    if let Some(e) = &entry {
        let _ = writeln!(manifest, "entry={e}");
    }
    for (name, text) in sources {
        let _ = writeln!(manifest, "unit={name} sha256={}", sha256_hex(text));
    }
    for f in &accelerators {
        let _ = writeln!(manifest, "accelerator={}", f.name);
    }
    for k in files.keys() {
        let _ = writeln!(manifest, "file={k}");
    }
    files.insert(MANIFEST.into(), manifest);

    Ok(Build {
        entry,
        selection,
        candidates,
        accelerators,
        patched,
        notices,
        files,
    })
}

fn safe_relative(p: &str) -> bool {
    let path = Path::new(p);
    !p.is_empty() && path.is_relative() && path.components().all(|c| matches!(c, std::path::Component::Normal(_)))
}

/// Writes `files` below `out`, first removing whatever a previous build
/// listed in its manifest (and a previous verification report).
pub fn write_tree(out: &Path, files: &BTreeMap<String, String>) -> Result<(), DriverError> {
    if let Ok(old) = std::fs::read_to_string(out.join(MANIFEST)) {
        for f in old.lines().filter_map(|l| l.strip_prefix("file=")).filter(|f| safe_relative(f)) {
            let _ = std::fs::remove_file(out.join(f));
        }
    }
    let _ = std::fs::remove_file(out.join(VERIFY_REPORT));
    for (rel, text) in files {
        let path = out.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

/// The synth stage: reads the transcript, builds and writes everything.
pub fn synth(sources: &Sources, transcript: &Path, cfg: &Config, out: &Path) -> Result<Build, DriverError> {
    let text = std::fs::read_to_string(transcript)
        .map_err(|e| DriverError::Usage(format!("cannot read transcript {}: {e}", transcript.display())))?;
    let t = parse_transcript(&text).map_err(|e| DriverError::Failed(format!("{}: {e}", transcript.display())))?;
    let b = build(sources, &t, cfg)?;
    write_tree(out, &b.files)?;
    Ok(b)
}

/// One accelerator's files as found in an output directory.
#[derive(Debug, Clone)]
pub struct AccelFiles {
    pub name: String,
    pub fsm_json: String,
    pub regmap: String,
    pub core: String,
    pub wrapper: String,
}

/// The inputs of the verify stage, read back from an output directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub entry: Option<String>,
    pub config: String,
    pub sources: Sources,
    pub patched: Sources,
    pub accelerators: Vec<AccelFiles>,
}

impl Artifacts {
    /// The artifacts of an in-memory build.
    pub fn of_build(b: &Build) -> Artifacts {
        Artifacts::from_files(|p| b.files.get(p).cloned().ok_or_else(|| missing(p))).expect("complete build")
    }

    /// Reads the artifacts below `out`.
    pub fn load(out: &Path) -> Result<Artifacts, DriverError> {
        if !out.join(MANIFEST).is_file() {
            return Err(DriverError::Usage(format!(
                "{} holds no build; run `loopforge synth` first",
                out.display()
            )));
        }
        Artifacts::from_files(|p| std::fs::read_to_string(out.join(p)).map_err(|_| missing(p)))
    }

    fn from_files(read: impl Fn(&str) -> Result<String, DriverError>) -> Result<Artifacts, DriverError> {
        let manifest = read(MANIFEST)?;
        let mut entry = None;
        let mut units = Vec::new();
        let mut names = Vec::new();
        for l in manifest.lines() {
            if let Some(e) = l.strip_prefix("entry=") {
                entry = Some(e.to_string());
            } else if let Some(u) = l.strip_prefix("unit=") {
                units.push(u.split_whitespace().next().unwrap_or("").to_string());
            } else if let Some(a) = l.strip_prefix("accelerator=") {
                names.push(a.to_string());
            }
        }
        let load = |dir: &str| -> Result<Sources, DriverError> {
            units
                .iter()
                .map(|u| Ok((u.clone(), read(&format!("{dir}/{u}"))?)))
                .collect()
        };
        let accelerators = names
            .into_iter()
            .map(|n| {
                Ok(AccelFiles {
                    fsm_json: read(&format!("{n}.fsm.json"))?,
                    regmap: read(&format!("{n}_regmap.txt"))?,
                    core: read(&format!("{n}_core.v"))?,
                    wrapper: read(&format!("{n}_wrapper.v"))?,
                    name: n,
                })
            })
            .collect::<Result<Vec<_>, DriverError>>()?;
        Ok(Artifacts {
            entry,
            config: read(CONFIG_FILE)?,
            sources: load(SOURCES_DIR)?,
            patched: load(PATCHED_DIR)?,
            accelerators,
        })
    }
}

fn missing(p: &str) -> DriverError {
    DriverError::Usage(format!("missing build artifact '{p}'; rerun `loopforge synth`"))
}

/// Verification results for one accelerator.
#[derive(Debug, Clone)]
pub struct AccelVerdict {
    pub name: String,
    pub fsm: Option<FsmSpec>,
    /// Problems found before or instead of simulation.
    pub errors: Vec<String>,
    pub hdl: CheckReport,
    pub equivalence: Option<EquivReport>,
    /// Best and worst cycles per hyperblock visit from the estimate.
    pub bounds: (u64, u64),
    /// Whether every observed visit (loop-level and whole-program) lies
    /// within `bounds`.
    pub contained: bool,
    pub timing: Option<TimingReport>,
}

impl AccelVerdict {
    pub fn passed(&self) -> bool {
        self.errors.is_empty()
            && self.hdl.ok()
            && self.contained
            && self.equivalence.as_ref().is_some_and(|r| r.passed())
    }
}

/// Whole-program comparison of the patched program against the original.
#[derive(Debug, Clone, Default)]
pub struct ProgramVerdict {
    pub entry: Option<String>,
    pub trials: u32,
    pub redrawn: u32,
    pub inconclusive: u32,
    /// Mismatches with every accelerator reported absent.
    pub fallback_mismatches: Vec<String>,
    /// Mismatches with the accelerators simulated.
    pub accelerated_mismatches: Vec<String>,
    pub errors: Vec<String>,
}

impl ProgramVerdict {
    pub fn passed(&self) -> bool {
        self.fallback_mismatches.is_empty() && self.accelerated_mismatches.is_empty() && self.errors.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Verification {
    pub accelerators: Vec<AccelVerdict>,
    pub program: ProgramVerdict,
    /// The rendered report (also written to `verify_report.txt`).
    pub report: String,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.accelerators.iter().all(AccelVerdict::passed) && self.program.passed()
    }

    /// First problem found, for the error message.
    pub fn first_failure(&self) -> Option<String> {
        for a in &self.accelerators {
            if let Some(e) = a.errors.first() {
                return Some(format!("{}: {e}", a.name));
            }
            if let Some(c) = a.equivalence.as_ref().and_then(|r| r.mismatches.first()) {
                return Some(format!("{}: counterexample: {c}", a.name));
            }
            if !a.hdl.ok() {
                return Some(format!("{}: HDL: {}", a.name, a.hdl.violations.join("; ")));
            }
            if !a.contained {
                return Some(format!("{}: observed cycles outside the estimated bounds", a.name));
            }
        }
        let p = &self.program;
        p.errors
            .first()
            .or(p.fallback_mismatches.first())
            .or(p.accelerated_mismatches.first())
            .map(|m| format!("program: {m}"))
    }
}

/// Stream of the whole-program argument generator, kept apart from the
/// loop-level trials drawn from the same seed.
const PROGRAM_STREAM: u64 = 0x5EED_0F_A11;

enum ProgramTrial {
    Done {
        redraws: u32,
        fallback: Option<String>,
        accelerated: Option<String>,
        stats: BTreeMap<u32, AccelStats>,
        sw_cycles: BTreeMap<u32, u128>,
    },
    Inconclusive,
    Error(String),
}

fn program_trial(
    original: &MirProgram,
    patched: &MirProgram,
    fsms: &[FsmSpec],
    cfg: &Config,
    entry: &str,
    arity: usize,
    trial: u32,
) -> ProgramTrial {
    let limits = Limits {
        max_steps: cfg.max_steps,
        ..Limits::default()
    };
    let max_redraws = EquivConfig::default().max_redraws;
    for attempt in 0..=max_redraws {
        let mut rng = trial_rng(cfg.seed ^ PROGRAM_STREAM, trial, attempt);
        let args: Vec<i32> = (0..arity).map(|_| mixed_value(&mut rng)).collect();
        let c = match cosimulate(original, patched, fsms, &cfg.model, entry, &args, limits) {
            Ok(c) => c,
            Err(e) => return ProgramTrial::Error(e),
        };
        if matches!(c.original.ret, Err(Stop::StepLimit | Stop::DepthLimit)) {
            continue;
        }
        let fallback = match run_with_accelerators(patched, &[], entry, &args, limits) {
            Ok((r, _)) => (r.observation() != c.original.observation())
                .then(|| format!("{entry}{args:?}: fallback result {:?} vs original {:?}", r.ret, c.original.ret)),
            Err(e) => return ProgramTrial::Error(e),
        };
        let accelerated = c.difference().map(|d| format!("{entry}{args:?}: {d}"));
        return ProgramTrial::Done {
            redraws: attempt,
            fallback,
            accelerated,
            stats: c.reports.iter().map(|r| (r.loop_id, r.stats.clone())).collect(),
            sw_cycles: c.reports.iter().map(|r| (r.loop_id, r.sw_cycles)).collect(),
        };
    }
    ProgramTrial::Inconclusive
}

/// Checks every accelerator and the patched program; see the module docs.
pub fn verify_artifacts(a: &Artifacts, cfg: &Config) -> Result<Verification, DriverError> {
    cfg.validate().map_err(|e| DriverError::Usage(e.to_string()))?;
    let original = compile(&a.sources)?.program;
    let patched = compile(&a.patched)
        .map_err(|e| DriverError::Failed(format!("patched sources: {e}")))?
        .program;
    let equiv_cfg = EquivConfig {
        trials: cfg.trials,
        seed: cfg.seed,
        ..EquivConfig::default()
    };

    let mut verdicts: Vec<AccelVerdict> = a
        .accelerators
        .par_iter()
        .map(|files| {
            let mut v = AccelVerdict {
                name: files.name.clone(),
                fsm: None,
                errors: Vec::new(),
                hdl: CheckReport::default(),
                equivalence: None,
                bounds: (0, 0),
                contained: true,
                timing: None,
            };
            let fsm = match FsmSpec::from_json(&files.fsm_json) {
                Ok(f) => f,
                Err(e) => {
                    v.errors.push(format!("unreadable FSM file: {e}"));
                    return v;
                }
            };
            if let Err(e) = validate_fsm(&fsm) {
                v.errors.push(format!("FSM rejected by the validator: {e}"));
            }
            let map = layout_registers(&fsm);
            match RegisterMap::parse(&files.regmap) {
                Ok(m) if m == map => {}
                Ok(_) => v.errors.push("register map file does not match the FSM".into()),
                Err(e) => v.errors.push(format!("unreadable register map: {e}")),
            }
            v.hdl = check_accelerator(&fsm, &map, &files.core, &files.wrapper);
            v.bounds = fsm.cycle_bounds();
            match check_equivalence(&original, &fsm, &equiv_cfg) {
                Ok(r) => {
                    v.contained = r.within(v.bounds.0, v.bounds.1);
                    v.equivalence = Some(r);
                }
                Err(e) => v.errors.push(format!("cannot check equivalence: {e}")),
            }
            v.fsm = Some(fsm);
            v
        })
        .collect();

    // Whole-program runs use every accelerator that could be read.
    let fsms: Vec<FsmSpec> = verdicts.iter().filter_map(|v| v.fsm.clone()).collect();
    let mut program = ProgramVerdict {
        entry: a.entry.clone(),
        ..Default::default()
    };
    let mut stats: BTreeMap<u32, AccelStats> = BTreeMap::new();
    let mut sw: BTreeMap<u32, u128> = BTreeMap::new();
    match a.entry.as_deref().and_then(|e| original.function(e).map(|f| (e, f.params.len()))) {
        None => program.errors.push("no entry function for whole-program runs".into()),
        Some((entry, arity)) => {
            let outcomes: Vec<ProgramTrial> = (0..cfg.program_trials)
                .into_par_iter()
                .map(|t| program_trial(&original, &patched, &fsms, cfg, entry, arity, t))
                .collect();
            program.trials = cfg.program_trials;
            for o in outcomes {
                match o {
                    ProgramTrial::Done {
                        redraws,
                        fallback,
                        accelerated,
                        stats: s,
                        sw_cycles,
                    } => {
                        program.redrawn += (redraws > 0) as u32;
                        program.fallback_mismatches.extend(fallback);
                        program.accelerated_mismatches.extend(accelerated);
                        for (id, st) in s {
                            stats.entry(id).or_default().merge(&st);
                        }
                        for (id, c) in sw_cycles {
                            *sw.entry(id).or_default() += c;
                        }
                    }
                    ProgramTrial::Inconclusive => program.inconclusive += 1,
                    ProgramTrial::Error(e) => {
                        if !program.errors.contains(&e) {
                            program.errors.push(e)
                        }
                    }
                }
            }
        }
    }
    for v in &mut verdicts {
        let Some(fsm) = &v.fsm else { continue };
        let st = stats.remove(&fsm.loop_id).unwrap_or_default();
        v.contained &= st.within(v.bounds.0, v.bounds.1);
        v.timing = Some(TimingReport::new(fsm, st, sw.remove(&fsm.loop_id).unwrap_or(0), &cfg.model));
    }
    let mut ver = Verification {
        accelerators: verdicts,
        program,
        report: String::new(),
    };
    ver.report = render_report(&ver, cfg);
    Ok(ver)
}

fn render_report(v: &Verification, cfg: &Config) -> String {
    let mut s = String::from("# loopforge verification report\n");
    let _ = writeln!(s, "seed={}", cfg.seed);
    let _ = writeln!(s, "trials={}", cfg.trials);
    let _ = writeln!(s, "program_trials={}", cfg.program_trials);
    let _ = writeln!(s, "entry={}", v.program.entry.as_deref().unwrap_or("-"));
    let _ = writeln!(s, "accelerators={}", v.accelerators.len());
    for a in &v.accelerators {
        let n = &a.name;
        let _ = writeln!(s, "\n== {n} ==");
        if let Some(t) = &a.timing {
            s += &t.to_table();
            s.push('\n');
            s += &t.to_kv();
        }
        if let Some(r) = &a.equivalence {
            s += &r.to_kv();
        }
        let _ = writeln!(s, "{n}.estimated_min_cycles={}", a.bounds.0);
        let _ = writeln!(s, "{n}.estimated_max_cycles={}", a.bounds.1);
        let _ = writeln!(s, "{n}.cycles_within_estimate={}", a.contained as u8);
        let _ = writeln!(s, "{n}.hdl_violations={}", a.hdl.violations.len());
        for h in &a.hdl.violations {
            let _ = writeln!(s, "{n}.hdl_violation={h}");
        }
        for e in &a.errors {
            let _ = writeln!(s, "{n}.error={e}");
        }
        let _ = writeln!(s, "{n}.status={}", if a.passed() { "pass" } else { "fail" });
    }
    let p = &v.program;
    s += "\n== program ==\n";
    let _ = writeln!(s, "program.trials={}", p.trials);
    let _ = writeln!(s, "program.redrawn={}", p.redrawn);
    let _ = writeln!(s, "program.inconclusive={}", p.inconclusive);
    let _ = writeln!(s, "program.fallback_mismatches={}", p.fallback_mismatches.len());
    let _ = writeln!(s, "program.accelerated_mismatches={}", p.accelerated_mismatches.len());
    for m in p.fallback_mismatches.iter().chain(&p.accelerated_mismatches).chain(&p.errors) {
        let _ = writeln!(s, "program.problem={m}");
    }
    let _ = writeln!(s, "status={}", if v.passed() { "pass" } else { "fail" });
    s
}

/// The effective configuration of a build directory: its recorded
/// configuration with `overrides` applied on top.
pub fn build_config(a: &Artifacts, overrides: &[(String, String)]) -> Result<Config, DriverError> {
    let mut cfg = Config::default();
    cfg.apply_text(&a.config)
        .map_err(|e| DriverError::Failed(format!("{CONFIG_FILE}: {e}")))?;
    for (k, v) in overrides {
        cfg.set(k, v).map_err(|e| DriverError::Usage(e.to_string()))?;
    }
    Ok(cfg)
}

/// The verify stage: checks the build in `out` and writes the report.
pub fn verify(out: &Path, overrides: &[(String, String)]) -> Result<Verification, DriverError> {
    let a = Artifacts::load(out)?;
    let cfg = build_config(&a, overrides)?;
    let v = verify_artifacts(&a, &cfg)?;
    let path = out.join(VERIFY_REPORT);
    std::fs::write(&path, &v.report).map_err(|e| io_err(&path, e))?;
    Ok(v)
}

/// The report stage: selection, estimates and (if present) verification.
pub fn report(out: &Path) -> Result<String, DriverError> {
    if !out.join(MANIFEST).is_file() {
        return Err(DriverError::Usage(format!(
            "{} holds no build; run `loopforge synth` first",
            out.display()
        )));
    }
    let read = |f: &str| std::fs::read_to_string(out.join(f)).map_err(|_| missing(f));
    let mut s = String::from("== selection ==\n");
    s += &read(SELECTION_FILE)?;
    s += "\n== estimates ==\n";
    s += &read(ESTIMATES_FILE)?;
    s += "\n== accelerators ==\n";
    s += &read(ACCEL_TABLE)?;
    s += "\n== verification ==\n";
    match std::fs::read_to_string(out.join(VERIFY_REPORT)) {
        Ok(r) => s += &r,
        Err(_) => s += "not verified yet; run `loopforge verify`\n",
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT1: &str = include_str!("../../../../corpus/listings/unit1.c");
    const UNIT2: &str = include_str!("../../../../corpus/listings/unit2.c");

    fn listings() -> Sources {
        vec![("unit1.c".into(), UNIT1.into()), ("unit2.c".into(), UNIT2.into())]
    }

    fn quick() -> Config {
        Config {
            trials: 200,
            program_trials: 4,
            ..Config::default()
        }
    }

    #[test]
    fn collect_is_idempotent_for_unchanged_sources() {
        let a = collect_into(&listings(), Transcript::new(), 1000).unwrap().transcript;
        let b = collect_into(&listings(), a.clone(), 1000).unwrap().transcript;
        assert_eq!(a, b);
        let ids: Vec<u32> = a.loops().map(|l| l.loop_id).collect();
        assert_eq!(ids, vec![1, 2, 3]);
    }

    #[test]
    fn edited_unit_is_replaced_with_fresh_ids() {
        let a = collect_into(&listings(), Transcript::new(), 1000).unwrap().transcript;
        let mut s = listings();
        s[0].1 = s[0].1.replace("i<30", "i<31");
        let b = collect_into(&s, a.clone(), 1000).unwrap().transcript;
        assert_eq!(b.unit("unit2.c"), a.unit("unit2.c"));
        let ids: Vec<u32> = b.unit("unit1.c").unwrap().loops.iter().map(|l| l.loop_id).collect();
        assert_eq!(ids, vec![4, 5]);
    }

    #[test]
    fn syntax_error_aborts_collect() {
        let mut s = listings();
        s[1].1.push_str("int broken( {");
        let e = collect_into(&s, Transcript::new(), 1000).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().starts_with("unit2.c:"), "{e}");
    }

    #[test]
    fn stale_transcript_is_refused() {
        let t = collect_into(&listings(), Transcript::new(), 1000).unwrap().transcript;
        let mut s = listings();
        s[1].1 = s[1].1.replace("200", "300");
        let e = build(&s, &t, &quick()).unwrap_err();
        assert!(e.to_string().contains("stale transcript"), "{e}");
    }

    #[test]
    fn listings_build_synthesizes_only_loop3() {
        let t = collect_into(&listings(), Transcript::new(), 1000).unwrap().transcript;
        let mut cfg = quick();
        cfg.set("min_speedup", "0").unwrap();
        let b = build(&listings(), &t, &cfg).unwrap();
        assert_eq!(b.selection.chosen, vec![3]);
        assert_eq!(b.accelerators.len(), 1);
        assert_eq!(b.entry.as_deref(), Some("fun1"));
        for f in ["loop3_core.v", "loop3_wrapper.v", "loop3_regmap.txt", "loop3.fsm", "loop3.fsm.json", "patched/unit2.c"] {
            assert!(b.files.contains_key(f), "{f}");
        }
        assert!(b.files["patched/unit2.c"].contains("__accel_call_3"));
        assert!(b.files[ACCEL_TABLE].starts_with("loop3 __accel_call_3 loop3_regmap.txt"));
        // Same inputs, same files.
        let again = build(&listings(), &t, &cfg).unwrap();
        assert_eq!(b.files, again.files);

        let v = verify_artifacts(&Artifacts::of_build(&b), &cfg).unwrap();
        assert!(v.passed(), "{}", v.report);
        let timing = v.accelerators[0].timing.as_ref().unwrap();
        assert_eq!(timing.transfers_per_call(), Some(4));
    }

    #[test]
    fn corrupted_fsm_fails_verification_with_counterexample() {
        let t = collect_into(&listings(), Transcript::new(), 1000).unwrap().transcript;
        let mut cfg = quick();
        cfg.set("min_speedup", "0").unwrap();
        let b = build(&listings(), &t, &cfg).unwrap();
        let mut a = Artifacts::of_build(&b);
        let bad = crate::synth::fsm::faults::swap_exit_ids(&b.accelerators[0]).unwrap();
        a.accelerators[0].fsm_json = bad.to_json();
        let v = verify_artifacts(&a, &cfg).unwrap();
        assert!(!v.passed());
        assert!(v.first_failure().unwrap().contains("counterexample"), "{:?}", v.first_failure());
    }

    #[test]
    fn default_threshold_rejects_fun3_with_a_reason() {
        let t = collect_into(&listings(), Transcript::new(), 1000).unwrap().transcript;
        let mut cfg = quick();
        cfg.set("min_speedup", "1000").unwrap();
        let b = build(&listings(), &t, &cfg).unwrap();
        assert!(b.accelerators.is_empty());
        assert!(b.files[ESTIMATES_FILE].contains("loop3.status=rejected"));
        assert!(b.notices.iter().any(|n| n.starts_with("loop3 rejected")), "{:?}", b.notices);
    }

    #[test]
    fn entry_prefers_main_then_first_root() {
        let p = compile(&vec![("a.c".into(), "int g(int x){return x;} int f(int a){return g(a);}".into())])
            .unwrap()
            .program;
        assert_eq!(choose_entry(&p).as_deref(), Some("f"));
        let p = compile(&vec![("a.c".into(), "int f(int a){return a;} int main(int a, int b){return f(a);}".into())])
            .unwrap()
            .program;
        assert_eq!(choose_entry(&p).as_deref(), Some("main"));
    }
}
