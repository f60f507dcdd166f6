//! Acceptance checks for the whole tool chain, one per criterion, each
//! printing a PASS or FAIL line. Runs as a plain binary (no test harness)
//! so the lines always appear in the output; the process fails if any
//! criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;

use loopforge::analyzer::{analyze_frequencies, rank_and_select, RankKey};
use loopforge::collector::{parse_transcript, Transcript};
use loopforge::driver::{self, Artifacts, Build, Config, Sources, Verification};
use loopforge::hdl::{check_accelerator, emit_verilog, layout_registers, Role};
use loopforge::ir::loops::find_loops;
use loopforge::synth::{synthesize_loop, CostModel, FsmSpec};
use loopforge::verify::cosim::TimingReport;
use loopforge::verify::equivalence::{run_fault_suite, Detection};
use loopforge::verify::{check_equivalence, EquivConfig};

/// Expected transcript body for the two example units in corpus/listings.
const EXAMPLE_TRANSCRIPT: &str = "\
unit1.c
function=fun2
loop1
count=29
call=1
well_nested=0
-fun3
function=fun1
loop2
count=9
call=1
well_nested=0
-fun2

unit2.c
function=fun3
loop3
count=99
call=0
well_nested=1
";

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn read_dir_sources(dir: &Path) -> Sources {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "c"))
        .collect();
    files.sort();
    driver::read_sources(&files).unwrap()
}

fn listings() -> Sources {
    let d = corpus_dir().join("listings");
    let files = [d.join("unit1.c"), d.join("unit2.c")];
    driver::read_sources(&files).unwrap()
}

/// Every corpus program: the listings plus each directory under
/// `corpus/programs`, sorted by name.
fn corpus() -> Vec<(String, Sources)> {
    let mut v = vec![("listings".to_string(), listings())];
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(corpus_dir().join("programs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for d in dirs {
        v.push((d.file_name().unwrap().to_string_lossy().into_owned(), read_dir_sources(&d)));
    }
    v
}

/// Configuration for corpus builds: all loops a program offers, no
/// speedup threshold, so every synthesizable loop gets an accelerator.
fn corpus_config() -> Config {
    let mut c = Config::default();
    c.set("top_n", "16").unwrap();
    c.set("min_speedup", "0").unwrap();
    c.set("trials", "1000").unwrap();
    c.set("program_trials", "200").unwrap();
    c
}

fn transcript_of(sources: &Sources, cfg: &Config) -> Transcript {
    driver::collect_into(sources, Transcript::new(), cfg.default_loop_count)
        .unwrap()
        .transcript
}

struct Program {
    name: String,
    sources: Sources,
    build: Build,
    verification: Option<Verification>,
}

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion_1() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("transcript.txt");
    let start = Instant::now();
    driver::collect(&listings(), &path, Config::default().default_loop_count).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    check(body == EXAMPLE_TRANSCRIPT, || format!("transcript body differs:\n{body}"))?;
    check(text.starts_with("# "), || "missing checksum header".into())?;
    check(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("byte-exact after dropping {} header lines, {elapsed:?}", text.lines().count() - EXAMPLE_TRANSCRIPT.lines().count()))
}

fn criterion_2() -> Outcome {
    let t = parse_transcript(EXAMPLE_TRANSCRIPT).map_err(|e| e.to_string())?;
    let a = analyze_frequencies(&t);
    let sel = rank_and_select(&t, &a.freq, 1, RankKey::Total);
    check(sel.chosen == vec![3], || format!("chose {:?}", sel.chosen))?;
    for id in [1, 2] {
        let e = sel.entries.iter().find(|e| e.loop_id == id).unwrap();
        check(!e.eligible && e.reason.as_deref() == Some("contains call"), || {
            format!("loop{id}: eligible={} reason={:?}", e.eligible, e.reason)
        })?;
    }
    // fun1 is the root, fun2 runs 10 times, fun3 300 times; loop3 makes
    // 100 trips per call.
    let l3 = sel.entries.iter().find(|e| e.loop_id == 3).unwrap();
    check(l3.total == 300 * 100, || format!("loop3 total {}", l3.total))?;
    Ok("chosen=[loop3], loop1/loop2 'contains call', loop3 total=30000".into())
}

fn criterion_3(programs: &[Program]) -> Outcome {
    let cfg = EquivConfig {
        trials: 1000,
        seed: 1,
        ..EquivConfig::default()
    };
    let multi_unit = programs.iter().filter(|p| p.name != "listings" && p.sources.len() >= 2).count();
    check(multi_unit >= 11, || format!("only {multi_unit} multi-unit programs"))?;
    check(programs.iter().any(|p| p.name == "los" && !p.build.accelerators.is_empty()), || {
        "no line-of-sight accelerator".into()
    })?;
    check(
        programs
            .iter()
            .any(|p| p.name == "listings" && p.build.accelerators.iter().any(|f| f.function == "fun3")),
        || "no accelerator for fun3".into(),
    )?;
    let start = Instant::now();
    let mut accels = 0;
    let mut trials = 0u64;
    for p in programs {
        let original = driver::compile(&p.sources).map_err(|e| e.to_string())?.program;
        for fsm in &p.build.accelerators {
            let r = check_equivalence(&original, fsm, &cfg)?;
            check(r.passed(), || format!("{}/{}: {}", p.name, fsm.name, r.mismatches[0]))?;
            check(r.inconclusive == 0, || format!("{}/{}: {} inconclusive trials", p.name, fsm.name, r.inconclusive))?;
            accels += 1;
            trials += r.trials as u64;
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("{accels} accelerators in {} programs, {trials} trials, 0 mismatches, {elapsed:.2?}", programs.len()))
}

fn criterion_4(programs: &[Program]) -> Outcome {
    let mut dispatch_exits = 0;
    let mut runs = 0;
    for p in programs {
        let v = p.verification.as_ref().unwrap();
        let pv = &v.program;
        check(pv.trials == 200, || format!("{}: {} trials", p.name, pv.trials))?;
        check(pv.errors.is_empty(), || format!("{}: {}", p.name, pv.errors[0]))?;
        check(pv.inconclusive == 0, || format!("{}: {} inconclusive", p.name, pv.inconclusive))?;
        check(pv.fallback_mismatches.is_empty(), || format!("{}: fallback {}", p.name, pv.fallback_mismatches[0]))?;
        check(pv.accelerated_mismatches.is_empty(), || {
            format!("{}: accelerated {}", p.name, pv.accelerated_mismatches[0])
        })?;
        runs += 2 * pv.trials;
        // Calls leaving through an exit other than the first go through
        // the second or later test of the dispatch chain.
        for a in &v.accelerators {
            let t = a.timing.as_ref().unwrap();
            dispatch_exits += t.stats.exits.iter().filter(|(id, _)| **id >= 2).map(|(_, n)| n).sum::<u64>();
        }
    }
    let multi = programs
        .iter()
        .flat_map(|p| &p.build.accelerators)
        .filter(|f| f.exits.len() >= 2)
        .count();
    check(multi >= 3, || format!("only {multi} accelerators with two or more exits"))?;
    check(dispatch_exits > 0, || "no call took a later dispatch exit".into())?;
    Ok(format!(
        "{runs} whole-program runs (200 fallback + 200 accelerated per program), 0 mismatches; {multi} multi-exit accelerators, {dispatch_exits} calls through later dispatch tests"
    ))
}

fn criterion_5(programs: &[Program]) -> Outcome {
    let mut checked = 0;
    for p in programs {
        for a in &p.verification.as_ref().unwrap().accelerators {
            check(a.contained, || format!("{}/{}: observed cycles outside {:?}", p.name, a.name, a.bounds))?;
            let r = a.equivalence.as_ref().unwrap();
            if let Some((lo, hi)) = r.visit_cycles {
                check(a.bounds.0 <= lo && hi <= a.bounds.1, || format!("{}/{}", p.name, a.name))?;
            }
            let t = a.timing.as_ref().unwrap();
            if let Some((lo, hi)) = t.stats.visit_cycles {
                check(a.bounds.0 <= lo && hi <= a.bounds.1, || format!("{}/{}", p.name, a.name))?;
            }
            checked += r.total_visits + t.stats.visits;
        }
    }
    Ok(format!("{checked} iterations observed, all within [best, worst]"))
}

fn criterion_6(programs: &[Program]) -> Outcome {
    let p = programs.iter().find(|p| p.name == "los").ok_or("no los program")?;
    let fsm = p
        .build
        .accelerators
        .iter()
        .find(|f| f.function == "line_of_sight")
        .ok_or("line_of_sight loop not synthesized")?;
    let map = layout_registers(fsm);
    let inputs: Vec<u32> = map.inputs().map(|e| e.offset).collect();
    let outputs: Vec<u32> = map.outputs().map(|e| e.offset).collect();
    check(inputs.len() == 11, || format!("{} inputs", inputs.len()))?;
    check(outputs.len() == 1, || format!("{} outputs", outputs.len()))?;
    check(inputs == (0..11).map(|k| 0x10 + 4 * k).collect::<Vec<u32>>(), || format!("{inputs:?}"))?;
    check(outputs == vec![0x3C] && map.bb_idx().offset == 0x40, || "output/bb_idx offsets".into())?;
    check(
        map.entries.iter().filter(|e| e.role == Role::BbIdx).count() == 1,
        || "bb_idx count".into(),
    )?;
    Ok(format!(
        "11 inputs @0x10..0x38, 1 output @0x3C, bb_idx @0x40 ({} FSM states, reported only)",
        fsm.state_count()
    ))
}

fn criterion_7(programs: &[Program]) -> Outcome {
    let m = CostModel::default();
    check(
        m.f_cpu_hz == 666_000_000 && m.f_accel_hz == 333_000_000 && m.reg_access_cycles == 14,
        || "default clock parameters changed".into(),
    )?;
    // 12 transfers at 14 cycles each on a 333 MHz accelerator clock.
    let probe = &programs[0].build.accelerators[0];
    let stats = loopforge::verify::cosim::AccelStats {
        calls: 1,
        transfers: 12,
        ..Default::default()
    };
    let r = TimingReport::new(probe, stats, 0, &m);
    check(r.transfer_latency == rat(168) / rat(333_000_000), || format!("{}", r.transfer_latency))?;
    let mut reports = 0;
    for p in programs {
        for a in &p.verification.as_ref().unwrap().accelerators {
            let t = a.timing.as_ref().unwrap();
            let transfers = t.stats.transfers as i64;
            check(t.transfer_latency == rat(transfers * 14) / rat(333_000_000), || format!("{}/{}", p.name, a.name))?;
            check(t.sw_time == rat(t.sw_cycles as i64) / rat(666_000_000), || format!("{}/{} sw", p.name, a.name))?;
            check(t.hw_time == &t.call_overhead + &t.compute, || format!("{}/{} hw", p.name, a.name))?;
            if let Some(rp) = &t.relative_performance {
                check(rp * &t.hw_time == t.sw_time, || format!("{}/{} identity", p.name, a.name))?;
                check(*rp == &t.sw_time / &t.hw_time, || format!("{}/{} ratio", p.name, a.name))?;
            }
            if p.name == "listings" {
                check(t.transfers_per_call() == Some(4), || format!("fun3: {:?} transfers per call", t.transfers_per_call()))?;
            }
            reports += 1;
        }
    }
    Ok(format!(
        "12x14/333 MHz = {} s exactly; {reports} reports satisfy the identities; fun3 uses 4 transfers per call",
        r.transfer_latency
    ))
}

fn criterion_8(programs: &[Program]) -> Outcome {
    let mut counts = BTreeMap::new();
    for p in programs {
        let mut cfg = corpus_config();
        let t = transcript_of(&p.sources, &cfg);
        let again = driver::build(&p.sources, &t, &cfg).map_err(|e| format!("{}: {e}", p.name))?;
        check(again.files == p.build.files, || format!("{}: rebuild differs", p.name))?;
        cfg.set("seed", "987654321").unwrap();
        let other = driver::build(&p.sources, &t, &cfg).map_err(|e| format!("{}: {e}", p.name))?;
        let names = |b: &Build| b.accelerators.iter().map(|f| f.name.clone()).collect::<Vec<_>>();
        check(names(&other) == names(&p.build), || format!("{}: accelerators depend on the seed", p.name))?;
        check(p.verification.as_ref().unwrap().passed(), || format!("{}: verification failed", p.name))?;
        counts.insert(p.name.clone(), p.build.accelerators.len());
    }
    let total: usize = counts.values().sum();
    Ok(format!("{} programs end to end, {total} accelerators, identical across runs and seeds: {counts:?}", counts.len()))
}

fn criterion_9(programs: &[Program]) -> Outcome {
    let mut n = 0;
    for p in programs {
        for fsm in &p.build.accelerators {
            let map = layout_registers(fsm);
            let core = &p.build.files[&format!("{}_core.v", fsm.name)];
            let wrapper = &p.build.files[&format!("{}_wrapper.v", fsm.name)];
            let r = check_accelerator(fsm, &map, core, wrapper);
            check(r.ok(), || format!("{}/{}: {}", p.name, fsm.name, r.violations.join("; ")))?;
            check((core.clone(), wrapper.clone()) == emit_verilog(fsm, &map), || {
                format!("{}/{}: emission not deterministic", p.name, fsm.name)
            })?;
            n += 1;
        }
    }
    Ok(format!("{n} accelerators: core ports and wrapper decoders match, 0 violations"))
}

fn criterion_10(programs: &[Program]) -> Outcome {
    let cfg = EquivConfig {
        trials: 1000,
        seed: 1,
        ..EquivConfig::default()
    };
    let mut by_kind: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut run = |program: &loopforge::ir::MirProgram, fsm: &FsmSpec, model: &CostModel, label: &str| -> Result<(), String> {
        for o in run_fault_suite(program, fsm, model, &cfg)? {
            let kind = if o.fault.starts_with("swap") { "swapped exits" } else { "dropped dependence" };
            let e = by_kind.entry(kind).or_default();
            e.0 += 1;
            match o.detection {
                Some(Detection::Validator(_)) | Some(Detection::Counterexample(_)) => e.1 += 1,
                None => return Err(format!("{label}: fault '{}' went undetected", o.fault)),
            }
        }
        Ok(())
    };
    let model = corpus_config().model;
    for p in programs {
        let original = driver::compile(&p.sources).map_err(|e| e.to_string())?.program;
        for fsm in &p.build.accelerators {
            run(&original, fsm, &model, &format!("{}/{}", p.name, fsm.name))?;
        }
    }
    // A tight clock budget forces multi-state schedules, where a missing
    // dependence changes the placement of an operation.
    let tight = CostModel {
        clock_budget: 2,
        ..CostModel::default()
    };
    for p in programs.iter().filter(|p| p.name == "listings" || p.name == "los") {
        let original = driver::compile(&p.sources).map_err(|e| e.to_string())?.program;
        for fsm in &p.build.accelerators {
            let f = original.function(&fsm.function).unwrap();
            let header = find_loops(f).by_header(loopforge::ir::BlockId(fsm.header_block)).unwrap().header;
            let s = synthesize_loop(f, header, fsm.loop_id, &tight).map_err(|e| e.to_string())?;
            run(&original, &s.fsm, &tight, &format!("{}/{} (budget 2)", p.name, fsm.name))?;
        }
    }
    for kind in ["swapped exits", "dropped dependence"] {
        check(by_kind.get(kind).is_some_and(|(n, _)| *n > 0), || format!("no '{kind}' faults in the suite"))?;
    }
    let (total, caught) = by_kind.values().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(format!("{caught}/{total} faults detected {by_kind:?}"))
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "transcript reproduction", criterion_1()));
    results.push((2, "selection", criterion_2()));

    let cfg = corpus_config();
    let mut programs = Vec::new();
    let mut setup_error = None;
    for (name, sources) in corpus() {
        let t = transcript_of(&sources, &cfg);
        match driver::build(&sources, &t, &cfg) {
            Ok(build) => programs.push(Program {
                name,
                sources,
                build,
                verification: None,
            }),
            Err(e) => setup_error = Some(format!("{name}: {e}")),
        }
    }
    if setup_error.is_none() {
        for p in &mut programs {
            match driver::verify_artifacts(&Artifacts::of_build(&p.build), &cfg) {
                Ok(v) => p.verification = Some(v),
                Err(e) => setup_error = Some(format!("{}: {e}", p.name)),
            }
        }
    }
    let corpus_criteria: [(u32, &str, fn(&[Program]) -> Outcome); 8] = [
        (3, "oracle equivalence", criterion_3),
        (4, "patch semantics", criterion_4),
        (5, "cycle-bound containment", criterion_5),
        (6, "line-of-sight interface", criterion_6),
        (7, "timing-report arithmetic", criterion_7),
        (8, "generality", criterion_8),
        (9, "HDL structural fidelity", criterion_9),
        (10, "fault detection", criterion_10),
    ];
    for (n, name, f) in corpus_criteria {
        let r = match &setup_error {
            Some(e) => Err(format!("corpus build failed: {e}")),
            None => f(&programs),
        };
        results.push((n, name, r));
    }

    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(detail) => println!("criterion {n:>2} ({name}): PASS - {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} ({name}): FAIL - {why}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1?}",
        results.len() - failed,
        started.elapsed()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
