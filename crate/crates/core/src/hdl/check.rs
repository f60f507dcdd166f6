//! A small structural scanner for the emitted Verilog: it re-reads the
//! core's port declarations and the wrapper's read decoder and compares
//! them with what the FSM and register map require.

use std::collections::BTreeMap;

use super::regmap::RegisterMap;
use super::verilog::{DECODER_BEGIN, DECODER_END};
use super::{core_ports, CorePort, PortDir};
use crate::synth::fsm::FsmSpec;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckReport {
    pub violations: Vec<String>,
}

impl CheckReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Port declarations of `module <name> ( ... );`.
pub fn scan_module_ports(text: &str, module: &str) -> Result<Vec<CorePort>, String> {
    let head = format!("module {module} (");
    let mut lines = text.lines().skip_while(|l| l.trim() != head);
    if lines.next().is_none() {
        return Err(format!("module '{module}' not found"));
    }
    let mut ports = Vec::new();
    for line in lines {
        let t = line.trim();
        if t == ");" {
            return Ok(ports);
        }
        let t = t.trim_end_matches(',');
        let mut toks = t.split_whitespace().peekable();
        let dir = match toks.next() {
            Some("input") => PortDir::Input,
            Some("output") => PortDir::Output,
            other => return Err(format!("unexpected token {other:?} in port list")),
        };
        let registered = match toks.peek().copied() {
            Some("reg") => {
                toks.next();
                true
            }
            Some("wire") => {
                toks.next();
                false
            }
            _ => false,
        };
        let mut width = 1;
        if let Some(r) = toks.peek().and_then(|t| t.strip_prefix('[')).and_then(|t| t.strip_suffix(":0]")) {
            width = r.parse::<u32>().map_err(|_| format!("bad range in '{t}'"))? + 1;
            toks.next();
        }
        let name = toks.next().ok_or_else(|| format!("missing port name in '{t}'"))?;
        if toks.next().is_some() {
            return Err(format!("trailing tokens in '{t}'"));
        }
        ports.push(CorePort {
            dir,
            width,
            name: name.to_string(),
            registered,
        });
    }
    Err(format!("port list of '{module}' is not terminated"))
}

/// `(offset, name)` pairs of the wrapper's read decoder.
pub fn scan_decoder(text: &str) -> Result<Vec<(u32, String)>, String> {
    let mut inside = false;
    let mut seen_end = false;
    let mut out = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if t == DECODER_BEGIN {
            inside = true;
            continue;
        }
        if t == DECODER_END {
            seen_end = inside;
            break;
        }
        if !inside {
            continue;
        }
        let Some(rest) = t.strip_prefix("12'h") else { continue };
        let (hex, tail) = rest.split_once(':').ok_or_else(|| format!("malformed decoder line '{t}'"))?;
        let offset = u32::from_str_radix(hex, 16).map_err(|_| format!("bad offset in '{t}'"))?;
        let (_, name) = tail.split_once("//").ok_or_else(|| format!("decoder line without name: '{t}'"))?;
        out.push((offset, name.trim().to_string()));
    }
    if !seen_end {
        return Err("read decoder markers not found".into());
    }
    Ok(out)
}

/// Verifies that the core's ports match the FSM and that the wrapper
/// decodes exactly the register map, each name once.
pub fn check_accelerator(f: &FsmSpec, map: &RegisterMap, core: &str, wrapper: &str) -> CheckReport {
    let mut v = Vec::new();
    match scan_module_ports(core, &format!("{}_core", f.name)) {
        Ok(found) => {
            let want = core_ports(f);
            if found != want {
                let show = |ps: &[CorePort]| {
                    ps.iter()
                        .map(|p| format!("{:?}[{}] {}", p.dir, p.width, p.name))
                        .collect::<Vec<_>>()
                        .join(", ")
                };
                v.push(format!("core ports differ: found {} ; expected {}", show(&found), show(&want)));
            }
        }
        Err(e) => v.push(format!("core: {e}")),
    }
    if let Err(e) = map.check() {
        v.push(format!("register map: {e}"));
    }
    match scan_decoder(wrapper) {
        Ok(dec) => {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for (_, n) in &dec {
                *counts.entry(n.as_str()).or_default() += 1;
            }
            for e in &map.entries {
                match counts.get(e.name.as_str()) {
                    Some(1) => {}
                    Some(n) => v.push(format!("'{}' decoded {n} times", e.name)),
                    None => v.push(format!("'{}' is not decoded", e.name)),
                }
            }
            let want: Vec<(u32, String)> = map.entries.iter().map(|e| (e.offset, e.name.clone())).collect();
            if dec != want {
                v.push(format!("decoder {dec:?} differs from register map {want:?}"));
            }
        }
        Err(e) => v.push(format!("wrapper: {e}")),
    }
    let inst = format!("{}_core core (", f.name);
    if !wrapper.contains(&inst) {
        v.push("wrapper does not instantiate the core".into());
    } else {
        for p in core_ports(f) {
            if !wrapper.contains(&format!(".{}(", p.name)) {
                v.push(format!("wrapper leaves core port '{}' unconnected", p.name));
            }
        }
    }
    CheckReport { violations: v }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdl::{emit_verilog, layout_registers};
    use crate::synth::fsm::tests::fsm_for;
    use crate::synth::CostModel;

    const UNIT2: &str = include_str!("../../../../corpus/listings/unit2.c");

    #[test]
    fn fun3_emission_passes() {
        let f = fsm_for(UNIT2, "fun3", &CostModel::default());
        let map = layout_registers(&f);
        let (core, wrapper) = emit_verilog(&f, &map);
        let r = check_accelerator(&f, &map, &core, &wrapper);
        assert!(r.ok(), "{:?}", r.violations);
        let ports = scan_module_ports(&core, "loop1_core").unwrap();
        let data: Vec<&str> = ports.iter().filter(|p| p.width == 32).map(|p| p.name.as_str()).collect();
        assert_eq!(data, vec!["a", "b", "a_out", "bb_idx"]);
        assert_eq!(emit_verilog(&f, &map), (core, wrapper));
    }

    #[test]
    fn memory_loop_gets_stub_ports() {
        let f = fsm_for("int A[8]; void f(int v){ for(int i=0;i<8;i++) A[i]=v*i; }", "f", &CostModel::default());
        let map = layout_registers(&f);
        let (core, wrapper) = emit_verilog(&f, &map);
        assert!(check_accelerator(&f, &map, &core, &wrapper).ok());
        assert!(core.contains("input wire [31:0] mem_rdata"));
    }

    #[test]
    fn tampered_wrapper_is_caught() {
        let f = fsm_for(UNIT2, "fun3", &CostModel::default());
        let map = layout_registers(&f);
        let (core, wrapper) = emit_verilog(&f, &map);
        let dropped = wrapper.replace("// b\n", "// a\n");
        let r = check_accelerator(&f, &map, &core, &dropped);
        assert!(r.violations.iter().any(|v| v.contains("'a' decoded 2 times")), "{:?}", r.violations);
        let renamed = core.replace("input wire [31:0] b,", "input wire [31:0] bee,");
        assert!(!check_accelerator(&f, &map, &renamed, &wrapper).ok());
    }
}
