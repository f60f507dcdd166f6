//! HDL emission: register layout, Verilog core and bus wrapper, and a
//! lightweight structural checker that re-reads the emitted text.

pub mod check;
pub mod regmap;
pub mod verilog;

use std::collections::BTreeSet;

pub use check::{check_accelerator, CheckReport};
pub use regmap::{layout_registers, RegEntry, RegisterMap, Role};
pub use verilog::{emit_core, emit_verilog, emit_wrapper};

use crate::synth::fsm::FsmSpec;

/// Verilog-2001 keywords plus the core's fixed signal names.
const RESERVED: &[&str] = &[
    "always", "and", "assign", "begin", "buf", "case", "casex", "casez", "default", "defparam", "disable",
    "else", "end", "endcase", "endfunction", "endgenerate", "endmodule", "endtask", "event", "for", "force",
    "forever", "fork", "function", "generate", "genvar", "if", "initial", "inout", "input", "integer", "join",
    "localparam", "module", "nand", "negedge", "nor", "not", "or", "output", "parameter", "posedge", "real",
    "reg", "release", "repeat", "signed", "task", "time", "tri", "unsigned", "wait", "while", "wire", "xor",
    "xnor", "clk", "rst", "start", "done", "busy", "state", "wait_cnt", "mem_req", "mem_we", "mem_addr",
    "mem_wdata", "mem_gnt", "mem_rdata",
];

/// Turns an arbitrary name into a legal, non-reserved Verilog identifier.
pub fn sanitize_identifier(name: &str) -> String {
    let mut s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit()) {
        s.insert_str(0, "p_");
    }
    if RESERVED.contains(&s.as_str()) || is_internal(&s) {
        s.push_str("_p");
    }
    s
}

/// Names the emitter uses for internal wires and registers.
fn is_internal(s: &str) -> bool {
    let numbered = |prefix: &str| {
        s.strip_prefix(prefix)
            .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
    };
    numbered("r") || numbered("S") || (s.starts_with('h') && s.contains("_n")) || (s.starts_with('h') && s.contains("_q"))
}

/// Sanitized input and output port names (outputs end with `bb_idx`),
/// made unique with numeric suffixes.
pub fn sanitize_ports(f: &FsmSpec) -> (Vec<String>, Vec<String>) {
    let mut taken = BTreeSet::new();
    let mut unique = |raw: &str| {
        let base = sanitize_identifier(raw);
        let mut name = base.clone();
        let mut k = 2;
        while !taken.insert(name.clone()) {
            name = format!("{base}_{k}");
            k += 1;
        }
        name
    };
    let ins = f.inputs.iter().map(|p| unique(&p.name)).collect();
    let outs = f.output_ports().iter().map(|n| unique(n)).collect();
    (ins, outs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortDir {
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorePort {
    pub dir: PortDir,
    pub width: u32,
    pub name: String,
    /// Driven from a clocked process.
    pub registered: bool,
}

/// The core module's expected port list.
pub fn core_ports(f: &FsmSpec) -> Vec<CorePort> {
    let p = |dir, width, name: &str, registered| CorePort {
        dir,
        width,
        name: name.to_string(),
        registered,
    };
    let mut ports = vec![
        p(PortDir::Input, 1, "clk", false),
        p(PortDir::Input, 1, "rst", false),
        p(PortDir::Input, 1, "start", false),
        p(PortDir::Output, 1, "done", true),
        p(PortDir::Output, 1, "busy", false),
    ];
    let (ins, outs) = sanitize_ports(f);
    ports.extend(ins.iter().map(|n| p(PortDir::Input, 32, n, false)));
    ports.extend(outs.iter().map(|n| p(PortDir::Output, 32, n, true)));
    if f.mem_ports > 0 {
        ports.extend([
            p(PortDir::Output, 1, "mem_req", true),
            p(PortDir::Output, 1, "mem_we", true),
            p(PortDir::Output, 32, "mem_addr", true),
            p(PortDir::Output, 32, "mem_wdata", true),
            p(PortDir::Input, 1, "mem_gnt", false),
            p(PortDir::Input, 32, "mem_rdata", false),
        ]);
    }
    ports
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitizes_reserved_and_odd_names() {
        assert_eq!(sanitize_identifier("module"), "module_p");
        assert_eq!(sanitize_identifier("a.1"), "a_1");
        assert_eq!(sanitize_identifier("3x"), "p_3x");
        assert_eq!(sanitize_identifier("start"), "start_p");
        assert_eq!(sanitize_identifier("r7"), "r7_p");
        assert_eq!(sanitize_identifier("rate"), "rate");
    }

    #[test]
    fn collisions_get_numeric_suffixes() {
        let mut f = crate::synth::fsm::tests::fsm_for(
            include_str!("../../../../corpus/listings/unit2.c"),
            "fun3",
            &Default::default(),
        );
        f.inputs[0].name = "x.y".into();
        f.inputs[1].name = "x_y".into();
        let (ins, outs) = sanitize_ports(&f);
        assert_eq!(ins, vec!["x_y", "x_y_2"]);
        assert_eq!(outs, vec!["a_out", "bb_idx"]);
    }
}
