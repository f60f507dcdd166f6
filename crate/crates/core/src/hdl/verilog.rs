//! Verilog-2001 emission: a loop-specific core (FSM plus datapath with a
//! generic start/done interface) and a bus wrapper that exposes the core
//! through a memory-mapped 32-bit register file.

use std::fmt::Write as _;

use super::regmap::{RegisterMap, Role};
use super::{core_ports, sanitize_ports, PortDir};
use crate::ir::{BinOp, UnOp};
use crate::synth::dfg::{Dest, NodeOp, Src, Target};
use crate::synth::fsm::{FsmBlock, FsmSpec};

/// Below this many states the state register is one-hot encoded.
pub const ONE_HOT_LIMIT: u32 = 32;

/// State register width: one bit per state when one-hot, otherwise
/// `ceil(log2(states))`.
pub fn state_width(states: u32) -> u32 {
    if states < ONE_HOT_LIMIT {
        states
    } else {
        32 - (states - 1).leading_zeros()
    }
}

fn state_literal(states: u32, s: u32) -> String {
    let w = state_width(states);
    if states < ONE_HOT_LIMIT {
        format!("{w}'b{:0>width$b}", 1u64 << s, width = w as usize)
    } else {
        format!("{w}'d{s}")
    }
}

fn konst(c: i32) -> String {
    format!("32'h{:08x}", c as u32)
}

struct Names {
    inputs: Vec<String>,
    outputs: Vec<String>,
    bb_idx: String,
}

fn names(f: &FsmSpec) -> Names {
    let (inputs, mut outputs) = sanitize_ports(f);
    let bb_idx = outputs.pop().expect("bb_idx port");
    Names { inputs, outputs, bb_idx }
}

/// Source operand as an expression inside local state `k` of `b`.
fn src_expr(h: usize, b: &FsmBlock, k: u32, s: Src) -> String {
    match s {
        Src::Node(n) => {
            if b.nodes[n as usize].state == k {
                format!("h{h}_n{n}")
            } else {
                format!("h{h}_q{n}")
            }
        }
        Src::Reg(r) => format!("r{r}"),
        Src::Const(c) => konst(c),
    }
}

/// Bit 0 of an operand (part-selects are only legal on identifiers).
fn bit0(h: usize, b: &FsmBlock, k: u32, s: Src) -> String {
    match s {
        Src::Const(c) => format!("1'b{}", c & 1),
        _ => format!("{}[0]", src_expr(h, b, k, s)),
    }
}

/// Shift amount (low five bits) of an operand.
fn shamt(h: usize, b: &FsmBlock, k: u32, s: Src) -> String {
    match s {
        Src::Const(c) => format!("5'd{}", c & 31),
        _ => format!("{}[4:0]", src_expr(h, b, k, s)),
    }
}

fn node_expr(h: usize, b: &FsmBlock, i: usize) -> Option<String> {
    let n = &b.nodes[i];
    let k = n.state;
    let a = |j: usize| src_expr(h, b, k, n.node.args[j]);
    let sg = |x: String| format!("$signed({x})");
    let bit = |x: String| format!("{{31'b0, {x}}}");
    Some(match &n.node.op {
        NodeOp::Bin(op) => {
            let (x, y) = (a(0), a(1));
            match op {
                BinOp::Add => format!("{x} + {y}"),
                BinOp::Sub => format!("{x} - {y}"),
                BinOp::Mul => format!("{x} * {y}"),
                BinOp::Div => format!("({y} == 32'h0) ? 32'h0 : {} / {}", sg(x), sg(y.clone())),
                BinOp::Rem => format!("({y} == 32'h0) ? 32'h0 : {} % {}", sg(x), sg(y.clone())),
                BinOp::Shl => format!("{x} << {}", shamt(h, b, k, n.node.args[1])),
                BinOp::Shr => format!("{} >>> {}", sg(x), shamt(h, b, k, n.node.args[1])),
                BinOp::And => format!("{x} & {y}"),
                BinOp::Or => format!("{x} | {y}"),
                BinOp::Xor => format!("{x} ^ {y}"),
                BinOp::Eq => bit(format!("{x} == {y}")),
                BinOp::Ne => bit(format!("{x} != {y}")),
                BinOp::Lt => bit(format!("{} < {}", sg(x), sg(y))),
                BinOp::Le => bit(format!("{} <= {}", sg(x), sg(y))),
                BinOp::Gt => bit(format!("{} > {}", sg(x), sg(y))),
                BinOp::Ge => bit(format!("{} >= {}", sg(x), sg(y))),
            }
        }
        NodeOp::Un(op) => match op {
            UnOp::Neg => format!("-{}", a(0)),
            UnOp::Not => format!("~{}", a(0)),
            UnOp::LNot => bit(format!("{} == 32'h0", a(0))),
        },
        NodeOp::Select => {
            let args = &n.node.args;
            let mut e = src_expr(h, b, k, *args.last().expect("select operand"));
            for pair in args[..args.len() - 1].chunks(2).rev() {
                e = format!("{} ? {} : ({e})", bit0(h, b, k, pair[0]), src_expr(h, b, k, pair[1]));
            }
            e
        }
        NodeOp::PredAnd { negate } => {
            let c = a(1);
            let test = if *negate { format!("{c} == 32'h0") } else { format!("{c} != 32'h0") };
            bit(format!("{} & ({test})", bit0(h, b, k, n.node.args[0])))
        }
        NodeOp::PredOr => bit(format!(
            "{} | {}",
            bit0(h, b, k, n.node.args[0]),
            bit0(h, b, k, n.node.args[1])
        )),
        NodeOp::Load(_) => "mem_rdata".to_string(),
        NodeOp::Store(_) => return None,
    })
}

/// The loop-specific core module.
pub fn emit_core(f: &FsmSpec) -> String {
    let nm = names(f);
    let nstates = f.state_count();
    let width = state_width(nstates);
    let done_state = f.done_state();
    let mut v = String::new();
    let _ = writeln!(v, "// {}: accelerator core for loop {} in {}", f.name, f.loop_id, f.function);
    let _ = writeln!(
        v,
        "// {} states, {} encoding",
        nstates,
        if nstates < ONE_HOT_LIMIT { "one-hot" } else { "binary" }
    );
    if f.mem_ports > 0 {
        let _ = writeln!(v, "// Memory ports are a request/grant stub and are left unconnected by the wrapper.");
    }
    let _ = writeln!(v, "module {}_core (", f.name);
    let ports = core_ports(f);
    for (i, p) in ports.iter().enumerate() {
        let dir = match p.dir {
            PortDir::Input => "input wire",
            PortDir::Output if p.registered => "output reg",
            PortDir::Output => "output wire",
        };
        let w = if p.width > 1 { format!(" [{}:0]", p.width - 1) } else { String::new() };
        let sep = if i + 1 < ports.len() { "," } else { "" };
        let _ = writeln!(v, "    {dir}{w} {}{sep}", p.name);
    }
    let _ = writeln!(v, ");");
    let _ = writeln!(v);
    for s in 0..nstates {
        let label = if s == 0 {
            "idle".to_string()
        } else if s == done_state {
            "done".to_string()
        } else {
            "body".to_string()
        };
        let _ = writeln!(v, "    localparam [{}:0] S{s} = {}; // {label}", width - 1, state_literal(nstates, s));
    }
    let _ = writeln!(v, "    reg [{}:0] state;", width - 1);
    let _ = writeln!(v, "    reg [15:0] wait_cnt;");
    for (i, r) in f.registers.iter().enumerate() {
        let _ = writeln!(v, "    reg [31:0] r{i}; // {}", r.name);
    }
    for (h, b) in f.blocks.iter().enumerate() {
        let _ = writeln!(v, "    // hyperblock {h} (loop header bb{})", b.root_block);
        for i in 0..b.nodes.len() {
            if let Some(e) = node_expr(h, b, i) {
                let _ = writeln!(v, "    wire [31:0] h{h}_n{i} = {e}; // {}", b.nodes[i].node.op.mnemonic());
                let _ = writeln!(v, "    reg [31:0] h{h}_q{i};");
            }
        }
    }
    let _ = writeln!(v);
    let _ = writeln!(v, "    assign busy = (state != S0) && (state != S{done_state});");
    let _ = writeln!(v);

    if f.mem_ports > 0 {
        let _ = writeln!(v, "    always @(*) begin");
        let _ = writeln!(v, "        mem_req = 1'b0;");
        let _ = writeln!(v, "        mem_we = 1'b0;");
        let _ = writeln!(v, "        mem_addr = 32'h0;");
        let _ = writeln!(v, "        mem_wdata = 32'h0;");
        let _ = writeln!(v, "        case (state)");
        for (h, b) in f.blocks.iter().enumerate() {
            for (i, n) in b.nodes.iter().enumerate() {
                if !n.node.op.is_memory() {
                    continue;
                }
                let k = n.state;
                let pred = n.node.pred.map_or("1'b1".to_string(), |p| bit0(h, b, k, p));
                let _ = writeln!(v, "            S{}: begin // n{i} {}", b.first_state + k, n.node.op.mnemonic());
                let _ = writeln!(v, "                mem_req = {pred};");
                let _ = writeln!(v, "                mem_addr = {};", src_expr(h, b, k, n.node.args[0]));
                if matches!(n.node.op, NodeOp::Store(_)) {
                    let _ = writeln!(v, "                mem_we = {pred};");
                    let _ = writeln!(v, "                mem_wdata = {};", src_expr(h, b, k, n.node.args[1]));
                }
                let _ = writeln!(v, "            end");
            }
        }
        let _ = writeln!(v, "            default: ;");
        let _ = writeln!(v, "        endcase");
        let _ = writeln!(v, "    end");
        let _ = writeln!(v);
    }

    let _ = writeln!(v, "    always @(posedge clk) begin");
    let _ = writeln!(v, "        if (rst) begin");
    let _ = writeln!(v, "            state <= S0;");
    let _ = writeln!(v, "            wait_cnt <= 16'd0;");
    let _ = writeln!(v, "            done <= 1'b0;");
    let _ = writeln!(v, "        end else begin");
    let _ = writeln!(v, "            case (state)");
    // Idle: latch inputs, perform entry copies.
    let _ = writeln!(v, "            S0: if (start) begin");
    let _ = writeln!(v, "                done <= 1'b0;");
    for (p, name) in f.inputs.iter().zip(&nm.inputs) {
        let _ = writeln!(v, "                r{} <= {name};", p.reg);
    }
    for c in &f.entry_copies {
        let src = match c.src {
            Src::Reg(r) => match f.inputs.iter().position(|p| p.reg == r) {
                Some(k) => nm.inputs[k].clone(),
                None => format!("r{r}"),
            },
            Src::Const(k) => konst(k),
            Src::Node(_) => unreachable!("validated"),
        };
        if let Dest::Reg(r) = c.dest {
            let _ = writeln!(v, "                r{r} <= {src};");
        }
    }
    let first = f.blocks.first().map_or(done_state, |b| b.first_state);
    let _ = writeln!(v, "                state <= S{first};");
    let _ = writeln!(v, "            end");
    for (h, b) in f.blocks.iter().enumerate() {
        for (k, &cycles) in b.states.iter().enumerate() {
            let k = k as u32;
            let g = b.first_state + k;
            let _ = writeln!(v, "            S{g}: begin");
            let ind = if cycles > 1 {
                let _ = writeln!(v, "                if (wait_cnt != 16'd{}) begin", cycles - 1);
                let _ = writeln!(v, "                    wait_cnt <= wait_cnt + 16'd1;");
                let _ = writeln!(v, "                end else begin");
                let _ = writeln!(v, "                    wait_cnt <= 16'd0;");
                "                    "
            } else {
                "                "
            };
            for (i, n) in b.nodes.iter().enumerate() {
                if n.state != k || matches!(n.node.op, NodeOp::Store(_)) {
                    continue;
                }
                let _ = writeln!(v, "{ind}h{h}_q{i} <= h{h}_n{i};");
                if let Some(r) = n.node.dst {
                    let _ = writeln!(v, "{ind}r{r} <= h{h}_n{i};");
                }
            }
            let mut first_edge = true;
            for e in b.edges.iter().filter(|e| e.ready == k) {
                let kw = if first_edge { "if" } else { "else if" };
                first_edge = false;
                let _ = writeln!(v, "{ind}{kw} ({}) begin", bit0(h, b, k, e.edge.pred));
                for c in &e.edge.copies {
                    let src = src_expr(h, b, k, c.src);
                    match c.dest {
                        Dest::Reg(r) => {
                            let _ = writeln!(v, "{ind}    r{r} <= {src};");
                        }
                        Dest::Output(o) => {
                            let _ = writeln!(v, "{ind}    {} <= {src};", nm.outputs[o as usize]);
                        }
                    }
                }
                match e.edge.target {
                    Target::Block(t) => {
                        let _ = writeln!(v, "{ind}    state <= S{};", f.blocks[t as usize].first_state);
                    }
                    Target::Exit(id) => {
                        let _ = writeln!(v, "{ind}    {} <= 32'd{id};", nm.bb_idx);
                        let _ = writeln!(v, "{ind}    done <= 1'b1;");
                        let _ = writeln!(v, "{ind}    state <= S{done_state};");
                    }
                }
                let _ = writeln!(v, "{ind}end");
            }
            let fallthrough = if (k as usize) + 1 < b.states.len() {
                format!("S{}", g + 1)
            } else {
                // Unreachable when exactly one edge predicate holds.
                "S0".to_string()
            };
            if first_edge {
                let _ = writeln!(v, "{ind}state <= {fallthrough};");
            } else {
                let _ = writeln!(v, "{ind}else state <= {fallthrough};");
            }
            if cycles > 1 {
                let _ = writeln!(v, "                end");
            }
            let _ = writeln!(v, "            end");
        }
    }
    let _ = writeln!(v, "            S{done_state}: state <= S0;");
    let _ = writeln!(v, "            default: state <= S0;");
    let _ = writeln!(v, "            endcase");
    let _ = writeln!(v, "        end");
    let _ = writeln!(v, "    end");
    let _ = writeln!(v, "endmodule");
    v
}

/// Marker lines delimiting the wrapper's read decoder.
pub const DECODER_BEGIN: &str = "// decoder begin";
pub const DECODER_END: &str = "// decoder end";

/// The bus wrapper: a register file decoding `map` around the core.
pub fn emit_wrapper(f: &FsmSpec, map: &RegisterMap) -> String {
    let nm = names(f);
    let mut v = String::new();
    let _ = writeln!(v, "// {}: memory-mapped register wrapper", f.name);
    let _ = writeln!(v, "// write 1 to offset 0x00 to start; read offset 0x00: bit0 busy, bit1 done");
    let _ = writeln!(v, "module {}_wrapper (", f.name);
    let _ = writeln!(v, "    input wire clk,");
    let _ = writeln!(v, "    input wire rst,");
    let _ = writeln!(v, "    input wire [31:0] bus_addr,");
    let _ = writeln!(v, "    input wire [31:0] bus_wdata,");
    let _ = writeln!(v, "    input wire bus_we,");
    let _ = writeln!(v, "    output reg [31:0] bus_rdata");
    let _ = writeln!(v, ");");
    let _ = writeln!(v, "    reg start_pulse;");
    let _ = writeln!(v, "    wire core_done;");
    let _ = writeln!(v, "    wire core_busy;");
    for (k, _) in map.inputs().enumerate() {
        let _ = writeln!(v, "    reg [31:0] in{k};");
    }
    for (k, _) in map.outputs().enumerate() {
        let _ = writeln!(v, "    wire [31:0] out{k};");
    }
    let _ = writeln!(v, "    wire [31:0] out_bb_idx;");
    if f.mem_ports > 0 {
        let _ = writeln!(v, "    wire mem_req;");
        let _ = writeln!(v, "    wire mem_we;");
        let _ = writeln!(v, "    wire [31:0] mem_addr;");
        let _ = writeln!(v, "    wire [31:0] mem_wdata;");
    }
    let _ = writeln!(v);
    let mut conns = vec![
        ".clk(clk)".to_string(),
        ".rst(rst)".into(),
        ".start(start_pulse)".into(),
        ".done(core_done)".into(),
        ".busy(core_busy)".into(),
    ];
    for (k, n) in nm.inputs.iter().enumerate() {
        conns.push(format!(".{n}(in{k})"));
    }
    for (k, n) in nm.outputs.iter().enumerate() {
        conns.push(format!(".{n}(out{k})"));
    }
    conns.push(format!(".{}(out_bb_idx)", nm.bb_idx));
    if f.mem_ports > 0 {
        conns.extend(
            [
                ".mem_req(mem_req)",
                ".mem_we(mem_we)",
                ".mem_addr(mem_addr)",
                ".mem_wdata(mem_wdata)",
                ".mem_gnt(1'b0)",
                ".mem_rdata(32'h0)",
            ]
            .map(String::from),
        );
    }
    let _ = writeln!(v, "    {}_core core (", f.name);
    for (i, c) in conns.iter().enumerate() {
        let sep = if i + 1 < conns.len() { "," } else { "" };
        let _ = writeln!(v, "        {c}{sep}");
    }
    let _ = writeln!(v, "    );");
    let _ = writeln!(v);
    let _ = writeln!(v, "    always @(posedge clk) begin");
    let _ = writeln!(v, "        start_pulse <= 1'b0;");
    let _ = writeln!(v, "        if (!rst && bus_we) begin");
    let _ = writeln!(v, "            case (bus_addr[11:0])");
    for e in &map.entries {
        match e.role {
            Role::ControlStatus => {
                let _ = writeln!(v, "                12'h{:03x}: start_pulse <= bus_wdata[0];", e.offset);
            }
            Role::Input(k) => {
                let _ = writeln!(v, "                12'h{:03x}: in{k} <= bus_wdata;", e.offset);
            }
            _ => {}
        }
    }
    let _ = writeln!(v, "                default: ;");
    let _ = writeln!(v, "            endcase");
    let _ = writeln!(v, "        end");
    let _ = writeln!(v, "    end");
    let _ = writeln!(v);
    let _ = writeln!(v, "    {DECODER_BEGIN}");
    let _ = writeln!(v, "    always @(*) begin");
    let _ = writeln!(v, "        case (bus_addr[11:0])");
    for e in &map.entries {
        let src = match e.role {
            Role::ControlStatus => "{30'b0, core_done, core_busy}".to_string(),
            Role::Input(k) => format!("in{k}"),
            Role::Output(k) => format!("out{k}"),
            Role::BbIdx => "out_bb_idx".to_string(),
        };
        let _ = writeln!(v, "            12'h{:03x}: bus_rdata = {src}; // {}", e.offset, e.name);
    }
    let _ = writeln!(v, "            default: bus_rdata = 32'h0;");
    let _ = writeln!(v, "        endcase");
    let _ = writeln!(v, "    end");
    let _ = writeln!(v, "    {DECODER_END}");
    let _ = writeln!(v, "endmodule");
    v
}

/// Both HDL files for an accelerator.
pub fn emit_verilog(f: &FsmSpec, map: &RegisterMap) -> (String, String) {
    (emit_core(f), emit_wrapper(f, map))
}
