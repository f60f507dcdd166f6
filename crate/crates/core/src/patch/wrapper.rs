//! The C wrapper that invokes one accelerator: look up its base address,
//! write the inputs, start it, poll for completion, read the outputs into
//! a generated global array and return `bb_idx`.
//!
//! Register accesses go through three platform hooks, so the same wrapper
//! runs against the co-simulator or against memory-mapped hardware (see
//! [`platform_hooks_c`]).

use std::fmt::Write as _;

use crate::hdl::regmap::{RegisterMap, STATUS_DONE};
use crate::synth::fsm::FsmSpec;

pub const BASE_HOOK: &str = "__accel_base";
pub const READ_HOOK: &str = "__accel_read";
pub const WRITE_HOOK: &str = "__accel_write";

pub fn wrapper_name(loop_id: u32) -> String {
    format!("__accel_call_{loop_id}")
}

/// Global array receiving the wrapper's outputs.
pub fn outputs_array(loop_id: u32) -> String {
    format!("__accel_out_{loop_id}")
}

/// Generated C for one accelerator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrapperSource {
    pub loop_id: u32,
    pub name: String,
    pub outputs_array: String,
    pub inputs: usize,
    pub outputs: usize,
    /// Hook prototypes, the output array and the wrapper prototype; must
    /// precede any call.
    pub declarations: String,
    pub definition: String,
}

impl WrapperSource {
    pub fn to_text(&self) -> String {
        format!("{}\n{}", self.declarations, self.definition)
    }
}

/// Hook prototypes shared by all wrappers.
pub fn hook_prototypes() -> String {
    format!("int {BASE_HOOK}(int id);\nint {READ_HOOK}(int addr);\nvoid {WRITE_HOOK}(int addr, int value);\n")
}

fn param_names(f: &FsmSpec) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for p in &f.inputs {
        let mut n = crate::hdl::sanitize_identifier(&p.name);
        if n == "base" || n.starts_with("__") {
            n = format!("in_{n}");
        }
        while names.contains(&n) {
            n.push('_');
        }
        names.push(n);
    }
    names
}

/// Generates the wrapper for `f`; register offsets come from `map`.
pub fn make_wrapper(f: &FsmSpec, map: &RegisterMap) -> WrapperSource {
    let name = wrapper_name(f.loop_id);
    let out = outputs_array(f.loop_id);
    let params = param_names(f);
    let sig = params.iter().map(|p| format!("int {p}")).collect::<Vec<_>>().join(", ");
    let mut decl = String::new();
    let _ = writeln!(decl, "int {out}[{}];", f.outputs.len().max(1));
    let _ = writeln!(decl, "int {name}({sig});");

    let mut d = String::new();
    let _ = writeln!(d, "/* {}: loop {} of {} (header bb{}) */", f.name, f.loop_id, f.function, f.header_block);
    let _ = writeln!(d, "int {name}({sig}) {{");
    let _ = writeln!(d, "    int base = {BASE_HOOK}({});", f.loop_id);
    let _ = writeln!(d, "    if (base == 0)");
    let _ = writeln!(d, "        return 0;");
    for (e, p) in map.inputs().zip(&params) {
        let _ = writeln!(d, "    {WRITE_HOOK}(base + {}, {p});", e.offset);
    }
    let _ = writeln!(d, "    {WRITE_HOOK}(base, 1);");
    let _ = writeln!(d, "    while (({READ_HOOK}(base) & {STATUS_DONE}) == 0) {{");
    let _ = writeln!(d, "    }}");
    for (k, e) in map.outputs().enumerate() {
        let _ = writeln!(d, "    {out}[{k}] = {READ_HOOK}(base + {});", e.offset);
    }
    let _ = writeln!(d, "    return {READ_HOOK}(base + {});", map.bb_idx().offset);
    let _ = writeln!(d, "}}");
    WrapperSource {
        loop_id: f.loop_id,
        name,
        outputs_array: out,
        inputs: f.inputs.len(),
        outputs: f.outputs.len(),
        declarations: decl,
        definition: d,
    }
}

/// Platform implementation of the hooks for memory-mapped hardware; the
/// base-address table lists the synthesized loop ids.
pub fn platform_hooks_c(loops: &[(u32, u32)]) -> String {
    let mut s = String::new();
    s += "/* Memory-mapped register access for the generated accelerator wrappers. */\n";
    s += "#include <stdint.h>\n\n";
    s += "struct accel_entry { int id; uintptr_t base; };\n\n";
    s += "static const struct accel_entry accel_table[] = {\n";
    for (id, base) in loops {
        let _ = writeln!(s, "    {{ {id}, 0x{base:08X}u }},");
    }
    s += "    { 0, 0 }\n};\n\n";
    let _ = writeln!(
        s,
        "int {BASE_HOOK}(int id) {{\n    for (const struct accel_entry *e = accel_table; e->id != 0; ++e)\n        if (e->id == id)\n            return (int)e->base;\n    return 0;\n}}\n"
    );
    let _ = writeln!(
        s,
        "int {READ_HOOK}(int addr) {{\n    return *(volatile int32_t *)(uintptr_t)(unsigned)addr;\n}}\n"
    );
    let _ = writeln!(
        s,
        "void {WRITE_HOOK}(int addr, int value) {{\n    *(volatile int32_t *)(uintptr_t)(unsigned)addr = value;\n}}"
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::compile_unit;
    use crate::hdl::layout_registers;
    use crate::synth::fsm::tests::fsm_for;

    const UNIT2: &str = include_str!("../../../../corpus/listings/unit2.c");

    #[test]
    fn fun3_wrapper_text() {
        let mut f = fsm_for(UNIT2, "fun3", &Default::default());
        f.loop_id = 3;
        let w = make_wrapper(&f, &layout_registers(&f));
        assert_eq!(w.name, "__accel_call_3");
        assert_eq!(w.declarations, "int __accel_out_3[1];\nint __accel_call_3(int a, int b);\n");
        let body: Vec<&str> = w.definition.lines().skip(2).map(str::trim).collect();
        assert_eq!(
            body,
            vec![
                "int base = __accel_base(3);",
                "if (base == 0)",
                "return 0;",
                "__accel_write(base + 16, a);",
                "__accel_write(base + 20, b);",
                "__accel_write(base, 1);",
                "while ((__accel_read(base) & 2) == 0) {",
                "}",
                "__accel_out_3[0] = __accel_read(base + 24);",
                "return __accel_read(base + 28);",
                "}",
            ]
        );
        // The wrapper is itself valid subset C.
        let src = format!("{}{}", hook_prototypes(), w.to_text());
        let u = compile_unit(&src, "w.c").unwrap().unit;
        assert!(u.functions.iter().any(|g| g.name == "__accel_call_3"));
    }

    #[test]
    fn output_free_and_clashing_names() {
        let mut f = fsm_for("int A[4]; void f(int base){ for(int i=0;i<4;i++) A[i]=base; }", "f", &Default::default());
        f.loop_id = 7;
        let w = make_wrapper(&f, &layout_registers(&f));
        assert!(w.declarations.starts_with("int __accel_out_7[1];"));
        assert!(w.definition.contains("int __accel_call_7(int in_base)"));
        assert!(!w.definition.contains("__accel_out_7[0] ="));
        let src = format!("{}{}", hook_prototypes(), w.to_text());
        assert!(compile_unit(&src, "w.c").is_ok());
    }

    #[test]
    fn platform_hooks_list_bases() {
        let c = platform_hooks_c(&[(3, 0x4000_3000)]);
        assert!(c.contains("{ 3, 0x40003000u },"));
        assert!(c.contains("int __accel_read(int addr)"));
    }
}
