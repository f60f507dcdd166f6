//! The bus-visible register layout of an accelerator.

use std::fmt;

use crate::synth::fsm::{FsmSpec, BB_IDX};

/// Offset of the first input register.
pub const FIRST_DATA_OFFSET: u32 = 0x10;
/// Control/status register bits: write bit 0 starts, read bit 0 is busy,
/// read bit 1 is done.
pub const CTRL_START: u32 = 1;
pub const STATUS_BUSY: u32 = 1;
pub const STATUS_DONE: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    ControlStatus,
    Input(usize),
    Output(usize),
    BbIdx,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::ControlStatus => f.write_str("control-status"),
            Role::Input(k) => write!(f, "input{k}"),
            Role::Output(k) => write!(f, "output{k}"),
            Role::BbIdx => f.write_str("bb_idx"),
        }
    }
}

impl Role {
    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "control-status" => Some(Role::ControlStatus),
            "bb_idx" => Some(Role::BbIdx),
            _ => {
                if let Some(k) = s.strip_prefix("input") {
                    k.parse().ok().map(Role::Input)
                } else if let Some(k) = s.strip_prefix("output") {
                    k.parse().ok().map(Role::Output)
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegEntry {
    pub offset: u32,
    pub role: Role,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterMap {
    pub entries: Vec<RegEntry>,
}

/// Control/status at 0x00, inputs from 0x10 in steps of 4, then the data
/// outputs, then `bb_idx`.
pub fn layout_registers(f: &FsmSpec) -> RegisterMap {
    let mut entries = vec![RegEntry {
        offset: 0,
        role: Role::ControlStatus,
        name: "ctrl".into(),
    }];
    let mut off = FIRST_DATA_OFFSET;
    for (k, p) in f.inputs.iter().enumerate() {
        entries.push(RegEntry {
            offset: off,
            role: Role::Input(k),
            name: p.name.clone(),
        });
        off += 4;
    }
    for (k, o) in f.outputs.iter().enumerate() {
        entries.push(RegEntry {
            offset: off,
            role: Role::Output(k),
            name: o.clone(),
        });
        off += 4;
    }
    entries.push(RegEntry {
        offset: off,
        role: Role::BbIdx,
        name: BB_IDX.into(),
    });
    RegisterMap { entries }
}

impl RegisterMap {
    pub fn inputs(&self) -> impl Iterator<Item = &RegEntry> {
        self.entries.iter().filter(|e| matches!(e.role, Role::Input(_)))
    }

    pub fn outputs(&self) -> impl Iterator<Item = &RegEntry> {
        self.entries.iter().filter(|e| matches!(e.role, Role::Output(_)))
    }

    pub fn bb_idx(&self) -> &RegEntry {
        self.entries.iter().find(|e| e.role == Role::BbIdx).expect("bb_idx entry")
    }

    /// One line per entry: `0x<offset> <role> <name>`.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("0x{:02X} {} {}\n", e.offset, e.role, e.name))
            .collect()
    }

    pub fn parse(text: &str) -> Result<RegisterMap, String> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [off, role, name] = parts.as_slice() else {
                return Err(format!("line {}: expected '<offset> <role> <name>'", i + 1));
            };
            let offset = off
                .strip_prefix("0x")
                .and_then(|h| u32::from_str_radix(h, 16).ok())
                .ok_or_else(|| format!("line {}: bad offset '{off}'", i + 1))?;
            let role = Role::parse(role).ok_or_else(|| format!("line {}: bad role '{role}'", i + 1))?;
            entries.push(RegEntry {
                offset,
                role,
                name: name.to_string(),
            });
        }
        let map = RegisterMap { entries };
        map.check()?;
        Ok(map)
    }

    /// Alignment, ordering and the leading control entry.
    pub fn check(&self) -> Result<(), String> {
        match self.entries.first() {
            Some(e) if e.offset == 0 && e.role == Role::ControlStatus => {}
            _ => return Err("entry 0 must be the control-status register at 0x00".into()),
        }
        for w in self.entries.windows(2) {
            if w[1].offset <= w[0].offset {
                return Err(format!("offset 0x{:02X} does not increase", w[1].offset));
            }
        }
        if let Some(e) = self.entries.iter().find(|e| e.offset % 4 != 0) {
            return Err(format!("offset 0x{:02X} is not 4-byte aligned", e.offset));
        }
        if self.entries.iter().filter(|e| e.role == Role::BbIdx).count() != 1 {
            return Err("exactly one bb_idx register required".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::fsm::Port;

    fn spec(inputs: &[&str], outputs: &[&str]) -> FsmSpec {
        let f = crate::synth::fsm::tests::fsm_for(
            include_str!("../../../../corpus/listings/unit2.c"),
            "fun3",
            &Default::default(),
        );
        FsmSpec {
            inputs: inputs
                .iter()
                .map(|n| Port {
                    name: n.to_string(),
                    reg: 0,
                })
                .collect(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            ..f
        }
    }

    fn offsets(m: &RegisterMap) -> Vec<(u32, &str)> {
        m.entries.iter().map(|e| (e.offset, e.name.as_str())).collect()
    }

    #[test]
    fn fun3_layout() {
        let m = layout_registers(&spec(&["a", "b"], &["a_out"]));
        assert_eq!(offsets(&m), vec![(0, "ctrl"), (0x10, "a"), (0x14, "b"), (0x18, "a_out"), (0x1C, "bb_idx")]);
        assert_eq!(
            m.to_text(),
            "0x00 control-status ctrl\n0x10 input0 a\n0x14 input1 b\n0x18 output0 a_out\n0x1C bb_idx bb_idx\n"
        );
        assert_eq!(RegisterMap::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn empty_interface() {
        let m = layout_registers(&spec(&[], &[]));
        assert_eq!(offsets(&m), vec![(0, "ctrl"), (0x10, "bb_idx")]);
    }

    #[test]
    fn eleven_inputs_one_output() {
        let names: Vec<String> = (0..11).map(|i| format!("x{i}")).collect();
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let m = layout_registers(&spec(&refs, &["y"]));
        let ins: Vec<u32> = m.inputs().map(|e| e.offset).collect();
        assert_eq!(ins.first(), Some(&0x10));
        assert_eq!(ins.last(), Some(&0x38));
        assert_eq!(m.outputs().next().unwrap().offset, 0x3C);
        assert_eq!(m.bb_idx().offset, 0x40);
    }

    #[test]
    fn parse_rejects_misaligned() {
        assert!(RegisterMap::parse("0x00 control-status ctrl\n0x11 bb_idx bb_idx\n").is_err());
        assert!(RegisterMap::parse("0x10 bb_idx bb_idx\n").is_err());
    }
}
