//! Transcript text format.
//!
//! The body is the per-unit loop listing (`function=`, `loop<id>`,
//! `count=`, `call=`, `well_nested=`, `-<callee>`, optional `mem=`), with a
//! blank line between units. Facts the body cannot express (unit checksums,
//! call sites, loop nesting) live in `#` comment lines at the top of the
//! file, which readers of the plain body format skip.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::{CallSite, FunctionRecord, LoopMeta, LoopRecord, Transcript, UnitSection};

pub const HEADER_TAG: &str = "# loopforge transcript v1";

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn perr<T>(line: usize, message: impl Into<String>) -> Result<T, TranscriptError> {
    Err(TranscriptError::Parse {
        line,
        message: message.into(),
    })
}

fn flag(b: bool) -> u8 {
    b as u8
}

fn list_or_dash(items: &[String]) -> String {
    if items.is_empty() {
        "-".into()
    } else {
        items.join(",")
    }
}

impl Transcript {
    /// Renders the transcript: comment header, then the loop listing.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str(HEADER_TAG);
        out.push('\n');
        let _ = writeln!(out, "# next_loop={}", self.next_loop);
        for u in &self.units {
            match &u.sha256 {
                Some(h) => {
                    let _ = writeln!(out, "# unit {} sha256={h}", u.unit);
                }
                None => {
                    let _ = writeln!(out, "# unit {}", u.unit);
                }
            }
            for f in &u.functions {
                let _ = write!(out, "# fn {}", f.name);
                for s in &f.sites {
                    let _ = write!(out, " {}@{}", s.callee, s.loop_id);
                }
                out.push('\n');
            }
            for l in &u.loops {
                if let Some(m) = &l.meta {
                    let _ = writeln!(
                        out,
                        "# loop {} header=bb{} parent={} stmts={} heuristic={} arrays={} unsupported={}",
                        l.loop_id,
                        m.header,
                        m.parent.map(|p| p.to_string()).unwrap_or_else(|| "-".into()),
                        m.stmts,
                        flag(m.heuristic),
                        list_or_dash(&m.arrays),
                        m.unsupported.as_deref().unwrap_or("-"),
                    );
                }
            }
        }
        out.push_str(&self.body());
        out
    }

    /// The loop listing alone, without the comment header.
    pub fn body(&self) -> String {
        let mut out = String::new();
        for (i, u) in self.units.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&u.unit);
            out.push('\n');
            let mut current: Option<&str> = None;
            for l in &u.loops {
                if current != Some(l.function.as_str()) {
                    let _ = writeln!(out, "function={}", l.function);
                    current = Some(&l.function);
                }
                let _ = writeln!(out, "loop{}", l.loop_id);
                let _ = writeln!(out, "count={}", l.local_count);
                let _ = writeln!(out, "call={}", flag(l.has_call));
                let _ = writeln!(out, "well_nested={}", flag(l.well_nested));
                for c in &l.callees {
                    let _ = writeln!(out, "-{c}");
                }
                if l.mem_accesses > 0 {
                    let _ = writeln!(out, "mem={}", l.mem_accesses);
                }
            }
        }
        out
    }
}

struct HeaderUnit {
    name: String,
    sha256: Option<String>,
    functions: Vec<FunctionRecord>,
    metas: Vec<(u32, LoopMeta, usize)>,
}

fn parse_kv<'a>(tok: &'a str, key: &str, line: usize) -> Result<&'a str, TranscriptError> {
    match tok.strip_prefix(key).and_then(|r| r.strip_prefix('=')) {
        Some(v) => Ok(v),
        None => perr(line, format!("expected '{key}=...', found '{tok}'")),
    }
}

fn parse_num<T: std::str::FromStr>(v: &str, what: &str, line: usize) -> Result<T, TranscriptError> {
    v.parse().or_else(|_| perr(line, format!("invalid {what} '{v}'")))
}

fn parse_flag(v: &str, what: &str, line: usize) -> Result<bool, TranscriptError> {
    match v {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => perr(line, format!("invalid {what} '{v}' (expected 0 or 1)")),
    }
}

fn split_list(v: &str) -> Vec<String> {
    if v == "-" {
        Vec::new()
    } else {
        v.split(',').map(str::to_string).collect()
    }
}

fn parse_header_line(
    line: usize,
    text: &str,
    next_loop: &mut Option<u32>,
    units: &mut Vec<HeaderUnit>,
) -> Result<(), TranscriptError> {
    let rest = text.trim_start_matches('#').trim();
    let mut toks = rest.split_whitespace();
    match toks.next() {
        Some(t) if t.starts_with("next_loop=") => {
            *next_loop = Some(parse_num(parse_kv(t, "next_loop", line)?, "next_loop", line)?);
        }
        Some("unit") => {
            let Some(name) = toks.next() else {
                return perr(line, "unit comment without a name");
            };
            let sha256 = match toks.next() {
                Some(t) => Some(parse_kv(t, "sha256", line)?.to_string()),
                None => None,
            };
            units.push(HeaderUnit {
                name: name.to_string(),
                sha256,
                functions: Vec::new(),
                metas: Vec::new(),
            });
        }
        Some("fn") => {
            let Some(u) = units.last_mut() else {
                return perr(line, "function comment before any unit comment");
            };
            let Some(name) = toks.next() else {
                return perr(line, "function comment without a name");
            };
            let mut sites = Vec::new();
            for t in toks {
                let Some((callee, id)) = t.rsplit_once('@') else {
                    return perr(line, format!("invalid call site '{t}'"));
                };
                sites.push(CallSite {
                    callee: callee.to_string(),
                    loop_id: parse_num(id, "call-site loop id", line)?,
                });
            }
            let mut callees: Vec<String> = Vec::new();
            for s in &sites {
                if !callees.contains(&s.callee) {
                    callees.push(s.callee.clone());
                }
            }
            u.functions.push(FunctionRecord {
                unit: u.name.clone(),
                name: name.to_string(),
                callees,
                sites,
            });
        }
        Some("loop") => {
            let Some(u) = units.last_mut() else {
                return perr(line, "loop comment before any unit comment");
            };
            let id: u32 = parse_num(toks.next().unwrap_or(""), "loop id", line)?;
            let mut get = |key: &str| -> Result<String, TranscriptError> {
                match toks.next() {
                    Some(t) => parse_kv(t, key, line).map(str::to_string),
                    None => perr(line, format!("missing '{key}=' in loop comment")),
                }
            };
            let header = get("header")?;
            let header: u32 = match header.strip_prefix("bb") {
                Some(n) => parse_num(n, "header block", line)?,
                None => return perr(line, format!("invalid header block '{header}'")),
            };
            let parent = get("parent")?;
            let parent = if parent == "-" { None } else { Some(parse_num(&parent, "parent", line)?) };
            let stmts = parse_num(&get("stmts")?, "stmts", line)?;
            let heuristic = parse_flag(&get("heuristic")?, "heuristic", line)?;
            let arrays = split_list(&get("arrays")?);
            let unsupported = get("unsupported")?;
            let unsupported = (unsupported != "-").then_some(unsupported);
            u.metas.push((
                id,
                LoopMeta {
                    header,
                    parent,
                    stmts,
                    heuristic,
                    arrays,
                    unsupported,
                },
                line,
            ));
        }
        // Other comments (including the format tag) carry no data.
        _ => {}
    }
    Ok(())
}

/// Parses transcript text. Comment lines are optional: a bare loop listing
/// parses, with call sites derived from the per-loop callee lines.
pub fn parse_transcript(text: &str) -> Result<Transcript, TranscriptError> {
    let mut next_loop = None;
    let mut header_units: Vec<HeaderUnit> = Vec::new();
    let mut units: Vec<UnitSection> = Vec::new();
    let mut seen_ids = HashSet::new();

    let lines: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l)).collect();
    let mut i = 0;
    let mut expect_unit = true;
    let mut current_fn: Option<String> = None;
    while i < lines.len() {
        let (ln, line) = lines[i];
        i += 1;
        if line.starts_with('#') {
            parse_header_line(ln, line, &mut next_loop, &mut header_units)?;
            continue;
        }
        if line.trim().is_empty() {
            expect_unit = true;
            continue;
        }
        if line != line.trim_end() {
            return perr(ln, "trailing whitespace");
        }
        if expect_unit {
            if units.iter().any(|u| u.unit == line) {
                return perr(ln, format!("duplicate unit section '{line}'"));
            }
            units.push(UnitSection {
                unit: line.to_string(),
                sha256: None,
                functions: Vec::new(),
                loops: Vec::new(),
            });
            expect_unit = false;
            current_fn = None;
            continue;
        }
        let unit = units.last_mut().expect("unit section started");
        if let Some(name) = line.strip_prefix("function=") {
            if name.is_empty() {
                return perr(ln, "empty function name");
            }
            current_fn = Some(name.to_string());
            continue;
        }
        let Some(id) = line.strip_prefix("loop") else {
            return perr(ln, format!("unexpected line '{line}'"));
        };
        let loop_id: u32 = parse_num(id, "loop id", ln)?;
        if loop_id == 0 {
            return perr(ln, "loop ids start at 1");
        }
        let Some(function) = current_fn.clone() else {
            return perr(ln, "loop record before any 'function=' line");
        };
        if !seen_ids.insert(loop_id) {
            return perr(ln, format!("duplicate loop id {loop_id}"));
        }
        let mut field = |key: &str| -> Result<(usize, String), TranscriptError> {
            let Some(&(fl, text)) = lines.get(i) else {
                return perr(ln, format!("loop{loop_id}: missing '{key}=' line"));
            };
            i += 1;
            Ok((fl, parse_kv(text, key, fl)?.to_string()))
        };
        let (cl, count) = field("count")?;
        let local_count = parse_num(&count, "count", cl)?;
        let (cl, call) = field("call")?;
        let has_call = parse_flag(&call, "call", cl)?;
        let (wl, wn) = field("well_nested")?;
        let well_nested = parse_flag(&wn, "well_nested", wl)?;
        let mut callees = Vec::new();
        let mut mem_accesses = 0;
        while let Some(&(fl, text)) = lines.get(i) {
            if let Some(c) = text.strip_prefix('-') {
                if c.is_empty() || !c.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_') {
                    return perr(fl, format!("invalid callee name '{c}'"));
                }
                callees.push(c.to_string());
                i += 1;
            } else if let Some(m) = text.strip_prefix("mem=") {
                mem_accesses = parse_num(m, "mem", fl)?;
                if mem_accesses == 0 {
                    return perr(fl, "mem=0 must be omitted");
                }
                i += 1;
                break;
            } else {
                break;
            }
        }
        if has_call != !callees.is_empty() {
            return perr(ln, format!("loop{loop_id}: call={} disagrees with its callee list", flag(has_call)));
        }
        if well_nested && has_call {
            return perr(ln, format!("loop{loop_id}: well_nested=1 with calls"));
        }
        unit.loops.push(LoopRecord {
            loop_id,
            unit: unit.unit.clone(),
            function,
            local_count,
            has_call,
            well_nested,
            callees,
            mem_accesses,
            meta: None,
        });
    }

    // Attach header facts.
    for h in header_units {
        let Some(u) = units.iter_mut().find(|u| u.unit == h.name) else {
            return perr(0, format!("comment header names unit '{}' that has no section", h.name));
        };
        u.sha256 = h.sha256;
        if !h.functions.is_empty() {
            u.functions = h.functions;
        }
        for (id, meta, line) in h.metas {
            match u.loops.iter_mut().find(|l| l.loop_id == id) {
                Some(l) => l.meta = Some(meta),
                None => return perr(line, format!("loop comment for unknown loop {id}")),
            }
        }
    }
    for u in &mut units {
        if u.functions.is_empty() {
            u.functions = derive_functions(u);
        }
    }
    let max_id = units.iter().flat_map(|u| &u.loops).map(|l| l.loop_id).max().unwrap_or(0);
    let next_loop = next_loop.unwrap_or(0).max(max_id + 1);
    Ok(Transcript { next_loop, units })
}

/// Function records implied by a bare loop listing: one per function
/// group, one call site per (loop, callee) line.
fn derive_functions(u: &UnitSection) -> Vec<FunctionRecord> {
    let mut out: Vec<FunctionRecord> = Vec::new();
    for l in &u.loops {
        if out.last().map(|f| f.name.as_str()) != Some(l.function.as_str()) {
            out.push(FunctionRecord {
                unit: u.unit.clone(),
                name: l.function.clone(),
                callees: Vec::new(),
                sites: Vec::new(),
            });
        }
        let f = out.last_mut().expect("just pushed");
        for c in &l.callees {
            if !f.callees.contains(c) {
                f.callees.push(c.clone());
            }
            f.sites.push(CallSite {
                callee: c.clone(),
                loop_id: l.loop_id,
            });
        }
    }
    out
}

/// Reads a transcript file; a missing or empty file is an empty transcript.
pub fn parse_transcript_file(path: &Path) -> Result<Transcript, TranscriptError> {
    match std::fs::read_to_string(path) {
        Ok(text) => parse_transcript(&text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Transcript::new()),
        Err(source) => Err(TranscriptError::Io {
            path: path.display().to_string(),
            source,
        }),
    }
}

/// Writes `t` to `path` atomically (temporary file plus rename).
pub fn write_transcript(path: &Path, t: &Transcript) -> Result<(), TranscriptError> {
    let io = |source| TranscriptError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, t.serialize()).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

/// Adds (or replaces) one unit's section in the transcript at `path`. Loop
/// ids in `section` must have been assigned from the file's `next_loop`.
pub fn append_transcript(path: &Path, section: UnitSection) -> Result<Transcript, TranscriptError> {
    let mut t = parse_transcript_file(path)?;
    t.replace_unit(section);
    write_transcript(path, &t)?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LISTING_BODY: &str = "unit1.c\nfunction=fun2\nloop1\ncount=29\ncall=1\nwell_nested=0\n-fun3\nfunction=fun1\nloop2\ncount=9\ncall=1\nwell_nested=0\n-fun2\n\nunit2.c\nfunction=fun3\nloop3\ncount=99\ncall=0\nwell_nested=1\n";

    #[test]
    fn parses_bare_listing() {
        let t = parse_transcript(LISTING_BODY).unwrap();
        assert_eq!(t.units.len(), 2);
        assert_eq!(t.loops().count(), 3);
        let groups: usize = t.units.iter().map(|u| u.functions.len()).sum();
        assert_eq!(groups, 3);
        assert_eq!(t.next_loop, 4);
        assert_eq!(t.body(), LISTING_BODY);
    }

    #[test]
    fn empty_file_is_empty_transcript() {
        let t = parse_transcript("").unwrap();
        assert!(t.units.is_empty());
    }

    #[test]
    fn bad_count_names_line() {
        let text = "u.c\nfunction=f\nloop1\ncount=abc\ncall=0\nwell_nested=1\n";
        match parse_transcript(text) {
            Err(TranscriptError::Parse { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("count"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_loop_id_rejected() {
        let text = "u.c\nfunction=f\nloop1\ncount=1\ncall=0\nwell_nested=1\nloop1\ncount=1\ncall=0\nwell_nested=1\n";
        assert!(parse_transcript(text).unwrap_err().to_string().contains("duplicate loop id 1"));
    }

    #[test]
    fn append_replaces_existing_unit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        std::fs::write(&path, LISTING_BODY).unwrap();
        let t = parse_transcript_file(&path).unwrap();
        let mut sec = t.unit("unit1.c").unwrap().clone();
        for l in &mut sec.loops {
            l.loop_id += 3;
            l.local_count += 1;
        }
        for f in &mut sec.functions {
            for s in &mut f.sites {
                s.loop_id += 3;
            }
        }
        let t2 = append_transcript(&path, sec).unwrap();
        assert_eq!(t2.units[0].unit, "unit1.c");
        assert_eq!(t2.units[1], t.units[1]);
        assert_eq!(t2.next_loop, 6);
        assert_eq!(parse_transcript_file(&path).unwrap(), t2);
    }

    fn name() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9_]{0,6}"
    }

    fn transcript() -> impl Strategy<Value = Transcript> {
        let loop_ = (
            name(),
            0u64..5000,
            proptest::collection::vec(name(), 0..3),
            0u32..4,
            any::<bool>(),
            proptest::option::of((0u32..50, 0u32..40, any::<bool>(), proptest::collection::vec(name(), 0..3))),
        );
        let unit = (name(), proptest::option::of("[0-9a-f]{8}"), proptest::collection::vec(loop_, 0..4));
        proptest::collection::vec(unit, 0..4).prop_map(|units| {
            let mut t = Transcript::new();
            let mut id = 1;
            let mut seen = HashSet::new();
            for (k, (uname, sha, loops)) in units.into_iter().enumerate() {
                let uname = format!("{uname}{k}.c");
                if !seen.insert(uname.clone()) {
                    continue;
                }
                let mut sec = UnitSection { unit: uname.clone(), sha256: sha, functions: vec![], loops: vec![] };
                for (fname, count, mut callees, mem, wn, meta) in loops {
                    callees.dedup();
                    let has_call = !callees.is_empty();
                    sec.loops.push(LoopRecord {
                        loop_id: id,
                        unit: uname.clone(),
                        function: fname,
                        local_count: count,
                        has_call,
                        well_nested: wn && !has_call,
                        callees,
                        mem_accesses: mem,
                        meta: meta.map(|(h, s, heur, arrays)| LoopMeta {
                            header: h,
                            parent: None,
                            stmts: s,
                            heuristic: heur,
                            arrays,
                            unsupported: None,
                        }),
                    });
                    id += 1;
                }
                sec.functions = derive_functions(&sec);
                t.replace_unit(sec);
            }
            t
        })
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(t in transcript()) {
            let text = t.serialize();
            let back = parse_transcript(&text).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
