//! Natural loop detection over the dominator tree, plus the static
//! latch-execution estimate recorded for each loop.

use std::collections::BTreeSet;

use super::dom::{successor_lists, Dominators};
use super::{BinOp, BlockId, MirFunction, Operand, Rvalue, Stmt, Terminator, ValueId};

/// Used when a loop's trip count cannot be derived statically.
pub const DEFAULT_LOOP_COUNT: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopNode {
    pub header: BlockId,
    /// Sorted block ids, header included.
    pub body: Vec<BlockId>,
    pub latches: Vec<BlockId>,
    /// (source inside, target outside) in discovery order: body blocks in
    /// reverse postorder, then successor order.
    pub exits: Vec<(BlockId, BlockId)>,
    pub children: Vec<LoopNode>,
    /// Estimated latch executions (trip count minus one).
    pub local_count: u64,
    /// True when `local_count` is the configured default, not derived.
    pub heuristic: bool,
    /// True when the body contains irreducible control flow.
    pub irreducible_inside: bool,
}

impl LoopNode {
    pub fn contains(&self, b: BlockId) -> bool {
        self.body.binary_search(&b).is_ok()
    }

    /// Preorder walk over this loop and all nested loops.
    pub fn preorder(&self) -> Vec<&LoopNode> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.preorder());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoopForest {
    pub roots: Vec<LoopNode>,
    pub warnings: Vec<String>,
}

impl LoopForest {
    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// All loops in preorder (parents before children, siblings by header
    /// position).
    pub fn preorder(&self) -> Vec<&LoopNode> {
        self.roots.iter().flat_map(|r| r.preorder()).collect()
    }

    pub fn by_header(&self, header: BlockId) -> Option<&LoopNode> {
        self.preorder().into_iter().find(|l| l.header == header)
    }

    /// Headers of the enclosing loops of `header`, innermost first
    /// (excluding the loop itself).
    pub fn ancestors(&self, header: BlockId) -> Vec<BlockId> {
        fn walk(node: &LoopNode, target: BlockId, path: &mut Vec<BlockId>) -> bool {
            if node.header == target {
                return true;
            }
            path.push(node.header);
            for c in &node.children {
                if walk(c, target, path) {
                    return true;
                }
            }
            path.pop();
            false
        }
        let mut path = Vec::new();
        for r in &self.roots {
            if walk(r, header, &mut path) {
                path.reverse();
                return path;
            }
        }
        Vec::new()
    }
}

pub fn find_loops(f: &MirFunction) -> LoopForest {
    find_loops_with_default(f, DEFAULT_LOOP_COUNT)
}

pub fn find_loops_with_default(f: &MirFunction, default_count: u64) -> LoopForest {
    let succs = successor_lists(f);
    let dom = Dominators::of(f);
    let mut warnings = Vec::new();

    // Back edges grouped by header, in reverse postorder of the header.
    let mut by_header: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut irreducible_edges = Vec::new();
    for &b in dom.rpo() {
        for &s in &succs[b] {
            if dom.dominates(s, b) {
                match by_header.iter_mut().find(|(h, _)| *h == s) {
                    Some((_, latches)) => latches.push(b),
                    None => by_header.push((s, vec![b])),
                }
            } else if dom.rpo_index(s) <= dom.rpo_index(b) {
                irreducible_edges.push((b, s));
                warnings.push(format!(
                    "irreducible control flow in '{}' (edge bb{} -> bb{}); region is not treated as a loop",
                    f.name, b, s
                ));
            }
        }
    }
    by_header.sort_by_key(|(h, _)| dom.rpo_index(*h));

    let preds = {
        let mut p = vec![Vec::new(); succs.len()];
        for (b, ss) in succs.iter().enumerate() {
            if dom.is_reachable(b) {
                for &s in ss {
                    p[s].push(b);
                }
            }
        }
        p
    };

    struct Flat {
        header: usize,
        body: BTreeSet<usize>,
        latches: Vec<usize>,
    }
    let mut flats: Vec<Flat> = by_header
        .into_iter()
        .map(|(h, latches)| {
            let mut body = BTreeSet::from([h]);
            let mut stack: Vec<usize> = latches.clone();
            while let Some(n) = stack.pop() {
                if body.insert(n) {
                    stack.extend(preds[n].iter().copied());
                }
            }
            Flat {
                header: h,
                body,
                latches,
            }
        })
        .collect();
    flats.sort_by_key(|l| dom.rpo_index(l.header));

    let parent: Vec<Option<usize>> = (0..flats.len())
        .map(|i| {
            (0..flats.len())
                .filter(|&j| j != i && flats[j].body.contains(&flats[i].header) && flats[j].body.len() > flats[i].body.len())
                .min_by_key(|&j| flats[j].body.len())
        })
        .collect();

    fn build(
        i: usize,
        flats: &[Flat],
        parent: &[Option<usize>],
        f: &MirFunction,
        succs: &[Vec<usize>],
        dom: &Dominators,
        irreducible: &[(usize, usize)],
        default_count: u64,
    ) -> LoopNode {
        let l = &flats[i];
        let mut exits = Vec::new();
        let mut ordered: Vec<usize> = l.body.iter().copied().collect();
        ordered.sort_by_key(|b| dom.rpo_index(*b));
        for &b in &ordered {
            for &s in &succs[b] {
                if !l.body.contains(&s) {
                    exits.push((BlockId(b as u32), BlockId(s as u32)));
                }
            }
        }
        let children = (0..flats.len())
            .filter(|&j| parent[j] == Some(i))
            .map(|j| build(j, flats, parent, f, succs, dom, irreducible, default_count))
            .collect();
        let body: Vec<BlockId> = l.body.iter().map(|&b| BlockId(b as u32)).collect();
        let mut latches: Vec<BlockId> = l.latches.iter().map(|&b| BlockId(b as u32)).collect();
        latches.sort();
        let header = BlockId(l.header as u32);
        let (local_count, heuristic) = match estimate_latch_count(f, header, &body, &latches) {
            Some(c) => (c, false),
            None => (default_count, true),
        };
        LoopNode {
            header,
            irreducible_inside: irreducible.iter().any(|(a, b)| l.body.contains(a) && l.body.contains(b)),
            body,
            latches,
            exits,
            children,
            local_count,
            heuristic,
        }
    }

    let roots = (0..flats.len())
        .filter(|&i| parent[i].is_none())
        .map(|i| build(i, &flats, &parent, f, &succs, &dom, &irreducible_edges, default_count))
        .collect();
    LoopForest { roots, warnings }
}

fn find_def(f: &MirFunction, v: ValueId) -> Option<(BlockId, &Stmt)> {
    f.blocks
        .iter()
        .flat_map(|b| b.stmts.iter().map(move |s| (b.id, s)))
        .find(|(_, s)| s.def() == Some(v))
}

/// Recognizes `iv = phi(c0, iv + s)` with an exit test `iv' cmp N` against
/// constants, either at the header on the phi or at the single latch on
/// the incremented value, and returns trip count minus one.
fn estimate_latch_count(f: &MirFunction, header: BlockId, body: &[BlockId], latches: &[BlockId]) -> Option<u64> {
    let [latch] = latches else { return None };
    let in_body = |b: BlockId| body.binary_search(&b).is_ok();
    for &test_block in &[*latch, header] {
        let Terminator::Branch {
            cond: Operand::Value(c),
            then_bb,
            else_bb,
        } = f.block(test_block).term
        else {
            continue;
        };
        let stay_on_true = match (in_body(then_bb), in_body(else_bb)) {
            (true, false) => true,
            (false, true) => false,
            _ => continue,
        };
        let Some((_, Stmt::Assign { rv: Rvalue::Binary(op, a, b), .. })) = find_def(f, c) else {
            continue;
        };
        let (op, subject, bound) = match (a, b) {
            (Operand::Value(v), Operand::Const(n)) => (*op, *v, *n),
            (Operand::Const(n), Operand::Value(v)) => (swap_compare(*op)?, *v, *n),
            _ => continue,
        };
        if !op.is_compare() {
            continue;
        }
        let op = if stay_on_true { op } else { negate_compare(op) };

        // Identify the induction phi and its step.
        for s in &f.block(header).stmts {
            let Stmt::Phi { dst: iv, args } = s else { continue };
            let mut init = None;
            let mut next = None;
            for (p, o) in args {
                if p == latch {
                    next = o.value();
                } else {
                    init = match o {
                        Operand::Const(c) => Some(*c),
                        _ => None,
                    };
                }
            }
            let (Some(init), Some(next)) = (init, next) else { continue };
            if args.len() != 2 {
                continue;
            }
            let step = match find_def(f, next) {
                Some((blk, Stmt::Assign { rv: Rvalue::Binary(BinOp::Add, x, y), .. })) if in_body(blk) => match (x, y) {
                    (Operand::Value(v), Operand::Const(k)) | (Operand::Const(k), Operand::Value(v)) if *v == *iv => *k as i64,
                    _ => continue,
                },
                Some((blk, Stmt::Assign { rv: Rvalue::Binary(BinOp::Sub, Operand::Value(v), Operand::Const(k)), .. }))
                    if in_body(blk) && *v == *iv =>
                {
                    -(*k as i64)
                }
                _ => continue,
            };
            let first_test = if subject == next && test_block == *latch {
                1
            } else if subject == *iv && test_block == header {
                0
            } else {
                continue;
            };
            let trips = first_failing_step(op, init as i64, step, bound as i64, first_test)?;
            return Some(trips.saturating_sub(1));
        }
    }
    None
}

fn swap_compare(op: BinOp) -> Option<BinOp> {
    Some(match op {
        BinOp::Lt => BinOp::Gt,
        BinOp::Le => BinOp::Ge,
        BinOp::Gt => BinOp::Lt,
        BinOp::Ge => BinOp::Le,
        BinOp::Eq => BinOp::Eq,
        BinOp::Ne => BinOp::Ne,
        _ => return None,
    })
}

fn negate_compare(op: BinOp) -> BinOp {
    match op {
        BinOp::Lt => BinOp::Ge,
        BinOp::Le => BinOp::Gt,
        BinOp::Gt => BinOp::Le,
        BinOp::Ge => BinOp::Lt,
        BinOp::Eq => BinOp::Ne,
        BinOp::Ne => BinOp::Eq,
        other => other,
    }
}

/// Smallest k >= k0 for which `(init + k*step) op bound` is false, provided
/// every value the induction variable takes up to that point fits in 32
/// bits. `None` when the loop would not terminate without wraparound.
pub fn first_failing_step(op: BinOp, init: i64, step: i64, bound: i64, k0: u64) -> Option<u64> {
    let holds = |k: u64| -> bool {
        let v = init + k as i64 * step;
        match op {
            BinOp::Lt => v < bound,
            BinOp::Le => v <= bound,
            BinOp::Gt => v > bound,
            BinOp::Ge => v >= bound,
            BinOp::Eq => v == bound,
            BinOp::Ne => v != bound,
            _ => false,
        }
    };
    let ceil_div = |a: i64, b: i64| -> i64 { (a + b - 1).div_euclid(b) };
    if !holds(k0) {
        return Some(k0);
    }
    let k = match op {
        BinOp::Lt | BinOp::Le => {
            if step <= 0 {
                return None;
            }
            let limit = if op == BinOp::Lt { bound } else { bound + 1 };
            ceil_div(limit - init, step).max(k0 as i64)
        }
        BinOp::Gt | BinOp::Ge => {
            if step >= 0 {
                return None;
            }
            let limit = if op == BinOp::Gt { bound } else { bound - 1 };
            ceil_div(init - limit, -step).max(k0 as i64)
        }
        BinOp::Ne => {
            if step == 0 || (bound - init) % step != 0 || (bound - init) / step < k0 as i64 {
                return None;
            }
            (bound - init) / step
        }
        BinOp::Eq if step != 0 => k0 as i64 + 1,
        _ => return None,
    };
    let last = init + k * step;
    if last < i32::MIN as i64 || last > i32::MAX as i64 {
        return None;
    }
    Some(k as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(op: BinOp, init: i32, step: i32, bound: i32, k0: u64) -> Option<u64> {
        let mut v = init as i64 + k0 as i64 * step as i64;
        let mut k = k0;
        while k < 100_000 {
            if v < i32::MIN as i64 || v > i32::MAX as i64 {
                return None;
            }
            if crate::semantics::eval_binary(op, v as i32, bound).unwrap() == 0 {
                return Some(k);
            }
            v += step as i64;
            k += 1;
        }
        None
    }

    proptest! {
        #[test]
        fn closed_form_trip_count_matches_enumeration(
            op in prop::sample::select(vec![BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge, BinOp::Ne, BinOp::Eq]),
            init in -200i32..200,
            step in -7i32..8,
            bound in -200i32..200,
            k0 in 0u64..2,
        ) {
            let expected = brute(op, init, step, bound, k0);
            prop_assert_eq!(first_failing_step(op, init as i64, step as i64, bound as i64, k0), expected);
        }
    }

    #[test]
    fn listing_bounds() {
        // for (i = 0; i < N; i++) in rotated form tests i+1 after each body
        assert_eq!(first_failing_step(BinOp::Lt, 0, 1, 100, 1), Some(100));
        assert_eq!(first_failing_step(BinOp::Lt, 0, 1, 30, 1), Some(30));
        assert_eq!(first_failing_step(BinOp::Lt, 0, 1, 10, 1), Some(10));
    }
}
