//! Dominator trees and dominance frontiers over index-based graphs, using
//! the iterative data-flow formulation (Cooper, Harvey, Kennedy).

use super::MirFunction;

/// Reverse postorder of the nodes reachable from `entry`.
pub fn reverse_postorder(succs: &[Vec<usize>], entry: usize) -> Vec<usize> {
    let n = succs.len();
    let mut visited = vec![false; n];
    let mut post = Vec::with_capacity(n);
    // (node, next successor position)
    let mut stack = vec![(entry, 0usize)];
    visited[entry] = true;
    while let Some((node, pos)) = stack.last_mut() {
        let node = *node;
        if let Some(&s) = succs[node].get(*pos) {
            *pos += 1;
            if !visited[s] {
                visited[s] = true;
                stack.push((s, 0));
            }
        } else {
            post.push(node);
            stack.pop();
        }
    }
    post.reverse();
    post
}

pub fn successor_lists(f: &MirFunction) -> Vec<Vec<usize>> {
    f.blocks
        .iter()
        .map(|b| b.term.successors().into_iter().map(|s| s.index()).collect())
        .collect()
}

#[derive(Debug, Clone)]
pub struct Dominators {
    idom: Vec<Option<usize>>,
    rpo: Vec<usize>,
    rpo_index: Vec<usize>,
    entry: usize,
}

impl Dominators {
    pub fn compute(succs: &[Vec<usize>], entry: usize) -> Dominators {
        let n = succs.len();
        let rpo = reverse_postorder(succs, entry);
        let mut rpo_index = vec![usize::MAX; n];
        for (i, &b) in rpo.iter().enumerate() {
            rpo_index[b] = i;
        }
        let mut preds = vec![Vec::new(); n];
        for (b, ss) in succs.iter().enumerate() {
            if rpo_index[b] == usize::MAX {
                continue;
            }
            for &s in ss {
                preds[s].push(b);
            }
        }
        let mut idom: Vec<Option<usize>> = vec![None; n];
        idom[entry] = Some(entry);
        let mut changed = true;
        while changed {
            changed = false;
            for &b in rpo.iter().skip(1) {
                let mut new_idom: Option<usize> = None;
                for &p in &preds[b] {
                    if idom[p].is_none() {
                        continue;
                    }
                    new_idom = Some(match new_idom {
                        None => p,
                        Some(cur) => intersect(&idom, &rpo_index, p, cur),
                    });
                }
                if new_idom.is_some() && idom[b] != new_idom {
                    idom[b] = new_idom;
                    changed = true;
                }
            }
        }
        Dominators {
            idom,
            rpo,
            rpo_index,
            entry,
        }
    }

    pub fn of(f: &MirFunction) -> Dominators {
        Dominators::compute(&successor_lists(f), f.entry.index())
    }

    pub fn is_reachable(&self, b: usize) -> bool {
        self.rpo_index.get(b).is_some_and(|&i| i != usize::MAX)
    }

    /// Immediate dominator; `None` for the entry and unreachable nodes.
    pub fn idom(&self, b: usize) -> Option<usize> {
        if b == self.entry {
            return None;
        }
        self.idom[b]
    }

    pub fn rpo(&self) -> &[usize] {
        &self.rpo
    }

    pub fn rpo_index(&self, b: usize) -> Option<usize> {
        self.rpo_index.get(b).copied().filter(|&i| i != usize::MAX)
    }

    /// Reflexive dominance.
    pub fn dominates(&self, a: usize, b: usize) -> bool {
        if !self.is_reachable(a) || !self.is_reachable(b) {
            return false;
        }
        let mut cur = b;
        loop {
            if cur == a {
                return true;
            }
            match self.idom(cur) {
                Some(p) => cur = p,
                None => return false,
            }
        }
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.idom.len()];
        for &b in &self.rpo {
            if let Some(p) = self.idom(b) {
                ch[p].push(b);
            }
        }
        ch
    }

    pub fn frontiers(&self, succs: &[Vec<usize>]) -> Vec<Vec<usize>> {
        let n = succs.len();
        let mut preds = vec![Vec::new(); n];
        for (b, ss) in succs.iter().enumerate() {
            if self.is_reachable(b) {
                for &s in ss {
                    preds[s].push(b);
                }
            }
        }
        let mut df = vec![Vec::new(); n];
        for b in 0..n {
            if preds[b].len() < 2 && b != self.entry {
                continue;
            }
            let Some(target) = self.idom[b] else { continue };
            for &p in &preds[b] {
                let mut runner = p;
                loop {
                    if b != self.entry && runner == target {
                        break;
                    }
                    if !df[runner].contains(&b) {
                        df[runner].push(b);
                    }
                    if runner == self.entry {
                        break;
                    }
                    runner = self.idom[runner].expect("reachable node has idom");
                }
            }
        }
        df
    }
}

fn intersect(idom: &[Option<usize>], rpo_index: &[usize], mut a: usize, mut b: usize) -> usize {
    while a != b {
        while rpo_index[a] > rpo_index[b] {
            a = idom[a].expect("processed node has idom");
        }
        while rpo_index[b] > rpo_index[a] {
            b = idom[b].expect("processed node has idom");
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// v dominates w iff w is unreachable from the entry once v is removed.
    fn brute_dominates(succs: &[Vec<usize>], entry: usize, v: usize, w: usize) -> bool {
        if v == w {
            return true;
        }
        if v == entry {
            return true;
        }
        let mut seen = vec![false; succs.len()];
        let mut stack = vec![entry];
        seen[entry] = true;
        while let Some(n) = stack.pop() {
            for &s in &succs[n] {
                if s != v && !seen[s] {
                    seen[s] = true;
                    stack.push(s);
                }
            }
        }
        !seen[w]
    }

    fn reachable(succs: &[Vec<usize>], entry: usize) -> Vec<bool> {
        let mut seen = vec![false; succs.len()];
        let mut stack = vec![entry];
        seen[entry] = true;
        while let Some(n) = stack.pop() {
            for &s in &succs[n] {
                if !seen[s] {
                    seen[s] = true;
                    stack.push(s);
                }
            }
        }
        seen
    }

    fn graph() -> impl Strategy<Value = Vec<Vec<usize>>> {
        (2usize..9).prop_flat_map(|n| {
            proptest::collection::vec(proptest::collection::vec(0..n, 0..3), n).prop_map(|mut g| {
                for ss in &mut g {
                    ss.sort_unstable();
                    ss.dedup();
                }
                g
            })
        })
    }

    proptest! {
        #[test]
        fn iterative_dominators_match_brute_force(succs in graph()) {
            let dom = Dominators::compute(&succs, 0);
            let reach = reachable(&succs, 0);
            for v in 0..succs.len() {
                for w in 0..succs.len() {
                    if reach[v] && reach[w] {
                        prop_assert_eq!(dom.dominates(v, w), brute_dominates(&succs, 0, v, w), "v={} w={}", v, w);
                    }
                }
            }
        }

        #[test]
        fn frontier_definition_holds(succs in graph()) {
            let dom = Dominators::compute(&succs, 0);
            let reach = reachable(&succs, 0);
            let df = dom.frontiers(&succs);
            for x in 0..succs.len() {
                if !reach[x] { continue; }
                // y in DF(x) iff x dominates a predecessor of y but does not strictly dominate y
                for y in 0..succs.len() {
                    if !reach[y] { continue; }
                    let expected = (0..succs.len()).any(|p| reach[p] && succs[p].contains(&y) && dom.dominates(x, p))
                        && !(x != y && dom.dominates(x, y));
                    prop_assert_eq!(df[x].contains(&y), expected, "x={} y={}", x, y);
                }
            }
        }
    }

    #[test]
    fn diamond() {
        let succs = vec![vec![1, 2], vec![3], vec![3], vec![]];
        let dom = Dominators::compute(&succs, 0);
        assert_eq!(dom.idom(3), Some(0));
        assert_eq!(dom.frontiers(&succs)[1], vec![3]);
    }
}
