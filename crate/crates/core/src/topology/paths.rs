//! Path search under label constraints.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{IntraGraph, TopologyError, TopologyRepository};
use crate::ids::{AsId, SwitchId};
use crate::policy::{LabelBounds, SecurityLabel};

/// AS adjacency with labels, assembled from one or more repositories.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AsMap {
    pub labels: BTreeMap<AsId, SecurityLabel>,
    pub adjacency: BTreeMap<AsId, BTreeSet<AsId>>,
}

impl AsMap {
    pub fn from_repositories<'a>(repos: impl IntoIterator<Item = &'a TopologyRepository>) -> Self {
        let mut m = AsMap::default();
        for r in repos {
            let owner = &r.owner.id;
            m.labels.insert(owner.clone(), r.owner.label);
            m.adjacency.entry(owner.clone()).or_default();
            for e in r.entries.values() {
                m.labels.entry(e.as_id.clone()).or_insert(e.sec_label);
                m.adjacency.entry(e.as_id.clone()).or_default();
                if e.hops == 1 {
                    m.link(owner, &e.as_id);
                }
            }
        }
        m
    }

    pub fn link(&mut self, a: &AsId, b: &AsId) {
        self.adjacency.entry(a.clone()).or_default().insert(b.clone());
        self.adjacency.entry(b.clone()).or_default().insert(a.clone());
    }

    pub fn neighbors(&self, a: &AsId) -> impl Iterator<Item = &AsId> {
        self.adjacency.get(a).into_iter().flatten()
    }
}

/// All simple AS paths from `src` to `dst` whose transit domains satisfy
/// `bounds`, ordered by length then lexicographically.
pub fn find_as_paths(
    map: &AsMap,
    src: &AsId,
    dst: &AsId,
    bounds: impl Into<LabelBounds>,
) -> Vec<Vec<AsId>> {
    let bounds = bounds.into();
    let mut out = Vec::new();
    if src == dst || !map.adjacency.contains_key(src) || !map.adjacency.contains_key(dst) {
        return out;
    }
    let mut stack = vec![src.clone()];
    dfs(map, dst, &bounds, &mut stack, &mut out);
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

fn dfs(map: &AsMap, dst: &AsId, bounds: &LabelBounds, stack: &mut Vec<AsId>, out: &mut Vec<Vec<AsId>>) {
    let cur = stack.last().expect("nonempty").clone();
    for n in map.neighbors(&cur) {
        if stack.contains(n) {
            continue;
        }
        if n == dst {
            let mut p = stack.clone();
            p.push(n.clone());
            out.push(p);
            continue;
        }
        let ok = map.labels.get(n).is_some_and(|l| bounds.satisfies(*l));
        if ok {
            stack.push(n.clone());
            dfs(map, dst, bounds, stack, out);
            stack.pop();
        }
    }
}

/// Route between two switches of one domain.
///
/// A `required` path is checked and returned verbatim. Otherwise the
/// shortest path whose every switch satisfies `bounds` is chosen; among
/// equals, each step prefers a neighbour whose label is at least the current
/// switch's, then the smallest id.
pub fn find_switch_path(
    graph: &IntraGraph,
    ingress: &SwitchId,
    egress: &SwitchId,
    required: Option<&[SwitchId]>,
    bounds: impl Into<LabelBounds>,
) -> Result<Vec<SwitchId>, TopologyError> {
    let bounds = bounds.into();
    for s in [ingress, egress] {
        if !graph.contains(s) {
            return Err(TopologyError::UnknownSwitch(s.clone()));
        }
    }
    if let Some(path) = required {
        return validate_required(graph, ingress, egress, path, &bounds);
    }
    let ok = |s: &SwitchId| graph.label(s).is_some_and(|l| bounds.satisfies(l));
    let no_path = || TopologyError::NoPath {
        from: ingress.to_string(),
        to: egress.to_string(),
    };
    if !ok(ingress) || !ok(egress) {
        return Err(no_path());
    }

    // Hop distance to the egress over admissible switches.
    let mut dist: BTreeMap<&SwitchId, usize> = BTreeMap::from([(egress, 0)]);
    let mut queue = VecDeque::from([egress]);
    while let Some(s) = queue.pop_front() {
        let d = dist[s];
        for n in graph.neighbors(s) {
            if ok(n) && !dist.contains_key(n) {
                dist.insert(n, d + 1);
                queue.push_back(n);
            }
        }
    }
    let mut d = *dist.get(ingress).ok_or_else(no_path)?;
    let mut path = vec![ingress.clone()];
    let mut cur = ingress;
    while d > 0 {
        let cur_label = graph.label(cur);
        let next = graph
            .neighbors(cur)
            .filter(|n| dist.get(n) == Some(&(d - 1)))
            .min_by_key(|n| (graph.label(n) < cur_label, (*n).clone()))
            .expect("distance layer is consistent");
        path.push(next.clone());
        cur = next;
        d -= 1;
    }
    Ok(path)
}

fn validate_required(
    graph: &IntraGraph,
    ingress: &SwitchId,
    egress: &SwitchId,
    path: &[SwitchId],
    bounds: &LabelBounds,
) -> Result<Vec<SwitchId>, TopologyError> {
    let bad = |m: String| Err(TopologyError::InvalidPath(m));
    if path.first() != Some(ingress) || path.last() != Some(egress) {
        return bad(format!("must run from {ingress} to {egress}"));
    }
    let mut seen = BTreeSet::new();
    for s in path {
        let Some(l) = graph.label(s) else {
            return Err(TopologyError::UnknownSwitch(s.clone()));
        };
        if !bounds.satisfies(l) {
            return Err(TopologyError::NoPath {
                from: ingress.to_string(),
                to: egress.to_string(),
            });
        }
        if !seen.insert(s) {
            return bad(format!("{s} repeats"));
        }
    }
    for w in path.windows(2) {
        if !graph.neighbors(&w[0]).any(|n| n == &w[1]) {
            return bad(format!("no link {} - {}", w[0], w[1]));
        }
    }
    Ok(path.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sl(n: u32) -> SecurityLabel {
        SecurityLabel::new(n).unwrap()
    }

    fn graph(edges: &[(&str, &str)], labels: &[(&str, u32)]) -> IntraGraph {
        let mut g = IntraGraph::default();
        for (s, l) in labels {
            g.add_switch(SwitchId::from(*s), sl(*l));
        }
        for (a, b) in edges {
            g.link(&SwitchId::from(*a), &SwitchId::from(*b));
        }
        g
    }

    #[test]
    fn single_node_path() {
        let g = graph(&[], &[("A", 1)]);
        let a = SwitchId::from("A");
        assert_eq!(find_switch_path(&g, &a, &a, None, LabelBounds::ANY).unwrap(), vec![a]);
    }

    #[test]
    fn pairwise_rule_breaks_ties_before_ids() {
        // A -> {B (SL1), C (SL3)} -> D; A is SL2 so C is preferred.
        let g = graph(
            &[("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")],
            &[("A", 2), ("B", 1), ("C", 3), ("D", 2)],
        );
        let p = find_switch_path(&g, &"A".into(), &"D".into(), None, LabelBounds::ANY).unwrap();
        let ids: Vec<&str> = p.iter().map(SwitchId::as_str).collect();
        assert_eq!(ids, ["A", "C", "D"]);
    }

    #[test]
    fn required_path_checks() {
        let g = graph(&[("A", "B"), ("B", "C")], &[("A", 1), ("B", 1), ("C", 1)]);
        let req: Vec<SwitchId> = ["A", "C"].map(SwitchId::from).to_vec();
        assert!(matches!(
            find_switch_path(&g, &"A".into(), &"C".into(), Some(&req), LabelBounds::ANY),
            Err(TopologyError::InvalidPath(_))
        ));
        let req: Vec<SwitchId> = ["A", "B", "C"].map(SwitchId::from).to_vec();
        let strict = LabelBounds { lo: sl(2), hi: None };
        assert!(matches!(
            find_switch_path(&g, &"A".into(), &"C".into(), Some(&req), strict),
            Err(TopologyError::NoPath { .. })
        ));
    }
}
