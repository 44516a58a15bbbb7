use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::RngCore;

use super::engine::{simulate, PruneMode, SimulationSpec};
use crate::numeric;
use crate::partitions::DislocationMeasure;
use crate::rng::{exponential, replica_seed, SplitMix};
use crate::{math, Error, Result};

/// How a node's children are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CmjMode {
    /// Children are the fragments of a unit-mass process observed after unit time.
    #[default]
    Observation,
    /// Children are the pieces of the node's next dislocation.
    Event,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmjOptions {
    pub mode: CmjMode,
    /// Nodes above this height are kept but not expanded.
    pub height_cap: f64,
    pub max_children: u64,
    pub max_nodes: u64,
    pub jump_floor: f64,
}

impl Default for CmjOptions {
    fn default() -> Self {
        Self {
            mode: CmjMode::Observation,
            height_cap: f64::INFINITY,
            max_children: 1_000_000,
            max_nodes: 100_000_000,
            jump_floor: 0.0,
        }
    }
}

/// A node of the genealogy; its Ulam–Harris word is recovered from the parent chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmjNode {
    pub parent: Option<usize>,
    /// 1-based position among the parent's children.
    pub index: u32,
    pub depth: u32,
    pub height: f64,
    pub obs_time: f64,
    pub expanded: bool,
}

/// Nodes in breadth-first order; the children of a node are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct CmjTree {
    nodes: Vec<CmjNode>,
    children: Vec<(usize, usize)>,
}

impl CmjTree {
    pub fn nodes(&self) -> &[CmjNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Indices of the children of node `i`.
    pub fn children(&self, i: usize) -> core::ops::Range<usize> {
        let (start, len) = self.children[i];
        start..start + len
    }

    pub fn word(&self, i: usize) -> Vec<u32> {
        let mut w = Vec::with_capacity(self.nodes[i].depth as usize);
        let mut cur = i;
        while let Some(p) = self.nodes[cur].parent {
            w.push(self.nodes[cur].index);
            cur = p;
        }
        w.reverse();
        w
    }

    /// Dot-separated word; the root is the empty string.
    pub fn word_string(&self, i: usize) -> String {
        let mut s = String::new();
        for (k, x) in self.word(i).iter().enumerate() {
            if k > 0 {
                s.push('.');
            }
            s.push_str(&alloc::format!("{x}"));
        }
        s
    }

    /// `|Σᵢ e^{-(H(wi) - H(w))} - 1|` for an expanded node.
    pub fn conservation_residual(&self, i: usize) -> f64 {
        let h = self.nodes[i].height;
        let s: f64 = self.children(i).map(|c| math::exp(-(self.nodes[c].height - h))).sum();
        (s - 1.0).abs()
    }

    pub fn is_ancestor(&self, a: usize, mut b: usize) -> bool {
        while let Some(p) = self.nodes[b].parent {
            if p == a {
                return true;
            }
            b = p;
        }
        false
    }
}

/// Builds the CMJ genealogy breadth-first for up to `generations` levels.
///
/// With `truncation_m`, children whose height increment exceeds it are dropped.
pub fn cmj_project<R: RngCore + ?Sized>(
    measure: &DislocationMeasure,
    alpha: f64,
    generations: u32,
    truncation_m: Option<f64>,
    options: &CmjOptions,
    rng: &mut R,
) -> Result<CmjTree> {
    if generations < 1 {
        return Err(Error::invalid("generations", "must be at least 1"));
    }
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha", "must be positive"));
    }
    if truncation_m.is_some_and(|m| !(m > 0.0)) {
        return Err(Error::invalid("truncation_m", "must be positive"));
    }
    let tree_seed = rng.next_u64();
    let rate = measure.event_rate(options.jump_floor)?;
    let mut nodes = alloc::vec![CmjNode {
        parent: None,
        index: 0,
        depth: 0,
        height: 0.0,
        obs_time: 0.0,
        expanded: false,
    }];
    let mut children = alloc::vec![(0usize, 0usize)];
    let mut increments: Vec<f64> = Vec::new();
    let mut next = 0;
    while next < nodes.len() {
        let node = nodes[next];
        if node.depth >= generations || node.height > options.height_cap {
            next += 1;
            continue;
        }
        let mut nrng = SplitMix::new(replica_seed(tree_seed, next as u64));
        increments.clear();
        let step_time;
        match options.mode {
            CmjMode::Observation => {
                // Fragments beyond the cap (and beyond M) need no further detail.
                let slack = truncation_m.unwrap_or(0.0).max(options.height_cap - node.height);
                let mut spec = SimulationSpec::new(alpha, 1.0, slack + 1e-9).with_jump_floor(options.jump_floor);
                spec.prune = PruneMode::Freeze;
                spec.max_events = options.max_children;
                let pop = simulate(measure, &spec, &mut nrng).map_err(|e| match e {
                    Error::ExplosionGuard { .. } => Error::ExplosionGuard {
                        what: "children",
                        limit: options.max_children,
                    },
                    other => other,
                })?;
                let mut live = pop.live;
                live.sort_by(|a, b| a.log_size.total_cmp(&b.log_size).then(a.id.cmp(&b.id)));
                increments.extend(live.iter().map(|f| f.log_size));
                step_time = math::exp(alpha * node.height);
            }
            CmjMode::Event => {
                let split = measure.sample_split(options.jump_floor, &mut nrng)?;
                increments.extend((0..split.len()).map(|i| split.neg_log_mass(i)));
                step_time = exponential(&mut nrng, rate) * math::exp(alpha * node.height);
            }
        }
        if increments.len() as u64 > options.max_children {
            return Err(Error::ExplosionGuard {
                what: "children",
                limit: options.max_children,
            });
        }
        let start = nodes.len();
        let mut k = 0;
        for &dh in &increments {
            if truncation_m.is_some_and(|m| dh > m) {
                continue;
            }
            k += 1;
            nodes.push(CmjNode {
                parent: Some(next),
                index: k,
                depth: node.depth + 1,
                height: node.height + dh,
                obs_time: node.obs_time + step_time,
                expanded: false,
            });
            children.push((0, 0));
        }
        if nodes.len() as u64 > options.max_nodes {
            return Err(Error::ExplosionGuard {
                what: "nodes",
                limit: options.max_nodes,
            });
        }
        nodes[next].expanded = true;
        children[next] = (start, k as usize);
        next += 1;
    }
    Ok(CmjTree { nodes, children })
}

/// First entries into the band `(h - a, h]`: band nodes none of whose ancestors lie in the band.
pub fn extract_antichain(tree: &CmjTree, h: f64, a: f64) -> Result<Vec<usize>> {
    if !(a > 0.0 && a < core::f64::consts::LN_2) {
        return Err(Error::invalid("a", "must lie in (0, log 2)"));
    }
    let lo = h - a;
    let mut out = Vec::new();
    let mut stack = alloc::vec![0usize];
    while let Some(i) = stack.pop() {
        let n = tree.nodes[i];
        if n.height > h {
            continue;
        }
        if n.height > lo {
            out.push(i);
            continue;
        }
        if !n.expanded {
            return Err(Error::IncompleteFrontier {
                height: n.height,
                needed: lo,
            });
        }
        stack.extend(tree.children(i));
    }
    out.sort_unstable();
    Ok(out)
}

/// Whether no selected node is an ancestor of another.
pub fn is_prefix_free(tree: &CmjTree, selected: &[usize]) -> bool {
    let set: BTreeSet<usize> = selected.iter().copied().collect();
    selected.iter().all(|&i| {
        let mut cur = i;
        while let Some(p) = tree.nodes[cur].parent {
            if set.contains(&p) {
                return false;
            }
            cur = p;
        }
        true
    })
}

/// `Z_h^a = #{w : H(w) ∈ (h - a, h]}`, or `#{w : H(w) ≤ h}` when `a` is `None`.
pub fn count_heights(nodes: &[CmjNode], h: f64, a: Option<f64>) -> usize {
    nodes
        .iter()
        .filter(|n| n.height <= h && a.is_none_or(|a| n.height > h - a))
        .count()
}

/// Empirical Malthusian root: `κ` with mean over expanded nodes of `Σ e^{-κ ΔH}` equal to 1.
pub fn malthusian_root(tree: &CmjTree) -> Result<f64> {
    let expanded: Vec<usize> = (0..tree.len()).filter(|&i| tree.nodes[i].expanded).collect();
    if expanded.is_empty() {
        return Err(Error::invalid("tree", "no expanded nodes"));
    }
    let mean = |kappa: f64| {
        let total: f64 = expanded
            .iter()
            .map(|&i| {
                let h = tree.nodes[i].height;
                tree.children(i)
                    .map(|c| math::exp(-kappa * (tree.nodes[c].height - h)))
                    .sum::<f64>()
            })
            .sum();
        total / expanded.len() as f64 - 1.0
    };
    if mean(0.0) <= 0.0 {
        return Err(Error::NumericFailure {
            context: "Malthusian root (subcritical tree)",
            residual: mean(0.0),
        });
    }
    let mut hi = 1.0;
    while mean(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NumericFailure {
                context: "Malthusian root bracket",
                residual: mean(hi),
            });
        }
    }
    numeric::bisect(mean, 0.0, hi, 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;

    fn ksplit_tree(generations: u32) -> CmjTree {
        let m = DislocationMeasure::k_split(2, 1.0).unwrap();
        let opts = CmjOptions {
            mode: CmjMode::Event,
            ..CmjOptions::default()
        };
        cmj_project(&m, 1.0, generations, None, &opts, &mut replica_rng(1, 0)).unwrap()
    }

    #[test]
    fn root_and_first_generation() {
        let m = DislocationMeasure::uniform_binary(1.0).unwrap();
        let t = cmj_project(&m, 1.0, 3, None, &CmjOptions::default(), &mut replica_rng(2, 0)).unwrap();
        assert_eq!(t.nodes()[0].height, 0.0);
        assert_eq!(t.nodes()[0].obs_time, 0.0);
        for c in t.children(0) {
            assert_eq!(t.nodes()[c].obs_time, 1.0);
        }
        for i in 0..t.len() {
            if t.nodes()[i].expanded {
                assert!(t.conservation_residual(i) < 1e-9);
            }
        }
    }

    #[test]
    fn dyadic_event_tree() {
        let t = ksplit_tree(8);
        let ln2 = core::f64::consts::LN_2;
        for n in 1..=7u32 {
            let h = n as f64 * ln2 + 0.01;
            let q = extract_antichain(&t, h, 0.5).unwrap();
            assert_eq!(q.len(), 1 << n);
            assert!(q.iter().all(|&i| t.nodes()[i].depth == n));
            assert!(is_prefix_free(&t, &q));
            assert_eq!(count_heights(t.nodes(), h, None), (1 << (n + 1)) - 1);
        }
    }

    #[test]
    fn incomplete_frontier_detected() {
        let t = ksplit_tree(3);
        assert!(matches!(
            extract_antichain(&t, 6.0 * core::f64::consts::LN_2, 0.5),
            Err(Error::IncompleteFrontier { .. })
        ));
    }

    #[test]
    fn words_are_dot_separated() {
        let t = ksplit_tree(3);
        assert_eq!(t.word_string(0), "");
        let last = t.len() - 1;
        assert_eq!(t.word_string(last), "2.2.2");
        assert!(t.is_ancestor(0, last));
    }

    #[test]
    fn truncated_malthusian_root_below_one() {
        let m = DislocationMeasure::uniform_binary(1.0).unwrap();
        let opts = CmjOptions {
            height_cap: 8.0,
            ..CmjOptions::default()
        };
        let full = cmj_project(&m, 1.0, 1000, None, &opts, &mut replica_rng(3, 0)).unwrap();
        let k_full = malthusian_root(&full).unwrap();
        assert!((k_full - 1.0).abs() < 1e-9);
        let mut prev = 0.0;
        for mcut in [1.0, 3.0, 6.0] {
            let t = cmj_project(&m, 1.0, 1000, Some(mcut), &opts, &mut replica_rng(3, 0)).unwrap();
            for i in 0..t.len() {
                if t.nodes()[i].expanded {
                    let h = t.nodes()[i].height;
                    let s: f64 = t.children(i).map(|c| math::exp(-(t.nodes()[c].height - h))).sum();
                    assert!(s <= 1.0 + 1e-12);
                }
            }
            let k = malthusian_root(&t).unwrap();
            assert!(k < 1.0 && k > prev, "M={mcut} κ={k}");
            prev = k;
        }
    }

    #[test]
    fn observation_mode_counts_grow_like_exp() {
        let m = DislocationMeasure::uniform_binary(1.0).unwrap();
        let opts = CmjOptions {
            height_cap: 9.0,
            ..CmjOptions::default()
        };
        let t = cmj_project(&m, 1.0, 10_000, None, &opts, &mut replica_rng(4, 0)).unwrap();
        let z7 = count_heights(t.nodes(), 7.0, None) as f64 * math::exp(-7.0);
        let z9 = count_heights(t.nodes(), 9.0, None) as f64 * math::exp(-9.0);
        assert!(z9 / z7 < 3.0 && z7 / z9 < 3.0);
        let q = extract_antichain(&t, 9.0, 0.5).unwrap();
        assert!(is_prefix_free(&t, &q));
    }
}
