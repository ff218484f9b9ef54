//! Plane trees stored as depth-first outdegree sequences, the Łukasiewicz
//! coding, and the statistics of a size-conditioned tree.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::offspring::{OffspringDistribution, OffspringSampler};
use crate::walk::JumpVector;

/// A plane tree as outdegrees `k_{v_1}, ..., k_{v_n}` in depth-first order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlaneTree {
    outdegrees: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeStats {
    pub n: usize,
    /// Maximal outdegree.
    pub delta: u64,
    /// Maximal outdegree once one occurrence of `delta` is removed.
    pub delta2: u64,
    /// Depth of the first vertex (depth-first order) with outdegree `delta`.
    pub h_delta: usize,
    pub height: usize,
    /// 0-based depth-first index of that vertex.
    pub star_index: usize,
}

impl PlaneTree {
    /// Validates a depth-first outdegree sequence.
    pub fn from_outdegrees(outdegrees: Vec<u64>) -> Result<Self> {
        let inc: Vec<i64> = outdegrees.iter().map(|&k| k as i64 - 1).collect();
        if !is_lukasiewicz(&inc) {
            return Err(Error::Contract("outdegree sequence is not a Łukasiewicz excursion".into()));
        }
        Ok(Self { outdegrees })
    }

    pub(crate) fn from_trusted(outdegrees: Vec<u64>) -> Self {
        Self { outdegrees }
    }

    pub fn single() -> Self {
        Self { outdegrees: vec![0] }
    }

    pub fn outdegrees(&self) -> &[u64] {
        &self.outdegrees
    }

    pub fn len(&self) -> usize {
        self.outdegrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outdegrees.is_empty()
    }

    /// Łukasiewicz excursion `k_{v_i} - 1`.
    pub fn encode(&self) -> JumpVector {
        JumpVector::from_trusted(self.outdegrees.iter().map(|&k| k as i64 - 1).collect())
    }

    /// `Π_v μ_{k_v}`.
    pub fn weight(&self, dist: &OffspringDistribution) -> f64 {
        self.outdegrees.iter().map(|&k| dist.pmf(k)).product()
    }

    /// Depth of every vertex, in depth-first order.
    pub fn depths(&self) -> Vec<usize> {
        let mut depths = Vec::with_capacity(self.len());
        let mut open: Vec<u64> = Vec::new();
        for &k in &self.outdegrees {
            while open.last() == Some(&0) {
                open.pop();
            }
            depths.push(open.len());
            if let Some(top) = open.last_mut() {
                *top -= 1;
            }
            if k > 0 {
                open.push(k);
            }
        }
        depths
    }

    /// One depth-first pass with an explicit stack of unvisited child counts.
    pub fn stats(&self) -> TreeStats {
        let n = self.len();
        let mut open: Vec<u64> = Vec::new();
        let mut delta = 0u64;
        let mut star_index = 0usize;
        let mut h_delta = 0usize;
        let mut height = 0usize;
        let mut runner_up = 0u64;
        for (i, &k) in self.outdegrees.iter().enumerate() {
            while open.last() == Some(&0) {
                open.pop();
            }
            let depth = open.len();
            height = height.max(depth);
            if i == 0 || k > delta {
                if i > 0 {
                    runner_up = runner_up.max(delta);
                }
                delta = k;
                star_index = i;
                h_delta = depth;
            } else {
                runner_up = runner_up.max(k);
            }
            if let Some(top) = open.last_mut() {
                *top -= 1;
            }
            if k > 0 {
                open.push(k);
            }
        }
        let stats = TreeStats { n, delta, delta2: runner_up, h_delta, height, star_index };
        debug_assert!(stats.delta2 <= stats.delta && stats.h_delta <= stats.height);
        debug_assert!(n == 0 || (stats.height < n && (stats.delta as usize) < n));
        stats
    }

    /// Index one past the subtree rooted at vertex `start`.
    fn subtree_end(&self, start: usize) -> usize {
        let mut need = 1i64;
        let mut i = start;
        while need > 0 {
            need += self.outdegrees[i] as i64 - 1;
            i += 1;
        }
        i
    }

    /// Height of the tree; 0 for a single vertex.
    pub fn height(&self) -> usize {
        self.depths().into_iter().max().unwrap_or(0)
    }
}

/// Whether increments form an excursion ending at -1.
fn is_lukasiewicz(inc: &[i64]) -> bool {
    if inc.is_empty() || inc.iter().any(|&x| x < -1) {
        return false;
    }
    let mut w = 0i64;
    for (i, &x) in inc.iter().enumerate() {
        w += x;
        if i + 1 < inc.len() && w < 0 {
            return false;
        }
    }
    w == -1
}

/// Tree coded by an excursion.
pub fn decode(excursion: &JumpVector) -> Result<PlaneTree> {
    let inc = excursion.increments();
    if !is_lukasiewicz(inc) {
        return Err(Error::Contract("not a Łukasiewicz excursion".into()));
    }
    Ok(PlaneTree::from_trusted(inc.iter().map(|&x| (x + 1) as u64).collect()))
}

pub fn encode(tree: &PlaneTree) -> JumpVector {
    tree.encode()
}

/// The forest of subtrees rooted at children `j..=k` (1-based) of the first
/// maximal-outdegree vertex; `None` stands for an empty tree past `Δ`.
pub fn graft_forest(tree: &PlaneTree, j: usize, k: usize) -> Result<Vec<Option<PlaneTree>>> {
    if j < 1 || j > k {
        return Err(Error::Parameter(format!("need 1 <= j <= k, got j={j}, k={k}")));
    }
    let stats = tree.stats();
    let mut out = Vec::with_capacity(k - j + 1);
    let mut pos = stats.star_index + 1;
    for child in 1..=k {
        if child as u64 > stats.delta {
            if child >= j {
                out.push(None);
            }
            continue;
        }
        let end = tree.subtree_end(pos);
        if child >= j {
            out.push(Some(PlaneTree::from_trusted(tree.outdegrees[pos..end].to_vec())));
        }
        pos = end;
    }
    Ok(out)
}

/// Largest component height; 0 for an empty forest.
pub fn forest_height(forest: &[Option<PlaneTree>]) -> usize {
    forest.iter().flatten().map(PlaneTree::height).max().unwrap_or(0)
}

/// Height of the forest of all subtrees hanging from the first
/// maximal-outdegree vertex.
pub fn star_forest_height(tree: &PlaneTree) -> usize {
    let delta = tree.stats().delta as usize;
    if delta == 0 {
        return 0;
    }
    forest_height(&graft_forest(tree, 1, delta).expect("1 <= delta"))
}

/// Height and size of an unconditioned Bienaymé tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BienaymeSummary {
    pub height: usize,
    pub size: u64,
}

/// Generates an unconditioned Bienaymé tree generation by generation.
/// Returns `None` once more than `node_budget` vertices exist.
pub fn sample_bienayme<R: Rng + ?Sized>(
    sampler: &mut OffspringSampler<'_>,
    rng: &mut R,
    node_budget: u64,
) -> Option<BienaymeSummary> {
    let mut generation = 1u64;
    let mut total = 1u64;
    let mut height = 0usize;
    loop {
        let mut next = 0u64;
        for _ in 0..generation {
            next += sampler.sample(rng);
            if total + next > node_budget {
                return None;
            }
        }
        if next == 0 {
            return Some(BienaymeSummary { height, size: total });
        }
        total += next;
        height += 1;
        generation = next;
    }
}

/// Height of an unconditioned Bienaymé tree, or `None` past the budget.
pub fn sample_bienayme_height<R: Rng + ?Sized>(
    sampler: &mut OffspringSampler<'_>,
    rng: &mut R,
    node_budget: u64,
) -> Option<usize> {
    sample_bienayme(sampler, rng, node_budget).map(|s| s.height)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::vervaat;
    use proptest::prelude::*;

    fn tree(v: &[u64]) -> PlaneTree {
        PlaneTree::from_outdegrees(v.to_vec()).unwrap()
    }

    /// Explicit children lists for an independent recursive oracle.
    struct Node {
        k: u64,
        children: Vec<Node>,
    }

    fn build(deg: &[u64], pos: &mut usize) -> Node {
        let k = deg[*pos];
        *pos += 1;
        let children = (0..k).map(|_| build(deg, pos)).collect();
        Node { k, children }
    }

    fn all_nodes<'a>(node: &'a Node, depth: usize, out: &mut Vec<(u64, usize)>) {
        out.push((node.k, depth));
        for c in &node.children {
            all_nodes(c, depth + 1, out);
        }
    }

    fn rec_height(node: &Node) -> usize {
        node.children.iter().map(|c| 1 + rec_height(c)).max().unwrap_or(0)
    }

    fn brute_stats(deg: &[u64]) -> TreeStats {
        let mut pos = 0;
        let root = build(deg, &mut pos);
        let mut nodes = Vec::new();
        all_nodes(&root, 0, &mut nodes);
        let delta = nodes.iter().map(|x| x.0).max().unwrap();
        let star = nodes.iter().position(|x| x.0 == delta).unwrap();
        let delta2 = nodes.iter().enumerate().filter(|(i, _)| *i != star).map(|(_, x)| x.0).max().unwrap_or(0);
        TreeStats { n: deg.len(), delta, delta2, h_delta: nodes[star].1, height: rec_height(&root), star_index: star }
    }

    /// Random excursion: arbitrary jumps balanced to sum -1, then rotated by
    /// the cycle lemma.
    fn excursion_strategy(max_len: usize, max_jump: i64) -> impl Strategy<Value = JumpVector> {
        prop::collection::vec(-1..=max_jump, 1..=max_len).prop_map(|mut v| {
            let mut s: i64 = v.iter().sum();
            if s >= 0 {
                v.extend(std::iter::repeat(-1).take(s as usize + 1));
            }
            while s < -1 {
                let i = v.iter().position(|&x| x == -1).expect("sum below -1 needs a -1");
                v[i] = 0;
                s += 1;
            }
            vervaat(&JumpVector::new(v).unwrap()).unwrap()
        })
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode(&JumpVector::new(vec![-1]).unwrap()).unwrap(), tree(&[0]));
        assert_eq!(decode(&JumpVector::new(vec![2, -1, -1, -1]).unwrap()).unwrap(), tree(&[3, 0, 0, 0]));
        assert_eq!(decode(&JumpVector::new(vec![0, 0, -1]).unwrap()).unwrap(), tree(&[1, 1, 0]));
        assert!(decode(&JumpVector::new(vec![-1, 0]).unwrap()).is_err());
        assert!(PlaneTree::from_outdegrees(vec![2, 0]).is_err());
    }

    #[test]
    fn stats_examples() {
        let s = tree(&[0]).stats();
        assert_eq!((s.n, s.delta, s.delta2, s.h_delta, s.height), (1, 0, 0, 0, 0));
        let s = tree(&[3, 0, 0, 0]).stats();
        assert_eq!((s.delta, s.delta2, s.h_delta, s.height), (3, 0, 0, 1));
        let s = tree(&[1, 1, 0]).stats();
        assert_eq!((s.delta, s.delta2, s.h_delta, s.height, s.star_index), (1, 1, 0, 2, 0));
    }

    #[test]
    fn forest_examples() {
        let star = tree(&[3, 0, 0, 0]);
        let f = graft_forest(&star, 1, 3).unwrap();
        assert_eq!(f, vec![Some(PlaneTree::single()); 3]);
        assert_eq!(forest_height(&f), 0);
        assert_eq!(star_forest_height(&star), 0);
        let path = tree(&[1, 1, 0]);
        assert_eq!(graft_forest(&path, 1, 1).unwrap(), vec![Some(tree(&[1, 0]))]);
        // children past Δ are empty trees
        assert_eq!(graft_forest(&star, 2, 5).unwrap(), vec![Some(PlaneTree::single()), Some(PlaneTree::single()), None, None]);
        assert_eq!(forest_height(&[]), 0);
        assert!(graft_forest(&star, 0, 1).is_err());
    }

    #[test]
    fn weight_is_product_of_offspring_probabilities() {
        let d = OffspringDistribution::from_table(vec![0.6, 0.2, 0.2]).unwrap();
        let t = tree(&[2, 1, 0, 0]);
        assert!((t.weight(&d) - 0.2 * 0.2 * 0.6 * 0.6).abs() < 1e-17);
    }

    proptest! {
        #[test]
        fn stats_match_recursive_oracle(exc in excursion_strategy(4, 3)) {
            let t = decode(&exc).unwrap();
            prop_assert_eq!(t.stats(), brute_stats(t.outdegrees()));
        }

        #[test]
        fn coding_round_trip(exc in excursion_strategy(300, 6)) {
            let t = decode(&exc).unwrap();
            prop_assert_eq!(t.len(), exc.len());
            prop_assert_eq!(&t.encode(), &exc);
            prop_assert_eq!(decode(&encode(&t)).unwrap(), t);
        }

        #[test]
        fn forest_slices_reassemble(exc in excursion_strategy(4, 3)) {
            let t = decode(&exc).unwrap();
            let s = t.stats();
            if s.delta > 0 {
                let forest = graft_forest(&t, 1, s.delta as usize).unwrap();
                let mut rebuilt: Vec<u64> = t.outdegrees()[..=s.star_index].to_vec();
                for sub in forest.iter().flatten() {
                    rebuilt.extend_from_slice(sub.outdegrees());
                }
                let used = rebuilt.len();
                rebuilt.extend_from_slice(&t.outdegrees()[used..]);
                prop_assert_eq!(&rebuilt[..], t.outdegrees());
                let h_star = forest_height(&forest);
                prop_assert!(s.height >= s.h_delta.max(h_star));
                prop_assert!(s.height >= s.h_delta + 1 + h_star);
            }
        }

        #[test]
        fn stats_bounds(exc in excursion_strategy(100, 20)) {
            let s = decode(&exc).unwrap().stats();
            prop_assert!(s.delta2 <= s.delta);
            prop_assert!(s.h_delta <= s.height);
            prop_assert!(s.height < s.n);
            prop_assert!((s.delta as usize) < s.n);
        }
    }

    #[test]
    fn bienayme_binary_height_law() {
        use rand::SeedableRng;
        // binary m=0.5: H ~ Geometric, P(H ≥ h) = 0.5^h
        let d = OffspringDistribution::binary(0.5).unwrap();
        let mut s = d.sampler();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let reps = 20_000;
        let tall = (0..reps).filter(|_| sample_bienayme_height(&mut s, &mut rng, 1000).unwrap() >= 2).count();
        let freq = tall as f64 / reps as f64;
        assert!((freq - 0.25).abs() < 0.015, "{freq}");
    }
}
