//! Random forest of CART trees on Gini impurity, with Gini importances and
//! channel ranking from 5-band-per-channel attributes.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{EEG_CHANNELS, RHYTHM_BANDS};
use crate::seed;
use crate::signal::Label;

// Gains at or below this are treated as no improvement.
const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        counts: [usize; 2],
    },
}

impl TreeNode {
    /// Seizure-class fraction at the leaf reached by `x` (`x[f] <= t` goes left).
    pub fn leaf_probability(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
                TreeNode::Leaf { counts } => {
                    return counts[1] as f64 / (counts[0] + counts[1]) as f64;
                }
            }
        }
    }

    pub fn n_splits(&self) -> usize {
        match self {
            TreeNode::Split { left, right, .. } => 1 + left.n_splits() + right.n_splits(),
            TreeNode::Leaf { .. } => 0,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
            TreeNode::Leaf { .. } => 0,
        }
    }

    fn visit_leaves(&self, f: &mut impl FnMut(&[usize; 2])) {
        match self {
            TreeNode::Split { left, right, .. } => {
                left.visit_leaves(f);
                right.visit_leaves(f);
            }
            TreeNode::Leaf { counts } => f(counts),
        }
    }

    pub fn leaf_counts(&self) -> Vec<[usize; 2]> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |c| out.push(*c));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    /// Features examined per node; `None` means all.
    pub max_features: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_features: None,
            min_leaf: 1,
            max_depth: None,
        }
    }
}

pub fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[1] as f64 / n;
    2.0 * p * (1.0 - p)
}

/// A fitted tree plus the weighted impurity decrease it attributes to each feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedTree {
    pub root: TreeNode,
    pub impurity_decrease: Vec<f64>,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    params: &'a TreeParams,
    n_features: usize,
    n_root: f64,
    decrease: Vec<f64>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> [usize; 2] {
        let ones = idx.iter().filter(|&&i| self.y[i] == 1).count();
        [idx.len() - ones, ones]
    }

    fn best_split(&self, idx: &[usize], features: &[usize], parent: [usize; 2]) -> Option<BestSplit> {
        let n = idx.len();
        let parent_gini = gini(parent);
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<BestSplit> = None;
        let mut order = idx.to_vec();
        for &f in features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left = [0usize; 2];
            for i in 0..n - 1 {
                left[self.y[order[i]]] += 1;
                let (lo, hi) = (self.x[order[i]][f], self.x[order[i + 1]][f]);
                if lo == hi {
                    continue;
                }
                let n_left = i + 1;
                if n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let right = [parent[0] - left[0], parent[1] - left[1]];
                let gain = parent_gini
                    - (n_left as f64 * gini(left) + (n - n_left) as f64 * gini(right)) / n as f64;
                if gain > GAIN_EPS && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut impl Rng) -> TreeNode {
        let counts = self.counts(&idx);
        let n = idx.len();
        let stop = counts[0] == 0
            || counts[1] == 0
            || n < 2 * self.params.min_leaf.max(1)
            || self.params.max_depth.is_some_and(|d| depth >= d);
        if stop {
            return TreeNode::Leaf { counts };
        }
        let k = self
            .params
            .max_features
            .unwrap_or(self.n_features)
            .clamp(1, self.n_features);
        let mut features = index::sample(rng, self.n_features, k).into_vec();
        features.sort_unstable();
        let Some(best) = self.best_split(&idx, &features, counts) else {
            return TreeNode::Leaf { counts };
        };
        self.decrease[best.feature] += n as f64 / self.n_root * best.gain;
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.x[i][best.feature] <= best.threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

fn check_xy(x: &[Vec<f64>], y: &[usize]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} labels", x.len()), y.len()));
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::Config("samples have no features".into()));
    }
    if let Some(row) = x.iter().find(|r| r.len() != d) {
        return Err(Error::shape(format!("{d} features"), row.len()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c > 1) {
        return Err(Error::Config(format!("labels must be 0 or 1, got {bad}")));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix".into()));
    }
    Ok(d)
}

/// Fits one tree on the rows listed in `sample` (repeats allowed, as in a bootstrap).
pub fn fit_tree_on(
    x: &[Vec<f64>],
    y: &[usize],
    sample: Vec<usize>,
    params: &TreeParams,
    rng: &mut impl Rng,
) -> Result<FittedTree> {
    let d = check_xy(x, y)?;
    let mut b = Builder {
        x,
        y,
        params,
        n_features: d,
        n_root: sample.len() as f64,
        decrease: vec![0.0; d],
    };
    let root = b.grow(sample, 0, rng);
    Ok(FittedTree {
        root,
        impurity_decrease: b.decrease,
    })
}

pub fn fit_tree(
    x: &[Vec<f64>],
    y: &[usize],
    params: &TreeParams,
    rng: &mut impl Rng,
) -> Result<FittedTree> {
    fit_tree_on(x, y, (0..x.len()).collect(), params, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` means `⌈√d⌉`.
    pub max_features: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 1000,
            max_features: None,
            min_leaf: 1,
            max_depth: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<TreeNode>,
    pub n_features: usize,
    /// Normalized Gini importances; all zero when no tree split.
    pub importances: Vec<f64>,
}

/// Trees are fitted in parallel; tree `i` draws from a stream derived from
/// `(seed, i)` so the result does not depend on scheduling.
pub fn fit_forest(x: &[Vec<f64>], y: &[usize], params: &ForestParams, seed: u64) -> Result<Forest> {
    if params.n_trees == 0 {
        return Err(Error::Config("forest needs at least one tree".into()));
    }
    let d = check_xy(x, y)?;
    let tree_params = TreeParams {
        max_features: Some(
            params
                .max_features
                .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize),
        ),
        min_leaf: params.min_leaf,
        max_depth: params.max_depth,
    };
    let base = seed::derive(seed, "forest");
    let fitted = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::derive_index(base, t as u64));
            let sample = if params.bootstrap {
                (0..x.len()).map(|_| rng.random_range(0..x.len())).collect()
            } else {
                (0..x.len()).collect()
            };
            fit_tree_on(x, y, sample, &tree_params, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut importances = vec![0.0; d];
    for t in &fitted {
        for (acc, v) in importances.iter_mut().zip(&t.impurity_decrease) {
            *acc += v;
        }
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    }
    Ok(Forest {
        trees: fitted.into_iter().map(|t| t.root).collect(),
        n_features: d,
        importances,
    })
}

impl Forest {
    /// Soft vote: mean leaf seizure fraction over trees; seizure iff it exceeds 0.5.
    pub fn predict(&self, x: &[f64]) -> Result<(Label, f64)> {
        if x.len() != self.n_features {
            return Err(Error::shape(self.n_features, x.len()));
        }
        if self.trees.is_empty() {
            return Err(Error::Config("empty forest".into()));
        }
        let p = self.trees.iter().map(|t| t.leaf_probability(x)).sum::<f64>() / self.trees.len() as f64;
        let label = if p > 0.5 { Label::Seizure } else { Label::NonSeizure };
        Ok((label, p))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("forest 1\n");
        s.push_str(&format!("n_features {}\n", self.n_features));
        s.push_str(&format!("n_trees {}\n", self.trees.len()));
        s.push_str("importances");
        for v in &self.importances {
            s.push_str(&format!(" {v:e}"));
        }
        s.push('\n');
        for t in &self.trees {
            s.push_str("tree\n");
            write_node(t, &mut s);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, what: &str| Error::Format(format!("forest line {line}: {what}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = || lines.next().ok_or_else(|| bad(0, "unexpected end of file"));

        let (l, header) = next()?;
        if header != "forest 1" {
            return Err(bad(l, "expected `forest 1` header"));
        }
        let mut keyed = |key: &str| -> Result<(usize, String)> {
            let (l, line) = next()?;
            line.strip_prefix(key)
                .map(|rest| (l, rest.trim().to_string()))
                .ok_or_else(|| bad(l, &format!("expected `{key}`")))
        };
        let (l, nf) = keyed("n_features")?;
        let n_features: usize = nf.parse().map_err(|_| bad(l, "bad feature count"))?;
        let (l, nt) = keyed("n_trees")?;
        let n_trees: usize = nt.parse().map_err(|_| bad(l, "bad tree count"))?;
        let (l, imp) = keyed("importances")?;
        let importances = imp
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| bad(l, "bad importance")))
            .collect::<Result<Vec<_>>>()?;
        if importances.len() != n_features {
            return Err(bad(l, "importance count differs from n_features"));
        }
        let rest: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .skip(4)
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let mut pos = 0;
        let mut trees = Vec::with_capacity(n_trees);
        while pos < rest.len() {
            let (l, line) = rest[pos];
            if line != "tree" {
                return Err(bad(l, "expected `tree`"));
            }
            pos += 1;
            trees.push(read_node(&rest, &mut pos, n_features)?);
        }
        if trees.len() != n_trees {
            return Err(bad(0, "tree count differs from header"));
        }
        Ok(Self {
            trees,
            n_features,
            importances,
        })
    }
}

fn write_node(node: &TreeNode, out: &mut String) {
    match node {
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            out.push_str(&format!("S {feature} {threshold:e}\n"));
            write_node(left, out);
            write_node(right, out);
        }
        TreeNode::Leaf { counts } => out.push_str(&format!("L {} {}\n", counts[0], counts[1])),
    }
}

fn read_node(lines: &[(usize, &str)], pos: &mut usize, n_features: usize) -> Result<TreeNode> {
    let bad = |line: usize, what: &str| Error::Format(format!("forest line {line}: {what}"));
    let &(l, line) = lines.get(*pos).ok_or_else(|| bad(0, "truncated tree"))?;
    *pos += 1;
    let parts: Vec<&str> = line.split_whitespace().collect();
    match parts.as_slice() {
        ["S", f, t] => {
            let feature: usize = f.parse().map_err(|_| bad(l, "bad feature index"))?;
            let threshold: f64 = t.parse().map_err(|_| bad(l, "bad threshold"))?;
            if feature >= n_features || !threshold.is_finite() {
                return Err(bad(l, "split out of range"));
            }
            let left = read_node(lines, pos, n_features)?;
            let right = read_node(lines, pos, n_features)?;
            Ok(TreeNode::Split {
                feature,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
        ["L", a, b] => {
            let counts = [
                a.parse().map_err(|_| bad(l, "bad count"))?,
                b.parse().map_err(|_| bad(l, "bad count"))?,
            ];
            if counts[0] + counts[1] == 0 {
                return Err(bad(l, "empty leaf"));
            }
            Ok(TreeNode::Leaf { counts })
        }
        _ => Err(bad(l, "expected `S feature threshold` or `L n0 n1`")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRanking {
    /// Percent contribution per channel; sums to 100.
    pub contributions: Vec<f64>,
    /// Channel indices by descending contribution (ties: lower index first).
    pub order: Vec<usize>,
}

impl ChannelRanking {
    pub fn from_importances(importances: &[f64]) -> Result<Self> {
        if importances.len() != EEG_CHANNELS * RHYTHM_BANDS {
            return Err(Error::shape(EEG_CHANNELS * RHYTHM_BANDS, importances.len()));
        }
        let total: f64 = importances.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Config(
                "importances are all zero; the forest never split".into(),
            ));
        }
        let contributions: Vec<f64> = importances
            .chunks(RHYTHM_BANDS)
            .map(|c| 100.0 * c.iter().sum::<f64>() / total)
            .collect();
        let mut order: Vec<usize> = (0..EEG_CHANNELS).collect();
        order.sort_by(|&a, &b| contributions[b].total_cmp(&contributions[a]).then(a.cmp(&b)));
        Ok(Self {
            contributions,
            order,
        })
    }

    pub fn top(&self, k: usize) -> &[usize] {
        &self.order[..k.min(self.order.len())]
    }

    /// `channel<TAB>percent` lines in ranked order.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("channel\tcontribution_percent\n");
        for &c in &self.order {
            s.push_str(&format!("{c}\t{:.6}\n", self.contributions[c]));
        }
        s
    }
}

pub fn rank_channels(forest: &Forest) -> Result<ChannelRanking> {
    ChannelRanking::from_importances(&forest.importances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    fn rng() -> rand_chacha::ChaCha8Rng {
        seed::rng(1)
    }

    /// Best single-threshold Gini gain by brute force over every cut point.
    fn exhaustive_best_threshold(x: &[f64], y: &[usize]) -> (f64, f64) {
        let mut vals = x.to_vec();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        let parent = [y.iter().filter(|&&c| c == 0).count(), y.iter().filter(|&&c| c == 1).count()];
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let mut l = [0, 0];
            let mut r = [0, 0];
            for (xi, &yi) in x.iter().zip(y) {
                if *xi <= t {
                    l[yi] += 1
                } else {
                    r[yi] += 1
                }
            }
            let n = x.len() as f64;
            let g = gini(parent) - ((l[0] + l[1]) as f64 * gini(l) + (r[0] + r[1]) as f64 * gini(r)) / n;
            if g > best.0 {
                best = (g, t);
            }
        }
        best
    }

    #[test]
    fn single_sample_is_a_leaf() {
        let t = fit_tree(&[vec![3.0]], &[1], &TreeParams::default(), &mut rng()).unwrap();
        assert_eq!(t.root, TreeNode::Leaf { counts: [0, 1] });
    }

    #[test]
    fn sign_split_matches_enumeration() {
        let x = vec![vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]];
        let y = vec![0, 0, 1, 1];
        let t = fit_tree(&x, &y, &TreeParams::default(), &mut rng()).unwrap();
        let (gain, thr) = exhaustive_best_threshold(&[-2.0, -1.0, 1.0, 2.0], &y);
        match &t.root {
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                assert_eq!(*feature, 0);
                assert!(*threshold > -1.0 && *threshold < 1.0);
                assert_eq!(*threshold, thr);
                assert_eq!(**left, TreeNode::Leaf { counts: [2, 0] });
                assert_eq!(**right, TreeNode::Leaf { counts: [0, 2] });
            }
            other => panic!("expected a split, got {other:?}"),
        }
        assert!((t.impurity_decrease[0] - gain).abs() < 1e-15);
        assert!((gain - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pure_labels_do_not_split() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, -(i as f64)]).collect();
        let t = fit_tree(&x, &[1; 6], &TreeParams::default(), &mut rng()).unwrap();
        assert_eq!(t.root, TreeNode::Leaf { counts: [0, 6] });
        assert_eq!(t.impurity_decrease, vec![0.0, 0.0]);
    }

    #[test]
    fn equal_gain_prefers_lowest_feature() {
        // features 1 and 2 separate equally well; 0 is constant
        let x = vec![
            vec![0.0, 0.0, 5.0],
            vec![0.0, 1.0, 6.0],
            vec![0.0, 2.0, 7.0],
            vec![0.0, 3.0, 8.0],
        ];
        let t = fit_tree(&x, &[0, 0, 1, 1], &TreeParams::default(), &mut rng()).unwrap();
        match t.root {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(feature, 1);
                assert_eq!(threshold, 1.5);
            }
            _ => panic!("expected split"),
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(fit_tree(&[vec![1.0], vec![2.0]], &[0], &TreeParams::default(), &mut rng()).is_err());
        assert!(fit_forest(&[vec![1.0]], &[0], &ForestParams { n_trees: 0, ..Default::default() }, 0).is_err());
    }

    fn informative_dataset(seed_: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut r = seed::rng(seed_);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..80 {
            let c = i % 2;
            let mut row = vec![if c == 1 { 1.0 } else { -1.0 } + r.random_range(-0.5..0.5)];
            row.extend((0..9).map(|_| r.random_range(-1.0..1.0)));
            row.push(7.0); // constant
            x.push(row);
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn informative_feature_dominates() {
        for s in 0..10 {
            let (x, y) = informative_dataset(s);
            let f = fit_forest(&x, &y, &ForestParams { n_trees: 100, ..Default::default() }, s).unwrap();
            assert!(f.importances[0] >= 0.5, "seed {s}: {:?}", f.importances);
            assert_eq!(f.importances[10], 0.0);
            assert!((f.importances.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forest_is_deterministic() {
        let (x, y) = informative_dataset(3);
        let p = ForestParams { n_trees: 25, ..Default::default() };
        assert_eq!(fit_forest(&x, &y, &p, 9).unwrap(), fit_forest(&x, &y, &p, 9).unwrap());
        assert_ne!(fit_forest(&x, &y, &p, 9).unwrap(), fit_forest(&x, &y, &p, 10).unwrap());
    }

    #[test]
    fn leaf_only_forest_votes_softly() {
        let f = Forest {
            trees: vec![TreeNode::Leaf { counts: [3, 7] }],
            n_features: 2,
            importances: vec![0.0, 0.0],
        };
        let (label, p) = f.predict(&[0.0, 0.0]).unwrap();
        assert_eq!(label, Label::Seizure);
        assert!((p - 0.7).abs() < 1e-15);
        assert!(f.predict(&[0.0]).is_err());
        let tie = Forest {
            trees: vec![TreeNode::Leaf { counts: [1, 1] }],
            ..f
        };
        assert_eq!(tie.predict(&[0.0, 0.0]).unwrap().0, Label::NonSeizure);
    }

    #[test]
    fn memorizes_separable_training_data() {
        let mut r = seed::rng(4);
        let x: Vec<Vec<f64>> = (0..20).map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
        let y: Vec<usize> = x.iter().map(|v| usize::from(v[0] + 0.3 * v[1] > 0.0)).collect();
        let p = ForestParams { n_trees: 15, bootstrap: false, ..Default::default() };
        let f = fit_forest(&x, &y, &p, 2).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(f.predict(xi).unwrap().0.index(), yi);
        }
    }

    #[test]
    fn tree_order_and_duplication_do_not_change_votes() {
        let (x, y) = informative_dataset(5);
        let f = fit_forest(&x, &y, &ForestParams { n_trees: 9, ..Default::default() }, 1).unwrap();
        let mut rev = f.clone();
        rev.trees.reverse();
        let mut dup = f.clone();
        dup.trees.extend(f.trees.clone());
        for xi in &x {
            let a = f.predict(xi).unwrap();
            assert_eq!(a.0, rev.predict(xi).unwrap().0);
            assert_eq!(a.0, dup.predict(xi).unwrap().0);
            assert!((a.1 - dup.predict(xi).unwrap().1).abs() < 1e-12);
        }
    }

    #[test]
    fn text_format_round_trips() {
        let (x, y) = informative_dataset(6);
        let f = fit_forest(&x, &y, &ForestParams { n_trees: 4, ..Default::default() }, 0).unwrap();
        let text = f.to_text();
        assert!(text.starts_with("forest 1\nn_features 11\nn_trees 4\nimportances "));
        assert_eq!(Forest::from_text(&text).unwrap(), f);
        assert!(Forest::from_text("forest 1\nn_features 1\nn_trees 1\nimportances 1\ntree\nS 0 1\nL 1 0\n").is_err());
    }

    #[test]
    fn uniform_importances_rank_evenly() {
        let r = ChannelRanking::from_importances(&vec![1.0 / 115.0; 115]).unwrap();
        for c in &r.contributions {
            assert!((c - 100.0 / 23.0).abs() < 1e-12);
        }
        assert_eq!(r.order, (0..23).collect::<Vec<_>>());
        assert!(ChannelRanking::from_importances(&[0.5, 0.5]).is_err());
    }

    #[test]
    fn leaf_impurities_are_bounded() {
        let (x, y) = informative_dataset(8);
        let f = fit_forest(&x, &y, &ForestParams { n_trees: 10, min_leaf: 3, ..Default::default() }, 0).unwrap();
        for t in &f.trees {
            for c in t.leaf_counts() {
                let g = gini(c);
                assert!((0.0..=0.5).contains(&g));
                assert!(c[0] + c[1] > 0);
            }
        }
    }

    proptest! {
        #[test]
        fn importances_follow_feature_permutation(seed_ in 0u64..50, shift in 1usize..4) {
            let mut r = seed::rng(seed_);
            let x: Vec<Vec<f64>> = (0..30).map(|_| (0..4).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
            let y: Vec<usize> = x.iter().map(|v| usize::from(v[1] > 0.1)).collect();
            let p = ForestParams { n_trees: 5, max_features: Some(4), bootstrap: false, ..Default::default() };
            let f = fit_forest(&x, &y, &p, seed_).unwrap();
            let perm: Vec<usize> = (0..4).map(|i| (i + shift) % 4).collect();
            let xp: Vec<Vec<f64>> = x.iter().map(|row| perm.iter().map(|&j| row[j]).collect()).collect();
            let fp = fit_forest(&xp, &y, &p, seed_).unwrap();
            // with every feature examined there is one unique best split per node
            for (i, &j) in perm.iter().enumerate() {
                prop_assert!((fp.importances[i] - f.importances[j]).abs() < 1e-9);
            }
            prop_assert!((f.importances.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
