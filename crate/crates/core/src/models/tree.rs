//! CART tree growth shared by the decision tree, both forests and both
//! boosters.
//!
//! Rows are presorted once per feature; each node owns the same `[start, end)`
//! window in every per-feature order and a split stably partitions all of
//! them, so growing a tree costs `O(n · d · depth)` after the initial sort.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// For each feature, training row indices sorted by value (ties by row),
/// plus a column-major copy of the values.
#[derive(Debug, Clone)]
pub struct Presorted<T> {
    orders: Vec<Vec<u32>>,
    columns: Vec<Vec<T>>,
}

impl<T: Scalar> Presorted<T> {
    pub fn new(x: &Matrix<T>) -> Self {
        let orders = (0..x.cols())
            .map(|j| {
                let mut idx: Vec<u32> = (0..x.rows() as u32).collect();
                idx.sort_by(|&a, &b| {
                    x[(a as usize, j)]
                        .partial_cmp(&x[(b as usize, j)])
                        .expect("finite features")
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        Presorted {
            orders,
            columns: (0..x.cols()).map(|j| x.column(j)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Target<'a, T> {
    /// Class codes; leaves hold weighted class fractions, splits minimise Gini.
    Classes { y: &'a [usize], n_classes: usize },
    /// Real targets; leaves hold the weighted mean, splits minimise squared error.
    Values(&'a [T]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Splitter {
    /// Every midpoint between consecutive distinct values.
    Best,
    /// One uniform threshold in `(min, max)` per candidate feature.
    Random,
}

#[derive(Debug, Clone, Copy)]
pub struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features examined per node; `None` means all, in index order.
    pub max_features: Option<usize>,
    pub splitter: Splitter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", rename_all = "snake_case")]
pub enum Node<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf {
        value: Vec<T>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Tree<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tree<T> {
    /// A single-leaf tree.
    pub fn constant(value: Vec<T>) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    /// Index of the leaf reached by `row`. Goes left when `x <= threshold`.
    pub fn apply(&self, row: &[T]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { .. } => return at,
            }
        }
    }

    pub fn leaf_value(&self, row: &[T]) -> &[T] {
        match &self.nodes[self.apply(row)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("apply stops at a leaf"),
        }
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], at: usize) -> usize {
            match &nodes[at] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Sufficient statistics of a set of rows.
#[derive(Debug, Clone)]
struct Stats<T> {
    /// Gini: per-class weight. Squared error: `[Σw, Σw·y]`.
    sums: Vec<T>,
    rows: usize,
}

struct Grower<'a, T, R: ?Sized> {
    x: &'a Matrix<T>,
    columns: &'a [Vec<T>],
    target: Target<'a, T>,
    weights: &'a [T],
    params: GrowParams,
    rng: &'a mut R,
    orders: Vec<Vec<u32>>,
    scratch: Vec<u32>,
    goes_left: Vec<bool>,
    nodes: Vec<Node<T>>,
}

struct Candidate<T> {
    feature: usize,
    threshold: T,
    score: T,
}

/// Grows a tree on the rows with positive weight.
pub fn grow<T: Scalar, R: Rng + ?Sized>(
    x: &Matrix<T>,
    presorted: &Presorted<T>,
    target: Target<'_, T>,
    weights: &[T],
    params: GrowParams,
    rng: &mut R,
) -> Tree<T> {
    let orders: Vec<Vec<u32>> = presorted
        .orders
        .iter()
        .map(|o| o.iter().copied().filter(|&r| weights[r as usize] > T::zero()).collect())
        .collect();
    let n_active = orders.first().map_or_else(
        || weights.iter().filter(|&&w| w > T::zero()).count(),
        Vec::len,
    );
    let mut g = Grower {
        x,
        columns: &presorted.columns,
        target,
        weights,
        params,
        rng,
        scratch: Vec::with_capacity(n_active),
        goes_left: vec![false; x.rows()],
        orders,
        nodes: Vec::new(),
    };
    g.build(n_active);
    Tree { nodes: g.nodes }
}

impl<T: Scalar, R: Rng + ?Sized> Grower<'_, T, R> {
    fn n_features(&self) -> usize {
        self.x.cols()
    }

    fn stats_width(&self) -> usize {
        match self.target {
            Target::Classes { n_classes, .. } => n_classes,
            Target::Values(_) => 2,
        }
    }

    #[inline]
    fn add(&self, s: &mut Stats<T>, row: usize) {
        let w = self.weights[row];
        match self.target {
            Target::Classes { y, .. } => s.sums[y[row]] += w,
            Target::Values(v) => {
                s.sums[0] += w;
                s.sums[1] += w * v[row];
            }
        }
        s.rows += 1;
    }

    fn empty(&self) -> Stats<T> {
        Stats {
            sums: vec![T::zero(); self.stats_width()],
            rows: 0,
        }
    }

    fn node_rows(&self, start: usize, end: usize) -> Vec<usize> {
        match self.orders.first() {
            Some(o) => o[start..end].iter().map(|&r| r as usize).collect(),
            None => (0..self.weights.len()).filter(|&r| self.weights[r] > T::zero()).collect(),
        }
    }

    /// Larger is better: `Σ_c w_c² / W` for Gini, `(Σ w y)² / W` for squared error.
    #[inline]
    fn purity(&self, s: &Stats<T>) -> T {
        match self.target {
            Target::Classes { .. } => {
                let total: T = s.sums.iter().copied().sum();
                s.sums.iter().map(|&w| w * w).sum::<T>() / total
            }
            Target::Values(_) => s.sums[1] * s.sums[1] / s.sums[0],
        }
    }

    fn is_pure(&self, rows: &[usize], s: &Stats<T>) -> bool {
        match self.target {
            Target::Classes { .. } => s.sums.iter().filter(|&&w| w > T::zero()).count() <= 1,
            Target::Values(v) => rows.iter().all(|&r| v[r] == v[rows[0]]),
        }
    }

    fn leaf_value(&self, s: &Stats<T>) -> Vec<T> {
        match self.target {
            Target::Classes { .. } => {
                let total: T = s.sums.iter().copied().sum();
                s.sums.iter().map(|&w| w / total).collect()
            }
            Target::Values(_) => vec![s.sums[1] / s.sums[0]],
        }
    }

    fn build(&mut self, n_active: usize) {
        // (node slot, start, end, depth)
        let mut stack = vec![(0usize, 0usize, n_active, 0usize)];
        self.nodes.push(Node::Leaf { value: Vec::new() });
        while let Some((slot, start, end, depth)) = stack.pop() {
            let rows = self.node_rows(start, end);
            let mut stats = self.empty();
            for &r in &rows {
                self.add(&mut stats, r);
            }
            let stop = self.params.max_depth.is_some_and(|m| depth >= m)
                || rows.len() < self.params.min_samples_split.max(2)
                || self.is_pure(&rows, &stats);
            let split = if stop { None } else { self.find_split(start, end, &stats) };
            let Some(best) = split else {
                self.nodes[slot] = Node::Leaf {
                    value: self.leaf_value(&stats),
                };
                continue;
            };
            let mid = self.partition(start, end, best.feature, best.threshold);
            let left = self.nodes.len();
            self.nodes.push(Node::Leaf { value: Vec::new() });
            self.nodes.push(Node::Leaf { value: Vec::new() });
            self.nodes[slot] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left,
                right: left + 1,
            };
            stack.push((left + 1, mid, end, depth + 1));
            stack.push((left, start, mid, depth + 1));
        }
    }

    fn find_split(&mut self, start: usize, end: usize, total: &Stats<T>) -> Option<Candidate<T>> {
        let d = self.n_features();
        let Some(mtry) = self.params.max_features.filter(|&m| m < d) else {
            let mut best = None;
            for f in 0..d {
                self.consider(f, start, end, total, &mut best);
            }
            return best;
        };
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(&mut *self.rng);
        let mut chosen = perm[..mtry].to_vec();
        chosen.sort_unstable();
        let mut best = None;
        for f in chosen {
            self.consider(f, start, end, total, &mut best);
        }
        // keep drawing features until some split is possible
        for &f in &perm[mtry..] {
            if best.is_some() {
                break;
            }
            self.consider(f, start, end, total, &mut best);
        }
        best
    }

    fn consider(
        &mut self,
        f: usize,
        start: usize,
        end: usize,
        total: &Stats<T>,
        best: &mut Option<Candidate<T>>,
    ) {
        let found = match self.params.splitter {
            Splitter::Best => self.best_threshold(f, start, end, total),
            Splitter::Random => self.random_threshold(f, start, end, total),
        };
        if let Some(c) = found {
            let better = match best {
                None => true,
                Some(b) => c.score > b.score + tie_tolerance(b.score),
            };
            if better {
                *best = Some(c);
            }
        }
    }

    fn right_of(&self, total: &Stats<T>, left: &Stats<T>) -> Stats<T> {
        Stats {
            sums: total.sums.iter().zip(&left.sums).map(|(&t, &l)| t - l).collect(),
            rows: total.rows - left.rows,
        }
    }

    fn best_threshold(&self, f: usize, start: usize, end: usize, total: &Stats<T>) -> Option<Candidate<T>> {
        let order = &self.orders[f][start..end];
        let col = &self.columns[f];
        let mut best: Option<Candidate<T>> = None;
        let mut offer = |i: usize, score: T| {
            if best.as_ref().is_none_or(|b| score > b.score + tie_tolerance(b.score)) {
                best = Some(Candidate {
                    feature: f,
                    threshold: midpoint(col[order[i] as usize], col[order[i + 1] as usize]),
                    score,
                });
            }
        };
        match self.target {
            Target::Values(v) => {
                let (tw, twy) = (total.sums[0], total.sums[1]);
                let (mut lw, mut lwy) = (T::zero(), T::zero());
                for i in 0..order.len() - 1 {
                    let r = order[i] as usize;
                    let w = self.weights[r];
                    lw += w;
                    lwy += w * v[r];
                    if !(col[r] < col[order[i + 1] as usize]) {
                        continue;
                    }
                    let (rw, rwy) = (tw - lw, twy - lwy);
                    offer(i, lwy * lwy / lw + rwy * rwy / rw);
                }
            }
            Target::Classes { y, .. } => {
                let mut left = vec![T::zero(); total.sums.len()];
                for i in 0..order.len() - 1 {
                    let r = order[i] as usize;
                    left[y[r]] += self.weights[r];
                    if !(col[r] < col[order[i + 1] as usize]) {
                        continue;
                    }
                    let (mut lw, mut lsq, mut rw, mut rsq) = (T::zero(), T::zero(), T::zero(), T::zero());
                    for (&l, &t) in left.iter().zip(&total.sums) {
                        let rc = t - l;
                        lw += l;
                        lsq += l * l;
                        rw += rc;
                        rsq += rc * rc;
                    }
                    offer(i, lsq / lw + rsq / rw);
                }
            }
        }
        best
    }

    fn random_threshold(
        &mut self,
        f: usize,
        start: usize,
        end: usize,
        total: &Stats<T>,
    ) -> Option<Candidate<T>> {
        let order = &self.orders[f][start..end];
        let col = &self.columns[f];
        let lo = col[order[0] as usize];
        let hi = col[order[order.len() - 1] as usize];
        if !(lo < hi) {
            return None;
        }
        let u = T::lit(self.rng.random::<f64>());
        let mut threshold = lo + u * (hi - lo);
        if threshold >= hi {
            threshold = lo;
        }
        let mut left = self.empty();
        for &r in &self.orders[f][start..end] {
            if col[r as usize] > threshold {
                break;
            }
            self.add(&mut left, r as usize);
        }
        let right = self.right_of(total, &left);
        Some(Candidate {
            feature: f,
            threshold,
            score: self.purity(&left) + self.purity(&right),
        })
    }

    /// Stable partition of every feature order; returns the left size offset.
    fn partition(&mut self, start: usize, end: usize, feature: usize, threshold: T) -> usize {
        let mut n_left = 0;
        for &r in &self.orders[feature][start..end] {
            let left = self.columns[feature][r as usize] <= threshold;
            self.goes_left[r as usize] = left;
            n_left += usize::from(left);
        }
        for order in &mut self.orders {
            let seg = &mut order[start..end];
            self.scratch.clear();
            let mut w = 0;
            for k in 0..seg.len() {
                let r = seg[k];
                if self.goes_left[r as usize] {
                    seg[w] = r;
                    w += 1;
                } else {
                    self.scratch.push(r);
                }
            }
            seg[w..].copy_from_slice(&self.scratch);
        }
        start + n_left
    }
}

/// Features quantised to at most 256 ordered bins. A bin is named by the
/// largest training value it holds, so `x <= edge[b]` exactly when `x`
/// falls in bin `b` or below.
#[derive(Debug, Clone)]
pub struct Binned<T> {
    codes: Vec<Vec<u8>>,
    edges: Vec<Vec<T>>,
}

impl<T: Scalar> Binned<T> {
    /// Every distinct value gets its own bin when there are at most
    /// `max_bins`; otherwise bins hold roughly equal row counts.
    pub fn new(x: &Matrix<T>, max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, 256);
        let n = x.rows();
        let mut codes = Vec::with_capacity(x.cols());
        let mut edges = Vec::with_capacity(x.cols());
        for j in 0..x.cols() {
            let col = x.column(j);
            let mut sorted = col.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
            let mut distinct = sorted.clone();
            distinct.dedup();
            let e = if distinct.len() <= max_bins {
                distinct
            } else {
                let mut e: Vec<T> = (1..=max_bins).map(|k| sorted[k * n / max_bins - 1]).collect();
                e.dedup();
                e
            };
            codes.push(col.iter().map(|&v| e.partition_point(|&b| b < v) as u8).collect());
            edges.push(e);
        }
        Binned { codes, edges }
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.edges[feature].len()
    }
}

/// Squared-error regression tree with unit row weights, grown on binned
/// features. Splits and ties follow [`grow`]; candidate thresholds are the
/// bin edges.
pub fn grow_binned<T: Scalar>(
    binned: &Binned<T>,
    target: &[T],
    max_depth: Option<usize>,
    min_samples_split: usize,
) -> Tree<T> {
    let d = binned.codes.len();
    let offsets: Vec<usize> = binned
        .edges
        .iter()
        .scan(0, |acc, e| {
            let at = *acc;
            *acc += e.len();
            Some(at)
        })
        .collect();
    let width = offsets.last().map_or(0, |&o| o + binned.edges[d - 1].len());
    let mut sums = vec![T::zero(); width];
    let mut counts = vec![0u32; width];
    let mut nodes = vec![Node::Leaf { value: Vec::new() }];
    let mut stack = vec![(0usize, (0..target.len() as u32).collect::<Vec<u32>>(), 0usize)];
    while let Some((slot, rows, depth)) = stack.pop() {
        let total: T = rows.iter().map(|&r| target[r as usize]).sum();
        let n = rows.len();
        let pure = rows.iter().all(|&r| target[r as usize] == target[rows[0] as usize]);
        let stop = max_depth.is_some_and(|m| depth >= m) || n < min_samples_split.max(2) || pure;
        let mut best: Option<(usize, usize, T)> = None;
        if !stop {
            sums.fill(T::zero());
            counts.fill(0);
            for f in 0..d {
                let (codes, base) = (&binned.codes[f], offsets[f]);
                for &r in &rows {
                    let b = base + codes[r as usize] as usize;
                    sums[b] += target[r as usize];
                    counts[b] += 1;
                }
            }
            let nf = T::from_count(n);
            for f in 0..d {
                let base = offsets[f];
                let (mut lw, mut ls) = (0u32, T::zero());
                for b in 0..binned.n_bins(f) {
                    let c = counts[base + b];
                    if c == 0 {
                        continue;
                    }
                    lw += c;
                    ls += sums[base + b];
                    if lw as usize == n {
                        break;
                    }
                    let lwf = T::from_count(lw as usize);
                    let rs = total - ls;
                    let score = ls * ls / lwf + rs * rs / (nf - lwf);
                    if best.is_none_or(|(_, _, s)| score > s + tie_tolerance(s)) {
                        best = Some((f, b, score));
                    }
                }
            }
        }
        let Some((feature, bin, _)) = best else {
            nodes[slot] = Node::Leaf {
                value: vec![total / T::from_count(n)],
            };
            continue;
        };
        let codes = &binned.codes[feature];
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| codes[r as usize] as usize <= bin);
        let left = nodes.len();
        nodes.push(Node::Leaf { value: Vec::new() });
        nodes.push(Node::Leaf { value: Vec::new() });
        nodes[slot] = Node::Split {
            feature,
            threshold: binned.edges[feature][bin],
            left,
            right: left + 1,
        };
        stack.push((left + 1, right_rows, depth + 1));
        stack.push((left, left_rows, depth + 1));
    }
    Tree { nodes }
}

#[inline]
fn tie_tolerance<T: Scalar>(score: T) -> T {
    T::epsilon() * T::lit(64.0) * score.abs().max(T::one())
}

/// Midpoint that still sends `lo` left and `hi` right under `x <= t`.
fn midpoint<T: Scalar>(lo: T, hi: T) -> T {
    let m = lo + (hi - lo) / T::lit(2.0);
    if m >= hi {
        lo
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::Seed;

    fn params() -> GrowParams {
        GrowParams {
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
            splitter: Splitter::Best,
        }
    }

    #[test]
    fn separable_points_need_one_split() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0], vec![4.0]]).unwrap();
        let y = [0, 0, 1, 1];
        let t = grow(
            &x,
            &Presorted::new(&x),
            Target::Classes { y: &y, n_classes: 2 },
            &[1.0; 4],
            params(),
            &mut Seed(0).rng(),
        );
        assert_eq!(t.depth(), 1);
        match &t.nodes()[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 2.0),
            _ => panic!("root should split"),
        }
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let y = [0, 1, 1];
        let t = grow(
            &x,
            &Presorted::new(&x),
            Target::Classes { y: &y, n_classes: 2 },
            &[0.0, 1.0, 2.0],
            params(),
            &mut Seed(0).rng(),
        );
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.leaf_value(&[0.0]), &[0.0, 1.0]);
    }

    #[test]
    fn regression_leaf_is_weighted_mean() {
        let x = Matrix::from_rows(&[vec![0.0], vec![0.0], vec![5.0]]).unwrap();
        let v = [1.0, 3.0, 10.0];
        let t = grow(
            &x,
            &Presorted::new(&x),
            Target::Values(&v),
            &[1.0, 3.0, 1.0],
            params(),
            &mut Seed(0).rng(),
        );
        assert_eq!(t.leaf_value(&[0.0]), &[2.5]);
        assert_eq!(t.leaf_value(&[9.0]), &[10.0]);
    }

    #[test]
    fn xor_needs_zero_gain_first_split() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]])
            .unwrap();
        let y = [0, 1, 1, 0];
        let t = grow(
            &x,
            &Presorted::new(&x),
            Target::Classes { y: &y, n_classes: 2 },
            &[1.0; 4],
            params(),
            &mut Seed(0).rng(),
        );
        for (i, r) in x.row_iter().enumerate() {
            assert_eq!(t.leaf_value(r)[y[i]], 1.0);
        }
    }

    #[test]
    fn random_splitter_threshold_lies_inside_range() {
        let x = Matrix::from_rows(&(0..20).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 7)).collect();
        let t = grow(
            &x,
            &Presorted::new(&x),
            Target::Classes { y: &y, n_classes: 2 },
            &[1.0; 20],
            GrowParams {
                splitter: Splitter::Random,
                ..params()
            },
            &mut Seed(3).rng(),
        );
        for (i, r) in x.row_iter().enumerate() {
            assert_eq!(t.leaf_value(r)[y[i]], 1.0);
        }
        for n in t.nodes() {
            if let Node::Split { threshold, .. } = n {
                assert!((0.0..19.0).contains(threshold));
            }
        }
    }

    #[test]
    fn binned_tree_matches_exact_tree_on_few_distinct_values() {
        let mut rng = Seed(5).rng();
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..3).map(|_| rng.random_range(0..8) as f64).collect())
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let target: Vec<f64> = rows.iter().map(|r| r[0] * 0.5 - r[2] + rng.random::<f64>()).collect();
        let binned = Binned::new(&x, 256);
        let fast = grow_binned(&binned, &target, Some(3), 2);
        let exact = grow(
            &x,
            &Presorted::new(&x),
            Target::Values(&target),
            &[1.0; 60],
            GrowParams {
                max_depth: Some(3),
                ..params()
            },
            &mut rng,
        );
        let sse = |t: &Tree<f64>| -> f64 {
            rows.iter().zip(&target).map(|(r, y)| (y - t.leaf_value(r)[0]).powi(2)).sum()
        };
        assert!((sse(&fast) - sse(&exact)).abs() < 1e-9);
    }

    #[test]
    fn many_distinct_values_are_quantised() {
        let x = Matrix::from_rows(&(0..1000).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let b = Binned::new(&x, 256);
        assert_eq!(b.n_bins(0), 256);
        assert_eq!(b.edges[0][255], 999.0);
        // a raw value goes left of an edge exactly when its bin does
        for (i, &code) in b.codes[0].iter().enumerate() {
            assert!(i as f64 <= b.edges[0][code as usize]);
            assert!(code == 0 || i as f64 > b.edges[0][code as usize - 1]);
        }
    }
}
