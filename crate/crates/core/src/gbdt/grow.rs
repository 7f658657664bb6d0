//! Histogram split search and the leaf-wise, level-wise and oblivious
//! growth strategies.

use super::binning::{BinnedMatrix, MISSING_BIN};
use super::{GbdtConfig, Growth, Tree, TreeNode};

/// Offsets of each feature's bins in a flat histogram. Every feature gets
/// `n_bins(f) + 1` slots; the last one collects missing values.
#[derive(Debug, Clone)]
pub(crate) struct HistLayout {
    offsets: Vec<usize>,
    len: usize,
}

impl HistLayout {
    pub fn new(binned: &BinnedMatrix) -> Self {
        let mut offsets = Vec::with_capacity(binned.n_features);
        let mut len = 0;
        for f in 0..binned.n_features {
            offsets.push(len);
            len += binned.n_bins(f) + 1;
        }
        Self { offsets, len }
    }

    fn slot(&self, f: usize, bin: u16, n_bins: usize) -> usize {
        if bin == MISSING_BIN {
            self.offsets[f] + n_bins
        } else {
            self.offsets[f] + bin as usize
        }
    }
}

/// Per-slot gradient/hessian sums. `grad` and `hess` are only meaningful
/// where `count` is nonzero, so clearing a histogram only touches counts.
#[derive(Debug, Clone, Default)]
pub(crate) struct Histogram {
    grad: Vec<f64>,
    hess: Vec<f64>,
    count: Vec<u32>,
}

impl Histogram {
    fn bin(&self, s: usize) -> (u32, f64, f64) {
        let c = self.count[s];
        if c == 0 {
            (0, 0.0, 0.0)
        } else {
            (c, self.grad[s], self.hess[s])
        }
    }

    fn fill(&mut self, ctx: &GrowContext, rows: &[u32]) {
        let len = ctx.layout.len;
        if self.count.len() != len {
            self.grad = vec![0.0; len];
            self.hess = vec![0.0; len];
            self.count = vec![0; len];
        } else {
            self.count.fill(0);
        }
        for &f in ctx.features {
            let bins = ctx.binned.feature_bins(f);
            let n_bins = ctx.binned.n_bins(f);
            for &r in rows {
                let r = r as usize;
                let s = ctx.layout.slot(f, bins[r], n_bins);
                if self.count[s] == 0 {
                    self.grad[s] = ctx.grad[r];
                    self.hess[s] = ctx.hess[r];
                } else {
                    self.grad[s] += ctx.grad[r];
                    self.hess[s] += ctx.hess[r];
                }
                self.count[s] += 1;
            }
        }
    }

    /// Remove `rows`, a subset of the rows this histogram was built from.
    fn remove_rows(&mut self, ctx: &GrowContext, rows: &[u32]) {
        for &f in ctx.features {
            let bins = ctx.binned.feature_bins(f);
            let n_bins = ctx.binned.n_bins(f);
            for &r in rows {
                let r = r as usize;
                let s = ctx.layout.slot(f, bins[r], n_bins);
                self.count[s] -= 1;
                self.grad[s] -= ctx.grad[r];
                self.hess[s] -= ctx.hess[r];
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    bin: u16,
    count: u32,
    g: f64,
    h: f64,
}

/// Occupied bins only, per feature, sorted by bin with missing last. Cheaper
/// than a full histogram once a leaf holds few rows.
#[derive(Debug, Clone, Default)]
pub(crate) struct SparseHist {
    ranges: Vec<(u32, u32)>,
    entries: Vec<Entry>,
}

impl SparseHist {
    fn fill(&mut self, ctx: &GrowContext, rows: &[u32], keys: &mut Vec<u64>) {
        self.ranges.clear();
        self.ranges.resize(ctx.binned.n_features, (0, 0));
        self.entries.clear();
        for &f in ctx.features {
            let bins = ctx.binned.feature_bins(f);
            keys.clear();
            keys.extend(rows.iter().map(|&r| (u64::from(bins[r as usize]) << 32) | u64::from(r)));
            keys.sort_unstable();
            let start = self.entries.len();
            for &k in keys.iter() {
                let bin = (k >> 32) as u16;
                let r = (k & 0xffff_ffff) as usize;
                let fresh = self.entries.len() == start;
                match self.entries.last_mut() {
                    Some(e) if !fresh && e.bin == bin => {
                        e.count += 1;
                        e.g += ctx.grad[r];
                        e.h += ctx.hess[r];
                    }
                    _ => self.entries.push(Entry {
                        bin,
                        count: 1,
                        g: ctx.grad[r],
                        h: ctx.hess[r],
                    }),
                }
            }
            self.ranges[f] = (start as u32, self.entries.len() as u32);
        }
    }

    fn feature(&self, f: usize) -> &[Entry] {
        let (a, b) = self.ranges[f];
        &self.entries[a as usize..b as usize]
    }
}

/// Gradient statistics of a leaf's rows.
#[derive(Debug, Default)]
enum Stats {
    /// The leaf will never be split.
    #[default]
    None,
    Dense(Histogram),
    Sparse(SparseHist),
}

impl Stats {
    /// (count, grad, hess) of the missing values of `f`.
    fn missing(&self, ctx: &GrowContext, f: usize) -> (u32, f64, f64) {
        match self {
            Stats::None => (0, 0.0, 0.0),
            Stats::Dense(h) => h.bin(ctx.layout.offsets[f] + ctx.binned.n_bins(f)),
            Stats::Sparse(s) => match s.feature(f).last() {
                Some(e) if e.bin == MISSING_BIN => (e.count, e.g, e.h),
                _ => (0, 0.0, 0.0),
            },
        }
    }

    /// Sums over non-missing bins `<= bin` of `f`.
    fn left_sums(&self, ctx: &GrowContext, f: usize, bin: u16) -> (f64, f64) {
        let (mut g, mut h) = (0.0, 0.0);
        match self {
            Stats::None => {}
            Stats::Dense(hist) => {
                let base = ctx.layout.offsets[f];
                for b in 0..=bin as usize {
                    let (_, bg, bh) = hist.bin(base + b);
                    g += bg;
                    h += bh;
                }
            }
            Stats::Sparse(s) => {
                for e in s.feature(f).iter().take_while(|e| e.bin <= bin) {
                    g += e.g;
                    h += e.h;
                }
            }
        }
        (g, h)
    }
}

/// Recycled statistics buffers.
#[derive(Debug, Default)]
pub(crate) struct HistPool {
    dense: Vec<Histogram>,
    sparse: Vec<SparseHist>,
    keys: Vec<u64>,
}

/// A leaf uses sparse statistics when `rows * features * SPARSE_FACTOR`
/// is below the histogram length.
const SPARSE_FACTOR: usize = 4;

impl HistPool {
    fn build(&mut self, ctx: &GrowContext, rows: &[u32]) -> Stats {
        if prefers_sparse(ctx, rows.len()) {
            let mut s = self.sparse.pop().unwrap_or_default();
            s.fill(ctx, rows, &mut self.keys);
            Stats::Sparse(s)
        } else {
            let mut h = self.dense.pop().unwrap_or_default();
            h.fill(ctx, rows);
            Stats::Dense(h)
        }
    }

    fn give(&mut self, stats: Stats) {
        match stats {
            Stats::None => {}
            Stats::Dense(h) => self.dense.push(h),
            Stats::Sparse(s) => self.sparse.push(s),
        }
    }
}

fn prefers_sparse(ctx: &GrowContext, n_rows: usize) -> bool {
    n_rows.saturating_mul(ctx.features.len()).saturating_mul(SPARSE_FACTOR) < ctx.layout.len
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitCandidate {
    pub feature: usize,
    /// Non-missing rows with bin <= `bin` go left.
    pub bin: u16,
    pub missing_left: bool,
    pub gain: f64,
}

pub(crate) struct GrowContext<'a> {
    pub binned: &'a BinnedMatrix,
    pub layout: &'a HistLayout,
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub features: &'a [usize],
    pub config: &'a GbdtConfig,
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d <= 0.0 {
        0.0
    } else {
        g * g / d
    }
}

/// Second-order split gain.
pub(crate) fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    0.5 * (score(gl, hl, lambda) + score(gr, hr, lambda) - score(gl + gr, hl + hr, lambda))
}

#[derive(Clone, Copy)]
struct Totals {
    g: f64,
    h: f64,
}

/// Visit every distinct (threshold bin, missing direction) partition of
/// feature `f` with the resulting left/right sums:
/// `visit(bin, missing_left, gl, hl, nl, gr, hr, nr)`.
///
/// A bin holding no rows induces the same partition as the bin before it,
/// so only bin 0 and occupied bins are reported. Missing-left is visited
/// before missing-right; without missing rows only one direction is
/// reported.
#[allow(clippy::too_many_arguments)]
fn scan_feature(
    ctx: &GrowContext,
    stats: &Stats,
    f: usize,
    totals: Totals,
    n_total: u32,
    visit: impl FnMut(u16, bool, f64, f64, u32, f64, f64, u32),
) {
    let n_bins = ctx.binned.n_bins(f);
    let missing = stats.missing(ctx, f);
    match stats {
        Stats::None => {}
        Stats::Dense(hist) => {
            let base = ctx.layout.offsets[f];
            let occupied = (0..n_bins).filter_map(|b| {
                let (c, g, h) = hist.bin(base + b);
                (c > 0).then_some((b, c, g, h))
            });
            scan_occupied(n_bins, missing, occupied, totals, n_total, visit);
        }
        Stats::Sparse(s) => {
            let occupied = s
                .feature(f)
                .iter()
                .filter(|e| e.bin != MISSING_BIN)
                .map(|e| (e.bin as usize, e.count, e.g, e.h));
            scan_occupied(n_bins, missing, occupied, totals, n_total, visit);
        }
    }
}

/// `occupied` yields ascending non-missing bins holding at least one row.
fn scan_occupied(
    n_bins: usize,
    (nm, gm, hm): (u32, f64, f64),
    occupied: impl Iterator<Item = (usize, u32, f64, f64)>,
    totals: Totals,
    n_total: u32,
    mut visit: impl FnMut(u16, bool, f64, f64, u32, f64, f64, u32),
) {
    // the last bin cannot be a threshold: nothing would go right
    let last = n_bins.saturating_sub(1);
    let mut emit = |b: usize, gl: f64, hl: f64, nl: u32| {
        if nm == 0 {
            let (gr, hr, nr) = (totals.g - gl, totals.h - hl, n_total - nl);
            visit(b as u16, hl >= hr, gl, hl, nl, gr, hr, nr);
        } else {
            let (gl_m, hl_m, nl_m) = (gl + gm, hl + hm, nl + nm);
            visit(
                b as u16,
                true,
                gl_m,
                hl_m,
                nl_m,
                totals.g - gl_m,
                totals.h - hl_m,
                n_total - nl_m,
            );
            visit(b as u16, false, gl, hl, nl, totals.g - gl, totals.h - hl, n_total - nl);
        }
    };
    let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0u32);
    let mut started = false;
    for (b, c, g, h) in occupied {
        if b >= last {
            break;
        }
        if b > 0 && !started {
            emit(0, 0.0, 0.0, 0);
        }
        started = true;
        gl += g;
        hl += h;
        nl += c;
        emit(b, gl, hl, nl);
    }
    if !started && last > 0 {
        emit(0, 0.0, 0.0, 0);
    }
}

fn best_split(ctx: &GrowContext, hist: &Stats, totals: Totals, n: u32) -> Option<SplitCandidate> {
    let lambda = ctx.config.l2_lambda;
    let mcw = ctx.config.min_child_weight;
    let mut best: Option<SplitCandidate> = None;
    for &f in ctx.features {
        scan_feature(ctx, hist, f, totals, n, |bin, missing_left, gl, hl, nl, gr, hr, nr| {
            if nl == 0 || nr == 0 || hl < mcw || hr < mcw {
                return;
            }
            let gain = split_gain(gl, hl, gr, hr, lambda);
            if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitCandidate {
                    feature: f,
                    bin,
                    missing_left,
                    gain,
                });
            }
        });
    }
    best
}

struct Leaf {
    node: usize,
    rows: Vec<u32>,
    totals: Totals,
    depth: usize,
    stats: Stats,
    best: Option<SplitCandidate>,
}

fn goes_left(ctx: &GrowContext, split: &SplitCandidate, row: u32) -> bool {
    let b = ctx.binned.feature_bins(split.feature)[row as usize];
    if b == MISSING_BIN {
        split.missing_left
    } else {
        b <= split.bin
    }
}

fn totals_of(ctx: &GrowContext, rows: &[u32]) -> Totals {
    let mut t = Totals { g: 0.0, h: 0.0 };
    for &r in rows {
        t.g += ctx.grad[r as usize];
        t.h += ctx.hess[r as usize];
    }
    t
}

#[derive(Clone, Copy, PartialEq)]
enum ChildInfo {
    /// Children will not be split again.
    None,
    /// Children get histograms.
    Histogram,
    /// Children get histograms and their best split.
    BestSplit,
}

/// Split `leaf`, writing the split node into `nodes` and returning both children.
fn split_leaf(
    ctx: &GrowContext,
    pool: &mut HistPool,
    nodes: &mut Vec<TreeNode>,
    leaf: Leaf,
    split: SplitCandidate,
    importance: &mut [f64],
    info: ChildInfo,
) -> (Leaf, Leaf) {
    let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = leaf.rows.iter().partition(|&&r| goes_left(ctx, &split, r));
    let (left_stats, right_stats) = if info == ChildInfo::None {
        pool.give(leaf.stats);
        (Stats::None, Stats::None)
    } else {
        let small_is_left = left_rows.len() <= right_rows.len();
        let (small_rows, large_rows) = if small_is_left {
            (&left_rows, &right_rows)
        } else {
            (&right_rows, &left_rows)
        };
        let small = pool.build(ctx, small_rows);
        let large = match leaf.stats {
            Stats::Dense(mut h) if !prefers_sparse(ctx, large_rows.len()) => {
                h.remove_rows(ctx, small_rows);
                Stats::Dense(h)
            }
            other => {
                pool.give(other);
                pool.build(ctx, large_rows)
            }
        };
        if small_is_left {
            (small, large)
        } else {
            (large, small)
        }
    };

    let left_node = nodes.len();
    nodes.push(TreeNode::Leaf { value: 0.0 });
    nodes.push(TreeNode::Leaf { value: 0.0 });
    nodes[leaf.node] = TreeNode::Split {
        feature: split.feature,
        threshold: ctx.binned.thresholds[split.feature][split.bin as usize],
        missing_left: split.missing_left,
        left: left_node,
        right: left_node + 1,
    };
    importance[split.feature] += split.gain.max(0.0);

    let make = |node: usize, rows: Vec<u32>, stats: Stats| {
        let totals = totals_of(ctx, &rows);
        let best = if info == ChildInfo::BestSplit {
            best_split(ctx, &stats, totals, rows.len() as u32)
        } else {
            None
        };
        Leaf {
            node,
            rows,
            totals,
            depth: leaf.depth + 1,
            stats,
            best,
        }
    };
    (
        make(left_node, left_rows, left_stats),
        make(left_node + 1, right_rows, right_stats),
    )
}

fn root_leaf(ctx: &GrowContext, pool: &mut HistPool, rows: Vec<u32>, want_best: bool) -> Leaf {
    let stats = pool.build(ctx, &rows);
    let totals = totals_of(ctx, &rows);
    let best = if want_best {
        best_split(ctx, &stats, totals, rows.len() as u32)
    } else {
        None
    };
    Leaf {
        node: 0,
        rows,
        totals,
        depth: 0,
        stats,
        best,
    }
}

fn finish(ctx: &GrowContext, pool: &mut HistPool, mut nodes: Vec<TreeNode>, leaves: Vec<Leaf>) -> Tree {
    let lr = ctx.config.learning_rate;
    let lambda = ctx.config.l2_lambda;
    for leaf in leaves {
        let d = leaf.totals.h + lambda;
        let value = if d > 0.0 { -lr * leaf.totals.g / d } else { 0.0 };
        nodes[leaf.node] = TreeNode::Leaf { value };
        pool.give(leaf.stats);
    }
    Tree { nodes }
}

/// Grow one tree over `rows`, accumulating split gains into `importance`.
pub(crate) fn grow_tree(
    ctx: &GrowContext,
    pool: &mut HistPool,
    growth: Growth,
    rows: Vec<u32>,
    importance: &mut [f64],
) -> Tree {
    match growth {
        Growth::Leafwise => grow_leafwise(ctx, pool, rows, importance),
        Growth::Levelwise => grow_levelwise(ctx, pool, rows, importance),
        Growth::Oblivious => grow_oblivious(ctx, pool, rows, importance),
    }
}

fn grow_leafwise(ctx: &GrowContext, pool: &mut HistPool, rows: Vec<u32>, importance: &mut [f64]) -> Tree {
    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let mut leaves = vec![root_leaf(ctx, pool, rows, true)];
    while leaves.len() < ctx.config.max_leaves {
        let mut pick: Option<usize> = None;
        for (i, leaf) in leaves.iter().enumerate() {
            if let Some(s) = leaf.best {
                if pick.is_none_or(|p| s.gain > leaves[p].best.unwrap().gain) {
                    pick = Some(i);
                }
            }
        }
        let Some(i) = pick else { break };
        let leaf = leaves.swap_remove(i);
        let split = leaf.best.unwrap();
        let info = if leaves.len() + 2 < ctx.config.max_leaves {
            ChildInfo::BestSplit
        } else {
            ChildInfo::None
        };
        let (l, r) = split_leaf(ctx, pool, &mut nodes, leaf, split, importance, info);
        leaves.push(l);
        leaves.push(r);
        // keep leaves ordered by node index so tie-breaking is stable
        leaves.sort_by_key(|l| l.node);
    }
    finish(ctx, pool, nodes, leaves)
}

fn grow_levelwise(ctx: &GrowContext, pool: &mut HistPool, rows: Vec<u32>, importance: &mut [f64]) -> Tree {
    let max_depth = ctx.config.max_depth;
    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let mut frontier = vec![root_leaf(ctx, pool, rows, max_depth > 0)];
    let mut done = Vec::new();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for leaf in frontier {
            match leaf.best {
                Some(split) if leaf.depth < max_depth => {
                    let info = if leaf.depth + 1 < max_depth {
                        ChildInfo::BestSplit
                    } else {
                        ChildInfo::None
                    };
                    let (l, r) = split_leaf(ctx, pool, &mut nodes, leaf, split, importance, info);
                    next.push(l);
                    next.push(r);
                }
                _ => done.push(leaf),
            }
        }
        frontier = next;
    }
    finish(ctx, pool, nodes, done)
}

/// Symmetric tree: one (feature, threshold, missing direction) per depth,
/// chosen to maximise the summed gain over all current leaves. Child
/// weight limits do not apply here since every leaf must take the split.
fn grow_oblivious(ctx: &GrowContext, pool: &mut HistPool, rows: Vec<u32>, importance: &mut [f64]) -> Tree {
    let lambda = ctx.config.l2_lambda;
    let max_depth = ctx.config.max_depth;
    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let mut leaves = vec![root_leaf(ctx, pool, rows, false)];
    // delta[slot * 2 + dir], dir 0 = missing left: per-leaf gain changes,
    // prefix-summed per feature into the summed gain of each candidate
    let mut delta = vec![0.0f64; ctx.layout.len * 2];
    for depth in 0..max_depth {
        delta.fill(0.0);
        for leaf in leaves.iter().filter(|l| !l.rows.is_empty()) {
            let n = leaf.rows.len() as u32;
            for &f in ctx.features {
                let base = ctx.layout.offsets[f];
                let has_missing = leaf.stats.missing(ctx, f).0 > 0;
                let mut prev = [0.0f64; 2];
                scan_feature(
                    ctx,
                    &leaf.stats,
                    f,
                    leaf.totals,
                    n,
                    |bin, missing_left, gl, hl, _, gr, hr, _| {
                        let slot = (base + bin as usize) * 2;
                        let gain = split_gain(gl, hl, gr, hr, lambda);
                        if !has_missing {
                            // no missing rows: both directions give the same partition
                            for d in 0..2 {
                                delta[slot + d] += gain - prev[d];
                                prev[d] = gain;
                            }
                        } else {
                            let d = usize::from(!missing_left);
                            delta[slot + d] += gain - prev[d];
                            prev[d] = gain;
                        }
                    },
                );
            }
        }
        let mut best: Option<SplitCandidate> = None;
        for &f in ctx.features {
            let base = ctx.layout.offsets[f];
            let mut total = [0.0f64; 2];
            for b in 0..ctx.binned.n_bins(f).saturating_sub(1) {
                for (dir, t) in total.iter_mut().enumerate() {
                    *t += delta[(base + b) * 2 + dir];
                    let gain = *t;
                    if gain > 1e-12 && best.is_none_or(|s| gain > s.gain) {
                        best = Some(SplitCandidate {
                            feature: f,
                            bin: b as u16,
                            missing_left: dir == 0,
                            gain,
                        });
                    }
                }
            }
        }
        let Some(split) = best else { break };
        let info = if depth + 1 < max_depth {
            ChildInfo::Histogram
        } else {
            ChildInfo::None
        };
        let mut next = Vec::with_capacity(leaves.len() * 2);
        for leaf in leaves {
            let leaf_split = SplitCandidate {
                gain: leaf_gain(ctx, &leaf, &split),
                ..split
            };
            let (l, r) = split_leaf(ctx, pool, &mut nodes, leaf, leaf_split, importance, info);
            next.push(l);
            next.push(r);
        }
        leaves = next;
    }
    finish(ctx, pool, nodes, leaves)
}

fn leaf_gain(ctx: &GrowContext, leaf: &Leaf, split: &SplitCandidate) -> f64 {
    if leaf.rows.is_empty() {
        return 0.0;
    }
    let f = split.feature;
    let (mut gl, mut hl) = leaf.stats.left_sums(ctx, f, split.bin);
    if split.missing_left {
        let (_, gm, hm) = leaf.stats.missing(ctx, f);
        gl += gm;
        hl += hm;
    }
    split_gain(gl, hl, leaf.totals.g - gl, leaf.totals.h - hl, ctx.config.l2_lambda)
}

/// Best root split over `rows`, exposed for oracle comparisons.
pub(crate) fn root_split(ctx: &GrowContext, rows: Vec<u32>) -> Option<SplitCandidate> {
    root_leaf(ctx, &mut HistPool::default(), rows, true).best
}
