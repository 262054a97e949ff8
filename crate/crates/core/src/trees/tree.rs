use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{SplitMode, TreeConfig};
use crate::error::{Error, Result};
use crate::rng;

/// A split is kept only when it removes more than this fraction of the
/// node's sum of squared deviations. Guards against round-off gains.
const MIN_RELATIVE_GAIN: f64 = 1e-12;

/// Column-major copy of a feature matrix, the layout the split search reads.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl ColumnMatrix {
    /// Copies `x`, rejecting non-finite entries.
    pub fn from_array(x: &Array2<f64>) -> Result<Self> {
        let (n_rows, n_cols) = x.dim();
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for col in x.columns() {
            for &v in col {
                if !v.is_finite() {
                    return Err(Error::NonFinite("feature matrix".into()));
                }
                data.push(v);
            }
        }
        Ok(ColumnMatrix {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Fitted regression tree stored as a flat node array rooted at index 0.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_features: usize,
}

impl DecisionTree {
    /// Rebuilds a tree from raw nodes, checking that child links form a
    /// single tree rooted at 0 whose children always follow their parent.
    pub fn from_nodes(nodes: Vec<Node>, n_features: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Format("tree without nodes".into()));
        }
        let mut referenced = vec![false; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                left,
                right,
                threshold,
            } = *node
            {
                if feature >= n_features || !threshold.is_finite() {
                    return Err(Error::Format(format!("node {i}: bad split")));
                }
                for child in [left, right] {
                    if child <= i || child >= nodes.len() || referenced[child] {
                        return Err(Error::Format(format!("node {i}: bad child link {child}")));
                    }
                    referenced[child] = true;
                }
            }
        }
        if referenced.iter().skip(1).any(|r| !r) {
            return Err(Error::Format("tree has unreachable nodes".into()));
        }
        Ok(DecisionTree { nodes, n_features })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut max = 0;
        for (i, n) in self.nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = *n {
                depth[left] = depth[i] + 1;
                depth[right] = depth[i] + 1;
                max = max.max(depth[i] + 1);
            }
        }
        max
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::dim("tree input", self.n_features, x.len()));
        }
        Ok(self.predict_unchecked(x))
    }

    pub fn predict_batch(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::dim("tree input columns", self.n_features, x.ncols()));
        }
        let x = x.as_standard_layout();
        Ok(x.rows()
            .into_iter()
            .map(|r| self.predict_unchecked(r.as_slice().expect("standard layout")))
            .collect())
    }
}

/// Fits one tree on every row of `x` with the RNG seeded from `cfg.seed`.
pub fn fit_tree(x: &Array2<f64>, y: &[f64], cfg: &TreeConfig) -> Result<DecisionTree> {
    if x.nrows() == 0 {
        return Err(Error::Empty("training rows".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::dim("target length", x.nrows(), y.len()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("targets".into()));
    }
    cfg.validate()?;
    let cols = ColumnMatrix::from_array(x)?;
    let sample: Vec<u32> = (0..x.nrows() as u32).collect();
    Ok(grow_tree(&cols, y, sample, cfg, rng::stream(cfg.seed, &[])))
}

#[derive(Clone, Copy, Debug)]
struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Split {
    fn beats(&self, other: &Option<Split>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.gain > o.gain
                    || (self.gain == o.gain
                        && (self.feature < o.feature
                            || (self.feature == o.feature && self.threshold < o.threshold)))
            }
        }
    }
}

enum Scan {
    Constant,
    NoValid,
    Found(Split),
}

struct Builder<'a> {
    cols: &'a ColumnMatrix,
    y: &'a [f64],
    cfg: &'a TreeConfig,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    pairs: Vec<(f64, f64)>,
    features: Vec<usize>,
}

/// Grows a tree on the (possibly repeated) row indices in `sample`.
pub(crate) fn grow_tree(
    cols: &ColumnMatrix,
    y: &[f64],
    mut sample: Vec<u32>,
    cfg: &TreeConfig,
    rng: ChaCha8Rng,
) -> DecisionTree {
    let d = cols.n_cols();
    let mut b = Builder {
        cols,
        y,
        cfg,
        mtry: cfg.max_features.resolve(d),
        rng,
        nodes: Vec::new(),
        pairs: Vec::with_capacity(sample.len()),
        features: Vec::with_capacity(d),
    };
    b.nodes.push(Node::Leaf { value: 0.0 });
    let max_depth = cfg.max_depth.unwrap_or(usize::MAX);
    let msl = cfg.min_samples_leaf;
    let mut stack = vec![(0usize, 0usize, sample.len(), 0usize)];
    while let Some((node, start, end, depth)) = stack.pop() {
        let idx = &mut sample[start..end];
        let n = idx.len();
        let (mut sum, mut lo, mut hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
        for &i in idx.iter() {
            let v = y[i as usize];
            sum += v;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let mean = sum / n as f64;
        b.nodes[node] = Node::Leaf { value: mean };
        if n < 2 * msl || depth >= max_depth || lo == hi {
            continue;
        }
        let sse: f64 = idx
            .iter()
            .map(|&i| {
                let c = y[i as usize] - mean;
                c * c
            })
            .sum();
        let Some(split) = b.find_split(idx, mean, sse) else {
            continue;
        };
        let col = cols.column(split.feature);
        let mut mid = 0;
        for k in 0..n {
            if col[idx[k] as usize] <= split.threshold {
                idx.swap(k, mid);
                mid += 1;
            }
        }
        debug_assert!(mid >= msl && n - mid >= msl);
        let left = b.nodes.len();
        b.nodes.push(Node::Leaf { value: 0.0 });
        b.nodes.push(Node::Leaf { value: 0.0 });
        b.nodes[node] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right: left + 1,
        };
        stack.push((left + 1, start + mid, end, depth + 1));
        stack.push((left, start, start + mid, depth + 1));
    }
    DecisionTree {
        nodes: b.nodes,
        n_features: d,
    }
}

impl Builder<'_> {
    /// Visits features in random order until `mtry` non-constant ones have
    /// been scanned, returning the best split with positive gain.
    fn find_split(&mut self, idx: &[u32], mean: f64, sse: f64) -> Option<Split> {
        let d = self.cols.n_cols();
        self.features.clear();
        self.features.extend(0..d);
        let mut best: Option<Split> = None;
        let mut visited = 0;
        let mut i = 0;
        while i < d && visited < self.mtry {
            let j = self.rng.random_range(i..d);
            self.features.swap(i, j);
            let f = self.features[i];
            i += 1;
            let scan = match self.cfg.split_mode {
                SplitMode::BestOfSubset => self.scan_best(f, idx, mean),
                SplitMode::RandomThreshold => self.scan_random(f, idx, mean),
            };
            match scan {
                Scan::Constant => {}
                Scan::NoValid => visited += 1,
                Scan::Found(s) => {
                    visited += 1;
                    if s.beats(&best) {
                        best = Some(s);
                    }
                }
            }
        }
        best.filter(|s| s.gain > MIN_RELATIVE_GAIN * sse)
    }

    // Gains are computed on targets centred at the node mean, so that
    // gain = S_l^2 / n_l + S_r^2 / n_r - S^2 / n with S close to zero.
    fn scan_best(&mut self, f: usize, idx: &[u32], mean: f64) -> Scan {
        let col = self.cols.column(f);
        let y = self.y;
        self.pairs.clear();
        self.pairs
            .extend(idx.iter().map(|&i| (col[i as usize], y[i as usize] - mean)));
        let (lo, hi) = self
            .pairs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
        if lo == hi {
            return Scan::Constant;
        }
        self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let n = self.pairs.len();
        let msl = self.cfg.min_samples_leaf;
        let total: f64 = self.pairs.iter().map(|p| p.1).sum();
        let base = total * total / n as f64;
        let mut sl = 0.0;
        let mut best: Option<(f64, usize)> = None;
        for k in 0..n - 1 {
            sl += self.pairs[k].1;
            let nl = k + 1;
            if nl < msl {
                continue;
            }
            if n - nl < msl {
                break;
            }
            if self.pairs[k].0 == self.pairs[k + 1].0 {
                continue;
            }
            let sr = total - sl;
            let gain = sl * sl / nl as f64 + sr * sr / (n - nl) as f64 - base;
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, k));
            }
        }
        match best {
            None => Scan::NoValid,
            Some((gain, k)) => {
                let (a, b) = (self.pairs[k].0, self.pairs[k + 1].0);
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                Scan::Found(Split {
                    feature: f,
                    threshold,
                    gain,
                })
            }
        }
    }

    fn scan_random(&mut self, f: usize, idx: &[u32], mean: f64) -> Scan {
        let col = self.cols.column(f);
        let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let v = col[i as usize];
            (lo.min(v), hi.max(v))
        });
        if lo == hi {
            return Scan::Constant;
        }
        let mut threshold = lo;
        for _ in 0..16 {
            let u: f64 = self.rng.random();
            let t = lo + u * (hi - lo);
            if t > lo && t < hi {
                threshold = t;
                break;
            }
        }
        let (mut sl, mut total, mut nl) = (0.0, 0.0, 0usize);
        for &i in idx {
            let c = self.y[i as usize] - mean;
            total += c;
            if col[i as usize] <= threshold {
                sl += c;
                nl += 1;
            }
        }
        let n = idx.len();
        let msl = self.cfg.min_samples_leaf;
        if nl < msl || n - nl < msl {
            return Scan::NoValid;
        }
        let sr = total - sl;
        let gain = sl * sl / nl as f64 + sr * sr / (n - nl) as f64 - total * total / n as f64;
        Scan::Found(Split {
            feature: f,
            threshold,
            gain,
        })
    }
}
