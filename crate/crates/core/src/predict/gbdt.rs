use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{accuracy, sigmoid, stratified_folds, Classifier, DesignMatrix, PROBA_CLAMP};
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    pub max_bins: usize,
    /// Consider every distinct value as a threshold instead of quantile candidates.
    pub exact_splits: bool,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_estimators: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_leaf: 20,
            lambda: 1.0,
            max_bins: 32,
            exact_splits: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub names: Vec<String>,
    /// Log-odds of the training prevalence.
    pub base_score: f64,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub trees: Vec<Tree>,
    pub params: GbdtParams,
    /// Mean training log-loss after 0, 1, ..., n trees.
    pub training_loss: Vec<f64>,
}

impl GbdtModel {
    pub fn n_estimators(&self) -> usize {
        self.trees.len()
    }

    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.base_score
            + self
                .trees
                .iter()
                .map(|t| self.learning_rate * t.leaf_value(row))
                .sum::<f64>()
    }

    /// The model made of the first `n` trees.
    pub fn truncated(&self, n: usize) -> GbdtModel {
        let n = n.min(self.trees.len());
        GbdtModel {
            trees: self.trees[..n].to_vec(),
            params: GbdtParams {
                n_estimators: n,
                ..self.params
            },
            training_loss: self.training_loss[..=n].to_vec(),
            ..self.clone()
        }
    }

    /// Accuracy on `x` after each of the requested tree counts.
    pub fn staged_accuracy(&self, x: &DesignMatrix, stages: &[usize]) -> Vec<f64> {
        let n = x.n_rows();
        let mut scores = vec![self.base_score; n];
        let mut row = vec![0.0; x.n_cols()];
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                x.row_into(i, &mut row);
                row.clone()
            })
            .collect();
        let mut out = Vec::with_capacity(stages.len());
        let mut done = 0;
        let mut sorted: Vec<(usize, usize)> = stages.iter().copied().enumerate().collect();
        sorted.sort_by_key(|s| s.1);
        let mut result = vec![0.0; stages.len()];
        for (slot, stage) in sorted {
            let stage = stage.min(self.trees.len());
            for t in &self.trees[done..stage] {
                for (s, r) in scores.iter_mut().zip(&rows) {
                    *s += self.learning_rate * t.leaf_value(r);
                }
            }
            done = stage;
            let p: Vec<f64> = scores.iter().map(|s| sigmoid(*s)).collect();
            result[slot] = accuracy(&p, x.labels());
        }
        out.extend(result);
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<GbdtModel> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

impl Classifier for GbdtModel {
    fn feature_names(&self) -> &[String] {
        &self.names
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.raw_score(row)).clamp(PROBA_CLAMP, 1.0 - PROBA_CLAMP)
    }
}

/// Features pre-binned against per-feature threshold lists.
struct Binned {
    n: usize,
    thresholds: Vec<Vec<f64>>,
    /// Column-major bin indices; bin `b` holds values in `(t[b-1], t[b]]`.
    bins: Vec<u32>,
}

fn candidate_thresholds(values: &mut [f64], max_bins: usize, exact: bool) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let max = values[n - 1];
    let mut out: Vec<f64> = if exact || n <= max_bins {
        values.to_vec()
    } else {
        (1..max_bins)
            .map(|q| values[(q * n).div_ceil(max_bins) - 1])
            .collect()
    };
    out.dedup();
    out.retain(|t| *t < max);
    out
}

impl Binned {
    fn new(x: &DesignMatrix, params: &GbdtParams) -> Binned {
        let n = x.n_rows();
        let mut thresholds = Vec::with_capacity(x.n_cols());
        let mut bins = Vec::with_capacity(n * x.n_cols());
        for col in x.x().column_iter() {
            let mut vals: Vec<f64> = col.iter().copied().collect();
            let t = candidate_thresholds(&mut vals, params.max_bins, params.exact_splits);
            bins.extend(col.iter().map(|v| t.partition_point(|th| th < v) as u32));
            thresholds.push(t);
        }
        Binned { n, thresholds, bins }
    }

    fn bin(&self, feature: usize, row: usize) -> usize {
        self.bins[feature * self.n + row] as usize
    }
}

struct Grower<'a> {
    binned: &'a Binned,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbdtParams,
    nodes: Vec<Node>,
    hist: Vec<[f64; 3]>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    bin: usize,
}

impl Grower<'_> {
    fn leaf(&mut self, g: f64, h: f64) -> usize {
        self.nodes.push(Node::Leaf {
            value: -g / (h + self.params.lambda),
        });
        self.nodes.len() - 1
    }

    fn best_split(&mut self, rows: &[usize], g: f64, h: f64) -> Option<BestSplit> {
        let lambda = self.params.lambda;
        let min_leaf = self.params.min_leaf.max(1);
        let parent = g * g / (h + lambda);
        let mut best: Option<BestSplit> = None;
        for f in 0..self.binned.thresholds.len() {
            let nb = self.binned.thresholds[f].len();
            if nb == 0 {
                continue;
            }
            self.hist.clear();
            self.hist.resize(nb + 1, [0.0; 3]);
            for &r in rows {
                let e = &mut self.hist[self.binned.bin(f, r)];
                e[0] += self.grad[r];
                e[1] += self.hess[r];
                e[2] += 1.0;
            }
            let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0.0);
            for b in 0..nb {
                let e = self.hist[b];
                gl += e[0];
                hl += e[1];
                cl += e[2];
                let cr = rows.len() as f64 - cl;
                if cl < min_leaf as f64 {
                    continue;
                }
                if cr < min_leaf as f64 {
                    break;
                }
                let (gr, hr) = (g - gl, h - hl);
                let gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent);
                if gain > 1e-12 && best.as_ref().is_none_or(|bs| gain > bs.gain) {
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        bin: b,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let g: f64 = rows.iter().map(|&r| self.grad[r]).sum();
        let h: f64 = rows.iter().map(|&r| self.hess[r]).sum();
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf.max(1) {
            return self.leaf(g, h);
        }
        let Some(split) = self.best_split(rows, g, h) else {
            return self.leaf(g, h);
        };
        let binned = self.binned;
        let mut left: Vec<usize> = Vec::with_capacity(rows.len());
        let mut right: Vec<usize> = Vec::with_capacity(rows.len());
        for &r in rows.iter() {
            if binned.bin(split.feature, r) <= split.bin {
                left.push(r);
            } else {
                right.push(r);
            }
        }
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let l = self.grow(&mut left, depth + 1);
        let r = self.grow(&mut right, depth + 1);
        self.nodes[me] = Node::Split {
            feature: split.feature,
            threshold: binned.thresholds[split.feature][split.bin],
            left: l,
            right: r,
        };
        me
    }
}

fn log_loss(scores: &[f64], labels: &[bool]) -> f64 {
    let s: f64 = scores
        .iter()
        .zip(labels)
        .map(|(s, &y)| {
            let z = if y { -s } else { *s };
            if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            }
        })
        .sum();
    s / scores.len() as f64
}

fn validate_params(p: &GbdtParams) -> Result<()> {
    if p.n_estimators == 0 || p.max_bins < 2 || !(p.learning_rate > 0.0) || !(p.lambda >= 0.0) {
        return Err(Error::invalid(format!("invalid boosting parameters {p:?}")));
    }
    Ok(())
}

/// Second-order boosting on the logistic loss with fixed parameters.
pub fn train_gbdt(x: &DesignMatrix, params: &GbdtParams) -> Result<GbdtModel> {
    validate_params(params)?;
    let n = x.n_rows();
    if n == 0 {
        return Err(Error::Empty("no training rows".into()));
    }
    let prev = x.prevalence();
    if prev <= 0.0 || prev >= 1.0 {
        return Err(Error::Degenerate("boosting needs both classes".into()));
    }
    let base_score = (prev / (1.0 - prev)).ln();
    let binned = Binned::new(x, params);
    let labels = x.labels();
    let mut scores = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut training_loss = vec![log_loss(&scores, labels)];
    let mut rows: Vec<usize> = (0..n).collect();
    for _ in 0..params.n_estimators {
        for i in 0..n {
            let p = sigmoid(scores[i]);
            grad[i] = p - labels[i] as u8 as f64;
            hess[i] = (p * (1.0 - p)).max(1e-16);
        }
        let mut grower = Grower {
            binned: &binned,
            grad: &grad,
            hess: &hess,
            params,
            nodes: Vec::new(),
            hist: Vec::new(),
        };
        grower.grow(&mut rows, 0);
        let tree = Tree {
            nodes: grower.nodes,
        };
        // Leaf lookup by bins matches threshold comparison on the raw values.
        for (i, s) in scores.iter_mut().enumerate() {
            *s += params.learning_rate * leaf_by_bins(&tree, &binned, i);
        }
        training_loss.push(log_loss(&scores, labels));
        trees.push(tree);
    }
    Ok(GbdtModel {
        names: x.names().to_vec(),
        base_score,
        learning_rate: params.learning_rate,
        max_depth: params.max_depth,
        trees,
        params: *params,
        training_loss,
    })
}

fn leaf_by_bins(tree: &Tree, binned: &Binned, row: usize) -> f64 {
    let mut i = 0;
    loop {
        match tree.nodes[i] {
            Node::Leaf { value } => return value,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let b = binned.bin(feature, row);
                let t = &binned.thresholds[feature];
                i = if b < t.len() && t[b] <= threshold { left } else { right };
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtGrid {
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub learning_rate: Vec<f64>,
}

impl Default for GbdtGrid {
    fn default() -> Self {
        GbdtGrid {
            n_estimators: vec![25, 50, 100],
            max_depth: vec![2, 4, 5],
            learning_rate: vec![0.01, 0.1, 0.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub grid: GbdtGrid,
    pub seed: u64,
    /// Parameters not searched over (leaf size, penalty, binning).
    pub base: GbdtParams,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 3,
            grid: GbdtGrid::default(),
            seed: 0,
            base: GbdtParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub points: Vec<GridPoint>,
    pub best: GridPoint,
}

/// Grid search by stratified k-fold accuracy, then a refit on all rows.
///
/// Tree counts share one fit per (depth, rate, fold): smaller counts are
/// prefixes of the largest ensemble.
pub fn fit_gbdt(x: &DesignMatrix, cv: &CvConfig) -> Result<(GbdtModel, CvReport)> {
    let grid = &cv.grid;
    if grid.n_estimators.is_empty() || grid.max_depth.is_empty() || grid.learning_rate.is_empty() {
        return Err(Error::invalid("empty hyperparameter grid"));
    }
    if x.n_rows() < 2 * cv.folds {
        return Err(Error::Degenerate(format!(
            "{} rows for {} folds",
            x.n_rows(),
            cv.folds
        )));
    }
    let folds = stratified_folds(x.labels(), cv.folds, cv.seed)?;
    let mut stages = grid.n_estimators.clone();
    stages.sort_unstable();
    stages.dedup();
    let mut depths = grid.max_depth.clone();
    depths.sort_unstable();
    depths.dedup();
    let mut rates = grid.learning_rate.clone();
    rates.sort_by(f64::total_cmp);
    rates.dedup();
    let max_trees = *stages.last().unwrap();

    let mut jobs = Vec::new();
    for &d in &depths {
        for &lr in &rates {
            for f in 0..folds.len() {
                jobs.push((d, lr, f));
            }
        }
    }
    let results = par::map(&jobs, |&(d, lr, f)| -> Result<Vec<f64>> {
        let train_rows: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        let mut train_rows = train_rows;
        train_rows.sort_unstable();
        let params = GbdtParams {
            n_estimators: max_trees,
            max_depth: d,
            learning_rate: lr,
            ..cv.base
        };
        let model = train_gbdt(&x.select_rows(&train_rows), &params)?;
        Ok(model.staged_accuracy(&x.select_rows(&folds[f]), &stages))
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let k = folds.len();
    let mut points = Vec::new();
    for &n in &stages {
        for (di, &d) in depths.iter().enumerate() {
            for (li, &lr) in rates.iter().enumerate() {
                let s = stages.iter().position(|v| *v == n).unwrap();
                let base = (di * rates.len() + li) * k;
                let fold_accuracies: Vec<f64> = (0..k).map(|f| results[base + f][s]).collect();
                let mean_accuracy = fold_accuracies.iter().sum::<f64>() / k as f64;
                points.push(GridPoint {
                    n_estimators: n,
                    max_depth: d,
                    learning_rate: lr,
                    fold_accuracies,
                    mean_accuracy,
                });
            }
        }
    }
    // Points are ordered by (trees, depth, rate), so the first maximum wins ties.
    let mut best = &points[0];
    for p in &points[1..] {
        if p.mean_accuracy > best.mean_accuracy + 1e-12 {
            best = p;
        }
    }
    let best = best.clone();
    let model = train_gbdt(
        x,
        &GbdtParams {
            n_estimators: best.n_estimators,
            max_depth: best.max_depth,
            learning_rate: best.learning_rate,
            ..cv.base
        },
    )?;
    Ok((
        model,
        CvReport {
            folds: k,
            points,
            best,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::balanced_accuracy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn xor(n: usize, seed: u64) -> DesignMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0])
            .collect();
        let y = rows.iter().map(|r| (r[0] > 0.0) != (r[1] > 0.0)).collect();
        DesignMatrix::from_rows(vec!["a".into(), "b".into()], &rows, y).unwrap()
    }

    #[test]
    fn thresholds() {
        let mut v = vec![3.0, 1.0, 2.0, 2.0, 5.0];
        assert_eq!(candidate_thresholds(&mut v, 32, false), vec![1.0, 2.0, 3.0]);
        let mut v: Vec<f64> = (0..1000).map(f64::from).collect();
        let t = candidate_thresholds(&mut v, 32, false);
        assert!(t.len() <= 31);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn constant_feature_predicts_prevalence() {
        let rows = vec![vec![1.0]; 100];
        let y: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let x = DesignMatrix::from_rows(vec!["c".into()], &rows, y).unwrap();
        let m = train_gbdt(&x, &GbdtParams::default()).unwrap();
        assert!(m.predict_proba(&x).unwrap().iter().all(|p| *p == 0.5));
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn learns_xor() {
        let train = xor(2000, 1);
        let test = xor(1000, 2);
        let m = train_gbdt(
            &train,
            &GbdtParams {
                max_depth: 4,
                learning_rate: 0.2,
                ..Default::default()
            },
        )
        .unwrap();
        let acc = balanced_accuracy(&m.predict_proba(&test).unwrap(), test.labels());
        assert!(acc >= 0.9, "{acc}");
        assert!(m.training_loss.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(m.trees.iter().all(|t| t.depth() <= 4));
    }

    #[test]
    fn prediction_is_sigmoid_of_summed_leaves() {
        let x = xor(300, 3);
        let m = train_gbdt(
            &x,
            &GbdtParams {
                n_estimators: 2,
                max_depth: 2,
                learning_rate: 0.3,
                ..Default::default()
            },
        )
        .unwrap();
        for i in 0..10 {
            let r = x.row(i);
            let by_hand = m.base_score + 0.3 * (m.trees[0].leaf_value(&r) + m.trees[1].leaf_value(&r));
            assert_eq!(m.predict_row(&r), 1.0 / (1.0 + (-by_hand).exp()));
        }
    }

    #[test]
    fn staged_prefix_matches_separate_fit() {
        let x = xor(400, 4);
        let full = train_gbdt(&x, &GbdtParams { n_estimators: 30, ..Default::default() }).unwrap();
        let short = train_gbdt(&x, &GbdtParams { n_estimators: 10, ..Default::default() }).unwrap();
        assert_eq!(full.truncated(10), short);
        let staged = full.staged_accuracy(&x, &[30, 10]);
        assert_eq!(staged[1], accuracy(&short.predict_proba(&x).unwrap(), x.labels()));
    }

    #[test]
    fn grid_search_is_deterministic() {
        let x = xor(300, 5);
        let cv = CvConfig {
            grid: GbdtGrid {
                n_estimators: vec![5, 10],
                max_depth: vec![2, 3],
                learning_rate: vec![0.1, 0.3],
            },
            ..Default::default()
        };
        let (m1, r1) = fit_gbdt(&x, &cv).unwrap();
        let (m2, r2) = fit_gbdt(&x, &cv).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(r1, r2);
        assert_eq!(r1.points.len(), 8);
        let bad = CvConfig {
            grid: GbdtGrid {
                n_estimators: vec![],
                ..cv.grid.clone()
            },
            ..cv
        };
        assert!(fit_gbdt(&x, &bad).is_err());
    }

    #[test]
    fn json_round_trip() {
        let x = xor(200, 6);
        let m = train_gbdt(&x, &GbdtParams { n_estimators: 3, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        m.write_json(&p).unwrap();
        assert_eq!(GbdtModel::read_json(&p).unwrap(), m);
    }
}
