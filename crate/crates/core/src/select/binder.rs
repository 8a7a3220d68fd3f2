use serde::{Deserialize, Serialize};

use super::{Partition, SimilarityMatrix};

/// Objective differences below this count as ties.
const TIE_EPS: f64 = 1e-10;

/// Largest item count solved by full enumeration of set partitions.
pub const MAX_ENUMERATED_ITEMS: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinderSolver {
    /// Every set partition (restricted growth strings).
    Exact,
    /// Interval dynamic program over partitions into runs of levels.
    Contiguous,
    /// Agglomerative merging followed by single-level moves.
    Greedy,
}

/// `sum_{j < k} I(z_k = z_j) (1/2 - pi_kj)`.
pub fn binder_objective(pi: &SimilarityMatrix, p: &Partition) -> f64 {
    let n = pi.n();
    let mut s = 0.0;
    for a in 0..n {
        for b in 0..a {
            if p.same_cluster(a, b) {
                s += 0.5 - pi.get(a, b);
            }
        }
    }
    s
}

/// Minimizes the Binder objective. Contiguous problems use the interval
/// program at any size; otherwise up to [`MAX_ENUMERATED_ITEMS`] levels are
/// enumerated and larger ones use the greedy heuristic. Ties go to fewer
/// clusters, then to the lexicographically smallest labeling.
pub fn minimize_binder(pi: &SimilarityMatrix, contiguous: bool) -> Partition {
    let solver = if contiguous {
        BinderSolver::Contiguous
    } else if pi.n() <= MAX_ENUMERATED_ITEMS {
        BinderSolver::Exact
    } else {
        BinderSolver::Greedy
    };
    minimize_binder_with(pi, solver)
}

pub fn minimize_binder_with(pi: &SimilarityMatrix, solver: BinderSolver) -> Partition {
    match solver {
        BinderSolver::Exact => exact(pi),
        BinderSolver::Contiguous => contiguous(pi),
        BinderSolver::Greedy => greedy(pi),
    }
}

/// `true` if `(obj, p)` beats the incumbent under the tie rules.
fn better(obj: f64, p: &[usize], k: usize, best_obj: f64, best: &[usize], best_k: usize) -> bool {
    if obj < best_obj - TIE_EPS {
        return true;
    }
    if obj > best_obj + TIE_EPS {
        return false;
    }
    k < best_k || (k == best_k && p < best)
}

fn exact(pi: &SimilarityMatrix) -> Partition {
    let n = pi.n();
    if n == 0 {
        return Partition::singletons(0);
    }
    struct Search<'a> {
        pi: &'a SimilarityMatrix,
        labels: Vec<usize>,
        best: Vec<usize>,
        best_obj: f64,
        best_k: usize,
    }
    impl Search<'_> {
        fn go(&mut self, i: usize, k: usize, obj: f64) {
            let n = self.labels.len();
            if i == n {
                if better(obj, &self.labels, k, self.best_obj, &self.best, self.best_k) {
                    self.best.copy_from_slice(&self.labels);
                    self.best_obj = obj;
                    self.best_k = k;
                }
                return;
            }
            for l in 0..=k {
                let add: f64 = (0..i)
                    .filter(|&j| self.labels[j] == l)
                    .map(|j| 0.5 - self.pi.get(i, j))
                    .sum();
                self.labels[i] = l;
                self.go(i + 1, k.max(l + 1), obj + add);
            }
        }
    }
    let mut s = Search {
        pi,
        labels: vec![0; n],
        best: (0..n).collect(),
        best_obj: f64::INFINITY,
        best_k: n,
    };
    s.go(1, 1, 0.0);
    Partition::from_labels(&s.best)
}

fn contiguous(pi: &SimilarityMatrix) -> Partition {
    let n = pi.n();
    if n == 0 {
        return Partition::singletons(0);
    }
    // seg[a][b]: cost of one run covering levels a..b (exclusive)
    let mut seg = vec![vec![0.0; n + 1]; n + 1];
    for a in 0..n {
        for b in a + 1..=n {
            let last = b - 1;
            let add: f64 = (a..last).map(|j| 0.5 - pi.get(last, j)).sum();
            seg[a][b] = if b > a + 1 { seg[a][b - 1] } else { 0.0 } + add;
        }
    }
    // f[i][m]: best cost of splitting levels i..n into m runs
    let inf = f64::INFINITY;
    let mut f = vec![vec![inf; n + 1]; n + 1];
    f[n][0] = 0.0;
    for i in (0..n).rev() {
        for m in 1..=n - i {
            let mut best = inf;
            for e in i + 1..=n {
                let rest = f[e][m - 1];
                if rest < inf {
                    best = best.min(seg[i][e] + rest);
                }
            }
            f[i][m] = best;
        }
    }
    let mut m = 1;
    for k in 2..=n {
        if f[0][k] < f[0][m] - TIE_EPS {
            m = k;
        }
    }
    // the longest feasible first run gives the smallest labeling
    let mut labels = Vec::with_capacity(n);
    let (mut i, mut target) = (0, f[0][m]);
    for label in 0..m {
        let left = m - label;
        let end = (i + 1..=n)
            .rev()
            .find(|&e| f[e][left - 1] < inf && seg[i][e] + f[e][left - 1] <= target + TIE_EPS)
            .expect("dp table is consistent");
        labels.extend(std::iter::repeat_n(label, end - i));
        target -= seg[i][end];
        i = end;
    }
    Partition::from_labels(&labels)
}

fn greedy(pi: &SimilarityMatrix) -> Partition {
    let n = pi.n();
    let mut labels: Vec<usize> = (0..n).collect();
    loop {
        let merged = merge_phase(pi, &mut labels);
        let moved = move_phase(pi, &mut labels);
        if !merged && !moved {
            break;
        }
    }
    Partition::from_labels(&labels)
}

/// Sum of `1/2 - pi` over level pairs split between clusters `a` and `b`.
fn cross(pi: &SimilarityMatrix, labels: &[usize], a: usize, b: usize) -> f64 {
    let mut s = 0.0;
    for (x, &lx) in labels.iter().enumerate() {
        if lx != a {
            continue;
        }
        for (y, &ly) in labels.iter().enumerate() {
            if ly == b {
                s += 0.5 - pi.get(x, y);
            }
        }
    }
    s
}

/// Agglomerative merging: repeatedly merges the pair of clusters with the
/// largest decrease (ties count as decreases). Returns whether anything merged.
fn merge_phase(pi: &SimilarityMatrix, labels: &mut Vec<usize>) -> bool {
    let mut any = false;
    loop {
        *labels = Partition::from_labels(labels).labels;
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..k {
            for b in a + 1..k {
                let d = cross(pi, labels, a, b);
                if best.is_none_or(|(bd, _, _)| d < bd - TIE_EPS) {
                    best = Some((d, a, b));
                }
            }
        }
        match best {
            Some((d, a, b)) if d <= TIE_EPS => {
                labels.iter_mut().filter(|l| **l == b).for_each(|l| *l = a);
                any = true;
            }
            _ => return any,
        }
    }
}

/// Single-level moves: each pass applies the best move over all levels and
/// targets, accepting a strict decrease, or a tie that empties a cluster.
fn move_phase(pi: &SimilarityMatrix, labels: &mut Vec<usize>) -> bool {
    let n = labels.len();
    let mut any = false;
    loop {
        *labels = Partition::from_labels(labels).labels;
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut best: Option<(f64, bool, usize, usize)> = None;
        for i in 0..n {
            let link = |l: usize| -> f64 {
                (0..n)
                    .filter(|&j| j != i && labels[j] == l)
                    .map(|j| 0.5 - pi.get(i, j))
                    .sum()
            };
            let cur = labels[i];
            let singleton = labels.iter().filter(|&&l| l == cur).count() == 1;
            let here = link(cur);
            // l = k opens a new cluster
            for l in 0..=k {
                if l == cur || (l == k && singleton) {
                    continue;
                }
                let delta = if l == k { 0.0 } else { link(l) } - here;
                let shrinks = singleton && l < k;
                let accept = delta < -TIE_EPS || (delta.abs() <= TIE_EPS && shrinks);
                let beats = best.is_none_or(|(bd, bs, _, _)| {
                    delta < bd - TIE_EPS || ((delta - bd).abs() <= TIE_EPS && shrinks && !bs)
                });
                if accept && beats {
                    best = Some((delta, shrinks, i, l));
                }
            }
        }
        match best {
            Some((_, _, i, l)) => {
                labels[i] = l;
                any = true;
            }
            None => return any,
        }
    }
}
