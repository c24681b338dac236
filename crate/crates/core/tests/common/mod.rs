//! Reference implementations used only by tests. They avoid the library's
//! code paths on purpose (nalgebra eigensolver, quadratic brute force).

#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps the oracle independent of rand_distr.
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| gaussian(rng))
}

/// 1/M covariance computed with plain loops.
pub fn covariance(x: &Array2<f64>) -> DMatrix<f64> {
    let (m, d) = x.dim();
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).sum() / m as f64).collect();
    DMatrix::from_fn(d, d, |a, b| {
        (0..m).map(|i| (x[[i, a]] - mean[a]) * (x[[i, b]] - mean[b])).sum::<f64>() / m as f64
    })
}

/// Orthonormal basis of the top-`l` principal subspace.
pub fn top_principal_subspace(x: &Array2<f64>, l: usize) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(covariance(x));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    DMatrix::from_fn(x.ncols(), l, |i, j| eig.eigenvectors[(i, order[j])])
}

pub fn eigenvalues_desc(x: &Array2<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(covariance(x)).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Largest principal angle (radians) between the column spaces of `a` and `b`.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let resid = &qa - &qb * (qb.transpose() * &qa);
    let s = resid.singular_values().max().min(1.0);
    s.asin()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Textbook LOF: k-distance, tie-inclusive k-neighborhoods, reachability
/// distance, local reachability density, ratio. `v` is a query outside the support.
pub fn brute_force_lof(support: &Array2<f64>, v: &[f64], k: usize) -> f64 {
    let n = support.nrows();
    let row = |i: usize| support.row(i).to_vec();
    let k_dist_and_nbhd = |p: &[f64], skip: Option<usize>| {
        let mut ds: Vec<(f64, usize)> =
            (0..n).filter(|&i| Some(i) != skip).map(|i| (dist(p, &row(i)), i)).collect();
        ds.sort_by(|a, b| a.0.total_cmp(&b.0));
        let kd = ds[k - 1].0;
        let nb: Vec<usize> = ds.iter().filter(|(d, _)| *d <= kd).map(|(_, i)| *i).collect();
        (kd, nb)
    };
    let kdist: Vec<f64> = (0..n).map(|i| k_dist_and_nbhd(&row(i), Some(i)).0).collect();
    let lrd = |p: &[f64], skip: Option<usize>| {
        let (_, nb) = k_dist_and_nbhd(p, skip);
        let s: f64 = nb.iter().map(|&o| kdist[o].max(dist(p, &row(o)))).sum();
        nb.len() as f64 / s
    };
    let (_, nb) = k_dist_and_nbhd(v, None);
    let lrd_v = lrd(v, None);
    nb.iter().map(|&o| lrd(&row(o), Some(o))).sum::<f64>() / (nb.len() as f64 * lrd_v)
}

/// Composite Simpson's rule.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// (tp, fp, fn) when predicting positive for `score < eta`.
pub fn counts_at(scores: &[f64], positive: &[bool], eta: f64) -> (u64, u64, u64) {
    let (mut tp, mut fp, mut fnn) = (0, 0, 0);
    for (&s, &p) in scores.iter().zip(positive) {
        match (s < eta, p) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            _ => {}
        }
    }
    (tp, fp, fnn)
}

/// F1 = 2tp / (2tp + fp + fn) as an exact fraction (0/1 when tp = 0).
pub fn f1_fraction((tp, fp, fnn): (u64, u64, u64)) -> (u64, u64) {
    if tp == 0 {
        (0, 1)
    } else {
        (2 * tp, 2 * tp + fp + fnn)
    }
}

/// Best F1 over every partition reachable by a strict threshold.
pub fn exhaustive_best_f1(scores: &[f64], positive: &[bool]) -> (u64, u64) {
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.push(f64::INFINITY);
    candidates.push(f64::NEG_INFINITY);
    let mut best = (0u64, 1u64);
    for eta in candidates {
        let f = f1_fraction(counts_at(scores, positive, eta));
        if f.0 * best.1 > best.0 * f.1 {
            best = f;
        }
    }
    best
}

use rede::dataset::{EmbeddingDataset, TurnLabel};

/// Labeled split from two point clouds (non-knowledge-seeking first).
pub fn split(name: &str, nk: &Array2<f64>, ks: &Array2<f64>) -> EmbeddingDataset {
    let d = nk.ncols();
    let rows = nk.nrows() + ks.nrows();
    let x = Array2::from_shape_fn((rows, d), |(i, j)| if i < nk.nrows() { nk[[i, j]] } else { ks[[i - nk.nrows(), j]] });
    let ids = (0..rows).map(|i| format!("{name}-{i}")).collect();
    let labels = (0..rows)
        .map(|i| if i < nk.nrows() { TurnLabel::NonKnowledgeSeeking } else { TurnLabel::KnowledgeSeeking })
        .collect();
    EmbeddingDataset::from_f64(ids, labels, &x).unwrap()
}

/// Gaussian cloud with per-axis centre and scale.
pub fn cloud(rng: &mut ChaCha8Rng, n: usize, centre: &[f64], scale: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((n, centre.len()), |(_, j)| centre[j] + scale[j] * gaussian(rng))
}

pub struct Planted {
    pub train: EmbeddingDataset,
    pub dev: EmbeddingDataset,
    pub test: EmbeddingDataset,
}

impl Planted {
    pub fn splits(&self) -> rede::eval::Splits<'_> {
        rede::eval::Splits {
            train: &self.train,
            dev: &self.dev,
            test: &self.test,
        }
    }
}

/// Knowledge-seeking turns spread widely over the first two axes; ordinary
/// turns form a tight blob offset along axis 0. The remaining axes carry
/// noise shared by both classes, large in the shot pool and small elsewhere,
/// so the discriminative signal lives in the shots' top-2 eigendirections.
pub fn planted_top_two(seed: u64, d: usize) -> Planted {
    let mut r = rng(seed);
    let mut nk_c = vec![0.0; d];
    nk_c[0] = 10.0;
    let mut nk_s = vec![0.05; d];
    nk_s[0] = 0.5;
    nk_s[1] = 0.5;
    let ks_c = vec![0.0; d];
    let mut ks_s = vec![0.05; d];
    ks_s[0] = 5.0;
    ks_s[1] = 5.0;
    let mut pool_s = ks_s.clone();
    pool_s[2..].iter_mut().for_each(|s| *s = 0.5);
    let mut make = |name: &str, nk: usize, ks: usize, ks_scale: &[f64]| {
        let a = cloud(&mut r, nk, &nk_c, &nk_s);
        let b = cloud(&mut r, ks, &ks_c, ks_scale);
        split(name, &a, &b)
    };
    Planted {
        train: make("train", 500, 50, &pool_s),
        dev: make("dev", 300, 300, &ks_s),
        test: make("test", 500, 500, &ks_s),
    }
}

/// Well-separated classes in every view: ordinary turns near `+e0`,
/// knowledge-seeking near `+e1`.
pub fn easy_clusters(seed: u64, d: usize) -> Planted {
    let mut r = rng(seed);
    let mut a = vec![0.0; d];
    a[0] = 5.0;
    let mut b = vec![0.0; d];
    b[1] = 5.0;
    let s = vec![0.5; d];
    let mut make = |name: &str, nk: usize, ks: usize| {
        let x = cloud(&mut r, nk, &a, &s);
        let y = cloud(&mut r, ks, &b, &s);
        split(name, &x, &y)
    };
    Planted {
        train: make("train", 400, 40),
        dev: make("dev", 200, 200),
        test: make("test", 400, 400),
    }
}

/// In-domain turns from two separated modes; knowledge-seeking turns sit
/// between them.
pub fn bimodal_in_domain(seed: u64, d: usize) -> Planted {
    let mut r = rng(seed);
    let mut m1 = vec![0.0; d];
    m1[0] = 6.0;
    m1[1] = 1.0;
    let mut m2 = vec![0.0; d];
    m2[0] = -6.0;
    m2[1] = 1.0;
    let mut mk = vec![0.0; d];
    mk[1] = 1.0;
    let s = vec![0.6; d];
    let mut make = |name: &str, nk: usize, ks: usize| {
        let h = nk / 2;
        let x1 = cloud(&mut r, h, &m1, &s);
        let x2 = cloud(&mut r, nk - h, &m2, &s);
        let x = ndarray::concatenate(ndarray::Axis(0), &[x1.view(), x2.view()]).unwrap();
        let y = cloud(&mut r, ks, &mk, &s);
        split(name, &x, &y)
    };
    Planted {
        train: make("train", 600, 40),
        dev: make("dev", 300, 300),
        test: make("test", 400, 400),
    }
}
