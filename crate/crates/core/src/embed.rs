//! Exact t-SNE and cluster-quality scores for 2-D embeddings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Network, Scalar, Tensor};
use crate::raster::RgbImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub n_iter: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Iteration at which momentum switches to `final_momentum`.
    pub momentum_switch: usize,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 15.0,
            n_iter: 1000,
            learning_rate: 100.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            exaggeration: 4.0,
            exaggeration_iters: 100,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n_points: usize) -> Result<()> {
        if !(self.perplexity > 1.0) || !(self.perplexity < n_points as f64 / 3.0) {
            return Err(Error::param(format!(
                "perplexity {} must lie in (1, N/3) for N = {n_points}",
                self.perplexity
            )));
        }
        if self.n_iter < 100 {
            return Err(Error::param("n_iter must be at least 100"));
        }
        if !(self.learning_rate > 0.0) || !(self.exaggeration >= 1.0) {
            return Err(Error::param("learning rate must be positive and exaggeration at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    /// KL(P‖Q) after each iteration.
    pub kl_history: Vec<f64>,
}

/// Pre-softmax network outputs, one row per input, in input order.
pub fn extract_output_features<T: Scalar>(net: &Network<T>, inputs: &[Tensor<T>]) -> Result<Vec<Vec<f64>>> {
    inputs.par_iter().map(|x| Ok(net.logits(x)?.to_f64_vec())).collect()
}

fn squared_distances(x: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = x.len();
    let d = x.first().map_or(0, Vec::len);
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::param("all points need the same dimension"));
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    Ok(out)
}

/// Gaussian conditionals `P(j|i)` for one row at precision `beta`, with their entropy (nats).
fn row_conditionals(dist: &[f64], i: usize, beta: f64) -> (Vec<f64>, f64) {
    let min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .fold(f64::INFINITY, |m, (_, &d)| m.min(d));
    let mut p: Vec<f64> = dist
        .iter()
        .enumerate()
        .map(|(j, &d)| if j == i { 0.0 } else { (-(d - min) * beta).exp() })
        .collect();
    let sum: f64 = p.iter().sum();
    let mut weighted = 0.0;
    for (pj, d) in p.iter_mut().zip(dist) {
        *pj /= sum;
        weighted += *pj * (d - min);
    }
    (p, sum.ln() + beta * weighted)
}

/// Row-stochastic conditionals `P(j|i)` whose perplexity matches `perplexity` within 1e-4.
pub fn conditional_affinities(x: &[Vec<f64>], perplexity: f64) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::param("need at least two points"));
    }
    let dist = squared_distances(x)?;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = &dist[i * n..(i + 1) * n];
            let (lo, hi) = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), (_, &d)| (lo.min(d), hi.max(d)));
            if hi - lo <= 1e-12 * hi {
                // entropy does not depend on beta; every neighbour is equally likely
                return Ok(row_conditionals(row, i, 1.0).0);
            }
            let (mut beta, mut beta_lo, mut beta_hi) = (1.0 / (hi - lo).max(f64::MIN_POSITIVE), 0.0, f64::INFINITY);
            for _ in 0..100 {
                let (p, h) = row_conditionals(row, i, beta);
                let perp = h.exp();
                if (perp - perplexity).abs() <= 1e-4 {
                    return Ok(p);
                }
                if perp > perplexity {
                    beta_lo = beta;
                    beta = if beta_hi.is_finite() { (beta + beta_hi) / 2.0 } else { beta * 2.0 };
                } else {
                    beta_hi = beta;
                    beta = (beta + beta_lo) / 2.0;
                }
            }
            Err(Error::Numerical {
                iteration: i,
                reason: format!("perplexity search for row {i} did not converge"),
            })
        })
        .collect::<Result<_>>()?;
    Ok(rows.concat())
}

/// Symmetric joint affinities `(P(j|i) + P(i|j)) / 2N`, row-major `N × N`.
pub fn pairwise_affinities(x: &[Vec<f64>], perplexity: f64) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 4 {
        return Err(Error::param("t-SNE needs at least four points"));
    }
    let cond = conditional_affinities(x, perplexity)?;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64);
            }
        }
    }
    Ok(p)
}

/// Student-t kernel values `1 / (1 + ‖yᵢ − yⱼ‖²)` (zero diagonal) and their sum.
fn kernel(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
        }
    }
    let sum = num.iter().sum();
    (num, sum)
}

/// Low-dimensional joint affinities Q.
pub fn q_matrix(y: &[[f64; 2]]) -> Vec<f64> {
    let (num, sum) = kernel(y);
    num.into_iter().map(|v| v / sum).collect()
}

pub fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let q = q_matrix(y);
    p.iter()
        .zip(&q)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &q)| p * (p / q.max(f64::MIN_POSITIVE)).ln())
        .sum()
}

/// `∂KL/∂yᵢ = 4 Σⱼ (pᵢⱼ − qᵢⱼ)(yᵢ − yⱼ)(1 + ‖yᵢ − yⱼ‖²)⁻¹`.
pub fn tsne_gradient(p: &[f64], y: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    let n = y.len();
    if p.len() != n * n {
        return Err(Error::param("P must be N × N"));
    }
    let (num, sum) = kernel(y);
    Ok((0..n)
        .map(|i| {
            let mut g = [0.0f64; 2];
            for j in 0..n {
                let k = num[i * n + j];
                let w = (p[i * n + j] - k / sum) * k;
                g[0] += 4.0 * w * (y[i][0] - y[j][0]);
                g[1] += 4.0 * w * (y[i][1] - y[j][1]);
            }
            g
        })
        .collect())
}

/// Gradient descent on KL(P‖Q) with momentum, gains and early exaggeration.
pub fn tsne(x: &[Vec<f64>], labels: &[usize], config: &TsneConfig) -> Result<Embedding> {
    let n = x.len();
    if labels.len() != n {
        return Err(Error::param("one label per point is required"));
    }
    config.validate(n)?;
    let p = pairwise_affinities(x, config.perplexity)?;
    let exaggerated: Vec<f64> = p.iter().map(|v| v * config.exaggeration).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid deviation");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_history = Vec::with_capacity(config.n_iter);
    for iter in 0..config.n_iter {
        let target = if iter < config.exaggeration_iters { &exaggerated } else { &p };
        let momentum = if iter < config.momentum_switch {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        let grad = tsne_gradient(target, &y)?;
        for i in 0..n {
            for d in 0..2 {
                let g = grad[i][d];
                gains[i][d] = if (g > 0.0) != (update[i][d] > 0.0) {
                    gains[i][d] + 0.2
                } else {
                    (gains[i][d] * 0.8).max(0.01)
                };
                update[i][d] = momentum * update[i][d] - config.learning_rate * gains[i][d] * g;
                y[i][d] += update[i][d];
            }
        }
        let mean = y.iter().fold([0.0f64; 2], |m, v| [m[0] + v[0], m[1] + v[1]]);
        for v in &mut y {
            v[0] -= mean[0] / n as f64;
            v[1] -= mean[1] / n as f64;
        }
        let kl = kl_divergence(&p, &y);
        if !kl.is_finite() || y.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(Error::Numerical {
                iteration: iter,
                reason: "embedding diverged".into(),
            });
        }
        kl_history.push(kl);
    }
    Ok(Embedding {
        points: y,
        labels: labels.to_vec(),
        kl_history,
    })
}

fn distance(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Mean silhouette coefficient; points alone in their cluster score 0.
pub fn silhouette_score(points: &[[f64; 2]], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() || points.is_empty() {
        return Err(Error::param("points and labels must be aligned and non-empty"));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::param("silhouette needs at least two clusters"));
    }
    let total: f64 = (0..points.len())
        .map(|i| {
            let mut sums = vec![(0.0, 0usize); classes.len()];
            for j in 0..points.len() {
                if i != j {
                    let k = classes.binary_search(&labels[j]).expect("label present");
                    sums[k].0 += distance(&points[i], &points[j]);
                    sums[k].1 += 1;
                }
            }
            let own = classes.binary_search(&labels[i]).expect("label present");
            if sums[own].1 == 0 {
                return 0.0;
            }
            let a = sums[own].0 / sums[own].1 as f64;
            let b = sums
                .iter()
                .enumerate()
                .filter(|&(k, s)| k != own && s.1 > 0)
                .map(|(_, s)| s.0 / s.1 as f64)
                .fold(f64::INFINITY, f64::min);
            if a.max(b) == 0.0 {
                0.0
            } else {
                (b - a) / a.max(b)
            }
        })
        .sum();
    Ok(total / points.len() as f64)
}

/// Fraction of points whose nearest class centroid is their own class.
pub fn nearest_centroid_purity(points: &[[f64; 2]], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() || points.is_empty() {
        return Err(Error::param("points and labels must be aligned and non-empty"));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let centroids: Vec<[f64; 2]> = classes
        .iter()
        .map(|&c| {
            let members: Vec<&[f64; 2]> = points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            let s = members.iter().fold([0.0f64; 2], |m, p| [m[0] + p[0], m[1] + p[1]]);
            [s[0] / members.len() as f64, s[1] / members.len() as f64]
        })
        .collect();
    let hits = points
        .iter()
        .zip(labels)
        .filter(|(p, &l)| {
            let best = (0..classes.len())
                .min_by(|&a, &b| distance(p, &centroids[a]).total_cmp(&distance(p, &centroids[b])))
                .expect("at least one class");
            classes[best] == l
        })
        .count();
    Ok(hits as f64 / points.len() as f64)
}

const PALETTE: [[u8; 3]; 6] = [
    [230, 70, 60],
    [60, 150, 230],
    [240, 200, 40],
    [120, 200, 90],
    [200, 110, 220],
    [240, 240, 240],
];

/// Square scatter plot, one colour per label, on a black background.
pub fn render_scatter(points: &[[f64; 2]], labels: &[usize], size: usize) -> RgbImage {
    let mut img = RgbImage::filled(size, size, [0, 0, 0]);
    if points.is_empty() || size < 8 {
        return img;
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
    let margin = 4.0;
    let usable = size as f64 - 2.0 * margin - 1.0;
    for (p, &label) in points.iter().zip(labels) {
        let cx = (margin + (p[0] - lo[0]) / span * usable).round() as isize;
        let cy = (margin + (hi[1] - p[1]) / span * usable).round() as isize;
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && y >= 0 && (x as usize) < size && (y as usize) < size {
                    img.pixels[y as usize * size + x as usize] = PALETTE[label % PALETTE.len()];
                }
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    pub(crate) fn clusters(per: usize, sigma: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centres = [[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 10.0, 0.0]];
        let mut x = Vec::new();
        let mut labels = Vec::new();
        for (k, c) in centres.iter().enumerate() {
            for _ in 0..per {
                x.push(c.iter().map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal)).collect());
                labels.push(k);
            }
        }
        (x, labels)
    }

    #[test]
    fn output_features_are_the_logits() {
        use crate::nn::NetworkSpec;
        let net = Network::<f64>::new(NetworkSpec::reduced(), 2).unwrap();
        let a = Tensor::new(&[1, 16, 16], (0..256).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        let b = Tensor::new(&[1, 16, 16], vec![0.5; 256]).unwrap();
        let rows = extract_output_features(&net, &[a.clone(), b.clone(), a.clone()]).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0], net.logits(&a).unwrap().to_f64_vec());
        assert_eq!(rows[1], net.logits(&b).unwrap().to_f64_vec());
        assert_eq!(rows[0], rows[2]);
        assert_eq!(rows[0].len(), 3);
    }

    #[test]
    fn equidistant_points_share_conditionals() {
        let h = 3f64.sqrt() / 2.0;
        let x = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, h]];
        for perp in [1.5, 2.0] {
            let c = conditional_affinities(&x, perp).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { 0.0 } else { 0.5 };
                    assert!((c[i * 3 + j] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn perplexity_is_matched() {
        let (x, _) = clusters(10, 1.0, 1);
        let c = conditional_affinities(&x, 5.0).unwrap();
        for row in c.chunks(30) {
            let h: f64 = -row.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
            assert!((h.exp() - 5.0).abs() <= 1e-4);
        }
    }

    #[test]
    fn joint_affinities_are_symmetric_and_normalized() {
        let (x, _) = clusters(8, 1.0, 2);
        let n = x.len();
        let p = pairwise_affinities(&x, 5.0).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..n {
            assert_eq!(p[i * n + i], 0.0);
            for j in 0..n {
                assert!((p[i * n + j] - p[j * n + i]).abs() < 1e-15);
            }
        }
        assert!(pairwise_affinities(&x[..3], 1.5).is_err());
    }

    #[test]
    fn duplicate_pair_has_largest_affinity() {
        let (mut x, _) = clusters(6, 2.0, 3);
        x[4] = x[1].clone();
        let n = x.len();
        let p = pairwise_affinities(&x, 4.0).unwrap();
        for i in [1, 4] {
            let other = if i == 1 { 4 } else { 1 };
            let row = &p[i * n..(i + 1) * n];
            assert!(row.iter().enumerate().all(|(j, &v)| j == other || v < row[other]));
        }
    }

    #[test]
    fn gradient_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y: Vec<[f64; 2]> = (0..12).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let q = q_matrix(&y);
        assert!(tsne_gradient(&q, &y).unwrap().iter().all(|g| g[0].abs() < 1e-9 && g[1].abs() < 1e-9));

        let (x, _) = clusters(4, 1.0, 5);
        let p = pairwise_affinities(&x, 3.0).unwrap();
        let grad = tsne_gradient(&p, &y).unwrap();
        let h = 1e-6;
        for i in 0..12 {
            for d in 0..2 {
                let mut plus = y.clone();
                plus[i][d] += h;
                let mut minus = y.clone();
                minus[i][d] -= h;
                let fd = (kl_divergence(&p, &plus) - kl_divergence(&p, &minus)) / (2.0 * h);
                assert!((fd - grad[i][d]).abs() <= 1e-5 * fd.abs().max(grad[i][d].abs()).max(1e-3));
            }
        }
        let shifted: Vec<[f64; 2]> = y.iter().map(|v| [v[0] + 3.0, v[1] - 1.5]).collect();
        for (a, b) in grad.iter().zip(tsne_gradient(&p, &shifted).unwrap()) {
            assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn separated_clusters_embed_cleanly() {
        let (x, labels) = clusters(20, 1.0, 6);
        let config = TsneConfig {
            perplexity: 10.0,
            ..TsneConfig::default()
        };
        let emb = tsne(&x, &labels, &config).unwrap();
        assert_eq!(emb.kl_history.len(), 1000);
        assert!(emb.kl_history.iter().all(|&kl| kl >= 0.0));
        assert!(emb.kl_history[999] <= emb.kl_history[99]);
        assert!(nearest_centroid_purity(&emb.points, &labels).unwrap() >= 0.95);
        assert!(silhouette_score(&emb.points, &labels).unwrap() > 0.5);
        assert_eq!(emb, tsne(&x, &labels, &config).unwrap());

        let p = pairwise_affinities(&x, 10.0).unwrap();
        let (s, c) = (0.6f64.sin(), 0.6f64.cos());
        let rotated: Vec<[f64; 2]> = emb.points.iter().map(|v| [c * v[0] - s * v[1], s * v[0] + c * v[1]]).collect();
        assert!((kl_divergence(&p, &rotated) - kl_divergence(&p, &emb.points)).abs() <= 1e-9);
    }

    #[test]
    fn config_is_validated() {
        let (x, labels) = clusters(4, 1.0, 7);
        assert!(tsne(&x, &labels, &TsneConfig::default()).is_err());
        let few = TsneConfig {
            perplexity: 3.0,
            n_iter: 50,
            ..TsneConfig::default()
        };
        assert!(tsne(&x, &labels, &few).is_err());
    }

    #[test]
    fn silhouette_extremes() {
        let pts = [[0.0, 0.0], [0.0, 0.1], [10.0, 0.0], [10.0, 0.1]];
        let s = silhouette_score(&pts, &[0, 0, 1, 1]).unwrap();
        assert!(s > 0.98);
        let mixed = silhouette_score(&pts, &[0, 1, 0, 1]).unwrap();
        assert!(mixed < 0.0);
        assert!(silhouette_score(&pts, &[0; 4]).is_err());
        assert_eq!(nearest_centroid_purity(&pts, &[0, 0, 1, 1]).unwrap(), 1.0);
    }
}
