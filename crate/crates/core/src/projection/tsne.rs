use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    /// The KL divergence is recorded every this many iterations and after
    /// the last one.
    pub kl_every: usize,
    pub max_points: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 5000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            kl_every: 50,
            max_points: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    /// `n × 2`.
    pub embedding: Matrix,
    /// `(iteration, KL(P‖Q))` with the unexaggerated `P`; iterations are
    /// 1-based.
    pub kl_trace: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointProbabilities {
    /// Symmetric `n × n`, zero diagonal, sums to 1.
    pub p: Matrix,
    /// Per-point precision `β_i = 1/(2σ_i²)`.
    pub betas: Vec<f64>,
    /// Perplexity `exp(H(P_i))` of each conditional row actually reached.
    pub row_perplexities: Vec<f64>,
}

fn squared_distances(data: &Matrix) -> Matrix {
    let n = data.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let s: f64 = data.row(i).iter().zip(data.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d.set(i, j, s);
            d.set(j, i, s);
        }
    }
    d
}

/// Conditional row for precision `beta`; returns the row and its entropy in
/// nats.
fn conditional_row(dist: &[f64], i: usize, beta: f64, row: &mut [f64]) -> f64 {
    let min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (r, &dj)) in row.iter_mut().zip(dist).enumerate() {
        *r = if j == i { 0.0 } else { (-beta * (dj - min)).exp() };
        sum += *r;
    }
    let mut h = 0.0;
    for (j, r) in row.iter_mut().enumerate() {
        *r /= sum;
        if j != i && *r > 0.0 {
            h -= *r * r.ln();
        }
    }
    h
}

/// Joint affinities `P = (P_{j|i} + P_{i|j}) / 2n` with each `β_i` found by
/// bisection so that the conditional row's perplexity matches the target.
/// Rows whose entropy cannot reach the target (e.g. all neighbours
/// equidistant) keep the closest attainable value.
pub fn joint_probabilities(data: &Matrix, perplexity: f64) -> Result<JointProbabilities> {
    let n = data.rows();
    if n < 2 {
        return Err(Error::invalid("t-SNE needs at least two points"));
    }
    if !(perplexity >= 1.0 && perplexity <= (n - 1) as f64) {
        return Err(Error::invalid(format!(
            "perplexity {perplexity} infeasible for {n} points"
        )));
    }
    let dist = squared_distances(data);
    let target = perplexity.ln();
    let mut cond = Matrix::zeros(n, n);
    let mut betas = vec![1.0; n];
    let mut perps = vec![0.0; n];
    let mut row = vec![0.0; n];
    for i in 0..n {
        let d = dist.row(i);
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        let mut beta = 1.0;
        let mut h = conditional_row(d, i, beta, &mut row);
        for _ in 0..200 {
            if (h - target).abs() < 1e-10 {
                break;
            }
            // entropy decreases as beta grows
            if h > target {
                lo = beta;
                beta = if hi.is_infinite() { beta * 2.0 } else { (beta + hi) / 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
            h = conditional_row(d, i, beta, &mut row);
        }
        betas[i] = beta;
        perps[i] = h.exp();
        cond.row_mut(i).copy_from_slice(&row);
    }
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            p.set(i, j, (cond.get(i, j) + cond.get(j, i)) / (2.0 * n as f64));
        }
    }
    Ok(JointProbabilities {
        p,
        betas,
        row_perplexities: perps,
    })
}

/// Student-t kernel `(1 + ‖y_i − y_j‖²)⁻¹` (zero diagonal) and its sum.
fn kernel(y: &Matrix) -> (Matrix, f64) {
    let n = y.rows();
    let mut w = Matrix::zeros(n, n);
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = y.row(i).iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = 1.0 / (1.0 + d);
            w.set(i, j, v);
            w.set(j, i, v);
            sum += 2.0 * v;
        }
    }
    (w, sum)
}

/// `KL(P‖Q) = Σ p_ij ln(p_ij / q_ij)` over pairs with `p_ij > 0`.
pub fn kl_divergence(p: &Matrix, y: &Matrix) -> f64 {
    let (w, sum) = kernel(y);
    let mut kl = 0.0;
    for i in 0..p.rows() {
        for j in 0..p.cols() {
            let pij = p.get(i, j);
            if i != j && pij > 0.0 {
                let q = (w.get(i, j) / sum).max(f64::MIN_POSITIVE);
                kl += pij * (pij / q).ln();
            }
        }
    }
    kl
}

/// `∂KL/∂y_i = 4 Σ_j (p_ij − q_ij)(y_i − y_j)(1 + ‖y_i − y_j‖²)⁻¹`.
pub fn kl_gradient(p: &Matrix, y: &Matrix) -> Matrix {
    let (n, dims) = (y.rows(), y.cols());
    let (w, sum) = kernel(y);
    let mut grad = Matrix::zeros(n, dims);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let wij = w.get(i, j);
            let coef = 4.0 * (p.get(i, j) - wij / sum) * wij;
            for c in 0..dims {
                let g = grad.get(i, c) + coef * (y.get(i, c) - y.get(j, c));
                grad.set(i, c, g);
            }
        }
    }
    grad
}

/// Exact t-SNE to two dimensions.
pub fn tsne(data: &Matrix, config: &TsneConfig) -> Result<TsneResult> {
    let n = data.rows();
    if n > config.max_points {
        return Err(Error::invalid(format!(
            "{n} points exceed the exact t-SNE limit of {}",
            config.max_points
        )));
    }
    if n < 4 || config.perplexity >= (n - 1) as f64 / 3.0 {
        return Err(Error::invalid(format!(
            "perplexity {} infeasible for {n} points (needs < (n − 1)/3)",
            config.perplexity
        )));
    }
    let joint = joint_probabilities(data, config.perplexity)?;
    let p = joint.p;
    let mut exaggerated = p.clone();
    exaggerated.as_mut_slice().iter_mut().for_each(|v| *v *= config.early_exaggeration);

    let mut rng = rng::seeded(config.seed);
    let normal = Normal::new(0.0, 1e-2).expect("valid normal");
    let mut y = Matrix::zeros(n, 2);
    y.as_mut_slice().iter_mut().for_each(|v| *v = normal.sample(&mut rng));
    let mut update = Matrix::zeros(n, 2);
    let mut gains = vec![1.0f64; 2 * n];
    let mut kl_trace = Vec::new();
    for it in 1..=config.iterations {
        let target = if it <= config.exaggeration_iterations { &exaggerated } else { &p };
        let grad = kl_gradient(target, &y);
        let momentum = if it <= config.momentum_switch {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        for ((g, u), gain) in grad.as_slice().iter().zip(update.as_mut_slice()).zip(gains.iter_mut()) {
            *gain = if (*g > 0.0) != (*u > 0.0) { *gain + 0.2 } else { *gain * 0.8 };
            *gain = gain.max(0.01);
            *u = momentum * *u - config.learning_rate * *gain * g;
        }
        for (v, u) in y.as_mut_slice().iter_mut().zip(update.as_slice()) {
            *v += u;
        }
        for c in 0..2 {
            let mean = (0..n).map(|i| y.get(i, c)).sum::<f64>() / n as f64;
            for i in 0..n {
                y.set(i, c, y.get(i, c) - mean);
            }
        }
        if !y.all_finite() {
            return Err(Error::NonFinite(format!("t-SNE diverged at iteration {it}")));
        }
        if (config.kl_every > 0 && it % config.kl_every == 0) || it == config.iterations {
            kl_trace.push((it, kl_divergence(&p, &y)));
        }
    }
    Ok(TsneResult {
        embedding: y,
        kl_trace,
    })
}

/// Mean silhouette coefficient of a labelled point set (Euclidean).
pub fn silhouette_score(points: &Matrix, labels: &[usize]) -> Result<f64> {
    let n = points.rows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: labels.len(),
        });
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::Undefined("silhouette needs at least two clusters".into()));
    }
    let dist = |i: usize, j: usize| -> f64 {
        points.row(i).iter().zip(points.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += dist(i, j);
            }
        }
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn two_clusters(n_each: usize, dim: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = rng::seeded(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            for _ in 0..n_each {
                rows.push((0..dim).map(|_| normal.sample(&mut rng) + if c == 1 { 10.0 } else { 0.0 }).collect());
                labels.push(c);
            }
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn perplexity_is_matched_and_p_is_a_distribution() {
        let (x, _) = two_clusters(20, 3, 1);
        let jp = joint_probabilities(&x, 10.0).unwrap();
        for &pp in &jp.row_perplexities {
            assert!((pp - 10.0).abs() < 1e-3, "{pp}");
        }
        let n = x.rows();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                assert_eq!(jp.p.get(i, j), jp.p.get(j, i));
                assert!(jp.p.get(i, j) >= 0.0);
                total += jp.p.get(i, j);
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equidistant_points_give_uniform_p() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let jp = joint_probabilities(&x, 1.5).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 0.0 } else { 1.0 / 6.0 };
                assert!((jp.p.get(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng::seeded(4);
        for n in [5, 8, 10] {
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let p = joint_probabilities(&Matrix::from_rows(&rows).unwrap(), 2.0).unwrap().p;
            let yr: Vec<Vec<f64>> = (0..n).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let y = Matrix::from_rows(&yr).unwrap();
            let g = kl_gradient(&p, &y);
            for i in 0..n {
                for c in 0..2 {
                    let mut yp = y.clone();
                    yp.set(i, c, y.get(i, c) + 1e-5);
                    let mut ym = y.clone();
                    ym.set(i, c, y.get(i, c) - 1e-5);
                    let fd = (kl_divergence(&p, &yp) - kl_divergence(&p, &ym)) / 2e-5;
                    let a = g.get(i, c);
                    assert!((fd - a).abs() / fd.abs().max(a.abs()).max(1e-6) < 1e-3);
                }
            }
        }
    }

    #[test]
    fn separated_clusters_embed_separately() {
        let (x, labels) = two_clusters(100, 5, 2);
        let config = TsneConfig { iterations: 1000, ..TsneConfig::default() };
        let r = tsne(&x, &config).unwrap();
        assert!(silhouette_score(&r.embedding, &labels).unwrap() > 0.5);
        let first = r.kl_trace.iter().find(|(it, _)| *it == 100).unwrap().1;
        let last = r.kl_trace.last().unwrap().1;
        assert!(last < first);
        assert_eq!(tsne(&x, &config).unwrap(), r);
    }

    #[test]
    fn infeasible_perplexity_is_rejected() {
        let (x, _) = two_clusters(5, 2, 0);
        assert!(tsne(&x, &TsneConfig { perplexity: 3.0, ..TsneConfig::default() }).is_err());
        assert!(joint_probabilities(&x, 20.0).is_err());
    }

    #[test]
    fn silhouette_hand_example() {
        let pts = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![5.0], vec![6.0]]).unwrap();
        // point 0: a = 1, b = 5.5, s = 4.5/5.5; symmetric for the others
        let s = silhouette_score(&pts, &[0, 0, 1, 1]).unwrap();
        let expected = (4.5 / 5.5 + 3.5 / 4.5 + 3.5 / 4.5 + 4.5 / 5.5) / 4.0;
        assert!((s - expected).abs() < 1e-12);
    }
}
