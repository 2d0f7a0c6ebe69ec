//! Reference implementations the library is checked against. They are
//! written for clarity, not speed, and share no code with the crate.
#![allow(dead_code)]

/// Mean log-loss of a logistic model, computed directly from the formula.
/// `params` holds the feature weights followed by the bias.
pub fn reference_loss(params: &[f64], xs: &[Vec<f64>], ys: &[u8]) -> f64 {
    let d = params.len() - 1;
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z: f64 = (0..d).map(|j| params[j] * x[j]).sum::<f64>() + params[d];
        let p = 1.0 / (1.0 + (-z).exp());
        total -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    total / xs.len() as f64
}

/// Central finite-difference gradient of [`reference_loss`].
pub fn numeric_gradient(params: &[f64], xs: &[Vec<f64>], ys: &[u8], eps: f64) -> Vec<f64> {
    (0..params.len())
        .map(|j| {
            let mut hi = params.to_vec();
            let mut lo = params.to_vec();
            hi[j] += eps;
            lo[j] -= eps;
            (reference_loss(&hi, xs, ys) - reference_loss(&lo, xs, ys)) / (2.0 * eps)
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// ||a - b|| / max(||a||, ||b||, 1e-12).
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-12)
}

fn group_wcss(points: &[Vec<f64>], members: &[usize]) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let dim = points[0].len();
    let mut mean = vec![0.0; dim];
    for &i in members {
        for (m, v) in mean.iter_mut().zip(&points[i]) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= members.len() as f64);
    members
        .iter()
        .map(|&i| {
            points[i]
                .iter()
                .zip(&mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum()
}

/// Minimum WCSS over every split of the points into two non-empty groups.
pub fn brute_force_two_partition(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    assert!((2..=20).contains(&n));
    let mut best = f64::INFINITY;
    // Point 0 always sits in group A, which removes mirrored duplicates.
    for mask in 0..(1u32 << (n - 1)) {
        let mut a = vec![0];
        let mut b = Vec::new();
        for i in 1..n {
            if mask & (1 << (i - 1)) != 0 {
                a.push(i);
            } else {
                b.push(i);
            }
        }
        if b.is_empty() {
            continue;
        }
        best = best.min(group_wcss(points, &a) + group_wcss(points, &b));
    }
    best
}

/// Two-sided Kolmogorov-Smirnov statistic of `sample` against `cdf`.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance 0.01.
pub fn ks_critical_001(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// Full-batch gradient descent on the logistic loss, used as an
/// independent check that a dataset is learnable.
pub fn reference_fit(xs: &[Vec<f64>], ys: &[u8], steps: usize, lr: f64) -> Vec<f64> {
    let d = xs[0].len();
    let mut w = vec![0.0; d + 1];
    for _ in 0..steps {
        let mut g = vec![0.0; d + 1];
        for (x, &y) in xs.iter().zip(ys) {
            let z: f64 = (0..d).map(|j| w[j] * x[j]).sum::<f64>() + w[d];
            let r = 1.0 / (1.0 + (-z).exp()) - f64::from(y);
            for j in 0..d {
                g[j] += r * x[j];
            }
            g[d] += r;
        }
        for j in 0..=d {
            w[j] -= lr * g[j] / xs.len() as f64;
        }
    }
    w
}

pub fn reference_accuracy(w: &[f64], xs: &[Vec<f64>], ys: &[u8]) -> f64 {
    let d = w.len() - 1;
    let hits = xs
        .iter()
        .zip(ys)
        .filter(|(x, &y)| {
            let z: f64 = (0..d).map(|j| w[j] * x[j]).sum::<f64>() + w[d];
            u8::from(z >= 0.0) == y
        })
        .count();
    hits as f64 / xs.len() as f64
}
