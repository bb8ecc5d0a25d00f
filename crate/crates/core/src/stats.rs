//! Sample statistics for Monte Carlo batches.

/// Mean, variance and standard error of a sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub standard_error: f64,
}

/// Summary of `xs`; needs at least two samples.
pub fn summarize(xs: &[f64]) -> Option<Summary> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let variance = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    Some(Summary { n, mean, variance, standard_error: (variance / n as f64).sqrt() })
}

/// Pearson correlation; `None` for fewer than two samples or a constant
/// input.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (a, b) = (summarize(xs)?, summarize(ys)?);
    if xs.len() != ys.len() || a.variance == 0.0 || b.variance == 0.0 {
        return None;
    }
    let cov = xs.iter().zip(ys).map(|(x, y)| (x - a.mean) * (y - b.mean)).sum::<f64>() / (xs.len() - 1) as f64;
    Some(cov / (a.variance * b.variance).sqrt())
}

/// Sample covariance matrix of the rows `samples[i]`.
pub fn covariance(samples: &[Vec<f64>]) -> Option<nalgebra::DMatrix<f64>> {
    let n = samples.len();
    let d = samples.first()?.len();
    if n < 2 {
        return None;
    }
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x / n as f64;
        }
    }
    let mut c = nalgebra::DMatrix::zeros(d, d);
    for s in samples {
        for i in 0..d {
            for j in 0..d {
                c[(i, j)] += (s[i] - mean[i]) * (s[j] - mean[j]);
            }
        }
    }
    Some(c / (n - 1) as f64)
}
