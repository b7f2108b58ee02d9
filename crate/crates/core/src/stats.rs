//! Small numerical helpers shared by the diagnostics and inference modules.

/// Streaming mean/variance accumulator (Welford), mergeable so replicated
/// summaries can be reduced deterministically in replication order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n1 = self.n as f64;
        let n2 = other.n as f64;
        let d = other.mean - self.mean;
        let n = n1 + n2;
        self.mean += d * n2 / n;
        self.m2 += other.m2 + d * d * n1 * n2 / n;
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then_some(self.mean)
    }

    /// Sample standard deviation with the `n - 1` divisor; zero when fewer
    /// than two observations.
    pub fn sample_sd(&self) -> Option<f64> {
        match self.n {
            0 => None,
            1 => Some(0.0),
            n => Some((self.m2 / (n as f64 - 1.0)).sqrt()),
        }
    }
}

/// Two-pass sample mean and standard deviation (`n - 1` divisor).
pub fn mean_sample_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Effective sample size by Geyer's initial positive sequence estimator:
/// autocorrelations are summed in consecutive pairs until a pair sum turns
/// non-positive.
pub fn effective_sample_size(chain: &[f64]) -> f64 {
    let n = chain.len();
    if n < 4 {
        return n as f64;
    }
    let nf = n as f64;
    let mean = chain.iter().sum::<f64>() / nf;
    let autocov = |lag: usize| -> f64 {
        chain[..n - lag]
            .iter()
            .zip(&chain[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / nf
    };
    let c0 = autocov(0);
    if c0 <= 0.0 {
        return nf;
    }
    let mut pair_sum = 0.0;
    let mut lag = 0;
    while lag + 1 < n {
        let gamma = (autocov(lag) + autocov(lag + 1)) / c0;
        if gamma <= 0.0 {
            break;
        }
        pair_sum += gamma;
        lag += 2;
    }
    let tau = (2.0 * pair_sum - 1.0).max(1.0);
    (nf / tau).min(nf)
}
