use alloc::vec::Vec;

pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// Neumaier-compensated sum, accumulating terms in descending magnitude.
pub(crate) fn compensated_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Shannon entropy in nats; zero-probability terms contribute nothing.
pub(crate) fn shannon_entropy<I: IntoIterator<Item = f64>>(probs: I) -> f64 {
    let terms = probs
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * ln(p))
        .collect();
    compensated_sum(terms).max(0.0)
}
