//! Epsilon-lexicase parent selection over per-row case errors.

use rand::Rng;

/// Median of a slice (mean of the middle pair for even lengths).
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-case epsilon: the median absolute deviation of that case's errors
/// across the whole pool. `errors[i][c]` is individual `i`'s error on case `c`.
pub fn case_epsilons(errors: &[Vec<f64>]) -> Vec<f64> {
    let cases = errors.first().map_or(0, Vec::len);
    let mut column = vec![0.0; errors.len()];
    (0..cases)
        .map(|c| {
            for (slot, e) in column.iter_mut().zip(errors) {
                *slot = e[c];
            }
            let m = median(&mut column);
            for v in column.iter_mut() {
                *v = (*v - m).abs();
            }
            let mad = median(&mut column);
            if mad.is_finite() {
                mad
            } else {
                0.0
            }
        })
        .collect()
}

/// Selects `count` parent indices. For each draw, cases are visited in a
/// fresh random order; at each case the candidates within epsilon of the
/// best remaining candidate survive. Leftover ties are broken uniformly.
pub fn epsilon_lexicase_select<R: Rng + ?Sized>(
    errors: &[Vec<f64>],
    count: usize,
    rng: &mut R,
) -> Vec<usize> {
    assert!(!errors.is_empty(), "selection pool is empty");
    let eps = case_epsilons(errors);
    let n_cases = eps.len();
    let mut cases: Vec<usize> = (0..n_cases).collect();
    let mut candidates: Vec<usize> = Vec::with_capacity(errors.len());
    (0..count)
        .map(|_| {
            candidates.clear();
            candidates.extend(0..errors.len());
            // lazy Fisher-Yates: only as many cases as needed are drawn
            let mut drawn = 0;
            while candidates.len() > 1 && drawn < n_cases {
                let pick = rng.random_range(drawn..n_cases);
                cases.swap(drawn, pick);
                let case = cases[drawn];
                drawn += 1;
                let best = candidates
                    .iter()
                    .map(|&i| errors[i][case])
                    .fold(f64::INFINITY, f64::min);
                let limit = best + eps[case];
                candidates.retain(|&i| errors[i][case] <= limit);
            }
            candidates[rng.random_range(0..candidates.len())]
        })
        .collect()
}
