//! Straightforward reimplementations used as test oracles. Written from the
//! definitions, without sharing code or evaluation order with the library.

use vmrank_core::{default_taxonomy, Polarity};

/// Population z-scores; a column whose values are all equal maps to zeros.
pub fn zscores(col: &[f64]) -> Vec<f64> {
    let n = col.len() as f64;
    let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == min {
        return vec![0.0; col.len()];
    }
    let mut total = 0.0;
    for x in col {
        total += x;
    }
    let mu = total / n;
    let mut ss = 0.0;
    for x in col {
        ss += (x - mu).powi(2);
    }
    let sigma = (ss / n).sqrt();
    col.iter().map(|x| (x - mu) / sigma).collect()
}

/// Weighted group scores for `rows[vm][attr]` over attribute `keys`, with
/// the group aggregate taken as the mean of member z-values.
pub fn scores(keys: &[&str], rows: &[Vec<f64>], weights: [f64; 4]) -> Vec<f64> {
    let tax = default_taxonomy();
    let m = rows.len();
    let mut z_cols = Vec::new();
    for (a, key) in keys.iter().enumerate() {
        let def = tax.get(key).expect("key in taxonomy");
        let col: Vec<f64> = rows
            .iter()
            .map(|r| match def.polarity {
                Polarity::HigherBetter => r[a],
                Polarity::LowerBetter => -r[a],
            })
            .collect();
        z_cols.push((def.group.index(), zscores(&col)));
    }
    (0..m)
        .map(|vm| {
            let mut s = 0.0;
            for (g, w) in weights.iter().enumerate() {
                let members: Vec<f64> = z_cols
                    .iter()
                    .filter(|(grp, _)| *grp == g)
                    .map(|(_, z)| z[vm])
                    .collect();
                if !members.is_empty() {
                    s += w * members.iter().sum::<f64>() / members.len() as f64;
                }
            }
            s
        })
        .collect()
}

/// Rank = 1 + number of strictly higher scores.
pub fn ranks_higher_first(scores: &[f64]) -> Vec<u32> {
    scores
        .iter()
        .map(|s| 1 + scores.iter().filter(|t| *t > s).count() as u32)
        .collect()
}

/// Rank = 1 + number of strictly lower values.
pub fn ranks_lower_first(values: &[f64]) -> Vec<u32> {
    values
        .iter()
        .map(|v| 1 + values.iter().filter(|t| *t < v).count() as u32)
        .collect()
}

/// Pearson r × 100 via the single-pass sums formula.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sa += x;
        sb += y;
        saa += x * x;
        sbb += y * y;
        sab += x * y;
    }
    100.0 * (n * sab - sa * sb) / ((n * saa - sa * sa) * (n * sbb - sb * sb)).sqrt()
}

/// True when every pair of scores is either exactly equal or separated by
/// more than `tol`.
pub fn well_separated(scores: &[f64], tol: f64) -> bool {
    scores.iter().all(|a| {
        scores
            .iter()
            .all(|b| a == b || (a - b).abs() > tol * (1.0 + a.abs().max(b.abs())))
    })
}
