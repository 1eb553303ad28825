//! Order statistics shared project-wide. Quantiles use linear interpolation
//! between order statistics: position `h = (n - 1) p`, value
//! `x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h])`.

/// Quantile of an ascending-sorted slice. Returns `None` when empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let p = p.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= sorted.len() || frac == 0.0 {
        return Some(sorted[lo]);
    }
    Some(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
}

pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

pub fn quantile(values: &[f64], p: f64) -> Option<f64> {
    quantile_sorted(&sorted_copy(values), p)
}

/// `(q1, median, q3)` of an unsorted slice.
pub fn quartiles(values: &[f64]) -> Option<(f64, f64, f64)> {
    let s = sorted_copy(values);
    Some((
        quantile_sorted(&s, 0.25)?,
        quantile_sorted(&s, 0.5)?,
        quantile_sorted(&s, 0.75)?,
    ))
}

pub fn iqr(values: &[f64]) -> Option<f64> {
    quartiles(values).map(|(q1, _, q3)| q3 - q1)
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}
