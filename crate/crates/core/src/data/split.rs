use crate::error::{Error, Result};
use crate::rng::Rng;

/// Row indices of a train/test partition, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded stratified partition of `labels` into train and test indices.
///
/// The test set holds `round(N·fraction)` items, clamped to `[1, N−1]`.
/// Per-class quotas are the floor of each class's exact share, with the
/// leftover seats going to the largest remainders (lower class index wins
/// ties). If any class has fewer than two members the split falls back to
/// an unstratified shuffle.
pub fn train_test_split(labels: &[usize], test_fraction: f64, rng: &mut Rng) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction {test_fraction} must lie strictly between 0 and 1"
        )));
    }
    let n = labels.len();
    if n < 2 {
        return Err(Error::Dataset(format!("cannot split {n} samples")));
    }
    let total_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }

    let mut test = Vec::with_capacity(total_test);
    if members.iter().any(|m| m.len() == 1) {
        log::warn!("a class has fewer than 2 samples; falling back to an unstratified split");
        let mut all: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut all);
        test.extend_from_slice(&all[..total_test]);
    } else {
        let exact: Vec<f64> = members
            .iter()
            .map(|m| m.len() as f64 * total_test as f64 / n as f64)
            .collect();
        let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut order: Vec<usize> = (0..classes).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - quota[a] as f64;
            let rb = exact[b] - quota[b] as f64;
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let assigned: usize = quota.iter().sum();
        for &c in order.iter().cycle().take(total_test - assigned) {
            quota[c] += 1;
        }
        for (class, mut idx) in members.into_iter().enumerate() {
            rng.shuffle(&mut idx);
            test.extend_from_slice(&idx[..quota[class].min(idx.len())]);
        }
    }
    test.sort_unstable();
    let mut in_test = vec![false; n];
    for &i in &test {
        in_test[i] = true;
    }
    let train = (0..n).filter(|&i| !in_test[i]).collect();
    Ok(Split { train, test })
}
