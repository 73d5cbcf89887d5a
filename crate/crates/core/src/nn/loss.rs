use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Row-wise softmax of N x K logits.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let k = logits.item_len();
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(k) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z = z + *v;
        }
        row.iter_mut().for_each(|v| *v = *v / z);
    }
    Tensor::from_vec(logits.shape(), out).expect("same shape")
}

/// Mean cross-entropy over the batch and its logit gradient
/// `(softmax - onehot) / N`.
pub fn softmax_cross_entropy<T: Real>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>)> {
    let n = logits.n();
    let k = logits.item_len();
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for {n} logit rows",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Domain(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    let inv_n = T::one() / T::lit(n as f64);
    let mut loss = T::zero();
    let mut grad = softmax(logits).into_data();
    for (i, (row, &label)) in logits.data().chunks_exact(k).zip(labels).enumerate() {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
        loss = loss + (lse - row[label]);
        let g = &mut grad[i * k..(i + 1) * k];
        g[label] = g[label] - T::one();
        g.iter_mut().for_each(|v| *v = *v * inv_n);
    }
    Ok((loss * inv_n, Tensor::from_vec(logits.shape(), grad)?))
}

/// Fraction of rows whose argmax equals the label (ties resolve to the lower
/// class index).
pub fn argmax_accuracy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> f64 {
    let k = logits.item_len();
    if labels.is_empty() {
        return 0.0;
    }
    let correct = logits
        .data()
        .chunks_exact(k)
        .zip(labels)
        .filter(|(row, &l)| {
            let best = row
                .iter()
                .enumerate()
                .fold(0, |b, (i, &v)| if v > row[b] { i } else { b });
            best == l
        })
        .count();
    correct as f64 / labels.len() as f64
}
