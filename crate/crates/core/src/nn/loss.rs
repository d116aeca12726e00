use super::NetworkError;
use crate::tensor::Tensor;

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the logits, `(softmax - onehot) / batch`.
///
/// Each row is shifted by its maximum before exponentiating. Per-sample
/// losses are summed in batch order, then divided by the batch size.
pub fn softmax_cross_entropy(
    logits: &Tensor,
    labels: &[usize],
) -> Result<(f64, Tensor), NetworkError> {
    let shape = logits.shape();
    if shape.len() != 2 {
        return Err(NetworkError::GradShape {
            expected: vec![labels.len(), 0],
            found: shape.to_vec(),
        });
    }
    let (n, classes) = (shape[0], shape[1]);
    if labels.len() != n {
        return Err(NetworkError::LabelCount {
            labels: labels.len(),
            batch: n,
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(NetworkError::Label { label, classes });
    }
    let mut grad = vec![0.0; n * classes];
    let mut total = 0.0;
    let scale = 1.0 / n as f64;
    for ((row, g), &label) in logits
        .data()
        .chunks(classes)
        .zip(grad.chunks_mut(classes))
        .zip(labels)
    {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (gi, &z) in g.iter_mut().zip(row) {
            *gi = (z - max).exp();
            sum += *gi;
        }
        total += sum.ln() - (row[label] - max);
        for gi in g.iter_mut() {
            *gi *= scale / sum;
        }
        g[label] -= scale;
    }
    Ok((total * scale, Tensor::new(shape.to_vec(), grad)?))
}

/// Row-wise argmax; ties go to the lowest index.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let classes = logits.shape().get(1).copied().unwrap_or(1);
    logits
        .data()
        .chunks(classes)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    let hits = argmax_rows(logits)
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    hits as f64 / labels.len().max(1) as f64
}
