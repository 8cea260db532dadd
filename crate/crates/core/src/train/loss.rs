//! Binary cross-entropy on logits.

/// `σ(z)` without overflow for large `|z|`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Loss and `dL/dz` for one logit: `max(z, 0) − z·y + ln(1 + e^{−|z|})`.
pub fn bce_with_logits(z: f64, y: f64) -> (f64, f64) {
    let loss = z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
    (loss, sigmoid(z) - y)
}

/// Mean loss over the batch and the gradient of that mean w.r.t. each logit.
pub fn bce_loss(logits: &[f64], labels: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(logits.len(), labels.len(), "logits/labels length mismatch");
    if logits.is_empty() {
        return (0.0, Vec::new());
    }
    let n = logits.len() as f64;
    let mut total = 0.0;
    let grads = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let (l, g) = bce_with_logits(z, y);
            total += l;
            g / n
        })
        .collect();
    (total / n, grads)
}
