use crate::error::{Error, Result};

pub const BCE_CLAMP: f64 = 1e-7;

/// Indices of the `k` largest values, larger first; equal values keep the
/// lower index first.
pub fn topk_indices(values: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > values.len() {
        return Err(Error::validation(format!(
            "top-k needs 1 <= k <= {}, got k = {k}",
            values.len()
        )));
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

pub fn topk_mean(values: &[f64], k: usize) -> Result<f64> {
    let idx = topk_indices(values, k)?;
    Ok(idx.iter().map(|&i| values[i]).sum::<f64>() / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MilTerms {
    pub margin: f64,
    pub k: usize,
    pub lambda_smooth: f64,
    pub lambda_sparse: f64,
}

/// Ranking hinge between the abnormal and normal bag statistics plus
/// temporal smoothness and sparsity on the abnormal bag.
pub fn mil_loss(abn: &[f64], nrm: &[f64], terms: &MilTerms) -> Result<f64> {
    Ok(mil_loss_and_grad(abn, nrm, terms)?.0)
}

/// Loss together with its derivative with respect to every abnormal and
/// normal snippet score.
pub fn mil_loss_and_grad(abn: &[f64], nrm: &[f64], terms: &MilTerms) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if abn.is_empty() || nrm.is_empty() {
        return Err(Error::validation("MIL loss needs non-empty abnormal and normal bags"));
    }
    let k = terms.k;
    let ia = topk_indices(abn, k)?;
    let in_ = topk_indices(nrm, k)?;
    let top_a = ia.iter().map(|&i| abn[i]).sum::<f64>() / k as f64;
    let top_n = in_.iter().map(|&i| nrm[i]).sum::<f64>() / k as f64;
    let hinge = (terms.margin - top_a + top_n).max(0.0);
    let smooth: f64 = abn.windows(2).map(|w| (w[0] - w[1]).powi(2)).sum();
    let sparse: f64 = abn.iter().sum();
    let loss = hinge + terms.lambda_smooth * smooth + terms.lambda_sparse * sparse;

    let mut ga = vec![terms.lambda_sparse; abn.len()];
    let mut gn = vec![0.0; nrm.len()];
    if hinge > 0.0 {
        for &i in &ia {
            ga[i] -= 1.0 / k as f64;
        }
        for &i in &in_ {
            gn[i] += 1.0 / k as f64;
        }
    }
    for i in 0..abn.len().saturating_sub(1) {
        let d = 2.0 * terms.lambda_smooth * (abn[i] - abn[i + 1]);
        ga[i] += d;
        ga[i + 1] -= d;
    }
    Ok((loss, ga, gn))
}

pub fn supervised_loss(scores: &[f64], labels: &[u8]) -> Result<f64> {
    Ok(supervised_loss_and_grad(scores, labels)?.0)
}

/// Mean binary cross-entropy with clamped scores, and its derivative with
/// respect to each (unclamped) score.
pub fn supervised_loss_and_grad(scores: &[f64], labels: &[u8]) -> Result<(f64, Vec<f64>)> {
    if scores.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::validation("cross-entropy needs at least one score"));
    }
    let n = scores.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(scores.len());
    for (&s, &y) in scores.iter().zip(labels) {
        let c = s.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let inside = s == c;
        if y == 1 {
            loss -= c.ln();
            grad.push(if inside { -1.0 / (c * n) } else { 0.0 });
        } else {
            loss -= (1.0 - c).ln();
            grad.push(if inside { 1.0 / ((1.0 - c) * n) } else { 0.0 });
        }
    }
    Ok((loss / n, grad))
}
