use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AlphaVector;
use crate::salience::SalienceMap;
use crate::tensor::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_c: f64,
    pub l_sal: f64,
    pub l_total: f64,
}

fn check_support(alpha: &[f64], sigma: &[f64]) -> Result<()> {
    if alpha.len() != sigma.len() {
        return Err(Error::data(format!(
            "attention covers {} positions but salience covers {}",
            alpha.len(),
            sigma.len()
        )));
    }
    if alpha.is_empty() {
        return Err(Error::data("empty attention and salience vectors"));
    }
    if let Some(i) = sigma.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::data(format!(
            "salience entry {i} is {}; maps must be normalized to strictly positive values",
            sigma[i]
        )));
    }
    Ok(())
}

/// `KL(alpha || sigma) = sum_i alpha_i (ln alpha_i - ln sigma_i)`, natural log.
/// Zero entries of `alpha` contribute nothing.
pub fn kl_salience_loss(alpha: &AlphaVector, sigma: &SalienceMap) -> Result<f64> {
    kl_values(&alpha.scores, &sigma.scores)
}

pub(crate) fn kl_values(alpha: &[f64], sigma: &[f64]) -> Result<f64> {
    check_support(alpha, sigma)?;
    Ok(alpha
        .iter()
        .zip(sigma)
        .map(|(&a, &s)| if a > 0.0 { a * (a.ln() - s.ln()) } else { 0.0 })
        .sum())
}

/// KL divergence of the `1 x n` row `alpha` from fixed `sigma`, on the tape.
pub fn kl_on_graph(g: &mut Graph, alpha: Var, sigma: &[f64]) -> Result<Var> {
    check_support(g.value(alpha).data(), sigma)?;
    let log_sigma = g.constant(Tensor::row(&sigma.iter().map(|s| s.ln()).collect::<Vec<_>>()))?;
    let log_alpha = g.log(alpha)?;
    let diff = g.sub(log_alpha, log_sigma)?;
    let weighted = g.mul(alpha, diff)?;
    Ok(g.sum(weighted)?)
}

/// Loss nodes for one batch.
#[derive(Debug, Clone, Copy)]
pub struct GraphLoss {
    pub total: Var,
    pub l_c: Var,
    /// Absent when `lambda` is zero: the salience term is then not recorded.
    pub l_sal: Option<Var>,
}

/// Mean cross-entropy plus `lambda` times mean KL, recorded on the tape.
///
/// `logits` holds one `1 x C` row per instance. With `lambda == 0` the
/// salience inputs are ignored and the graph is pure cross-entropy.
pub fn joint_loss_on_graph(
    g: &mut Graph,
    logits: &[Var],
    labels: &[usize],
    alphas: &[Var],
    sigmas: &[&[f64]],
    lambda: f64,
) -> Result<GraphLoss> {
    if logits.is_empty() || logits.len() != labels.len() {
        return Err(Error::data(format!(
            "{} logit rows for {} labels",
            logits.len(),
            labels.len()
        )));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::config(format!(
            "lambda {lambda} must be a finite non-negative number"
        )));
    }
    let n = logits.len() as f64;
    let mut nll_sum = None;
    for (&row, &y) in logits.iter().zip(labels) {
        let classes = g.value(row).len();
        if y >= classes {
            return Err(Error::data(format!("label {y} outside {classes} classes")));
        }
        let lsm = g.log_softmax_rows(row)?;
        let picked = g.gather(lsm, &[y])?;
        nll_sum = Some(match nll_sum {
            None => picked,
            Some(acc) => g.add(acc, picked)?,
        });
    }
    let l_c = g.scale(nll_sum.expect("non-empty"), -1.0 / n)?;
    if lambda == 0.0 {
        return Ok(GraphLoss {
            total: l_c,
            l_c,
            l_sal: None,
        });
    }
    if alphas.len() != logits.len() || sigmas.len() != logits.len() {
        return Err(Error::data(
            "need one attention vector and one salience map per instance",
        ));
    }
    let mut kl_sum = None;
    for (&a, s) in alphas.iter().zip(sigmas) {
        let kl = kl_on_graph(g, a, s)?;
        kl_sum = Some(match kl_sum {
            None => kl,
            Some(acc) => g.add(acc, kl)?,
        });
    }
    let l_sal = g.scale(kl_sum.expect("non-empty"), 1.0 / n)?;
    let weighted = g.scale(l_sal, lambda)?;
    let total = g.add(l_c, weighted)?;
    Ok(GraphLoss {
        total,
        l_c,
        l_sal: Some(l_sal),
    })
}

/// Evaluates the joint objective on fixed values.
///
/// `l_sal` is always reported when salience is supplied; `l_total` includes
/// it only through `lambda`.
pub fn joint_loss(
    logits: &Tensor,
    labels: &[usize],
    alphas: &[AlphaVector],
    sigmas: &[SalienceMap],
    lambda: f64,
) -> Result<LossBreakdown> {
    let mut g = Graph::new();
    let rows = (0..logits.rows())
        .map(|r| g.constant(Tensor::row(logits.row_slice(r))))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let alpha_vars = alphas
        .iter()
        .map(|a| g.constant(Tensor::row(&a.scores)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let sigma_vals: Vec<&[f64]> = sigmas.iter().map(|s| s.scores.as_slice()).collect();
    let loss = joint_loss_on_graph(&mut g, &rows, labels, &alpha_vars, &sigma_vals, lambda)?;
    let l_c = g.value(loss.l_c).data()[0];
    let l_sal = match loss.l_sal {
        Some(v) => g.value(v).data()[0],
        None if alphas.is_empty() => 0.0,
        None => mean_kl(alphas, sigmas)?,
    };
    Ok(LossBreakdown {
        l_c,
        l_sal,
        l_total: g.value(loss.total).data()[0],
    })
}

fn mean_kl(alphas: &[AlphaVector], sigmas: &[SalienceMap]) -> Result<f64> {
    if alphas.len() != sigmas.len() {
        return Err(Error::data("need one salience map per attention vector"));
    }
    let mut sum = 0.0;
    for (a, s) in alphas.iter().zip(sigmas) {
        sum += kl_salience_loss(a, s)?;
    }
    Ok(sum / alphas.len() as f64)
}
