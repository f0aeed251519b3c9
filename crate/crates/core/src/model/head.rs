//! Output head: squashing of raw network outputs into density parameters,
//! and the per-sample negative log-likelihood with its gradient with respect
//! to the raw outputs.
//!
//! Raw output layout for K centers:
//!
//! ```text
//! [0, K)    mixture logits       -> softmax
//! [K, 2K)   locations            -> identity
//! [2K, 3K)  scales               -> softplus + SCALE_FLOOR
//! 3K        tail threshold u     -> identity
//! 3K + 1    tail scale β         -> softplus + BETA_FLOOR
//! 3K + 2    tail shape ξ         -> softplus
//! ```

use crate::dist::{normal, GmmParams, SplicedMixtureParams, TailParams, BETA_FLOOR, SCALE_FLOOR, XI_EXPONENTIAL};
use crate::error::{Error, Result};

use super::HeadKind;

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn output_dim(kind: HeadKind, centers: usize) -> usize {
    match kind {
        HeadKind::Gmm => 3 * centers,
        HeadKind::Gmevm => 3 * centers + 3,
    }
}

pub(crate) fn threshold_index(centers: usize) -> usize {
    3 * centers
}

/// Density parameters decoded from one raw output row, kept in the form the
/// likelihood needs.
pub(crate) struct HeadParams {
    centers: usize,
    /// Raw outputs, kept for the squashing derivatives.
    raw: Vec<f64>,
    weights: Vec<f64>,
    ln_weights: Vec<f64>,
    locations: Vec<f64>,
    scales: Vec<f64>,
    tail: Option<TailHead>,
}

struct TailHead {
    threshold: f64,
    beta: f64,
    xi: f64,
    /// ln(1 - F(u | φ))
    ln_mass_above: f64,
    /// d ln(1 - F(u)) / d raw, over the full raw layout
    d_ln_mass_above: Vec<f64>,
}

impl HeadParams {
    pub(crate) fn decode(raw: &[f64], kind: HeadKind, centers: usize) -> Result<Self> {
        let k = centers;
        if raw.len() != output_dim(kind, k) {
            return Err(Error::Config(format!(
                "head expects {} raw outputs, got {}",
                output_dim(kind, k),
                raw.len()
            )));
        }
        if let Some(bad) = raw.iter().position(|v| !v.is_finite()) {
            return Err(Error::abort(format!("non-finite raw network output at index {bad}")));
        }
        let logits = &raw[..k];
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let ln_total = total.ln();
        let weights: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let ln_weights: Vec<f64> = logits.iter().map(|l| l - max - ln_total).collect();
        let locations = raw[k..2 * k].to_vec();
        let scales: Vec<f64> = raw[2 * k..3 * k]
            .iter()
            .map(|&s| softplus(s) + SCALE_FLOOR)
            .collect();

        let mut head = HeadParams {
            centers: k,
            raw: raw.to_vec(),
            weights,
            ln_weights,
            locations,
            scales,
            tail: None,
        };
        if kind == HeadKind::Gmevm {
            let threshold = raw[3 * k];
            let beta = softplus(raw[3 * k + 1]) + BETA_FLOOR;
            let xi = softplus(raw[3 * k + 2]);
            let (ln_mass_above, d_ln_mass_above) = head.ln_mass_above(threshold);
            head.tail = Some(TailHead {
                threshold,
                beta,
                xi,
                ln_mass_above,
                d_ln_mass_above,
            });
        }
        Ok(head)
    }

    /// ln(1 - F(u)) and its gradient over the raw layout (logits, locations,
    /// scales, and u itself).
    fn ln_mass_above(&self, u: f64) -> (f64, Vec<f64>) {
        let k = self.centers;
        let mut terms = Vec::with_capacity(k);
        let mut zs = Vec::with_capacity(k);
        for j in 0..k {
            let z = (u - self.locations[j]) / self.scales[j];
            zs.push(z);
            terms.push(self.ln_weights[j] + normal::ln_sf(z));
        }
        let ln_s = normal::logsumexp(&terms);
        let mut grad = vec![0.0; output_dim(HeadKind::Gmevm, k)];
        let mut d_u = 0.0;
        for j in 0..k {
            let r = (terms[j] - ln_s).exp();
            let z = zs[j];
            let s = self.scales[j];
            // r·λ(z)/σ with λ the hazard, assembled in log space
            let rl = (terms[j] - ln_s + normal::ln_pdf(z) - normal::ln_sf(z)).exp() / s;
            grad[j] = r - self.weights[j];
            grad[k + j] = rl;
            grad[2 * k + j] = rl * z * sigmoid(self.raw[2 * k + j]);
            d_u -= rl;
        }
        grad[threshold_index(k)] = d_u;
        (ln_s, grad)
    }

    pub(crate) fn to_params(&self) -> Result<SplicedMixtureParams> {
        let bulk = GmmParams::new(
            self.weights.clone(),
            self.locations.clone(),
            self.scales.clone(),
        )?;
        let tail = match &self.tail {
            Some(t) => Some(TailParams::new(t.threshold, t.beta, t.xi)?),
            None => None,
        };
        Ok(SplicedMixtureParams::new(bulk, tail))
    }

    /// -ln p(y | θ)
    pub(crate) fn nll(&self, y: f64) -> f64 {
        match &self.tail {
            Some(t) if y > t.threshold => -(t.ln_mass_above + ln_gpd(t, y)),
            _ => -self.ln_bulk(y, None),
        }
    }

    /// -ln p(y | θ), accumulating its gradient with respect to the raw outputs into `grad`.
    pub(crate) fn nll_accumulate(&self, y: f64, grad: &mut [f64], scratch: &mut Vec<f64>) -> f64 {
        match &self.tail {
            Some(t) if y > t.threshold => {
                let k = self.centers;
                let tt = (y - t.threshold) / t.beta;
                let a = t.xi * tt;
                let ln_g = ln_gpd(t, y);
                // d ln g / d(u, β, ξ)
                let d_u = (1.0 + t.xi) / (t.beta * (1.0 + a));
                let d_beta = -1.0 / t.beta + tt * (1.0 + t.xi) / (t.beta * (1.0 + a));
                let d_xi = if t.xi < XI_EXPONENTIAL {
                    0.5 * tt * tt - tt
                } else {
                    tt * tt * excess_log_ratio(a) - tt / (1.0 + a)
                };
                for (g, d) in grad.iter_mut().zip(&t.d_ln_mass_above) {
                    *g -= d;
                }
                grad[3 * k] -= d_u;
                grad[3 * k + 1] -= d_beta * sigmoid(self.raw[3 * k + 1]);
                grad[3 * k + 2] -= d_xi * sigmoid(self.raw[3 * k + 2]);
                -(t.ln_mass_above + ln_g)
            }
            _ => {
                let k = self.centers;
                let ln_f = self.ln_bulk(y, Some(scratch));
                for j in 0..k {
                    let s = self.scales[j];
                    let z = (y - self.locations[j]) / s;
                    let gamma = (scratch[j] - ln_f).exp();
                    grad[j] -= gamma - self.weights[j];
                    grad[k + j] -= gamma * z / s;
                    grad[2 * k + j] -= gamma * (z * z - 1.0) / s * sigmoid(self.raw[2 * k + j]);
                }
                -ln_f
            }
        }
    }

    /// ln f(y | φ); fills `terms` with the per-component log joint terms when given.
    fn ln_bulk(&self, y: f64, terms: Option<&mut Vec<f64>>) -> f64 {
        let mut local = Vec::new();
        let terms = terms.unwrap_or(&mut local);
        terms.clear();
        for j in 0..self.centers {
            let s = self.scales[j];
            terms.push(self.ln_weights[j] + normal::ln_pdf((y - self.locations[j]) / s) - s.ln());
        }
        normal::logsumexp(terms)
    }
}

fn ln_gpd(t: &TailHead, y: f64) -> f64 {
    let tt = (y - t.threshold) / t.beta;
    if t.xi < XI_EXPONENTIAL {
        -t.beta.ln() - tt
    } else {
        -t.beta.ln() - (1.0 / t.xi + 1.0) * (t.xi * tt).ln_1p()
    }
}

/// (ln(1+a) - a/(1+a)) / a², with its series near zero.
fn excess_log_ratio(a: f64) -> f64 {
    if a.abs() < 1e-3 {
        // Σ_{n≥2} (-1)^n (n-1)/n a^(n-2)
        0.5 - a * (2.0 / 3.0 - a * (3.0 / 4.0 - a * (4.0 / 5.0 - a * (5.0 / 6.0))))
    } else {
        (a.ln_1p() - a / (1.0 + a)) / (a * a)
    }
}
