//! Message vectors and the arithmetic shared by ground and compressed BP.

use crate::factor_graph::Potential;

/// Flat storage for the two directed messages of every edge.
///
/// Edge `e` owns the slice `offsets[e]..offsets[e + 1]` in both the
/// variable-to-factor and the factor-to-variable buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct MessageStore {
    offsets: Vec<usize>,
    to_factor: Vec<f64>,
    to_variable: Vec<f64>,
}

impl MessageStore {
    /// All messages start uniform (the normalized form of "all ones").
    pub fn uniform(edge_cardinalities: impl IntoIterator<Item = usize>) -> Self {
        let mut offsets = vec![0];
        let mut data = Vec::new();
        for card in edge_cardinalities {
            data.extend(std::iter::repeat_n(1.0 / card as f64, card));
            offsets.push(data.len());
        }
        MessageStore {
            offsets,
            to_factor: data.clone(),
            to_variable: data,
        }
    }

    pub fn num_edges(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn to_factor(&self, edge: usize) -> &[f64] {
        &self.to_factor[self.offsets[edge]..self.offsets[edge + 1]]
    }

    pub fn to_variable(&self, edge: usize) -> &[f64] {
        &self.to_variable[self.offsets[edge]..self.offsets[edge + 1]]
    }

    pub fn set_to_factor(&mut self, edge: usize, msg: &[f64]) {
        self.to_factor[self.offsets[edge]..self.offsets[edge + 1]].copy_from_slice(msg);
    }

    pub fn set_to_variable(&mut self, edge: usize, msg: &[f64]) {
        self.to_variable[self.offsets[edge]..self.offsets[edge + 1]].copy_from_slice(msg);
    }

    /// Largest absolute componentwise difference to another store of the same shape.
    pub fn max_abs_diff(&self, other: &MessageStore) -> f64 {
        let a = self.to_factor.iter().zip(&other.to_factor);
        let b = self.to_variable.iter().zip(&other.to_variable);
        a.chain(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }
}

/// Scales `v` to sum 1. Returns `false` (leaving `v` untouched) when the sum is
/// zero or not finite.
pub fn normalize(v: &mut [f64]) -> bool {
    let sum: f64 = v.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= sum);
    true
}

/// Divides by the largest entry; keeps running products away from underflow.
pub(crate) fn rescale(v: &mut [f64]) {
    let max = v.iter().copied().fold(0.0, f64::max);
    if max > 0.0 && max.is_finite() {
        v.iter_mut().for_each(|x| *x /= max);
    }
}

/// `new = (1 - d) * fresh + d * old`, renormalized.
pub fn damp(fresh: &mut [f64], old: &[f64], damping: f64) {
    if damping == 0.0 {
        return;
    }
    for (f, o) in fresh.iter_mut().zip(old) {
        *f = (1.0 - damping) * *f + damping * o;
    }
    normalize(fresh);
}

const TINY: f64 = 1e-300;

/// `acc *= msg^exponent` componentwise, up to a positive scale.
///
/// `msg` is first scaled so its largest entry is 1. A zero exponent leaves
/// `acc` unchanged, including where `msg` is zero. Integral exponents use
/// repeated multiplication unless some entry is below 1e-300, in which case the
/// power is taken in log space.
pub fn mul_pow(acc: &mut [f64], msg: &[f64], exponent: f64) {
    if exponent == 0.0 {
        return;
    }
    let max = msg.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        acc.iter_mut().for_each(|a| *a = 0.0);
        return;
    }
    let log_space = msg.iter().any(|&m| m > 0.0 && m / max < TINY);
    let integral = exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64;
    for (a, &m) in acc.iter_mut().zip(msg) {
        let x = m / max;
        let p = if x == 0.0 {
            if exponent > 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else if log_space || !integral {
            (exponent * x.ln()).exp()
        } else {
            x.powi(exponent as i32)
        };
        *a *= p;
    }
    rescale(acc);
}

/// Unnormalized sum-product message from a factor to the argument at
/// `target`, given the incoming message at every other position.
///
/// `incoming[target]` is ignored.
pub fn factor_message(table: &Potential, incoming: &[&[f64]], target: usize) -> Vec<f64> {
    let cards = table.cardinalities();
    let mut out = vec![0.0; cards[target]];
    let mut states = vec![0usize; cards.len()];
    for &value in table.values() {
        if value != 0.0 {
            let mut w = value;
            for (q, &s) in states.iter().enumerate() {
                if q != target {
                    w *= incoming[q][s];
                }
            }
            out[states[target]] += w;
        }
        for i in (0..cards.len()).rev() {
            states[i] += 1;
            if states[i] < cards[i] {
                break;
            }
            states[i] = 0;
        }
    }
    out
}
