//! Boolean attention masks and their additive-bias encoding.

use super::tape::MASK_BIAS;
use super::tensor::{Real, Tensor};

/// Square boolean attention mask; `allowed[i][j]` says whether position `i`
/// may attend to position `j`. Every position must attend to itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    n: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    /// Build from a predicate. Panics if any diagonal entry comes back false:
    /// a row with no allowed positions would make softmax degenerate, and a
    /// token that cannot see itself is never a configuration we want.
    pub fn from_fn(n: usize, mut allow: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(n > 0, "attention mask must be non-empty");
        let mut allowed = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                allowed[i * n + j] = allow(i, j);
            }
            assert!(
                allowed[i * n + i],
                "attention mask row {i} does not allow attending to itself"
            );
        }
        AttentionMask { n, allowed }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn is_allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.n + j]
    }

    /// Additive logit bias: 0 where allowed, a large negative constant where
    /// not. Adding this before softmax drives disallowed weights to exact 0.0
    /// (the shifted exponent underflows), so masking is bitwise, not merely
    /// approximate, and no gradient leaks through masked entries.
    pub fn bias<T: Real>(&self) -> Tensor<T> {
        let neg = T::from_f64(MASK_BIAS);
        Tensor::from_fn(self.n, self.n, |i, j| {
            if self.is_allowed(i, j) {
                T::ZERO
            } else {
                neg
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bias_places_zeros_and_negatives() {
        let mask = AttentionMask::from_fn(3, |i, j| j <= i);
        let bias: Tensor<f64> = mask.bias();
        assert_eq!(bias.get(0, 0), 0.0);
        assert_eq!(bias.get(0, 2), MASK_BIAS);
        assert_eq!(bias.get(2, 1), 0.0);
    }

    #[test]
    #[should_panic(expected = "attending to itself")]
    fn self_attention_is_mandatory() {
        AttentionMask::from_fn(2, |i, j| i != j);
    }
}
