use lodestar_core::seeds::derive_seed;

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    /// Deterministic: equal text gives an equal vector.
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Signed feature hashing of lowercase alphanumeric tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBowEmbedder {
    pub dimension: usize,
    pub seed: u64,
}

impl Default for HashedBowEmbedder {
    fn default() -> Self {
        HashedBowEmbedder { dimension: 256, seed: 0 }
    }
}

fn fnv1a(text: &str) -> u64 {
    text.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

impl Embedder for HashedBowEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        for token in tokens(text) {
            let h = derive_seed(self.seed, fnv1a(&token));
            let slot = (h % self.dimension as u64) as usize;
            v[slot] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        v
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity clamped to [-1, 1]; zero vectors give 0.
pub fn cosine(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deterministic_and_case_blind() {
        let e = HashedBowEmbedder::default();
        assert_eq!(e.embed("CsF base in DMF"), e.embed("csf BASE in dmf"));
        assert_eq!(e.embed("x").len(), 256);
        assert!(e.embed("").iter().all(|v| *v == 0.0));
    }

    proptest! {
        #[test]
        fn cosine_bounds_and_self_similarity(a in "[a-z ]{1,60}", b in "[a-z ]{0,60}") {
            let e = HashedBowEmbedder::default();
            let (va, vb) = (e.embed(&a), e.embed(&b));
            let (na, nb) = (norm(&va), norm(&vb));
            let c = cosine(&va, na, &vb, nb);
            prop_assert!((-1.0..=1.0).contains(&c));
            if na > 0.0 {
                prop_assert!((cosine(&va, na, &va, na) - 1.0).abs() < 1e-9);
            }
        }
    }
}
