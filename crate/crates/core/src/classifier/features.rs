use crate::corpus::RelationInstance;

pub const DEFAULT_FEATURE_DIM: usize = 1 << 18;

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut v = SparseVector::default();
        for (i, x) in pairs {
            if v.indices.last() == Some(&i) {
                *v.values.last_mut().unwrap() += x;
            } else {
                v.indices.push(i);
                v.values.push(x);
            }
        }
        v
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (k, part) in parts.iter().enumerate() {
        if k > 0 {
            h ^= 0x1f;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Hashed unigram and bigram counts. Mask tokens are ordinary tokens here.
pub fn featurize(instance: &RelationInstance, feature_dim: usize) -> SparseVector {
    featurize_tokens(&instance.tokens, feature_dim)
}

pub fn featurize_tokens(tokens: &[String], feature_dim: usize) -> SparseVector {
    let dim = feature_dim as u64;
    let mut pairs = Vec::with_capacity(tokens.len() * 2);
    for tok in tokens {
        pairs.push(((fnv1a(&[b"u", tok.as_bytes()]) % dim) as u32, 1.0));
    }
    for w in tokens.windows(2) {
        pairs.push(((fnv1a(&[b"b", w[0].as_bytes(), w[1].as_bytes()]) % dim) as u32, 1.0));
    }
    SparseVector::from_pairs(pairs)
}
