//! Raw per-head samples and their flat-genome encoding.

use serde::{Deserialize, Serialize};

/// Distribution family of one policy output head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    Beta,
    Categorical(usize),
}

impl HeadKind {
    /// Number of network outputs feeding this head.
    pub fn width(self) -> usize {
        match self {
            HeadKind::Beta => 2,
            HeadKind::Categorical(k) => k,
        }
    }
}

/// Sampled value of one head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HeadValue {
    Unit(f64),
    Category(usize),
}

/// One joint sample across every head, with its log-probability under the
/// distribution it was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundAction {
    pub values: Vec<HeadValue>,
    pub log_prob: f64,
}

impl CompoundAction {
    pub fn new(values: Vec<HeadValue>) -> Self {
        CompoundAction {
            values,
            log_prob: f64::NAN,
        }
    }

    /// Builds an action from genes in `[0, 1]`; categorical genes pick
    /// index `min(⌊g·k⌋, k−1)`.
    pub fn from_genome(genes: &[f64], heads: &[HeadKind]) -> Self {
        debug_assert_eq!(genes.len(), heads.len());
        let values = genes
            .iter()
            .zip(heads)
            .map(|(&g, kind)| {
                let g = g.clamp(0.0, 1.0);
                match *kind {
                    HeadKind::Beta => HeadValue::Unit(g),
                    HeadKind::Categorical(k) => {
                        HeadValue::Category(((g * k as f64).floor() as usize).min(k - 1))
                    }
                }
            })
            .collect();
        CompoundAction::new(values)
    }

    /// Every head set to the same gene value.
    pub fn constant(gene: f64, heads: &[HeadKind]) -> Self {
        Self::from_genome(&vec![gene; heads.len()], heads)
    }

    /// FNV-1a over the raw value bits; stable across platforms and runs.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: [u8; 8]| {
            for b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for v in &self.values {
            match *v {
                HeadValue::Unit(x) => feed(x.to_bits().to_le_bytes()),
                HeadValue::Category(i) => feed((i as u64 | 1 << 63).to_le_bytes()),
            }
        }
        h
    }
}
