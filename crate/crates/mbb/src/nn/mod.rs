//! Minimal dense neural networks with manual backpropagation.
//!
//! Everything learned in this crate (policies, baselines, critics) is a small
//! fully-connected network with `tanh` hidden layers and an identity output
//! layer. Parameters live in one flat `Vec<f64>` so optimizers, gradient
//! clipping, checkpoint hashing and flat-gradient analysis all operate on a
//! single slice.

mod adam;
mod mlp;
mod policy;

pub use adam::Adam;
pub use mlp::{BatchTrace, Mlp, Trace};
pub use policy::GaussianPolicy;

/// Scales `grads` in place so its l2 norm is at most `max_norm`.
///
/// Returns the norm observed before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = l2_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

/// Euclidean norm of a flat vector.
pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity between two flat vectors; 0 when either norm vanishes.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine of unequal lengths");
    if std::ptr::eq(a, b) || a == b {
        // Identical vectors compare as exactly 1 (avoids rounding in the
        // norm product for the self-similarity case).
        if l2_norm(a) == 0.0 {
            return 0.0;
        }
        return 1.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// FNV-1a hash of the raw parameter bits.
///
/// Used by the fixed/updated gating invariants: two parameter vectors hash
/// equal iff they are bitwise identical.
pub fn param_hash(params: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in params {
        for byte in p.to_bits().to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}
