//! Sensor mask sampling.
//!
//! Each training or evaluation instance carries a pair of masks over the
//! grid: the input mask selects the pixels the model may condition on, the
//! target mask selects the pixels the loss and metrics are computed on.
//! Patterns: uniform random scatter (optionally with a controlled overlap
//! between the two masks) and disjoint 8x8 blocks. Under the `Global`
//! regime a single pair is shared by every instance; under `Instance`
//! each instance id draws its own pair from its own stream.

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Domain};
use crate::tensor::{Scalar, Tensor};
use rand::seq::index::sample as index_sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const BLOCK_SIZE: usize = 8;

/// Set of observed pixels on an n x n grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    n: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(n: usize) -> Self {
        Mask {
            n,
            bits: vec![false; n * n],
        }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Self {
        let mut m = Mask::empty(n);
        for &i in indices {
            assert!(i < n * n);
            m.bits[i] = true;
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Linear pixel indices in ascending order.
    pub fn indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn overlap_count(&self, other: &Mask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    pub fn union(&self, other: &Mask) -> Mask {
        assert_eq!(self.n, other.n);
        Mask {
            n: self.n,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a || b).collect(),
        }
    }

    /// Pixels in `self` but not in `other`.
    pub fn difference(&self, other: &Mask) -> Mask {
        assert_eq!(self.n, other.n);
        Mask {
            n: self.n,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && !b).collect(),
        }
    }

    /// Every pixel observed.
    pub fn full(n: usize) -> Mask {
        Mask { n, bits: vec![true; n * n] }
    }

    /// 0/1 indicator as a `[1, n, n]` tensor plane.
    pub fn as_plane<S: Scalar>(&self) -> Tensor<S> {
        Tensor::new(
            vec![1, self.n, self.n],
            self.bits
                .iter()
                .map(|&b| if b { S::ONE } else { S::ZERO })
                .collect(),
        )
    }
}

/// Values of `field` at the mask's pixels, in ascending index order.
pub fn restrict(field: &[f32], mask: &Mask) -> Vec<f32> {
    assert_eq!(field.len(), mask.n * mask.n);
    mask.bits
        .iter()
        .zip(field)
        .filter_map(|(&b, &v)| b.then_some(v))
        .collect()
}

/// Field with unobserved pixels zeroed: the M (.) U operation.
pub fn apply_mask(field: &[f32], mask: &Mask) -> Vec<f32> {
    assert_eq!(field.len(), mask.n * mask.n);
    mask.bits
        .iter()
        .zip(field)
        .map(|(&b, &v)| if b { v } else { 0.0 })
        .collect()
}

/// Conditioning/target mask pair for one instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPair {
    /// Pixels the model conditions on (M_i).
    pub input: Mask,
    /// Pixels the loss and metrics see (M_o).
    pub target: Mask,
}

/// How masks are drawn.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "pattern", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskProtocol {
    /// Uniform random scatter: a pixel budget of floor(density * n^2)
    /// distinct sensors, a fraction of which is shared between the two
    /// masks; the rest is split, the input mask taking the odd pixel.
    Random { density: f64, overlap_fraction: f64 },
    /// Disjoint axis-aligned 8x8 blocks at uniform anchors; the first half
    /// of the placement order forms the input mask.
    Blocks { n_blocks: usize },
}

/// Whether all instances share one mask draw or each draws its own.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MaskRegime {
    Global,
    Instance,
}

/// Sensor-count budget for a density on an n x n grid.
pub fn pixel_budget(density: f64, n: usize) -> usize {
    (density * (n * n) as f64).floor() as usize
}

/// The three sparsity scenarios used throughout evaluation, with matched
/// budgets for the two patterns (blocks of 64 pixels each).
#[derive(Debug, Clone, Copy)]
pub struct SparsityScenario {
    pub name: &'static str,
    pub density: f64,
    pub n_blocks: usize,
}

pub const SCENARIOS: [SparsityScenario; 3] = [
    SparsityScenario {
        name: "sparse",
        density: 0.04,
        n_blocks: 2,
    },
    SparsityScenario {
        name: "moderate",
        density: 0.10,
        n_blocks: 6,
    },
    SparsityScenario {
        name: "dense",
        density: 0.40,
        n_blocks: 26,
    },
];

pub fn sample_random_pair(
    n: usize,
    density: f64,
    overlap_fraction: f64,
    rng: &mut impl Rng,
) -> Result<MaskPair> {
    if !(0.0 < density && density <= 1.0) {
        return Err(Error::config(format!("density {density} not in (0, 1]")));
    }
    if !(0.0..=1.0).contains(&overlap_fraction) {
        return Err(Error::config(format!(
            "overlap fraction {overlap_fraction} not in [0, 1]"
        )));
    }
    let budget = pixel_budget(density, n);
    if budget < 2 {
        return Err(Error::config(format!(
            "density {density} yields a budget of {budget} pixels; need at least 2"
        )));
    }
    let n_shared = (overlap_fraction * budget as f64).round() as usize;
    let drawn = index_sample(rng, n * n, budget).into_vec();

    let rest = budget - n_shared;
    let n_input_only = rest.div_ceil(2);
    let mut input = Vec::with_capacity(n_shared + n_input_only);
    let mut target = Vec::with_capacity(budget - n_input_only);
    input.extend_from_slice(&drawn[..n_shared]);
    target.extend_from_slice(&drawn[..n_shared]);
    input.extend_from_slice(&drawn[n_shared..n_shared + n_input_only]);
    target.extend_from_slice(&drawn[n_shared + n_input_only..]);
    Ok(MaskPair {
        input: Mask::from_indices(n, &input),
        target: Mask::from_indices(n, &target),
    })
}

pub fn sample_block_pair(n: usize, n_blocks: usize, rng: &mut impl Rng) -> Result<MaskPair> {
    if n < BLOCK_SIZE {
        return Err(Error::config(format!(
            "grid size {n} is smaller than the block size {BLOCK_SIZE}"
        )));
    }
    if n_blocks < 2 {
        return Err(Error::config("need at least 2 blocks, one per mask"));
    }
    let anchor_range = n - BLOCK_SIZE + 1;
    let mut occupied = vec![false; n * n];
    let mut anchors = Vec::with_capacity(n_blocks);
    let max_attempts = 1000 * n_blocks;
    let mut attempts = 0;
    while anchors.len() < n_blocks {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::config(format!(
                "could not place {n_blocks} disjoint {BLOCK_SIZE}x{BLOCK_SIZE} blocks on a \
                 {n}x{n} grid after {max_attempts} attempts"
            )));
        }
        let ai = rng.random_range(0..anchor_range);
        let aj = rng.random_range(0..anchor_range);
        let clash = (ai..ai + BLOCK_SIZE)
            .any(|i| (aj..aj + BLOCK_SIZE).any(|j| occupied[i * n + j]));
        if clash {
            continue;
        }
        for i in ai..ai + BLOCK_SIZE {
            for j in aj..aj + BLOCK_SIZE {
                occupied[i * n + j] = true;
            }
        }
        anchors.push((ai, aj));
    }

    let n_input = n_blocks.div_ceil(2);
    let block_indices = |(ai, aj): (usize, usize)| -> Vec<usize> {
        (ai..ai + BLOCK_SIZE)
            .flat_map(|i| (aj..aj + BLOCK_SIZE).map(move |j| i * n + j))
            .collect()
    };
    let input: Vec<usize> = anchors[..n_input]
        .iter()
        .flat_map(|&a| block_indices(a))
        .collect();
    let target: Vec<usize> = anchors[n_input..]
        .iter()
        .flat_map(|&a| block_indices(a))
        .collect();
    Ok(MaskPair {
        input: Mask::from_indices(n, &input),
        target: Mask::from_indices(n, &target),
    })
}

/// Mask pair under a protocol, drawing from the caller's generator.
pub fn sample_pair(protocol: MaskProtocol, n: usize, rng: &mut impl Rng) -> Result<MaskPair> {
    match protocol {
        MaskProtocol::Random {
            density,
            overlap_fraction,
        } => sample_random_pair(n, density, overlap_fraction, rng),
        MaskProtocol::Blocks { n_blocks } => sample_block_pair(n, n_blocks, rng),
    }
}

/// Mask pair for one instance under a protocol and regime. `Global` reuses
/// the stream of instance 0, so every instance sees the same pair.
pub fn sample_pair_for_instance(
    protocol: MaskProtocol,
    regime: MaskRegime,
    n: usize,
    master_seed: u64,
    instance_id: u64,
) -> Result<MaskPair> {
    let stream = match regime {
        MaskRegime::Global => 0,
        MaskRegime::Instance => instance_id,
    };
    let mut rng = stream_rng(master_seed, Domain::Mask, stream);
    sample_pair(protocol, n, &mut rng)
}
