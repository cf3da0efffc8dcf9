//! Retain/reinitialize masks over parameter blocks.
//!
//! Bit `i` of a genome decides the fate of block `i` when the converged
//! network is remapped: `1` keeps the trained values, `0` redraws the block
//! from its initializer.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::nn::{InitSpec, Provenance, WeightSnapshot};
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Genome {
    bits: Vec<bool>,
}

impl Genome {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn ones(n: usize) -> Self {
        Self { bits: vec![true; n] }
    }

    pub fn zeros(n: usize) -> Self {
        Self { bits: vec![false; n] }
    }

    pub fn random(n: usize, rng: &mut Rng) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("genome length must be at least 1"));
        }
        Ok(Self {
            bits: (0..n).map(|_| rng.random_bool(0.5)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn retains(&self, block: usize) -> bool {
        self.bits[block]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Number of positions where the two genomes differ.
    pub fn differing_bits(&self, other: &Genome) -> Result<usize> {
        if self.len() != other.len() {
            return Err(Error::shape(format!(
                "genome lengths differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count())
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Genome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::data(format!("invalid genome character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Genome::from_bits)
    }
}

/// A remapped snapshot plus which blocks were kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Remapped {
    pub snapshot: WeightSnapshot,
    pub retained: Vec<bool>,
}

impl Remapped {
    /// Per-block learning rates: `lr_retained` for kept blocks, `lr_reinit` for redrawn ones.
    pub fn learning_rates(&self, lr_retained: f64, lr_reinit: f64) -> Vec<f64> {
        self.retained
            .iter()
            .map(|&kept| if kept { lr_retained } else { lr_reinit })
            .collect()
    }
}

/// Applies a genome to converged weights. Redrawn blocks consume `rng` in block
/// order using the initializer recorded in `inits`.
pub fn apply_genome(base: &WeightSnapshot, inits: &[InitSpec], genome: &Genome, rng: &mut Rng) -> Result<Remapped> {
    if genome.len() != base.block_count() || inits.len() != base.block_count() {
        return Err(Error::shape(format!(
            "genome of length {} applied to {} blocks ({} initializers)",
            genome.len(),
            base.block_count(),
            inits.len()
        )));
    }
    let mut snapshot = base.clone();
    snapshot.provenance = Provenance::AlphaPlusOne;
    for ((block, init), &keep) in snapshot.blocks.iter_mut().zip(inits).zip(genome.bits()) {
        if !keep {
            init.fill(&mut block.values, rng);
        }
    }
    Ok(Remapped {
        snapshot,
        retained: genome.bits().to_vec(),
    })
}
