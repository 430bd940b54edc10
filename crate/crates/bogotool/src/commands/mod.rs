//! Subcommand implementations. Each appends records to a [`Reporter`].

mod bogovskii;
mod cz;
mod pstokes;
mod verify;
mod whitney;

use std::fmt;

use bogotool_core::NFunctionPD;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cli::{Cli, Command, NFuncArgs};
use crate::report::Reporter;

/// An argument outside its documented range.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

macro_rules! usage {
    ($($t:tt)*) => {
        return Err(anyhow::Error::new($crate::commands::Usage(format!($($t)*))))
    };
}
pub(crate) use usage;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn nfunction(a: &NFuncArgs) -> anyhow::Result<NFunctionPD> {
    if !(a.p > 1.0 && a.p.is_finite()) {
        usage!("--p must be finite and greater than 1, got {}", a.p);
    }
    if !(a.delta >= 0.0 && a.delta.is_finite()) {
        usage!("--delta must be finite and nonnegative, got {}", a.delta);
    }
    Ok(NFunctionPD::new(a.p, a.delta)?)
}

pub(crate) fn positive(name: &str, v: f64) -> anyhow::Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        usage!("--{name} must be positive and finite, got {v}");
    }
    Ok(())
}

pub(crate) fn at_least(name: &str, v: usize, min: usize) -> anyhow::Result<()> {
    if v < min {
        usage!("--{name} must be at least {min}, got {v}");
    }
    Ok(())
}

/// Runs the selected experiment.
pub fn run(cli: &Cli) -> anyhow::Result<Reporter> {
    let mut rep = Reporter::new(cli.timing);
    let seed = cli.seed;
    match &cli.command {
        Command::Verify(v) => verify::run(v, seed, &mut rep)?,
        Command::Whitney(a) => whitney::run(a, seed, &mut rep)?,
        Command::Cz(c) => cz::run(c, seed, &mut rep)?,
        Command::Bogovskii(b) => bogovskii::run(b, &mut rep)?,
        Command::Pstokes(p) => pstokes::run(p, seed, &mut rep)?,
    }
    Ok(rep)
}
