use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tissue::{MAX_BODY_MASS_KG, MIN_BODY_MASS_KG};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrialKind {
    Familiarization,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub n_familiarization: usize,
    pub familiarization_mass: f64,
    pub test_masses: Vec<f64>,
    pub blocks: usize,
    pub rng_seed: u64,
    pub feedback_in_familiarization: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            n_familiarization: 3,
            familiarization_mass: 71.0,
            test_masses: vec![55.0, 85.0, 115.0],
            blocks: 4,
            rng_seed: 0,
            feedback_in_familiarization: true,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.test_masses.is_empty() {
            return Err(Error::Validation("test_masses must not be empty".into()));
        }
        let masses = self.test_masses.iter().chain(
            std::iter::once(&self.familiarization_mass).filter(|_| self.n_familiarization > 0),
        );
        for &m in masses {
            if !(MIN_BODY_MASS_KG..=MAX_BODY_MASS_KG).contains(&m) {
                return Err(Error::MassOutOfRange {
                    mass: m,
                    min: MIN_BODY_MASS_KG,
                    max: MAX_BODY_MASS_KG,
                });
            }
        }
        Ok(())
    }

    pub fn schedule_len(&self) -> usize {
        self.n_familiarization + self.blocks * self.test_masses.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledTrial {
    pub trial_index: usize,
    pub kind: TrialKind,
    pub body_mass: f64,
}

/// Familiarization trials first, then `blocks` shuffled permutations of the
/// test masses. Deterministic in `rng_seed`.
pub fn generate_schedule(config: &SessionConfig) -> Result<Vec<ScheduledTrial>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut masses: Vec<(TrialKind, f64)> = Vec::with_capacity(config.schedule_len());
    masses.extend(
        std::iter::repeat_n((TrialKind::Familiarization, config.familiarization_mass), config.n_familiarization),
    );
    for _ in 0..config.blocks {
        let mut block = config.test_masses.clone();
        block.shuffle(&mut rng);
        masses.extend(block.into_iter().map(|m| (TrialKind::Test, m)));
    }
    Ok(masses
        .into_iter()
        .enumerate()
        .map(|(trial_index, (kind, body_mass))| ScheduledTrial { trial_index, kind, body_mass })
        .collect())
}
