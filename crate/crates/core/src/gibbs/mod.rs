//! Block Gibbs sampling for negative binomial process topic models.
//!
//! All variants share the assignment update `P(z_ji = k) ∝ φ_{v_ji k} θ_jk`
//! and the topic update `φ_k ~ Dir(η + n_{1·k}, ..., η + n_{V·k})`. They differ
//! in how the gamma prior on `θ_jk` is parameterized, and therefore in the
//! CRT-augmented updates of the dispersion and probability parameters that
//! run between those two steps.

mod prior;
mod state;
mod sweep;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use prior::{draw_data, draw_prior};
pub use state::{warmup_dispersion, Diagnostics, ModelState, TokenData};
pub use sweep::{init_schedule, initialize, predictive_weights, sweep, unpin};

use crate::error::{NbpError, Result};

/// Model variants. Each fixes which of `r_k`, `r_j`, `p_k`, `p_j`, `π_k` are
/// inferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `θ_jk ≡ r_k`, one shared `p`.
    Nb,
    /// `θ_jk ~ Gamma(r_j, p_j/(1-p_j))`.
    NbLda,
    /// gamma-NB with `p_j ≡ 0.5`.
    NbHdp,
    /// `θ_jk ~ Gamma(r_k b_jk, 1)`, `b_jk ~ Bernoulli(π_k)`.
    NbFtm,
    /// `θ_jk ~ Gamma(1, p_k/(1-p_k))`.
    BetaGeometric,
    /// `θ_jk ~ Gamma(r_j, p_k/(1-p_k))`.
    BetaNb,
    /// `θ_jk ~ Gamma(r_k, p_j/(1-p_j))`.
    GammaNb,
    /// `θ_jk ~ Gamma(r_k, p_k/(1-p_k))`.
    MarkedBetaNb,
    /// LDA as Poisson factor analysis: `θ_j ~ Dir(α/K, ..., α/K)`.
    DirPfa,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Nb,
        Variant::NbLda,
        Variant::NbHdp,
        Variant::NbFtm,
        Variant::BetaGeometric,
        Variant::BetaNb,
        Variant::GammaNb,
        Variant::MarkedBetaNb,
        Variant::DirPfa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Nb => "nb",
            Variant::NbLda => "nb-lda",
            Variant::NbHdp => "nb-hdp",
            Variant::NbFtm => "nb-ftm",
            Variant::BetaGeometric => "beta-geometric",
            Variant::BetaNb => "beta-nb",
            Variant::GammaNb => "gamma-nb",
            Variant::MarkedBetaNb => "marked-beta-nb",
            Variant::DirPfa => "dir-pfa",
        }
    }

    /// Whether the variant carries one dispersion per atom (`r_k`).
    pub fn has_atom_dispersion(self) -> bool {
        matches!(
            self,
            Variant::Nb | Variant::NbHdp | Variant::NbFtm | Variant::GammaNb | Variant::MarkedBetaNb
        )
    }

    /// Whether the variant carries one dispersion per document (`r_j`).
    pub fn has_group_dispersion(self) -> bool {
        matches!(self, Variant::NbLda | Variant::BetaNb)
    }

    /// Whether the NB probability parameter is per atom (`p_k`).
    pub fn has_atom_probability(self) -> bool {
        matches!(self, Variant::BetaGeometric | Variant::BetaNb | Variant::MarkedBetaNb)
    }

    /// Whether the NB probability parameter is a free per-document `p_j`.
    pub fn has_group_probability(self) -> bool {
        matches!(self, Variant::NbLda | Variant::GammaNb)
    }

    /// Whether `γ0` is a live parameter.
    pub fn uses_gamma0(self) -> bool {
        !matches!(self, Variant::BetaGeometric | Variant::DirPfa)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = NbpError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| {
                let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                NbpError::Config(format!("unknown variant {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Hyperparameters shared by all variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Beta prior on NB probability parameters.
    pub a0: f64,
    pub b0: f64,
    /// Gamma prior on the total mass `γ0` (shape `e0`, rate `f0`).
    pub e0: f64,
    pub f0: f64,
    /// Rate of the gamma process.
    pub c: f64,
    /// Topic Dirichlet concentration.
    pub eta: f64,
    /// Truncation level.
    pub k: usize,
    /// Concentration of the beta process behind `π_k` in the zero-inflated
    /// variant. Kept apart from `c`, which is the gamma process rate.
    pub beta_c: f64,
    /// Mass of that beta process; `π_k ~ Beta(beta_c·beta_mass/K, beta_c·(1 - beta_mass/K))`.
    pub beta_mass: f64,
    /// Total Dirichlet concentration for the Dir-PFA baseline.
    pub lda_alpha: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            a0: 0.01,
            b0: 0.01,
            e0: 0.01,
            f0: 0.01,
            c: 1.0,
            eta: 0.05,
            k: 400,
            beta_c: 1.0,
            beta_mass: 1.0,
            lda_alpha: 50.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("a0", self.a0),
            ("b0", self.b0),
            ("e0", self.e0),
            ("f0", self.f0),
            ("c", self.c),
            ("eta", self.eta),
            ("beta_c", self.beta_c),
            ("beta_mass", self.beta_mass),
            ("lda_alpha", self.lda_alpha),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(NbpError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.k == 0 {
            return Err(NbpError::Config("K must be at least 1".into()));
        }
        if self.k > u32::MAX as usize {
            return Err(NbpError::Config("K does not fit in 32 bits".into()));
        }
        Ok(())
    }

    /// Extra checks for a specific variant.
    pub fn validate_for(&self, variant: Variant) -> Result<()> {
        self.validate()?;
        if variant == Variant::NbFtm && self.beta_mass >= self.k as f64 {
            return Err(NbpError::Config(format!(
                "beta_mass ({}) must be below K ({}) for the zero-inflated variant",
                self.beta_mass, self.k
            )));
        }
        Ok(())
    }

    pub(crate) fn pi_prior(&self) -> (f64, f64) {
        let frac = self.beta_mass / self.k as f64;
        (self.beta_c * frac, self.beta_c * (1.0 - frac))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            let js = serde_json::to_string(&v).unwrap();
            assert_eq!(js, format!("\"{}\"", v.name()));
        }
        assert_eq!("Gamma_NB".parse::<Variant>().unwrap(), Variant::GammaNb);
        assert!(matches!("crf-hdp".parse::<Variant>(), Err(NbpError::Config(_))));
    }

    #[test]
    fn default_hyperparams_validate() {
        let hp = Hyperparams::default();
        hp.validate().unwrap();
        assert_eq!((hp.a0, hp.b0, hp.e0, hp.f0, hp.c, hp.eta), (0.01, 0.01, 0.01, 0.01, 1.0, 0.05));
        let bad = Hyperparams { eta: 0.0, ..hp.clone() };
        assert!(bad.validate().is_err());
        let bad = Hyperparams { k: 0, ..hp.clone() };
        assert!(bad.validate().is_err());
        let ftm = Hyperparams { k: 1, ..hp };
        assert!(ftm.validate_for(Variant::NbFtm).is_err());
        assert!(ftm.validate_for(Variant::GammaNb).is_ok());
    }
}
