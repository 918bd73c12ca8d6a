use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Network architecture: `z(x) = V φ(Wx)` or `z(x) = V[(Px) ⊙ φ(Wx)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Plain,
    Gated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    ReLU,
    GELU,
    SiLU,
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Plain => "plain",
            Arch::Gated => "gated",
        })
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::ReLU => "relu",
            Activation::GELU => "gelu",
            Activation::SiLU => "silu",
        })
    }
}

/// Dimensions, architecture, initialization and optimizer settings of one
/// experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Sample count.
    pub n: usize,
    /// Input dimension.
    pub d: usize,
    /// Hidden width.
    pub m: usize,
    pub arch: Arch,
    pub activation: Activation,
    pub sigma_w2: f64,
    pub sigma_p2: f64,
    pub sigma_v2: f64,
    /// Learning rate.
    pub eta: f64,
    pub steps: usize,
    pub master_seed: u64,
}

impl ExperimentConfig {
    /// LeCun preset: `σ_w² = σ_p² = 1/d`, `σ_v² = 1/m`, ReLU, plain.
    pub fn lecun(n: usize, d: usize, m: usize) -> Result<Self> {
        let cfg = Self {
            n,
            d,
            m,
            arch: Arch::Plain,
            activation: Activation::ReLU,
            sigma_w2: 1.0 / d.max(1) as f64,
            sigma_p2: 1.0 / d.max(1) as f64,
            sigma_v2: 1.0 / m.max(1) as f64,
            eta: 1e-3,
            steps: 0,
            master_seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_arch(mut self, arch: Arch) -> Self {
        self.arch = arch;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::arg(format!("n must be >= 2 (got {})", self.n)));
        }
        if self.d < 1 {
            return Err(Error::arg("d must be >= 1"));
        }
        if self.m < 1 {
            return Err(Error::arg("m must be >= 1"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::arg(format!("eta must be > 0 (got {})", self.eta)));
        }
        for (name, v) in [
            ("sigma_w2", self.sigma_w2),
            ("sigma_p2", self.sigma_p2),
            ("sigma_v2", self.sigma_v2),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::arg(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// True when the variances are exactly the LeCun preset for `(d, m)`.
    pub fn is_lecun(&self) -> bool {
        self.sigma_w2 == 1.0 / self.d as f64
            && self.sigma_p2 == 1.0 / self.d as f64
            && self.sigma_v2 == 1.0 / self.m as f64
    }
}
