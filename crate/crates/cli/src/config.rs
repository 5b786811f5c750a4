//! JSON sweep configuration. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use majolyap_core::circuit::{Boundary, CircuitParams};
use majolyap_core::lyapunov::Caps;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Spectrum,
    ChiConverged,
    ChiAtT,
    Entanglement,
    OracleCheck,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default)]
    pub base: u64,
    #[serde(default = "default_seed_count")]
    pub count: u64,
}

fn default_seed_count() -> u64 {
    1
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { base: 0, count: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapsConfig {
    pub warmup: usize,
    pub window: usize,
    pub max_steps: usize,
    pub tolerance: f64,
}

impl Default for CapsConfig {
    fn default() -> Self {
        let c = Caps::default();
        CapsConfig { warmup: c.warmup, window: c.window, max_steps: c.max_steps, tolerance: c.tolerance }
    }
}

impl From<CapsConfig> for Caps {
    fn from(c: CapsConfig) -> Self {
        Caps { warmup: c.warmup, window: c.window, max_steps: c.max_steps, tolerance: c.tolerance }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntanglementConfig {
    pub warmup: usize,
    pub window: usize,
}

impl Default for EntanglementConfig {
    fn default() -> Self {
        EntanglementConfig { warmup: 500, window: 500 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub protocol: Protocol,
    #[serde(rename = "L")]
    pub l: Vec<usize>,
    pub mu_o: Vec<f64>,
    /// Independent even-bond strength; `null` couples it as 1 − μ_o.
    #[serde(default)]
    pub mu_e: Option<f64>,
    #[serde(rename = "J", default)]
    pub j: f64,
    /// Defaults to PBC for the χ and oracle protocols, OBC otherwise.
    #[serde(default)]
    pub bc: Option<Boundary>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub caps: CapsConfig,
    /// Evaluation step of `chi_at_t`; `null` means T = L.
    #[serde(rename = "T_fixed", default)]
    pub t_fixed: Option<usize>,
    #[serde(default)]
    pub entanglement: EntanglementConfig,
    /// Steps per trajectory of `oracle_check`.
    #[serde(default = "default_oracle_steps")]
    pub oracle_steps: usize,
    #[serde(default)]
    pub write_records: bool,
}

fn default_bc(protocol: Protocol) -> Boundary {
    match protocol {
        Protocol::Spectrum | Protocol::Entanglement => Boundary::Open,
        Protocol::ChiConverged | Protocol::ChiAtT | Protocol::OracleCheck => Boundary::Periodic,
    }
}

fn default_oracle_steps() -> usize {
    10
}

/// 1-based line of the first occurrence of `"key"`, or 1.
fn line_of(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map_or(1, |i| i + 1)
}

impl SweepConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg: SweepConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config { line: e.line().max(1), message: e.to_string() })?;
        cfg.bc.get_or_insert(default_bc(cfg.protocol));
        cfg.validate().map_err(|(key, message)| CliError::Config { line: line_of(text, key), message })?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.l.is_empty() {
            return Err(("L", "L grid is empty".into()));
        }
        if self.mu_o.is_empty() {
            return Err(("mu_o", "mu_o grid is empty".into()));
        }
        if self.seeds.count == 0 {
            return Err(("seeds", "seeds.count must be at least 1".into()));
        }
        for &l in &self.l {
            if l == 0 {
                return Err(("L", "L must be positive".into()));
            }
            match self.protocol {
                Protocol::Entanglement if l % 4 != 0 => return Err(("L", format!("entanglement quarters need L divisible by 4, got {l}"))),
                Protocol::OracleCheck if l > 4 => return Err(("L", format!("oracle check supports L ≤ 4, got {l}"))),
                _ => {}
            }
            for &mu in &self.mu_o {
                self.params(l, mu).map_err(|e| ("mu_o", e.to_string()))?;
            }
        }
        if matches!(self.protocol, Protocol::ChiConverged | Protocol::ChiAtT) && self.bc() != Boundary::Periodic {
            return Err(("bc", "chi protocols need bc = PBC; the APBC partner is derived".into()));
        }
        if self.t_fixed == Some(0) {
            return Err(("T_fixed", "T_fixed must be positive".into()));
        }
        Caps::from(self.caps).validate().map_err(|e| ("caps", e.to_string()))?;
        if self.entanglement.window == 0 {
            return Err(("entanglement", "entanglement.window must be positive".into()));
        }
        if self.oracle_steps == 0 {
            return Err(("oracle_steps", "oracle_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn bc(&self) -> Boundary {
        self.bc.unwrap_or(default_bc(self.protocol))
    }

    pub fn params(&self, l: usize, mu_o: f64) -> majolyap_core::Result<CircuitParams> {
        match self.mu_e {
            Some(mu_e) => CircuitParams::independent(l, self.j, self.bc(), mu_o, mu_e),
            None => CircuitParams::new(l, self.j, self.bc(), mu_o),
        }
    }

    /// (L, μ_o) cells in grid order.
    pub fn cells(&self) -> Vec<(usize, f64)> {
        self.l.iter().flat_map(|&l| self.mu_o.iter().map(move |&mu| (l, mu))).collect()
    }
}
