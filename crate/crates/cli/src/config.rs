//! Config file schema. One JSON document with a section per command; a
//! command reads only its own section. Command-line flags override the
//! section, which overrides the built-in defaults.

use fbcool::lti::{fig2_loop, LoopTag};
use fbcool::sim::SimConfig;
use fbcool::RationalTransferFunction;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub force_curve: Option<ForceCurveSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loop_check: Option<LoopSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_spectrum: Option<NoiseSpectrumSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<TemperatureSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimConfig>,
}

/// A reference loop by tag, or explicit ascending coefficients in the
/// normalized variable `s = iv/u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopSection {
    #[serde(rename = "loop")]
    pub tag: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub den: Option<Vec<f64>>,
}

impl Default for LoopSection {
    fn default() -> Self {
        LoopSection {
            tag: "a".into(),
            num: None,
            den: None,
        }
    }
}

impl LoopSection {
    pub fn build(&self) -> Result<RationalTransferFunction, CliError> {
        if self.tag.eq_ignore_ascii_case("custom") {
            let (Some(num), Some(den)) = (&self.num, &self.den) else {
                return Err(CliError::Validation(
                    "custom loop needs both num and den".into(),
                ));
            };
            for (name, p) in [("num", num), ("den", den)] {
                if p.is_empty() {
                    return Err(CliError::Validation(format!("{name} has no coefficients")));
                }
                // Coefficients are ascending, so a zero last entry claims a
                // degree the polynomial does not have.
                if *p.last().unwrap() == 0.0 && p.len() > 1 {
                    return Err(CliError::Validation(format!(
                        "{name} = {p:?}: the highest-order coefficient is zero (coefficients are ascending powers of s)"
                    )));
                }
            }
            return Ok(RationalTransferFunction::new(
                num.clone(),
                den.clone(),
                "custom",
            )?);
        }
        if self.num.is_some() || self.den.is_some() {
            return Err(CliError::Validation(
                "num/den are only used with loop = custom".into(),
            ));
        }
        let tag: LoopTag = self.tag.parse()?;
        Ok(fig2_loop(tag))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForceCurveSection {
    #[serde(flatten)]
    pub loop_spec: LoopSection,
    /// Largest v/u on the grid.
    pub vmax: f64,
    /// Grid intervals; the curve has `points + 1` rows.
    pub points: usize,
    /// Resonator slope.
    pub r: f64,
    /// Plot the curve even when the closed loop is unstable.
    pub analysis_only: bool,
}

impl Default for ForceCurveSection {
    fn default() -> Self {
        ForceCurveSection {
            loop_spec: LoopSection::default(),
            vmax: 40.0,
            points: 400,
            r: -1.0,
            analysis_only: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumSource {
    Shot,
    Thermal,
    Total,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpectrumSection {
    #[serde(flatten)]
    pub loop_spec: LoopSection,
    pub source: SpectrumSource,
    /// Unity-gain velocity scaling the loop, m/s.
    pub u: f64,
    /// m.
    pub lambda: f64,
    pub finesse: f64,
    /// Intracavity power, W.
    pub p_c: f64,
    pub q: f64,
    /// Other atoms in the mode.
    pub n: f64,
    pub zeta: f64,
    /// m/s.
    pub v_th: f64,
    /// rad/s.
    pub omega_max: f64,
    pub points: usize,
}

impl Default for NoiseSpectrumSection {
    fn default() -> Self {
        NoiseSpectrumSection {
            loop_spec: LoopSection::default(),
            source: SpectrumSource::Total,
            u: 0.02,
            lambda: 760e-9,
            finesse: 1e5,
            p_c: 1e-3,
            q: 1.0,
            n: 1e6,
            zeta: 1e-3,
            v_th: 1.0,
            omega_max: 1e7,
            points: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperatureSection {
    pub eta: f64,
    pub q: f64,
    pub mass_amu: f64,
    /// m.
    pub lambda: f64,
}

impl Default for TemperatureSection {
    fn default() -> Self {
        TemperatureSection {
            eta: 1.0,
            q: 1.0,
            mass_amu: fbcool::ensemble::CAH_MASS_AMU,
            lambda: fbcool::ensemble::CAH_LAMBDA,
        }
    }
}

/// Either presets by name, or one custom sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub presets: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomSample>,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            presets: fbcool::ensemble::PRESETS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            custom: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSample {
    pub label: String,
    pub n: f64,
    /// K.
    pub t: f64,
    pub mass_amu: f64,
    /// m.
    pub lambda: f64,
}
