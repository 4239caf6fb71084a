//! Run configurations and the four standard cases.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::characteristic::{critical_point, CharacteristicPoint};
use crate::convolution::GridSpec;
use crate::error::{require, Result};
use crate::evolution::EvolveConfig;
use crate::model::{ModelParams, Regime, RegimeReport};
use crate::waveprofile::ProfileConfig;

/// Which wave speed a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpeedMode {
    #[default]
    Critical,
    Explicit(f64),
}

/// Initial perturbation `eps f_gamma` added to the profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Perturbation {
    pub eps: f64,
    pub gamma: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self { eps: 1.0, gamma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub dir: PathBuf,
    pub snapshot_times: Vec<f64>,
    /// Emit an SVG line chart next to each CSV series.
    pub charts: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            snapshot_times: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            charts: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub case_label: String,
    pub params: ModelParams,
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    #[serde(default)]
    pub profile: ProfileConfig,
    #[serde(default)]
    pub evolve: EvolveConfig,
    #[serde(default)]
    pub c_mode: SpeedMode,
    #[serde(default)]
    pub perturbation: Perturbation,
    #[serde(default)]
    pub outputs: Outputs,
}

fn default_grid() -> GridSpec {
    GridSpec::new(60.0, 0.05).expect("default grid is valid")
}

/// A standard case with its expected critical pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub case: u8,
    pub p: f64,
    pub delay: f64,
    pub c_star: f64,
    pub lambda_star: f64,
}

pub const PRESETS: [Preset; 4] = [
    Preset { case: 1, p: 5.0, delay: 0.2, c_star: 5.1041202, lambda_star: 0.7801950 },
    Preset { case: 2, p: 5.0, delay: 2.0, c_star: 1.3108958, lambda_star: 0.7548876 },
    Preset { case: 3, p: 10.0, delay: 0.2, c_star: 7.1531405, lambda_star: 0.9315197 },
    Preset { case: 4, p: 10.0, delay: 2.0, c_star: 1.6178475, lambda_star: 0.8586847 },
];

pub fn preset(case: u8) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.case == case)
}

impl ScenarioConfig {
    pub fn for_case(case: u8) -> Option<Self> {
        let preset = preset(case)?;
        Some(Self {
            case_label: format!("case{case}"),
            params: ModelParams::normalized(preset.p, preset.delay),
            grid: default_grid(),
            profile: ProfileConfig::default(),
            evolve: EvolveConfig::default(),
            c_mode: SpeedMode::Critical,
            perturbation: Perturbation::default(),
            outputs: Outputs::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.evolve.validate()?;
        require(self.profile.tol > 0.0, "profile.tol", "must be positive")?;
        require(
            self.profile.damping > 0.0 && self.profile.damping <= 1.0,
            "profile.damping",
            "must lie in (0, 1]",
        )?;
        require(self.perturbation.gamma > 0.0, "perturbation.gamma", "must be positive")?;
        if let SpeedMode::Explicit(c) = self.c_mode {
            require(c.is_finite() && c > 0.0, "c_mode.explicit", "must be a positive speed")?;
        }
        for &t in &self.outputs.snapshot_times {
            require(t >= 0.0 && t <= self.evolve.t_end + 1e-12, "outputs.snapshot_times", "must lie in [0, t_end]")?;
        }
        Ok(())
    }

    /// Speed of the run together with the critical point of its parameters.
    pub fn speed(&self) -> Result<(f64, CharacteristicPoint)> {
        let critical = critical_point(&self.params)?;
        let c = match self.c_mode {
            SpeedMode::Critical => critical.c,
            SpeedMode::Explicit(c) => c,
        };
        Ok((c, critical))
    }
}

/// Label of the `p / delta` zone.
pub fn zone_of_p(params: &ModelParams) -> &'static str {
    let ratio = params.p / params.delta;
    let e = std::f64::consts::E;
    if ratio <= 1.0 {
        "p/d<=1"
    } else if ratio <= e {
        "p/d in (1,e]"
    } else if ratio <= e * e {
        "p/d in (e,e^2]"
    } else {
        "p/d>e^2"
    }
}

/// Label of the delay zone relative to the regime thresholds.
pub fn zone_of_delay(report: &RegimeReport, delay: f64) -> String {
    match (report.regime, report.r_upper) {
        (Regime::MonotoneWave, _) if report.r_lower.is_finite() => {
            format!("r<r_lower({:.3})", report.r_lower)
        }
        (Regime::MonotoneWave, _) => "any r".to_string(),
        (Regime::OscillatoryWave, Some(upper)) => format!("r_lower<r<r_upper({upper:.3})"),
        (Regime::OscillatoryWave, None) => format!("r>r_lower({:.3})", report.r_lower),
        (Regime::NoWaveExpected, Some(upper)) => format!("r>=r_upper({upper:.3})"),
        (Regime::NoWaveExpected, None) => format!("r={delay}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::regime;

    #[test]
    fn presets_validate() {
        for case in 1..=4 {
            let config = ScenarioConfig::for_case(case).unwrap();
            config.validate().unwrap();
            assert_eq!(config.grid.n, 2401);
        }
        assert!(ScenarioConfig::for_case(5).is_none());
    }

    #[test]
    fn zones_follow_the_thresholds() {
        let labels: Vec<String> = PRESETS
            .iter()
            .map(|p| {
                let params = ModelParams::normalized(p.p, p.delay);
                zone_of_delay(&regime(&params).unwrap(), p.delay)
            })
            .collect();
        assert_eq!(labels[0], "r<r_lower(0.403)");
        assert_eq!(labels[1], "r>r_lower(0.403)");
        assert_eq!(labels[2], "r<r_lower(0.225)");
        assert_eq!(labels[3], "r_lower<r<r_upper(2.930)");
        assert_eq!(zone_of_p(&ModelParams::normalized(5.0, 1.0)), "p/d in (e,e^2]");
        assert_eq!(zone_of_p(&ModelParams::normalized(10.0, 1.0)), "p/d>e^2");
    }

    #[test]
    fn explicit_speed_must_be_positive() {
        let mut config = ScenarioConfig::for_case(2).unwrap();
        config.c_mode = SpeedMode::Explicit(-1.0);
        assert!(config.validate().is_err());
    }
}
