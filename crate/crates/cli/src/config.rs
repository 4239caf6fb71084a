use std::path::{Path, PathBuf};

use blowfly::scenario::ScenarioConfig;

use crate::error::CliError;

/// Command-line settings that override the scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub case: Option<u8>,
    pub out: Option<PathBuf>,
    pub mu: Option<f64>,
    pub no_viscosity: bool,
}

/// Config text embedded in an output file header: the `# ` lines of a
/// leading comment block that also carries `#!` metadata.
fn embedded_config(text: &str) -> Option<String> {
    let block: Vec<&str> = text.lines().take_while(|l| l.starts_with('#')).collect();
    if !block.iter().any(|l| l.starts_with("#!")) {
        return None;
    }
    Some(block.iter().filter_map(|l| l.strip_prefix("# ")).collect::<Vec<_>>().join("\n"))
}

pub fn parse(text: &str, origin: &Path) -> Result<ScenarioConfig, CliError> {
    let source = embedded_config(text).unwrap_or_else(|| text.to_string());
    toml::from_str(&source).map_err(|e| CliError::Config(format!("{}: {}", origin.display(), e)))
}

pub fn load(overrides: &Overrides) -> Result<ScenarioConfig, CliError> {
    let mut config = match &overrides.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            parse(&text, path)?
        }
        None => {
            let case = overrides.case.unwrap_or(1);
            ScenarioConfig::for_case(case).ok_or_else(|| CliError::Config(format!("unknown case {case}")))?
        }
    };
    if let Some(out) = &overrides.out {
        config.outputs.dir = out.clone();
    }
    if let Some(mu) = overrides.mu {
        config.evolve.mu = mu;
    }
    if overrides.no_viscosity {
        config.evolve.mu = 0.0;
    }
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}

/// Defaults as TOML, with a comment above each section.
pub fn documented_defaults(case: u8) -> Result<String, CliError> {
    let config = ScenarioConfig::for_case(case).ok_or_else(|| CliError::Config(format!("unknown case {case}")))?;
    let text = toml::to_string(&config).map_err(|e| CliError::Config(e.to_string()))?;
    let notes = [
        ("[params]", "model coefficients: D, delta, p, a, delay r, kernel variances alpha/beta, viscosity mu of the profile scheme"),
        ("[grid]", "domain [-half_width, half_width] with spacing dxi"),
        ("[profile]", "fixed-point profile iteration: stop when the sup change drops below tol * dxi"),
        ("[evolve]", "backward-Euler time stepping; dt is lowered so that delay / dt is an integer"),
        ("[perturbation]", "initial history phi + eps * f_gamma, constant in s"),
        ("[outputs]", "output directory, snapshot times and SVG charts"),
        ("[c_mode]", "wave speed: \"critical\" or { explicit = c }"),
    ];
    let mut out = String::from("# c_mode = \"critical\" uses c*; set c_mode = { explicit = 1.6 } for a fixed speed\n");
    for line in text.lines() {
        if let Some((_, note)) = notes.iter().find(|(h, _)| *h == line.trim()) {
            out.push_str(&format!("\n# {note}\n"));
        }
        out.push_str(line);
        out.push('\n');
    }
    Ok(out)
}
