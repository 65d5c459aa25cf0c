use std::path::Path;

use kato_core::zoo::ScenarioConfig;

use crate::CliError;

/// Parses and validates a scenario. `origin` names the source in errors.
pub fn parse_scenario(text: &str, origin: &str) -> Result<ScenarioConfig, CliError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Config {
        path: origin.to_string(),
        message: e.to_string().trim_end().to_string(),
    })?;
    cfg.validate().map_err(|e| CliError::Config {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    Ok(cfg)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use kato_core::zoo::{ModelKind, Output};

    #[test]
    fn defaults_fill_in() {
        let cfg = parse_scenario("model = \"pure_birth\"\nrate = \"k+1\"\nladder = [10, 20]\n", "t").unwrap();
        assert_eq!(cfg.model, ModelKind::PureBirth);
        assert_eq!(cfg.lambda, vec![1.0]);
        assert_eq!(cfg.tol, 1e-12);
        assert_eq!(cfg.n_max, 10_000);
        assert_eq!(cfg.outputs, vec![Output::Diagnostics]);
    }

    #[test]
    fn errors_name_the_field() {
        let e = parse_scenario("model = \"pure_birth\"\nrate = \"-k\"\nladder = [10]\n", "t").unwrap_err();
        assert!(e.to_string().contains("`rate`"), "{e}");
        let e = parse_scenario("model = \"pure_birth\"\nrate = \"k\"\nladdr = [10]\n", "t").unwrap_err();
        assert!(e.to_string().contains("laddr"), "{e}");
        let e = parse_scenario("model = \"nope\"\n", "t").unwrap_err();
        assert!(e.to_string().contains("nope"), "{e}");
        let e = parse_scenario("model = \"pure_birth\"\nrate = \"k\"\nladder = [10]\nlambda = [-1.0]\n", "t").unwrap_err();
        assert!(e.to_string().contains("lambda"), "{e}");
    }
}
