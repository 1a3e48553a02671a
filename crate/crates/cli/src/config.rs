//! `--config` TOML file. Every key is optional; command-line flags win over
//! the environment, which wins over the file.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::ValueEnum;
use serde::Deserialize;

use crate::error::{CliResult, UsageContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    AllInOne,
    Server,
    Client,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    Loopback,
    Tcp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BuilderChoice {
    Federated,
    Baseline,
    Both,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub role: Option<Role>,
    pub transport: Option<TransportKind>,
    /// Client ids expected by a TCP server.
    pub nodes: Option<Vec<u32>>,
    pub listen: Option<String>,
    pub connect: Option<String>,
    pub id: Option<u32>,
    pub seed: Option<u64>,
    pub trees: Option<usize>,
    pub depth: Option<usize>,
    pub clients: Option<usize>,
    pub train_size: Option<usize>,
    pub builder: Option<BuilderChoice>,
    pub data: Option<Vec<PathBuf>>,
    pub out_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub timeout_secs: Option<u64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))
            .or_usage()?;
        toml::from_str(&text)
            .with_context(|| format!("invalid config file {}", path.display()))
            .or_usage()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_file() {
        let cfg: RunConfig = toml::from_str(
            r#"
            role = "server"
            transport = "tcp"
            nodes = [1, 2]
            listen = "127.0.0.1:7000"
            seed = 7
            trees = 25
            depth = 6
            builder = "both"
            data = ["a.txt", "b.txt"]
            timeout_secs = 5
            "#,
        )
        .unwrap();
        assert_eq!(cfg.role, Some(Role::Server));
        assert_eq!(cfg.transport, Some(TransportKind::Tcp));
        assert_eq!(cfg.nodes, Some(vec![1, 2]));
        assert_eq!(cfg.builder, Some(BuilderChoice::Both));
        assert_eq!(cfg.data.unwrap().len(), 2);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(toml::from_str::<RunConfig>("sede = 3").is_err());
        assert!(toml::from_str::<RunConfig>("role = \"peer\"").is_err());
    }
}
