use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::artifacts::default_checkpoint_path;

/// Settings for `sonotext serve`, read from TOML and then overridden by
/// `SONOTEXT_*` environment variables (secrets belong there, not in the file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ServiceConfig {
    /// Directory that entry `audioPath`s are relative to.
    pub corpus_root: PathBuf,
    pub index_path: PathBuf,
    /// Defaults to `<indexPath>.ckpt`.
    pub checkpoint_path: Option<PathBuf>,
    pub listen: String,
    pub port: u16,
    pub caption_client_endpoint: Option<String>,
    pub caption_client_token: Option<String>,
    pub max_in_flight_client_calls: usize,
    pub desk_defaults: bool,
    /// When set, `/v1/admin/reload` requires `Authorization: Bearer <token>`.
    pub admin_token: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            corpus_root: PathBuf::from("."),
            index_path: PathBuf::from("index.embd"),
            checkpoint_path: None,
            listen: "127.0.0.1".into(),
            port: 8080,
            caption_client_endpoint: None,
            caption_client_token: None,
            max_in_flight_client_calls: 4,
            desk_defaults: true,
            admin_token: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Applies overrides from `vars` (normally `std::env::vars()`).
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        for (key, value) in vars {
            match key.as_str() {
                "SONOTEXT_CORPUS_ROOT" => self.corpus_root = value.into(),
                "SONOTEXT_INDEX_PATH" => self.index_path = value.into(),
                "SONOTEXT_CHECKPOINT_PATH" => self.checkpoint_path = Some(value.into()),
                "SONOTEXT_LISTEN" => self.listen = value,
                "SONOTEXT_PORT" => self.port = value.parse().context("SONOTEXT_PORT")?,
                "SONOTEXT_CAPTION_ENDPOINT" => self.caption_client_endpoint = Some(value),
                "SONOTEXT_CAPTION_TOKEN" => self.caption_client_token = Some(value),
                "SONOTEXT_ADMIN_TOKEN" => self.admin_token = Some(value),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.checkpoint_path
            .clone()
            .unwrap_or_else(|| default_checkpoint_path(&self.index_path))
    }

    pub fn socket_addr(&self) -> Result<SocketAddr> {
        format!("{}:{}", self.listen, self.port)
            .parse()
            .with_context(|| format!("bad listen address {}:{}", self.listen, self.port))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.corpus_root.is_dir() {
            bail!("corpusRoot {} is not a directory", self.corpus_root.display());
        }
        if self.max_in_flight_client_calls == 0 {
            bail!("maxInFlightClientCalls must be >= 1");
        }
        self.socket_addr()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_file() {
        let mut cfg = ServiceConfig::from_toml("indexPath = \"a.embd\"\nport = 9000\n").unwrap();
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.checkpoint(), PathBuf::from("a.embd.ckpt"));
        cfg.apply_env([
            ("SONOTEXT_PORT".to_string(), "9100".to_string()),
            ("SONOTEXT_ADMIN_TOKEN".to_string(), "s3cret".to_string()),
            ("HOME".to_string(), "/root".to_string()),
        ])
        .unwrap();
        assert_eq!(cfg.port, 9100);
        assert_eq!(cfg.admin_token.as_deref(), Some("s3cret"));
    }

    #[test]
    fn bad_port_is_rejected() {
        let mut cfg = ServiceConfig::default();
        assert!(cfg.apply_env([("SONOTEXT_PORT".to_string(), "99999".to_string())]).is_err());
        assert!(ServiceConfig::from_toml("port = -1").is_err());
    }

    #[test]
    fn validate_checks_corpus_root() {
        let cfg = ServiceConfig { corpus_root: "/definitely/not/here".into(), ..Default::default() };
        assert!(cfg.validate().is_err());
        let ok = ServiceConfig { corpus_root: std::env::temp_dir(), ..Default::default() };
        ok.validate().unwrap();
    }
}
