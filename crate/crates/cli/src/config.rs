//! Service configuration: a flat `key = value` file, overridden by
//! `SAREWARD_<KEY>` environment variables, overridden by command-line flags.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use spatial_reward::scorer::{BackendConfig, BackendMode, PromptType};

use crate::error::{CliError, CliResult};

pub const ENV_PREFIX: &str = "SAREWARD_";

pub const KEYS: [&str; 9] = [
    "listen",
    "data_dir",
    "weights_path",
    "auth_token",
    "backend_mode",
    "backend_endpoint",
    "backend_timeout_ms",
    "backend_max_retries",
    "prompt_type",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    pub weights_path: PathBuf,
    pub auth_token: Option<String>,
    pub backend: BackendConfig,
}

impl ServiceConfig {
    /// Defaults for everything except the data directory.
    pub fn local(data_dir: impl Into<PathBuf>) -> Self {
        let data_dir = data_dir.into();
        Self {
            listen: "127.0.0.1:8080".parse().expect("valid literal"),
            weights_path: data_dir.join("weights.json"),
            data_dir,
            auth_token: None,
            backend: BackendConfig::default(),
        }
    }
}

/// Accumulates settings from successive sources; later sources win.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> CliResult<()> {
        if !KEYS.contains(&key) {
            return Err(CliError::input(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        self.load_str(&text)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }

    pub fn load_str(&mut self, text: &str) -> CliResult<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::input(format!("line {}: expected key = value", i + 1)))?;
            let value = value.trim().trim_matches('"');
            self.set(key.trim(), value)
                .map_err(|e| CliError::input(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    /// Applies `SAREWARD_*` variables from the given environment.
    pub fn load_env<I, K, V>(&mut self, vars: I) -> CliResult<()>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        for (k, v) in vars {
            let Some(key) = k.as_ref().strip_prefix(ENV_PREFIX) else { continue };
            let key = key.to_ascii_lowercase();
            if KEYS.contains(&key.as_str()) {
                self.set(&key, v)?;
            }
        }
        Ok(())
    }

    pub fn build(&self) -> CliResult<ServiceConfig> {
        let get = |k: &str| self.values.get(k).map(String::as_str);
        let data_dir = PathBuf::from(get("data_dir").unwrap_or("data"));
        let mut config = ServiceConfig::local(&data_dir);
        if let Some(v) = get("listen") {
            config.listen = v
                .parse()
                .map_err(|e| CliError::input(format!("listen {v:?}: {e}")))?;
        }
        if let Some(v) = get("weights_path") {
            config.weights_path = PathBuf::from(v);
        }
        config.auth_token = get("auth_token").filter(|t| !t.is_empty()).map(str::to_string);

        let backend = &mut config.backend;
        backend.mode = match get("backend_mode").unwrap_or("offline") {
            "offline" => BackendMode::FileOffline,
            "remote" => BackendMode::RemoteService,
            other => {
                return Err(CliError::input(format!(
                    "backend_mode must be offline or remote, got {other:?}"
                )))
            }
        };
        backend.endpoint = get("backend_endpoint").filter(|e| !e.is_empty()).map(str::to_string);
        if let Some(v) = get("backend_timeout_ms") {
            let ms: u64 = v
                .parse()
                .map_err(|e| CliError::input(format!("backend_timeout_ms {v:?}: {e}")))?;
            backend.timeout = Duration::from_millis(ms);
        }
        if let Some(v) = get("backend_max_retries") {
            backend.max_retries = v
                .parse()
                .map_err(|e| CliError::input(format!("backend_max_retries {v:?}: {e}")))?;
        }
        if let Some(v) = get("prompt_type") {
            let p: PromptType = v.parse().map_err(CliError::input)?;
            backend.prompt_type = p;
        }
        backend.validate()?;
        Ok(config)
    }
}
