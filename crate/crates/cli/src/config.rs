//! Settings shared by all subcommands. Precedence: command-line flags,
//! then `GAITWAY_*` environment variables, then `gaitway.toml`, then
//! defaults.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:7878";
pub const DEFAULT_DATA_DIR: &str = "gaitway-data";
pub const CONFIG_FILE: &str = "gaitway.toml";

/// Keys accepted in `gaitway.toml`; each also has a `GAITWAY_<KEY>` env var.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data_dir: Option<PathBuf>,
    pub listen: Option<String>,
    pub seed: Option<u64>,
    pub server: Option<String>,
    pub project: Option<String>,
    pub secret: Option<String>,
    pub secret_file: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
    pub token_ttl_s: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let body = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        toml::from_str(&body).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub data_dir: PathBuf,
    pub listen: SocketAddr,
    pub seed: u64,
    /// True when the seed was given rather than defaulted.
    pub seed_given: bool,
    pub server: String,
    pub project: Option<String>,
    pub secret: Option<String>,
    pub secret_file: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
    pub token_ttl_s: Option<u64>,
}

/// Resolves settings from flags (already parsed into a [`FileConfig`]
/// shape), an environment lookup and an optional config file.
pub fn resolve(flags: &FileConfig, env: impl Fn(&str) -> Option<String>, file: &FileConfig) -> Result<Settings, CliError> {
    fn pick<T: Clone>(flag: &Option<T>, env: Option<T>, file: &Option<T>) -> Option<T> {
        flag.clone().or(env).or_else(|| file.clone())
    }
    let env_path = |k: &str| env(k).map(PathBuf::from);
    let env_u64 = |k: &str| -> Result<Option<u64>, CliError> {
        env(k)
            .map(|v| v.parse().map_err(|_| CliError::Usage(format!("{k} must be an unsigned integer, got {v:?}"))))
            .transpose()
    };
    let listen_raw = pick(&flags.listen, env("GAITWAY_LISTEN"), &file.listen).unwrap_or_else(|| DEFAULT_LISTEN.into());
    let listen: SocketAddr = listen_raw
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid listen address {listen_raw:?}")))?;
    let seed = pick(&flags.seed, env_u64("GAITWAY_SEED")?, &file.seed);
    let server = pick(&flags.server, env("GAITWAY_SERVER"), &file.server).unwrap_or_else(|| listen.to_string());
    Ok(Settings {
        data_dir: pick(&flags.data_dir, env_path("GAITWAY_DATA_DIR"), &file.data_dir)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR)),
        listen,
        seed: seed.unwrap_or(0),
        seed_given: seed.is_some(),
        server,
        project: pick(&flags.project, env("GAITWAY_PROJECT"), &file.project),
        secret: pick(&flags.secret, env("GAITWAY_SECRET"), &file.secret),
        secret_file: pick(&flags.secret_file, env_path("GAITWAY_SECRET_FILE"), &file.secret_file),
        ui_dir: pick(&flags.ui_dir, env_path("GAITWAY_UI_DIR"), &file.ui_dir),
        token_ttl_s: pick(&flags.token_ttl_s, env_u64("GAITWAY_TOKEN_TTL_S")?, &file.token_ttl_s),
    })
}
