//! Flat key=value config files and flag resolution. Precedence is
//! command-line flag, then config file, then built-in default; seeds have
//! no default and must come from one of the first two.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or config; exit code 1.
    Usage(String),
    /// Bad or missing data; exit code 2.
    Data(String),
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => write!(f, "{m}"),
        }
    }
}

macro_rules! data_error_from {
    ($($ty:ty),+ $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Data(e.to_string())
            }
        })+
    };
}

data_error_from!(
    std::io::Error,
    serde_json::Error,
    imu_auth::ingest::IngestError,
    imu_auth::preprocess::PreprocessError,
    imu_auth::features::FeatureError,
    imu_auth::pipeline::PipelineError,
    imu_auth::nn::checkpoint::CheckpointError,
    imu_auth::eval::EvalError,
);

/// Parsed config file: `key = value` lines, `#` comments, blank lines
/// ignored. Keys are the long flag names with dashes.
#[derive(Debug, Default)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config {} line {}: expected key = value, got {raw:?}",
                    path.display(),
                    i + 1
                )));
            };
            if values.insert(key.trim().to_string(), value.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!(
                    "config {} line {}: duplicate key {:?}",
                    path.display(),
                    i + 1,
                    key.trim()
                )));
            }
        }
        Ok(FileConfig { values })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                CliError::Usage(format!("config key {key}: cannot parse {raw:?}"))
            }),
        }
    }

    /// Flag wins over file; file wins over the default.
    pub fn resolve<T: FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, CliError> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }

    /// Flag wins over file; absence of both is an error naming the key.
    pub fn resolve_required<T: FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
        what: &str,
    ) -> Result<T, CliError> {
        match flag {
            Some(v) => Ok(v),
            None => self.get(key)?.ok_or_else(|| {
                CliError::Usage(format!(
                    "missing {what}; pass --{key} or set {key} in the config file"
                ))
            }),
        }
    }

    /// File value if present; there is no default.
    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.get(key)
    }

    /// Seeds must be stated; nothing here may fall back to entropy.
    pub fn resolve_seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        match flag {
            Some(v) => Ok(v),
            None => self.get("seed")?.ok_or_else(|| {
                CliError::Usage(
                    "this subcommand is randomized; pass --seed or set seed in the config file"
                        .into(),
                )
            }),
        }
    }
}

/// Worker count for per-user stages, overridable via IMU_AUTH_THREADS.
pub fn thread_count() -> Result<usize, CliError> {
    match std::env::var("IMU_AUTH_THREADS") {
        Err(_) => Ok(1),
        Ok(raw) => match raw.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Usage(format!(
                "IMU_AUTH_THREADS must be a positive integer, got {raw:?}"
            ))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_cfg(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn precedence_is_flag_file_default() {
        let f = write_cfg("epochs = 7\n# comment\nlr=0.002\n");
        let cfg = FileConfig::load(Some(f.path())).unwrap();
        assert_eq!(cfg.resolve(Some(3usize), "epochs", 10).unwrap(), 3);
        assert_eq!(cfg.resolve(None::<usize>, "epochs", 10).unwrap(), 7);
        assert_eq!(cfg.resolve(None::<f64>, "lr", 1e-3).unwrap(), 0.002);
        assert_eq!(cfg.resolve(None::<f64>, "tau", 0.1).unwrap(), 0.1);
    }

    #[test]
    fn seed_never_defaults() {
        let cfg = FileConfig::load(None).unwrap();
        assert!(matches!(cfg.resolve_seed(None), Err(CliError::Usage(_))));
        assert_eq!(cfg.resolve_seed(Some(5)).unwrap(), 5);
        let f = write_cfg("seed = 11\n");
        let cfg = FileConfig::load(Some(f.path())).unwrap();
        assert_eq!(cfg.resolve_seed(None).unwrap(), 11);
    }

    #[test]
    fn malformed_lines_are_usage_errors() {
        for bad in ["epochs\n", "a = 1\na = 2\n"] {
            let f = write_cfg(bad);
            assert!(matches!(FileConfig::load(Some(f.path())), Err(CliError::Usage(_))));
        }
        let f = write_cfg("epochs = banana\n");
        let cfg = FileConfig::load(Some(f.path())).unwrap();
        assert!(matches!(
            cfg.resolve(None::<usize>, "epochs", 1),
            Err(CliError::Usage(_))
        ));
    }
}
