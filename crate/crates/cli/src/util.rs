//! Shared CLI plumbing: error-to-exit-code mapping, atomic file writes,
//! config-file loading, and argument value parsers.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::Deserialize;

/// CLI failure with a fixed exit-code taxonomy:
/// 2 usage (clap), 3 configuration, 4 I/O, 5 resource limits, 1 internal.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Resource(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Io(_) => 4,
            CliError::Resource(_) => 5,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Resource(m) => write!(f, "resource error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<qfreq::Error> for CliError {
    fn from(e: qfreq::Error) -> Self {
        use qfreq::Error::*;
        match e {
            BranchCapExceeded { .. } => CliError::Resource(e.to_string()),
            MalformedCsv(_) => CliError::Io(e.to_string()),
            InvalidParameter(_) | LonaSequenceExhausted { .. } | RecordShape(_)
            | AnalysisInput(_) | NonPositiveMse { .. } => CliError::Config(e.to_string()),
            DegenerateUpdate { .. } | TrialFailed { .. } => CliError::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Write-temp-then-rename so output files appear atomically.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Io(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Optional config file (TOML or JSON by extension). Flags override these
/// values; these override built-in defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub omega0: Option<f64>,
    pub m_max: Option<u32>,
    pub n_rep: Option<u32>,
}

pub fn load_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Budget list parsed from `--n-list 5,10,20`.
#[derive(Debug, Clone)]
pub struct NValues(pub Vec<usize>);

pub fn parse_n_list(s: &str) -> Result<NValues, String> {
    let values: Vec<usize> = s
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid budget '{part}'"))
        })
        .collect::<Result<_, _>>()?;
    normalize_budgets(values)
}

/// Budget range parsed from `--n-range A:B:step` (inclusive of B when hit).
pub fn parse_n_range(s: &str) -> Result<NValues, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err("expected A:B:step".into());
    }
    let a: usize = parts[0].trim().parse().map_err(|_| "invalid start")?;
    let b: usize = parts[1].trim().parse().map_err(|_| "invalid end")?;
    let step: usize = parts[2].trim().parse().map_err(|_| "invalid step")?;
    if step == 0 {
        return Err("step must be >= 1".into());
    }
    if a > b {
        return Err("start exceeds end".into());
    }
    normalize_budgets((a..=b).step_by(step).collect())
}

fn normalize_budgets(mut values: Vec<usize>) -> Result<NValues, String> {
    if values.is_empty() {
        return Err("no budgets given".into());
    }
    if values.contains(&0) {
        return Err("budgets must be >= 1".into());
    }
    values.sort_unstable();
    values.dedup();
    Ok(NValues(values))
}

/// Fit range parsed from `--range A:B`.
#[derive(Debug, Clone, Copy)]
pub struct FitRange(pub usize, pub usize);

pub fn parse_fit_range(s: &str) -> Result<FitRange, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 2 {
        return Err("expected A:B".into());
    }
    let a: usize = parts[0].trim().parse().map_err(|_| "invalid lower bound")?;
    let b: usize = parts[1].trim().parse().map_err(|_| "invalid upper bound")?;
    if a > b {
        return Err("lower bound exceeds upper bound".into());
    }
    Ok(FitRange(a, b))
}
