//! Subcommand bodies. Each returns a summary; `main` handles printing and
//! exit codes.

use crate::config::{parse_config_str, ConfigErrors, ScenarioConfig};
use crate::report::{self, Summary};
use ermsim::grid::{run_scenario, GridScenarioKind, GridScenarioResult};
use ermsim::pipeline::{derive_dg_behavior, run_device_scenario, DgBehavior, ScenarioResult};
use ermsim::trojan::calibrate_pump;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    Config {
        path: PathBuf,
        errors: ConfigErrors,
    },
    Simulation {
        path: PathBuf,
        error: ermsim::Error,
    },
    /// The device outcome fits several grid scenarios and none was chosen.
    Ambiguous {
        path: PathBuf,
        candidates: Vec<GridScenarioKind>,
    },
    /// `grid` needs an explicit kind.
    NoGridKind {
        path: PathBuf,
    },
    GoldenMismatch {
        names: Vec<String>,
    },
    Io {
        path: PathBuf,
        error: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config { .. } | CliError::NoGridKind { .. } => 2,
            CliError::Simulation { .. } => 3,
            CliError::GoldenMismatch { .. } => 4,
            CliError::Ambiguous { .. } => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { path, errors } => {
                write!(f, "invalid config {}:", path.display())?;
                for e in &errors.0 {
                    write!(f, "\n  {e}")?;
                }
                Ok(())
            }
            CliError::Simulation { path, error } => write!(f, "simulation failed for {}: {error}", path.display()),
            CliError::Ambiguous { path, candidates } => {
                let names: Vec<&str> = candidates.iter().map(|k| k.as_str()).collect();
                write!(
                    f,
                    "{}: device outcome fits {}; set [grid] kind to one of them",
                    path.display(),
                    names.join(" or ")
                )
            }
            CliError::NoGridKind { path } => {
                write!(f, "{}: [grid] kind must name a scenario for this command", path.display())
            }
            CliError::GoldenMismatch { names } => write!(f, "golden mismatch: {}", names.join(", ")),
            CliError::Io { path, error } => write!(f, "{}: {error}", path.display()),
        }
    }
}

impl std::error::Error for CliError {}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct OutputOptions {
    /// Root directory; each config writes into `<out>/<config stem>/`.
    pub out: Option<PathBuf>,
    pub decimate: Option<usize>,
    /// Skip writing files.
    pub dry: bool,
}

/// Reads a config file. Unreadable files are I/O errors, not config errors.
pub fn load(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_config_str(&text).map_err(|errors| CliError::Config { path: path.to_path_buf(), errors })
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned())
}

fn out_dir(path: &Path, cfg: &ScenarioConfig, opts: &OutputOptions) -> PathBuf {
    opts.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir)).join(stem(path))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |error| CliError::Io { path: path.to_path_buf(), error }
}

pub struct DeviceOutcome {
    pub result: ScenarioResult,
    pub behavior: DgBehavior,
    pub summary: Summary,
}

fn device(path: &Path, cfg: &ScenarioConfig, opts: &OutputOptions) -> Result<DeviceOutcome, CliError> {
    let result = run_device_scenario(&cfg.device_scenario())
        .map_err(|error| CliError::Simulation { path: path.to_path_buf(), error })?;
    let behavior = derive_dg_behavior(&result);
    let summary = report::device_summary(&result, cfg.trigger.payload_mode.as_str(), &behavior);
    if !opts.dry {
        let dir = out_dir(path, cfg, opts);
        report::write_device_outputs(&dir, &result, opts.decimate.unwrap_or(cfg.decimate)).map_err(io_err(&dir))?;
        report::write_summary(&dir.join("summary.txt"), &summary).map_err(io_err(&dir))?;
    }
    Ok(DeviceOutcome { result, behavior, summary })
}

fn grid(
    path: &Path,
    cfg: &ScenarioConfig,
    kind: GridScenarioKind,
    opts: &OutputOptions,
) -> Result<(GridScenarioResult, Summary), CliError> {
    let sim = |error| CliError::Simulation { path: path.to_path_buf(), error };
    let model = cfg.feeder_model(path.parent()).map_err(sim)?;
    let res = run_scenario(&model, &cfg.grid_scenario(kind)).map_err(sim)?;
    let summary = report::grid_summary(&res);
    if !opts.dry {
        let dir = out_dir(path, cfg, opts);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let target = &model.buses[model.target_bus()].id;
        report::write_grid_csv(&dir.join("grid.csv"), &res, target, opts.decimate.unwrap_or(cfg.decimate))
            .map_err(io_err(&dir))?;
        report::write_summary(&dir.join("grid_summary.txt"), &summary).map_err(io_err(&dir))?;
    }
    Ok((res, summary))
}

/// Device chain only.
pub fn run_device(path: &Path, opts: &OutputOptions) -> Result<Summary, CliError> {
    let cfg = load(path)?;
    Ok(device(path, &cfg, opts)?.summary)
}

/// Grid scenario only; the kind must be set in the config.
pub fn run_grid(path: &Path, opts: &OutputOptions) -> Result<Summary, CliError> {
    let cfg = load(path)?;
    let kind = cfg.grid_kind.ok_or_else(|| CliError::NoGridKind { path: path.to_path_buf() })?;
    Ok(grid(path, &cfg, kind, opts)?.1)
}

/// Device chain, then the grid scenario its outcome maps to. An explicit
/// `[grid] kind` takes precedence over the derived one.
pub fn run_chain(path: &Path, opts: &OutputOptions) -> Result<Summary, CliError> {
    let cfg = load(path)?;
    chain_with(path, &cfg, opts)
}

pub fn chain_with(path: &Path, cfg: &ScenarioConfig, opts: &OutputOptions) -> Result<Summary, CliError> {
    let dev = device(path, cfg, opts)?;
    let kind = match (cfg.grid_kind, &dev.behavior) {
        (Some(k), _) => k,
        (None, DgBehavior::Single(k)) => *k,
        (None, DgBehavior::Ambiguous(c)) => {
            return Err(CliError::Ambiguous { path: path.to_path_buf(), candidates: c.clone() })
        }
    };
    let (_, g) = grid(path, cfg, kind, opts)?;
    let mut s = dev.summary;
    report::merge_prefixed(&mut s, "grid", &g);
    if !opts.dry {
        let dir = out_dir(path, cfg, opts);
        report::write_summary(&dir.join("summary.txt"), &s).map_err(io_err(&dir))?;
    }
    Ok(s)
}

pub fn pump(delay_s: f64, vth: f64, vdd: f64, f_glitch: f64, c_main: f64) -> ermsim::Result<Summary> {
    let cal = calibrate_pump(delay_s, vth, vdd, f_glitch)?;
    let mut s = Summary::new();
    s.insert("glitches".into(), cal.glitches.to_string());
    s.insert("ratio".into(), report::fmt_f(cal.ratio));
    s.insert("c_main_f".into(), report::fmt_f(c_main));
    s.insert("c_unit_f".into(), report::fmt_f(cal.c_unit_for(c_main)));
    Ok(s)
}

pub fn default_golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("golden")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldenCase {
    pub name: String,
    /// Expected and actual summary text.
    pub expected: Option<String>,
    pub actual: String,
}

impl GoldenCase {
    pub fn matches(&self) -> bool {
        self.expected.as_deref() == Some(self.actual.as_str())
    }

    /// First differing line, for diagnostics.
    pub fn first_difference(&self) -> Option<(String, String)> {
        let exp = self.expected.as_deref()?;
        let mut a = self.actual.lines();
        let mut e = exp.lines();
        loop {
            match (e.next(), a.next()) {
                (None, None) => return None,
                (x, y) if x == y => continue,
                (x, y) => return Some((x.unwrap_or("<end>").to_string(), y.unwrap_or("<end>").to_string())),
            }
        }
    }
}

/// Golden configs, sorted by name.
pub fn golden_configs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let rd = std::fs::read_dir(dir).map_err(io_err(dir))?;
    let mut v: Vec<PathBuf> =
        rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "cfg")).collect();
    v.sort();
    Ok(v)
}

/// Runs one golden config through the chain without writing outputs.
pub fn replay_one(cfg_path: &Path) -> Result<GoldenCase, CliError> {
    let summary = run_chain(cfg_path, &OutputOptions { dry: true, ..Default::default() })?;
    let sum_path = cfg_path.with_extension("summary");
    Ok(GoldenCase {
        name: stem(cfg_path),
        expected: std::fs::read_to_string(&sum_path).ok(),
        actual: report::format_summary(&summary),
    })
}

pub fn bless(case: &GoldenCase, cfg_path: &Path) -> Result<(), CliError> {
    let p = cfg_path.with_extension("summary");
    std::fs::write(&p, &case.actual).map_err(io_err(&p))
}
