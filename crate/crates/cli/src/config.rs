//! Line-based experiment configuration: `key = value` entries under
//! `[section]` headers, `#` comments, UTF-8. Unknown sections or keys are
//! rejected so typos surface as errors instead of silent defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use vel_core::solver::{stable_dt, InitFamily, InitialData, ModelKind, RunConfig};
use vel_core::weighted::{make_grid, Spacing};
use vel_core::GasParams;

/// Configuration-level failure; exits with code 2.
#[derive(Debug)]
pub struct ConfigError {
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(message: String) -> Result<T, ConfigError> {
    Err(ConfigError { message })
}

/// Which optional analyses `simulate` should attach to its summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Analyses {
    pub decay_fit: bool,
    pub pointwise_bounds: bool,
}

impl Default for Analyses {
    fn default() -> Self {
        Analyses {
            decay_fit: true,
            pointwise_bounds: true,
        }
    }
}

/// A fully-validated experiment: physics, discretization, run horizon and
/// reporting choices.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: String,
    pub run_config: RunConfig,
    pub analyses: Analyses,
    /// Decay-fit window; defaults to [0.25 T, 0.9 T].
    pub fit_window: (f64, f64),
    /// Window for the pointwise ratio scan; defaults to [0.125 T, 0.875 T].
    pub pointwise_window: (f64, f64),
    /// Refinement levels for convergence studies (>= 2).
    pub levels: u32,
    /// Emit an energy.svg log-plot next to the CSV.
    pub svg: bool,
    pub output_dir: PathBuf,
}

/// Raw parsed file: section -> key -> (value, line number).
type RawConfig = BTreeMap<String, BTreeMap<String, (String, usize)>>;

fn parse_raw(text: &str) -> Result<RawConfig, ConfigError> {
    let mut raw: RawConfig = BTreeMap::new();
    let mut section = String::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        // strip comments and whitespace
        let body = match line.find('#') {
            Some(p) => &line[..p],
            None => line,
        }
        .trim();
        if body.is_empty() {
            continue;
        }
        if body.starts_with('[') {
            if !body.ends_with(']') || body.len() < 3 {
                return err(format!("line {lineno}: malformed section header `{body}`"));
            }
            section = body[1..body.len() - 1].trim().to_string();
            raw.entry(section.clone()).or_default();
            continue;
        }
        let Some(eq) = body.find('=') else {
            return err(format!(
                "line {lineno}: expected `key = value`, got `{body}`"
            ));
        };
        let key = body[..eq].trim().to_string();
        let value = body[eq + 1..].trim().to_string();
        if key.is_empty() || value.is_empty() {
            return err(format!("line {lineno}: empty key or value"));
        }
        if section.is_empty() {
            return err(format!(
                "line {lineno}: key `{key}` appears before any [section]"
            ));
        }
        let entries = raw.entry(section.clone()).or_default();
        if entries.contains_key(&key) {
            return err(format!("line {lineno}: duplicate key `{key}`"));
        }
        entries.insert(key, (value, lineno));
    }
    Ok(raw)
}

/// Applies `--set section.key=value` style overrides on the parsed table.
pub fn apply_overrides(raw: &mut RawConfig, overrides: &[String]) -> Result<(), ConfigError> {
    for ov in overrides {
        let Some(eq) = ov.find('=') else {
            return err(format!("override `{ov}` is not of the form section.key=value"));
        };
        let (path, value) = (ov[..eq].trim(), ov[eq + 1..].trim());
        let Some(dot) = path.find('.') else {
            return err(format!("override `{ov}` is not of the form section.key=value"));
        };
        let (section, key) = (&path[..dot], &path[dot + 1..]);
        raw.entry(section.to_string())
            .or_default()
            .insert(key.to_string(), (value.to_string(), 0));
    }
    Ok(())
}

struct Section<'a> {
    name: &'a str,
    entries: BTreeMap<String, (String, usize)>,
}

impl<'a> Section<'a> {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    fn take_f64(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<f64>().map(Some).or_else(|_| {
                err(format!(
                    "line {line}: key `{}.{key}` wants a number, got `{v}`",
                    self.name
                ))
            }),
        }
    }

    fn take_usize(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<usize>().map(Some).or_else(|_| {
                err(format!(
                    "line {line}: key `{}.{key}` wants a non-negative integer, got `{v}`",
                    self.name
                ))
            }),
        }
    }

    fn take_bool(&mut self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => match v.as_str() {
                "true" | "yes" | "on" => Ok(Some(true)),
                "false" | "no" | "off" => Ok(Some(false)),
                _ => err(format!(
                    "line {line}: key `{}.{key}` wants true/false, got `{v}`",
                    self.name
                )),
            },
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some((key, (_, line))) = self.entries.into_iter().next() {
            return err(format!(
                "line {line}: unknown key `{}.{}`",
                self.name, key
            ));
        }
        Ok(())
    }
}

fn section<'a>(raw: &mut RawConfig, name: &'a str) -> Section<'a> {
    Section {
        name,
        entries: raw.remove(name).unwrap_or_default(),
    }
}

/// Parses and validates an experiment description, applying documented
/// defaults (t_final = 40, sine mode with amplitude 1e-3, dt from the
/// stability limit with a 10% margin under the CFL fraction).
pub fn parse_config(
    text: &str,
    base_dir: &Path,
    overrides: &[String],
    output_dir: PathBuf,
) -> Result<ExperimentSpec, ConfigError> {
    let mut raw = parse_raw(text)?;
    apply_overrides(&mut raw, overrides)?;

    // [gas]
    let mut gas = section(&mut raw, "gas");
    let gamma = gas
        .take_f64("gamma")?
        .ok_or_else(|| ConfigError {
            message: "missing required key `gas.gamma`".into(),
        })?;
    if gamma <= 1.0 {
        return err(format!("gas.gamma must exceed 1 (got {gamma})"));
    }
    let g = gas.take_f64("g")?.unwrap_or(1.0);
    let mass = gas.take_f64("mass")?.unwrap_or(1.0);
    gas.finish()?;
    let params = GasParams::derive(gamma, g, mass)
        .map_err(|e| ConfigError {
            message: format!("invalid gas parameters: {e}"),
        })?;

    // [grid]
    let mut grid_sec = section(&mut raw, "grid");
    let n_cells = grid_sec.take_usize("n_cells")?.ok_or_else(|| ConfigError {
        message: "missing required key `grid.n_cells`".into(),
    })?;
    let spacing = match grid_sec.take("spacing") {
        None => Spacing::Uniform,
        Some((v, line)) => match v.as_str() {
            "uniform" => Spacing::Uniform,
            "top-refined" | "top_refined" => Spacing::TopRefined,
            _ => {
                return err(format!(
                    "line {line}: grid.spacing must be uniform or top-refined, got `{v}`"
                ))
            }
        },
    };
    grid_sec.finish()?;
    let grid = make_grid(&params, n_cells, spacing).map_err(|e| ConfigError {
        message: format!("invalid grid: {e}"),
    })?;

    // [init]
    let mut init_sec = section(&mut raw, "init");
    let family_raw = init_sec
        .take("family")
        .map(|(v, l)| (v, l))
        .unwrap_or(("sine_mode".into(), 0));
    let amplitude = init_sec.take_f64("amplitude")?.unwrap_or(1e-3);
    let mode = init_sec.take_usize("mode")?.unwrap_or(1) as u32;
    let vel_amplitude = init_sec.take_f64("vel_amplitude")?.unwrap_or(0.0);
    let table_path = init_sec.take("table_path");
    let family = match family_raw.0.as_str() {
        "sine_mode" => InitFamily::SineMode,
        "polynomial_bump" => InitFamily::PolynomialBump,
        "custom_table" => {
            let (rel, _) = table_path.clone().ok_or_else(|| ConfigError {
                message: "init.family = custom_table needs init.table_path".into(),
            })?;
            InitFamily::CustomTable(load_table(&base_dir.join(rel))?)
        }
        other => {
            return err(format!(
                "line {}: unknown init.family `{other}`",
                family_raw.1
            ))
        }
    };
    if !matches!(family, InitFamily::CustomTable(_)) && table_path.is_some() {
        return err("init.table_path only applies to custom_table".into());
    }
    init_sec.finish()?;
    let init = InitialData {
        family,
        amplitude,
        mode,
        vel_amplitude,
    };

    // [run]
    let mut run_sec = section(&mut raw, "run");
    let model = match run_sec.take("model") {
        None => ModelKind::EulerDamped,
        Some((v, line)) => match v.as_str() {
            "euler_damped" => ModelKind::EulerDamped,
            "darcy" => ModelKind::Darcy,
            _ => {
                return err(format!(
                    "line {line}: run.model must be euler_damped or darcy, got `{v}`"
                ))
            }
        },
    };
    run_sec.finish()?;

    // [time]
    let mut time = section(&mut raw, "time");
    let t_final = time.take_f64("t_final")?.unwrap_or(40.0);
    let cfl_safety = time.take_f64("cfl_safety")?.unwrap_or(0.45);
    let dt_explicit = time.take_f64("dt")?;
    let output_every_explicit = time.take_usize("output_every")?;
    time.finish()?;

    let dt = match dt_explicit {
        Some(dt) => dt,
        None => {
            let limit = stable_dt(&params, &grid, &init, model).map_err(|e| ConfigError {
                message: format!("cannot derive dt from the stability limit: {e}"),
            })?;
            // stay 10% under the configured fraction: the limit drifts with
            // the state during the run
            0.9 * cfl_safety * limit
        }
    };
    let output_every = match output_every_explicit {
        Some(n) => n,
        // default cadence: about one record per quarter time unit
        None => ((0.25 / dt).round() as usize).max(1),
    };

    // [experiment]
    let mut exp = section(&mut raw, "experiment");
    let name = match exp.take("name") {
        None => "experiment".to_string(),
        Some((v, line)) => {
            if v.is_empty()
                || !v
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
            {
                return err(format!(
                    "line {line}: experiment.name must be nonempty and filesystem-safe"
                ));
            }
            v
        }
    };
    let levels = exp.take_usize("levels")?.unwrap_or(3) as u32;
    if levels < 2 {
        return err(format!("experiment.levels must be >= 2, got {levels}"));
    }
    let window_lo = exp.take_f64("window_lo")?.unwrap_or(0.25 * t_final);
    let window_hi = exp.take_f64("window_hi")?.unwrap_or(0.9 * t_final);
    if !(window_lo >= 0.0 && window_hi > window_lo && window_hi <= t_final) {
        return err(format!(
            "decay window [{window_lo}, {window_hi}] must sit inside [0, {t_final}]"
        ));
    }
    let pw_lo = exp.take_f64("pointwise_lo")?.unwrap_or(0.125 * t_final);
    let pw_hi = exp.take_f64("pointwise_hi")?.unwrap_or(0.875 * t_final);
    let svg = exp.take_bool("svg")?.unwrap_or(false);
    let analyses = match exp.take("analyses") {
        None => Analyses::default(),
        Some((v, line)) => {
            let mut a = Analyses {
                decay_fit: false,
                pointwise_bounds: false,
            };
            for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match item {
                    "decay_fit" => a.decay_fit = true,
                    "pointwise_bounds" => a.pointwise_bounds = true,
                    _ => {
                        return err(format!(
                            "line {line}: unknown analysis `{item}` (decay_fit, pointwise_bounds)"
                        ))
                    }
                }
            }
            a
        }
    };
    exp.finish()?;

    // anything left over is an unknown section
    if let Some((sec, entries)) = raw.into_iter().next() {
        let line = entries.values().map(|(_, l)| *l).min().unwrap_or(0);
        return err(format!("line {line}: unknown section `[{sec}]`"));
    }

    let run_config = RunConfig {
        params,
        grid,
        dt,
        t_final,
        model,
        init,
        cfl_safety,
        output_every,
    };
    run_config.validate().map_err(|e| ConfigError {
        message: format!("invalid run configuration: {e}"),
    })?;

    Ok(ExperimentSpec {
        name,
        run_config,
        analyses,
        fit_window: (window_lo, window_hi),
        pointwise_window: (pw_lo, pw_hi),
        levels,
        svg,
        output_dir,
    })
}

fn load_table(path: &Path) -> Result<Vec<[f64; 3]>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        message: format!("cannot read table {}: {e}", path.display()),
    })?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') || body.starts_with("y,") {
            continue;
        }
        let cols: Vec<&str> = body.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return err(format!(
                "{}:{}: table rows need y,omega,v",
                path.display(),
                idx + 1
            ));
        }
        let mut row = [0.0; 3];
        for (slot, col) in row.iter_mut().zip(&cols) {
            *slot = col.parse().map_err(|_| ConfigError {
                message: format!("{}:{}: bad number `{col}`", path.display(), idx + 1),
            })?;
        }
        rows.push(row);
    }
    Ok(rows)
}
