use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use fpt_core::analytics::{MomentMethod, MomentSet};
use fpt_core::montecarlo::{FptSample, SimConfig};
use fpt_core::{Direction, FptProblem, ModelParams};
use serde::{Deserialize, Serialize};

/// Model parameters, optionally with a default passage problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub model: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

pub fn read_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

impl ConfigFile {
    pub fn problem(&self, direction: Option<Direction>, threshold: Option<f64>) -> Result<FptProblem> {
        let direction = direction.or(self.direction).ok_or_else(|| anyhow!("no direction given (flag or config)"))?;
        let threshold = threshold.or(self.threshold).ok_or_else(|| anyhow!("no threshold given (flag or config)"))?;
        Ok(FptProblem { direction, threshold })
    }
}

/// `start:stop:step`, inclusive of `stop` up to rounding.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, h] = parts.as_slice() else {
        bail!("grid must be start:stop:step, got '{spec}'");
    };
    let (a, b, h): (f64, f64, f64) = (a.trim().parse()?, b.trim().parse()?, h.trim().parse()?);
    if !(h > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
        bail!("grid needs start <= stop and step > 0, got '{spec}'");
    }
    let n = ((b - a) / h + 1e-9).floor() as usize;
    if n > 10_000_000 {
        bail!("grid has too many points ({n})");
    }
    Ok((0..=n).map(|i| a + i as f64 * h).collect())
}

pub fn parse_list(spec: &str) -> Result<Vec<f64>> {
    spec.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse::<f64>().map_err(Into::into)).collect()
}

/// Strips `#` comment lines and the column header, yielding data rows.
fn data_rows(text: &str) -> impl Iterator<Item = Vec<&str>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::trim).collect())
}

fn header_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().filter_map(|l| l.strip_prefix('#')).find_map(|l| l.trim().strip_prefix(key)?.strip_prefix('='))
}

pub fn write_samples(s: &FptSample) -> String {
    let c = &s.config;
    let mut out = String::from("# fpt-samples/1\n");
    out.push_str(&format!("# direction={}\n# threshold={}\n", c.problem.direction, c.problem.threshold));
    out.push_str(&format!("# paths={}\n# dt={}\n# horizon={}\n# seed={}\n", c.paths, c.dt, c.horizon, c.seed));
    out.push_str(&format!("# interpolate_crossing={}\n# censored={}\n", c.interpolate_crossing, s.censored));
    out.push_str("time\n");
    for t in &s.times {
        out.push_str(&num(*t));
        out.push('\n');
    }
    out
}

pub fn read_samples(path: &Path) -> Result<FptSample> {
    let text = fs::read_to_string(path).with_context(|| format!("reading samples {}", path.display()))?;
    let mut times = Vec::new();
    for (i, row) in data_rows(&text).enumerate() {
        let t: f64 = row[0].parse().with_context(|| format!("{}: bad time on data row {}", path.display(), i + 1))?;
        if !(t >= 0.0 && t.is_finite()) {
            bail!("{}: time must be finite and >= 0, got {t}", path.display());
        }
        times.push(t);
    }
    let get = |k: &str| header_value(&text, k);
    let direction = get("direction").and_then(|v| v.parse().ok()).unwrap_or(Direction::Up);
    let threshold = get("threshold").and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
    let censored = get("censored").and_then(|v| v.parse().ok()).unwrap_or(0);
    let config = SimConfig {
        paths: get("paths").and_then(|v| v.parse().ok()).unwrap_or(times.len() + censored),
        dt: get("dt").and_then(|v| v.parse().ok()).unwrap_or(f64::NAN),
        horizon: get("horizon").and_then(|v| v.parse().ok()).unwrap_or(f64::INFINITY),
        seed: get("seed").and_then(|v| v.parse().ok()).unwrap_or(0),
        problem: FptProblem { direction, threshold },
        interpolate_crossing: get("interpolate_crossing").map(|v| v == "true").unwrap_or(true),
    };
    Ok(FptSample::from_times(times, censored, config))
}

/// Reads the `k,moment,...` table written by the `moments` command.
pub fn read_moments(path: &Path) -> Result<MomentSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading moments {}", path.display()))?;
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for row in data_rows(&text) {
        if row.len() < 2 {
            bail!("{}: expected at least k,moment columns", path.display());
        }
        rows.push((row[0].parse()?, row[1].parse()?));
    }
    rows.sort_by_key(|r| r.0);
    for (i, (k, _)) in rows.iter().enumerate() {
        if *k != i + 1 {
            bail!("{}: moment orders must run 1, 2, ... without gaps", path.display());
        }
    }
    let values: Vec<f64> = rows.into_iter().map(|r| r.1).collect();
    Ok(MomentSet::from_values(FptProblem::up(f64::NAN), MomentMethod::Empirical, &values, 256))
}

pub fn read_density(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading density {}", path.display()))?;
    let (mut t, mut g) = (Vec::new(), Vec::new());
    for row in data_rows(&text) {
        if row.len() < 2 {
            bail!("{}: expected t,density columns", path.display());
        }
        t.push(row[0].parse::<f64>()?);
        g.push(row[1].parse::<f64>()?);
    }
    if t.len() < 2 || t.windows(2).any(|w| !(w[1] > w[0])) {
        bail!("{}: density grid needs at least two increasing points", path.display());
    }
    Ok((t, g))
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub precision: u32,
    pub started_unix: f64,
    pub finished_unix: f64,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Shortest round-trip decimal, switching to exponent form outside a
/// readable range; non-finite values become empty cells.
pub fn num(x: f64) -> String {
    if !x.is_finite() {
        String::new()
    } else if x == 0.0 || (1e-5..1e16).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Writes to stdout; a closed pipe downstream is not an error.
pub fn print_out(s: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(s.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Writes `contents` to `out` (plus its manifest) or to stdout.
pub fn emit(out: Option<&Path>, contents: &str, manifest: impl FnOnce() -> RunManifest) -> Result<()> {
    match out {
        Some(p) => {
            write_file(p, contents)?;
            let m = manifest();
            write_file(&sidecar(p, ".manifest.json"), &serde_json::to_string_pretty(&m)?)
        }
        None => print_out(contents),
    }
}
