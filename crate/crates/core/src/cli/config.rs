//! Problem configuration files.
//!
//! A config is a sequence of `[section]` headers followed by `key = value`
//! lines. Strings (expressions, family names, paths) are quoted; numbers are
//! bare; vectors are bracketed lists, a single number, or a quoted
//! comma-separated list. The syntax is read with the `toml` crate.
//!
//! ```text
//! [timescale]
//! family = "integers"
//! a = 0
//! b = 8
//!
//! [problem]
//! n = 1
//! L = "-(v1^2) - z"
//! g = "x1^2"
//! x_a = 1
//!
//! [solve]
//! T_trunc = 8
//! terminal = "free"
//! ```

use std::path::PathBuf;
use std::sync::Arc;

use toml::{Table, Value};

use crate::solver::{SolveOptions, TerminalMode};
use crate::timescale::{GapKind, TimeScale};
use crate::variational::{Problem, Sense};

use super::CliError;

#[derive(Debug, Clone)]
pub struct Config {
    root: Table,
}

fn cfg(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let root: Table = text.parse().map_err(|e: toml::de::Error| cfg(format!("config syntax: {}", e.message())))?;
        Ok(Config { root })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn section(&self, name: &str) -> Result<Section<'_>, CliError> {
        match self.root.get(name) {
            Some(Value::Table(t)) => Ok(Section { name: name.to_string(), table: t }),
            Some(_) => Err(cfg(format!("[{name}] must be a section"))),
            None => Err(cfg(format!("missing [{name}] section"))),
        }
    }

    pub fn optional_section(&self, name: &str) -> Result<Option<Section<'_>>, CliError> {
        match self.root.get(name) {
            None => Ok(None),
            Some(_) => self.section(name).map(Some),
        }
    }

    pub fn time_scale(&self) -> Result<Arc<TimeScale>, CliError> {
        let s = self.section("timescale")?;
        let ts = scale_from(&s)?;
        let unbounded = s.opt_bool("unbounded_above")?.unwrap_or(true);
        Ok(Arc::new(ts.with_unbounded_above(unbounded)))
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        let ts = self.time_scale()?;
        let s = self.section("problem")?;
        let n = s.opt_usize("n")?.unwrap_or(1);
        let l = s.string("L")?;
        let g = s.opt_string("g")?.unwrap_or_else(|| "0".to_string());
        let x_a = s.vector("x_a", n)?;
        let sense = match s.opt_string("sense")?.as_deref().map(str::to_ascii_lowercase).as_deref() {
            None | Some("max") => Sense::Max,
            Some("min") => Sense::Min,
            Some(other) => return Err(cfg(format!("[problem] sense must be max or min, got {other:?}"))),
        };
        Problem::parse(ts, n, &l, &g, x_a, sense).map_err(|e| cfg(format!("[problem] {e}")))
    }

    pub fn solve_options(&self, p: &Problem) -> Result<SolveOptions, CliError> {
        let ts = p.time_scale();
        let s = self.optional_section("solve")?;
        let mut opts = SolveOptions::new(ts.max());
        let Some(s) = s else { return Ok(opts) };
        if let Some(t) = s.opt_f64("T_trunc")? {
            on_grid(ts, t, "[solve] T_trunc")?;
            opts.t_trunc = t;
        }
        match s.opt_string("terminal")?.as_deref().map(str::to_ascii_lowercase).as_deref() {
            None | Some("free") => {}
            Some("pinned") => opts.terminal = TerminalMode::Pinned(s.vector("terminal_value", p.dim())?),
            Some(other) => return Err(cfg(format!("[solve] terminal must be free or pinned, got {other:?}"))),
        }
        if let Some(v) = s.opt_usize("max_iters")? {
            opts.max_iters = v;
        }
        if let Some(v) = s.opt_f64("step_init")? {
            opts.step_init = v;
        }
        if let Some(v) = s.opt_f64("grad_tol")? {
            opts.grad_tol = v;
        }
        if let Some(v) = s.opt_usize("seed")? {
            opts.seed = v as u64;
        }
        if opts.max_iters == 0 || !(opts.step_init > 0.0) || !(opts.grad_tol > 0.0) {
            return Err(cfg("[solve] max_iters, step_init and grad_tol must be positive"));
        }
        Ok(opts)
    }
}

pub fn on_grid(ts: &TimeScale, t: f64, what: &str) -> Result<usize, CliError> {
    ts.index_of(t)
        .map_err(|_| cfg(format!("{what} = {t} is not a point of the time scale")))
}

fn scale_from(s: &Section<'_>) -> Result<TimeScale, CliError> {
    let family = s.opt_string("family")?;
    let family = match family {
        Some(f) => f.to_ascii_lowercase(),
        None if s.table.contains_key("points") => "points".into(),
        None => return Err(cfg(format!("[{}] needs a family or explicit points", s.name))),
    };
    let bad = |e: crate::timescale::ScaleError| cfg(format!("[{}] {e}", s.name));
    match family.as_str() {
        "integers" => {
            let a = s.integer("a")?;
            let b = s.integer("b")?;
            TimeScale::integers(a, b).map_err(bad)
        }
        "uniform" => TimeScale::uniform(s.f64("a")?, s.f64("b")?, s.f64("h")?).map_err(bad),
        "sampled" => TimeScale::sampled_interval(s.f64("a")?, s.f64("b")?, s.usize("n")?).map_err(bad),
        "q" => TimeScale::q_scale(s.f64("q")?, s.f64("t0")?, s.usize("count")?).map_err(bad),
        "points" => {
            let points = s.list("points")?;
            let gaps = match s.table.get("gaps") {
                None => vec![GapKind::Scattered; points.len().saturating_sub(1)],
                Some(Value::Array(items)) => items
                    .iter()
                    .map(|v| match v.as_str().map(str::to_ascii_lowercase).as_deref() {
                        Some("scattered") => Ok(GapKind::Scattered),
                        Some("dense") | Some("dense_sample") => Ok(GapKind::DenseSample),
                        _ => Err(cfg(format!("[{}] gaps entries must be \"scattered\" or \"dense\"", s.name))),
                    })
                    .collect::<Result<_, _>>()?,
                Some(_) => return Err(cfg(format!("[{}] gaps must be a list", s.name))),
            };
            TimeScale::from_points(points, gaps).map_err(bad)
        }
        "union" => {
            let parts = match s.table.get("parts") {
                Some(Value::Array(items)) => items,
                _ => return Err(cfg(format!("[{}] union needs a parts list", s.name))),
            };
            let mut b = TimeScale::builder();
            for (k, v) in parts.iter().enumerate() {
                b = match v {
                    Value::Table(t) => b.scale(scale_from(&Section {
                        name: format!("{}.parts[{k}]", s.name),
                        table: t,
                    })?),
                    Value::Float(_) | Value::Integer(_) => b.isolated(as_f64(v).unwrap_or(f64::NAN)),
                    _ => return Err(cfg(format!("[{}] part {k} must be a table or a number", s.name))),
                };
            }
            b.build().map_err(bad)
        }
        other => Err(cfg(format!(
            "[{}] unknown family {other:?} (integers, uniform, sampled, q, points, union)",
            s.name
        ))),
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Integer(i) => Some(*i as f64),
        Value::Float(f) => Some(*f),
        _ => None,
    }
}

pub struct Section<'a> {
    name: String,
    table: &'a Table,
}

impl Section<'_> {
    fn missing(&self, key: &str) -> CliError {
        cfg(format!("[{}] missing key {key}", self.name))
    }

    fn wrong(&self, key: &str, what: &str) -> CliError {
        cfg(format!("[{}] {key} must be {what}", self.name))
    }

    pub fn opt_string(&self, key: &str) -> Result<Option<String>, CliError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.wrong(key, "a quoted string")),
        }
    }

    pub fn string(&self, key: &str) -> Result<String, CliError> {
        self.opt_string(key)?.ok_or_else(|| self.missing(key))
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(v) => match as_f64(v) {
                Some(x) if x.is_finite() => Ok(Some(x)),
                _ => match v.as_str().map(|s| s.trim().parse::<f64>()) {
                    Some(Ok(x)) if x.is_finite() => Ok(Some(x)),
                    _ => Err(self.wrong(key, "a finite number")),
                },
            },
        }
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        self.opt_f64(key)?.ok_or_else(|| self.missing(key))
    }

    fn integer(&self, key: &str) -> Result<i64, CliError> {
        match self.table.get(key) {
            None => Err(self.missing(key)),
            Some(Value::Integer(i)) => Ok(*i),
            Some(_) => Err(self.wrong(key, "an integer")),
        }
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(_) => Err(self.wrong(key, "a non-negative integer")),
        }
    }

    fn usize(&self, key: &str) -> Result<usize, CliError> {
        self.opt_usize(key)?.ok_or_else(|| self.missing(key))
    }

    pub fn opt_bool(&self, key: &str) -> Result<Option<bool>, CliError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(self.wrong(key, "true or false")),
        }
    }

    /// A list of numbers: `[1, 2]`, a bare number, or `"1, 2"`.
    pub fn opt_list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let Some(v) = self.table.get(key) else {
            return Ok(None);
        };
        let out: Option<Vec<f64>> = match v {
            Value::Array(items) => items.iter().map(as_f64).collect(),
            Value::Integer(_) | Value::Float(_) => as_f64(v).map(|x| vec![x]),
            Value::String(s) => s
                .split(',')
                .map(|p| p.trim())
                .filter(|p| !p.is_empty())
                .map(|p| p.parse::<f64>().ok())
                .collect(),
            _ => None,
        };
        match out {
            Some(list) if list.iter().all(|x| x.is_finite()) => Ok(Some(list)),
            _ => Err(self.wrong(key, "a list of finite numbers")),
        }
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.opt_list(key)?.ok_or_else(|| self.missing(key))
    }

    /// A list of exactly `n` numbers; a single number is broadcast.
    pub fn vector(&self, key: &str, n: usize) -> Result<Vec<f64>, CliError> {
        let list = self.list(key)?;
        match list.len() {
            len if len == n => Ok(list),
            1 => Ok(vec![list[0]; n]),
            len => Err(cfg(format!("[{}] {key} has {len} entries, expected {n}", self.name))),
        }
    }

    pub fn opt_path(&self, key: &str) -> Result<Option<PathBuf>, CliError> {
        Ok(self.opt_string(key)?.map(PathBuf::from))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_integer_problem() {
        let c = Config::parse(
            r#"
[timescale]
family = "integers"
a = 0
b = 8

[problem]
n = 1
L = "-(v1^2) - z"
g = "x1^2"
x_a = 1

[solve]
T_trunc = 8
terminal = "pinned"
terminal_value = [0.5]
"#,
        )
        .unwrap();
        let p = c.problem().unwrap();
        assert_eq!(p.time_scale().len(), 9);
        assert!(p.time_scale().unbounded_above());
        assert_eq!(p.x_a(), &[1.0]);
        let o = c.solve_options(&p).unwrap();
        assert_eq!(o.t_trunc, 8.0);
        assert_eq!(o.terminal, TerminalMode::Pinned(vec![0.5]));
    }

    #[test]
    fn explicit_points_and_unions() {
        let c = Config::parse(
            r#"
[timescale]
points = [0, 1, 1.5, 2]
gaps = ["scattered", "dense", "dense"]
"#,
        )
        .unwrap();
        let ts = c.time_scale().unwrap();
        assert_eq!(ts.gap_kinds()[1], GapKind::DenseSample);

        let c = Config::parse(
            r#"
[timescale]
family = "union"
parts = [0, { family = "sampled", a = 1, b = 2, n = 4 }]
"#,
        )
        .unwrap();
        let ts = c.time_scale().unwrap();
        assert_eq!(ts.len(), 6);
        assert_eq!(ts.gap_kinds()[0], GapKind::Scattered);
    }

    #[test]
    fn config_errors_are_descriptive() {
        assert!(Config::parse("[timescale\n").is_err());
        let c = Config::parse("[timescale]\nfamily = \"integers\"\na = 0\n").unwrap();
        let err = c.time_scale().unwrap_err().to_string();
        assert!(err.contains("missing key b"), "{err}");
        let c = Config::parse("[timescale]\nfamily = \"integers\"\na = 0\nb = 3\n[problem]\nL = \"x1 +\"\nx_a = 0\n").unwrap();
        assert!(c.problem().unwrap_err().to_string().contains("offset 4"));
        let c = Config::parse("[timescale]\nfamily = \"integers\"\na = 0\nb = 3\n[problem]\nL = \"x1\"\nx_a = [0, 1]\n").unwrap();
        assert!(c.problem().is_err());
        let c = Config::parse(
            "[timescale]\nfamily = \"integers\"\na = 0\nb = 3\n[problem]\nL = \"x1\"\nx_a = 0\n[solve]\nT_trunc = 2.5\n",
        )
        .unwrap();
        let p = c.problem().unwrap();
        assert!(c.solve_options(&p).unwrap_err().to_string().contains("2.5"));
    }
}
