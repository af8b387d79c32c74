//! One-variable parameter sweeps emitting CSV.
//!
//! Spec grammar, one `key = value` per line, `#` starts a comment:
//!
//! ```text
//! experiment = parity          # parity | destructive | destructive_mc | cp_attack | per_sb_attack
//! vary = r
//! values = 3..8                # a..b, a..b step s, or a comma list
//! seed = 1
//! trials = 30000
//! k = 100
//! w = 50                       # error weight, or `uniform`
//! ```
//!
//! Parameters per experiment (all but the varied one must be given unless
//! a default is shown):
//!
//! | experiment       | parameters                   |
//! |------------------|------------------------------|
//! | `parity`         | k (100), r, w (`uniform`)    |
//! | `destructive`    | N, a, t                      |
//! | `destructive_mc` | N, a, t                      |
//! | `cp_attack`      | theta, x                     |
//! | `per_sb_attack`  | p, x                         |
//!
//! `theta` may be written `θ` and `N` as `n`. Every row carries a 95%
//! Wilson interval for Monte Carlo experiments; analytic rows repeat the
//! value and report 0 trials.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::attack::{cp_attack_probability, destructive_detection_probability, destructive_monte_carlo, per_sb_attack_probability};
use crate::parity::{estimate_detection, estimate_detection_uniform_weight};
use crate::stats::{trial_rng, Proportion};

pub const CSV_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{0}")]
    Spec(String),
    #[error("at {var} = {value}: {message}")]
    Point { var: String, value: f64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Parity,
    Destructive,
    DestructiveMc,
    CpAttack,
    PerSbAttack,
}

impl Experiment {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "parity" => Experiment::Parity,
            "destructive" => Experiment::Destructive,
            "destructive_mc" => Experiment::DestructiveMc,
            "cp_attack" => Experiment::CpAttack,
            "per_sb_attack" => Experiment::PerSbAttack,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Parity => "parity",
            Experiment::Destructive => "destructive",
            Experiment::DestructiveMc => "destructive_mc",
            Experiment::CpAttack => "cp_attack",
            Experiment::PerSbAttack => "per_sb_attack",
        }
    }

    fn params(self) -> &'static [&'static str] {
        match self {
            Experiment::Parity => &["k", "r", "w"],
            Experiment::Destructive | Experiment::DestructiveMc => &["N", "a", "t"],
            Experiment::CpAttack => &["theta", "x"],
            Experiment::PerSbAttack => &["p", "x"],
        }
    }

    fn default_of(self, key: &str) -> Option<&'static str> {
        match (self, key) {
            (Experiment::Parity, "k") => Some("100"),
            (Experiment::Parity, "w") => Some("uniform"),
            _ => None,
        }
    }

    fn monte_carlo(self) -> bool {
        matches!(self, Experiment::Parity | Experiment::DestructiveMc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub experiment: Experiment,
    pub vary: String,
    pub values: Vec<f64>,
    pub seed: u64,
    pub trials: u64,
    /// fixed parameters, canonical names
    pub fixed: BTreeMap<String, String>,
}

fn canonical(key: &str) -> &str {
    match key {
        "θ" => "theta",
        "n" => "N",
        k => k,
    }
}

fn parse_values(s: &str) -> Option<Vec<f64>> {
    if let Some((range, step)) = s.split_once("step") {
        let (a, b) = range.trim().split_once("..")?;
        let (a, b, step): (f64, f64, f64) = (a.trim().parse().ok()?, b.trim().parse().ok()?, step.trim().parse().ok()?);
        if step <= 0.0 || b < a {
            return None;
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        return Some((0..count).map(|i| a + i as f64 * step).collect());
    }
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (i64, i64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
        return (a <= b).then(|| (a..=b).map(|v| v as f64).collect());
    }
    s.split(',').map(|v| v.trim().parse().ok()).collect()
}

pub fn parse_sweep_spec(text: &str) -> Result<SweepSpec, SweepError> {
    let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(SweepError::Syntax {
            line: i + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let k = canonical(k.trim()).to_string();
        if kv.insert(k.clone(), (i + 1, v.trim().to_string())).is_some() {
            return Err(SweepError::Syntax {
                line: i + 1,
                message: format!("`{k}` given twice"),
            });
        }
    }
    let mut take = |k: &str| kv.remove(k);
    let (line, exp) = take("experiment").ok_or(SweepError::Spec("missing `experiment`".into()))?;
    let experiment = Experiment::parse(&exp).ok_or(SweepError::Syntax {
        line,
        message: format!("unknown experiment `{exp}`"),
    })?;
    let (_, vary) = take("vary").ok_or(SweepError::Spec("missing `vary`".into()))?;
    let vary = canonical(&vary).to_string();
    if !experiment.params().contains(&vary.as_str()) {
        return Err(SweepError::Spec(format!(
            "`{}` cannot vary `{vary}` (choose from {})",
            experiment.name(),
            experiment.params().join(", ")
        )));
    }
    let (line, vals) = take("values").ok_or(SweepError::Spec("missing `values`".into()))?;
    let values = parse_values(&vals).filter(|v| !v.is_empty()).ok_or(SweepError::Syntax {
        line,
        message: format!("bad value list `{vals}`"),
    })?;
    let num = |k: &str, d: u64, kv: &mut BTreeMap<String, (usize, String)>| -> Result<u64, SweepError> {
        match kv.remove(k) {
            None => Ok(d),
            Some((line, v)) => v.parse().map_err(|_| SweepError::Syntax {
                line,
                message: format!("`{k}` must be a nonnegative integer"),
            }),
        }
    };
    let seed = num("seed", 0, &mut kv)?;
    let trials = num("trials", if experiment.monte_carlo() { 10_000 } else { 0 }, &mut kv)?;
    if experiment.monte_carlo() && trials == 0 {
        return Err(SweepError::Spec("Monte Carlo experiments need trials > 0".into()));
    }
    let mut fixed = BTreeMap::new();
    for &p in experiment.params() {
        if p == vary {
            if kv.remove(p).is_some() {
                return Err(SweepError::Spec(format!("`{p}` is both varied and fixed")));
            }
            continue;
        }
        let v = match kv.remove(p) {
            Some((_, v)) => v,
            None => experiment
                .default_of(p)
                .ok_or(SweepError::Spec(format!("missing parameter `{p}`")))?
                .to_string(),
        };
        fixed.insert(p.to_string(), v);
    }
    if let Some((k, (line, _))) = kv.into_iter().next() {
        return Err(SweepError::Syntax {
            line,
            message: format!("unknown key `{k}` for `{}`", experiment.name()),
        });
    }
    Ok(SweepSpec {
        experiment,
        vary,
        values,
        seed,
        trials,
        fixed,
    })
}

struct Row {
    value: f64,
    lo: f64,
    hi: f64,
    trials: u64,
}

fn analytic(v: f64) -> Row {
    Row {
        value: v,
        lo: v,
        hi: v,
        trials: 0,
    }
}

fn mc(p: Proportion) -> Row {
    let (lo, hi) = p.wilson(1.96);
    Row {
        value: p.rate(),
        lo,
        hi,
        trials: p.trials,
    }
}

fn point(spec: &SweepSpec, x: f64, seed: u64) -> Result<Row, String> {
    let get = |k: &str| -> Result<String, String> {
        if k == spec.vary {
            Ok(format!("{x}"))
        } else {
            Ok(spec.fixed[k].clone())
        }
    };
    let int = |k: &str| -> Result<u64, String> {
        let s = get(k)?;
        let v: f64 = s.parse().map_err(|_| format!("`{k}` = `{s}` is not a number"))?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(format!("`{k}` = {v} is not a nonnegative integer"));
        }
        Ok(v as u64)
    };
    let real = |k: &str| -> Result<f64, String> {
        let s = get(k)?;
        s.parse().map_err(|_| format!("`{k}` = `{s}` is not a number"))
    };
    let e = |e: &dyn std::fmt::Display| e.to_string();
    Ok(match spec.experiment {
        Experiment::Parity => {
            let (k, r) = (int("k")? as usize, int("r")? as usize);
            let p = if get("w")? == "uniform" {
                estimate_detection_uniform_weight(k, r, spec.trials, seed).map_err(|x| e(&x))?
            } else {
                estimate_detection(k, r, int("w")? as usize, spec.trials, seed).map_err(|x| e(&x))?
            };
            mc(p)
        }
        Experiment::Destructive => {
            analytic(destructive_detection_probability(int("N")?, int("a")?, int("t")?).map_err(|x| e(&x))?)
        }
        Experiment::DestructiveMc => {
            mc(destructive_monte_carlo(int("N")?, int("a")?, int("t")?, spec.trials, seed).map_err(|x| e(&x))?)
        }
        Experiment::CpAttack => {
            analytic(cp_attack_probability(real("theta")?, int("x")? as u32).map_err(|x| e(&x))?)
        }
        Experiment::PerSbAttack => {
            analytic(per_sb_attack_probability(real("p")?, int("x")? as u32).map_err(|x| e(&x))?)
        }
    })
}

/// Runs every grid point. Point i draws its randomness from stream i of
/// the spec seed, so the CSV depends on nothing but the spec.
pub fn sweep(spec: &SweepSpec) -> Result<String, SweepError> {
    let mut out = String::new();
    let _ = writeln!(out, "# tpad sweep v{CSV_VERSION}");
    let fixed: Vec<String> = spec.fixed.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let _ = writeln!(
        out,
        "# experiment={} vary={} seed={} trials={} {}",
        spec.experiment.name(),
        spec.vary,
        spec.seed,
        spec.trials,
        fixed.join(" ")
    );
    let _ = writeln!(out, "{},value,ci_lo,ci_hi,trials", spec.vary);
    for (i, &x) in spec.values.iter().enumerate() {
        let seed: u64 = trial_rng(spec.seed, i as u64).gen();
        let row = point(spec, x, seed).map_err(|message| SweepError::Point {
            var: spec.vary.clone(),
            value: x,
            message,
        })?;
        let _ = writeln!(out, "{x},{},{},{},{}", row.value, row.lo, row.hi, row.trials);
    }
    Ok(out)
}

pub fn run_sweep(text: &str) -> Result<String, SweepError> {
    sweep(&parse_sweep_spec(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(csv: &str) -> Vec<Vec<f64>> {
        csv.lines()
            .skip(3)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect()
    }

    #[test]
    fn value_lists() {
        assert_eq!(parse_values("3..5"), Some(vec![3.0, 4.0, 5.0]));
        assert_eq!(parse_values("0..1 step 0.25").unwrap().len(), 5);
        assert_eq!(parse_values("0.05, 0.1"), Some(vec![0.05, 0.1]));
        assert_eq!(parse_values("5..3"), None);
        assert_eq!(parse_values("a,b"), None);
    }

    #[test]
    fn parity_sweep_is_reproducible() {
        let spec = "experiment = parity\nvary = r\nvalues = 3..5\nseed = 7\ntrials = 3000\nw = 50\n";
        let a = run_sweep(spec).unwrap();
        assert_eq!(a, run_sweep(spec).unwrap());
        let r = rows(&a);
        assert_eq!(r.len(), 3);
        for (row, want) in r.iter().zip([0.875, 0.9375, 0.96875]) {
            assert!(row[2] - 0.02 < want && want < row[3] + 0.02, "{row:?}");
            assert_eq!(row[4], 3000.0);
        }
        assert!(a.starts_with("# tpad sweep v1\n# experiment=parity vary=r seed=7 trials=3000 k=100 w=50\nr,value"));
    }

    #[test]
    fn analytic_sweeps() {
        let csv = run_sweep("experiment = cp_attack\nvary = θ\nvalues = 0.05, 0.1\nx = 64\n").unwrap();
        let r = rows(&csv);
        assert!((r[0][1] - 0.0375).abs() < 5e-5 && (r[1][1] - 1.18e-3).abs() < 5e-6);
        assert_eq!(r[0][4], 0.0);
        let csv = run_sweep("experiment = destructive\nvary = t\nvalues = 0..10000 step 1000\nn = 100000\na = 50\n").unwrap();
        let r = rows(&csv);
        let first = r.iter().find(|row| row[1] >= 0.99).unwrap();
        assert_eq!(first[0], 9000.0);
    }

    #[test]
    fn malformed_specs() {
        for (spec, want) in [
            ("vary = r\nvalues = 1", "missing `experiment`"),
            ("experiment = foo\nvary = r\nvalues = 1", "unknown experiment"),
            ("experiment = parity\nvary = N\nvalues = 1", "cannot vary"),
            ("experiment = parity\nvary = r\nvalues = x", "bad value list"),
            ("experiment = parity\nvary = r\nvalues = 3\nbogus = 1", "unknown key"),
            ("experiment = destructive\nvary = t\nvalues = 3\nN = 10", "missing parameter `a`"),
            ("experiment = parity\nvary = r\nr = 3\nvalues = 3", "both varied and fixed"),
            ("experiment = parity\nexperiment = parity", "given twice"),
            ("experiment parity", "expected `key = value`"),
        ] {
            let e = parse_sweep_spec(spec).unwrap_err().to_string();
            assert!(e.contains(want), "{spec:?}: {e}");
        }
        let e = run_sweep("experiment = destructive\nvary = a\nvalues = 20\nN = 10\nt = 1").unwrap_err();
        assert!(matches!(e, SweepError::Point { .. }));
    }
}
