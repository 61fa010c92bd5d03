//! Run configuration: flags over a flat `key=value` file over defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use flowkit::diffeo::fixtures::{self, Fixture, FixtureParams};
use flowkit::diffeo::{DiffeoRef, ExprMap, Interval, SmoothMap};
use flowkit::real::{parse_decimal, parse_number, set_precision, Real};

/// Flags shared by every subcommand. Each may also be given in the config file under the same
/// name (without the dashes).
#[derive(Args, Clone, Debug, Default)]
pub struct Flags {
    /// Flat key=value config file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Fixture family: hyperbolic, flat_boundary, oscillating, rotation_like.
    #[arg(long, global = true)]
    pub fixture: Option<String>,
    /// Map given as an expression in x (instead of a fixture).
    #[arg(long, global = true)]
    pub expr: Option<String>,
    /// Second map of a pair, as an expression in x.
    #[arg(long = "expr-g", global = true)]
    pub expr_g: Option<String>,
    /// Domain as lo,hi.
    #[arg(long, global = true)]
    pub domain: Option<String>,
    /// Ends where the expression maps are declared flat: left, right, both or none.
    #[arg(long, global = true)]
    pub flat: Option<String>,
    /// Working precision in bits.
    #[arg(long, global = true)]
    pub prec: Option<u32>,
    /// Jet order or level.
    #[arg(long, global = true)]
    pub order: Option<usize>,
    /// Relative tolerance of the field evaluation.
    #[arg(long, global = true)]
    pub tol: Option<String>,
    #[arg(long, global = true)]
    pub eta: Option<String>,
    #[arg(long, global = true)]
    pub eps: Option<String>,
    #[arg(long, global = true)]
    pub delta: Option<String>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Second time of a fixture pair (decimal or p/q).
    #[arg(long, global = true)]
    pub alpha: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub order: usize,
    pub tol: Option<Real>,
    pub eta: Real,
    /// Amplitude of the rotation-like fixture and of the sine conjugation.
    pub eps: Option<Real>,
    pub delta: Real,
    pub k: usize,
    pub grid: Option<usize>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub fixture: Option<String>,
    pub expr: Option<String>,
    pub expr_g: Option<String>,
    pub domain: Interval,
    pub flat: (bool, bool),
    pub alpha: Option<Real>,
}

fn read_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!(flowkit::Error::Config(format!("{}:{}: expected key=value", path.display(), i + 1)));
        };
        map.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(map)
}

fn config_err(msg: String) -> anyhow::Error {
    anyhow::Error::new(flowkit::Error::Config(msg))
}

impl RunConfig {
    /// Merges flags over the config file, sets the working precision, and checks tolerances.
    pub fn resolve(flags: &Flags) -> Result<RunConfig> {
        let file = match &flags.config {
            Some(p) => read_file(p)?,
            None => BTreeMap::new(),
        };
        const KNOWN: [&str; 16] = [
            "fixture", "expr", "expr-g", "domain", "flat", "prec", "order", "tol", "eta", "eps", "delta", "k", "grid",
            "seed", "out", "alpha",
        ];
        if let Some(k) = file.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(config_err(format!("unknown config key {:?}", k)));
        }
        let pick = |flag: &Option<String>, key: &str| flag.clone().or_else(|| file.get(key).cloned());
        let pick_num = |flag: Option<u64>, key: &str| -> Result<Option<u64>> {
            match flag {
                Some(v) => Ok(Some(v)),
                None => match file.get(key) {
                    Some(v) => {
                        v.parse().map(Some).map_err(|_| config_err(format!("{} must be an integer, got {:?}", key, v)))
                    }
                    None => Ok(None),
                },
            }
        };
        let prec = pick_num(flags.prec.map(u64::from), "prec")?.unwrap_or(256) as u32;
        if prec < 64 {
            return Err(config_err(format!("precision {} below 64 bits", prec)));
        }
        set_precision(prec)?;
        let real_of = |v: Option<String>, key: &str| -> Result<Option<Real>> {
            match v {
                None => Ok(None),
                Some(s) => {
                    let r = parse_number(&s).map_err(|e| config_err(format!("{}: {}", key, e)))?;
                    Ok(Some(r))
                }
            }
        };
        let positive = |r: Option<Real>, key: &str, default: f64| -> Result<Real> {
            let r = r.unwrap_or_else(|| flowkit::real::real(default));
            if r <= 0 {
                return Err(config_err(format!("{} must be positive", key)));
            }
            Ok(r)
        };
        let tol = real_of(pick(&flags.tol, "tol"), "tol")?;
        if let Some(t) = &tol {
            if *t <= 0 {
                return Err(config_err("tol must be positive".into()));
            }
        }
        let eta = positive(real_of(pick(&flags.eta, "eta"), "eta")?, "eta", 1e-4)?;
        let eps = match real_of(pick(&flags.eps, "eps"), "eps")? {
            Some(e) => Some(positive(Some(e), "eps", 0.0)?),
            None => None,
        };
        let delta = positive(real_of(pick(&flags.delta, "delta"), "delta")?, "delta", 0.5)?;
        let domain = match pick(&flags.domain, "domain") {
            None => Interval::unit(),
            Some(d) => {
                let (lo, hi) = d.split_once(',').ok_or_else(|| config_err(format!("domain {:?} is not lo,hi", d)))?;
                let lo = parse_decimal(lo).map_err(|e| config_err(e.to_string()))?;
                let hi = parse_decimal(hi).map_err(|e| config_err(e.to_string()))?;
                if lo >= hi {
                    return Err(config_err("domain needs lo < hi".into()));
                }
                Interval::new(lo, hi)
            }
        };
        let flat = match pick(&flags.flat, "flat").as_deref() {
            None | Some("none") => (false, false),
            Some("left") => (true, false),
            Some("right") => (false, true),
            Some("both") => (true, true),
            Some(other) => return Err(config_err(format!("flat must be left, right, both or none, got {:?}", other))),
        };
        Ok(RunConfig {
            order: pick_num(flags.order.map(|v| v as u64), "order")?.map(|v| v as usize).unwrap_or(2),
            tol,
            eta,
            eps,
            delta,
            k: pick_num(flags.k.map(|v| v as u64), "k")?.map(|v| v as usize).unwrap_or(2),
            grid: pick_num(flags.grid.map(|v| v as u64), "grid")?.map(|v| v as usize),
            seed: pick_num(flags.seed, "seed")?.unwrap_or(0),
            out: flags.out.clone().or_else(|| file.get("out").map(PathBuf::from)),
            fixture: pick(&flags.fixture, "fixture"),
            expr: pick(&flags.expr, "expr"),
            expr_g: pick(&flags.expr_g, "expr-g"),
            domain,
            flat,
            alpha: real_of(pick(&flags.alpha, "alpha"), "alpha")?,
        })
    }

    pub fn fixture_or(&self, default: &str) -> Result<Fixture> {
        let name = self.fixture.as_deref().unwrap_or(default);
        let mut params = FixtureParams { alpha: self.alpha.clone(), ..FixtureParams::default() };
        if let Some(e) = &self.eps {
            params.eps = e.clone();
        }
        Ok(fixtures::fixture(name, &params)?)
    }

    fn expr_map(&self, source: &str) -> Result<DiffeoRef> {
        let m: SmoothMap =
            flowkit::diffeo::parse_map(source, self.domain.clone())?.with_flats(self.flat.0, self.flat.1);
        Ok(std::sync::Arc::new(ExprMap::new(m)))
    }

    /// `f` from `--expr`, else the time-1 map of the fixture.
    pub fn map_f(&self, default_fixture: &str) -> Result<DiffeoRef> {
        match &self.expr {
            Some(s) => self.expr_map(s),
            None => Ok(self.fixture_or(default_fixture)?.maps[0].clone()),
        }
    }

    /// `(f, g)` from `--expr`/`--expr-g`, else the fixture pair.
    pub fn pair(&self, default_fixture: &str) -> Result<(DiffeoRef, DiffeoRef)> {
        match (&self.expr, &self.expr_g) {
            (Some(f), Some(g)) => Ok((self.expr_map(f)?, self.expr_map(g)?)),
            (None, None) => {
                let fx = self.fixture_or(default_fixture)?;
                Ok((fx.maps[0].clone(), fx.maps[1].clone()))
            }
            _ => Err(config_err("a pair needs both --expr and --expr-g".into())),
        }
    }
}
