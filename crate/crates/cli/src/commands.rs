use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flowkit::circle::{lattice_basis, parse_rho, rotation_number, CircleLift};
use flowkit::diffeo::{ck_norm_with, parse_map, Diffeo, Identity, Interval};
use flowkit::estimates::{
    alpha_sequence, check_equivalence_lemma, check_exponent, check_flat_norm_diffeo, check_ratio_lemma,
    check_series_phi, check_star_identity, geometric_abscissae, mu_phi_values, recursion_polynomials, EstimateReport,
};
use flowkit::real::{chebyshev_lobatto, fmt_sig, linspace, one, real, zero, Real};
use flowkit::smoothing::{approximate_clean, SmoothingOptions};
use flowkit::szekeres::{
    classify_pair, commutation_residual, path_to_identity, ClassifyOptions, PairClassification, SzekeresField,
    SzekeresOptions,
};

use crate::config::RunConfig;

/// Exit status of a command that ran to completion.
pub enum Outcome {
    Pass,
    Fail,
}

const DIGITS: usize = 30;

fn num(x: &Real) -> String {
    fmt_sig(x, DIGITS)
}

/// Sink for named artifacts: files under `--out`, else standard output.
pub struct Output {
    dir: Option<PathBuf>,
}

impl Output {
    pub fn new(dir: Option<PathBuf>) -> Result<Output> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Output { dir })
    }

    pub fn emit(&self, name: &str, content: &str) -> Result<()> {
        match &self.dir {
            Some(d) => {
                let path = d.join(name);
                std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
            }
            None => {
                let mut out = std::io::stdout().lock();
                let written = writeln!(out, "# {}", name).and_then(|_| out.write_all(content.as_bytes()));
                match written {
                    Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                    other => other.context("writing to standard output")?,
                }
            }
        }
        Ok(())
    }
}

fn csv_text(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn szekeres_opts(cfg: &RunConfig) -> SzekeresOptions {
    let mut o = SzekeresOptions::default();
    if let Some(t) = &cfg.tol {
        o.rel_tol = t.clone();
    }
    o
}

pub fn field(cfg: &RunConfig, out: &Output) -> Result<Outcome> {
    let f = cfg.map_f("hyperbolic")?;
    let dom = f.domain();
    let xi = SzekeresField::new(f, szekeres_opts(cfg))?;
    let n = cfg.order;
    let mut header = vec!["x".to_string()];
    header.extend((0..=n).map(|j| format!("d{}", j)));
    let mut rows = Vec::new();
    let mut log = Vec::new();
    for x in chebyshev_lobatto(&dom.lo, &dom.hi, cfg.grid.unwrap_or(17)) {
        let e = xi.evaluate(&x, n)?;
        let mut row = vec![num(&x)];
        row.extend(e.jet.derivatives().iter().map(num));
        rows.push(row);
        log.push(vec![num(&x), e.iterations.to_string()]);
    }
    out.emit("field.csv", &csv_text(&header, &rows)?)?;
    out.emit("field_log.csv", &csv_text(&["x".into(), "iterations".into()], &log)?)?;
    Ok(Outcome::Pass)
}

fn classification_text(c: &PairClassification) -> String {
    match c {
        PairClassification::Identity => "classification=IDENTITY\n".into(),
        PairClassification::Cyclic { p, q, r, s, .. } => {
            format!("classification=CYCLIC\np={}\nq={}\nr={}\ns={}\n", p, q, r, s)
        }
        PairClassification::Flow { alpha, .. } => format!("classification=FLOW\ntau={}\n", num(alpha)),
        PairClassification::Degenerate { witness } => format!("classification=DEGENERATE\nwitness={}\n", num(witness)),
    }
}

fn classify_opts(cfg: &RunConfig) -> ClassifyOptions {
    ClassifyOptions { szekeres: szekeres_opts(cfg), ..ClassifyOptions::default() }
}

pub fn classify(cfg: &RunConfig, out: &Output) -> Result<Outcome> {
    let (f, g) = cfg.pair("hyperbolic")?;
    let c = classify_pair(f, g, &classify_opts(cfg))?;
    out.emit("classification.txt", &classification_text(&c))?;
    Ok(Outcome::Pass)
}

pub fn clean_approx(cfg: &RunConfig, out: &Output) -> Result<Outcome> {
    let (f, g) = cfg.pair("oscillating")?;
    let opts = SmoothingOptions { delta: cfg.delta.clone(), ..SmoothingOptions::default() };
    let c = approximate_clean(f.clone(), g.clone(), &cfg.eta, cfg.k, &opts)?;
    let residual = commutation_residual(c.f_bar.as_ref(), c.g_bar.as_ref(), 0, &f.domain(), 16)?;
    let mut report = format!("{}\n", c.report);
    report.push_str(&format!("commutation_residual={}\n", num(&residual.value)));
    out.emit("clean_report.txt", &report)?;
    let dom = f.domain();
    let header: Vec<String> = ["x", "f", "f_bar", "g", "g_bar"].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for x in chebyshev_lobatto(&dom.lo, &dom.hi, cfg.grid.unwrap_or(33)) {
        rows.push(vec![
            num(&x),
            num(&f.apply(&x)?),
            num(&c.f_bar.apply(&x)?),
            num(&g.apply(&x)?),
            num(&c.g_bar.apply(&x)?),
        ]);
    }
    out.emit("clean_samples.csv", &csv_text(&header, &rows)?)?;
    Ok(Outcome::Pass)
}

struct Verdicts {
    lines: Vec<String>,
    all: bool,
}

impl Verdicts {
    fn push(&mut self, name: &str, pass: bool, detail: &str) {
        self.all &= pass;
        self.lines.push(format!("{},{},{}", name, if pass { "PASS" } else { "FAIL" }, detail));
    }
}

pub fn estimates(cfg: &RunConfig, out: &Output, suite: &str, exponent_offset: f64) -> Result<Outcome> {
    let mut v = Verdicts { lines: Vec::new(), all: true };
    if suite == "symbolic" || suite == "all" {
        let n = cfg.order.max(1).min(8);
        let alpha = alpha_sequence(n);
        let mut text = format!("alpha={}\n", alpha.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(","));
        for m in 1..=n {
            let r = recursion_polynomials(m);
            text.push_str(&format!("P_{}={}\n", m, r.p));
            for (q, qp) in r.q.iter().enumerate() {
                text.push_str(&format!("Q_{},{}={}\n", m, q, qp));
            }
            let s = check_star_identity(m)?;
            v.push(&format!("star_identity_{}", m), s.pass, &format!("alpha={}", s.alpha));
        }
        out.emit("symbolic.txt", &text)?;
    }
    if suite == "numeric" || suite == "all" {
        let fx = cfg.fixture_or("flat_boundary")?;
        let f = fx.maps[0].clone();
        let xi = SzekeresField::new(f.clone(), szekeres_opts(cfg))?;
        let xs = geometric_abscissae(&real(0.2), cfg.grid.unwrap_or(16));
        let emit = |name: &str, r: flowkit::Result<EstimateReport>, v: &mut Verdicts| -> Result<()> {
            match r {
                Ok(r) => {
                    out.emit(&format!("{}.csv", name), &r.to_csv())?;
                    v.push(name, r.pass, &r.summary);
                }
                Err(flowkit::Error::Precondition(m)) => v.lines.push(format!("{},SKIPPED,{}", name, m)),
                Err(e) => return Err(e.into()),
            }
            Ok(())
        };
        emit("ratio", check_ratio_lemma(f.as_ref(), &xs, 256), &mut v)?;
        emit("equivalence", check_equivalence_lemma(f.as_ref(), &xi, &xs, 16), &mut v)?;
        for n in 1..=3 {
            let target = n as f64 + exponent_offset;
            emit(&format!("exponent_{}", n), check_exponent(f.as_ref(), &xi, n, &xs, target, 0.2, 16), &mut v)?;
        }
        emit("log_df_flat_norm", check_flat_norm_diffeo(f.as_ref(), 2, &xs, 16), &mut v)?;
        // interior points for the pointwise identities, drawn from the seed
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for x in (0..2).map(|_| real(rng.gen_range(0.05..0.95))) {
            let m = mu_phi_values(f.as_ref(), &xi, 4, &x)?;
            let worst = m.lemma_residual.iter().chain(&m.relation_residual).cloned().fold(0.0, f64::max);
            v.push(&format!("mu_identity_x={:.6}", x.to_f64()), worst <= 1e-8, &format!("max residual {:.3e}", worst));
        }
        let s = check_series_phi(f.as_ref(), &xi, 2, &real(0.3))?;
        v.push("series_n=2_x=0.3", s.pass, &format!("rel error {:.3e}", s.rel_error));
    }
    let mut text = "check,verdict,detail\n".to_string();
    for l in &v.lines {
        text.push_str(l);
        text.push('\n');
    }
    out.emit("verdicts.csv", &text)?;
    Ok(if v.all { Outcome::Pass } else { Outcome::Fail })
}

pub fn rotation(cfg: &RunConfig, out: &Output, iterations: usize) -> Result<Outcome> {
    let base = match (&cfg.expr, &cfg.alpha) {
        (Some(s), _) => CircleLift::from_map(parse_map(s, Interval::unit())?)?,
        (None, Some(a)) => CircleLift::rotation(a),
        (None, None) => CircleLift::rotation(&(real(2).sqrt() - 1u32)),
    };
    let lift = match &cfg.fixture {
        // conjugation by the sine lift x + ε·sin(2πx)/(2π)
        Some(name) if name == "conjugated" => {
            CircleLift::conjugate(&CircleLift::sine(&cfg.eps.clone().unwrap_or_else(|| real(0.5)))?, &base)
        }
        Some(name) => {
            return Err(
                flowkit::Error::Config(format!("rotation takes --fixture conjugated only, got {:?}", name)).into()
            )
        }
        None => base,
    };
    let r = rotation_number(&lift, iterations)?;
    out.emit("rotation.txt", &r.to_string())?;
    Ok(Outcome::Pass)
}

pub fn basis(out: &Output, rho: &str) -> Result<Outcome> {
    let rho = parse_rho(rho)?;
    let b = lattice_basis(&rho)?;
    let mut text = b.to_csv();
    text.push_str(&format!("# k={} det={}\n", b.k, b.determinant()));
    out.emit("basis.csv", &text)?;
    Ok(Outcome::Pass)
}

pub fn path(cfg: &RunConfig, out: &Output) -> Result<Outcome> {
    let (f, g) = cfg.pair("hyperbolic")?;
    let dom = f.domain();
    let c = classify_pair(f.clone(), g.clone(), &classify_opts(cfg))?;
    let tol = cfg.tol.clone().unwrap_or_else(|| real(1e-10));
    let dist = |a: &dyn Diffeo, b: &dyn Diffeo| -> flowkit::Result<Real> {
        Ok(ck_norm_with(|x, p| a.disp_jet(x, p)?.sub(&b.disp_jet(x, p)?), 0, &dom, 16)?.value)
    };
    let id = Identity { domain: dom.clone() };
    let mut rows = Vec::new();
    let mut ok = true;
    for t in linspace(&zero(), &one(), cfg.grid.unwrap_or(5).max(2)) {
        let (ft, gt) = path_to_identity(&c, &t, &dom)?;
        let res = commutation_residual(ft.as_ref(), gt.as_ref(), 0, &dom, 16)?.value;
        let end = if t.is_zero() {
            Some(dist(ft.as_ref(), &id)?.max(&dist(gt.as_ref(), &id)?))
        } else if t == 1 {
            Some(dist(ft.as_ref(), f.as_ref())?.max(&dist(gt.as_ref(), g.as_ref())?))
        } else {
            None
        };
        ok &= res <= tol && end.as_ref().map(|e| *e <= tol).unwrap_or(true);
        rows.push(vec![num(&t), num(&res), end.as_ref().map(num).unwrap_or_default()]);
    }
    let mut text = classification_text(&c);
    text.push_str(&csv_text(&["t".into(), "commutation_residual".into(), "endpoint_distance".into()], &rows)?);
    out.emit("path.csv", &text)?;
    Ok(if ok { Outcome::Pass } else { Outcome::Fail })
}
