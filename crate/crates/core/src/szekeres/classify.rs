//! Classification of commuting pairs and paths of commuting pairs to the identity.

use std::fmt;
use std::sync::Arc;

use num_integer::Integer;

use crate::cfrac::snap;
use crate::diffeo::{
    ck_norm_with, compose_disp, fixed_points, Composite, Contact, Diffeo, DiffeoRef, Identity, Interval, Isotopy,
    Iterate, NormReport,
};
use crate::error::{Error, Result};
use crate::real::{real, Real};

use super::{translation_time, SzekeresField, SzekeresFlow, SzekeresOptions};

#[derive(Clone, Debug)]
pub struct ClassifyOptions {
    pub tol: Real,
    /// Largest denominator accepted for a rational translation number.
    pub q_max: i64,
    /// Sample points per component used for the translation number.
    pub samples: usize,
    /// Components sampled (largest first).
    pub components: usize,
    pub szekeres: SzekeresOptions,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions { tol: real(1e-9), q_max: 64, samples: 3, components: 3, szekeres: SzekeresOptions::default() }
    }
}

#[derive(Clone)]
pub enum PairClassification {
    Identity,
    /// `f = h^q`, `g = h^p`; `r·q + s·p = 1` and `h = f^r ∘ g^s`.
    Cyclic {
        h: DiffeoRef,
        p: i64,
        q: i64,
        r: i64,
        s: i64,
    },
    /// `g` is the time-`alpha` map of the Szekeres field of `f`.
    Flow {
        xi: Arc<SzekeresField>,
        alpha: Real,
    },
    Degenerate {
        witness: Real,
    },
}

impl fmt::Debug for PairClassification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairClassification::Identity => write!(f, "IDENTITY"),
            PairClassification::Cyclic { p, q, r, s, .. } => {
                write!(f, "CYCLIC(p={}, q={}, r={}, s={})", p, q, r, s)
            }
            PairClassification::Flow { alpha, .. } => write!(f, "FLOW(alpha={})", alpha),
            PairClassification::Degenerate { witness } => {
                write!(f, "DEGENERATE(witness={})", witness)
            }
        }
    }
}

impl PairClassification {
    pub fn variant(&self) -> &'static str {
        match self {
            PairClassification::Identity => "IDENTITY",
            PairClassification::Cyclic { .. } => "CYCLIC",
            PairClassification::Flow { .. } => "FLOW",
            PairClassification::Degenerate { .. } => "DEGENERATE",
        }
    }
}

/// `C^k` norm of `f∘g - g∘f` over `j`.
pub fn commutation_residual(
    f: &dyn Diffeo,
    g: &dyn Diffeo,
    k: usize,
    j: &Interval,
    samples: usize,
) -> Result<NormReport> {
    if f.is_identity() || g.is_identity() {
        return ck_norm_with(|x, p| Ok(crate::jet::Jet::zero(x, p)), k, j, samples);
    }
    ck_norm_with(
        |x, p| {
            let gx = g.disp_jet(x, p)?;
            let fgx = f.disp_jet(&real(x + &gx.coeffs[0]), p)?;
            let fx = f.disp_jet(x, p)?;
            let gfx = g.disp_jet(&real(x + &fx.coeffs[0]), p)?;
            compose_disp(&fgx, &gx).sub(&compose_disp(&gfx, &fx))
        },
        k,
        j,
        samples,
    )
}

fn looks_identity(f: &dyn Diffeo) -> Result<bool> {
    if f.is_identity() {
        return Ok(true);
    }
    let dom = f.domain();
    for x in crate::real::linspace(&dom.lo, &dom.hi, 17) {
        if !f.displacement(&x)?.is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// An interior point where both maps are declared (or detected) infinitely flat.
fn common_flat_point(f: &dyn Diffeo, g: &dyn Diffeo, resolution: usize) -> Result<Option<Real>> {
    let dom = f.domain();
    let interior = |x: &Real| *x > dom.lo && *x < dom.hi;
    let flat_points = |d: &dyn Diffeo| -> Result<Vec<Real>> {
        let rep = fixed_points(d, resolution)?;
        let mut v: Vec<Real> = rep.points.iter().filter(|p| p.contact == Contact::Flat).map(|p| p.at.clone()).collect();
        let (zs, _) = d.zeros().zeros_in(&dom.lo, &dom.hi, 4 * resolution);
        v.extend(zs.into_iter().filter(|z| z.flat).map(|z| z.at));
        Ok(v.into_iter().filter(|x| interior(x)).collect())
    };
    let pf = flat_points(f)?;
    if pf.is_empty() {
        return Ok(None);
    }
    let pg = flat_points(g)?;
    Ok(pf.into_iter().find(|x| pg.contains(x)))
}

/// Sample points inside the largest components of `Fix(f)`'s complement.
fn sample_points(xi: &SzekeresField, opts: &ClassifyOptions) -> Vec<Real> {
    let mut comps: Vec<Interval> = xi.report().components.iter().map(|(iv, _)| iv.clone()).collect();
    comps.sort_by(|a, b| b.width().partial_cmp(&a.width()).unwrap());
    let mut out = Vec::new();
    for iv in comps.into_iter().take(opts.components.max(1)) {
        let n = opts.samples.max(1);
        for i in 1..=n {
            let x = real(&iv.lo + iv.width() * i as u32 / (n as u32 + 1));
            out.push(x);
        }
    }
    out
}

/// Translation number of `g` relative to `f`, sampled across components; returns every sample.
pub fn translation_samples(xi: &SzekeresField, g: &dyn Diffeo, opts: &ClassifyOptions) -> Result<Vec<(Real, Real)>> {
    let mut out = Vec::new();
    for x in sample_points(xi, opts) {
        if xi.component(&x)?.is_none() {
            continue;
        }
        let gx = g.apply(&x)?;
        let tau = translation_time(xi, &x, &gx)?;
        out.push((x, tau));
    }
    if out.is_empty() {
        return Err(Error::Precondition("no sample point off the fixed-point set".into()));
    }
    Ok(out)
}

pub fn classify_pair(f: DiffeoRef, g: DiffeoRef, opts: &ClassifyOptions) -> Result<PairClassification> {
    let (fid, gid) = (looks_identity(f.as_ref())?, looks_identity(g.as_ref())?);
    match (fid, gid) {
        (true, true) => return Ok(PairClassification::Identity),
        // (id, g) generates the cyclic group of g
        (true, false) => return Ok(PairClassification::Cyclic { h: g, p: 1, q: 0, r: 0, s: 1 }),
        (false, true) => return Ok(PairClassification::Cyclic { h: f, p: 0, q: 1, r: 1, s: 0 }),
        _ => {}
    }
    if let Some(w) = common_flat_point(f.as_ref(), g.as_ref(), opts.szekeres.resolution)? {
        return Ok(PairClassification::Degenerate { witness: w });
    }
    let xi = Arc::new(SzekeresField::new(f.clone(), opts.szekeres.clone())?);
    let taus = translation_samples(&xi, g.as_ref(), opts)?;
    let tau = taus[0].1.clone();
    for (x, t) in &taus[1..] {
        let d = real(t - &tau).abs();
        if d > opts.tol {
            return Err(Error::InconsistentTau(format!(
                "τ = {} at x = {} but {} at x = {} (tol {})",
                tau.to_f64(),
                taus[0].0.to_f64(),
                t.to_f64(),
                x.to_f64(),
                opts.tol.to_f64()
            )));
        }
    }
    match snap(&tau, opts.q_max, &opts.tol) {
        Some((p, q)) if q > 0 => {
            // r·q + s·p = 1
            let e = i64::extended_gcd(&q, &p);
            debug_assert_eq!(e.gcd, 1);
            let (r, s) = (e.x, e.y);
            let fr: DiffeoRef = Arc::new(Iterate { base: f.clone(), k: r });
            let gs: DiffeoRef = Arc::new(Iterate { base: g.clone(), k: s });
            let h: DiffeoRef = Arc::new(Composite::new(fr, gs)?);
            Ok(PairClassification::Cyclic { h, p, q, r, s })
        }
        _ => Ok(PairClassification::Flow { xi, alpha: tau }),
    }
}

/// A commuting pair at time `t ∈ [0, 1]` joining `(id, id)` to the classified pair.
pub fn path_to_identity(c: &PairClassification, t: &Real, domain: &Interval) -> Result<(DiffeoRef, DiffeoRef)> {
    match c {
        PairClassification::Identity => {
            let id: DiffeoRef = Arc::new(Identity { domain: domain.clone() });
            Ok((id.clone(), id))
        }
        PairClassification::Flow { xi, alpha } => Ok((
            Arc::new(SzekeresFlow::new(xi.clone(), t.clone())),
            Arc::new(SzekeresFlow::new(xi.clone(), real(t * alpha))),
        )),
        PairClassification::Cyclic { h, p, q, .. } => {
            let ht: DiffeoRef = Arc::new(Isotopy { h: h.clone(), t: t.clone() });
            Ok((Arc::new(Iterate { base: ht.clone(), k: *q }), Arc::new(Iterate { base: ht, k: *p })))
        }
        PairClassification::Degenerate { witness } => {
            Err(Error::Precondition(format!("degenerate pair (common flat fixed point at {}) has no path", witness)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffeo::{fixtures, ExprMap};
    use crate::real::{from_ratio, one, rel_err};

    fn time(t: Real) -> DiffeoRef {
        Arc::new(fixtures::logistic_time_map(&t))
    }

    #[test]
    fn flow_and_cyclic() {
        let sqrt2 = real(2).sqrt();
        let c = classify_pair(time(one()), time(sqrt2.clone()), &ClassifyOptions::default()).unwrap();
        match &c {
            PairClassification::Flow { alpha, .. } => assert!(rel_err(alpha, &sqrt2, 0.0) < 1e-25),
            other => panic!("{:?}", other),
        }
        let c = classify_pair(time(real(3)), time(real(2)), &ClassifyOptions::default()).unwrap();
        match &c {
            PairClassification::Cyclic { h, p, q, r, s } => {
                assert_eq!((*p, *q, *r, *s), (2, 3, 1, -1));
                let x = from_ratio(3, 10);
                let want = fixtures::logistic_time_map(&one()).apply(&x).unwrap();
                assert!(rel_err(&h.apply(&x).unwrap(), &want, 0.0) < 1e-30);
            }
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn residual_examples() {
        let dom = Interval::unit();
        let sq: DiffeoRef = Arc::new(ExprMap::parse("x^2", dom.clone()).unwrap());
        let other: DiffeoRef = Arc::new(ExprMap::parse("x + x*(1-x)/2", dom.clone()).unwrap());
        let r = commutation_residual(sq.as_ref(), other.as_ref(), 0, &dom, 64).unwrap();
        assert!(r.value > 0.01);
        let id = Identity { domain: dom.clone() };
        assert_eq!(commutation_residual(&id, sq.as_ref(), 0, &dom, 64).unwrap().value, 0);
        let c = classify_pair(Arc::new(id.clone()), Arc::new(id), &ClassifyOptions::default()).unwrap();
        assert_eq!(c.variant(), "IDENTITY");
    }
}
