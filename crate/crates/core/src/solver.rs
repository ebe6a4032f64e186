//! Picard iteration for the final value problems and the initial value
//! problem, measured in the regime-specific metrics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{norm_z, DataPair, Field, Order, SourceField};
use crate::finalstate::{check_class, Ladder};
use crate::lattice::Lattice;
use crate::params::{ExponentLadder, Regime};
use crate::waveops::{apply_k, apply_l, apply_r, nonlinearity, TruncationPolicy};
use std::sync::Arc;

/// Which metric family to measure iterates in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    ShortRange,
    LongRange,
    PEqualsTwo,
}

/// Metric on pairs of fields together with the radius of the ball the
/// iterates should stay in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub kind: MetricKind,
    /// Weight index of the first component.
    pub nu1: f64,
    /// Weight index of the second component.
    pub nu2: f64,
    /// Power of the first-order terms (`p - 1`); unused unless long range.
    pub power: f64,
    pub radius: f64,
}

impl MetricSpec {
    /// `Z²(κ1) + Z²(κ2)` with radius `ε`.
    pub fn short_range(lp: &ExponentLadder, eps: f64) -> Self {
        MetricSpec {
            kind: MetricKind::ShortRange,
            nu1: lp.kappas.kappa1,
            nu2: lp.kappas.kappa2,
            power: 1.0,
            radius: eps,
        }
    }

    /// Metric of the generalized final value problem for `lp`'s regime.
    pub fn for_long(lp: &ExponentLadder, eps: f64) -> Result<Self> {
        let (p, q) = (lp.exponents.p, lp.exponents.q);
        match lp.exponents.regime {
            Regime::PEqualsTwo => Ok(MetricSpec {
                kind: MetricKind::PEqualsTwo,
                nu1: lp.kappas.kappa2,
                nu2: lp.kappas.kappa2,
                power: 1.0,
                radius: eps.powf(q),
            }),
            Regime::LongRangeSimple | Regime::LongRangeIterated => {
                let ell = lp.ell();
                let a_next = lp.a[ell + 1];
                Ok(MetricSpec {
                    kind: MetricKind::LongRange,
                    nu1: lp.kappas.kappa1 * a_next,
                    nu2: a_next,
                    power: p - 1.0,
                    radius: eps.powf((p - 1.0) * lp.b_at(ell)),
                })
            }
            Regime::ShortRange => Err(Error::WrongRegime(
                "the long-range metric needs 1 < p <= 2".into(),
            )),
        }
    }
}

fn component_distance(d: &Field, nu: f64, m: &MetricSpec) -> f64 {
    let z2 = norm_z(d, Order::Two, nu);
    match m.kind {
        MetricKind::LongRange => z2 + norm_z(d, Order::One, nu).powf(m.power),
        _ => z2,
    }
}

/// `d((a1, a2), (b1, b2))` for the metric `m`.
pub fn metric_d(a: (&Field, &Field), b: (&Field, &Field), m: &MetricSpec) -> Result<f64> {
    let d1 = a.0.sub(b.0)?;
    let d2 = a.1.sub(b.1)?;
    Ok(component_distance(&d1, m.nu1, m) + component_distance(&d2, m.nu2, m))
}

/// Iteration controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    /// Also accept a step this small relative to the distance from the
    /// anchor.
    pub rel_tol: Option<f64>,
    pub max_iters: usize,
    /// Ratio every step after the first must stay under for the run to
    /// count as a contraction certificate.
    pub ratio_bound: f64,
    /// Two consecutive ratios above this abort the solve.
    pub divergence_ratio: f64,
    /// Abort when the anchor distance exceeds this multiple of the radius.
    pub domain_factor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            rel_tol: None,
            max_iters: 50,
            ratio_bound: 0.5,
            divergence_ratio: 0.9,
            domain_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Distance to the previous iterate.
    pub distance: f64,
    pub anchor_distance: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub ratio_bound: f64,
}

impl IterationTrace {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// Ratios recorded after the first step.
    pub fn ratios(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.ratio).collect()
    }

    /// All ratios after the first step are within the bound.
    pub fn certified(&self) -> bool {
        self.ratios().iter().all(|r| *r <= self.ratio_bound)
    }

    /// CSV with columns `iter,distance,ratio`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iter,distance,ratio")?;
        for r in &self.records {
            match r.ratio {
                Some(x) => writeln!(w, "{},{:e},{:e}", r.iteration, r.distance, x)?,
                None => writeln!(w, "{},{:e},", r.iteration, r.distance)?,
            }
        }
        Ok(())
    }
}

/// The integral map `T` of one of the three problems.
#[derive(Debug, Clone)]
pub enum FixedPointMap {
    /// `T(u1, u2) = (w0 + R|∂_t u2|^p, v0 + R|∂_t u1|^q)`.
    FvpShort {
        w0: Field,
        v0: Field,
        p: f64,
        q: f64,
        trunc: TruncationPolicy,
    },
    /// `T(u1, u2) = (w_{ℓ+1} + R G(u2, v_ℓ), v_{ℓ+1} + R H(u1, w_{ℓ+1}))`.
    FvpLong {
        w_top: Field,
        v_top: Field,
        /// `|∂_t v_ℓ|^p`
        g_base: SourceField,
        /// `|∂_t w_{ℓ+1}|^q`
        h_base: SourceField,
        p: f64,
        q: f64,
        trunc: TruncationPolicy,
    },
    /// `T(u1, u2) = (K φ1 + L|∂_t u2|^p, K φ2 + L|∂_t u1|^q)`.
    Ivp {
        k1: Field,
        k2: Field,
        p: f64,
        q: f64,
    },
}

fn minus(mut a: SourceField, b: &SourceField) -> SourceField {
    for k in 0..a.f.len() {
        a.f[k] -= b.f[k];
        a.f_r[k] -= b.f_r[k];
    }
    a
}

impl FixedPointMap {
    pub fn fvp_long(ladder: &Ladder, trunc: &TruncationPolicy) -> Self {
        let lp = &ladder.params;
        let (p, q) = (lp.exponents.p, lp.exponents.q);
        let top = ladder.depth();
        let (w_top, v_top) = ladder.anchor();
        FixedPointMap::FvpLong {
            w_top: w_top.clone(),
            v_top: v_top.clone(),
            g_base: nonlinearity(&ladder.v[top - 1], p),
            h_base: nonlinearity(w_top, q),
            p,
            q,
            trunc: *trunc,
        }
    }

    /// Pair the iteration starts from and is measured against.
    pub fn anchor(&self) -> (&Field, &Field) {
        match self {
            FixedPointMap::FvpShort { w0, v0, .. } => (w0, v0),
            FixedPointMap::FvpLong { w_top, v_top, .. } => (w_top, v_top),
            FixedPointMap::Ivp { k1, k2, .. } => (k1, k2),
        }
    }

    /// Maps the offsets `u - anchor` of an iterate to the offsets of its
    /// image under `T`.
    pub fn correction(&self, d1: &Field, d2: &Field) -> Result<(Field, Field)> {
        let (a1, a2) = self.anchor();
        let u1 = a1.add(d1)?;
        let u2 = a2.add(d2)?;
        match self {
            FixedPointMap::FvpShort { p, q, trunc, .. } => Ok((
                apply_r(&nonlinearity(&u2, *p), trunc)?,
                apply_r(&nonlinearity(&u1, *q), trunc)?,
            )),
            FixedPointMap::FvpLong {
                g_base,
                h_base,
                p,
                q,
                trunc,
                ..
            } => {
                let g = minus(nonlinearity(&u2, *p), g_base);
                let h = minus(nonlinearity(&u1, *q), h_base);
                Ok((apply_r(&g, trunc)?, apply_r(&h, trunc)?))
            }
            FixedPointMap::Ivp { p, q, .. } => Ok((
                apply_l(&nonlinearity(&u2, *p)),
                apply_l(&nonlinearity(&u1, *q)),
            )),
        }
    }

    /// `T(u1, u2)`.
    pub fn apply(&self, u1: &Field, u2: &Field) -> Result<(Field, Field)> {
        let (a1, a2) = self.anchor();
        let (c1, c2) = self.correction(&u1.sub(a1)?, &u2.sub(a2)?)?;
        Ok((a1.add(&c1)?, a2.add(&c2)?))
    }

    /// `d(T(u), u)` for a solution given by its offsets from the anchor.
    pub fn defect(&self, sol: &Solution, m: &MetricSpec) -> Result<f64> {
        let (c1, c2) = self.correction(&sol.d1, &sol.d2)?;
        metric_d((&c1, &c2), (&sol.d1, &sol.d2), m)
    }
}

/// Solved pair with its iteration history.
#[derive(Debug, Clone)]
pub struct Solution {
    pub u1: Field,
    pub u2: Field,
    /// `u1` minus the anchor, accumulated without cancellation.
    pub d1: Field,
    /// `u2` minus the anchor.
    pub d2: Field,
    pub trace: IterationTrace,
}

/// Picard iteration of `map` from its anchor.
pub fn picard(
    map: &FixedPointMap,
    m: &MetricSpec,
    opts: &SolverOptions,
    check_domain: bool,
) -> Result<Solution> {
    let (a1, a2) = map.anchor();
    let mut d1 = Field::zeros(&a1.lattice);
    let mut d2 = Field::zeros(&a2.lattice);
    let zero = Field::zeros(&a1.lattice);
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut above = 0;
    let finish = |d1: Field, d2: Field, records, termination| -> Result<Solution> {
        Ok(Solution {
            u1: a1.add(&d1)?,
            u2: a2.add(&d2)?,
            d1,
            d2,
            trace: IterationTrace {
                records,
                termination,
                ratio_bound: opts.ratio_bound,
            },
        })
    };
    for it in 1..=opts.max_iters {
        let (n1, n2) = map.correction(&d1, &d2)?;
        let distance = metric_d((&n1, &n2), (&d1, &d2), m)?;
        let anchor_distance = metric_d((&n1, &n2), (&zero, &zero), m)?;
        let ratio = records
            .last()
            .and_then(|prev| (prev.distance > 0.0).then(|| distance / prev.distance));
        records.push(IterationRecord {
            iteration: it,
            distance,
            anchor_distance,
            ratio,
        });
        d1 = n1;
        d2 = n2;
        if !distance.is_finite() {
            return Err(Error::Diverged(it));
        }
        if check_domain && anchor_distance > opts.domain_factor * m.radius {
            return Err(Error::LeftDomain {
                distance: anchor_distance,
                limit: opts.domain_factor * m.radius,
            });
        }
        let rel_ok = opts
            .rel_tol
            .is_some_and(|rt| distance <= rt * anchor_distance);
        if distance <= opts.tol || rel_ok {
            return finish(d1, d2, records, Termination::Converged);
        }
        match ratio {
            Some(r) if r > opts.divergence_ratio => above += 1,
            _ => above = 0,
        }
        if above >= 2 {
            let ratios = records.iter().filter_map(|r| r.ratio).collect();
            return Err(Error::NoContraction {
                iteration: it,
                ratios,
                bound: opts.divergence_ratio,
            });
        }
    }
    finish(d1, d2, records, Termination::MaxIters)
}

fn eps_of(f1: &DataPair, f2: &DataPair) -> f64 {
    f1.eps.max(f2.eps)
}

/// Final value problem for `p > 2`, anchored at the free pair.
pub fn solve_fvp_short(
    f1: &DataPair,
    f2: &DataPair,
    lp: &ExponentLadder,
    lat: &Arc<Lattice>,
    trunc: &TruncationPolicy,
    opts: &SolverOptions,
) -> Result<Solution> {
    if lp.exponents.regime != Regime::ShortRange {
        return Err(Error::WrongRegime(
            "short-range final value problem needs p > 2".into(),
        ));
    }
    check_class(f1, lp.kappas.kappa1, 1)?;
    check_class(f2, lp.kappas.kappa2, 2)?;
    let map = FixedPointMap::FvpShort {
        w0: apply_k(f1, lat)?,
        v0: apply_k(f2, lat)?,
        p: lp.exponents.p,
        q: lp.exponents.q,
        trunc: *trunc,
    };
    picard(
        &map,
        &MetricSpec::short_range(lp, eps_of(f1, f2)),
        opts,
        false,
    )
}

/// Generalized final value problem anchored at the top of the ladder.
pub fn solve_fvp_long(
    ladder: &Ladder,
    trunc: &TruncationPolicy,
    opts: &SolverOptions,
) -> Result<Solution> {
    let lp = &ladder.params;
    let m = MetricSpec::for_long(lp, ladder.eps)?;
    let map = FixedPointMap::fvp_long(ladder, trunc);
    picard(&map, &m, opts, true)
}

/// Initial value problem from data `(φ1, φ2)`.
pub fn solve_ivp(
    phi1: &DataPair,
    phi2: &DataPair,
    lp: &ExponentLadder,
    lat: &Arc<Lattice>,
    opts: &SolverOptions,
) -> Result<Solution> {
    let map = FixedPointMap::Ivp {
        k1: apply_k(phi1, lat)?,
        k2: apply_k(phi2, lat)?,
        p: lp.exponents.p,
        q: lp.exponents.q,
    };
    picard(
        &map,
        &MetricSpec::short_range(lp, eps_of(phi1, phi2)),
        opts,
        false,
    )
}

/// Outcome of a contraction probe over a list of amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// `(ε, contracted)` in probe order.
    pub results: Vec<(f64, bool)>,
    /// Largest probed `ε` that contracted.
    pub estimate: Option<f64>,
    /// No run recorded a ratio, so nothing constrains `ε`.
    pub unconstrained: bool,
    /// Every `ε` below a successful one also succeeded.
    pub monotone: bool,
}

/// Runs `solve` at each `ε` and reports where the ratios stay in bound.
pub fn contraction_probe(
    eps_grid: &[f64],
    ratio_bound: f64,
    mut solve: impl FnMut(f64) -> Result<IterationTrace>,
) -> ProbeReport {
    let mut results = Vec::new();
    let mut any_ratio = false;
    for &eps in eps_grid {
        let ok = match solve(eps) {
            Ok(trace) => {
                any_ratio |= !trace.ratios().is_empty();
                trace.converged() && trace.ratios().iter().all(|r| *r <= ratio_bound)
            }
            Err(_) => {
                any_ratio = true;
                false
            }
        };
        results.push((eps, ok));
    }
    let estimate = results
        .iter()
        .filter(|(_, ok)| *ok)
        .map(|(e, _)| *e)
        .fold(None, |acc: Option<f64>, e| {
            Some(acc.map_or(e, |a| a.max(e)))
        });
    let monotone = match estimate {
        Some(top) => results.iter().all(|(e, ok)| *ok || *e > top),
        None => true,
    };
    let unconstrained = !any_ratio && results_all_ok(&results);
    ProbeReport {
        results,
        estimate,
        unconstrained,
        monotone,
    }
}

fn results_all_ok(results: &[(f64, bool)]) -> bool {
    results.iter().all(|(_, ok)| *ok)
}
