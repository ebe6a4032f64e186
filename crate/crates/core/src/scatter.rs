//! Wave operators, their inverses, and the scattering maps built from
//! them, with decay and amplitude-scaling diagnostics.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{check_y_membership, energy_norm, trace_at_zero, DataPair, Field};
use crate::finalstate::{build_final_ladder, build_inverse_ladder};
use crate::lattice::Lattice;
use crate::params::{ExponentLadder, Regime};
use crate::solver::{solve_fvp_long, solve_fvp_short, solve_ivp, IterationTrace, SolverOptions};
use crate::waveops::{apply_k, apply_l, apply_r, nonlinearity, TruncationPolicy};

/// Everything an operator run needs besides the data.
#[derive(Debug, Clone)]
pub struct OperatorConfig {
    pub lattice: Arc<Lattice>,
    pub ladder: ExponentLadder,
    pub trunc: TruncationPolicy,
    pub solver: SolverOptions,
    /// Probed smallness threshold; the scattering map refuses `ε > ε0/4`.
    pub eps0: Option<f64>,
}

impl OperatorConfig {
    pub fn new(lattice: Arc<Lattice>, ladder: ExponentLadder) -> Self {
        let trunc = TruncationPolicy::for_lattice(&lattice);
        OperatorConfig {
            lattice,
            ladder,
            trunc,
            solver: SolverOptions::default(),
            eps0: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    WavePlus,
    WaveMinus,
    GeneralizedPlus,
    GeneralizedMinus,
    Inverse,
    GeneralizedInverse,
}

impl OperatorKind {
    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::WavePlus => "wave_plus",
            OperatorKind::WaveMinus => "wave_minus",
            OperatorKind::GeneralizedPlus => "generalized_plus",
            OperatorKind::GeneralizedMinus => "generalized_minus",
            OperatorKind::Inverse => "inverse",
            OperatorKind::GeneralizedInverse => "generalized_inverse",
        }
    }

    fn reflected(self) -> Self {
        match self {
            OperatorKind::WavePlus => OperatorKind::WaveMinus,
            OperatorKind::GeneralizedPlus => OperatorKind::GeneralizedMinus,
            other => other,
        }
    }
}

/// `t ↦ ‖u(t) - anchor(t)‖_E` sampled at geometric times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySeries {
    pub label: String,
    /// Exponent of `(1+t)` the series should decay with.
    pub expected_exponent: f64,
    pub samples: Vec<(f64, f64)>,
}

impl EnergySeries {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,value")?;
        for (t, v) in &self.samples {
            writeln!(w, "{t:e},{v:e}")?;
        }
        Ok(())
    }
}

/// `r ↦ (1+r)^κ |||out(r) - in(r)|||` for one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftProfile {
    pub component: usize,
    pub kappa: f64,
    /// Power of `ε` the sup of the profile should scale with.
    pub expected_power: f64,
    pub samples: Vec<(f64, f64)>,
}

impl ShiftProfile {
    fn new(
        component: usize,
        kappa: f64,
        expected_power: f64,
        shift: &DataPair,
        r_max: f64,
    ) -> Self {
        let samples = (0..shift.len())
            .filter(|&j| shift.r(j) < r_max)
            .map(|j| {
                (
                    shift.r(j),
                    (1.0 + shift.r(j)).powf(kappa) * shift.triple_norm(j),
                )
            })
            .collect();
        ShiftProfile {
            component,
            kappa,
            expected_power,
            samples,
        }
    }

    pub fn sup(&self) -> f64 {
        self.samples.iter().map(|s| s.1).fold(0.0, f64::max)
    }

    /// Sup of `P(r)(1+r)^e` over the outer half of the samples divided by
    /// its sup over the inner half. Values near or below 1 mean the profile
    /// decays at least like `(1+r)^{-e}`.
    pub fn decay_ratio(&self, e: f64) -> f64 {
        let scaled: Vec<f64> = self
            .samples
            .iter()
            .map(|(r, v)| v * (1.0 + r).powf(e))
            .collect();
        let mid = scaled.len() / 2;
        let head = scaled[..mid].iter().cloned().fold(0.0, f64::max);
        let tail = scaled[mid..].iter().cloned().fold(0.0, f64::max);
        if head > 0.0 {
            tail / head
        } else {
            0.0
        }
    }
}

/// Result of checking data against `Y_κ(bound)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipCheck {
    pub component: usize,
    pub kappa: f64,
    pub bound: f64,
    pub sup: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub energy: Vec<EnergySeries>,
    pub shifts: Vec<ShiftProfile>,
    pub membership: Vec<MembershipCheck>,
    /// `(name, max abs deviation)` for representation identities.
    pub identities: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct OperatorResult {
    pub operator: OperatorKind,
    pub regime: Regime,
    pub eps: f64,
    pub output: (DataPair, DataPair),
    pub solution: (Field, Field),
    pub trace: IterationTrace,
    pub diagnostics: Diagnostics,
}

/// Geometric times `5, 7.5, …` up to `0.8 t_max`, snapped to rows.
pub fn sample_times(lat: &Lattice) -> Vec<f64> {
    let stop = 0.8 * lat.spec.t_max;
    let mut rows: Vec<usize> = Vec::new();
    let mut t = 5.0;
    while t <= stop * (1.0 + 1e-12) {
        let n = lat.nearest_row(t);
        if rows.last() != Some(&n) {
            rows.push(n);
        }
        t *= 1.5;
    }
    rows.into_iter().map(|n| lat.t(n)).collect()
}

fn energy_series(label: &str, expected: f64, d: &Field) -> Result<EnergySeries> {
    let samples = sample_times(&d.lattice)
        .into_iter()
        .map(|t| Ok((t, energy_norm(d, t)?)))
        .collect::<Result<_>>()?;
    Ok(EnergySeries {
        label: label.into(),
        expected_exponent: expected,
        samples,
    })
}

fn membership(out: &(DataPair, DataPair), lp: &ExponentLadder, eps: f64) -> Vec<MembershipCheck> {
    let kappas = [lp.kappas.kappa1, lp.kappas.kappa2];
    [&out.0, &out.1]
        .iter()
        .zip(kappas)
        .enumerate()
        .map(|(k, (d, kappa))| {
            let (passed, sup) = check_y_membership(d, kappa, 2.0 * eps);
            MembershipCheck {
                component: k + 1,
                kappa,
                bound: 2.0 * eps,
                sup,
                passed,
            }
        })
        .collect()
}

fn shifts(
    out: &(DataPair, DataPair),
    input: (&DataPair, &DataPair),
    lp: &ExponentLadder,
    powers: (f64, f64),
    r_max: f64,
) -> Result<Vec<ShiftProfile>> {
    let d1 = out.0.sub(&input.0.with_differenced_derivatives())?;
    let d2 = out.1.sub(&input.1.with_differenced_derivatives())?;
    Ok(vec![
        ShiftProfile::new(1, lp.kappas.kappa1, powers.0, &d1, r_max),
        ShiftProfile::new(2, lp.kappas.kappa2, powers.1, &d2, r_max),
    ])
}

fn eps_of(a: &DataPair, b: &DataPair) -> f64 {
    a.eps.max(b.eps)
}

fn classed(d: DataPair, nu: f64, eps: f64) -> DataPair {
    d.with_class(nu, eps)
}

/// `W₊`: final data at `t → ∞` to initial data, for `p > 2`.
pub fn wave_operator_plus(
    f1: &DataPair,
    f2: &DataPair,
    cfg: &OperatorConfig,
) -> Result<OperatorResult> {
    let lp = &cfg.ladder;
    if lp.exponents.regime != Regime::ShortRange {
        return Err(Error::WrongRegime("wave operator needs p > 2".into()));
    }
    let lat = &cfg.lattice;
    let sol = solve_fvp_short(f1, f2, lp, lat, &cfg.trunc, &cfg.solver)?;
    let eps = eps_of(f1, f2);
    let (p, q) = (lp.exponents.p, lp.exponents.q);
    let (k1, k2) = (lp.kappas.kappa1, lp.kappas.kappa2);
    let output = (
        classed(trace_at_zero(&sol.u1), k1, 2.0 * eps),
        classed(trace_at_zero(&sol.u2), k2, 2.0 * eps),
    );
    let diagnostics = Diagnostics {
        energy: vec![
            energy_series("u1 - K f1", -(k1 - 1.0), &sol.d1)?,
            energy_series("u2 - K f2", -(k2 - 1.0), &sol.d2)?,
        ],
        shifts: shifts(&output, (f1, f2), lp, (p, q), lat.spec.r_max)?,
        membership: membership(&output, lp, eps),
        identities: Vec::new(),
    };
    Ok(OperatorResult {
        operator: OperatorKind::WavePlus,
        regime: lp.exponents.regime,
        eps,
        output,
        solution: (sol.u1, sol.u2),
        trace: sol.trace,
        diagnostics,
    })
}

/// `W̃₊` for `1 < p <= 2`: ladder, generalized final value problem, traces.
pub fn generalized_wave_operator_plus(
    f1: &DataPair,
    f2: &DataPair,
    cfg: &OperatorConfig,
) -> Result<OperatorResult> {
    let lp = &cfg.ladder;
    if !lp.exponents.regime.is_long_range() {
        return Err(Error::WrongRegime(
            "generalized wave operator needs 1 < p <= 2".into(),
        ));
    }
    let lat = &cfg.lattice;
    let ladder = build_final_ladder(f1, f2, lp, lat, &cfg.trunc)?;
    let sol = solve_fvp_long(&ladder, &cfg.trunc, &cfg.solver)?;
    let eps = eps_of(f1, f2);
    let q = lp.exponents.q;
    let (k1, k2) = (lp.kappas.kappa1, lp.kappas.kappa2);
    let ell = lp.ell();
    let top = ladder.depth();
    let output = (
        classed(trace_at_zero(&sol.u1), k1, 2.0 * eps),
        classed(trace_at_zero(&sol.u2), k2, 2.0 * eps),
    );
    let u2_off = ladder.v_offset(top)?.add(&sol.d2)?;
    let big_b = lp.big_b_at(ell as isize);
    let diagnostics = Diagnostics {
        energy: vec![
            energy_series("u1 - w_top", -(k1 * lp.a[ell + 1] - 1.0), &sol.d1)?,
            energy_series("u2 - v_top", -(lp.a[ell + 2] - 1.0), &sol.d2)?,
            energy_series("u2 - v0", -(k2 - 1.0), &u2_off)?,
        ],
        shifts: shifts(&output, (f1, f2), lp, (big_b, q), lat.spec.r_max)?,
        membership: membership(&output, lp, eps),
        identities: Vec::new(),
    };
    Ok(OperatorResult {
        operator: OperatorKind::GeneralizedPlus,
        regime: lp.exponents.regime,
        eps,
        output,
        solution: (sol.u1, sol.u2),
        trace: sol.trace,
        diagnostics,
    })
}

/// `W₊` or `W̃₊` depending on the regime.
pub fn forward_operator(
    f1: &DataPair,
    f2: &DataPair,
    cfg: &OperatorConfig,
) -> Result<OperatorResult> {
    if cfg.ladder.exponents.regime.is_long_range() {
        generalized_wave_operator_plus(f1, f2, cfg)
    } else {
        wave_operator_plus(f1, f2, cfg)
    }
}

/// `W₋` (or `W̃₋`). The system is autonomous and invariant under
/// `t ↦ -t`, so this runs the plus construction and relabels it.
pub fn wave_operator_minus(
    f1: &DataPair,
    f2: &DataPair,
    cfg: &OperatorConfig,
) -> Result<OperatorResult> {
    let mut res = forward_operator(f1, f2, cfg)?;
    res.operator = res.operator.reflected();
    Ok(res)
}

/// `(W₊)⁻¹` or `(W̃₊)⁻¹`: solves the initial value problem from
/// `(φ1, φ2)` and reads off the final states.
pub fn wave_operator_inverse(
    phi1: &DataPair,
    phi2: &DataPair,
    cfg: &OperatorConfig,
) -> Result<OperatorResult> {
    let lp = &cfg.ladder;
    let lat = &cfg.lattice;
    let (p, q) = (lp.exponents.p, lp.exponents.q);
    let (k1, k2) = (lp.kappas.kappa1, lp.kappas.kappa2);
    let sol = solve_ivp(phi1, phi2, lp, lat, &cfg.solver)?;
    let eps = eps_of(phi1, phi2);
    let (w, v, l_part, kind, power1) = if lp.exponents.regime.is_long_range() {
        let inv = build_inverse_ladder(&sol.u1, &sol.u2, phi1, lp, &cfg.trunc)?;
        let l_part = apply_l(&nonlinearity(inv.v.last().unwrap(), p));
        let power1 = lp.big_b_at(lp.ell() as isize);
        (
            inv.w_star,
            inv.v0_star,
            Some(l_part),
            OperatorKind::GeneralizedInverse,
            power1,
        )
    } else {
        let w = sol
            .u1
            .sub(&apply_r(&nonlinearity(&sol.u2, p), &cfg.trunc)?)?;
        let v = sol
            .u2
            .sub(&apply_r(&nonlinearity(&sol.u1, q), &cfg.trunc)?)?;
        (w, v, None, OperatorKind::Inverse, p)
    };
    let output = (
        classed(trace_at_zero(&w), k1, 2.0 * eps),
        classed(trace_at_zero(&v), k2, 2.0 * eps),
    );
    let kf1 = apply_k(&output.0, lat)?;
    let kf2 = apply_k(&output.1, lat)?;
    let free1 = match &l_part {
        Some(l) => kf1.add(l)?,
        None => kf1,
    };
    let identities = vec![
        (
            "w = K f1 (+ L correction)".to_string(),
            report_max_diff(&w, &free1),
        ),
        ("v = K f2".to_string(), report_max_diff(&v, &kf2)),
    ];
    let diagnostics = Diagnostics {
        energy: vec![
            energy_series("u1 - final state", -(k1 - 1.0), &sol.u1.sub(&free1)?)?,
            energy_series("u2 - K f2", -(k2 - 1.0), &sol.u2.sub(&kf2)?)?,
        ],
        shifts: shifts(&output, (phi1, phi2), lp, (power1, q), lat.spec.r_max)?,
        membership: membership(&output, lp, eps),
        identities,
    };
    Ok(OperatorResult {
        operator: kind,
        regime: lp.exponents.regime,
        eps,
        output,
        solution: (sol.u1, sol.u2),
        trace: sol.trace,
        diagnostics,
    })
}

fn report_max_diff(a: &Field, b: &Field) -> f64 {
    let lat = &a.lattice;
    lat.report_nodes()
        .map(|(i, n)| {
            let k = lat.idx(i, n);
            (a.u[k] - b.u[k]).abs()
        })
        .fold(0.0, f64::max)
}

/// `S = (W₊)⁻¹ W₋` (or its generalized form) applied to data at `t → -∞`.
pub fn scattering_map(
    f1_minus: &DataPair,
    f2_minus: &DataPair,
    cfg: &OperatorConfig,
) -> Result<(DataPair, DataPair)> {
    let eps = eps_of(f1_minus, f2_minus);
    if let Some(e0) = cfg.eps0 {
        if eps > e0 / 4.0 {
            return Err(Error::Config(format!(
                "scattering map needs eps <= eps0/4 = {:e}, got {eps:e}",
                e0 / 4.0
            )));
        }
    }
    let mid = wave_operator_minus(f1_minus, f2_minus, cfg)?;
    for m in &mid.diagnostics.membership {
        if !m.passed {
            return Err(Error::RangeMismatch {
                component: m.component,
                sup: m.sup,
                bound: m.bound,
            });
        }
    }
    let back = wave_operator_inverse(&mid.output.0, &mid.output.1, cfg)?;
    Ok(back.output)
}

/// Observed power of `ε` for each shift profile of two runs at different
/// amplitudes, as `(component, expected, observed)`.
pub fn epsilon_scaling(a: &OperatorResult, b: &OperatorResult) -> Vec<(usize, f64, Option<f64>)> {
    a.diagnostics
        .shifts
        .iter()
        .zip(&b.diagnostics.shifts)
        .map(|(sa, sb)| {
            let observed = crate::finalstate::scaling_exponent(sa.sup(), a.eps, sb.sup(), b.eps);
            (sa.component, sa.expected_power, observed)
        })
        .collect()
}

/// Relative `Y_ν` sup-norm distance between two data pairs.
pub fn relative_y_error(got: &DataPair, want: &DataPair, nu: f64, r_max: f64) -> Result<f64> {
    let d = got.sub(want)?;
    let sup = |x: &DataPair| {
        (0..x.len())
            .filter(|&j| x.r(j) < r_max)
            .map(|j| (1.0 + x.r(j)).powf(nu) * x.triple_norm(j))
            .fold(0.0, f64::max)
    };
    let base = sup(want);
    Ok(if base > 0.0 { sup(&d) / base } else { sup(&d) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_profile, ProfileFamily};
    use crate::lattice::GridSpec;
    use crate::params::ladder_for;

    fn cfg(p: f64, q: f64) -> OperatorConfig {
        let lat = Arc::new(Lattice::new(GridSpec::new(10.0, 10.0, 32)).unwrap());
        OperatorConfig::new(lat, ladder_for(p, q).unwrap())
    }

    fn zero(c: &OperatorConfig) -> DataPair {
        DataPair::zero(c.lattice.h, c.lattice.data_len())
    }

    #[test]
    fn zero_data_map_to_zero() {
        for (p, q) in [(3.0, 3.0), (1.8, 4.0)] {
            let c = cfg(p, q);
            let z = zero(&c);
            for res in [
                forward_operator(&z, &z, &c).unwrap(),
                wave_operator_minus(&z, &z, &c).unwrap(),
                wave_operator_inverse(&z, &z, &c).unwrap(),
            ] {
                assert!(res
                    .output
                    .0
                    .f
                    .iter()
                    .chain(&res.output.1.g)
                    .all(|x| *x == 0.0));
            }
            let (a, b) = scattering_map(&z, &z, &c).unwrap();
            assert!(a.f.iter().chain(&b.f).all(|x| *x == 0.0));
        }
    }

    #[test]
    fn minus_matches_plus() {
        let c = cfg(3.0, 3.0);
        let f1 = make_profile(
            ProfileFamily::Gaussian,
            c.ladder.kappas.kappa1,
            0.05,
            &c.lattice,
        )
        .unwrap();
        let plus = wave_operator_plus(&f1, &f1, &c).unwrap();
        let minus = wave_operator_minus(&f1, &f1, &c).unwrap();
        assert_eq!(plus.output.0, minus.output.0);
        assert_eq!(plus.diagnostics.energy, minus.diagnostics.energy);
        assert_eq!(minus.operator, OperatorKind::WaveMinus);
    }

    #[test]
    fn wrong_regime_rejected() {
        let c = cfg(1.8, 4.0);
        let z = zero(&c);
        assert!(matches!(
            wave_operator_plus(&z, &z, &c),
            Err(Error::WrongRegime(_))
        ));
        let c = cfg(3.0, 3.0);
        assert!(matches!(
            generalized_wave_operator_plus(&z, &z, &c),
            Err(Error::WrongRegime(_))
        ));
    }

    #[test]
    fn scattering_refuses_large_eps() {
        let mut c = cfg(3.0, 3.0);
        c.eps0 = Some(0.1);
        let f = make_profile(
            ProfileFamily::Gaussian,
            c.ladder.kappas.kappa1,
            0.05,
            &c.lattice,
        )
        .unwrap();
        assert!(matches!(scattering_map(&f, &f, &c), Err(Error::Config(_))));
    }

    #[test]
    fn inverse_identities_hold() {
        let c = cfg(1.8, 4.0);
        let k = c.ladder.kappas;
        let phi1 = make_profile(ProfileFamily::Gaussian, k.kappa1, 1e-2, &c.lattice).unwrap();
        let phi2 = make_profile(ProfileFamily::Gaussian, k.kappa2, 1e-2, &c.lattice).unwrap();
        let res = wave_operator_inverse(&phi1, &phi2, &c).unwrap();
        for (name, dev) in &res.diagnostics.identities {
            assert!(*dev < 1e-9, "{name}: {dev:e}");
        }
    }

    #[test]
    fn sample_times_are_geometric() {
        let lat = Lattice::new(GridSpec::new(100.0, 100.0, 256)).unwrap();
        let ts = sample_times(&lat);
        assert!((ts[0] - 5.0).abs() < lat.h);
        assert!(*ts.last().unwrap() <= 80.0 + lat.h);
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn decay_ratio_detects_slow_profile() {
        let prof = |e: f64| ShiftProfile {
            component: 1,
            kappa: 0.0,
            expected_power: 1.0,
            samples: (0..100)
                .map(|j| (j as f64, (1.0 + j as f64).powf(-e)))
                .collect(),
        };
        assert!(prof(2.0).decay_ratio(1.5) < 1.0);
        assert!(prof(1.0).decay_ratio(1.5) > 1.0);
    }
}
