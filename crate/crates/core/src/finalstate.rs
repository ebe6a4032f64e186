//! Final-state ladders: corrected profiles `(w_j, v_j)` built from final
//! data, and the inverse-side ladder built from a solved initial value
//! problem.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{norm_x, norm_z, DataPair, Field, Order};
use crate::lattice::Lattice;
use crate::params::ExponentLadder;
use crate::waveops::{
    apply_k, apply_l, apply_r, difference_source, nonlinearity, TruncationPolicy,
};

/// Relative slack when checking that data lie in their `Y_ν(ε)` class.
const CLASS_SLACK: f64 = 1e-9;

/// Forward ladder `w_0..=w_{ℓ+1}`, `v_0..=v_{ℓ+1}`.
#[derive(Debug, Clone)]
pub struct Ladder {
    pub w: Vec<Field>,
    pub v: Vec<Field>,
    /// `w_{j+1} - w_j` as computed, free of cancellation.
    pub dw: Vec<Field>,
    /// `v_{j+1} - v_j` as computed.
    pub dv: Vec<Field>,
    pub params: ExponentLadder,
    pub eps: f64,
}

impl Ladder {
    /// Anchor of the generalized final value problem.
    pub fn anchor(&self) -> (&Field, &Field) {
        (self.w.last().unwrap(), self.v.last().unwrap())
    }

    pub fn depth(&self) -> usize {
        self.w.len() - 1
    }

    /// `w_j - w_0`, summed from the stored increments.
    pub fn w_offset(&self, j: usize) -> Result<Field> {
        sum_increments(&self.w[0], &self.dw[..j])
    }

    /// `v_j - v_0`, summed from the stored increments.
    pub fn v_offset(&self, j: usize) -> Result<Field> {
        sum_increments(&self.v[0], &self.dv[..j])
    }
}

fn sum_increments(base: &Field, steps: &[Field]) -> Result<Field> {
    let mut acc = Field::zeros(&base.lattice);
    for d in steps {
        acc = acc.add(d)?;
    }
    Ok(acc)
}

pub(crate) fn check_class(d: &DataPair, nu: f64, which: usize) -> Result<()> {
    let sup = d.y_sup(nu);
    if sup > d.eps * (1.0 + CLASS_SLACK) {
        return Err(Error::Config(format!(
            "datum {which} has weighted sup {sup:e} above its amplitude {:e} for index {nu}",
            d.eps
        )));
    }
    Ok(())
}

/// Builds `w_0 = K f1`, `v_0 = K f2` and, for long-range exponents, the
/// corrections up to depth `ℓ + 1`.
pub fn build_final_ladder(
    f1: &DataPair,
    f2: &DataPair,
    lp: &ExponentLadder,
    lat: &Arc<Lattice>,
    trunc: &TruncationPolicy,
) -> Result<Ladder> {
    check_class(f1, lp.kappas.kappa1, 1)?;
    check_class(f2, lp.kappas.kappa2, 2)?;
    let (p, q) = (lp.exponents.p, lp.exponents.q);
    let w0 = apply_k(f1, lat)?;
    let v0 = apply_k(f2, lat)?;
    let mut w = vec![w0];
    let mut v = vec![v0];
    let mut dw = Vec::new();
    let mut dv = Vec::new();
    if lp.exponents.regime.is_long_range() {
        for j in 0..=lp.ell() {
            let step_w = if j == 0 {
                apply_l(&nonlinearity(&v[0], p))
            } else {
                apply_l(&difference_source(&v[j], &v[j - 1], p)?)
            };
            let wn = w[j].add(&step_w)?;
            let step_v = if j == 0 {
                apply_r(&nonlinearity(&wn, q), trunc)?
            } else {
                apply_r(&difference_source(&wn, &w[j], q)?, trunc)?
            };
            let vn = v[j].add(&step_v)?;
            w.push(wn);
            v.push(vn);
            dw.push(step_w);
            dv.push(step_v);
        }
    }
    Ok(Ladder {
        w,
        v,
        dw,
        dv,
        params: lp.clone(),
        eps: f1.eps.max(f2.eps),
    })
}

/// Inverse-side ladder derived from a solved pair `(u1, u2)`.
#[derive(Debug, Clone)]
pub struct InverseLadder {
    /// Final state of the first component.
    pub w_star: Field,
    /// Free final state of the second component.
    pub v0_star: Field,
    /// `w_0*..=w_ℓ*`.
    pub w: Vec<Field>,
    /// `v_0*..=v_ℓ*`.
    pub v: Vec<Field>,
}

/// `v_0* = u2 - R(|∂_t u1|^q)`, `w_0* = K φ1`, the intermediate
/// `w_j*, v_j*`, and `w* = u1 - R(|∂_t u2|^p - |∂_t v_ℓ*|^p)`.
pub fn build_inverse_ladder(
    u1: &Field,
    u2: &Field,
    phi1: &DataPair,
    lp: &ExponentLadder,
    trunc: &TruncationPolicy,
) -> Result<InverseLadder> {
    let (p, q) = (lp.exponents.p, lp.exponents.q);
    let lat = &u1.lattice;
    let v0 = u2.sub(&apply_r(&nonlinearity(u1, q), trunc)?)?;
    let w0 = apply_k(phi1, lat)?;
    let mut w = vec![w0];
    let mut v = vec![v0];
    for j in 1..=lp.ell() {
        let wj = w[0].add(&apply_l(&nonlinearity(&v[j - 1], p)))?;
        let vj = v[0].add(&apply_r(&nonlinearity(&wj, q), trunc)?)?;
        w.push(wj);
        v.push(vj);
    }
    let g = difference_source(u2, v.last().unwrap(), p)?;
    let w_star = u1.sub(&apply_r(&g, trunc)?)?;
    Ok(InverseLadder {
        v0_star: v[0].clone(),
        w_star,
        w,
        v,
    })
}

/// One ladder norm measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub j: usize,
    pub norm_name: String,
    pub value: f64,
    pub eps: f64,
    /// Power of `ε` the measurement is expected to scale with.
    pub expected_exponent: f64,
    /// Observed power from a run at a second amplitude.
    pub scaling_exponent: Option<f64>,
}

fn record(j: usize, name: String, value: f64, eps: f64, expected: f64) -> NormRecord {
    NormRecord {
        j,
        norm_name: name,
        value,
        eps,
        expected_exponent: expected,
        scaling_exponent: None,
    }
}

/// Norms of the ladder members and of their step differences.
pub fn ladder_norm_report(l: &Ladder) -> Result<Vec<NormRecord>> {
    let lp = &l.params;
    let (p, q) = (lp.exponents.p, lp.exponents.q);
    let (k1, k2) = (lp.kappas.kappa1, lp.kappas.kappa2);
    let eps = l.eps;
    let mut out = Vec::new();
    for j in 0..l.w.len() {
        out.push(record(
            j,
            "w Z2(kappa1)".into(),
            norm_z(&l.w[j], Order::Two, k1),
            eps,
            1.0,
        ));
        out.push(record(
            j,
            "v X2(kappa2)".into(),
            norm_x(&l.v[j], Order::Two, k2),
            eps,
            1.0,
        ));
    }
    if l.w.len() >= 2 {
        let (dw, dv) = (&l.dw[0], &l.dv[0]);
        out.push(record(
            0,
            "w step Z2(kappa1)".into(),
            norm_z(dw, Order::Two, k1),
            eps,
            p,
        ));
        out.push(record(
            0,
            "v step Z2(kappa2)".into(),
            norm_z(dv, Order::Two, k2),
            eps,
            q,
        ));
    }
    for j in 1..l.w.len().saturating_sub(1) {
        let (dw, dv) = (&l.dw[j], &l.dv[j]);
        let wa = k1 * lp.a[j];
        let va = lp.a[j + 1];
        let b_prev = lp.b_at(j - 1);
        let big_b_prev = lp.big_b_at(j as isize - 1);
        out.push(record(
            j,
            format!("w step Z1({wa})"),
            norm_z(dw, Order::One, wa),
            eps,
            b_prev + p - 1.0,
        ));
        out.push(record(
            j,
            format!("w step Z2({wa})"),
            norm_z(dw, Order::Two, wa),
            eps,
            big_b_prev,
        ));
        out.push(record(
            j,
            format!("v step Z1({va})"),
            norm_z(dv, Order::One, va),
            eps,
            lp.b_at(j),
        ));
        out.push(record(
            j,
            format!("v step Z2({va})"),
            norm_z(dv, Order::Two, va),
            eps,
            big_b_prev + q - 1.0,
        ));
    }
    Ok(out)
}

/// Fills `scaling_exponent` of `at_eps` from matching records of a run at
/// another amplitude.
pub fn attach_scaling(at_eps: &[NormRecord], at_other: &[NormRecord]) -> Vec<NormRecord> {
    at_eps
        .iter()
        .map(|a| {
            let mut out = a.clone();
            out.scaling_exponent = at_other
                .iter()
                .find(|b| b.j == a.j && b.norm_name == a.norm_name)
                .and_then(|b| scaling_exponent(a.value, a.eps, b.value, b.eps));
            out
        })
        .collect()
}

/// `log(v_a / v_b) / log(ε_a / ε_b)`, or `None` when undefined.
pub fn scaling_exponent(va: f64, ea: f64, vb: f64, eb: f64) -> Option<f64> {
    if va > 0.0 && vb > 0.0 && ea > 0.0 && eb > 0.0 && ea != eb {
        Some((va / vb).ln() / (ea / eb).ln())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_profile, trace_at_zero, ProfileFamily};
    use crate::lattice::GridSpec;
    use crate::params::ladder_for;

    fn lat(cells: usize) -> Arc<Lattice> {
        Arc::new(Lattice::new(GridSpec::new(8.0, 8.0, cells)).unwrap())
    }

    #[test]
    fn zero_data_give_zero_ladder() {
        let l = lat(32);
        let lp = ladder_for(1.5, 5.5).unwrap();
        let z = DataPair::zero(l.h, l.data_len());
        let trunc = TruncationPolicy::for_lattice(&l);
        let lad = build_final_ladder(&z, &z, &lp, &l, &trunc).unwrap();
        assert_eq!(lad.depth(), 2);
        assert!(lad.w.iter().chain(&lad.v).all(Field::is_zero));
        let rep = ladder_norm_report(&lad).unwrap();
        assert!(rep.iter().all(|r| r.value == 0.0));
        let inv = build_inverse_ladder(&lad.w[0], &lad.v[0], &z, &lp, &trunc).unwrap();
        assert!(inv.w_star.is_zero() && inv.v0_star.is_zero());
    }

    #[test]
    fn ladder_structure_and_shared_data() {
        let l = lat(32);
        let lp = ladder_for(1.8, 4.0).unwrap();
        let f1 = make_profile(ProfileFamily::Gaussian, lp.kappas.kappa1, 0.05, &l).unwrap();
        let f2 = make_profile(ProfileFamily::Gaussian, lp.kappas.kappa2, 0.05, &l).unwrap();
        let trunc = TruncationPolicy::for_lattice(&l);
        let lad = build_final_ladder(&f1, &f2, &lp, &l, &trunc).unwrap();
        assert_eq!(lad.w.len(), 2);
        let d0 = trace_at_zero(&lad.w[0]);
        let d1 = trace_at_zero(&lad.w[1]);
        for j in 0..d0.len() {
            assert!((d0.f[j] - d1.f[j]).abs() <= 1e-12);
            assert!((d0.g[j] - d1.g[j]).abs() <= 1e-12);
        }
        assert!(
            build_final_ladder(&f1.scale(3.0).with_class(0.8, 0.05), &f2, &lp, &l, &trunc).is_err()
        );
    }

    #[test]
    fn short_range_ladder_is_free_pair() {
        let l = lat(16);
        let lp = ladder_for(3.0, 3.0).unwrap();
        let f = make_profile(ProfileFamily::Gaussian, 2.0, 0.01, &l).unwrap();
        let lad = build_final_ladder(&f, &f, &lp, &l, &TruncationPolicy::for_lattice(&l)).unwrap();
        assert_eq!(lad.depth(), 0);
    }

    #[test]
    fn scaling_exponent_of_power_law() {
        let e = scaling_exponent(0.01f64.powf(4.2), 0.01, 0.005f64.powf(4.2), 0.005).unwrap();
        assert!((e - 4.2).abs() < 1e-12);
        assert!(scaling_exponent(0.0, 0.01, 1.0, 0.005).is_none());
    }
}
