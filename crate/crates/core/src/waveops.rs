//! Free propagator `K`, forward Duhamel `L`, backward Duhamel `R`, source
//! builders and a finite-difference residual probe.
//!
//! With `U = r u` the radial problem becomes `U_tt - U_rr = r F` with odd
//! extension in `r`. `L` and `R` integrate `G = r F` over the backward and
//! forward light cones of each node by a diamond recursion on the
//! characteristic lattice, together with the two characteristic line
//! integrals that give the first derivatives.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{check_same, diff_r, DataPair, Field, Parity, SourceField, WeightParams};
use crate::lattice::Lattice;

pub const DEFAULT_TAIL_TOL: f64 = 1e-8;

/// Where the backward Duhamel integral is cut, and how the neglected tail
/// is bounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub t_infinity: f64,
    pub tail_tol: f64,
    /// Decay model of sources beyond `t_infinity`; `None` skips the check.
    pub weight_hint: Option<WeightParams>,
}

impl TruncationPolicy {
    /// Cut at the last stored level, no tail check.
    pub fn for_lattice(lat: &Lattice) -> Self {
        TruncationPolicy {
            t_infinity: lat.t(lat.levels),
            tail_tol: DEFAULT_TAIL_TOL,
            weight_hint: None,
        }
    }

    fn level(&self, lat: &Lattice) -> Result<usize> {
        let x = self.t_infinity / lat.h;
        if !(self.t_infinity.is_finite() && x >= 0.0) || x.round() as usize > lat.levels {
            return Err(Error::InvalidGrid(format!(
                "t_infinity {} outside the stored horizon {}",
                self.t_infinity,
                lat.t(lat.levels)
            )));
        }
        Ok(x.round() as usize)
    }
}

/// Free solution with data `(f, g)` in closed form.
pub fn apply_k(d: &DataPair, lat: &Arc<Lattice>) -> Result<Field> {
    if (d.h - lat.h).abs() > 1e-12 * lat.h {
        return Err(Error::LatticeMismatch);
    }
    let len = d.len();
    // Φ(r_j) = ∫_0^{r_j} λ g(λ) dλ, flat past the last sample
    let mut cum = Vec::with_capacity(len);
    let mut acc = 0.0;
    for j in 0..len {
        let phi = d.r(j) * d.g[j];
        acc += if j == 0 {
            0.25 * d.h * phi
        } else {
            0.5 * d.h * (d.r(j - 1) * d.g[j - 1] + phi)
        };
        cum.push(acc);
    }
    let last_cum = cum.last().copied().unwrap_or(0.0);
    // (Ψ, Ψ', φ, Φ) with Ψ = λ f, φ = λ g
    let sample = |j: usize| -> (f64, f64, f64, f64) {
        if j < len {
            let x = d.r(j);
            (x * d.f[j], d.f[j] + x * d.df[j], x * d.g[j], cum[j])
        } else {
            (0.0, 0.0, 0.0, last_cum)
        }
    };

    let mut out = Field::zeros(lat);
    for (k, (i, n)) in lat.nodes().enumerate() {
        let r = lat.r(i);
        let (psi_p, dpsi_p, phi_p, cum_p) = sample(i + n);
        let (jm, s) = if i >= n {
            (i - n, 1.0)
        } else {
            (n - i - 1, -1.0)
        };
        let (psi_m, dpsi_m, phi_m, cum_m) = sample(jm);
        let big_u = 0.5 * (psi_p + s * psi_m) + 0.5 * (cum_p - cum_m);
        let big_ut = 0.5 * (dpsi_p - dpsi_m) + 0.5 * (phi_p + s * phi_m);
        let big_ur = 0.5 * (dpsi_p + dpsi_m) + 0.5 * (phi_p - s * phi_m);
        let u = big_u / r;
        out.u[k] = u;
        out.u_t[k] = big_ut / r;
        out.u_r[k] = (big_ur - u) / r;
    }
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Backward,
}

/// Cone integral `V` of `G = r F` and its characteristic line integrals
/// `A` (outgoing side) and `B` (incoming side), swept level by level away
/// from `start`.
fn sweep(src: &SourceField, start: usize, dir: Direction) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let lat = &*src.lattice;
    let h = lat.h;
    let total = lat.len();
    let mut g = vec![0.0; total];
    for (k, (i, _)) in lat.nodes().enumerate() {
        g[k] = lat.r(i) * src.f[k];
    }
    let mut v = vec![0.0; total];
    let mut a = vec![0.0; total];
    let mut b = vec![0.0; total];

    // level reached after `m` sweep steps
    let level = |m: usize| -> Option<usize> {
        match dir {
            Direction::Forward => (m <= lat.levels).then_some(m),
            Direction::Backward => start.checked_sub(m),
        }
    };
    let steps = match dir {
        Direction::Forward => lat.levels - start,
        Direction::Backward => start,
    };
    // odd ghost at i = -1, zero outside the band
    let get = |arr: &[f64], i: isize, n: usize| -> f64 {
        if i == -1 {
            -arr[lat.idx(0, n)]
        } else if lat.contains(i, n as isize) {
            arr[lat.idx(i as usize, n)]
        } else {
            0.0
        }
    };

    for m in 1..=steps {
        let cur = level(m).unwrap();
        let prev = level(m - 1).unwrap();
        for i in 0..lat.row_len(cur) {
            let ii = i as isize;
            let g_cur = g[lat.idx(i, cur)];
            let g_l = get(&g, ii - 1, prev);
            let g_r = get(&g, ii + 1, prev);
            let vv = if m == 1 {
                h * h * (g_l + g_r + g_cur) / 3.0
            } else {
                let prev2 = level(m - 2).unwrap();
                get(&v, ii - 1, prev) + get(&v, ii + 1, prev) - get(&v, ii, prev2)
                    + 0.5 * h * h * (get(&g, ii, prev2) + g_l + g_r + g_cur)
            };
            let aa = get(&a, ii + 1, prev) + 0.5 * h * (g_cur + g_r);
            let b_l = if i == 0 {
                -a[lat.idx(0, prev)]
            } else {
                get(&b, ii - 1, prev)
            };
            let bb = b_l + 0.5 * h * (g_cur + g_l);
            let k = lat.idx(i, cur);
            v[k] = vv;
            a[k] = aa;
            b[k] = bb;
        }
    }
    (v, a, b)
}

fn cone_to_field(
    lat: &Arc<Lattice>,
    v: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    dir: Direction,
) -> Field {
    let mut out = Field {
        lattice: Arc::clone(lat),
        u: v,
        u_r: a,
        u_t: b,
    };
    let sign = match dir {
        Direction::Forward => 1.0,
        Direction::Backward => -1.0,
    };
    for (k, (i, _)) in lat.nodes().enumerate() {
        let r = lat.r(i);
        let (vv, aa, bb) = (out.u[k], out.u_r[k], out.u_t[k]);
        let u = vv / (2.0 * r);
        out.u[k] = u;
        out.u_t[k] = sign * (aa + bb) / (2.0 * r);
        out.u_r[k] = (aa - bb) / (2.0 * r) - u / r;
    }
    out
}

/// Solution of `u_tt - Δu = F` with zero data at `t = 0`.
pub fn apply_l(src: &SourceField) -> Field {
    let lat = &src.lattice;
    let (v, a, b) = sweep(src, 0, Direction::Forward);
    cone_to_field(lat, v, a, b, Direction::Forward)
}

/// Tail bound for the part of the backward integral beyond `t_infinity`.
///
/// Extrapolates `sup_r r|F|` on the cut level as `(1+s)^{-(σ-1)}` with
/// `σ = α + β + γ` and integrates it to infinity. Returns `None` without a
/// weight hint and infinity when `σ <= 2`.
pub fn tail_estimate(src: &SourceField, trunc: &TruncationPolicy) -> Result<Option<f64>> {
    let lat = &*src.lattice;
    let n_inf = trunc.level(lat)?;
    let Some(w) = trunc.weight_hint else {
        return Ok(None);
    };
    let sigma = w.alpha + w.beta + w.gamma;
    let m_t = (0..lat.row_len(n_inf))
        .map(|i| lat.r(i) * src.at(i, n_inf).abs())
        .fold(0.0, f64::max);
    if m_t == 0.0 {
        return Ok(Some(0.0));
    }
    if sigma <= 2.0 {
        return Ok(Some(f64::INFINITY));
    }
    Ok(Some(m_t * (1.0 + lat.t(n_inf)) / (sigma - 2.0)))
}

/// Solution of `u_tt - Δu = F` that vanishes as `t -> ∞`, with the time
/// integral cut at `trunc.t_infinity`.
pub fn apply_r(src: &SourceField, trunc: &TruncationPolicy) -> Result<Field> {
    let lat = &src.lattice;
    let n_inf = trunc.level(lat)?;
    if let Some(est) = tail_estimate(src, trunc)? {
        if est > trunc.tail_tol {
            return Err(Error::TailTooFat {
                estimate: est,
                tol: trunc.tail_tol,
            });
        }
    }
    let (v, a, b) = sweep(src, n_inf, Direction::Backward);
    Ok(cone_to_field(lat, v, a, b, Direction::Backward))
}

/// `F = |∂_t v|^e` with `F_r` from the chain rule.
pub fn nonlinearity(v: &Field, exponent: f64) -> SourceField {
    let lat = &v.lattice;
    let mut out = SourceField::zeros(lat);
    for (k, (i, n)) in lat.nodes().enumerate() {
        let vt = v.u_t[k];
        out.f[k] = vt.abs().powf(exponent);
        if vt != 0.0 {
            let vtr = diff_r(lat, &v.u_t, Parity::Even, i, n);
            out.f_r[k] = exponent * vt.abs().powf(exponent - 1.0) * vt.signum() * vtr;
        }
    }
    out
}

/// `F = |∂_t a|^e - |∂_t b|^e`.
pub fn difference_source(a: &Field, b: &Field, exponent: f64) -> Result<SourceField> {
    check_same(&a.lattice, &b.lattice)?;
    let fa = nonlinearity(a, exponent);
    let fb = nonlinearity(b, exponent);
    let mut out = fa;
    for k in 0..out.f.len() {
        out.f[k] -= fb.f[k];
        out.f_r[k] -= fb.f_r[k];
    }
    Ok(out)
}

/// Pointwise residual of `u_tt - u_rr - (2/r) u_r = F` by centered
/// differences of `u`; `NaN` where a stencil point is missing.
#[derive(Debug, Clone)]
pub struct Residual {
    pub lattice: Arc<Lattice>,
    pub value: Vec<f64>,
}

impl Residual {
    /// Max-norm over the reporting box less `margin` cells at the outer
    /// radius and at both time ends.
    pub fn max_interior(&self, margin: usize) -> f64 {
        let lat = &self.lattice;
        let mut m: f64 = 0.0;
        for n in margin.max(1)..=lat.report_rows.saturating_sub(margin) {
            for i in 0..lat.report_cols.saturating_sub(margin) {
                let x = self.value[lat.idx(i, n)];
                if x.is_finite() {
                    m = m.max(x.abs());
                }
            }
        }
        m
    }
}

pub fn pde_residual(u: &Field, src: &SourceField) -> Result<Residual> {
    check_same(&u.lattice, &src.lattice)?;
    let lat = &u.lattice;
    let h = lat.h;
    let mut value = vec![f64::NAN; lat.len()];
    for n in 1..lat.levels {
        for i in 0..lat.row_len(n) {
            if !lat.contains(i as isize + 1, n as isize)
                || !lat.contains(i as isize, n as isize - 1)
            {
                continue;
            }
            let at = |ii: usize, nn: usize| u.u[lat.idx(ii, nn)];
            let c = at(i, n);
            let left = if i == 0 { c } else { at(i - 1, n) };
            let right = at(i + 1, n);
            let d_tt = (at(i, n + 1) - 2.0 * c + at(i, n - 1)) / (h * h);
            let d_rr = (right - 2.0 * c + left) / (h * h);
            let d_r = (right - left) / (2.0 * h);
            let k = lat.idx(i, n);
            value[k] = d_tt - d_rr - 2.0 / lat.r(i) * d_r - src.f[k];
        }
    }
    Ok(Residual {
        lattice: Arc::clone(lat),
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::GridSpec;

    fn lat(r_max: f64, t_max: f64, cells: usize) -> Arc<Lattice> {
        Arc::new(Lattice::new(GridSpec::new(r_max, t_max, cells)).unwrap())
    }

    #[test]
    fn zero_inputs_give_zero_fields() {
        let l = lat(4.0, 4.0, 16);
        let z = SourceField::zeros(&l);
        assert!(apply_l(&z).is_zero());
        assert!(apply_r(&z, &TruncationPolicy::for_lattice(&l))
            .unwrap()
            .is_zero());
        assert!(apply_k(&DataPair::zero(l.h, l.data_len()), &l)
            .unwrap()
            .is_zero());
    }

    #[test]
    fn unit_source_forward() {
        let l = lat(4.0, 4.0, 32);
        let one = SourceField::from_fn(&l, |_, _| (1.0, 0.0));
        let u = apply_l(&one);
        for (i, n) in l.report_nodes() {
            let t = l.t(n);
            let (v, _, vt) = u.at(i, n);
            assert!((v - 0.5 * t * t).abs() < 1e-12, "({i},{n})");
            assert!((vt - t).abs() < 1e-12);
        }
    }

    #[test]
    fn step_source_backward() {
        let l = lat(2.0, 2.0, 32);
        let step = SourceField::from_fn(&l, |_, t| (if t <= 1.0 + 1e-12 { 1.0 } else { 0.0 }, 0.0));
        let mut trunc = TruncationPolicy::for_lattice(&l);
        trunc.t_infinity = 1.0;
        let u = apply_r(&step, &trunc).unwrap();
        for (i, n) in l.report_nodes() {
            let t = l.t(n);
            let want = if t <= 1.0 {
                0.5 * (1.0 - t).powi(2)
            } else {
                0.0
            };
            let (v, _, vt) = u.at(i, n);
            assert!((v - want).abs() < 1e-12, "({i},{n}) {v} {want}");
            let want_t = if t <= 1.0 { t - 1.0 } else { 0.0 };
            assert!((vt - want_t).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_datum_is_stationary() {
        let l = lat(4.0, 4.0, 32);
        let d = DataPair::from_fn(l.h, l.data_len(), |_| [1.0, 0.0, 0.0, 0.0, 0.0]);
        let u = apply_k(&d, &l).unwrap();
        for (i, n) in l.nodes() {
            let (v, vr, vt) = u.at(i, n);
            assert!((v - 1.0).abs() < 1e-12 && vr.abs() < 1e-10 && vt.abs() < 1e-12);
        }
    }

    #[test]
    fn tail_check() {
        let l = lat(2.0, 2.0, 16);
        let one = SourceField::from_fn(&l, |_, _| (1.0, 0.0));
        let mut trunc = TruncationPolicy::for_lattice(&l);
        trunc.weight_hint = Some(WeightParams {
            alpha: 0.0,
            beta: 1.0,
            gamma: 1.5,
            delta: 1.5,
            s: crate::fields::Order::One,
        });
        assert!(matches!(
            apply_r(&one, &trunc),
            Err(Error::TailTooFat { .. })
        ));
        trunc.t_infinity = 100.0;
        assert!(matches!(apply_r(&one, &trunc), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn source_builders() {
        let l = lat(4.0, 4.0, 16);
        let v = Field::from_fn(&l, |_, _| (0.0, 0.0, -2.0));
        assert!(nonlinearity(&v, 3.0).f.iter().all(|x| *x == 8.0));
        let w = Field::from_fn(&l, |_, t| (0.0, 0.0, t));
        let f = nonlinearity(&w, 1.8);
        let n2 = l.row_of_time(2.0).unwrap();
        assert!((f.at(3, n2) - 2f64.powf(1.8)).abs() < 1e-12);
        assert!((2f64.powf(1.8) - 3.4822).abs() < 1e-4);
        let a = Field::from_fn(&l, |_, _| (0.0, 0.0, 3.0));
        let b = Field::from_fn(&l, |_, _| (0.0, 0.0, 1.0));
        assert!(difference_source(&a, &b, 2.0)
            .unwrap()
            .f
            .iter()
            .all(|x| *x == 8.0));
        assert!(difference_source(&a, &a, 2.5)
            .unwrap()
            .f
            .iter()
            .all(|x| *x == 0.0));
        let zero = Field::zeros(&l);
        assert!(difference_source(&b, &zero, 1.7)
            .unwrap()
            .f
            .iter()
            .all(|x| *x == 1.0));
        assert!(nonlinearity(&zero, 1.5).f_r.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn zero_residual_for_zero_field() {
        let l = lat(4.0, 4.0, 16);
        let res = pde_residual(&Field::zeros(&l), &SourceField::zeros(&l)).unwrap();
        assert_eq!(res.max_interior(2), 0.0);
    }
}
