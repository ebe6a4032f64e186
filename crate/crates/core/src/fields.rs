//! Sampled fields, data pairs and the weighted norms measured on them.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;

/// Even-in-`r` field with analytically supplied first derivatives.
#[derive(Debug, Clone)]
pub struct Field {
    pub lattice: Arc<Lattice>,
    pub u: Vec<f64>,
    pub u_r: Vec<f64>,
    pub u_t: Vec<f64>,
}

/// Parity of a sampled quantity under `r -> -r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

pub(crate) fn check_same(a: &Arc<Lattice>, b: &Arc<Lattice>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::LatticeMismatch)
    }
}

/// Centered difference in `r` along row `n`, using the ghost `a(-1) = ±a(0)`.
pub(crate) fn diff_r(lat: &Lattice, a: &[f64], parity: Parity, i: usize, n: usize) -> f64 {
    let h = lat.h;
    let len = lat.row_len(n);
    let at = |j: usize| a[lat.idx(j, n)];
    if i + 1 < len {
        let left = if i == 0 {
            parity.sign() * at(0)
        } else {
            at(i - 1)
        };
        (at(i + 1) - left) / (2.0 * h)
    } else if i >= 2 {
        (3.0 * at(i) - 4.0 * at(i - 1) + at(i - 2)) / (2.0 * h)
    } else {
        0.0
    }
}

/// Difference in `t` at column `i`, centered where both neighbours exist.
pub(crate) fn diff_t(lat: &Lattice, a: &[f64], i: usize, n: usize) -> f64 {
    let h = lat.h;
    let has = |m: isize| lat.contains(i as isize, m);
    let at = |m: usize| a[lat.idx(i, m)];
    let n_i = n as isize;
    if has(n_i - 1) && has(n_i + 1) {
        (at(n + 1) - at(n - 1)) / (2.0 * h)
    } else if has(n_i + 2) {
        (-3.0 * at(n) + 4.0 * at(n + 1) - at(n + 2)) / (2.0 * h)
    } else if has(n_i - 2) {
        (3.0 * at(n) - 4.0 * at(n - 1) + at(n - 2)) / (2.0 * h)
    } else {
        0.0
    }
}

impl Field {
    pub fn zeros(lattice: &Arc<Lattice>) -> Self {
        let len = lattice.len();
        Field {
            lattice: Arc::clone(lattice),
            u: vec![0.0; len],
            u_r: vec![0.0; len],
            u_t: vec![0.0; len],
        }
    }

    /// Samples `(u, u_r, u_t)` from a closure of `(r, t)`.
    pub fn from_fn(lattice: &Arc<Lattice>, f: impl Fn(f64, f64) -> (f64, f64, f64)) -> Self {
        let mut out = Field::zeros(lattice);
        for (k, (i, n)) in lattice.nodes().enumerate() {
            let (u, ur, ut) = f(lattice.r(i), lattice.t(n));
            out.u[k] = u;
            out.u_r[k] = ur;
            out.u_t[k] = ut;
        }
        out
    }

    #[inline]
    pub fn at(&self, i: usize, n: usize) -> (f64, f64, f64) {
        let k = self.lattice.idx(i, n);
        (self.u[k], self.u_r[k], self.u_t[k])
    }

    fn zip(&self, other: &Field, op: impl Fn(f64, f64) -> f64) -> Result<Field> {
        check_same(&self.lattice, &other.lattice)?;
        let z = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| op(*x, *y)).collect();
        Ok(Field {
            lattice: Arc::clone(&self.lattice),
            u: z(&self.u, &other.u),
            u_r: z(&self.u_r, &other.u_r),
            u_t: z(&self.u_t, &other.u_t),
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Field {
        let s = |a: &[f64]| a.iter().map(|x| c * x).collect();
        Field {
            lattice: Arc::clone(&self.lattice),
            u: s(&self.u),
            u_r: s(&self.u_r),
            u_t: s(&self.u_t),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.u
            .iter()
            .chain(&self.u_r)
            .chain(&self.u_t)
            .all(|x| *x == 0.0)
    }

    /// Largest absolute difference of `u, u_r, u_t` over the reporting box.
    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        check_same(&self.lattice, &other.lattice)?;
        let lat = &self.lattice;
        let mut m: f64 = 0.0;
        for (i, n) in lat.report_nodes() {
            let k = lat.idx(i, n);
            m = m
                .max((self.u[k] - other.u[k]).abs())
                .max((self.u_r[k] - other.u_r[k]).abs())
                .max((self.u_t[k] - other.u_t[k]).abs());
        }
        Ok(m)
    }

    /// `(u_rr, u_rt, u_tt)` by differencing the stored first derivatives.
    pub fn second_derivatives(&self, i: usize, n: usize) -> (f64, f64, f64) {
        let lat = &self.lattice;
        (
            diff_r(lat, &self.u_r, Parity::Odd, i, n),
            diff_r(lat, &self.u_t, Parity::Even, i, n),
            diff_t(lat, &self.u_t, i, n),
        )
    }

    /// Writes the reporting box as CSV with columns `r,t,u,u_r,u_t`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let lat = &self.lattice;
        writeln!(w, "r,t,u,u_r,u_t")?;
        for (i, n) in lat.report_nodes() {
            let (u, ur, ut) = self.at(i, n);
            writeln!(w, "{},{},{:e},{:e},{:e}", lat.r(i), lat.t(n), u, ur, ut)?;
        }
        Ok(())
    }
}

/// Source term `F` of `u_tt - Δu = F`, even in `r`.
#[derive(Debug, Clone)]
pub struct SourceField {
    pub lattice: Arc<Lattice>,
    pub f: Vec<f64>,
    pub f_r: Vec<f64>,
}

impl SourceField {
    pub fn zeros(lattice: &Arc<Lattice>) -> Self {
        SourceField {
            lattice: Arc::clone(lattice),
            f: vec![0.0; lattice.len()],
            f_r: vec![0.0; lattice.len()],
        }
    }

    /// Samples `(F, F_r)` from a closure of `(r, t)`.
    pub fn from_fn(lattice: &Arc<Lattice>, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut out = SourceField::zeros(lattice);
        for (k, (i, n)) in lattice.nodes().enumerate() {
            let (v, vr) = f(lattice.r(i), lattice.t(n));
            out.f[k] = v;
            out.f_r[k] = vr;
        }
        out
    }

    #[inline]
    pub fn at(&self, i: usize, n: usize) -> f64 {
        self.f[self.lattice.idx(i, n)]
    }

    pub fn scale(&self, c: f64) -> SourceField {
        SourceField {
            lattice: Arc::clone(&self.lattice),
            f: self.f.iter().map(|x| c * x).collect(),
            f_r: self.f_r.iter().map(|x| c * x).collect(),
        }
    }
}

/// Radial Cauchy data `(f, g)` sampled at `r_j = (j + 1/2) h`, zero beyond
/// the last sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPair {
    pub h: f64,
    pub f: Vec<f64>,
    pub df: Vec<f64>,
    pub d2f: Vec<f64>,
    pub g: Vec<f64>,
    pub dg: Vec<f64>,
    /// Decay index of the intended class `Y_ν(ε)`.
    pub nu: f64,
    /// Amplitude bound of the intended class.
    pub eps: f64,
}

impl DataPair {
    pub fn zero(h: f64, len: usize) -> Self {
        DataPair {
            h,
            f: vec![0.0; len],
            df: vec![0.0; len],
            d2f: vec![0.0; len],
            g: vec![0.0; len],
            dg: vec![0.0; len],
            nu: 0.0,
            eps: 0.0,
        }
    }

    /// Samples `[f, f', f'', g, g']` from a closure of `r`.
    pub fn from_fn(h: f64, len: usize, s: impl Fn(f64) -> [f64; 5]) -> Self {
        let mut d = DataPair::zero(h, len);
        for j in 0..len {
            let [f, df, d2f, g, dg] = s((j as f64 + 0.5) * h);
            d.f[j] = f;
            d.df[j] = df;
            d.d2f[j] = d2f;
            d.g[j] = g;
            d.dg[j] = dg;
        }
        d
    }

    pub fn with_class(mut self, nu: f64, eps: f64) -> Self {
        self.nu = nu;
        self.eps = eps;
        self
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    #[inline]
    pub fn r(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.h
    }

    /// `|f| + (1+r)(|f'| + |g|) + r(|f''| + |g'|)` at sample `j`.
    pub fn triple_norm(&self, j: usize) -> f64 {
        let r = self.r(j);
        self.f[j].abs()
            + (1.0 + r) * (self.df[j].abs() + self.g[j].abs())
            + r * (self.d2f[j].abs() + self.dg[j].abs())
    }

    /// `sup_j (1+r_j)^ν |||(f, g)(r_j)|||`.
    pub fn y_sup(&self, nu: f64) -> f64 {
        (0..self.len())
            .map(|j| (1.0 + self.r(j)).powf(nu) * self.triple_norm(j))
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, c: f64) -> DataPair {
        let s = |a: &[f64]| a.iter().map(|x| c * x).collect();
        DataPair {
            h: self.h,
            f: s(&self.f),
            df: s(&self.df),
            d2f: s(&self.d2f),
            g: s(&self.g),
            dg: s(&self.dg),
            nu: self.nu,
            eps: self.eps * c.abs(),
        }
    }

    /// Samplewise difference over the common length.
    pub fn sub(&self, other: &DataPair) -> Result<DataPair> {
        if (self.h - other.h).abs() > 1e-12 * self.h {
            return Err(Error::LatticeMismatch);
        }
        let len = self.len().min(other.len());
        let d = |a: &[f64], b: &[f64]| (0..len).map(|j| a[j] - b[j]).collect();
        Ok(DataPair {
            h: self.h,
            f: d(&self.f, &other.f),
            df: d(&self.df, &other.df),
            d2f: d(&self.d2f, &other.d2f),
            g: d(&self.g, &other.g),
            dg: d(&self.dg, &other.dg),
            nu: self.nu,
            eps: 0.0,
        })
    }

    /// Copy with `f''` and `g'` replaced by centered differences of `f'`
    /// and `g`, matching what a sampled trace carries.
    pub fn with_differenced_derivatives(&self) -> DataPair {
        let mut out = self.clone();
        out.d2f = diff_samples(&self.df, Parity::Odd, self.h);
        out.dg = diff_samples(&self.g, Parity::Even, self.h);
        out
    }
}

fn diff_samples(a: &[f64], parity: Parity, h: f64) -> Vec<f64> {
    let len = a.len();
    (0..len)
        .map(|j| {
            if j + 1 < len {
                let left = if j == 0 {
                    parity.sign() * a[0]
                } else {
                    a[j - 1]
                };
                (a[j + 1] - left) / (2.0 * h)
            } else if j >= 2 {
                (3.0 * a[j] - 4.0 * a[j - 1] + a[j - 2]) / (2.0 * h)
            } else {
                0.0
            }
        })
        .collect()
}

/// Data `(u, ∂_t u)(·, 0)` read off row 0 of a field.
pub fn trace_at_zero(u: &Field) -> DataPair {
    let lat = &u.lattice;
    let len = lat.row_len(0);
    let take = |a: &[f64]| (0..len).map(|i| a[lat.idx(i, 0)]).collect::<Vec<_>>();
    let f = take(&u.u);
    let df = take(&u.u_r);
    let g = take(&u.u_t);
    let d2f = diff_samples(&df, Parity::Odd, lat.h);
    let dg = diff_samples(&g, Parity::Even, lat.h);
    DataPair {
        h: lat.h,
        f,
        df,
        d2f,
        g,
        dg,
        nu: 0.0,
        eps: 0.0,
    }
}

/// Built-in datum shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileFamily {
    /// `f = g = c e^{-r²/2}`.
    Gaussian,
    /// `f = c (1+r²)^{-ν/2}`, `g = c (1+r²)^{-(ν+1)/2}`.
    Algebraic,
}

fn unit_profile(family: ProfileFamily, nu: f64, r: f64) -> [f64; 5] {
    match family {
        ProfileFamily::Gaussian => {
            let e = (-0.5 * r * r).exp();
            [e, -r * e, (r * r - 1.0) * e, e, -r * e]
        }
        ProfileFamily::Algebraic => {
            let s = 1.0 + r * r;
            let f = s.powf(-0.5 * nu);
            let df = -nu * r * f / s;
            let d2f = -nu * f / s + nu * (nu + 2.0) * r * r * f / (s * s);
            let g = s.powf(-0.5 * (nu + 1.0));
            let dg = -(nu + 1.0) * r * g / s;
            [f, df, d2f, g, dg]
        }
    }
}

/// Datum of the given family scaled so that its `Y_ν` sup equals `ε`,
/// sampled far enough to feed the free propagator on every lattice node.
pub fn make_profile(
    family: ProfileFamily,
    nu: f64,
    eps: f64,
    lattice: &Lattice,
) -> Result<DataPair> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::ProfileUnscalable(format!(
            "decay index {nu} must be positive"
        )));
    }
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::ProfileUnscalable(format!(
            "amplitude {eps} must be nonnegative"
        )));
    }
    let unit = DataPair::from_fn(lattice.h, lattice.data_len(), |r| {
        unit_profile(family, nu, r)
    });
    let sup = unit.y_sup(nu);
    if !(sup.is_finite() && sup > 0.0) {
        return Err(Error::ProfileUnscalable(format!(
            "unit profile has sup {sup}"
        )));
    }
    let mut out = unit.scale(eps / sup);
    out.nu = nu;
    out.eps = eps;
    Ok(out)
}

/// Discrete `sup (1+r)^ν |||d(r)|||` and whether it stays within `ε`.
pub fn check_y_membership(d: &DataPair, nu: f64, eps: f64) -> (bool, f64) {
    let sup = d.y_sup(nu);
    (sup <= eps, sup)
}

/// Derivative order of a bracket norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    One,
    Two,
}

impl Order {
    pub fn from_int(s: u8) -> Result<Self> {
        match s {
            1 => Ok(Order::One),
            2 => Ok(Order::Two),
            _ => Err(Error::Config(format!(
                "derivative order {s} not in {{1, 2}}"
            ))),
        }
    }
}

/// `[u]_s` at node `(i, n)`.
pub fn bracket_at(u: &Field, s: Order, i: usize, n: usize) -> f64 {
    let r = u.lattice.r(i);
    let (v, vr, vt) = u.at(i, n);
    match s {
        Order::One => v.abs() + r * (vr.abs() + vt.abs()),
        Order::Two => {
            let (rr, rt, tt) = u.second_derivatives(i, n);
            v.abs() + (1.0 + r) * (vr.abs() + vt.abs()) + r * (rr.abs() + rt.abs() + tt.abs())
        }
    }
}

/// `[u]_s` at the node nearest to `(r, t)`.
pub fn bracket_norm(u: &Field, s: Order, r: f64, t: f64) -> f64 {
    let lat = &u.lattice;
    let i = ((r / lat.h - 0.5).round().max(0.0)) as usize;
    let n = lat.nearest_row(t);
    bracket_at(u, s, i.min(lat.row_len(n) - 1), n)
}

#[inline]
pub(crate) fn x_weight(r: f64, t: f64, nu: f64) -> f64 {
    (1.0 + (r - t).abs()).powf(nu)
}

/// `(1+r+t)^{ν-1}(1+|r-t|)`, written as the X weight times a factor that is
/// `<= 1` exactly when `ν <= 1`.
#[inline]
pub(crate) fn z_weight(r: f64, t: f64, nu: f64) -> f64 {
    let near = 1.0 + (r - t).abs();
    let far = 1.0 + r + t;
    near.powf(nu) * (far / near).powf(nu - 1.0)
}

fn weighted_sup(u: &Field, s: Order, w: impl Fn(f64, f64) -> f64) -> f64 {
    let lat = &u.lattice;
    lat.report_nodes()
        .map(|(i, n)| bracket_at(u, s, i, n) * w(lat.r(i), lat.t(n)))
        .fold(0.0, f64::max)
}

/// `sup [u]_s (1+|r-t|)^ν` over the reporting box.
pub fn norm_x(u: &Field, s: Order, nu: f64) -> f64 {
    weighted_sup(u, s, |r, t| x_weight(r, t, nu))
}

/// `sup [u]_s (1+r+t)^{ν-1}(1+|r-t|)` over the reporting box.
pub fn norm_z(u: &Field, s: Order, nu: f64) -> f64 {
    weighted_sup(u, s, |r, t| z_weight(r, t, nu))
}

fn energy_integrand(u: &Field, i: usize, n: usize) -> f64 {
    let r = u.lattice.r(i);
    let (_, ur, ut) = u.at(i, n);
    (ut * ut + ur * ur) * r * r
}

/// Radial energy norm at time level `t`, integrated over `[0, r_max]`.
pub fn energy_norm(u: &Field, t: f64) -> Result<f64> {
    let lat = &u.lattice;
    let n = lat.row_of_time(t)?;
    Ok(energy_at_row(u, n))
}

pub(crate) fn energy_at_row(u: &Field, n: usize) -> f64 {
    let lat = &u.lattice;
    let cols = lat.report_cols;
    let h = lat.h;
    let mut sum = 0.25 * h * energy_integrand(u, 0, n);
    for i in 0..cols.saturating_sub(1) {
        sum += 0.5 * h * (energy_integrand(u, i, n) + energy_integrand(u, i + 1, n));
    }
    (2.0 * std::f64::consts::PI * sum).sqrt()
}

/// [`energy_norm`] that also fails when the integrand at the outer radius
/// exceeds `tail_tol`.
pub fn energy_norm_checked(u: &Field, t: f64, tail_tol: f64) -> Result<f64> {
    let lat = &u.lattice;
    let n = lat.row_of_time(t)?;
    let edge = energy_integrand(u, lat.report_cols - 1, n);
    if edge > tail_tol {
        return Err(Error::TruncationWarning {
            integrand: edge,
            tol: tail_tol,
        });
    }
    Ok(energy_at_row(u, n))
}

/// Weight exponents of the `M_0`, `M_1` functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub s: Order,
}

impl WeightParams {
    pub fn mu(&self) -> f64 {
        (self.alpha + self.beta - 1.0).min(self.delta)
    }

    /// Hypotheses under which the forward Duhamel estimate holds.
    pub fn admissible_for_forward(&self) -> bool {
        self.alpha < 3.0 - self.order() && self.delta > 1.0 && self.gamma >= 0.0
    }

    /// Hypotheses under which the backward Duhamel estimate holds.
    pub fn admissible_for_backward(&self) -> bool {
        self.alpha < 3.0 - self.order()
            && self.delta > 1.0
            && self.alpha + self.beta + self.gamma > 2.0
    }

    fn order(&self) -> f64 {
        match self.s {
            Order::One => 1.0,
            Order::Two => 2.0,
        }
    }
}

/// `M_0(F)` for `s = 1`, `M_1(F)` for `s = 2`, over the reporting box.
pub fn weighted_sup_m(src: &SourceField, w: &WeightParams) -> f64 {
    let lat = &src.lattice;
    let mut m0: f64 = 0.0;
    let mut m1: f64 = 0.0;
    for (i, n) in lat.report_nodes() {
        let (r, t) = (lat.r(i), lat.t(n));
        let k = lat.idx(i, n);
        let common = (1.0 + r + t).powf(w.gamma) * (1.0 + (r - t).abs()).powf(w.delta);
        m0 = m0.max(src.f[k].abs() * r.powf(w.alpha) * (1.0 + r).powf(w.beta) * common);
        if w.s == Order::Two {
            m1 = m1.max(
                src.f_r[k].abs() * r.powf(w.alpha + 1.0) * (1.0 + r).powf(w.beta - 1.0) * common,
            );
        }
    }
    m0 + m1
}
