//! Exponent bookkeeping: regime classification, decay exponents `κ1, κ2`
//! and the ladder of derived sequences `a_j`, `ℓ`, `b_k`, `B_k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for deciding `κ1 · a_ℓ = 1`.
pub const TIE_TOL: f64 = 1e-12;

/// Scattering regime of the exponent pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `p > 2`: solutions approach free waves.
    ShortRange,
    /// `1 < p < 2` with `κ1 κ2 > 1`: a single correction step suffices.
    LongRangeSimple,
    /// `1 < p < 2` with `κ1 κ2 <= 1`: several correction steps are needed.
    LongRangeIterated,
    /// `p = 2`, `q > 2`.
    PEqualsTwo,
}

impl Regime {
    pub fn is_long_range(self) -> bool {
        !matches!(self, Regime::ShortRange)
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::ShortRange => "short_range",
            Regime::LongRangeSimple => "long_range_simple",
            Regime::LongRangeIterated => "long_range_iterated",
            Regime::PEqualsTwo => "p_equals_two",
        }
    }
}

/// A validated pair of nonlinearity powers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub p: f64,
    pub q: f64,
    pub regime: Regime,
}

impl Exponents {
    /// Validates `(p, q)` and assigns its regime.
    ///
    /// Boundaries are compared exactly on the given reals.
    pub fn classify(p: f64, q: f64) -> Result<Self> {
        if !(p.is_finite() && q.is_finite()) || p <= 1.0 || q < p {
            return Err(Error::InvalidExponents { p, q });
        }
        let critical = q * (p - 1.0);
        if critical <= 2.0 {
            return Err(Error::SubcriticalExponents {
                p,
                q,
                value: critical,
            });
        }
        let regime = if p > 2.0 {
            Regime::ShortRange
        } else {
            let cond = (p - 1.0).powi(2) * (q - 1.0);
            if cond <= 1.0 {
                return Err(Error::ConditionViolated { p, q, value: cond });
            }
            if p == 2.0 {
                Regime::PEqualsTwo
            } else {
                let k1 = p - 1.0;
                let k2 = q * (p - 1.0) - 1.0;
                if k1 * k2 > 1.0 {
                    Regime::LongRangeSimple
                } else {
                    Regime::LongRangeIterated
                }
            }
        };
        Ok(Exponents { p, q, regime })
    }
}

/// Shorthand for [`Exponents::classify`].
pub fn classify_regime(p: f64, q: f64) -> Result<Exponents> {
    Exponents::classify(p, q)
}

/// Decay exponents attached to the two components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaPair {
    pub kappa1: f64,
    pub kappa2: f64,
}

/// Default `κ` choice. For `p = 2` this is `κ1 = (q+2)/(2q)`, `κ2 = q/2`.
pub fn compute_kappas(e: &Exponents) -> KappaPair {
    let (p, q) = (e.p, e.q);
    match e.regime {
        Regime::ShortRange => KappaPair {
            kappa1: p - 1.0,
            kappa2: q - 1.0,
        },
        Regime::LongRangeSimple | Regime::LongRangeIterated => KappaPair {
            kappa1: p - 1.0,
            kappa2: q * (p - 1.0) - 1.0,
        },
        Regime::PEqualsTwo => KappaPair {
            kappa1: (q + 2.0) / (2.0 * q),
            kappa2: q / 2.0,
        },
    }
}

/// Like [`compute_kappas`], but for `p = 2` lets the caller pick `κ1`
/// within the admissible family `0 < κ1 < 1 < κ2 < q - 1`, `q κ1 = κ2 + 1`.
pub fn compute_kappas_with(e: &Exponents, p2_kappa1: Option<f64>) -> Result<KappaPair> {
    match (e.regime, p2_kappa1) {
        (Regime::PEqualsTwo, Some(k1)) => {
            let k2 = e.q * k1 - 1.0;
            if !(k1 > 0.0 && k1 < 1.0 && k2 > 1.0 && k2 < e.q - 1.0) {
                return Err(Error::InvalidKappa(format!(
                    "kappa1 = {k1} gives kappa2 = {k2}, need 0 < kappa1 < 1 < kappa2 < q - 1"
                )));
            }
            Ok(KappaPair {
                kappa1: k1,
                kappa2: k2,
            })
        }
        _ => Ok(compute_kappas(e)),
    }
}

/// All scalar exponents governing decay rates and iteration depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentLadder {
    pub exponents: Exponents,
    pub kappas: KappaPair,
    /// `a_0 ..= a_{ℓ+2}` (only `a_0` for the short-range regime).
    pub a: Vec<f64>,
    /// Correction depth `ℓ`; `None` in the short-range regime.
    pub ell: Option<usize>,
    /// `b_k = q + k(p+q-2)` for `0 <= k <= ℓ`.
    pub b: Vec<f64>,
    /// `B_k = 1 + (p-1) b_k` for `0 <= k <= ℓ`.
    pub big_b: Vec<f64>,
    /// Set only when `κ1 a_ℓ = 1`.
    pub delta_shift: Option<f64>,
    /// Shifted `(a'_ℓ, a'_{ℓ+1})` in the tie case.
    pub a_prime: Option<(f64, f64)>,
}

impl ExponentLadder {
    pub fn ell(&self) -> usize {
        self.ell.unwrap_or(0)
    }

    /// `B_k` with the convention `B_{-1} = 1`.
    pub fn big_b_at(&self, k: isize) -> f64 {
        if k < 0 {
            1.0
        } else {
            let (p, q) = (self.exponents.p, self.exponents.q);
            1.0 + (p - 1.0) * b_seq(p, q, k as usize)
        }
    }

    pub fn b_at(&self, k: usize) -> f64 {
        b_seq(self.exponents.p, self.exponents.q, k)
    }

    /// `a_j`, with the tie-case substitution applied to `ℓ` and `ℓ+1`.
    pub fn a_effective(&self, j: usize) -> f64 {
        if let (Some((al, al1)), Some(ell)) = (self.a_prime, self.ell) {
            if j == ell {
                return al;
            }
            if j == ell + 1 {
                return al1;
            }
        }
        self.a[j]
    }

    /// Limit `(κ2 - κ1)/(1 - κ1)` of the `a_j` sequence.
    pub fn a_limit(&self) -> f64 {
        let KappaPair { kappa1, kappa2 } = self.kappas;
        (kappa2 - kappa1) / (1.0 - kappa1)
    }
}

fn b_seq(p: f64, q: f64, k: usize) -> f64 {
    q + k as f64 * (p + q - 2.0)
}

/// Closed form of the `a_j` recursion (valid for `κ1 != 1`).
pub fn a_closed_form(kappas: &KappaPair, j: usize) -> f64 {
    let KappaPair { kappa1, kappa2 } = *kappas;
    (kappa2 - kappa1) / (1.0 - kappa1) - (kappa2 - 1.0) * kappa1.powi(j as i32) / (1.0 - kappa1)
}

/// Builds the exponent ladder for `e` with decay exponents `k`.
pub fn build_ladder(k: &KappaPair, e: &Exponents) -> Result<ExponentLadder> {
    if !e.regime.is_long_range() {
        return Ok(ExponentLadder {
            exponents: *e,
            kappas: *k,
            a: vec![1.0],
            ell: None,
            b: vec![],
            big_b: vec![],
            delta_shift: None,
            a_prime: None,
        });
    }
    let KappaPair { kappa1, kappa2 } = *k;
    if !(kappa1 > 0.0 && kappa1 < 1.0 && kappa2 > 1.0) {
        return Err(Error::InvalidKappa(format!(
            "long-range ladder needs 0 < kappa1 < 1 < kappa2, got ({kappa1}, {kappa2})"
        )));
    }
    let limit = (kappa2 - kappa1) / (1.0 - kappa1);
    let inv = 1.0 / kappa1;
    if limit <= inv {
        return Err(Error::LadderDiverged(0));
    }
    // a_j reaches 1/κ1 once (κ2-1)κ1^j/(1-κ1) < limit - 1/κ1.
    let gap = limit - inv;
    let bound = ((gap * (1.0 - kappa1) / (kappa2 - 1.0)).ln() / kappa1.ln())
        .ceil()
        .max(0.0) as usize
        + 8;
    let bound = bound.min(100_000);

    let mut a = vec![1.0_f64];
    let ell = loop {
        let j = a.len() - 1;
        if j > bound {
            return Err(Error::LadderDiverged(j));
        }
        let next = kappa1 * (a[j] - 1.0) + kappa2;
        a.push(next);
        if kappa1 * next > 1.0 + TIE_TOL {
            break j;
        }
    };
    // a_{ℓ+2}
    let last = *a.last().unwrap();
    a.push(kappa1 * (last - 1.0) + kappa2);

    let (p, q) = (e.p, e.q);
    let b: Vec<f64> = (0..=ell).map(|k| b_seq(p, q, k)).collect();
    let big_b = b.iter().map(|bk| 1.0 + (p - 1.0) * bk).collect();

    let (delta_shift, a_prime) = if (kappa1 * a[ell] - 1.0).abs() <= TIE_TOL && ell >= 1 {
        let delta =
            0.5 * (a[ell] - a[ell - 1]).min((kappa1 * a[ell + 1] - 1.0) / (kappa1 * kappa1));
        let al = a[ell] - delta;
        let al1 = kappa1 * (al - 1.0) + kappa2;
        (Some(delta), Some((al, al1)))
    } else {
        (None, None)
    };

    Ok(ExponentLadder {
        exponents: *e,
        kappas: *k,
        a,
        ell: Some(ell),
        b,
        big_b,
        delta_shift,
        a_prime,
    })
}

/// Classifies, picks default kappas and builds the ladder in one go.
pub fn ladder_for(p: f64, q: f64) -> Result<ExponentLadder> {
    let e = Exponents::classify(p, q)?;
    let k = compute_kappas(&e);
    build_ladder(&k, &e)
}
