//! Exact rationals and certified brackets for base-2 logarithms.
//!
//! Every threshold in the workbench is an exact rational. The only place
//! irrational numbers appear is `lg` of a rational that is not a power of
//! two; those are carried as an [`Interval`] whose endpoints are rationals
//! with power-of-two denominators.

use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The exact rational type used throughout.
pub type Q = Ratio<i128>;

/// Half-width added around `f64` logarithms before rounding outward.
const LG_MARGIN: f64 = 1.0 / (1u64 << 30) as f64;
/// Denominator of the rational endpoints of a logarithm bracket.
const LG_DENOM_BITS: u32 = 32;

pub fn q(num: i128, den: i128) -> Q {
    Q::new(num, den)
}

pub fn qi(n: i128) -> Q {
    Q::from_integer(n)
}

/// Parses `"p/q"` or `"p"`.
pub fn parse_q(s: &str) -> Result<Q> {
    let s = s.trim();
    let parse_int = |t: &str| {
        t.trim()
            .parse::<i128>()
            .map_err(|e| Error::Format(format!("bad rational {s:?}: {e}")))
    };
    match s.split_once('/') {
        Some((a, b)) => {
            let den = parse_int(b)?;
            if den == 0 {
                return Err(Error::Format(format!("zero denominator in {s:?}")));
            }
            Ok(Q::new(parse_int(a)?, den))
        }
        None => Ok(Q::from_integer(parse_int(s)?)),
    }
}

/// Formats as `"p/q"` (always with a denominator).
pub fn fmt_q(x: &Q) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

pub fn to_f64(x: &Q) -> f64 {
    x.numer().to_f64().unwrap_or(f64::NAN) / x.denom().to_f64().unwrap_or(f64::NAN)
}

/// `2^k` for any integer `k` (negative allowed).
pub fn pow2(k: i64) -> Q {
    assert!(k.abs() < 126, "2^{k} does not fit the rational type");
    if k >= 0 {
        Q::from_integer(1i128 << k)
    } else {
        Q::new(1, 1i128 << (-k))
    }
}

fn bit_len(v: i128) -> i64 {
    debug_assert!(v > 0);
    128 - v.leading_zeros() as i64
}

/// Largest `k` with `2^k <= x`. Requires `x > 0`.
pub fn floor_lg(x: &Q) -> i64 {
    assert!(x.is_positive(), "floor_lg of non-positive {x}");
    let (n, d) = (*x.numer(), *x.denom());
    // 2^(bl(n)-1) <= n < 2^bl(n), same for d; k is within one of the difference.
    let mut k = bit_len(n) - bit_len(d);
    while pow2(k) > *x {
        k -= 1;
    }
    while pow2(k + 1) <= *x {
        k += 1;
    }
    k
}

/// Smallest `k` with `2^k >= x`. Requires `x > 0`.
pub fn ceil_lg(x: &Q) -> i64 {
    let k = floor_lg(x);
    if pow2(k) == *x {
        k
    } else {
        k + 1
    }
}

/// `Some(k)` when `x == 2^k`.
pub fn exact_lg(x: &Q) -> Option<i64> {
    if !x.is_positive() {
        return None;
    }
    let k = floor_lg(x);
    (pow2(k) == *x).then_some(k)
}

pub fn is_power_of_two(v: u128) -> bool {
    v != 0 && v & (v - 1) == 0
}

/// Closed interval of rationals; `lo == hi` means the value is exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    pub lo: Q,
    pub hi: Q,
}

impl Interval {
    pub fn exact(v: Q) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn exact_value(&self) -> Option<Q> {
        self.is_exact().then_some(self.lo)
    }

    pub fn add(&self, o: &Interval) -> Interval {
        Interval {
            lo: self.lo + o.lo,
            hi: self.hi + o.hi,
        }
    }

    pub fn sub(&self, o: &Interval) -> Interval {
        Interval {
            lo: self.lo - o.hi,
            hi: self.hi - o.lo,
        }
    }

    pub fn scale(&self, c: &Q) -> Interval {
        if c.is_negative() {
            Interval {
                lo: self.hi * c,
                hi: self.lo * c,
            }
        } else {
            Interval {
                lo: self.lo * c,
                hi: self.hi * c,
            }
        }
    }

    /// Product of two intervals with non-negative endpoints.
    pub fn mul_nonneg(&self, o: &Interval) -> Interval {
        debug_assert!(!self.lo.is_negative() && !o.lo.is_negative());
        Interval {
            lo: self.lo * o.lo,
            hi: self.hi * o.hi,
        }
    }

    /// Quotient of a non-negative interval by a strictly positive one.
    pub fn div_pos(&self, o: &Interval) -> Interval {
        debug_assert!(o.lo.is_positive());
        debug_assert!(!self.lo.is_negative());
        Interval {
            lo: self.lo / o.hi,
            hi: self.hi / o.lo,
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_exact() {
            write!(f, "{}", fmt_q(&self.lo))
        } else {
            write!(f, "[{}, {}]", fmt_q(&self.lo), fmt_q(&self.hi))
        }
    }
}

impl Serialize for Interval {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            lo: String,
            hi: String,
            exact: bool,
        }
        Repr {
            lo: fmt_q(&self.lo),
            hi: fmt_q(&self.hi),
            exact: self.is_exact(),
        }
        .serialize(s)
    }
}

fn rationalize_floor(v: f64) -> Q {
    let scale = (1u64 << LG_DENOM_BITS) as f64;
    Q::new((v * scale).floor() as i128, 1i128 << LG_DENOM_BITS)
}

fn rationalize_ceil(v: f64) -> Q {
    let scale = (1u64 << LG_DENOM_BITS) as f64;
    Q::new((v * scale).ceil() as i128, 1i128 << LG_DENOM_BITS)
}

/// Certified bracket for `lg x`, exact when `x` is a power of two.
///
/// Otherwise the `f64` logarithm (accurate to a few ulp) is widened by
/// `2^-30` on each side and rounded outward to a multiple of `2^-32`.
pub fn lg(x: &Q) -> Interval {
    assert!(x.is_positive(), "lg of non-positive {x}");
    if let Some(k) = exact_lg(x) {
        return Interval::exact(Q::from_integer(k as i128));
    }
    let f = (*x.numer() as f64).log2() - (*x.denom() as f64).log2();
    Interval {
        lo: rationalize_floor(f - LG_MARGIN),
        hi: rationalize_ceil(f + LG_MARGIN),
    }
}

/// `ceil(x)` as an integer.
pub fn ceil_q(x: &Q) -> i128 {
    let (d, m) = x.numer().div_mod_floor(x.denom());
    if m.is_zero() {
        d
    } else {
        d + 1
    }
}

/// `floor(x)` as an integer.
pub fn floor_q(x: &Q) -> i128 {
    x.numer().div_floor(x.denom())
}

pub fn is_integer(x: &Q) -> bool {
    x.denom().is_one()
}

/// Serde adapter: a [`Q`] stored as a `"p/q"` string.
pub mod serde_q {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Q, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_q(x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Q, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Str(String),
            Int(i64),
        }
        match Raw::deserialize(d)? {
            Raw::Str(s) => parse_q(&s).map_err(serde::de::Error::custom),
            Raw::Int(i) => Ok(Q::from_integer(i as i128)),
        }
    }
}

/// Serde adapter for `Option<Q>`.
pub mod serde_q_opt {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Option<Q>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match x {
            Some(v) => s.serialize_some(&fmt_q(v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<Q>, D::Error> {
        let raw: Option<String> = Option::deserialize(d)?;
        raw.map(|s| parse_q(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        assert_eq!(parse_q("1/2").unwrap(), q(1, 2));
        assert_eq!(parse_q(" 6/4 ").unwrap(), q(3, 2));
        assert_eq!(parse_q("7").unwrap(), qi(7));
        assert!(parse_q("1/0").is_err());
        assert!(parse_q("x").is_err());
        assert_eq!(fmt_q(&q(2, 4)), "1/2");
    }

    #[test]
    fn floor_and_ceil_lg() {
        assert_eq!(floor_lg(&qi(4)), 2);
        assert_eq!(floor_lg(&qi(5)), 2);
        assert_eq!(floor_lg(&q(1, 3)), -2);
        assert_eq!(ceil_lg(&q(1, 3)), -1);
        assert_eq!(ceil_lg(&qi(4)), 2);
        assert_eq!(ceil_lg(&qi(5)), 3);
        assert_eq!(exact_lg(&q(1, 8)), Some(-3));
        assert_eq!(exact_lg(&qi(6)), None);
    }

    #[test]
    fn lg_brackets() {
        assert_eq!(lg(&qi(8)), Interval::exact(qi(3)));
        let b = lg(&qi(3));
        let truth = 3f64.log2();
        assert!(to_f64(&b.lo) < truth && truth < to_f64(&b.hi));
        assert!(to_f64(&(b.hi - b.lo)) < 1e-8);
    }

    #[test]
    fn ceil_floor_q() {
        assert_eq!(ceil_q(&q(3, 2)), 2);
        assert_eq!(ceil_q(&q(-3, 2)), -1);
        assert_eq!(floor_q(&q(-3, 2)), -2);
        assert_eq!(ceil_q(&qi(4)), 4);
    }
}
