//! Exact rational helpers on top of `num-rational`.
//!
//! All weight and recursion arithmetic is carried in [`Rational`], which is
//! always kept in canonical form (reduced, positive denominator).

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Parse `"a/b"`, `"a"` or a finite decimal such as `"3.999"` exactly.
pub fn parse(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::invalid(format!("not a rational number: {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(Error::invalid(format!("zero denominator in {s:?}")));
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        let negative = whole.starts_with('-');
        let whole_digits = whole.trim_start_matches(['-', '+']);
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let w: BigInt = if whole_digits.is_empty() {
            BigInt::zero()
        } else {
            whole_digits.parse().map_err(|_| bad())?
        };
        let f: BigInt = frac.parse().map_err(|_| bad())?;
        let scale = num_traits::pow(BigInt::from(10), frac.len());
        let mag = Rational::new(w * &scale + f, scale);
        return Ok(if negative { -mag } else { mag });
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(n))
}

/// Canonical `"num/den"` string; integers are still written with `/1`.
pub fn to_exact_string(q: &Rational) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

pub fn to_f64(q: &Rational) -> f64 {
    q.to_f64().unwrap_or_else(|| {
        if q.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Exact conversion of a finite double.
pub fn from_f64(x: f64) -> Result<Rational> {
    Rational::from_float(x).ok_or_else(|| Error::invalid(format!("non-finite value {x}")))
}

pub fn pow(q: &Rational, e: u32) -> Rational {
    let mut acc = Rational::one();
    for _ in 0..e {
        acc *= q;
    }
    acc
}

pub fn is_positive(q: &Rational) -> bool {
    q.is_positive()
}

/// Serde adapter writing rationals as `"num/den"` strings.
pub mod serde_exact {
    use super::{parse, to_exact_string, Rational};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&to_exact_string(q))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(serde::de::Error::custom)
    }

    pub mod vec {
        use super::super::{parse, to_exact_string, Rational};
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for q in v {
                seq.serialize_element(&to_exact_string(q))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
            let raw = Vec::<String>::deserialize(d)?;
            raw.iter()
                .map(|s| parse(s).map_err(serde::de::Error::custom))
                .collect()
        }
    }

    pub mod option {
        use super::super::{parse, to_exact_string, Rational};
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(q) => s.serialize_some(&to_exact_string(q)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
            Option::<String>::deserialize(d)?
                .map(|s| parse(&s).map_err(serde::de::Error::custom))
                .transpose()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_all_forms() {
        assert_eq!(parse("3999/1000").unwrap(), ratio(3999, 1000));
        assert_eq!(parse("3.999").unwrap(), ratio(3999, 1000));
        assert_eq!(parse("-0.25").unwrap(), ratio(-1, 4));
        assert_eq!(parse("4").unwrap(), int(4));
        assert_eq!(parse("6/4").unwrap(), ratio(3, 2));
        assert!(parse("1/0").is_err());
        assert!(parse("x").is_err());
        assert!(parse("1.").is_err());
    }

    #[test]
    fn exact_string_is_canonical() {
        assert_eq!(to_exact_string(&ratio(-6, -4)), "3/2");
        assert_eq!(to_exact_string(&int(0)), "0/1");
        assert_eq!(to_exact_string(&ratio(2, -4)), "-1/2");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn cross_multiplication_reconstructs_sum(
            a in -10_000i64..10_000, b in 1i64..10_000,
            c in -10_000i64..10_000, d in 1i64..10_000,
        ) {
            let sum = ratio(a, b) + ratio(c, d);
            let scaled = sum * int(b * d);
            prop_assert_eq!(scaled, int(a * d + c * b));
        }

        #[test]
        fn canonical_form_holds(a in -10_000i64..10_000, b in 1i64..10_000) {
            let q = ratio(a, -b);
            prop_assert!(q.denom().is_positive());
            prop_assert!(num_integer::Integer::gcd(q.numer(), q.denom()).is_one());
            prop_assert_eq!(parse(&to_exact_string(&q)).unwrap(), q);
        }
    }
}
