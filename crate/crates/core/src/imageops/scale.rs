use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rational magnification factor `num / den > 1`, stored in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Scale {
    num: u32,
    den: u32,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Scale {
    pub const X2: Scale = Scale { num: 2, den: 1 };
    pub const PAPER: Scale = Scale { num: 50, den: 9 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if den == 0 || num <= den {
            return Err(Error::InvalidArgument(format!(
                "scale must exceed 1, got {num}/{den}"
            )));
        }
        let g = gcd(num, den);
        Ok(Scale {
            num: num / g,
            den: den / g,
        })
    }

    pub fn num(self) -> u32 {
        self.num
    }

    pub fn den(self) -> u32 {
        self.den
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `round(len * scale)`.
    pub fn up(self, len: usize) -> usize {
        (len as u64 * self.num as u64 + self.den as u64 / 2).div_euclid(self.den as u64) as usize
    }

    /// `round(len / scale)`.
    pub fn down(self, len: usize) -> usize {
        (len as u64 * self.den as u64 + self.num as u64 / 2).div_euclid(self.num as u64) as usize
    }

    /// Whether `len` LR pixels map to a whole number of HR pixels.
    pub fn divides(self, len: usize) -> bool {
        len.is_multiple_of(self.den as usize)
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cannot parse scale {s:?}"));
        let (n, d) = match s.trim().split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        Scale::new(n.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?)
    }
}

impl TryFrom<String> for Scale {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Scale> for String {
    fn from(s: Scale) -> String {
        s.to_string()
    }
}
