//! Serializes complex numbers as `{"re": x, "im": y}`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::hilbert::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cplx {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for Cplx {
    fn from(c: C64) -> Self {
        Cplx { re: c.re, im: c.im }
    }
}

impl From<Cplx> for C64 {
    fn from(c: Cplx) -> Self {
        C64::new(c.re, c.im)
    }
}

pub fn serialize<S: Serializer>(c: &C64, s: S) -> Result<S::Ok, S::Error> {
    Cplx::from(*c).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
    Cplx::deserialize(d).map(Into::into)
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|c| Cplx::from(*c)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        Vec::<Cplx>::deserialize(d).map(|v| v.into_iter().map(Into::into).collect())
    }
}
