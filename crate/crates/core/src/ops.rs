use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Operation classes counted by kernel models and rated by machine models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpClass {
    Add,
    Mul,
    Fma,
    Div,
    Load,
    Store,
}

impl OpClass {
    pub const ALL: [OpClass; 6] = [
        OpClass::Add,
        OpClass::Mul,
        OpClass::Fma,
        OpClass::Div,
        OpClass::Load,
        OpClass::Store,
    ];

    /// Classes that retire in arithmetic-only cycles.
    pub const ARITHMETIC: [OpClass; 4] = [OpClass::Add, OpClass::Mul, OpClass::Fma, OpClass::Div];

    pub fn as_str(self) -> &'static str {
        match self {
            OpClass::Add => "add",
            OpClass::Mul => "mul",
            OpClass::Fma => "fma",
            OpClass::Div => "div",
            OpClass::Load => "load",
            OpClass::Store => "store",
        }
    }
}

impl fmt::Display for OpClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OpClass::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown operation class `{s}`")))
    }
}

impl Serialize for OpClass {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for OpClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
