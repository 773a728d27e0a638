//! Names shared by machine and kernel models: hierarchy levels, the links
//! between them, and the runtime contributions the predictor produces.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// A level of the memory hierarchy, innermost first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    L1,
    L2,
    L3,
    Mem,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::L1, Level::L2, Level::L3, Level::Mem];
    pub const CACHES: [Level; 3] = [Level::L1, Level::L2, Level::L3];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::L1 => "L1",
            Level::L2 => "L2",
            Level::L3 => "L3",
            Level::Mem => "Mem",
        }
    }

    pub fn is_cache(self) -> bool {
        self != Level::Mem
    }

    /// Position in the hierarchy (L1 = 0).
    pub fn depth(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Level::L1),
            "l2" => Ok(Level::L2),
            "l3" => Ok(Level::L3),
            "mem" | "memory" => Ok(Level::Mem),
            _ => Err(Error::UnknownLevel(s.to_string())),
        }
    }
}

/// A data path between two hierarchy levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkId {
    L1L2,
    L2L3,
    L2Mem,
    L3Mem,
}

impl LinkId {
    pub const ALL: [LinkId; 4] = [LinkId::L1L2, LinkId::L2L3, LinkId::L2Mem, LinkId::L3Mem];

    pub fn as_str(self) -> &'static str {
        match self {
            LinkId::L1L2 => "L1L2",
            LinkId::L2L3 => "L2L3",
            LinkId::L2Mem => "L2Mem",
            LinkId::L3Mem => "L3Mem",
        }
    }

    /// The (inner, outer) endpoints.
    pub fn endpoints(self) -> (Level, Level) {
        match self {
            LinkId::L1L2 => (Level::L1, Level::L2),
            LinkId::L2L3 => (Level::L2, Level::L3),
            LinkId::L2Mem => (Level::L2, Level::Mem),
            LinkId::L3Mem => (Level::L3, Level::Mem),
        }
    }

    pub fn between(inner: Level, outer: Level) -> Option<LinkId> {
        LinkId::ALL.into_iter().find(|l| l.endpoints() == (inner, outer))
    }

    pub fn touches_memory(self) -> bool {
        self.endpoints().1 == Level::Mem
    }

    pub fn touches(self, level: Level) -> bool {
        let (a, b) = self.endpoints();
        a == level || b == level
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LinkId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LinkId::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownLink(s.to_string()))
    }
}

/// Label of one runtime contribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    /// Cycles in which only arithmetic retires.
    Comp,
    /// Cycles in which at least one load or store retires.
    RegL1,
    Link(LinkId),
}

impl Component {
    pub fn as_str(self) -> &'static str {
        match self {
            Component::Comp => "comp",
            Component::RegL1 => "RegL1",
            Component::Link(l) => l.as_str(),
        }
    }

    pub fn link(self) -> Option<LinkId> {
        match self {
            Component::Link(l) => Some(l),
            _ => None,
        }
    }

    pub fn touches_memory(self) -> bool {
        self.link().is_some_and(LinkId::touches_memory)
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("comp") {
            Ok(Component::Comp)
        } else if s.eq_ignore_ascii_case("regl1") {
            Ok(Component::RegL1)
        } else {
            s.parse().map(Component::Link)
        }
    }
}

macro_rules! string_serde {
    ($($ty:ty),*) => {$(
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    )*};
}

string_serde!(Level, LinkId, Component);
