use super::{parse_machine, MachineModel};
use crate::error::{Error, Result};

pub const BUILTIN_MACHINE_NAMES: [&str; 4] = ["skl", "epyc", "tx2", "pwr9"];

const SOURCES: [(&str, &str); 4] = [
    ("skl", include_str!("../../presets/machines/skl.toml")),
    ("epyc", include_str!("../../presets/machines/epyc.toml")),
    ("tx2", include_str!("../../presets/machines/tx2.toml")),
    ("pwr9", include_str!("../../presets/machines/pwr9.toml")),
];

/// Document text of a bundled machine.
pub fn builtin_machine_source(name: &str) -> Option<&'static str> {
    SOURCES
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, s)| *s)
}

pub fn builtin_machine(name: &str) -> Result<MachineModel> {
    let text = builtin_machine_source(name).ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
    parse_machine(text)
}

/// All bundled machines, in a fixed order.
pub fn builtin_machines() -> Vec<(&'static str, MachineModel)> {
    SOURCES
        .iter()
        .map(|(name, text)| {
            let m = parse_machine(text).unwrap_or_else(|e| panic!("bundled machine {name}: {e}"));
            (*name, m)
        })
        .collect()
}
