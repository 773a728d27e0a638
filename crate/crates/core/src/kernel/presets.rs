use super::{parse_kernel, KernelModel};
use crate::error::{Error, Result};

pub const BUILTIN_KERNEL_NAMES: [&str; 7] = [
    "daxpby",
    "dot",
    "norm",
    "stream_triad",
    "stencil5",
    "gs_fwd",
    "gs_bwd",
];

const SOURCES: [(&str, &str); 7] = [
    ("daxpby", include_str!("../../presets/kernels/daxpby.toml")),
    ("dot", include_str!("../../presets/kernels/dot.toml")),
    ("norm", include_str!("../../presets/kernels/norm.toml")),
    ("stream_triad", include_str!("../../presets/kernels/stream_triad.toml")),
    ("stencil5", include_str!("../../presets/kernels/stencil5.toml")),
    ("gs_fwd", include_str!("../../presets/kernels/gs_fwd.toml")),
    ("gs_bwd", include_str!("../../presets/kernels/gs_bwd.toml")),
];

pub fn builtin_kernel_source(name: &str) -> Option<&'static str> {
    SOURCES
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, s)| *s)
}

pub fn builtin_kernel(name: &str) -> Result<KernelModel> {
    let text = builtin_kernel_source(name).ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
    parse_kernel(text)
}

pub fn builtin_kernels() -> Vec<(&'static str, KernelModel)> {
    SOURCES
        .iter()
        .map(|(name, text)| {
            let k = parse_kernel(text).unwrap_or_else(|e| panic!("bundled kernel {name}: {e}"));
            (*name, k)
        })
        .collect()
}
