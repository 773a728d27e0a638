//! Application models: what one loop iteration executes and touches.

mod document;
mod presets;

pub use document::{parse_kernel, parse_kernel_unchecked, serialize_kernel};
pub use presets::{builtin_kernel, builtin_kernel_source, builtin_kernels, BUILTIN_KERNEL_NAMES};

use crate::error::{Error, Result};
use crate::machine::LatencyTable;
use crate::ops::OpClass;

/// Operation counts per loop iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OpMix {
    pub add: f64,
    pub mul: f64,
    pub fma: f64,
    pub div: f64,
    pub load: f64,
    pub store: f64,
}

impl OpMix {
    pub fn get(&self, class: OpClass) -> f64 {
        match class {
            OpClass::Add => self.add,
            OpClass::Mul => self.mul,
            OpClass::Fma => self.fma,
            OpClass::Div => self.div,
            OpClass::Load => self.load,
            OpClass::Store => self.store,
        }
    }

    pub fn set(&mut self, class: OpClass, n: f64) {
        match class {
            OpClass::Add => self.add = n,
            OpClass::Mul => self.mul = n,
            OpClass::Fma => self.fma = n,
            OpClass::Div => self.div = n,
            OpClass::Load => self.load = n,
            OpClass::Store => self.store = n,
        }
    }

    pub fn total(&self) -> f64 {
        OpClass::ALL.iter().map(|c| self.get(*c)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
    ReadWrite,
}

impl AccessKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AccessKind::Read => "read",
            AccessKind::Write => "write",
            AccessKind::ReadWrite => "read_write",
        }
    }
}

/// Relative index of a reference as (outer, inner).
pub type Offset = (i64, i64);

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayAccess {
    pub id: String,
    pub elem_bytes: u32,
    pub kind: AccessKind,
    /// Read offsets for `read` and `read_write`, write offsets for `write`.
    pub offsets: Vec<Offset>,
    /// Write offsets of a `read_write` array.
    pub write_offsets: Vec<Offset>,
    /// Whether consecutive iterations touch consecutive elements.
    pub dense: bool,
}

impl ArrayAccess {
    pub fn read(id: &str, offsets: &[Offset]) -> Self {
        Self::with_kind(id, AccessKind::Read, offsets)
    }

    pub fn write(id: &str, offsets: &[Offset]) -> Self {
        Self::with_kind(id, AccessKind::Write, offsets)
    }

    pub fn read_write(id: &str, reads: &[Offset], writes: &[Offset]) -> Self {
        ArrayAccess {
            write_offsets: writes.to_vec(),
            ..Self::with_kind(id, AccessKind::ReadWrite, reads)
        }
    }

    fn with_kind(id: &str, kind: AccessKind, offsets: &[Offset]) -> Self {
        ArrayAccess {
            id: id.to_string(),
            elem_bytes: 8,
            kind,
            offsets: offsets.to_vec(),
            write_offsets: Vec::new(),
            dense: true,
        }
    }

    pub fn read_offsets(&self) -> &[Offset] {
        match self.kind {
            AccessKind::Write => &[],
            _ => &self.offsets,
        }
    }

    pub fn write_offsets(&self) -> &[Offset] {
        match self.kind {
            AccessKind::Read => &[],
            AccessKind::Write => &self.offsets,
            AccessKind::ReadWrite => &self.write_offsets,
        }
    }

    pub fn is_read(&self) -> bool {
        !self.read_offsets().is_empty()
    }

    pub fn is_written(&self) -> bool {
        !self.write_offsets().is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParallelAxis {
    Outer,
    Inner,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    pub name: String,
    pub ops: OpMix,
    /// Operation classes on the loop-carried critical path.
    pub dep_chain: Vec<OpClass>,
    /// Arrays sorted by id.
    pub arrays: Vec<ArrayAccess>,
    pub ni: u64,
    pub nj: u64,
    pub work_per_iter: f64,
    pub flops_per_iter: Option<f64>,
    pub parallel_axis: ParallelAxis,
    pub sync_per_outer_iter: f64,
}

impl KernelModel {
    pub fn array(&self, id: &str) -> Option<&ArrayAccess> {
        self.arrays.iter().find(|a| a.id == id)
    }

    pub fn iterations(&self) -> u64 {
        self.ni * self.nj
    }

    /// Bytes touched by one full sweep over all arrays.
    pub fn footprint_bytes(&self) -> u64 {
        self.arrays
            .iter()
            .map(|a| a.elem_bytes as u64 * self.iterations())
            .sum()
    }

    pub fn with_loop(&self, ni: u64, nj: u64) -> KernelModel {
        KernelModel {
            ni,
            nj,
            ..self.clone()
        }
    }
}

pub fn validate_kernel(k: &KernelModel) -> Vec<String> {
    let mut v = Vec::new();
    for class in OpClass::ALL {
        let n = k.ops.get(class);
        if !(n >= 0.0) || !n.is_finite() {
            v.push(format!("operation count for {class} must be non-negative (got {n})"));
        }
    }
    if !(k.ops.total() > 0.0) {
        v.push("operation mix is empty".to_string());
    }
    if k.ni == 0 || k.nj == 0 {
        v.push(format!("loop dimensions must be at least 1 (got ni={}, nj={})", k.ni, k.nj));
    }
    if !(k.work_per_iter > 0.0) {
        v.push(format!("work per iteration must be positive (got {})", k.work_per_iter));
    }
    if !(k.sync_per_outer_iter >= 0.0) {
        v.push("synchronizations per outer iteration must be non-negative".to_string());
    }
    let mut ids: Vec<&str> = k.arrays.iter().map(|a| a.id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != k.arrays.len() {
        v.push("array ids must be unique".to_string());
    }
    for a in &k.arrays {
        if a.offsets.is_empty() {
            v.push(format!("array `{}` has no references", a.id));
        }
        if a.kind != AccessKind::ReadWrite && !a.write_offsets.is_empty() {
            v.push(format!("array `{}`: write_offsets only apply to read_write arrays", a.id));
        }
        if a.kind == AccessKind::ReadWrite && a.write_offsets.is_empty() {
            v.push(format!("read_write array `{}` has no write reference", a.id));
        }
        if a.elem_bytes == 0 {
            v.push(format!("array `{}`: element size must be positive", a.id));
        }
    }
    v
}

pub fn ensure_valid(k: KernelModel) -> Result<KernelModel> {
    let violations = validate_kernel(&k);
    if violations.is_empty() {
        Ok(k)
    } else {
        Err(Error::Invalid {
            what: format!("kernel `{}`", k.name),
            violations,
        })
    }
}

/// Cycles per iteration spent on the loop-carried dependency chain.
pub fn dependency_cycles(chain: &[OpClass], latency: &LatencyTable) -> Result<f64> {
    chain
        .iter()
        .map(|c| {
            latency
                .get(c)
                .copied()
                .ok_or_else(|| Error::MissingLatency(c.to_string()))
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::builtin_machine;

    #[test]
    fn chain_latency_sums() {
        let skl = builtin_machine("skl").unwrap();
        let tx2 = builtin_machine("tx2").unwrap();
        let chain = [OpClass::Fma, OpClass::Mul];
        assert_eq!(dependency_cycles(&chain, &skl.latency).unwrap(), 8.0);
        assert_eq!(dependency_cycles(&chain, &tx2.latency).unwrap(), 12.0);
        assert_eq!(dependency_cycles(&[], &skl.latency).unwrap(), 0.0);
    }

    #[test]
    fn missing_latency() {
        let skl = builtin_machine("skl").unwrap();
        let err = dependency_cycles(&[OpClass::Div], &skl.latency).unwrap_err();
        assert!(matches!(err, Error::MissingLatency(c) if c == "div"));
    }

    #[test]
    fn empty_mix_is_invalid() {
        let mut k = builtin_kernel("dot").unwrap();
        k.ops = OpMix::default();
        let v = validate_kernel(&k);
        assert_eq!(v, ["operation mix is empty"]);
    }

    #[test]
    fn access_views() {
        let k = builtin_kernel("gs_fwd").unwrap();
        let z = k.array("z").unwrap();
        assert_eq!(z.read_offsets(), &[(-1, 0), (0, -1)]);
        assert_eq!(z.write_offsets(), &[(0, 0)]);
        let r = k.array("r").unwrap();
        assert!(r.is_read() && !r.is_written());
    }

    #[test]
    fn footprint_counts_every_array() {
        let k = builtin_kernel("daxpby").unwrap();
        assert_eq!(k.footprint_bytes(), 2 * 8 * 25000 * 2000);
        assert_eq!(k.with_loop(16, 16).footprint_bytes(), 2 * 8 * 256);
    }
}
