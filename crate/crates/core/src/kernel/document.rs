use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ensure_valid, AccessKind, ArrayAccess, KernelModel, OpMix, ParallelAxis};
use crate::error::{Error, Result};
use crate::num::Num;
use crate::ops::OpClass;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelDoc {
    name: String,
    #[serde(default = "unit")]
    work_per_iter: Num,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flops_per_iter: Option<Num>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    dep_chain: Vec<OpClass>,
    #[serde(default, skip_serializing_if = "Num::is_zero")]
    sync_per_outer_iter: Num,
    #[serde(default = "outer")]
    parallel_axis: String,
    ops: BTreeMap<OpClass, Num>,
    #[serde(rename = "loop")]
    loop_dims: LoopDoc,
    arrays: BTreeMap<String, ArrayDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoopDoc {
    ni: u64,
    #[serde(default = "one")]
    nj: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayDoc {
    elem_bytes: u32,
    kind: String,
    offsets: Vec<[i64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    write_offsets: Option<Vec<[i64; 2]>>,
    #[serde(default = "yes")]
    dense: bool,
}

fn unit() -> Num {
    Num(1.0)
}
fn one() -> u64 {
    1
}
fn yes() -> bool {
    true
}
fn outer() -> String {
    "outer".into()
}

fn schema(message: impl Into<String>) -> Error {
    Error::Schema {
        document: "kernel".into(),
        message: message.into(),
    }
}

fn pairs(v: Vec<[i64; 2]>) -> Vec<(i64, i64)> {
    v.into_iter().map(|[a, b]| (a, b)).collect()
}

fn arrays(v: &[(i64, i64)]) -> Vec<[i64; 2]> {
    v.iter().map(|&(a, b)| [a, b]).collect()
}

impl KernelDoc {
    fn into_model(self) -> Result<KernelModel> {
        let mut ops = OpMix::default();
        for (class, n) in self.ops {
            ops.set(class, n.0);
        }
        let parallel_axis = match self.parallel_axis.as_str() {
            "outer" => ParallelAxis::Outer,
            "inner" => ParallelAxis::Inner,
            other => {
                return Err(schema(format!(
                    "parallel_axis: expected `outer` or `inner`, got `{other}`"
                )))
            }
        };
        let mut out = Vec::new();
        for (id, a) in self.arrays {
            let kind = match a.kind.as_str() {
                "read" => AccessKind::Read,
                "write" => AccessKind::Write,
                "read_write" => AccessKind::ReadWrite,
                other => {
                    return Err(schema(format!(
                        "arrays.{id}.kind: expected `read`, `write` or `read_write`, got `{other}`"
                    )))
                }
            };
            let write_offsets = match (kind, a.write_offsets) {
                (AccessKind::ReadWrite, None) => vec![(0, 0)],
                (_, w) => w.map(pairs).unwrap_or_default(),
            };
            out.push(ArrayAccess {
                id,
                elem_bytes: a.elem_bytes,
                kind,
                offsets: pairs(a.offsets),
                write_offsets,
                dense: a.dense,
            });
        }
        Ok(KernelModel {
            name: self.name,
            ops,
            dep_chain: self.dep_chain,
            arrays: out,
            ni: self.loop_dims.ni,
            nj: self.loop_dims.nj,
            work_per_iter: self.work_per_iter.0,
            flops_per_iter: self.flops_per_iter.map(|n| n.0),
            parallel_axis,
            sync_per_outer_iter: self.sync_per_outer_iter.0,
        })
    }

    fn from_model(k: &KernelModel) -> Self {
        KernelDoc {
            name: k.name.clone(),
            work_per_iter: Num(k.work_per_iter),
            flops_per_iter: k.flops_per_iter.map(Num),
            dep_chain: k.dep_chain.clone(),
            sync_per_outer_iter: Num(k.sync_per_outer_iter),
            parallel_axis: match k.parallel_axis {
                ParallelAxis::Outer => "outer",
                ParallelAxis::Inner => "inner",
            }
            .into(),
            ops: OpClass::ALL
                .into_iter()
                .filter(|c| k.ops.get(*c) != 0.0)
                .map(|c| (c, Num(k.ops.get(c))))
                .collect(),
            loop_dims: LoopDoc { ni: k.ni, nj: k.nj },
            arrays: k
                .arrays
                .iter()
                .map(|a| {
                    (
                        a.id.clone(),
                        ArrayDoc {
                            elem_bytes: a.elem_bytes,
                            kind: a.kind.as_str().into(),
                            offsets: arrays(&a.offsets),
                            write_offsets: (a.kind == AccessKind::ReadWrite)
                                .then(|| arrays(&a.write_offsets)),
                            dense: a.dense,
                        },
                    )
                })
                .collect(),
        }
    }
}

/// Parses a kernel document without checking model invariants.
pub fn parse_kernel_unchecked(text: &str) -> Result<KernelModel> {
    let doc: KernelDoc = toml::from_str(text).map_err(|e| schema(e.to_string()))?;
    doc.into_model()
}

pub fn parse_kernel(text: &str) -> Result<KernelModel> {
    ensure_valid(parse_kernel_unchecked(text)?)
}

pub fn serialize_kernel(k: &KernelModel) -> String {
    toml::to_string(&KernelDoc::from_model(k)).expect("kernel documents always serialize")
}
