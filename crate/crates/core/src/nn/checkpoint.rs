//! Line-oriented text dump of named parameter arrays.
//!
//! ```text
//! bdq-params v1
//! meta <key> <value...>
//! param <name> <d0>x<d1>... <v0> <v1> ...
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! save/load cycle reproduces every bit.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::{NnError, Tensor};

pub const PARAMS_HEADER: &str = "bdq-params v1";

/// Named tensors plus free-form metadata, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamDump {
    pub meta: BTreeMap<String, String>,
    pub params: Vec<(String, Tensor)>,
}

impl ParamDump {
    pub fn push(&mut self, name: impl Into<String>, tensor: &Tensor) {
        let mut t = tensor.clone();
        t.clear_grad();
        self.params.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn take(&mut self, name: &str) -> Result<Tensor, NnError> {
        let pos = self
            .params
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| NnError::Checkpoint(format!("missing parameter `{name}`")))?;
        Ok(self.params.remove(pos).1)
    }

    pub fn meta(&self, key: &str) -> Result<&str, NnError> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| NnError::Checkpoint(format!("missing metadata `{key}`")))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{PARAMS_HEADER}")?;
        for (k, v) in &self.meta {
            debug_assert!(!k.contains(char::is_whitespace) && !v.contains('\n'));
            writeln!(w, "meta {k} {v}")?;
        }
        for (name, t) in &self.params {
            let shape = t
                .shape()
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join("x");
            let shape = if shape.is_empty() { "scalar".into() } else { shape };
            write!(w, "param {name} {shape}")?;
            for v in t.values() {
                write!(w, " {v:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, NnError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| NnError::Checkpoint(e.to_string()))?
            .unwrap_or_default();
        if header.trim_end() != PARAMS_HEADER {
            return Err(NnError::Checkpoint(format!(
                "unsupported header `{header}` (expected `{PARAMS_HEADER}`)"
            )));
        }
        let mut dump = ParamDump::default();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| NnError::Checkpoint(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| NnError::Checkpoint(format!("line {}: {what}", lineno + 2));
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                dump.meta.insert(k.to_string(), v.to_string());
            } else if let Some(rest) = line.strip_prefix("param ") {
                let mut parts = rest.split_ascii_whitespace();
                let name = parts.next().ok_or_else(|| bad("missing name"))?;
                let shape_str = parts.next().ok_or_else(|| bad("missing shape"))?;
                let shape = if shape_str == "scalar" {
                    Vec::new()
                } else {
                    shape_str
                        .split('x')
                        .map(|d| d.parse::<usize>().map_err(|_| bad("bad shape")))
                        .collect::<Result<Vec<_>, _>>()?
                };
                let values = parts
                    .map(|v| v.parse::<f64>().map_err(|_| bad("bad value")))
                    .collect::<Result<Vec<_>, _>>()?;
                let t = Tensor::new(shape, values).map_err(|e| bad(&e.to_string()))?;
                dump.params.push((name.to_string(), t));
            } else {
                return Err(bad("unrecognised record"));
            }
        }
        Ok(dump)
    }
}
