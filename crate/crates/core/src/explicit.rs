//! Line-oriented text format for explicit MDPs and DTMCs.
//!
//! ```text
//! MODEL mdp
//! SCHEMA x:0:3 y:0:3
//! ACTIONS north south
//! STATE 0 0 0
//! STATE 1 0 1
//! TRANS 0 0 1 1.0000000000000000e0
//! ...
//! ```
//!
//! `ACTIONS` is omitted for DTMCs, whose `TRANS` lines carry no action
//! column. Probabilities are written with 17 significant digits, which
//! round-trips every `f64` exactly. Rewards are not serialized.

use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use crate::error::FormatError;
use crate::model::{
    validate_dtmc, validate_mdp_with, Choice, Distribution, ExplicitDtmc, ExplicitMdp,
    FeatureSchema, StateVector,
};

#[derive(Debug, Clone, PartialEq)]
pub enum ExplicitModel {
    Mdp(ExplicitMdp),
    Dtmc(ExplicitDtmc),
}

impl PartialEq for ExplicitMdp {
    fn eq(&self, other: &Self) -> bool {
        self.schema() == other.schema()
            && self.states() == other.states()
            && self.actions() == other.actions()
            && (0..self.num_states()).all(|s| self.choices(s) == other.choices(s))
    }
}

impl PartialEq for ExplicitDtmc {
    fn eq(&self, other: &Self) -> bool {
        self.schema() == other.schema()
            && self.states() == other.states()
            && self.initial() == other.initial()
            && self.rows() == other.rows()
    }
}

fn fmt_prob(p: f64) -> String {
    format!("{p:.16e}")
}

fn write_header<W: Write>(out: &mut W, kind: &str, schema: &FeatureSchema) -> std::io::Result<()> {
    writeln!(out, "MODEL {kind}")?;
    write!(out, "SCHEMA")?;
    for (name, (lo, hi)) in schema.names().iter().zip(schema.bounds()) {
        write!(out, " {name}:{lo}:{hi}")?;
    }
    writeln!(out)
}

fn write_states<W: Write>(out: &mut W, states: &[StateVector]) -> std::io::Result<()> {
    for (i, s) in states.iter().enumerate() {
        write!(out, "STATE {i}")?;
        for v in s.values() {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_mdp<W: Write>(m: &ExplicitMdp, out: &mut W) -> Result<(), FormatError> {
    write_header(out, "mdp", m.schema())?;
    writeln!(out, "ACTIONS {}", m.actions().join(" "))?;
    write_states(out, m.states())?;
    for s in 0..m.num_states() {
        for c in m.choices(s) {
            for &(t, p) in &c.successors {
                writeln!(out, "TRANS {s} {} {t} {}", c.action, fmt_prob(p))?;
            }
        }
    }
    Ok(())
}

pub fn write_dtmc<W: Write>(d: &ExplicitDtmc, out: &mut W) -> Result<(), FormatError> {
    if d.initial() != 0 {
        return Err(FormatError::Invalid(format!(
            "initial state must have index 0, found {}",
            d.initial()
        )));
    }
    write_header(out, "dtmc", d.schema())?;
    write_states(out, d.states())?;
    for s in 0..d.num_states() {
        for &(t, p) in d.row(s) {
            writeln!(out, "TRANS {s} {t} {}", fmt_prob(p))?;
        }
    }
    Ok(())
}

pub fn write_explicit<W: Write>(model: &ExplicitModel, out: &mut W) -> Result<(), FormatError> {
    match model {
        ExplicitModel::Mdp(m) => write_mdp(m, out),
        ExplicitModel::Dtmc(d) => write_dtmc(d, out),
    }
}

pub fn mdp_to_string(m: &ExplicitMdp) -> String {
    let mut buf = Vec::new();
    write_mdp(m, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("format is ascii")
}

pub fn dtmc_to_string(d: &ExplicitDtmc) -> String {
    let mut buf = Vec::new();
    write_dtmc(d, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("format is ascii")
}

/// Hex SHA-256 prefix of the serialized MDP; equal models share it.
pub fn mdp_fingerprint(m: &ExplicitMdp) -> String {
    hash_hex(mdp_to_string(m).as_bytes())
}

pub fn dtmc_fingerprint(d: &ExplicitDtmc) -> String {
    hash_hex(dtmc_to_string(d).as_bytes())
}

pub(crate) fn hash_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    number: usize,
}

impl<R: BufRead> Lines<R> {
    /// Next non-blank line with its 1-based number.
    fn next_line(&mut self) -> Result<Option<(usize, String)>, FormatError> {
        for line in self.inner.by_ref() {
            self.number += 1;
            let line = line?;
            if !line.trim().is_empty() {
                return Ok(Some((self.number, line)));
            }
        }
        Ok(None)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse { line, message: message.into() }
}

fn semantic_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Semantic { line, message: message.into() }
}

fn parse_num<T: std::str::FromStr>(line: usize, token: &str, what: &str) -> Result<T, FormatError> {
    token
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {what} {token:?}")))
}

fn parse_schema(line: usize, tokens: &[&str]) -> Result<FeatureSchema, FormatError> {
    let mut features = Vec::new();
    for tok in tokens {
        let parts: Vec<&str> = tok.split(':').collect();
        if parts.len() != 3 {
            return Err(parse_err(line, format!("expected name:min:max, found {tok:?}")));
        }
        features.push((
            parts[0].to_string(),
            parse_num::<i64>(line, parts[1], "bound")?,
            parse_num::<i64>(line, parts[2], "bound")?,
        ));
    }
    FeatureSchema::new(features).map_err(|e| semantic_err(line, e.to_string()))
}

/// Reads a model in the explicit format.
///
/// The parsed model is validated; an MDP may enable a subset of actions
/// per state (as produced by permissive policies).
pub fn read_explicit<R: BufRead>(source: R) -> Result<ExplicitModel, FormatError> {
    let mut lines = Lines { inner: source.lines(), number: 0 };

    let (ln, header) = lines.next_line()?.ok_or_else(|| parse_err(1, "no header"))?;
    let is_mdp = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["MODEL", "mdp"] => true,
        ["MODEL", "dtmc"] => false,
        _ => return Err(parse_err(ln, "no header: expected `MODEL mdp` or `MODEL dtmc`")),
    };

    let (ln, schema_line) = lines.next_line()?.ok_or_else(|| parse_err(ln + 1, "missing SCHEMA line"))?;
    let tokens: Vec<&str> = schema_line.split_whitespace().collect();
    if tokens.first() != Some(&"SCHEMA") {
        return Err(parse_err(ln, "expected SCHEMA line"));
    }
    let schema = parse_schema(ln, &tokens[1..])?;

    let mut actions = Vec::new();
    let mut pending = lines.next_line()?;
    if is_mdp {
        let (ln, line) = pending.ok_or_else(|| parse_err(ln + 1, "missing ACTIONS line"))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.first() != Some(&"ACTIONS") || tokens.len() < 2 {
            return Err(parse_err(ln, "expected ACTIONS line with at least one action"));
        }
        actions = tokens[1..].iter().map(|s| s.to_string()).collect();
        pending = lines.next_line()?;
    }

    let mut states = Vec::new();
    let mut mdp_rows: Vec<Vec<Choice>> = Vec::new();
    let mut dtmc_rows: Vec<Distribution> = Vec::new();
    let mut in_trans = false;
    while let Some((ln, line)) = pending {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "STATE" if !in_trans => {
                let idx: usize = parse_num(ln, tokens.get(1).copied().unwrap_or(""), "state index")?;
                if idx != states.len() {
                    return Err(semantic_err(
                        ln,
                        format!("state index {idx} out of order, expected {}", states.len()),
                    ));
                }
                if tokens.len() != 2 + schema.arity() {
                    return Err(parse_err(
                        ln,
                        format!("expected {} feature values, found {}", schema.arity(), tokens.len() - 2),
                    ));
                }
                let values = tokens[2..]
                    .iter()
                    .map(|t| parse_num::<i64>(ln, t, "feature value"))
                    .collect::<Result<Vec<_>, _>>()?;
                let state = StateVector::new(values);
                schema.check(&state).map_err(|e| semantic_err(ln, e.to_string()))?;
                states.push(state);
            }
            "TRANS" => {
                if !in_trans {
                    in_trans = true;
                    mdp_rows = vec![Vec::new(); states.len()];
                    dtmc_rows = vec![Vec::new(); states.len()];
                }
                let expected = if is_mdp { 5 } else { 4 };
                if tokens.len() != expected {
                    return Err(parse_err(ln, format!("expected {expected} fields on TRANS line")));
                }
                let src: usize = parse_num(ln, tokens[1], "source index")?;
                let dst_tok = tokens[expected - 2];
                let dst: usize = parse_num(ln, dst_tok, "target index")?;
                let prob: f64 = parse_num(ln, tokens[expected - 1], "probability")?;
                if src >= states.len() {
                    return Err(semantic_err(ln, format!("source state index {src} out of range")));
                }
                if dst >= states.len() {
                    return Err(semantic_err(ln, format!("target state index {dst} out of range")));
                }
                if !(prob > 0.0 && prob <= 1.0) {
                    return Err(semantic_err(ln, format!("probability {prob} outside (0, 1]")));
                }
                if is_mdp {
                    let action: usize = parse_num(ln, tokens[2], "action index")?;
                    if action >= actions.len() {
                        return Err(semantic_err(
                            ln,
                            format!("action index {action} out of range ({} actions)", actions.len()),
                        ));
                    }
                    let row = &mut mdp_rows[src];
                    match row.iter_mut().find(|c| c.action == action) {
                        Some(c) => c.successors.push((dst, prob)),
                        None => row.push(Choice { action, successors: vec![(dst, prob)] }),
                    }
                } else {
                    dtmc_rows[src].push((dst, prob));
                }
            }
            "STATE" => return Err(parse_err(ln, "STATE line after TRANS lines")),
            other => return Err(parse_err(ln, format!("unknown record {other:?}"))),
        }
        pending = lines.next_line()?;
    }
    if states.is_empty() {
        return Err(parse_err(lines.number.max(1), "model has no states"));
    }
    if !in_trans {
        mdp_rows = vec![Vec::new(); states.len()];
        dtmc_rows = vec![Vec::new(); states.len()];
    }

    let model = if is_mdp {
        let m = ExplicitMdp::new(schema, states, actions, mdp_rows)
            .map_err(|e| FormatError::Invalid(e.to_string()))?;
        let report = validate_mdp_with(&m, false);
        if let Some(v) = report.violations.first() {
            return Err(FormatError::Invalid(v.to_string()));
        }
        ExplicitModel::Mdp(m)
    } else {
        let d = ExplicitDtmc::new(schema, states, 0, dtmc_rows)
            .map_err(|e| FormatError::Invalid(e.to_string()))?;
        let report = validate_dtmc(&d);
        if let Some(v) = report.violations.first() {
            return Err(FormatError::Invalid(v.to_string()));
        }
        ExplicitModel::Dtmc(d)
    };
    Ok(model)
}

pub fn read_explicit_str(text: &str) -> Result<ExplicitModel, FormatError> {
    read_explicit(text.as_bytes())
}
