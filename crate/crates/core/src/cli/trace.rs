//! Line-oriented trace files.
//!
//! ```text
//! # comment
//! access 0x280 gap=0 crit=1
//! access 128 gap=5 crit=0
//! ```

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{Access, Address, TaskTrace};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct TraceError {
    pub line: usize,
    pub kind: TraceErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceErrorKind {
    #[error("unknown directive `{0}`")]
    UnknownDirective(String),
    #[error("malformed address `{0}`")]
    Address(String),
    #[error("missing address")]
    MissingAddress,
    #[error("gap must be a non-negative integer, got `{0}`")]
    Gap(String),
    #[error("crit must be 0 or 1, got `{0}`")]
    Crit(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("duplicate field `{0}`")]
    DuplicateField(String),
    #[error("unexpected token `{0}`")]
    Unexpected(String),
}

/// Parses a decimal or `0x`-prefixed hexadecimal number.
pub fn parse_number(s: &str) -> Option<u64> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

pub fn parse_trace(text: &str) -> Result<TaskTrace, TraceError> {
    let mut accesses = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |kind| TraceError { line, kind };
        let content = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let directive = tokens.next().expect("non-empty line");
        if directive != "access" {
            return Err(err(TraceErrorKind::UnknownDirective(directive.to_string())));
        }
        let addr_token = tokens.next().ok_or(err(TraceErrorKind::MissingAddress))?;
        let address: Address =
            parse_number(addr_token).ok_or_else(|| err(TraceErrorKind::Address(addr_token.to_string())))?;
        let (mut gap, mut crit) = (None, None);
        for token in tokens {
            match token.split_once('=') {
                Some(("gap", v)) => {
                    if gap.is_some() {
                        return Err(err(TraceErrorKind::DuplicateField("gap".into())));
                    }
                    gap = Some(v.parse::<u64>().map_err(|_| err(TraceErrorKind::Gap(v.to_string())))?);
                }
                Some(("crit", v)) => {
                    if crit.is_some() {
                        return Err(err(TraceErrorKind::DuplicateField("crit".into())));
                    }
                    crit = Some(match v {
                        "0" => false,
                        "1" => true,
                        _ => return Err(err(TraceErrorKind::Crit(v.to_string()))),
                    });
                }
                _ => return Err(err(TraceErrorKind::Unexpected(token.to_string()))),
            }
        }
        accesses.push(Access {
            address,
            gap_before: gap.ok_or(err(TraceErrorKind::MissingField("gap")))?,
            critical: crit.ok_or(err(TraceErrorKind::MissingField("crit")))?,
        });
    }
    Ok(TaskTrace::new(accesses))
}

/// Canonical text form: one `access` line per access, hex addresses.
pub fn render_trace(trace: &TaskTrace) -> String {
    let mut out = String::new();
    for a in &trace.accesses {
        let _ = writeln!(
            out,
            "access {:#x} gap={} crit={}",
            a.address,
            a.gap_before,
            u8::from(a.critical)
        );
    }
    out
}
