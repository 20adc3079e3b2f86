//! Update streams: the `+ id` / `- id` text format, validation, and generators.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{ElementId, GroundSet};
use crate::runs::UpdateKind;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateOp {
    pub kind: UpdateKind,
    pub id: String,
    /// 1-based position in the stream.
    pub t: u64,
}

impl fmt::Display for UpdateOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = match self.kind {
            UpdateKind::Insert => '+',
            UpdateKind::Delete => '-',
        };
        write!(f, "{sign} {}", self.id)
    }
}

/// Parses one op per line; blank lines are skipped.
pub fn parse_stream(text: &str) -> std::result::Result<Vec<UpdateOp>, String> {
    let mut ops = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (kind, rest) = match line.as_bytes()[0] {
            b'+' => (UpdateKind::Insert, &line[1..]),
            b'-' => (UpdateKind::Delete, &line[1..]),
            _ => {
                return Err(format!(
                    "line {}: expected `+ <id>` or `- <id>`",
                    line_no + 1
                ))
            }
        };
        let id = rest.trim();
        if id.is_empty() || id.contains(char::is_whitespace) {
            return Err(format!("line {}: malformed element id `{id}`", line_no + 1));
        }
        ops.push(UpdateOp {
            kind,
            id: id.to_string(),
            t: ops.len() as u64 + 1,
        });
    }
    Ok(ops)
}

pub fn format_stream(ops: &[UpdateOp]) -> String {
    ops.iter().map(|op| format!("{op}\n")).collect()
}

pub fn load_stream(path: impl AsRef<Path>) -> Result<Vec<UpdateOp>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_stream(&text).map_err(|msg| Error::parse(path, msg))
}

pub fn write_stream(ops: &[UpdateOp], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_stream(ops)).map_err(|e| Error::io(path, e))
}

/// Checks that every id is known, inserts target non-live ids and deletes live
/// ones, starting from `V = ∅`. Returns the resolved ids.
pub fn resolve_stream(
    ground: &GroundSet,
    ops: &[UpdateOp],
) -> Result<Vec<(UpdateKind, ElementId)>> {
    let mut live = BTreeSet::new();
    ops.iter()
        .map(|op| {
            let e = ground.lookup(&op.id)?;
            let ok = match op.kind {
                UpdateKind::Insert => live.insert(e),
                UpdateKind::Delete => live.remove(&e),
            };
            if !ok {
                let what = match op.kind {
                    UpdateKind::Insert => "inserts live",
                    UpdateKind::Delete => "deletes non-live",
                };
                return Err(Error::InvalidArgument(format!(
                    "op {} ({op}) {what} element",
                    op.t
                )));
            }
            Ok((op.kind, e))
        })
        .collect()
}

/// Number of distinct ids in the stream.
pub fn distinct_ids(ops: &[UpdateOp]) -> usize {
    ops.iter()
        .map(|op| op.id.as_str())
        .collect::<BTreeSet<_>>()
        .len()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    InsertOnly,
    SlidingWindow,
    RandomChurn,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamParams {
    /// Length cap; `insert_only` emits at most one insert per id.
    pub ops: usize,
    pub window: usize,
    /// Probability that a churn step deletes.
    pub churn_p: f64,
}

/// Generates a valid stream over `ids` (which must be distinct).
///
/// * `insert_only`: the ids in a seeded random order.
/// * `sliding_window`: ids inserted cyclically in the given order; once
///   `window` are live the oldest is deleted before each insert.
/// * `random_churn`: each step deletes a uniform live id with probability
///   `churn_p` and otherwise inserts a uniform non-live id, falling back to the
///   other kind when one is impossible.
pub fn gen_stream(
    kind: StreamKind,
    ids: &[String],
    params: StreamParams,
    seed: u64,
) -> Result<Vec<UpdateOp>> {
    let unique: BTreeSet<_> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(Error::InvalidArgument("stream ids must be distinct".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<(UpdateKind, usize)> = Vec::new();
    match kind {
        StreamKind::InsertOnly => {
            let mut order: Vec<usize> = (0..ids.len()).collect();
            order.shuffle(&mut rng);
            out.extend(
                order
                    .into_iter()
                    .take(params.ops)
                    .map(|i| (UpdateKind::Insert, i)),
            );
        }
        StreamKind::SlidingWindow => {
            if params.window == 0 || params.window > ids.len() {
                return Err(Error::InvalidArgument(format!(
                    "window must lie in [1, {}], got {}",
                    ids.len(),
                    params.window
                )));
            }
            let mut next_insert = 0usize;
            let mut next_delete = 0usize;
            while out.len() < params.ops {
                if next_insert - next_delete == params.window {
                    out.push((UpdateKind::Delete, next_delete % ids.len()));
                    next_delete += 1;
                } else {
                    out.push((UpdateKind::Insert, next_insert % ids.len()));
                    next_insert += 1;
                }
            }
        }
        StreamKind::RandomChurn => {
            if !(params.churn_p > 0.0 && params.churn_p < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "churn probability must lie in (0, 1), got {}",
                    params.churn_p
                )));
            }
            if ids.is_empty() && params.ops > 0 {
                return Err(Error::InvalidArgument("churn needs at least one id".into()));
            }
            let mut live: Vec<usize> = Vec::new();
            let mut dead: Vec<usize> = (0..ids.len()).collect();
            for _ in 0..params.ops {
                let delete = if live.is_empty() {
                    false
                } else if dead.is_empty() {
                    true
                } else {
                    rng.gen_bool(params.churn_p)
                };
                let (from, to) = if delete {
                    (&mut live, &mut dead)
                } else {
                    (&mut dead, &mut live)
                };
                let pick = from.swap_remove(rng.gen_range(0..from.len()));
                to.push(pick);
                let kind = if delete {
                    UpdateKind::Delete
                } else {
                    UpdateKind::Insert
                };
                out.push((kind, pick));
            }
        }
    }
    Ok(out
        .into_iter()
        .enumerate()
        .map(|(t, (kind, i))| UpdateOp {
            kind,
            id: ids[i].clone(),
            t: t as u64 + 1,
        })
        .collect())
}

/// `v0, v1, …, v{n-1}`.
pub fn default_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i}")).collect()
}
