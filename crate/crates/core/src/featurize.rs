//! Entry vectorization, per-chunk normalization and sliding windows.
//!
//! Every command in a chunk owns a block of five slots. Slot 0 holds the
//! numeric argument, slots 1..=4 one-hot encode the string argument through
//! [`hash_slot`]. Component 0 of every vector is the time since the previous
//! entry of the same command, in milliseconds.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log_model::{Argument, LogEntry, Timestamp};

pub const SLOTS_PER_COMMAND: usize = 5;
pub const HASH_BUCKETS: u64 = 4;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Bucket in `0..4` for a string argument.
pub fn hash_slot(s: &str) -> usize {
    (fnv1a64(s.as_bytes()) % HASH_BUCKETS) as usize
}

/// Ordered command inventory of one chunk; fixes the vector layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandSchema {
    commands: Vec<String>,
    index: HashMap<String, usize>,
}

impl CommandSchema {
    pub fn from_commands<I, S>(commands: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let commands: Vec<String> = commands
            .into_iter()
            .map(Into::into)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if commands.is_empty() {
            return Err(Error::input("cannot build a schema from an empty chunk"));
        }
        let index = commands
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Ok(CommandSchema { commands, index })
    }

    pub fn commands(&self) -> &[String] {
        &self.commands
    }

    pub fn position(&self, command: &str) -> Option<usize> {
        self.index.get(command).copied()
    }

    /// `1 + 5 * C`.
    pub fn dimension(&self) -> usize {
        1 + SLOTS_PER_COMMAND * self.commands.len()
    }

    /// First component of a command's block.
    pub fn block_offset(&self, position: usize) -> usize {
        1 + SLOTS_PER_COMMAND * position
    }
}

/// Sorted set of distinct commands in the chunk.
pub fn build_schema(chunk: &[LogEntry]) -> Result<CommandSchema> {
    CommandSchema::from_commands(chunk.iter().map(|e| e.command.as_str()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryVector {
    pub entry_id: u64,
    pub values: Vec<f64>,
}

impl EntryVector {
    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }
}

/// Previous timestamp of each schema command seen so far in the chunk.
#[derive(Debug, Clone)]
pub struct LastSeen(Vec<Option<Timestamp>>);

impl LastSeen {
    pub fn new(schema: &CommandSchema) -> Self {
        LastSeen(vec![None; schema.commands.len()])
    }
}

pub fn vectorize_entry(
    entry: &LogEntry,
    schema: &CommandSchema,
    last_seen: &mut LastSeen,
) -> Result<EntryVector> {
    let pos = schema
        .position(&entry.command)
        .ok_or_else(|| Error::SchemaMismatch(entry.command.clone()))?;
    let mut values = vec![0.0; schema.dimension()];

    values[0] = match last_seen.0[pos].replace(entry.timestamp) {
        Some(prev) => entry.timestamp.millis_since(prev) as f64,
        None => 0.0,
    };

    let block = schema.block_offset(pos);
    match &entry.argument {
        Argument::Numeric(v) => values[block] = *v,
        Argument::Text(s) => values[block + 1 + hash_slot(s)] = 1.0,
        Argument::None => {}
    }
    Ok(EntryVector {
        entry_id: entry.id,
        values,
    })
}

/// Vectorizes a whole chunk in order; time deltas restart at the chunk start.
pub fn vectorize_chunk(chunk: &[LogEntry], schema: &CommandSchema) -> Result<Vec<EntryVector>> {
    let mut last_seen = LastSeen::new(schema);
    chunk
        .iter()
        .map(|e| vectorize_entry(e, schema, &mut last_seen))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    /// Population standard deviation; exactly 0 for constant components.
    pub stddev: Vec<f64>,
}

pub fn compute_norm_stats(vectors: &[EntryVector]) -> Result<NormalizationStats> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::input("cannot normalize an empty set of vectors"))?;
    let dim = first.values.len();
    if vectors.iter().any(|v| v.values.len() != dim) {
        return Err(Error::input("entry vectors have mixed dimensions"));
    }
    let n = vectors.len() as f64;

    let mut sum = vec![0.0; dim];
    let mut min = first.values.clone();
    let mut max = first.values.clone();
    for v in vectors {
        for (j, &x) in v.values.iter().enumerate() {
            sum[j] += x;
            min[j] = min[j].min(x);
            max[j] = max[j].max(x);
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();

    let mut sq = vec![0.0; dim];
    for v in vectors {
        for (j, &x) in v.values.iter().enumerate() {
            let d = x - mean[j];
            sq[j] += d * d;
        }
    }

    let mut stddev = Vec::with_capacity(dim);
    let mut mean_out = mean;
    for j in 0..dim {
        if min[j] == max[j] {
            // Summation rounding would otherwise leave a tiny non-zero spread.
            mean_out[j] = min[j];
            stddev.push(0.0);
        } else {
            stddev.push((sq[j] / n).sqrt());
        }
    }
    Ok(NormalizationStats {
        mean: mean_out,
        stddev,
    })
}

pub fn normalize(v: &EntryVector, stats: &NormalizationStats) -> EntryVector {
    debug_assert_eq!(v.values.len(), stats.mean.len());
    let values = v
        .values
        .iter()
        .zip(stats.mean.iter().zip(&stats.stddev))
        .map(|(&x, (&m, &s))| if s > 0.0 { (x - m) / s } else { 0.0 })
        .collect();
    EntryVector {
        entry_id: v.entry_id,
        values,
    }
}

/// Normalizes a chunk with statistics computed over the chunk itself.
pub fn normalize_chunk(vectors: &[EntryVector]) -> Result<(NormalizationStats, Vec<EntryVector>)> {
    let stats = compute_norm_stats(vectors)?;
    let normalized = vectors.iter().map(|v| normalize(v, &stats)).collect();
    Ok((stats, normalized))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowVector {
    pub window_index: usize,
    pub entry_ids: Vec<u64>,
    pub values: Vec<f64>,
}

fn check_window(len: usize, width: usize) -> Result<()> {
    if width == 0 {
        return Err(Error::config("window width must be at least 1"));
    }
    if len < width {
        return Err(Error::input(format!(
            "{len} entries are fewer than the window width {width}"
        )));
    }
    Ok(())
}

/// Number of stride-1 windows of `width` over `len` entries.
pub fn window_count(len: usize, width: usize) -> usize {
    if width == 0 || len < width {
        0
    } else {
        len - width + 1
    }
}

/// Materializes every stride-1 window. Scoring does not need this (see
/// [`crate::lof::WindowedPoints`]); it is used for dumps and checks.
pub fn window(vectors: &[EntryVector], width: usize) -> Result<Vec<WindowVector>> {
    check_window(vectors.len(), width)?;
    Ok(vectors
        .windows(width)
        .enumerate()
        .map(|(i, members)| WindowVector {
            window_index: i,
            entry_ids: members.iter().map(|v| v.entry_id).collect(),
            values: members
                .iter()
                .flat_map(|v| v.values.iter().copied())
                .collect(),
        })
        .collect())
}

/// Writes `entry_id,v0,v1,...` rows.
pub fn write_entry_vectors<W: Write>(vectors: &[EntryVector], mut out: W) -> Result<()> {
    for v in vectors {
        write!(out, "{}", v.entry_id)?;
        for x in &v.values {
            write!(out, ",{x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Writes one row per window, keyed by the id of its first entry, without
/// materializing the windows.
pub fn write_windows<W: Write>(vectors: &[EntryVector], width: usize, mut out: W) -> Result<()> {
    check_window(vectors.len(), width)?;
    for members in vectors.windows(width) {
        write!(out, "{}", members[0].entry_id)?;
        for v in members {
            for x in &v.values {
                write!(out, ",{x}")?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
