//! End-to-end scoring of a log: chunking, pre-processing, vectorization,
//! normalization, windowing, LOF and report generation.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{self, EntryVector};
use crate::lof::{self, PointSet, WindowedPoints};
use crate::log_model::{self, ClassMap, FilterConfig, LogEntry, LogRecord, ParseOptions};

pub const DEFAULT_CHUNK_SIZE: usize = 100_000;
pub const DEFAULT_WINDOW: usize = 11;
pub const DEFAULT_K: usize = 20;
pub const DEFAULT_TOP_N: usize = 5;

/// Scoring parameters shared by every chunk.
#[derive(Debug, Clone)]
pub struct ScoringParams {
    pub chunk_size: usize,
    pub window: usize,
    pub k: usize,
    pub top_n: usize,
    /// Skip candidate windows that share an entry with an already selected one.
    pub suppress_overlap: bool,
    pub filter: FilterConfig,
}

impl Default for ScoringParams {
    fn default() -> Self {
        ScoringParams {
            chunk_size: DEFAULT_CHUNK_SIZE,
            window: DEFAULT_WINDOW,
            k: DEFAULT_K,
            top_n: DEFAULT_TOP_N,
            suppress_overlap: false,
            filter: FilterConfig::default(),
        }
    }
}

impl ScoringParams {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_size < 1 || self.window < 1 || self.k < 1 || self.top_n < 1 {
            return Err(Error::config(
                "chunk size, window, k and top must all be positive",
            ));
        }
        if self.window > self.chunk_size {
            return Err(Error::config(format!(
                "window {} exceeds chunk size {}",
                self.window, self.chunk_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub classes: PathBuf,
    pub out_dir: PathBuf,
    pub params: ScoringParams,
    pub lenient: bool,
    pub dump_vectors: bool,
}

/// A window in a report: its position, members and their source lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborWindow {
    pub window_index: usize,
    pub distance: f64,
    pub entry_ids: Vec<u64>,
    pub entries: Vec<LogEntry>,
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierRecord {
    pub chunk_index: usize,
    pub window_index: usize,
    #[serde(with = "lof_value")]
    pub lof: f64,
    pub entry_ids: Vec<u64>,
    pub entries: Vec<LogEntry>,
    pub lines: Vec<String>,
    /// The k-neighbourhood of the window, nearest first.
    pub neighborhood: Vec<NeighborWindow>,
}

/// LOF values are finite or `+inf` (a point next to a cluster of exact
/// duplicates). JSON has no infinity, so it is written as the string `"inf"`.
pub mod lof_value {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            Err(serde::ser::Error::custom(format!(
                "unexpected LOF value {v}"
            )))
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Text(s) => Err(de::Error::custom(format!("bad LOF value {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowScore {
    pub window_index: usize,
    pub first_entry_id: u64,
    pub lof: f64,
}

/// Everything computed for one chunk.
#[derive(Debug, Clone)]
pub struct ChunkReport {
    pub chunk_index: usize,
    /// Entries left after pre-processing.
    pub entries: usize,
    pub entry_dimension: usize,
    pub window_dimension: usize,
    pub scores: Vec<WindowScore>,
    pub outliers: Vec<OutlierRecord>,
    /// Set when the chunk was too short to score.
    pub skipped: Option<String>,
}

/// Window indices ordered by LOF descending, ties by lower index.
pub fn rank_windows(lof: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..lof.len()).collect();
    order.sort_by(|&a, &b| lof[b].total_cmp(&lof[a]).then(a.cmp(&b)));
    order
}

/// Picks the `top_n` best windows from a ranking. With `suppress_overlap`,
/// windows sharing an entry with one already picked are passed over.
pub fn select_top(
    ranking: &[usize],
    top_n: usize,
    width: usize,
    suppress_overlap: bool,
) -> Vec<usize> {
    let mut picked: Vec<usize> = Vec::with_capacity(top_n);
    for &w in ranking {
        if picked.len() == top_n {
            break;
        }
        if suppress_overlap && picked.iter().any(|&p| p.abs_diff(w) < width) {
            continue;
        }
        picked.push(w);
    }
    picked
}

/// Normalized entry vectors of a pre-processed chunk.
pub fn featurize_chunk(
    entries: &[LogEntry],
) -> Result<(featurize::CommandSchema, Vec<EntryVector>)> {
    let schema = featurize::build_schema(entries)?;
    let raw = featurize::vectorize_chunk(entries, &schema)?;
    let (_, normalized) = featurize::normalize_chunk(&raw)?;
    Ok((schema, normalized))
}

/// Scores one chunk of raw records.
pub fn analyze_chunk(
    chunk_index: usize,
    records: &[LogRecord],
    params: &ScoringParams,
    classes: &ClassMap,
) -> Result<ChunkReport> {
    analyze_chunk_with(chunk_index, records, params, classes, |_| Ok(()))
}

fn analyze_chunk_with<F>(
    chunk_index: usize,
    records: &[LogRecord],
    params: &ScoringParams,
    classes: &ClassMap,
    mut on_vectors: F,
) -> Result<ChunkReport>
where
    F: FnMut(&[EntryVector]) -> Result<()>,
{
    let kept: Vec<&LogRecord> = records
        .iter()
        .filter(|r| params.filter.keeps(&r.entry.command, classes))
        .collect();
    let mut report = ChunkReport {
        chunk_index,
        entries: kept.len(),
        entry_dimension: 0,
        window_dimension: 0,
        scores: Vec::new(),
        outliers: Vec::new(),
        skipped: None,
    };
    if kept.len() < params.window {
        let why = format!(
            "chunk {chunk_index}: {} entries after filtering, fewer than the window width {}",
            kept.len(),
            params.window
        );
        log::warn!("{why}; skipped");
        report.skipped = Some(why);
        return Ok(report);
    }

    let entries: Vec<LogEntry> = kept.iter().map(|r| r.entry.clone()).collect();
    let (schema, vectors) = featurize_chunk(&entries)?;
    on_vectors(&vectors)?;

    let dim = schema.dimension();
    let flat: Vec<f64> = vectors
        .iter()
        .flat_map(|v| v.values.iter().copied())
        .collect();
    let members = PointSet::from_flat(flat, dim)?;
    let windows = WindowedPoints::new(&members, params.window)?;
    report.entry_dimension = dim;
    report.window_dimension = windows.dim();

    let table = lof::knn(&windows, params.k)?;
    let scores = lof::lof_from_table(&table);

    report.scores = scores
        .lof
        .iter()
        .enumerate()
        .map(|(i, &l)| WindowScore {
            window_index: i,
            first_entry_id: entries[i].id,
            lof: l,
        })
        .collect();

    let w = params.window;
    let describe = |i: usize| {
        let members = &kept[i..i + w];
        (
            members.iter().map(|r| r.entry.id).collect::<Vec<_>>(),
            members.iter().map(|r| r.entry.clone()).collect::<Vec<_>>(),
            members.iter().map(|r| r.raw.clone()).collect::<Vec<_>>(),
        )
    };
    let ranking = rank_windows(&scores.lof);
    report.outliers = select_top(&ranking, params.top_n, w, params.suppress_overlap)
        .into_iter()
        .map(|i| {
            let (entry_ids, entries, lines) = describe(i);
            let neighborhood = table.neighbors[i]
                .iter()
                .map(|n| {
                    let (entry_ids, entries, lines) = describe(n.index);
                    NeighborWindow {
                        window_index: n.index,
                        distance: n.distance,
                        entry_ids,
                        entries,
                        lines,
                    }
                })
                .collect();
            OutlierRecord {
                chunk_index,
                window_index: i,
                lof: scores.lof[i],
                entry_ids,
                entries,
                lines,
                neighborhood,
            }
        })
        .collect();
    Ok(report)
}

/// Writes the `window_first_entry_id,lof` series.
pub fn emit_timeseries<W: Write>(scores: &[WindowScore], mut out: W) -> Result<()> {
    writeln!(out, "window_first_entry_id,lof")?;
    for s in scores {
        writeln!(out, "{},{}", s.first_entry_id, s.lof)?;
    }
    Ok(())
}

pub fn emit_json<W: Write>(records: &[OutlierRecord], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, records)?;
    writeln!(out)?;
    Ok(())
}

/// Human-readable report: each outlier beside its nearest neighbour window.
pub fn render_text(records: &[OutlierRecord]) -> String {
    let mut s = String::new();
    for (rank, rec) in records.iter().enumerate() {
        let first = rec.entry_ids.first().copied().unwrap_or_default();
        let last = rec.entry_ids.last().copied().unwrap_or_default();
        s.push_str(&format!(
            "=== chunk {} outlier #{}: window {} (entries {first}..{last}), LOF {}\n",
            rec.chunk_index,
            rank + 1,
            rec.window_index,
            rec.lof
        ));
        let right: &[String] = rec
            .neighborhood
            .first()
            .map(|n| &n.lines[..])
            .unwrap_or(&[]);
        let right_title = match rec.neighborhood.first() {
            Some(n) => format!(
                "nearest neighbour: window {} (distance {:.4}, {} in neighbourhood)",
                n.window_index,
                n.distance,
                rec.neighborhood.len()
            ),
            None => "no neighbourhood".to_string(),
        };
        let width = rec
            .lines
            .iter()
            .map(|l| l.chars().count())
            .max()
            .unwrap_or(0)
            .max("outlier".len());
        s.push_str(&format!("{:<width$} | {right_title}\n", "outlier"));
        for i in 0..rec.lines.len().max(right.len()) {
            let l = rec.lines.get(i).map(String::as_str).unwrap_or("");
            let r = right.get(i).map(String::as_str).unwrap_or("");
            s.push_str(&format!("{l:<width$} | {r}\n"));
        }
        s.push('\n');
    }
    s
}

/// Outcome of a full run.
#[derive(Debug, Default)]
pub struct RunSummary {
    pub reports: Vec<ChunkReport>,
    pub failures: Vec<(usize, Error)>,
    pub parse_warnings: usize,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            1
        }
    }
}

fn chunk_path(dir: &Path, i: usize, suffix: &str) -> PathBuf {
    dir.join(format!("chunk_{i}_{suffix}"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_chunk_outputs(out_dir: &Path, report: &ChunkReport) -> Result<()> {
    let i = report.chunk_index;
    let mut ts = create(&chunk_path(out_dir, i, "timeseries.csv"))?;
    emit_timeseries(&report.scores, &mut ts)?;
    ts.flush()?;
    let mut js = create(&chunk_path(out_dir, i, "outliers.json"))?;
    emit_json(&report.outliers, &mut js)?;
    js.flush()?;
    fs::write(
        chunk_path(out_dir, i, "outliers.txt"),
        render_text(&report.outliers),
    )?;
    Ok(())
}

/// Loads inputs. Errors here are configuration or input errors and abort the
/// whole run.
pub fn load_inputs(config: &PipelineConfig) -> Result<(ClassMap, log_model::ParsedLog)> {
    config.params.validate()?;
    let classes = ClassMap::from_reader(BufReader::new(File::open(&config.classes).map_err(
        |e| {
            Error::config(format!(
                "cannot open classes file {}: {e}",
                config.classes.display()
            ))
        },
    )?))?;
    let log = log_model::parse_log_with(
        BufReader::new(File::open(&config.input).map_err(|e| {
            Error::input(format!("cannot open log {}: {e}", config.input.display()))
        })?),
        ParseOptions {
            lenient: config.lenient,
        },
    )?;
    Ok((classes, log))
}

/// Runs every chunk and writes `chunk_<i>_timeseries.csv`,
/// `chunk_<i>_outliers.json` and `chunk_<i>_outliers.txt` into the output
/// directory. Chunk failures are collected, not fatal.
pub fn run(config: &PipelineConfig) -> Result<RunSummary> {
    let (classes, log) = load_inputs(config)?;
    fs::create_dir_all(&config.out_dir)?;
    let chunks = log_model::chunk(&log.records, config.params.chunk_size)?;

    let results: Vec<(usize, Result<ChunkReport>)> = chunks
        .par_iter()
        .enumerate()
        .map(|(i, records)| {
            let res = analyze_chunk_with(i, records, &config.params, &classes, |vectors| {
                if config.dump_vectors {
                    let mut f = create(&chunk_path(&config.out_dir, i, "entry_vectors.csv"))?;
                    featurize::write_entry_vectors(vectors, &mut f)?;
                    f.flush()?;
                    let mut f = create(&chunk_path(&config.out_dir, i, "window_vectors.csv"))?;
                    featurize::write_windows(vectors, config.params.window, &mut f)?;
                    f.flush()?;
                }
                Ok(())
            })
            .and_then(|report| {
                write_chunk_outputs(&config.out_dir, &report)?;
                Ok(report)
            });
            (i, res)
        })
        .collect();

    let mut summary = RunSummary {
        parse_warnings: log.warnings.len(),
        ..Default::default()
    };
    for (i, res) in results {
        match res {
            Ok(r) => summary.reports.push(r),
            Err(e) => {
                log::error!("chunk {i} failed: {e}");
                summary.failures.push((i, e));
            }
        }
    }
    Ok(summary)
}
