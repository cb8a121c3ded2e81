//! Shared helpers for integration tests: a direct LOF reference and scenario
//! plumbing.

#![allow(dead_code)]

use lofscan_core::log_model::{filter_entries, parse_log_with, LogRecord, ParseOptions};
use lofscan_core::pipeline::{analyze_chunk, rank_windows, ScoringParams};
use lofscan_core::synthgen::{generate, GroundTruth, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CLOSED_LOOP_SCENARIO: &str = include_str!("../../../../scenarios/closed_loop.toml");
pub const AQUARIUM_SCENARIO: &str = include_str!("../../../../scenarios/aquarium.toml");

/// LOF computed straight from the definitions with plain loops and a full
/// sort per point. Quadratic memory, for small inputs only.
pub fn naive_lof(points: &[Vec<f64>], k: usize) -> Vec<f64> {
    let n = points.len();
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let d: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| dist(&points[i], &points[j])).collect())
        .collect();
    let mut kdist = vec![0.0; n];
    let mut hood: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d[i][j]).collect();
        others.sort_by(f64::total_cmp);
        kdist[i] = others[k - 1];
        hood.push((0..n).filter(|&j| j != i && d[i][j] <= kdist[i]).collect());
    }
    let ar: Vec<f64> = (0..n)
        .map(|i| {
            let s: f64 = hood[i].iter().map(|&j| d[i][j].max(kdist[j])).sum();
            s / hood[i].len() as f64
        })
        .collect();
    (0..n)
        .map(|i| {
            let s: f64 = hood[i]
                .iter()
                .map(|&j| {
                    if ar[j] > 0.0 {
                        ar[i] / ar[j]
                    } else if ar[i] > 0.0 {
                        f64::INFINITY
                    } else {
                        1.0
                    }
                })
                .sum();
            s / hood[i].len() as f64
        })
        .collect()
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-10.0..10.0)).collect())
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn relative_close(a: f64, b: f64, tol: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn scenario(text: &str, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::from_toml(text).expect("scenario parses");
    cfg.seed = seed;
    cfg
}

/// Generated log rendered to CSV and parsed back into records.
pub fn records_for(cfg: &ScenarioConfig) -> (Vec<LogRecord>, GroundTruth) {
    let log = generate(cfg).expect("scenario generates");
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    let parsed = parse_log_with(&buf[..], ParseOptions::default()).unwrap();
    assert!(parsed.warnings.is_empty());
    (parsed.records, log.truth)
}

/// Scores of one chunk together with the entry ids each window covers.
pub struct ScoredChunk {
    pub lof: Vec<f64>,
    pub windows: Vec<Vec<u64>>,
}

pub fn score_chunk(
    records: &[LogRecord],
    params: &ScoringParams,
    cfg: &ScenarioConfig,
) -> ScoredChunk {
    let classes = cfg.class_map();
    let report = analyze_chunk(0, records, params, &classes).expect("chunk scores");
    let entries: Vec<_> = records.iter().map(|r| r.entry.clone()).collect();
    let kept = filter_entries(&entries, &params.filter, &classes);
    let ids: Vec<u64> = kept.iter().map(|e| e.id).collect();
    let windows = ids.windows(params.window).map(<[u64]>::to_vec).collect();
    ScoredChunk {
        lof: report.scores.iter().map(|s| s.lof).collect(),
        windows,
    }
}

impl ScoredChunk {
    /// Best rank (0-based) of any window touching `first..=last`.
    pub fn best_rank(&self, first: u64, last: u64) -> Option<usize> {
        rank_windows(&self.lof)
            .iter()
            .position(|&w| self.windows[w].iter().any(|id| (first..=last).contains(id)))
    }

    pub fn windows_touching(&self, first: u64, last: u64) -> Vec<usize> {
        (0..self.windows.len())
            .filter(|&w| self.windows[w].iter().any(|id| (first..=last).contains(id)))
            .collect()
    }
}
