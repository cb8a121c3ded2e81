//! Log data model for five-column CPS event logs.
//!
//! A log row looks like
//!
//! ```text
//! 39995,"2014-06-06 22:06:18","fan1_status",NULL,"on"
//! ```
//!
//! with columns `id`, `timestamp`, `command`, `numeric argument` and `string
//! argument`. Absent arguments are written as the bare literal `NULL`.
//! Timestamps come in minute (`YYYY-MM-DD HH:MM`) or second resolution and are
//! held as naive epoch seconds.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SECONDS_FORMAT: &str = "%Y-%m-%d %H:%M:%S";
const MINUTES_FORMAT: &str = "%Y-%m-%d %H:%M";

/// Naive local instant with one-second resolution, stored as epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

impl Timestamp {
    pub fn from_epoch_seconds(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub fn epoch_seconds(self) -> i64 {
        self.0
    }

    pub fn from_naive(dt: NaiveDateTime) -> Self {
        Timestamp(dt.and_utc().timestamp())
    }

    pub fn to_naive(self) -> NaiveDateTime {
        DateTime::from_timestamp(self.0, 0)
            .expect("timestamp in chrono range")
            .naive_utc()
    }

    /// Parses either `YYYY-MM-DD HH:MM:SS` or `YYYY-MM-DD HH:MM` (seconds = 0).
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        NaiveDateTime::parse_from_str(s, SECONDS_FORMAT)
            .or_else(|_| NaiveDateTime::parse_from_str(s, MINUTES_FORMAT))
            .ok()
            .map(Self::from_naive)
    }

    /// Milliseconds elapsed since `earlier`.
    pub fn millis_since(self, earlier: Timestamp) -> i64 {
        (self.0 - earlier.0) * 1000
    }

    pub fn plus_seconds(self, secs: i64) -> Self {
        Timestamp(self.0 + secs)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_naive().format(SECONDS_FORMAT))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Timestamp::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("bad timestamp {s:?}")))
    }
}

/// The optional payload of a log entry. A row never carries both kinds.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Argument {
    #[default]
    None,
    Numeric(f64),
    Text(String),
}

/// One parsed log row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EntryRepr", into = "EntryRepr")]
pub struct LogEntry {
    pub id: u64,
    pub timestamp: Timestamp,
    pub command: String,
    pub argument: Argument,
}

impl LogEntry {
    pub fn new(
        id: u64,
        timestamp: Timestamp,
        command: impl Into<String>,
        argument: Argument,
    ) -> Self {
        LogEntry {
            id,
            timestamp,
            command: command.into(),
            argument,
        }
    }

    pub fn numeric_arg(&self) -> Option<f64> {
        match self.argument {
            Argument::Numeric(v) => Some(v),
            _ => None,
        }
    }

    pub fn string_arg(&self) -> Option<&str> {
        match &self.argument {
            Argument::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Renders the entry in the canonical five-column form.
    pub fn to_csv_line(&self) -> String {
        let numeric = match self.numeric_arg() {
            Some(v) => v.to_string(),
            None => "NULL".to_string(),
        };
        let text = match self.string_arg() {
            Some(s) => quote(s),
            None => "NULL".to_string(),
        };
        format!(
            "{},{},{},{},{}",
            self.id,
            quote(&self.timestamp.to_string()),
            quote(&self.command),
            numeric,
            text
        )
    }
}

#[derive(Serialize, Deserialize)]
struct EntryRepr {
    id: u64,
    timestamp: Timestamp,
    command: String,
    numeric_arg: Option<f64>,
    string_arg: Option<String>,
}

impl TryFrom<EntryRepr> for LogEntry {
    type Error = String;

    fn try_from(r: EntryRepr) -> std::result::Result<Self, String> {
        let argument = match (r.numeric_arg, r.string_arg) {
            (Some(_), Some(_)) => return Err("entry has both numeric and string arguments".into()),
            (Some(v), None) => Argument::Numeric(v),
            (None, Some(s)) => Argument::Text(s),
            (None, None) => Argument::None,
        };
        Ok(LogEntry::new(r.id, r.timestamp, r.command, argument))
    }
}

impl From<LogEntry> for EntryRepr {
    fn from(e: LogEntry) -> Self {
        let (numeric_arg, string_arg) = match e.argument {
            Argument::None => (None, None),
            Argument::Numeric(v) => (Some(v), None),
            Argument::Text(s) => (None, Some(s)),
        };
        EntryRepr {
            id: e.id,
            timestamp: e.timestamp,
            command: e.command,
            numeric_arg,
            string_arg,
        }
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// A parsed entry together with the text it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub entry: LogEntry,
    pub line_no: usize,
    pub raw: String,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Skip malformed rows instead of failing on the first one.
    pub lenient: bool,
}

#[derive(Debug, Default)]
pub struct ParsedLog {
    pub records: Vec<LogRecord>,
    /// Rows dropped in lenient mode.
    pub skipped: Vec<Error>,
    /// Ordering anomalies (non-increasing ids, decreasing timestamps).
    pub warnings: Vec<String>,
}

impl ParsedLog {
    pub fn entries(&self) -> Vec<LogEntry> {
        self.records.iter().map(|r| r.entry.clone()).collect()
    }
}

/// Parses a log, failing on the first malformed row.
pub fn parse_log<R: BufRead>(reader: R) -> Result<Vec<LogEntry>> {
    let parsed = parse_log_with(reader, ParseOptions::default())?;
    Ok(parsed.records.into_iter().map(|r| r.entry).collect())
}

pub fn parse_log_with<R: BufRead>(reader: R, opts: ParseOptions) -> Result<ParsedLog> {
    let mut out = ParsedLog::default();
    let mut prev: Option<(u64, Timestamp)> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim_start_matches('\u{feff}').trim_end_matches('\r');
        if text.trim().is_empty() {
            continue;
        }
        let entry = match parse_row(text, line_no) {
            Ok(e) => e,
            Err(e @ Error::Parse { .. }) if opts.lenient => {
                log::warn!("skipping malformed row: {e}");
                out.skipped.push(e);
                continue;
            }
            Err(e) => return Err(e),
        };

        if let Some((prev_id, prev_ts)) = prev {
            if entry.id <= prev_id {
                let msg = format!(
                    "line {line_no}: id {} does not increase (previous {prev_id})",
                    entry.id
                );
                log::warn!("{msg}");
                out.warnings.push(msg);
            }
            if entry.timestamp < prev_ts {
                let msg = format!(
                    "line {line_no}: timestamp {} goes backwards (previous {prev_ts})",
                    entry.timestamp
                );
                log::warn!("{msg}");
                out.warnings.push(msg);
            }
        }
        prev = Some((entry.id, entry.timestamp));
        out.records.push(LogRecord {
            entry,
            line_no,
            raw: text.to_string(),
        });
    }
    Ok(out)
}

/// Parses a single CSV row. `line_no` is used for diagnostics only.
pub fn parse_row(line: &str, line_no: usize) -> Result<LogEntry> {
    let fields = split_fields(line).map_err(|m| Error::parse(line_no, m))?;
    if fields.len() != 5 {
        return Err(Error::parse(
            line_no,
            format!("expected 5 columns, found {}", fields.len()),
        ));
    }

    let id = fields[0]
        .text
        .trim()
        .parse::<u64>()
        .map_err(|_| Error::parse(line_no, format!("bad id {:?}", fields[0].text)))?;
    let timestamp = Timestamp::parse(&fields[1].text)
        .ok_or_else(|| Error::parse(line_no, format!("bad timestamp {:?}", fields[1].text)))?;
    let command = fields[2].text.trim();
    if command.is_empty() {
        return Err(Error::parse(line_no, "empty command"));
    }

    let numeric = if fields[3].is_null() {
        None
    } else {
        let v = fields[3]
            .text
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| {
                Error::parse(
                    line_no,
                    format!("bad numeric argument {:?}", fields[3].text),
                )
            })?;
        Some(v)
    };
    // An empty quoted string carries no information and is read as absent.
    let text = if fields[4].is_null() || fields[4].text.is_empty() {
        None
    } else {
        Some(fields[4].text.clone())
    };

    let argument = match (numeric, text) {
        (Some(_), Some(_)) => {
            return Err(Error::Contract {
                line: line_no,
                message: "both numeric and string arguments are present".into(),
            })
        }
        (Some(v), None) => Argument::Numeric(v),
        (None, Some(s)) => Argument::Text(s),
        (None, None) => Argument::None,
    };
    Ok(LogEntry::new(id, timestamp, command, argument))
}

#[derive(Debug)]
struct Field {
    text: String,
    quoted: bool,
}

impl Field {
    fn is_null(&self) -> bool {
        !self.quoted && self.text.trim() == "NULL"
    }
}

/// Splits one CSV line, remembering which fields were quoted so that a bare
/// `NULL` can be told apart from the string `"NULL"`.
fn split_fields(line: &str) -> std::result::Result<Vec<Field>, String> {
    let mut fields = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        let mut text = String::new();
        let quoted = chars.peek() == Some(&'"');
        if quoted {
            chars.next();
            loop {
                match chars.next() {
                    Some('"') if chars.peek() == Some(&'"') => {
                        chars.next();
                        text.push('"');
                    }
                    Some('"') => break,
                    Some(c) => text.push(c),
                    None => return Err("unterminated quoted field".into()),
                }
            }
            match chars.next() {
                None => {
                    fields.push(Field { text, quoted });
                    return Ok(fields);
                }
                Some(',') => fields.push(Field { text, quoted }),
                Some(c) => return Err(format!("unexpected {c:?} after quoted field")),
            }
        } else {
            loop {
                match chars.next() {
                    Some(',') => break,
                    Some(c) => text.push(c),
                    None => {
                        fields.push(Field { text, quoted });
                        return Ok(fields);
                    }
                }
            }
            fields.push(Field { text, quoted });
        }
    }
}

pub fn write_log<W: Write>(entries: &[LogEntry], mut out: W) -> Result<()> {
    for e in entries {
        writeln!(out, "{}", e.to_csv_line())?;
    }
    Ok(())
}

/// Command classes used for pre-processing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandClass {
    ActuatorDrive,
    SensorValue,
    NetworkStatus,
    Other,
}

impl CommandClass {
    pub const ALL: [CommandClass; 4] = [
        CommandClass::ActuatorDrive,
        CommandClass::SensorValue,
        CommandClass::NetworkStatus,
        CommandClass::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CommandClass::ActuatorDrive => "actuator_drive",
            CommandClass::SensorValue => "sensor_value",
            CommandClass::NetworkStatus => "network_status",
            CommandClass::Other => "other",
        }
    }
}

impl fmt::Display for CommandClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CommandClass {
    type Err = Error;

    /// Accepts `actuator_drive`, `ActuatorDrive`, `Actuator drive` and the like.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match key.as_str() {
            "actuatordrive" | "actuator" => Ok(CommandClass::ActuatorDrive),
            "sensorvalue" | "sensor" => Ok(CommandClass::SensorValue),
            "networkstatus" | "network" => Ok(CommandClass::NetworkStatus),
            "other" | "others" | "othersexclude" => Ok(CommandClass::Other),
            _ => Err(Error::config(format!("unknown command class {s:?}"))),
        }
    }
}

/// Maps command names to classes. Rows whose command contains glob
/// metacharacters act as patterns; exact names take precedence, then patterns
/// in file order. Anything unmatched is [`CommandClass::Other`].
#[derive(Debug, Clone, Default)]
pub struct ClassMap {
    exact: HashMap<String, CommandClass>,
    patterns: Vec<(glob::Pattern, CommandClass)>,
}

impl ClassMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, command: &str, class: CommandClass) -> Result<()> {
        if command.contains(['*', '?', '[']) {
            let pat = glob::Pattern::new(command)
                .map_err(|e| Error::config(format!("bad pattern {command:?}: {e}")))?;
            self.patterns.push((pat, class));
        } else {
            self.exact.insert(command.to_string(), class);
        }
        Ok(())
    }

    pub fn classify(&self, command: &str) -> CommandClass {
        if let Some(c) = self.exact.get(command) {
            return *c;
        }
        self.patterns
            .iter()
            .find(|(p, _)| p.matches(command))
            .map(|(_, c)| *c)
            .unwrap_or(CommandClass::Other)
    }

    /// Reads a two-column `command,class` file. Blank lines and lines starting
    /// with `#` are ignored, as is a leading `command,class` header.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut map = ClassMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let text = line.trim_start_matches('\u{feff}').trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let fields = split_fields(text).map_err(|m| Error::parse(line_no, m))?;
            if fields.len() != 2 {
                return Err(Error::parse(line_no, "expected `command,class`"));
            }
            let (command, class) = (fields[0].text.trim(), fields[1].text.trim());
            if map.is_empty()
                && command.eq_ignore_ascii_case("command")
                && class.eq_ignore_ascii_case("class")
            {
                continue;
            }
            let class = class
                .parse::<CommandClass>()
                .map_err(|_| Error::parse(line_no, format!("unknown command class {class:?}")))?;
            map.insert(command, class)?;
        }
        Ok(map)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "command,class")?;
        let mut rows: Vec<_> = self.exact.iter().collect();
        rows.sort();
        for (cmd, class) in rows {
            writeln!(out, "{cmd},{class}")?;
        }
        for (pat, class) in &self.patterns {
            writeln!(out, "{},{class}", pat.as_str())?;
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.exact.is_empty() && self.patterns.is_empty()
    }
}

/// Pre-processing filter.
#[derive(Debug, Clone)]
pub struct FilterConfig {
    pub excluded_classes: BTreeSet<CommandClass>,
    pub excluded_command_patterns: Vec<glob::Pattern>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            excluded_classes: [CommandClass::Other].into_iter().collect(),
            excluded_command_patterns: Vec::new(),
        }
    }
}

impl FilterConfig {
    /// A filter that keeps everything.
    pub fn keep_all() -> Self {
        FilterConfig {
            excluded_classes: BTreeSet::new(),
            excluded_command_patterns: Vec::new(),
        }
    }

    pub fn exclude_pattern(mut self, pattern: &str) -> Result<Self> {
        let pat = glob::Pattern::new(pattern)
            .map_err(|e| Error::config(format!("bad pattern {pattern:?}: {e}")))?;
        self.excluded_command_patterns.push(pat);
        Ok(self)
    }

    pub fn keeps(&self, command: &str, classes: &ClassMap) -> bool {
        !self.excluded_classes.contains(&classes.classify(command))
            && !self
                .excluded_command_patterns
                .iter()
                .any(|p| p.matches(command))
    }
}

pub fn filter_entries(
    entries: &[LogEntry],
    cfg: &FilterConfig,
    classes: &ClassMap,
) -> Vec<LogEntry> {
    entries
        .iter()
        .filter(|e| cfg.keeps(&e.command, classes))
        .cloned()
        .collect()
}

/// Splits `items` into consecutive chunks of `chunk_size`; the last one may be
/// shorter.
pub fn chunk<T>(items: &[T], chunk_size: usize) -> Result<Vec<&[T]>> {
    if chunk_size < 1 {
        return Err(Error::config("chunk size must be at least 1"));
    }
    Ok(items.chunks(chunk_size).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(s: &str) -> Timestamp {
        Timestamp::parse(s).unwrap()
    }

    #[test]
    fn parses_minute_resolution_numeric_row() {
        let e = parse_row(r#"39994,"2014-06-06 22:00","humidity",30,NULL"#, 1).unwrap();
        assert_eq!(e.id, 39994);
        assert_eq!(e.timestamp, ts("2014-06-06 22:00:00"));
        assert_eq!(e.command, "humidity");
        assert_eq!(e.numeric_arg(), Some(30.0));
        assert_eq!(e.string_arg(), None);
    }

    #[test]
    fn parses_second_resolution_string_row() {
        let e = parse_row(r#"39995,"2014-06-06 22:06:18","fan1_status",NULL,"on""#, 1).unwrap();
        assert_eq!(e.id, 39995);
        assert_eq!(e.timestamp.to_string(), "2014-06-06 22:06:18");
        assert_eq!(e.command, "fan1_status");
        assert_eq!(e.numeric_arg(), None);
        assert_eq!(e.string_arg(), Some("on"));
    }

    #[test]
    fn parses_row_without_arguments() {
        let e = parse_row(r#"464105,"2015-06-28 13:20","lightning",NULL,NULL"#, 1).unwrap();
        assert_eq!(e.argument, Argument::None);
    }

    #[test]
    fn quoted_null_is_a_string() {
        let e = parse_row(r#"1,"2014-06-06 22:00","x",NULL,"NULL""#, 1).unwrap();
        assert_eq!(e.string_arg(), Some("NULL"));
    }

    #[test]
    fn empty_input_gives_no_entries() {
        assert!(parse_log("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn rejects_wrong_column_count_with_line_number() {
        let input = "1,\"2014-06-06 22:00\",\"a\",1,NULL\n2,\"2014-06-06 22:00\",\"a\",1\n";
        match parse_log(input.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_id_and_timestamp() {
        assert!(matches!(
            parse_row(r#"x,"2014-06-06 22:00","a",1,NULL"#, 3),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_row(r#"1,"2014-06-06","a",1,NULL"#, 4),
            Err(Error::Parse { line: 4, .. })
        ));
    }

    #[test]
    fn rejects_both_arguments() {
        assert!(matches!(
            parse_row(r#"1,"2014-06-06 22:00","a",1,"on""#, 7),
            Err(Error::Contract { line: 7, .. })
        ));
    }

    #[test]
    fn lenient_mode_skips_bad_rows() {
        let input =
            "1,\"2014-06-06 22:00\",\"a\",1,NULL\ngarbage\n3,\"2014-06-06 22:01\",\"a\",2,NULL\n";
        assert!(parse_log(input.as_bytes()).is_err());
        let parsed = parse_log_with(input.as_bytes(), ParseOptions { lenient: true }).unwrap();
        assert_eq!(parsed.records.len(), 2);
        assert_eq!(parsed.skipped.len(), 1);
        assert_eq!(parsed.records[1].line_no, 3);
    }

    #[test]
    fn non_monotone_rows_warn() {
        let input = "5,\"2014-06-06 22:00\",\"a\",1,NULL\n4,\"2014-06-06 21:00\",\"a\",1,NULL\n";
        let parsed = parse_log_with(input.as_bytes(), ParseOptions::default()).unwrap();
        assert_eq!(parsed.records.len(), 2);
        assert_eq!(parsed.warnings.len(), 2);
    }

    fn entry(id: u64, cmd: &str) -> LogEntry {
        LogEntry::new(
            id,
            Timestamp::from_epoch_seconds(id as i64),
            cmd,
            Argument::None,
        )
    }

    #[test]
    fn default_filter_drops_other() {
        let mut classes = ClassMap::new();
        classes
            .insert("humidity", CommandClass::SensorValue)
            .unwrap();
        classes
            .insert("fridge1_status", CommandClass::Other)
            .unwrap();
        let entries = vec![
            entry(1, "humidity"),
            entry(2, "fridge1_status"),
            entry(3, "unlisted"),
            entry(4, "humidity"),
        ];
        let kept = filter_entries(&entries, &FilterConfig::default(), &classes);
        assert_eq!(kept.iter().map(|e| e.id).collect::<Vec<_>>(), vec![1, 4]);
    }

    #[test]
    fn empty_filter_is_identity() {
        let entries = vec![entry(1, "a"), entry(2, "b")];
        assert_eq!(
            filter_entries(&entries, &FilterConfig::keep_all(), &ClassMap::new()),
            entries
        );
    }

    #[test]
    fn pattern_filter_removes_network_targets() {
        let names = [
            "humidity",
            "target_192.168.68.93_status",
            "air",
            "target_10.0.0.1_status",
            "water1",
            "droid_status",
            "target_192.168.68.93_status",
            "targets",
            "fan1_status",
            "target_1.2.3.4_status",
        ];
        let entries: Vec<_> = names
            .iter()
            .enumerate()
            .map(|(i, n)| entry(i as u64, n))
            .collect();
        let cfg = FilterConfig::keep_all()
            .exclude_pattern("target_*")
            .unwrap();
        let kept = filter_entries(&entries, &cfg, &ClassMap::new());
        let expected: Vec<_> = entries
            .iter()
            .filter(|e| !(e.command.starts_with("target_")))
            .cloned()
            .collect();
        assert_eq!(kept, expected);
        assert_eq!(kept.len(), 6);
    }

    #[test]
    fn class_file_with_header_comments_and_patterns() {
        let text = "command,class\n# sensors\nhumidity,Sensor value\ntarget_*_status,network_status\ndroid_status,ActuatorDrive\n";
        let map = ClassMap::from_reader(text.as_bytes()).unwrap();
        assert_eq!(map.classify("humidity"), CommandClass::SensorValue);
        assert_eq!(
            map.classify("target_1.2.3.4_status"),
            CommandClass::NetworkStatus
        );
        assert_eq!(map.classify("droid_status"), CommandClass::ActuatorDrive);
        assert_eq!(map.classify("location_X"), CommandClass::Other);
        assert!(ClassMap::from_reader("a,bogus\n".as_bytes()).is_err());
    }

    #[test]
    fn chunk_sizes() {
        let v: Vec<u32> = (0..250).collect();
        let sizes: Vec<_> = chunk(&v, 100).unwrap().iter().map(|c| c.len()).collect();
        assert_eq!(sizes, vec![100, 100, 50]);
        let v: Vec<u32> = (0..100).collect();
        assert_eq!(chunk(&v, 100).unwrap().len(), 1);
        let v = vec![0u8; 1_000_000];
        assert_eq!(chunk(&v, 100_000).unwrap().len(), 10);
        assert!(matches!(chunk(&v, 0), Err(Error::Config(_))));
    }

    fn arb_entry() -> impl Strategy<Value = LogEntry> {
        let arg = prop_oneof![
            Just(Argument::None),
            (-1.0e6f64..1.0e6).prop_map(Argument::Numeric),
            "[a-zA-Z0-9 ,:\"_-]{1,8}".prop_map(Argument::Text),
        ];
        (
            0u64..1_000_000,
            1_300_000_000i64..1_500_000_000,
            "[a-z_0-9.]{1,12}",
            arg,
        )
            .prop_map(|(id, secs, cmd, arg)| {
                LogEntry::new(id, Timestamp::from_epoch_seconds(secs), cmd, arg)
            })
    }

    proptest! {
        #[test]
        fn csv_round_trip(entries in proptest::collection::vec(arb_entry(), 0..20)) {
            let mut buf = Vec::new();
            write_log(&entries, &mut buf).unwrap();
            let back = parse_log_with(&buf[..], ParseOptions::default()).unwrap();
            prop_assert_eq!(back.entries(), entries);
        }

        #[test]
        fn filter_is_idempotent(cmds in proptest::collection::vec("(a|b|c|target_[0-9])", 0..30)) {
            let entries: Vec<_> = cmds.iter().enumerate().map(|(i, c)| entry(i as u64, c)).collect();
            let mut classes = ClassMap::new();
            classes.insert("a", CommandClass::SensorValue).unwrap();
            classes.insert("b", CommandClass::ActuatorDrive).unwrap();
            let cfg = FilterConfig::default().exclude_pattern("target_*").unwrap();
            let once = filter_entries(&entries, &cfg, &classes);
            let twice = filter_entries(&once, &cfg, &classes);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn chunk_concat_is_identity(v in proptest::collection::vec(any::<u16>(), 0..300), size in 1usize..50) {
            let joined: Vec<u16> = chunk(&v, size).unwrap().concat();
            prop_assert_eq!(joined, v);
        }
    }
}
