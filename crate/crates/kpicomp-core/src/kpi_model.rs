//! Dataset model: cells x hourly samples x KPI kind, CSV ingestion with the
//! NaN-discard policy, and weekly blocking.
//!
//! The interchange format is a long CSV with header
//! `cell_id,timestamp,kpi,value`, hourly ISO-8601 timestamps
//! (`YYYY-MM-DDTHH:00:00Z`) and `.`-separated decimal values. Ingestion
//! keeps only cells that cover the file's full time range for the requested
//! KPI with no gaps and no NaN values, then truncates to whole weeks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Duration, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::WEEK_HOURS;

/// The three KPIs under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KpiKind {
    /// Downlink traffic volume, MB/hour.
    #[serde(rename = "volume")]
    DownlinkVolume,
    /// Physical resource block occupancy, percent in [0, 100].
    #[serde(rename = "prb")]
    PrbOccupancy,
    /// Users with an active RRC connection, count >= 0.
    #[serde(rename = "users")]
    ActiveUsersRrc,
}

impl KpiKind {
    pub const ALL: [KpiKind; 3] = [
        KpiKind::DownlinkVolume,
        KpiKind::PrbOccupancy,
        KpiKind::ActiveUsersRrc,
    ];

    /// Token used in the CSV `kpi` column and on the CLI.
    pub fn token(&self) -> &'static str {
        match self {
            KpiKind::DownlinkVolume => "volume",
            KpiKind::PrbOccupancy => "prb",
            KpiKind::ActiveUsersRrc => "users",
        }
    }

    /// Native unit label for reporting.
    pub fn unit(&self) -> &'static str {
        match self {
            KpiKind::DownlinkVolume => "MB/hour",
            KpiKind::PrbOccupancy => "percent",
            KpiKind::ActiveUsersRrc => "count",
        }
    }

    pub fn parse(token: &str) -> Option<KpiKind> {
        KpiKind::ALL.into_iter().find(|k| k.token() == token)
    }
}

impl fmt::Display for KpiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// One cell's KPI samples at uniform hourly spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSeries {
    pub cell_id: String,
    pub kpi: KpiKind,
    pub samples: Vec<f64>,
    pub start_timestamp: DateTime<Utc>,
}

/// All surviving cells of one KPI, sharing length and start time.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    kpi: KpiKind,
    cells: Vec<CellSeries>,
}

impl Dataset {
    /// Assemble a dataset, enforcing the shared-shape invariants.
    pub fn new(kpi: KpiKind, mut cells: Vec<CellSeries>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::EmptyDataset("no cells provided".into()));
        }
        cells.sort_by(|a, b| a.cell_id.cmp(&b.cell_id));
        let t = cells[0].samples.len();
        let start = cells[0].start_timestamp;
        if t == 0 {
            return Err(Error::EmptyDataset("cells have zero-length series".into()));
        }
        for pair in cells.windows(2) {
            if pair[0].cell_id == pair[1].cell_id {
                return Err(Error::CsvFormat(format!(
                    "duplicate cell_id {}",
                    pair[0].cell_id
                )));
            }
        }
        for c in &cells {
            if c.kpi != kpi {
                return Err(Error::CsvFormat(format!(
                    "cell {} carries KPI {}, dataset is {}",
                    c.cell_id, c.kpi, kpi
                )));
            }
            if c.samples.len() != t || c.start_timestamp != start {
                return Err(Error::CsvFormat(format!(
                    "cell {} does not share the dataset shape",
                    c.cell_id
                )));
            }
            if c.samples.iter().any(|v| v.is_nan()) {
                return Err(Error::CsvFormat(format!(
                    "cell {} contains NaN samples",
                    c.cell_id
                )));
            }
        }
        Ok(Self { kpi, cells })
    }

    pub fn kpi(&self) -> KpiKind {
        self.kpi
    }

    pub fn cells(&self) -> &[CellSeries] {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Shared series length T.
    pub fn len(&self) -> usize {
        self.cells[0].samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn start_timestamp(&self) -> DateTime<Utc> {
        self.cells[0].start_timestamp
    }

    /// Copy of this dataset without the named cells. Errors if nothing is left.
    pub fn excluding(&self, ids: &BTreeSet<String>) -> Result<Dataset> {
        let cells: Vec<CellSeries> = self
            .cells
            .iter()
            .filter(|c| !ids.contains(&c.cell_id))
            .cloned()
            .collect();
        if cells.is_empty() {
            return Err(Error::NoEligibleCells);
        }
        Dataset::new(self.kpi, cells)
    }

    /// Pooled population standard deviation of every sample in the dataset.
    pub fn pooled_std(&self) -> f64 {
        let total: usize = self.cells.iter().map(|c| c.samples.len()).sum();
        let mean = self
            .cells
            .iter()
            .flat_map(|c| c.samples.iter())
            .sum::<f64>()
            / total as f64;
        let var = self
            .cells
            .iter()
            .flat_map(|c| c.samples.iter())
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / total as f64;
        var.sqrt()
    }
}

/// A series cut into non-overlapping 168-sample weekly blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyBlocks {
    pub cell_id: String,
    pub blocks: Vec<Vec<f64>>,
    /// Set when a trailing partial week was dropped.
    pub remainder_dropped: bool,
}

/// Cut a series into whole weekly blocks, dropping any trailing remainder.
pub fn to_weekly_blocks(series: &CellSeries) -> Result<WeeklyBlocks> {
    let t = series.samples.len();
    if t < WEEK_HOURS {
        return Err(Error::TooShort {
            len: t,
            need: WEEK_HOURS,
        });
    }
    let n_blocks = t / WEEK_HOURS;
    let blocks = (0..n_blocks)
        .map(|b| series.samples[b * WEEK_HOURS..(b + 1) * WEEK_HOURS].to_vec())
        .collect();
    Ok(WeeklyBlocks {
        cell_id: series.cell_id.clone(),
        blocks,
        remainder_dropped: t % WEEK_HOURS != 0,
    })
}

const CSV_HEADER: [&str; 4] = ["cell_id", "timestamp", "kpi", "value"];

/// Load one KPI from a long-format CSV file.
///
/// Cells must cover the file's full time range for that KPI hour by hour;
/// cells with gaps or NaN values are dropped, survivors are truncated to
/// the largest whole number of weeks and sorted by cell id.
pub fn load_csv<P: AsRef<Path>>(path: P, kpi: KpiKind) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    load_csv_reader(file, kpi)
}

/// [`load_csv`] over any reader.
pub fn load_csv_reader<R: std::io::Read>(reader: R, kpi: KpiKind) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);

    {
        let headers = rdr
            .headers()
            .map_err(|e| Error::CsvFormat(format!("cannot read header: {e}")))?;
        let got: Vec<&str> = headers.iter().collect();
        if got != CSV_HEADER {
            return Err(Error::CsvFormat(format!(
                "expected header {}, got {}",
                CSV_HEADER.join(","),
                got.join(",")
            )));
        }
    }

    // cell_id -> timestamp -> value; NaN values recorded to drop the cell later.
    let mut per_cell: BTreeMap<String, BTreeMap<DateTime<Utc>, f64>> = BTreeMap::new();
    let mut dirty_cells: BTreeSet<String> = BTreeSet::new();
    let mut range: Option<(DateTime<Utc>, DateTime<Utc>)> = None;

    let mut record = csv::StringRecord::new();
    loop {
        let line = rdr.position().line();
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                return Err(Error::CsvParse {
                    line,
                    msg: e.to_string(),
                })
            }
        }
        if record.len() != 4 {
            return Err(Error::CsvParse {
                line,
                msg: format!("expected 4 fields, got {}", record.len()),
            });
        }
        let row_kpi = KpiKind::parse(&record[2]).ok_or_else(|| Error::CsvParse {
            line,
            msg: format!("unknown kpi token {:?}", &record[2]),
        })?;
        if row_kpi != kpi {
            continue;
        }

        let ts = parse_hour_timestamp(&record[1]).map_err(|msg| Error::CsvParse { line, msg })?;
        let value: f64 = record[3].parse().map_err(|e| Error::CsvParse {
            line,
            msg: format!("bad value {:?}: {e}", &record[3]),
        })?;
        let cell_id = record[0].to_string();

        range = Some(match range {
            None => (ts, ts),
            Some((lo, hi)) => (lo.min(ts), hi.max(ts)),
        });

        if !value.is_finite() {
            dirty_cells.insert(cell_id.clone());
        }
        let series = per_cell.entry(cell_id).or_default();
        if series.insert(ts, value).is_some() {
            return Err(Error::CsvParse {
                line,
                msg: format!("duplicate sample for timestamp {}", &record[1]),
            });
        }
    }

    let (start, end) = range.ok_or_else(|| {
        Error::EmptyDataset(format!("no rows for kpi {}", kpi.token()))
    })?;
    let t_full = ((end - start).num_hours() + 1) as usize;
    let t = (t_full / WEEK_HOURS) * WEEK_HOURS;
    if t == 0 {
        return Err(Error::EmptyDataset(format!(
            "common time range is {t_full} hours, shorter than one week"
        )));
    }

    let mut cells = Vec::new();
    'cell: for (cell_id, samples) in per_cell {
        if dirty_cells.contains(&cell_id) || samples.len() != t_full {
            continue;
        }
        // Gap check: every hour of the range must be present.
        let mut expect = start;
        for ts in samples.keys() {
            if *ts != expect {
                continue 'cell;
            }
            expect += Duration::hours(1);
        }
        cells.push(CellSeries {
            cell_id,
            kpi,
            samples: samples.into_values().take(t).collect(),
            start_timestamp: start,
        });
    }

    if cells.is_empty() {
        return Err(Error::EmptyDataset(
            "every cell had gaps or NaN samples in the common range".into(),
        ));
    }
    Dataset::new(kpi, cells)
}

fn parse_hour_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    let ts = DateTime::parse_from_rfc3339(s)
        .map_err(|e| format!("bad timestamp {s:?}: {e}"))?
        .with_timezone(&Utc);
    if ts.minute() != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
        return Err(format!("timestamp {s:?} is not aligned to the hour"));
    }
    Ok(ts)
}

/// Render a timestamp in the CSV's `YYYY-MM-DDTHH:00:00Z` form.
pub fn format_hour_timestamp(ts: DateTime<Utc>) -> String {
    ts.format("%Y-%m-%dT%H:00:00Z").to_string()
}

/// Write a dataset in the long CSV format, rows sorted by (cell_id, timestamp).
pub fn write_csv<W: Write>(dataset: &Dataset, mut writer: W) -> Result<()> {
    writeln!(writer, "{}", CSV_HEADER.join(","))?;
    let kpi = dataset.kpi().token();
    for cell in dataset.cells() {
        let mut ts = cell.start_timestamp;
        for value in &cell.samples {
            writeln!(
                writer,
                "{},{},{},{}",
                cell.cell_id,
                format_hour_timestamp(ts),
                kpi,
                value
            )?;
            ts += Duration::hours(1);
        }
    }
    Ok(())
}

/// [`write_csv`] to a file path.
pub fn write_csv_file<P: AsRef<Path>>(dataset: &Dataset, path: P) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(dataset, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn make_rows(cell: &str, n: usize, kpi: &str, start_hour: usize) -> String {
        let start = DateTime::parse_from_rfc3339("2024-01-01T00:00:00Z")
            .unwrap()
            .with_timezone(&Utc);
        (0..n)
            .map(|i| {
                let ts = start + Duration::hours((start_hour + i) as i64);
                format!(
                    "{cell},{},{kpi},{}",
                    format_hour_timestamp(ts),
                    10.0 + (i % 24) as f64
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn csv_of(rows: &[String]) -> String {
        format!("cell_id,timestamp,kpi,value\n{}\n", rows.join("\n"))
    }

    #[test]
    fn clean_input_passes_through() {
        let text = csv_of(&[
            make_rows("cell_a", 672, "volume", 0),
            make_rows("cell_b", 672, "volume", 0),
        ]);
        let ds = load_csv_reader(text.as_bytes(), KpiKind::DownlinkVolume).unwrap();
        assert_eq!(ds.n_cells(), 2);
        assert_eq!(ds.len(), 672);
        assert_eq!(ds.cells()[0].cell_id, "cell_a");
    }

    #[test]
    fn nan_cell_is_discarded() {
        let mut rows_b = make_rows("cell_b", 672, "volume", 0);
        rows_b = rows_b.replacen("10", "NaN", 1);
        let text = csv_of(&[make_rows("cell_a", 672, "volume", 0), rows_b]);
        let ds = load_csv_reader(text.as_bytes(), KpiKind::DownlinkVolume).unwrap();
        assert_eq!(ds.n_cells(), 1);
        assert_eq!(ds.cells()[0].cell_id, "cell_a");
        for c in ds.cells() {
            assert!(c.samples.iter().all(|v| !v.is_nan()));
        }
    }

    #[test]
    fn truncates_to_whole_weeks() {
        let text = csv_of(&[make_rows("cell_a", 700, "volume", 0)]);
        let ds = load_csv_reader(text.as_bytes(), KpiKind::DownlinkVolume).unwrap();
        assert_eq!(ds.len(), 672);
    }

    #[test]
    fn cell_with_gap_is_dropped() {
        // cell_b misses hour 100 of the common range.
        let rows_b: Vec<String> = make_rows("cell_b", 672, "volume", 0)
            .lines()
            .enumerate()
            .filter(|(i, _)| *i != 100)
            .map(|(_, l)| l.to_string())
            .collect();
        let text = csv_of(&[make_rows("cell_a", 672, "volume", 0), rows_b.join("\n")]);
        let ds = load_csv_reader(text.as_bytes(), KpiKind::DownlinkVolume).unwrap();
        assert_eq!(ds.n_cells(), 1);
    }

    #[test]
    fn cell_not_covering_common_range_is_dropped() {
        let text = csv_of(&[
            make_rows("cell_a", 672, "volume", 0),
            make_rows("cell_b", 504, "volume", 168),
        ]);
        let ds = load_csv_reader(text.as_bytes(), KpiKind::DownlinkVolume).unwrap();
        assert_eq!(ds.n_cells(), 1);
        assert_eq!(ds.cells()[0].cell_id, "cell_a");
    }

    #[test]
    fn other_kpis_are_ignored() {
        let text = csv_of(&[
            make_rows("cell_a", 672, "volume", 0),
            make_rows("cell_a", 672, "prb", 0),
        ]);
        let ds = load_csv_reader(text.as_bytes(), KpiKind::PrbOccupancy).unwrap();
        assert_eq!(ds.n_cells(), 1);
        assert_eq!(ds.kpi(), KpiKind::PrbOccupancy);
    }

    #[test]
    fn shuffled_rows_load_identically() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let text = csv_of(&[
            make_rows("cell_b", 672, "volume", 0),
            make_rows("cell_a", 672, "volume", 0),
        ]);
        let mut lines: Vec<&str> = text.trim_end().lines().skip(1).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        lines.shuffle(&mut rng);
        let shuffled = format!("cell_id,timestamp,kpi,value\n{}\n", lines.join("\n"));

        let a = load_csv_reader(text.as_bytes(), KpiKind::DownlinkVolume).unwrap();
        let b = load_csv_reader(shuffled.as_bytes(), KpiKind::DownlinkVolume).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells()[0].cell_id, "cell_a");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "cell_id,timestamp,kpi,value\n\
                    c1,2024-01-01T00:00:00Z,volume,1.5\n\
                    c1,2024-01-01T01:00:00Z,volume,not_a_number\n";
        match load_csv_reader(text.as_bytes(), KpiKind::DownlinkVolume) {
            Err(Error::CsvParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected CsvParse, got {other:?}"),
        }
    }

    #[test]
    fn misaligned_timestamp_is_a_format_error() {
        let text = "cell_id,timestamp,kpi,value\n\
                    c1,2024-01-01T00:30:00Z,volume,1.5\n";
        assert!(matches!(
            load_csv_reader(text.as_bytes(), KpiKind::DownlinkVolume),
            Err(Error::CsvParse { .. })
        ));
    }

    #[test]
    fn wrong_header_is_rejected() {
        let text = "id,time,kpi,value\nc1,2024-01-01T00:00:00Z,volume,1\n";
        assert!(matches!(
            load_csv_reader(text.as_bytes(), KpiKind::DownlinkVolume),
            Err(Error::CsvFormat(_))
        ));
    }

    #[test]
    fn duplicate_timestamp_is_rejected() {
        let text = "cell_id,timestamp,kpi,value\n\
                    c1,2024-01-01T00:00:00Z,volume,1\n\
                    c1,2024-01-01T00:00:00Z,volume,2\n";
        assert!(matches!(
            load_csv_reader(text.as_bytes(), KpiKind::DownlinkVolume),
            Err(Error::CsvParse { line: 3, .. })
        ));
    }

    #[test]
    fn short_range_yields_empty_dataset_error() {
        let text = csv_of(&[make_rows("cell_a", 100, "volume", 0)]);
        assert!(matches!(
            load_csv_reader(text.as_bytes(), KpiKind::DownlinkVolume),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn weekly_blocks_examples() {
        let series = CellSeries {
            cell_id: "c".into(),
            kpi: KpiKind::DownlinkVolume,
            samples: (0..672).map(|i| i as f64).collect(),
            start_timestamp: chrono::TimeZone::with_ymd_and_hms(&Utc, 2024, 1, 1, 0, 0, 0).unwrap(),
        };
        let wb = to_weekly_blocks(&series).unwrap();
        assert_eq!(wb.blocks.len(), 4);
        assert!(!wb.remainder_dropped);
        assert!(wb.blocks.iter().all(|b| b.len() == WEEK_HOURS));

        let one_week = CellSeries {
            samples: (0..168).map(|i| i as f64).collect(),
            ..series.clone()
        };
        assert_eq!(to_weekly_blocks(&one_week).unwrap().blocks.len(), 1);

        let ragged = CellSeries {
            samples: (0..200).map(|i| i as f64).collect(),
            ..series.clone()
        };
        let wb = to_weekly_blocks(&ragged).unwrap();
        assert_eq!(wb.blocks.len(), 1);
        assert!(wb.remainder_dropped);

        let short = CellSeries {
            samples: vec![1.0; 100],
            ..series
        };
        assert!(matches!(
            to_weekly_blocks(&short),
            Err(Error::TooShort { len: 100, need: 168 })
        ));
    }

    #[test]
    fn weekly_blocks_round_trip() {
        let series = CellSeries {
            cell_id: "c".into(),
            kpi: KpiKind::DownlinkVolume,
            samples: (0..700).map(|i| (i as f64).sin()).collect(),
            start_timestamp: chrono::TimeZone::with_ymd_and_hms(&Utc, 2024, 1, 1, 0, 0, 0).unwrap(),
        };
        let wb = to_weekly_blocks(&series).unwrap();
        let flat: Vec<f64> = wb.blocks.concat();
        assert_eq!(flat.len(), 672);
        assert_eq!(&series.samples[..672], &flat[..]);
    }

    #[test]
    fn csv_round_trip() {
        let text = csv_of(&[
            make_rows("cell_a", 672, "volume", 0),
            make_rows("cell_b", 672, "volume", 0),
        ]);
        let ds = load_csv_reader(text.as_bytes(), KpiKind::DownlinkVolume).unwrap();
        let mut out = Vec::new();
        write_csv(&ds, &mut out).unwrap();
        let reloaded = load_csv_reader(out.as_slice(), KpiKind::DownlinkVolume).unwrap();
        assert_eq!(ds, reloaded);
    }
}
