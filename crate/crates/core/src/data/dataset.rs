use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};

/// Binary `[T x N]` matrix stored time-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskMatrix {
    steps: usize,
    nodes: usize,
    bits: Vec<bool>,
}

impl MaskMatrix {
    pub fn new(steps: usize, nodes: usize, value: bool) -> Self {
        MaskMatrix {
            steps,
            nodes,
            bits: vec![value; steps * nodes],
        }
    }

    pub fn from_bits(steps: usize, nodes: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != steps * nodes {
            return Err(Error::dim(format!(
                "mask of {steps}x{nodes} needs {} entries, got {}",
                steps * nodes,
                bits.len()
            )));
        }
        Ok(MaskMatrix { steps, nodes, bits })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn get(&self, t: usize, n: usize) -> bool {
        self.bits[t * self.nodes + n]
    }

    pub fn set(&mut self, t: usize, n: usize, value: bool) {
        self.bits[t * self.nodes + n] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn row(&self, t: usize) -> &[bool] {
        &self.bits[t * self.nodes..(t + 1) * self.nodes]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &MaskMatrix) -> MaskMatrix {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn and_not(&self, other: &MaskMatrix) -> MaskMatrix {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn or(&self, other: &MaskMatrix) -> MaskMatrix {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn not(&self) -> MaskMatrix {
        MaskMatrix {
            steps: self.steps,
            nodes: self.nodes,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Keeps only rows in `rows`, clearing the rest.
    pub fn restrict_rows(&self, rows: std::ops::Range<usize>) -> MaskMatrix {
        let mut out = self.clone();
        for t in 0..self.steps {
            if !rows.contains(&t) {
                out.bits[t * self.nodes..(t + 1) * self.nodes].fill(false);
            }
        }
        out
    }

    /// Reorders columns: column `i` of the result is column `perm[i]` of `self`.
    pub fn permute_nodes(&self, perm: &[usize]) -> MaskMatrix {
        let mut out = self.clone();
        for t in 0..self.steps {
            for (i, &p) in perm.iter().enumerate() {
                out.set(t, i, self.get(t, p));
            }
        }
        out
    }

    fn zip_with(&self, other: &MaskMatrix, f: impl Fn(bool, bool) -> bool) -> MaskMatrix {
        assert_eq!((self.steps, self.nodes), (other.steps, other.nodes), "mask shapes differ");
        MaskMatrix {
            steps: self.steps,
            nodes: self.nodes,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

/// Sensor-by-time observation matrix with its native observation mask.
///
/// `values` is time-major (`[T x N]`); entries the source did not observe hold NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct StDataset {
    values: Vec<f64>,
    native_mask: MaskMatrix,
    sensor_ids: Vec<String>,
    timestamps: Vec<String>,
    minutes: Vec<i64>,
    interval_minutes: u32,
}

pub const DEFAULT_START: &str = "2020-01-01 00:00:00";
const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

impl StDataset {
    /// Builds a dataset from a time-major matrix in which NaN marks a
    /// natively missing entry. Timestamps start at [`DEFAULT_START`].
    pub fn from_matrix(
        values: Vec<f64>,
        steps: usize,
        nodes: usize,
        interval_minutes: u32,
        sensor_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        if steps == 0 || nodes == 0 {
            return Err(Error::EmptyDataset(format!("{steps} steps x {nodes} sensors")));
        }
        if values.len() != steps * nodes {
            return Err(Error::dim(format!(
                "{steps}x{nodes} matrix needs {} values, got {}",
                steps * nodes,
                values.len()
            )));
        }
        if interval_minutes == 0 {
            return Err(Error::Argument("interval must be positive".into()));
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::Argument("values must be finite or NaN".into()));
        }
        let sensor_ids = sensor_ids.unwrap_or_else(|| (0..nodes).map(|n| format!("s{n}")).collect());
        if sensor_ids.len() != nodes {
            return Err(Error::dim(format!("{} sensor ids for {nodes} sensors", sensor_ids.len())));
        }
        let start = NaiveDateTime::parse_from_str(DEFAULT_START, TIMESTAMP_FORMAT).expect("valid constant");
        let mut timestamps = Vec::with_capacity(steps);
        let mut minutes = Vec::with_capacity(steps);
        for t in 0..steps {
            let at = start + chrono::Duration::minutes(t as i64 * interval_minutes as i64);
            timestamps.push(at.format(TIMESTAMP_FORMAT).to_string());
            minutes.push(at.and_utc().timestamp() / 60);
        }
        let native = values.iter().map(|v| !v.is_nan()).collect();
        Ok(StDataset {
            values,
            native_mask: MaskMatrix::from_bits(steps, nodes, native)?,
            sensor_ids,
            timestamps,
            minutes,
            interval_minutes,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.native_mask.steps()
    }

    pub fn n_nodes(&self) -> usize {
        self.native_mask.nodes()
    }

    pub fn value(&self, t: usize, n: usize) -> f64 {
        self.values[t * self.n_nodes() + n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn native_mask(&self) -> &MaskMatrix {
        &self.native_mask
    }

    pub fn is_observed(&self, t: usize, n: usize) -> bool {
        self.native_mask.get(t, n)
    }

    pub fn sensor_ids(&self) -> &[String] {
        &self.sensor_ids
    }

    pub fn timestamps(&self) -> &[String] {
        &self.timestamps
    }

    pub fn interval_minutes(&self) -> u32 {
        self.interval_minutes
    }

    /// Time-of-day slot of row `t`, in units of the sampling interval.
    pub fn time_of_day_slot(&self, t: usize) -> usize {
        let day = 24 * 60;
        (self.minutes[t].rem_euclid(day) / self.interval_minutes as i64) as usize
    }

    pub fn slots_per_day(&self) -> usize {
        (24 * 60usize).div_ceil(self.interval_minutes as usize).max(1)
    }

    /// Copy with `values` replaced; entries that become NaN are marked missing.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::dim("replacement matrix has a different size"));
        }
        let native = values.iter().map(|v| !v.is_nan()).collect();
        Ok(StDataset {
            native_mask: MaskMatrix::from_bits(self.n_steps(), self.n_nodes(), native)?,
            values,
            ..self.clone()
        })
    }

    /// Copy with sensor columns reordered: column `i` becomes old column `perm[i]`.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_nodes();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Argument("not a permutation of the sensors".into()));
        }
        let mut values = self.values.clone();
        for t in 0..self.n_steps() {
            for (i, &p) in perm.iter().enumerate() {
                values[t * n + i] = self.value(t, p);
            }
        }
        Ok(StDataset {
            values,
            native_mask: self.native_mask.permute_nodes(perm),
            sensor_ids: perm.iter().map(|&p| self.sensor_ids[p].clone()).collect(),
            ..self.clone()
        })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        Self::parse_csv(&text, path)
    }

    /// Parses `timestamp,<sensor>,...` rows; empty cells are natively missing.
    pub fn parse_csv(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        if header.len() < 2 {
            return Err(parse_err(1, "header needs a timestamp column and at least one sensor".into()));
        }
        let sensor_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let nodes = sensor_ids.len();

        let mut values = Vec::new();
        let mut timestamps = Vec::new();
        let mut minutes = Vec::new();
        for (row_idx, record) in reader.records().enumerate() {
            let line = row_idx + 2;
            let record = record.map_err(|e| parse_err(line, e.to_string()))?;
            let stamp = record.get(0).unwrap_or_default().to_string();
            let minute = parse_timestamp(&stamp).ok_or_else(|| parse_err(line, format!("unrecognized timestamp {stamp:?}")))?;
            if let Some(&prev) = minutes.last() {
                if minute <= prev {
                    return Err(Error::Format(format!(
                        "{}: timestamps must be strictly increasing (line {line}: {stamp})",
                        path.display()
                    )));
                }
            }
            for cell in record.iter().skip(1) {
                if cell.is_empty() {
                    values.push(f64::NAN);
                } else {
                    let v: f64 = cell
                        .parse()
                        .map_err(|_| parse_err(line, format!("not a number: {cell:?}")))?;
                    if !v.is_finite() {
                        return Err(parse_err(line, format!("non-finite value {cell:?}")));
                    }
                    values.push(v);
                }
            }
            timestamps.push(stamp);
            minutes.push(minute);
        }
        let steps = timestamps.len();
        if steps == 0 {
            return Err(Error::EmptyDataset(format!("{} has no data rows", path.display())));
        }
        let interval = minutes
            .windows(2)
            .map(|w| w[1] - w[0])
            .min()
            .unwrap_or(1)
            .clamp(1, u32::MAX as i64) as u32;
        let native = values.iter().map(|v| !v.is_nan()).collect();
        Ok(StDataset {
            values,
            native_mask: MaskMatrix::from_bits(steps, nodes, native)?,
            sensor_ids,
            timestamps,
            minutes,
            interval_minutes: interval,
        })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = File::create(path)?;
        self.write_csv(&mut file)
    }

    /// Writes the dataset in the same schema [`StDataset::load_csv`] reads.
    /// Values use the shortest representation that parses back to the same bits.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        self.write_matrix_csv(out, |t, n| {
            let v = self.value(t, n);
            if v.is_nan() {
                String::new()
            } else {
                format!("{v}")
            }
        })
    }

    /// Writes an arbitrary per-cell matrix with this dataset's header and timestamps.
    pub fn write_matrix_csv(&self, out: &mut impl Write, cell: impl Fn(usize, usize) -> String) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.sensor_ids.iter().cloned());
        w.write_record(&header).map_err(csv_io)?;
        for t in 0..self.n_steps() {
            let mut row = Vec::with_capacity(self.n_nodes() + 1);
            row.push(self.timestamps[t].clone());
            row.extend((0..self.n_nodes()).map(|n| cell(t, n)));
            w.write_record(&row).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Minutes since the Unix epoch, or the raw number for numeric timestamps.
fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp().div_euclid(60));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M", "%Y/%m/%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp().div_euclid(60));
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp() / 60);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<StDataset> {
        StDataset::parse_csv(text, Path::new("test.csv"))
    }

    #[test]
    fn empty_cell_is_natively_missing() {
        let ds = parse("timestamp,a,b\n2020-01-01 00:00:00,1.5,2\n2020-01-01 00:10:00,,3\n2020-01-01 00:20:00,4,5\n").unwrap();
        assert_eq!((ds.n_steps(), ds.n_nodes()), (3, 2));
        assert_eq!(ds.native_mask().count(), 5);
        assert!(!ds.is_observed(1, 0));
        assert!(ds.value(1, 0).is_nan());
        assert_eq!(ds.value(2, 1), 5.0);
        assert_eq!(ds.interval_minutes(), 10);
        assert_eq!(ds.sensor_ids(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ds.time_of_day_slot(2), 2);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(matches!(parse("timestamp,a,b\n"), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn ragged_rows_are_parse_errors() {
        let err = parse("timestamp,a,b\n0,1,2\n1,3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
    }

    #[test]
    fn timestamps_must_increase() {
        assert!(matches!(parse("timestamp,a\n5,1\n3,2\n"), Err(Error::Format(_))));
        assert!(matches!(parse("timestamp,a\n5,1\n5,2\n"), Err(Error::Format(_))));
    }

    #[test]
    fn garbage_cells_are_rejected() {
        assert!(matches!(parse("timestamp,a\n0,abc\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse("timestamp,a\nnoon,1\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse("timestamp,a\n0,inf\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let values = vec![0.1, f64::NAN, -3.25, 1e-7, 123456.789, 2.0 / 3.0];
        let ds = StDataset::from_matrix(values, 3, 2, 5, None).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.native_mask(), ds.native_mask());
        for (a, b) in back.values().iter().zip(ds.values()) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
        assert_eq!(back.timestamps(), ds.timestamps());
        assert_eq!(back.interval_minutes(), 5);
    }

    #[test]
    fn permutation_moves_columns() {
        let ds = StDataset::from_matrix(vec![1.0, 2.0, 3.0, 4.0, 5.0, f64::NAN], 2, 3, 5, None).unwrap();
        let p = ds.permute_nodes(&[2, 0, 1]).unwrap();
        assert_eq!(p.value(0, 0), 3.0);
        assert!(!p.is_observed(1, 0));
        assert_eq!(p.sensor_ids()[0], "s2");
        assert!(ds.permute_nodes(&[0, 0, 1]).is_err());
    }
}
