//! `series_id,t_index,acq_time_days,lai,vhvv_db` with empty fields for
//! missing values.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::TimeSeriesRecord;
use crate::error::{Error, Result};

pub const HEADER: [&str; 5] = ["series_id", "t_index", "acq_time_days", "lai", "vhvv_db"];

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<TimeSeriesRecord>> {
    let path = path.as_ref();
    read_csv_from(File::open(path)?, path)
}

struct Pending {
    id: String,
    first_line: u64,
    last_index: u64,
    times: Vec<f64>,
    lai: Vec<f64>,
    lai_mask: Vec<bool>,
    vhvv: Vec<f64>,
    vhvv_mask: Vec<bool>,
}

impl Pending {
    fn finish(self, path: &Path) -> Result<TimeSeriesRecord> {
        let line = self.first_line;
        TimeSeriesRecord::new(self.id, self.times, self.lai, self.lai_mask, self.vhvv, self.vhvv_mask).map_err(|e| {
            Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: e.to_string(),
            }
        })
    }
}

/// Reads records from any reader; `path` is only used in error messages.
pub fn read_csv_from(reader: impl Read, path: &Path) -> Result<Vec<TimeSeriesRecord>> {
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(parse_err(1, format!("expected header {}", HEADER.join(","))));
    }

    let mut records = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut pending: Option<Pending> = None;
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != HEADER.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, got {}", HEADER.len(), row.len()),
            ));
        }
        let id = &row[0];
        let t_index: u64 = row[1]
            .parse()
            .map_err(|_| parse_err(line, format!("bad t_index {:?}", &row[1])))?;
        let time: f64 = row[2]
            .parse()
            .map_err(|_| parse_err(line, format!("bad acq_time_days {:?}", &row[2])))?;
        let optional = |field: &str, name: &str| -> Result<Option<f64>> {
            if field.is_empty() {
                return Ok(None);
            }
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(parse_err(line, format!("bad {name} {field:?}"))),
            }
        };
        let lai = optional(&row[3], "lai")?;
        let vhvv = optional(&row[4], "vhvv_db")?;
        if lai.is_none() && vhvv.is_none() {
            return Err(parse_err(line, "both lai and vhvv_db are empty".into()));
        }

        if pending.as_ref().is_some_and(|p| p.id != id) {
            records.push(pending.take().unwrap().finish(path)?);
        }
        let p = match pending.as_mut() {
            Some(p) => {
                if t_index <= p.last_index {
                    return Err(parse_err(line, format!("t_index {t_index} not increasing")));
                }
                if p.times.last().is_some_and(|&t| time <= t) {
                    return Err(parse_err(line, format!("acq_time_days {time} not increasing")));
                }
                p
            }
            None => {
                if !seen.insert(id.to_string()) {
                    return Err(parse_err(line, format!("rows of series {id:?} are not contiguous")));
                }
                pending.insert(Pending {
                    id: id.to_string(),
                    first_line: line,
                    last_index: t_index,
                    times: Vec::new(),
                    lai: Vec::new(),
                    lai_mask: Vec::new(),
                    vhvv: Vec::new(),
                    vhvv_mask: Vec::new(),
                })
            }
        };
        p.last_index = t_index;
        p.times.push(time);
        p.lai.push(lai.unwrap_or(0.0));
        p.lai_mask.push(lai.is_some());
        p.vhvv.push(vhvv.unwrap_or(0.0));
        p.vhvv_mask.push(vhvv.is_some());
    }
    if let Some(p) = pending {
        records.push(p.finish(path)?);
    }
    Ok(records)
}

pub fn write_csv(records: &[TimeSeriesRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::io::BufWriter::new(File::create(path)?);
    write_csv_to(records, &mut file)?;
    file.flush()?;
    Ok(())
}

/// Values are printed with Rust's shortest round-trip formatting (at most 17
/// significant digits), so reading back is bit-exact.
pub fn write_csv_to(records: &[TimeSeriesRecord], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(HEADER).map_err(csv_err)?;
    let opt = |v: f64, m: bool| if m { format!("{v}") } else { String::new() };
    for r in records {
        for i in 0..r.len() {
            w.write_record([
                r.series_id().to_string(),
                i.to_string(),
                format!("{}", r.times()[i]),
                opt(r.lai()[i], r.lai_mask()[i]),
                opt(r.vhvv()[i], r.vhvv_mask()[i]),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<Vec<TimeSeriesRecord>> {
        read_csv_from(text.as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn missing_fields_become_masks() {
        let recs = parse("series_id,t_index,acq_time_days,lai,vhvv_db\nA,0,31,0.32,\nA,1,36,,-8.28\n").unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.lai(), &[0.32, 0.0]);
        assert_eq!(r.lai_mask(), &[true, false]);
        assert_eq!(r.vhvv(), &[0.0, -8.28]);
        assert_eq!(r.vhvv_mask(), &[false, true]);
        assert_eq!(r.times(), &[31.0, 36.0]);
    }

    #[test]
    fn errors_name_the_line() {
        let cases = [
            "series_id,t_index,acq_time_days,lai,vhvv_db\nA,0,1,0.5,-8\nA,1,2,,\n",
            "series_id,t_index,acq_time_days,lai,vhvv_db\nA,0,1,0.5,-8\nA,1,1,0.6,-7\n",
            "series_id,t_index,acq_time_days,lai,vhvv_db\nA,0,1,0.5,-8\nA,0,2,0.6,-7\n",
            "series_id,t_index,acq_time_days,lai,vhvv_db\nA,0,1,0.5,-8\nA,1,2,zz,-7\n",
        ];
        for text in cases {
            match parse(text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, 3, "{text}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn non_contiguous_series_rejected() {
        let text = "series_id,t_index,acq_time_days,lai,vhvv_db\nA,0,1,1,\nB,0,1,1,\nA,1,2,1,\n";
        assert!(matches!(parse(text), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(parse("id,t,time,lai,vhvv\nA,0,1,1,\n").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(rows in prop::collection::vec((any::<f64>(), any::<f64>(), 0u8..3), 1..30),
                                   n_split in 1usize..4) {
            let mut records = Vec::new();
            let chunk = rows.len().div_ceil(n_split);
            for (k, part) in rows.chunks(chunk).enumerate() {
                let n = part.len();
                let finite = |v: f64| if v.is_finite() { v } else { 1.5 };
                let lai_mask: Vec<bool> = part.iter().map(|r| r.2 != 1).collect();
                let vhvv_mask: Vec<bool> = part.iter().map(|r| r.2 != 2).collect();
                records.push(TimeSeriesRecord::new(
                    format!("s{k}"),
                    (0..n).map(|i| i as f64 * 0.1 + 1e-3).collect(),
                    part.iter().map(|r| finite(r.0)).collect(),
                    lai_mask,
                    part.iter().map(|r| finite(r.1)).collect(),
                    vhvv_mask,
                ).unwrap());
            }
            let mut buf = Vec::new();
            write_csv_to(&records, &mut buf).unwrap();
            let back = read_csv_from(buf.as_slice(), Path::new("mem")).unwrap();
            prop_assert_eq!(back.len(), records.len());
            for (a, b) in back.iter().zip(&records) {
                prop_assert_eq!(a.series_id(), b.series_id());
                prop_assert_eq!(a.lai_mask(), b.lai_mask());
                prop_assert_eq!(a.vhvv_mask(), b.vhvv_mask());
                let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(a.times()), bits(b.times()));
                prop_assert_eq!(bits(a.lai()), bits(b.lai()));
                prop_assert_eq!(bits(a.vhvv()), bits(b.vhvv()));
            }
        }
    }
}
