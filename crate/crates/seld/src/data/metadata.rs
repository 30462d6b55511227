//! DCASE-format metadata CSV: one row per active (frame, class, track),
//! `frame,class,track,azimuth,elevation`, all integers, no header.
//! Azimuth lives in the half-open range [-180, 180).

use crate::accdoa::{EventList, EventRecord};
use crate::{Result, SeldError};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub fn write_metadata(events: &EventList, path: &Path) -> Result<()> {
    let display = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|e| SeldError::io(&display, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in &events.records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.frame_index,
            r.class_index,
            r.track_index,
            r.azimuth_deg.round() as i64,
            r.elevation_deg.round() as i64
        )
        .map_err(|e| SeldError::io(&display, e))?;
    }
    w.flush().map_err(|e| SeldError::io(&display, e))?;
    Ok(())
}

pub fn read_metadata(path: &Path) -> Result<EventList> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| SeldError::io(&display, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| SeldError::io(&display, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        records.push(parse_row(trimmed, line_no)?);
    }
    Ok(EventList::new(records))
}

fn parse_row(row: &str, line: usize) -> Result<EventRecord> {
    let fields: Vec<&str> = row.split(',').map(str::trim).collect();
    if fields.len() != 5 {
        return Err(SeldError::Parse {
            line,
            msg: format!("expected 5 fields, found {}", fields.len()),
        });
    }
    let int = |s: &str, name: &str| -> Result<i64> {
        s.parse::<i64>().map_err(|_| SeldError::Parse {
            line,
            msg: format!("{name} '{s}' is not an integer"),
        })
    };
    let frame = int(fields[0], "frame index")?;
    let class = int(fields[1], "class index")?;
    let track = int(fields[2], "track index")?;
    let az = int(fields[3], "azimuth")?;
    let el = int(fields[4], "elevation")?;
    if frame < 0 || class < 0 || track < 0 {
        return Err(SeldError::Parse {
            line,
            msg: "frame, class and track must be non-negative".into(),
        });
    }
    if !(-180..180).contains(&az) {
        return Err(SeldError::Parse {
            line,
            msg: format!("azimuth {az} outside [-180, 180)"),
        });
    }
    if !(-90..=90).contains(&el) {
        return Err(SeldError::Parse {
            line,
            msg: format!("elevation {el} outside [-90, 90]"),
        });
    }
    Ok(EventRecord {
        frame_index: frame as usize,
        class_index: class as usize,
        track_index: track as usize,
        azimuth_deg: az as f64,
        elevation_deg: el as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    #[test]
    fn row_parses_per_format_definition() {
        let r = parse_row("10,3,0,90,0", 1).unwrap();
        assert_eq!(
            r,
            EventRecord {
                frame_index: 10,
                class_index: 3,
                track_index: 0,
                azimuth_deg: 90.0,
                elevation_deg: 0.0,
            }
        );
    }

    #[test]
    fn azimuth_range_is_half_open() {
        assert!(parse_row("0,0,0,-180,0", 1).is_ok());
        assert!(parse_row("0,0,0,180,0", 1).is_err());
    }

    #[test]
    fn malformed_rows_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "0,0,0,0,0\n1,1,oops,0,0\n").unwrap();
        match read_metadata(&path) {
            Err(SeldError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.csv");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let events = EventList::new(
            (0..50)
                .map(|_| EventRecord {
                    frame_index: rng.random_range(0..100),
                    class_index: rng.random_range(0..12),
                    track_index: rng.random_range(0..3),
                    azimuth_deg: rng.random_range(-180..180) as f64,
                    elevation_deg: rng.random_range(-90..=90) as f64,
                })
                .collect(),
        );
        write_metadata(&events, &path).unwrap();
        let back = read_metadata(&path).unwrap();
        assert_eq!(back, events);
    }
}
