//! Reader for the comma-separated NSL-KDD files (41 features, label,
//! difficulty).

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use fedssl_core::features::{RawRecord, FEATURE_FIELDS};
use fedssl_core::Error as CoreError;

use crate::error::{Error, Result};

/// Columns per row: the features, the attack label and the difficulty.
pub const COLUMNS: usize = FEATURE_FIELDS + 2;

/// Parses one row. `None` for blank lines.
pub fn parse_line(line: &str) -> fedssl_core::Result<Option<RawRecord>> {
    let line = line.trim();
    if line.is_empty() {
        return Ok(None);
    }
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != COLUMNS {
        return Err(CoreError::FieldCount { found: fields.len().saturating_sub(2), expected: FEATURE_FIELDS });
    }
    let difficulty = fields[COLUMNS - 1]
        .trim()
        .parse()
        .map_err(|_| CoreError::Numeric { column: COLUMNS - 1, value: fields[COLUMNS - 1].to_string() })?;
    RawRecord::from_fields(&fields[..FEATURE_FIELDS], fields[FEATURE_FIELDS], Some(difficulty)).map(Some)
}

/// Parses every row of `reader`; `path` only labels errors.
pub fn read_records<R: BufRead>(reader: R, path: &Path) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        match parse_line(&line) {
            Ok(Some(r)) => out.push(r),
            Ok(None) => {}
            Err(source) => return Err(Error::Parse { path: path.to_path_buf(), line: i + 1, source }),
        }
    }
    Ok(out)
}

pub fn load_records(path: &Path) -> Result<Vec<RawRecord>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    read_records(BufReader::new(file), path)
}

/// Loads the training and test files.
pub fn load_nslkdd(train: &Path, test: &Path) -> Result<(Vec<RawRecord>, Vec<RawRecord>)> {
    let train_records = load_records(train)?;
    let test_records = load_records(test)?;
    log::info!("loaded {} training and {} test records", train_records.len(), test_records.len());
    Ok((train_records, test_records))
}

/// Writes a record back in file format.
pub fn format_record(r: &RawRecord) -> String {
    let mut numeric = r.numeric.iter();
    let mut cols = Vec::with_capacity(COLUMNS);
    for col in 0..FEATURE_FIELDS {
        if let Some(slot) = fedssl_core::features::CATEGORICAL_COLUMNS.iter().position(|&c| c == col) {
            cols.push(r.categorical[slot].clone());
        } else {
            cols.push(format_number(*numeric.next().expect("38 numeric fields")));
        }
    }
    cols.push(r.label.clone());
    cols.push(r.difficulty.unwrap_or(0).to_string());
    cols.join(",")
}

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fedssl_core::labels::TrafficClass;

    const ROW: &str = "0,tcp,ftp_data,SF,491,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,2,2,0.00,0.00,0.00,0.00,1.00,0.00,0.00,150,25,0.17,0.03,0.17,0.00,0.00,0.00,0.05,0.00,normal,20";

    #[test]
    fn parses_a_training_row() {
        let r = parse_line(ROW).unwrap().unwrap();
        assert_eq!(r.class, TrafficClass::Normal);
        assert_eq!(r.categorical[1], "ftp_data");
        assert_eq!(r.numeric.len(), 38);
        assert_eq!(r.numeric[1], 491.0);
        assert_eq!(r.difficulty, Some(20));
    }

    #[test]
    fn round_trips_through_format() {
        let r = parse_line(ROW).unwrap().unwrap();
        assert_eq!(parse_line(&format_record(&r)).unwrap().unwrap(), r);
    }

    #[test]
    fn empty_input_is_empty() {
        assert!(read_records("".as_bytes(), Path::new("x")).unwrap().is_empty());
        assert!(read_records("\n\n".as_bytes(), Path::new("x")).unwrap().is_empty());
    }

    #[test]
    fn short_row_names_its_line() {
        let short: Vec<&str> = ROW.split(',').take(42).collect();
        let text = format!("{ROW}\n{}\n", short.join(","));
        match read_records(text.as_bytes(), Path::new("KDDTrain+.txt")) {
            Err(Error::Parse { line, source: CoreError::FieldCount { found: 40, .. }, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_label_is_rejected() {
        let row = ROW.replace("normal", "teleport");
        let err = read_records(row.as_bytes(), Path::new("t")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, source: CoreError::UnknownLabel(ref l), .. } if l == "teleport"));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn missing_file_is_a_configuration_error() {
        let err = load_records(Path::new("/nonexistent/KDDTrain+.txt")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
