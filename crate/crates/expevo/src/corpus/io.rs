//! JSON-lines review input.
//!
//! One object per line:
//! `{"user_id": str, "item_id": str, "timestamp": int epoch-seconds | ISO-8601 str,
//!   "rating": number, "text": str}`.

use std::io::BufRead;

use chrono::{DateTime, NaiveDate};
use serde::Deserialize;

use super::RawReview;
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct RawLine {
    user_id: String,
    item_id: String,
    timestamp: TimestampField,
    rating: f64,
    text: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TimestampField {
    Seconds(i64),
    Text(String),
}

fn parse_timestamp(field: &TimestampField) -> std::result::Result<i64, String> {
    match field {
        TimestampField::Seconds(s) => Ok(*s),
        TimestampField::Text(s) => {
            if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
                return Ok(dt.timestamp());
            }
            if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
                return Ok(d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp());
            }
            // Year-month shorthand, pinned to the first of the month.
            if let Ok(d) = NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d") {
                return Ok(d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp());
            }
            Err(format!("unparseable timestamp {s:?}"))
        }
    }
}

fn parse_line(line: &str, line_no: usize) -> Result<RawReview> {
    let parsed: RawLine = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let timestamp = parse_timestamp(&parsed.timestamp).map_err(|message| Error::Parse {
        line: line_no,
        message,
    })?;
    if !parsed.rating.is_finite() {
        return Err(Error::Parse {
            line: line_no,
            message: "rating must be finite".into(),
        });
    }
    Ok(RawReview {
        user_id: parsed.user_id,
        item_id: parsed.item_id,
        timestamp,
        rating: parsed.rating,
        text: parsed.text,
    })
}

/// Read every record, failing on the first malformed line (with its number).
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<RawReview>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(&line, i + 1)?);
    }
    Ok(out)
}

/// Read records, skipping malformed lines and returning their line numbers.
pub fn read_jsonl_lossy<R: BufRead>(reader: R) -> Result<(Vec<RawReview>, Vec<usize>)> {
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, i + 1) {
            Ok(r) => out.push(r),
            Err(_) => skipped.push(i + 1),
        }
    }
    Ok((out, skipped))
}

/// Table-1 style ingestion summary.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CorpusStats {
    pub n_reviews: usize,
    pub n_users: usize,
    pub n_items: usize,
    pub n_tokens: usize,
    pub vocab_size: usize,
    pub n_epochs: u32,
}

impl CorpusStats {
    pub fn of(corpus: &super::Corpus) -> Self {
        Self {
            n_reviews: corpus.n_reviews(),
            n_users: corpus.n_users(),
            n_items: corpus.n_items(),
            n_tokens: corpus.n_tokens(),
            vocab_size: corpus.vocab_size(),
            n_epochs: corpus.n_epochs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_valid_lines() {
        let data = concat!(
            r#"{"user_id":"u1","item_id":"i1","timestamp":1000,"rating":4.5,"text":"good beer"}"#,
            "\n",
            r#"{"user_id":"u2","item_id":"i1","timestamp":"2001-05-01","rating":2.0,"text":"meh"}"#,
            "\n",
            r#"{"user_id":"u3","item_id":"i2","timestamp":"2001-05","rating":3.0,"text":"ok"}"#,
            "\n",
        );
        let reviews = read_jsonl(data.as_bytes()).unwrap();
        assert_eq!(reviews.len(), 3);
        assert_eq!(reviews[0].timestamp, 1000);
        assert_eq!(reviews[1].timestamp, reviews[2].timestamp);
    }

    #[test]
    fn rfc3339_timestamp() {
        let data =
            r#"{"user_id":"u","item_id":"i","timestamp":"1970-01-01T00:16:40Z","rating":1,"text":""}"#;
        let reviews = read_jsonl(data.as_bytes()).unwrap();
        assert_eq!(reviews[0].timestamp, 1000);
    }

    #[test]
    fn reports_line_number_on_error() {
        let data = concat!(
            r#"{"user_id":"u1","item_id":"i1","timestamp":1000,"rating":4.5,"text":"x"}"#,
            "\n",
            r#"{"user_id":"u2","item_id":"i1","timestamp":2000,"text":"missing rating"}"#,
            "\n",
        );
        match read_jsonl(data.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn lossy_mode_skips_and_reports() {
        let data = concat!(
            r#"{"user_id":"u1","item_id":"i1","timestamp":1000,"rating":4.5,"text":"x"}"#,
            "\n",
            "not json\n",
            r#"{"user_id":"u3","item_id":"i1","timestamp":3000,"rating":1.0,"text":"y"}"#,
            "\n",
        );
        let (reviews, skipped) = read_jsonl_lossy(data.as_bytes()).unwrap();
        assert_eq!(reviews.len(), 2);
        assert_eq!(skipped, vec![2]);
    }
}
