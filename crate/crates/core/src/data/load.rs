//! Delimited interaction files.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One observed (user, item) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub timestamp: Option<i64>,
}

impl Interaction {
    pub fn new(user: impl Into<String>, item: impl Into<String>, timestamp: Option<i64>) -> Self {
        Interaction {
            user: user.into(),
            item: item.into(),
            timestamp,
        }
    }
}

/// Column layout of an interaction file.
///
/// Column 0 is the user and column 1 the item. Without an explicit
/// `timestamp_column`, a header naming `ts`, `time` or `timestamp` selects it;
/// otherwise rows with four or more fields (`user item rating ts`) take the
/// last field as the timestamp. Rating columns are ignored: every listed pair
/// is a positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormatOptions {
    pub delimiter: String,
    pub has_header: bool,
    pub timestamp_column: Option<usize>,
}

impl Default for FormatOptions {
    fn default() -> Self {
        FormatOptions {
            delimiter: "\t".to_string(),
            has_header: false,
            timestamp_column: None,
        }
    }
}

impl FormatOptions {
    pub fn comma() -> Self {
        FormatOptions {
            delimiter: ",".to_string(),
            ..Default::default()
        }
    }

    pub fn with_header(mut self, has_header: bool) -> Self {
        self.has_header = has_header;
        self
    }

    /// Parses delimiter names used on the command line (`tab`, `comma`, or a literal).
    pub fn parse_delimiter(s: &str) -> Result<String> {
        let d = match s {
            "tab" | "\\t" | "\t" => "\t",
            "comma" | "," => ",",
            "space" | " " => " ",
            "semicolon" | ";" => ";",
            other => other,
        };
        if d.is_empty() {
            return Err(Error::config("delimiter", "must not be empty"));
        }
        Ok(d.to_string())
    }
}

pub fn load_interactions(path: &Path, opts: &FormatOptions) -> Result<Vec<Interaction>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(&text, opts)
}

/// Parses interactions from in-memory text, preserving file order.
pub fn parse_interactions(text: &str, opts: &FormatOptions) -> Result<Vec<Interaction>> {
    if opts.delimiter.is_empty() {
        return Err(Error::config("delimiter", "must not be empty"));
    }
    let mut ts_col = opts.timestamp_column;
    let mut out = Vec::new();
    let mut header_pending = opts.has_header;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(opts.delimiter.as_str()).map(str::trim).collect();
        if header_pending {
            header_pending = false;
            if ts_col.is_none() {
                ts_col = fields.iter().position(|f| {
                    matches!(
                        f.to_ascii_lowercase().as_str(),
                        "ts" | "time" | "timestamp"
                    )
                });
                if ts_col.is_none() {
                    // Header without a time column: never infer one from width.
                    ts_col = Some(usize::MAX);
                }
            }
            continue;
        }
        if fields.len() < 2 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected at least 2 fields, found {}", fields.len()),
            });
        }
        let (user, item) = (fields[0], fields[1]);
        if user.is_empty() || item.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: "empty user or item id".into(),
            });
        }
        let col = match ts_col {
            Some(usize::MAX) => None,
            Some(c) => Some(c),
            None if fields.len() >= 4 => Some(fields.len() - 1),
            None => None,
        };
        let timestamp = match col {
            None => None,
            Some(c) => {
                let f = fields.get(c).ok_or_else(|| Error::Parse {
                    line: line_no,
                    msg: format!("missing timestamp column {c}"),
                })?;
                Some(f.parse::<i64>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("invalid timestamp `{f}`"),
                })?)
            }
        };
        out.push(Interaction::new(user, item, timestamp));
    }
    if out.is_empty() {
        return Err(Error::Empty("interaction file contains no interactions".into()));
    }
    Ok(out)
}
