//! Helpers for the line-oriented text record formats (checkpoints and
//! classifier model files).

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Numbered-line reader for the model file formats.
pub(crate) fn lines<R: BufRead>(source: R) -> impl FnMut(&str) -> Result<(usize, String)> {
    let mut it = source.lines().enumerate();
    move |what: &str| match it.next() {
        Some((i, Ok(s))) => Ok((i + 1, s)),
        Some((i, Err(e))) => Err(Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        }),
        None => Err(Error::Parse {
            line: 0,
            msg: format!("file truncated before {what}"),
        }),
    }
}

pub(crate) fn write_row<W: Write>(out: &mut W, values: &[f64]) -> std::io::Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            out.write_all(b" ")?;
        }
        write!(out, "{v}")?;
        first = false;
    }
    writeln!(out)
}

pub(crate) fn parse_row((line, text): (usize, String), expected: usize) -> Result<Vec<f64>> {
    let values = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid number {t:?}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(Error::Parse {
            line,
            msg: format!("expected {expected} values, found {}", values.len()),
        });
    }
    Ok(values)
}

pub(crate) fn keyed<T: std::str::FromStr>((line, text): (usize, String), key: &str) -> Result<T> {
    let mut parts = text.splitn(2, ' ');
    if parts.next() != Some(key) {
        return Err(Error::Parse {
            line,
            msg: format!("expected key {key}"),
        });
    }
    parts
        .next()
        .unwrap_or("")
        .trim()
        .parse()
        .map_err(|_| Error::Parse {
            line,
            msg: format!("invalid value for {key}"),
        })
}

pub(crate) fn expect_marker((line, text): (usize, String), marker: &str) -> Result<()> {
    if text.trim() == marker {
        Ok(())
    } else {
        Err(Error::Parse {
            line,
            msg: format!("expected {marker:?}"),
        })
    }
}
