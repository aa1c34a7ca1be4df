//! Tab-separated input files.
//!
//! * edges: `edge_type \t src_id \t dst_id [\t timestamp]`
//! * side info: `node_type \t node_id \t slot:value[,value...] [\t slot:value...]`
//! * interactions: `user_id \t item_id \t behavior \t timestamp`
//!
//! Blank lines and lines starting with `#` are skipped.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::graph::{EdgeRecord, SideInfoRecord};
use crate::split::{Interaction, InteractionLog};

#[derive(Debug, Error)]
pub enum TsvError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn open(path: &Path) -> Result<BufReader<File>, TsvError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| TsvError::Io { path: path.display().to_string(), source })
}

/// Yields `(line number, fields)` for every data line.
fn records<R: BufRead>(r: R) -> impl Iterator<Item = Result<(usize, Vec<String>), TsvError>> {
    r.lines().enumerate().filter_map(|(i, line)| match line {
        Err(source) => Some(Err(TsvError::Io { path: String::from("<input>"), source })),
        Ok(l) => {
            let l = l.trim_end_matches(['\r', '\n']);
            if l.trim().is_empty() || l.starts_with('#') {
                None
            } else {
                Some(Ok((i + 1, l.split('\t').map(str::to_owned).collect())))
            }
        }
    })
}

fn parse_err(line: usize, message: impl Into<String>) -> TsvError {
    TsvError::Parse { line, message: message.into() }
}

pub fn parse_edges<R: BufRead>(r: R) -> Result<Vec<EdgeRecord>, TsvError> {
    records(r)
        .map(|rec| {
            let (line, f) = rec?;
            if !(3..=4).contains(&f.len()) {
                return Err(parse_err(line, format!("expected 3 or 4 columns, found {}", f.len())));
            }
            if f.len() == 4 {
                f[3].trim().parse::<i64>().map_err(|_| parse_err(line, format!("bad timestamp {:?}", f[3])))?;
            }
            Ok(EdgeRecord { edge_type: f[0].clone(), src: f[1].clone(), dst: f[2].clone() })
        })
        .collect()
}

pub fn read_edges(path: &Path) -> Result<Vec<EdgeRecord>, TsvError> {
    parse_edges(open(path)?)
}

pub fn parse_side_info<R: BufRead>(r: R) -> Result<Vec<SideInfoRecord>, TsvError> {
    records(r)
        .map(|rec| {
            let (line, f) = rec?;
            if f.len() < 2 {
                return Err(parse_err(line, "expected node_type, node_id and slot columns"));
            }
            let mut slots = Vec::new();
            for col in &f[2..] {
                let (slot, values) = col
                    .split_once(':')
                    .ok_or_else(|| parse_err(line, format!("slot column {col:?} lacks ':'")))?;
                let slot: u32 = slot.trim().parse().map_err(|_| parse_err(line, format!("bad slot id {slot:?}")))?;
                let values = values
                    .split(',')
                    .map(|v| v.trim().parse::<u64>().map_err(|_| parse_err(line, format!("bad slot value {v:?}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                slots.push((slot, values));
            }
            Ok(SideInfoRecord { node_type: f[0].clone(), node_id: f[1].clone(), slots })
        })
        .collect()
}

pub fn read_side_info(path: &Path) -> Result<Vec<SideInfoRecord>, TsvError> {
    parse_side_info(open(path)?)
}

pub fn parse_interactions<R: BufRead>(r: R) -> Result<InteractionLog, TsvError> {
    let records = records(r)
        .map(|rec| {
            let (line, f) = rec?;
            if f.len() != 4 {
                return Err(parse_err(line, format!("expected 4 columns, found {}", f.len())));
            }
            let timestamp = f[3].trim().parse().map_err(|_| parse_err(line, format!("bad timestamp {:?}", f[3])))?;
            Ok(Interaction { user: f[0].clone(), item: f[1].clone(), behavior: f[2].clone(), timestamp })
        })
        .collect::<Result<_, _>>()?;
    Ok(InteractionLog { records })
}

pub fn read_interactions(path: &Path) -> Result<InteractionLog, TsvError> {
    parse_interactions(open(path)?)
}

pub fn write_interactions(path: &Path, log: &InteractionLog) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in &log.records {
        writeln!(w, "{}\t{}\t{}\t{}", r.user, r.item, r.behavior, r.timestamp)?;
    }
    w.flush()
}
