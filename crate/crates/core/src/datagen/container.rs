//! Little-endian binary container for bundles and year loss tables.
//!
//! Layout: magic `ARA1`, format version (u32), section count (u32), then a
//! section table of `(name_len u32, name, offset u64, length u64)` entries,
//! then the payloads back to back in table order. Section payload sizes are
//! the quantity the transfer models consume, so they are computable up front
//! (see the `*_payload_len` functions) and always match the table.
//!
//! Sections: `META` (UTF-8 config echo), `YET`, one `ELT{id}` per loss
//! table, `PF`; a standalone loss-table export holds `META` and `YLT`.
//!
//! Payload encodings (all integers and floats little-endian):
//!
//! * `YET`: trial count u32, then per trial `trial_id u32, n u32,
//!   n x (event_id u32, timestamp f32)`;
//! * `ELT{id}`: `elt_id u32, n u32, occ_retention f64, occ_limit f64,
//!   n x (event_id u32, loss f64)`;
//! * `PF`: program count u32, per program layer count u32, per layer
//!   `n_refs u32, refs u32 x n, occ/agg retention+limit f64 x 4`;
//! * `YLT`: entry count u32, then `trial_id u32, loss f64` pairs.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{ByteSizes, DatasetBundle};
use crate::risk::{
    EventLossTable, EventOccurrence, Layer, LayerTerms, PerEltTerms, Portfolio, Program, Trial,
    YearEventTable, YearLossTable,
};

const MAGIC: &[u8; 4] = b"ARA1";
const VERSION: u32 = 1;

/// Errors raised while decoding a container.
#[derive(Debug, Error)]
pub enum ParseError {
    #[error("bad magic {found:?}, expected \"ARA1\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported container version {found}, expected {VERSION}")]
    UnsupportedVersion { found: u32 },
    #[error("truncated {section} section at offset {offset}")]
    Truncated { section: String, offset: u64 },
    #[error("unknown section {name:?} at offset {offset}")]
    UnknownSection { name: String, offset: u64 },
    #[error("missing required section {name}")]
    MissingSection { name: &'static str },
    #[error("{section} section at offset {offset} violates an invariant: {detail}")]
    Invariant {
        section: String,
        offset: u64,
        detail: String,
    },
    #[error("i/o error while reading container: {0}")]
    Io(#[from] io::Error),
}

// ── Payload sizes ──

/// Exact `YET` section payload size in bytes.
pub fn yet_payload_len(yet: &YearEventTable) -> u64 {
    4 + yet
        .trials
        .iter()
        .map(|t| 8 + 8 * t.events.len() as u64)
        .sum::<u64>()
}

/// Exact `ELT` section payload size in bytes.
pub fn elt_payload_len(elt: &EventLossTable) -> u64 {
    24 + 12 * elt.losses.len() as u64
}

/// Exact `PF` section payload size in bytes.
pub fn portfolio_payload_len(pf: &Portfolio) -> u64 {
    4 + pf
        .programs
        .iter()
        .map(|p| {
            4 + p
                .layers
                .iter()
                .map(|l| 36 + 4 * l.elt_refs.len() as u64)
                .sum::<u64>()
        })
        .sum::<u64>()
}

/// Exact `YLT` section payload size in bytes.
pub fn ylt_payload_len(ylt: &YearLossTable) -> u64 {
    4 + 12 * ylt.losses.len() as u64
}

// ── Writing ──

struct SectionPlan {
    name: String,
    length: u64,
}

fn write_header<W: Write>(w: &mut W, sections: &[SectionPlan]) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(sections.len() as u32).to_le_bytes())?;
    let table_len: u64 = sections
        .iter()
        .map(|s| 4 + s.name.len() as u64 + 8 + 8)
        .sum();
    let mut offset = 12 + table_len;
    for s in sections {
        w.write_all(&(s.name.len() as u32).to_le_bytes())?;
        w.write_all(s.name.as_bytes())?;
        w.write_all(&offset.to_le_bytes())?;
        w.write_all(&s.length.to_le_bytes())?;
        offset += s.length;
    }
    Ok(())
}

fn write_yet<W: Write>(w: &mut W, yet: &YearEventTable) -> io::Result<()> {
    w.write_all(&(yet.trials.len() as u32).to_le_bytes())?;
    for trial in &yet.trials {
        w.write_all(&trial.trial_id.to_le_bytes())?;
        w.write_all(&(trial.events.len() as u32).to_le_bytes())?;
        for ev in &trial.events {
            let mut rec = [0u8; 8];
            rec[..4].copy_from_slice(&ev.event_id.to_le_bytes());
            rec[4..].copy_from_slice(&ev.timestamp.to_le_bytes());
            w.write_all(&rec)?;
        }
    }
    Ok(())
}

fn write_elt<W: Write>(w: &mut W, elt: &EventLossTable) -> io::Result<()> {
    w.write_all(&elt.elt_id.to_le_bytes())?;
    w.write_all(&(elt.losses.len() as u32).to_le_bytes())?;
    w.write_all(&elt.terms.occ_retention.to_le_bytes())?;
    w.write_all(&elt.terms.occ_limit.to_le_bytes())?;
    for &(event_id, loss) in &elt.losses {
        w.write_all(&event_id.to_le_bytes())?;
        w.write_all(&loss.to_le_bytes())?;
    }
    Ok(())
}

fn write_portfolio<W: Write>(w: &mut W, pf: &Portfolio) -> io::Result<()> {
    w.write_all(&(pf.programs.len() as u32).to_le_bytes())?;
    for program in &pf.programs {
        w.write_all(&(program.layers.len() as u32).to_le_bytes())?;
        for layer in &program.layers {
            w.write_all(&(layer.elt_refs.len() as u32).to_le_bytes())?;
            for &elt_id in &layer.elt_refs {
                w.write_all(&elt_id.to_le_bytes())?;
            }
            let t = &layer.terms;
            for value in [t.occ_retention, t.occ_limit, t.agg_retention, t.agg_limit] {
                w.write_all(&value.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Serializes a bundle into the container format.
pub fn write_bundle<W: Write>(w: &mut W, bundle: &DatasetBundle) -> io::Result<()> {
    let mut sections = Vec::new();
    if let Some(meta) = &bundle.meta {
        sections.push(SectionPlan {
            name: "META".into(),
            length: meta.len() as u64,
        });
    }
    sections.push(SectionPlan {
        name: "YET".into(),
        length: yet_payload_len(&bundle.yet),
    });
    for elt in &bundle.elts {
        sections.push(SectionPlan {
            name: format!("ELT{}", elt.elt_id),
            length: elt_payload_len(elt),
        });
    }
    sections.push(SectionPlan {
        name: "PF".into(),
        length: portfolio_payload_len(&bundle.portfolio),
    });

    write_header(w, &sections)?;
    if let Some(meta) = &bundle.meta {
        w.write_all(meta.as_bytes())?;
    }
    write_yet(w, &bundle.yet)?;
    for elt in &bundle.elts {
        write_elt(w, elt)?;
    }
    write_portfolio(w, &bundle.portfolio)
}

/// Writes a bundle container to a file (buffered, non-atomic).
pub fn write_bundle_path(path: &Path, bundle: &DatasetBundle) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_bundle(&mut w, bundle)?;
    w.flush()
}

/// Serializes a year loss table as a standalone container.
pub fn write_ylt<W: Write>(w: &mut W, ylt: &YearLossTable, meta: Option<&str>) -> io::Result<()> {
    let mut sections = Vec::new();
    if let Some(meta) = meta {
        sections.push(SectionPlan {
            name: "META".into(),
            length: meta.len() as u64,
        });
    }
    sections.push(SectionPlan {
        name: "YLT".into(),
        length: ylt_payload_len(ylt),
    });
    write_header(w, &sections)?;
    if let Some(meta) = meta {
        w.write_all(meta.as_bytes())?;
    }
    w.write_all(&(ylt.losses.len() as u32).to_le_bytes())?;
    for &(trial_id, loss) in &ylt.losses {
        w.write_all(&trial_id.to_le_bytes())?;
        w.write_all(&loss.to_le_bytes())?;
    }
    Ok(())
}

// ── Reading ──

struct Src<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Src<R> {
    fn take(&mut self, buf: &mut [u8], section: &str) -> Result<(), ParseError> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Err(ParseError::Truncated {
                section: section.into(),
                offset: self.offset,
            }),
            Err(e) => Err(ParseError::Io(e)),
        }
    }

    fn u32(&mut self, section: &str) -> Result<u32, ParseError> {
        let mut b = [0u8; 4];
        self.take(&mut b, section)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, section: &str) -> Result<u64, ParseError> {
        let mut b = [0u8; 8];
        self.take(&mut b, section)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self, section: &str) -> Result<f64, ParseError> {
        let mut b = [0u8; 8];
        self.take(&mut b, section)?;
        Ok(f64::from_le_bytes(b))
    }

    fn invariant(&self, section: &str, detail: String) -> ParseError {
        ParseError::Invariant {
            section: section.into(),
            offset: self.offset,
            detail,
        }
    }
}

struct TableEntry {
    name: String,
    offset: u64,
    length: u64,
}

fn read_table<R: Read>(src: &mut Src<R>) -> Result<Vec<TableEntry>, ParseError> {
    let mut magic = [0u8; 4];
    src.take(&mut magic, "header")?;
    if &magic != MAGIC {
        return Err(ParseError::BadMagic { found: magic });
    }
    let version = src.u32("header")?;
    if version != VERSION {
        return Err(ParseError::UnsupportedVersion { found: version });
    }
    let n_sections = src.u32("header")?;
    let mut table = Vec::with_capacity(n_sections as usize);
    for _ in 0..n_sections {
        let name_len = src.u32("section table")?;
        let mut name = vec![0u8; name_len as usize];
        src.take(&mut name, "section table")?;
        let name = String::from_utf8(name)
            .map_err(|e| src.invariant("section table", format!("non-UTF-8 name: {e}")))?;
        let offset = src.u64("section table")?;
        let length = src.u64("section table")?;
        table.push(TableEntry {
            name,
            offset,
            length,
        });
    }
    Ok(table)
}

fn check_offset<R: Read>(src: &Src<R>, entry: &TableEntry) -> Result<(), ParseError> {
    if src.offset != entry.offset {
        return Err(ParseError::Invariant {
            section: entry.name.clone(),
            offset: src.offset,
            detail: format!(
                "section table says offset {}, payload cursor is at {}",
                entry.offset, src.offset
            ),
        });
    }
    Ok(())
}

fn read_yet<R: Read>(src: &mut Src<R>) -> Result<YearEventTable, ParseError> {
    const S: &str = "YET";
    let n_trials = src.u32(S)?;
    let mut trials = Vec::with_capacity(n_trials as usize);
    for i in 0..n_trials {
        let trial_id = src.u32(S)?;
        if trial_id != i + 1 {
            return Err(src.invariant(
                S,
                format!("trial ids must be contiguous from 1, got {} at row {i}", trial_id),
            ));
        }
        let n_events = src.u32(S)?;
        let mut events = Vec::with_capacity(n_events as usize);
        let mut prev = f32::NEG_INFINITY;
        for _ in 0..n_events {
            let mut rec = [0u8; 8];
            src.take(&mut rec, S)?;
            let event_id = u32::from_le_bytes(rec[..4].try_into().unwrap());
            let timestamp = f32::from_le_bytes(rec[4..].try_into().unwrap());
            if timestamp.is_nan() || timestamp < prev {
                return Err(src.invariant(
                    S,
                    format!("timestamps must ascend, got {timestamp} after {prev} in trial {trial_id}"),
                ));
            }
            prev = timestamp;
            events.push(EventOccurrence {
                event_id,
                timestamp,
            });
        }
        trials.push(Trial { trial_id, events });
    }
    Ok(YearEventTable { trials })
}

fn read_elt<R: Read>(src: &mut Src<R>, section: &str) -> Result<EventLossTable, ParseError> {
    let elt_id = src.u32(section)?;
    let n = src.u32(section)?;
    let terms = PerEltTerms {
        occ_retention: src.f64(section)?,
        occ_limit: src.f64(section)?,
    };
    let mut losses = Vec::with_capacity(n as usize);
    let mut prev = 0u32;
    for _ in 0..n {
        let event_id = src.u32(section)?;
        let loss = src.f64(section)?;
        if event_id <= prev {
            return Err(src.invariant(
                section,
                format!("event ids must be strictly ascending, got {event_id} after {prev}"),
            ));
        }
        if loss.is_nan() || loss < 0.0 {
            return Err(src.invariant(section, format!("negative loss for event {event_id}")));
        }
        prev = event_id;
        losses.push((event_id, loss));
    }
    Ok(EventLossTable {
        elt_id,
        losses,
        terms,
    })
}

fn read_portfolio<R: Read>(src: &mut Src<R>) -> Result<Portfolio, ParseError> {
    const S: &str = "PF";
    let n_programs = src.u32(S)?;
    let mut programs = Vec::with_capacity(n_programs as usize);
    for _ in 0..n_programs {
        let n_layers = src.u32(S)?;
        let mut layers = Vec::with_capacity(n_layers as usize);
        for _ in 0..n_layers {
            let n_refs = src.u32(S)?;
            let mut elt_refs = Vec::with_capacity(n_refs as usize);
            for _ in 0..n_refs {
                elt_refs.push(src.u32(S)?);
            }
            let terms = LayerTerms {
                occ_retention: src.f64(S)?,
                occ_limit: src.f64(S)?,
                agg_retention: src.f64(S)?,
                agg_limit: src.f64(S)?,
            };
            layers.push(Layer { elt_refs, terms });
        }
        programs.push(Program { layers });
    }
    Ok(Portfolio { programs })
}

fn read_meta<R: Read>(src: &mut Src<R>, length: u64) -> Result<String, ParseError> {
    let mut buf = vec![0u8; length as usize];
    src.take(&mut buf, "META")?;
    String::from_utf8(buf).map_err(|e| src.invariant("META", format!("non-UTF-8 echo: {e}")))
}

/// Decodes a bundle container.
pub fn read_bundle<R: Read>(r: R) -> Result<DatasetBundle, ParseError> {
    let mut src = Src {
        inner: r,
        offset: 0,
    };
    let table = read_table(&mut src)?;
    let mut meta = None;
    let mut yet = None;
    let mut elts = Vec::new();
    let mut portfolio = None;
    let mut elt_bytes = 0u64;
    let mut yet_bytes = 0u64;
    let mut portfolio_bytes = 0u64;
    for entry in &table {
        check_offset(&src, entry)?;
        let start = src.offset;
        match entry.name.as_str() {
            "META" => meta = Some(read_meta(&mut src, entry.length)?),
            "YET" => {
                yet = Some(read_yet(&mut src)?);
                yet_bytes = entry.length;
            }
            name if name.starts_with("ELT") => {
                elts.push(read_elt(&mut src, &entry.name)?);
                elt_bytes += entry.length;
            }
            "PF" => {
                portfolio = Some(read_portfolio(&mut src)?);
                portfolio_bytes = entry.length;
            }
            _ => {
                return Err(ParseError::UnknownSection {
                    name: entry.name.clone(),
                    offset: src.offset,
                })
            }
        }
        if src.offset - start != entry.length {
            return Err(src.invariant(
                &entry.name,
                format!(
                    "section table says {} bytes, payload decoded {}",
                    entry.length,
                    src.offset - start
                ),
            ));
        }
    }
    Ok(DatasetBundle {
        yet: yet.ok_or(ParseError::MissingSection { name: "YET" })?,
        elts,
        portfolio: portfolio.ok_or(ParseError::MissingSection { name: "PF" })?,
        byte_sizes: ByteSizes {
            yet_bytes,
            elt_bytes,
            portfolio_bytes,
        },
        meta,
    })
}

/// Reads a bundle container from a file.
pub fn read_bundle_path(path: &Path) -> Result<DatasetBundle, ParseError> {
    read_bundle(BufReader::with_capacity(1 << 20, File::open(path)?))
}

/// Decodes a standalone year-loss-table container; returns the table and
/// its config echo.
pub fn read_ylt<R: Read>(r: R) -> Result<(YearLossTable, Option<String>), ParseError> {
    let mut src = Src {
        inner: r,
        offset: 0,
    };
    let table = read_table(&mut src)?;
    let mut meta = None;
    let mut ylt = None;
    for entry in &table {
        check_offset(&src, entry)?;
        match entry.name.as_str() {
            "META" => meta = Some(read_meta(&mut src, entry.length)?),
            "YLT" => {
                const S: &str = "YLT";
                let n = src.u32(S)?;
                let mut losses = Vec::with_capacity(n as usize);
                for _ in 0..n {
                    let trial_id = src.u32(S)?;
                    let loss = src.f64(S)?;
                    losses.push((trial_id, loss));
                }
                ylt = Some(YearLossTable { losses });
            }
            _ => {
                return Err(ParseError::UnknownSection {
                    name: entry.name.clone(),
                    offset: src.offset,
                })
            }
        }
    }
    Ok((
        ylt.ok_or(ParseError::MissingSection { name: "YLT" })?,
        meta,
    ))
}
