//! Task CSV files (RFC-4180, UTF-8).
//!
//! Subtask 1: `sentence_id,gold_label,sentence`.
//! Subtask 2: `sentence_id,sentence,antecedent_startid,antecedent_endid,consequent_startid,consequent_endid`,
//! with `-1,-1` marking an absent span. Header names are matched ignoring case
//! and underscores, so the `sentenceID` spelling of the original release loads too.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Label, LabeledSentence, SpanAnnotation, SpanPrediction};
use crate::error::{io_err, Error, Result};
use crate::text::CharRange;

const MAX_TEXT_CHARS: usize = 10_000;

struct Columns {
    index: HashMap<String, usize>,
}

impl Columns {
    fn new(headers: &csv::StringRecord) -> Self {
        let index = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (normalize_header(h), i))
            .collect();
        Self { index }
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.index
            .get(&normalize_header(name))
            .copied()
            .ok_or_else(|| Error::MalformedRow {
                line: 1,
                message: format!("missing column {name:?}"),
            })
    }
}

fn normalize_header(h: &str) -> String {
    h.trim()
        .trim_start_matches('\u{feff}')
        .to_lowercase()
        .replace('_', "")
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(r)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(io_err(path))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn field(rec: &csv::StringRecord, col: usize) -> Result<&str> {
    rec.get(col).ok_or_else(|| Error::MalformedRow {
        line: line_of(rec),
        message: format!("missing field {col}"),
    })
}

fn check_text(text: &str, line: u64) -> Result<usize> {
    let n = text.chars().count();
    if n == 0 || n > MAX_TEXT_CHARS {
        return Err(Error::MalformedRow {
            line,
            message: format!("sentence length {n} outside 1..={MAX_TEXT_CHARS}"),
        });
    }
    Ok(n)
}

fn records<R: Read>(
    rdr: &mut csv::Reader<R>,
) -> impl Iterator<Item = Result<csv::StringRecord>> + '_ {
    rdr.records().map(|r| {
        r.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::MalformedRow {
                line,
                message: e.to_string(),
            }
        })
    })
}

pub fn read_task1_csv<R: Read>(r: R) -> Result<Vec<LabeledSentence>> {
    let mut rdr = reader(r);
    let cols = Columns::new(rdr.headers()?);
    let (id_col, label_col, text_col) = (
        cols.require("sentence_id")?,
        cols.require("gold_label")?,
        cols.require("sentence")?,
    );
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in records(&mut rdr) {
        let rec = rec?;
        let line = line_of(&rec);
        let id = field(&rec, id_col)?.to_string();
        let label = match field(&rec, label_col)?.trim() {
            "0" => Label::Negative,
            "1" => Label::Positive,
            _ => return Err(Error::InvalidLabel { line }),
        };
        let text = field(&rec, text_col)?.to_string();
        check_text(&text, line)?;
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId { id });
        }
        out.push(LabeledSentence { id, text, label });
    }
    Ok(out)
}

pub fn load_task1_csv(path: impl AsRef<Path>) -> Result<Vec<LabeledSentence>> {
    read_task1_csv(open(path.as_ref())?)
}

fn parse_offset(s: &str, line: u64) -> Result<i64> {
    s.trim().parse::<i64>().map_err(|_| Error::MalformedRow {
        line,
        message: format!("offset {s:?} is not an integer"),
    })
}

fn parse_range(
    start: &str,
    end: &str,
    text_len: usize,
    line: u64,
    role: &str,
) -> Result<Option<CharRange>> {
    let (s, e) = (parse_offset(start, line)?, parse_offset(end, line)?);
    if s == -1 && e == -1 {
        return Ok(None);
    }
    let bad = |message: String| Error::SpanOutOfRange { line, message };
    if s < 0 || e < 0 {
        return Err(bad(format!("{role} offsets {s},{e} are negative")));
    }
    if s > e {
        return Err(bad(format!("{role} start {s} > end {e}")));
    }
    if e as usize >= text_len {
        return Err(bad(format!("{role} end {e} ≥ sentence length {text_len}")));
    }
    Ok(Some(CharRange::new(s as usize, e as usize)))
}

fn read_span_rows<R: Read>(r: R, require_antecedent: bool) -> Result<Vec<SpanPrediction>> {
    let mut rdr = reader(r);
    let cols = Columns::new(rdr.headers()?);
    let c = [
        cols.require("sentence_id")?,
        cols.require("sentence")?,
        cols.require("antecedent_startid")?,
        cols.require("antecedent_endid")?,
        cols.require("consequent_startid")?,
        cols.require("consequent_endid")?,
    ];
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in records(&mut rdr) {
        let rec = rec?;
        let line = line_of(&rec);
        let id = field(&rec, c[0])?.to_string();
        let text = field(&rec, c[1])?.to_string();
        let len = check_text(&text, line)?;
        let antecedent = parse_range(
            field(&rec, c[2])?,
            field(&rec, c[3])?,
            len,
            line,
            "antecedent",
        )?;
        if require_antecedent && antecedent.is_none() {
            return Err(Error::SpanOutOfRange {
                line,
                message: "antecedent is required".into(),
            });
        }
        let consequent = parse_range(
            field(&rec, c[4])?,
            field(&rec, c[5])?,
            len,
            line,
            "consequent",
        )?;
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId { id });
        }
        out.push(SpanPrediction {
            id,
            text,
            antecedent,
            consequent,
        });
    }
    Ok(out)
}

pub fn read_task2_csv<R: Read>(r: R) -> Result<Vec<SpanAnnotation>> {
    Ok(read_span_rows(r, true)?
        .into_iter()
        .map(|p| SpanAnnotation {
            id: p.id,
            text: p.text,
            antecedent: p.antecedent.expect("checked while reading"),
            consequent: p.consequent,
        })
        .collect())
}

/// Id and text of every row; other columns are ignored, so unlabelled test
/// files and either task layout load.
pub fn read_sentences<R: Read>(r: R) -> Result<Vec<(String, String)>> {
    let mut rdr = reader(r);
    let cols = Columns::new(rdr.headers()?);
    let (id_col, text_col) = (cols.require("sentence_id")?, cols.require("sentence")?);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in records(&mut rdr) {
        let rec = rec?;
        let id = field(&rec, id_col)?.to_string();
        let text = field(&rec, text_col)?.to_string();
        check_text(&text, line_of(&rec))?;
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId { id });
        }
        out.push((id, text));
    }
    Ok(out)
}

pub fn load_sentences(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    read_sentences(open(path.as_ref())?)
}

/// True when the header row names `column` (same matching as the readers).
pub fn has_column(path: impl AsRef<Path>, column: &str) -> Result<bool> {
    let mut rdr = reader(open(path.as_ref())?);
    let cols = Columns::new(rdr.headers()?);
    Ok(cols.require(column).is_ok())
}

pub fn load_task2_csv(path: impl AsRef<Path>) -> Result<Vec<SpanAnnotation>> {
    read_task2_csv(open(path.as_ref())?)
}

/// Span predictions in the subtask-2 layout; both roles may be `-1,-1`.
pub fn load_span_predictions(path: impl AsRef<Path>) -> Result<Vec<SpanPrediction>> {
    read_span_rows(open(path.as_ref())?, false)
}

pub fn write_task1_csv<W: Write>(w: W, data: &[LabeledSentence]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["sentence_id", "gold_label", "sentence"])?;
    for s in data {
        wtr.write_record([s.id.as_str(), &s.label.as_u8().to_string(), &s.text])?;
    }
    wtr.flush().map_err(io_err("<csv writer>"))?;
    Ok(())
}

fn range_fields(r: Option<CharRange>) -> [String; 2] {
    match r {
        Some(r) => [r.start.to_string(), r.end.to_string()],
        None => ["-1".into(), "-1".into()],
    }
}

pub fn write_span_predictions<W: Write>(w: W, data: &[SpanPrediction]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "sentence_id",
        "sentence",
        "antecedent_startid",
        "antecedent_endid",
        "consequent_startid",
        "consequent_endid",
    ])?;
    for p in data {
        let [a0, a1] = range_fields(p.antecedent);
        let [c0, c1] = range_fields(p.consequent);
        wtr.write_record([p.id.as_str(), &p.text, &a0, &a1, &c0, &c1])?;
    }
    wtr.flush().map_err(io_err("<csv writer>"))?;
    Ok(())
}

pub fn write_task2_csv<W: Write>(w: W, data: &[SpanAnnotation]) -> Result<()> {
    let preds: Vec<SpanPrediction> = data.iter().map(SpanPrediction::from).collect();
    write_span_predictions(w, &preds)
}

/// Writes an `id,label` prediction file.
pub fn write_label_predictions<W: Write>(w: W, preds: &[(String, Label)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["id", "label"])?;
    for (id, label) in preds {
        wtr.write_record([id.as_str(), &label.as_u8().to_string()])?;
    }
    wtr.flush().map_err(io_err("<csv writer>"))?;
    Ok(())
}

pub fn load_label_predictions(path: impl AsRef<Path>) -> Result<Vec<(String, Label)>> {
    let mut rdr = reader(open(path.as_ref())?);
    let cols = Columns::new(rdr.headers()?);
    let (id_col, label_col) = (cols.require("id")?, cols.require("label")?);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in records(&mut rdr) {
        let rec = rec?;
        let line = line_of(&rec);
        let id = field(&rec, id_col)?.to_string();
        let label = match field(&rec, label_col)?.trim() {
            "0" => Label::Negative,
            "1" => Label::Positive,
            _ => return Err(Error::InvalidLabel { line }),
        };
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId { id });
        }
        out.push((id, label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const T1_HEADER: &str = "sentence_id,gold_label,sentence\n";
    const T2_HEADER: &str =
        "sentence_id,sentence,antecedent_startid,antecedent_endid,consequent_startid,consequent_endid\n";

    #[test]
    fn reads_wish_row() {
        let data =
            read_task1_csv(format!("{T1_HEADER}7,1,\"I wish it had more.\"\n").as_bytes()).unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(data[0].id, "7");
        assert_eq!(data[0].label, Label::Positive);
        assert_eq!(data[0].text, "I wish it had more.");
    }

    #[test]
    fn header_only_is_empty() {
        assert!(read_task1_csv(T1_HEADER.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn invalid_label_names_line() {
        let input = format!("{T1_HEADER}1,0,ok\n2,2,bad\n");
        let err = read_task1_csv(input.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::InvalidLabel { line: 3 }), "{err}");
        assert_eq!(err.to_string(), "invalid label at line 3");
    }

    #[test]
    fn duplicate_id_rejected() {
        let input = format!("{T1_HEADER}1,0,a\n1,1,b\n");
        assert!(matches!(
            read_task1_csv(input.as_bytes()),
            Err(Error::DuplicateId { .. })
        ));
    }

    #[test]
    fn original_release_header_spelling() {
        let input = "sentenceID,gold_label,sentence\n100,0,\"Hello, world\"\n";
        let data = read_task1_csv(input.as_bytes()).unwrap();
        assert_eq!(data[0].text, "Hello, world");
    }

    #[test]
    fn wish_row_without_consequent() {
        let text = "\"\"I wish there was no limit on the number of groups you could join because there are so many good ones,\"\" Larsen said.";
        let input = format!("{T2_HEADER}200,\"{text}\",1,64,-1,-1\n");
        let data = read_task2_csv(input.as_bytes()).unwrap();
        assert_eq!(data[0].consequent, None);
        assert_eq!(
            data[0].antecedent.slice(&data[0].text),
            "I wish there was no limit on the number of groups you could join"
        );
    }

    #[test]
    fn full_span_accepted_and_overflow_rejected() {
        let ok = format!("{T2_HEADER}1,abcd,0,3,-1,-1\n");
        assert_eq!(
            read_task2_csv(ok.as_bytes()).unwrap()[0].antecedent,
            CharRange::new(0, 3)
        );
        let over = format!("{T2_HEADER}1,abcd,0,4,-1,-1\n");
        assert!(matches!(
            read_task2_csv(over.as_bytes()),
            Err(Error::SpanOutOfRange { line: 2, .. })
        ));
        let inverted = format!("{T2_HEADER}1,abcd,2,1,-1,-1\n");
        assert!(matches!(
            read_task2_csv(inverted.as_bytes()),
            Err(Error::SpanOutOfRange { .. })
        ));
        let half_sentinel = format!("{T2_HEADER}1,abcd,0,1,-1,2\n");
        assert!(read_task2_csv(half_sentinel.as_bytes()).is_err());
        let no_antecedent = format!("{T2_HEADER}1,abcd,-1,-1,-1,-1\n");
        assert!(read_task2_csv(no_antecedent.as_bytes()).is_err());
    }

    #[test]
    fn sentences_from_either_layout() {
        let t1 = "sentenceID,gold_label,sentence\n1,0,hello there\n";
        assert_eq!(
            read_sentences(t1.as_bytes()).unwrap(),
            vec![("1".to_string(), "hello there".to_string())]
        );
        let unlabeled = "sentence_id,sentence\n7,\"a, b\"\n";
        assert_eq!(read_sentences(unlabeled.as_bytes()).unwrap()[0].1, "a, b");
        assert!(read_sentences("id,text\n1,x\n".as_bytes()).is_err());
    }

    #[test]
    fn task1_round_trip() {
        let input = format!("{T1_HEADER}a,1,\"He said \"\"if only\"\", then left\"\nb,0,plain\n");
        let data = read_task1_csv(input.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_task1_csv(&mut buf, &data).unwrap();
        assert_eq!(read_task1_csv(&buf[..]).unwrap(), data);
    }

    #[test]
    fn task2_round_trip() {
        let input = format!(
            "{T2_HEADER}x,\"If I were you, I would go.\",0,12,15,25\ny,I wish.,0,6,-1,-1\n"
        );
        let data = read_task2_csv(input.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_task2_csv(&mut buf, &data).unwrap();
        assert_eq!(read_task2_csv(&buf[..]).unwrap(), data);
    }
}
