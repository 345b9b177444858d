//! On-disk formats: terms, tuples, responses, lexicons and the CSV reports
//! emitted by the analysis stages.
//!
//! Readers report the 1-based line of any offending record. Writers are
//! deterministic: the same values always produce the same bytes.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};

use crate::agreement::{AgreementCurve, CurveRow};
use crate::error::{Error, Result};
use crate::model::{id_width, LexiconMetadata, Response, ScoredLexicon, Term, TermId, Tuple4, TupleId, TupleSet};
use crate::reliability::{SplitHalfResult, SubsampleCurve};
use crate::scoring::RankPlotRow;

pub const TUPLES_HEADER: [&str; 5] = ["tuple_id", "term1", "term2", "term3", "term4"];
pub const RESPONSES_HEADER: [&str; 5] = ["tuple_id", "annotator_id", "best", "worst", "timestamp"];
pub const CURVE_HEADER: [&str; 6] = [
    "d_center",
    "mean_agreement",
    "pooled_agreement",
    "lower_bound",
    "pairs",
    "annotations",
];

fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes)
        .map_err(|e| Error::invalid(format!("{}: not valid UTF-8: {e}", path.display())))?;
    Ok(match text.strip_prefix('\u{feff}') {
        Some(rest) => rest.to_string(),
        None => text,
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    f.sync_all().map_err(|e| Error::io(path, e))
}

fn origin(path: &Path) -> String {
    path.display().to_string()
}

fn csv_error(origin: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::record(origin, line, e.to_string())
}

fn record_line(rec: &csv::StringRecord) -> usize {
    rec.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("in-memory csv writer cannot fail")
}

fn check_header(origin: &str, rec: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = rec.iter().collect();
    if got != expected {
        return Err(Error::record(
            origin,
            record_line(rec),
            format!("expected header {:?}, found {:?}", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Terms

/// How a terms file is laid out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TermsFormat {
    /// One term text per line; ids are generated from the line index.
    Lines,
    /// Two columns `id,text`, with an optional `id,text` header row.
    Csv,
}

impl TermsFormat {
    /// `.csv` files are read as two-column CSV, anything else as lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => TermsFormat::Csv,
            _ => TermsFormat::Lines,
        }
    }

    /// Like [`TermsFormat::from_path`], but also treats a file whose first
    /// line is the `id,text` header as CSV.
    pub fn detect(path: &Path, text: &str) -> Self {
        let first = text.lines().next().unwrap_or("").trim_end_matches('\r');
        if first == "id,text" {
            TermsFormat::Csv
        } else {
            TermsFormat::from_path(path)
        }
    }
}

pub fn load_terms(path: &Path) -> Result<Vec<Term>> {
    let text = read_text(path)?;
    parse_terms(&text, TermsFormat::detect(path, &text), &origin(path))
}

pub fn parse_terms(text: &str, format: TermsFormat, origin: &str) -> Result<Vec<Term>> {
    // (line, id, text); id None means "generate"
    let mut raw: Vec<(usize, Option<String>, String)> = Vec::new();
    match format {
        TermsFormat::Lines => {
            let mut lines: Vec<&str> = text.split('\n').collect();
            if lines.last() == Some(&"") {
                lines.pop();
            }
            for (i, line) in lines.into_iter().enumerate() {
                let line = line.strip_suffix('\r').unwrap_or(line);
                raw.push((i + 1, None, line.to_string()));
            }
        }
        TermsFormat::Csv => {
            let mut rdr = csv_reader(text);
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec.map_err(|e| csv_error(origin, e))?;
                let line = record_line(&rec);
                if i == 0 && rec.len() == 2 && &rec[0] == "id" && &rec[1] == "text" {
                    continue;
                }
                if rec.len() != 2 {
                    return Err(Error::record(
                        origin,
                        line,
                        format!("expected 2 columns (id,text), found {}", rec.len()),
                    ));
                }
                raw.push((line, Some(rec[0].to_string()), rec[1].to_string()));
            }
        }
    }
    if raw.is_empty() {
        return Err(Error::invalid(format!("{origin}: no terms")));
    }

    let width = id_width(raw.len());
    let mut ids = HashSet::with_capacity(raw.len());
    let mut texts = HashSet::with_capacity(raw.len());
    let mut terms = Vec::with_capacity(raw.len());
    for (index, (line, id, text)) in raw.into_iter().enumerate() {
        let id = id.unwrap_or_else(|| format!("t{index:0width$}"));
        let term = Term::new(id, text).map_err(|e| Error::record(origin, line, e.to_string()))?;
        if !ids.insert(term.id.clone()) {
            return Err(Error::record(origin, line, format!("duplicate term id {}", term.id)));
        }
        if !texts.insert(term.text.clone()) {
            return Err(Error::record(
                origin,
                line,
                format!("duplicate term text {:?}", term.text),
            ));
        }
        terms.push(term);
    }
    Ok(terms)
}

pub fn write_terms_csv(path: &Path, terms: &[Term]) -> Result<()> {
    write_bytes(path, &terms_to_csv(terms))
}

pub fn terms_to_csv(terms: &[Term]) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(["id", "text"]).expect("in-memory write");
    for t in terms {
        w.write_record([t.id.as_str(), t.text.as_str()]).expect("in-memory write");
    }
    finish_csv(w)
}

// ---------------------------------------------------------------------------
// Tuples

pub fn tuples_to_csv(tuples: &[Tuple4]) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(TUPLES_HEADER).expect("in-memory write");
    for t in tuples {
        let [a, b, c, d] = t.terms();
        w.write_record([t.id.as_str(), a.as_str(), b.as_str(), c.as_str(), d.as_str()])
            .expect("in-memory write");
    }
    finish_csv(w)
}

pub fn write_tuples(path: &Path, tuples: &[Tuple4]) -> Result<()> {
    write_bytes(path, &tuples_to_csv(tuples))
}

pub fn read_tuples(path: &Path) -> Result<TupleSet> {
    parse_tuples(&read_text(path)?, &origin(path))
}

pub fn parse_tuples(text: &str, origin: &str) -> Result<TupleSet> {
    let mut rdr = csv_reader(text);
    let mut tuples = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(origin, e))?;
        if i == 0 {
            check_header(origin, &rec, &TUPLES_HEADER)?;
            continue;
        }
        let line = record_line(&rec);
        let bad = |msg: String| Error::record(origin, line, msg);
        if rec.len() != 5 {
            return Err(bad(format!("expected 5 columns, found {}", rec.len())));
        }
        let id = TupleId::new(&rec[0]).map_err(|e| bad(e.to_string()))?;
        let mut members = Vec::with_capacity(4);
        for field in rec.iter().skip(1) {
            members.push(TermId::new(field).map_err(|e| bad(e.to_string()))?);
        }
        let members: [TermId; 4] = members.try_into().expect("four members");
        let tuple = Tuple4::new(id, members).map_err(|e| bad(e.to_string()))?;
        if !seen.insert(tuple.id.clone()) {
            return Err(bad(format!("duplicate tuple id {}", tuple.id)));
        }
        tuples.push(tuple);
    }
    if tuples.is_empty() && text.trim().is_empty() {
        return Err(Error::invalid(format!("{origin}: empty tuples file")));
    }
    TupleSet::new(tuples)
}

// ---------------------------------------------------------------------------
// Responses

fn format_timestamp(ts: &Option<DateTime<Utc>>) -> String {
    ts.map(|t| t.to_rfc3339_opts(SecondsFormat::AutoSi, true))
        .unwrap_or_default()
}

pub fn responses_to_csv(responses: &[Response]) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(RESPONSES_HEADER).expect("in-memory write");
    for r in responses {
        w.write_record([
            r.tuple_id.as_str(),
            r.annotator_id.as_str(),
            r.best.as_str(),
            r.worst.as_str(),
            format_timestamp(&r.timestamp).as_str(),
        ])
        .expect("in-memory write");
    }
    finish_csv(w)
}

pub fn write_responses(path: &Path, responses: &[Response]) -> Result<()> {
    write_bytes(path, &responses_to_csv(responses))
}

/// Reads a responses file, checking each row on its own (best differs from
/// worst, timestamp parses). Tuple membership is checked by
/// [`validate_responses`].
pub fn read_responses(path: &Path) -> Result<Vec<Response>> {
    parse_responses(&read_text(path)?, &origin(path))
}

/// Responses with their 1-based source line, as read from a file.
pub fn parse_responses_with_lines(text: &str, origin: &str) -> Result<Vec<(usize, Response)>> {
    let mut rdr = csv_reader(text);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(origin, e))?;
        if i == 0 {
            check_header(origin, &rec, &RESPONSES_HEADER)?;
            continue;
        }
        let line = record_line(&rec);
        let bad = |msg: String| Error::record(origin, line, msg);
        if rec.len() != 5 {
            return Err(bad(format!("expected 5 columns, found {}", rec.len())));
        }
        let timestamp = if rec[4].is_empty() {
            None
        } else {
            let t = DateTime::parse_from_rfc3339(&rec[4])
                .map_err(|e| bad(format!("bad timestamp {:?}: {e}", &rec[4])))?;
            Some(t.with_timezone(&Utc))
        };
        let tuple_id = TupleId::new(&rec[0]).map_err(|e| bad(e.to_string()))?;
        let best = TermId::new(&rec[2]).map_err(|e| bad(e.to_string()))?;
        let worst = TermId::new(&rec[3]).map_err(|e| bad(e.to_string()))?;
        let r = Response::new(tuple_id, &rec[1], best, worst, timestamp).map_err(|e| bad(e.to_string()))?;
        out.push((line, r));
    }
    Ok(out)
}

pub fn parse_responses(text: &str, origin: &str) -> Result<Vec<Response>> {
    Ok(parse_responses_with_lines(text, origin)?
        .into_iter()
        .map(|(_, r)| r)
        .collect())
}

/// A response row dropped in permissive mode because its tuple is unknown.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkippedResponse {
    pub line: usize,
    pub tuple_id: TupleId,
}

#[derive(Clone, Debug, Default)]
pub struct ValidatedResponses {
    pub responses: Vec<Response>,
    pub skipped: Vec<SkippedResponse>,
}

/// Reads responses and checks each against the tuples. Rows naming an
/// unknown tuple are an error unless `permissive`, in which case they are
/// dropped and listed in `skipped`. Rows whose best or worst term is not in
/// the tuple are always an error.
pub fn read_responses_checked(path: &Path, tuples: &TupleSet, permissive: bool) -> Result<ValidatedResponses> {
    let origin = origin(path);
    let rows = parse_responses_with_lines(&read_text(path)?, &origin)?;
    validate_responses(rows, tuples, permissive, &origin)
}

pub fn validate_responses(
    rows: Vec<(usize, Response)>,
    tuples: &TupleSet,
    permissive: bool,
    origin: &str,
) -> Result<ValidatedResponses> {
    let mut out = ValidatedResponses::default();
    for (line, r) in rows {
        if tuples.get(r.tuple_id.as_str()).is_none() {
            if permissive {
                out.skipped.push(SkippedResponse {
                    line,
                    tuple_id: r.tuple_id.clone(),
                });
                continue;
            }
            return Err(Error::record(origin, line, format!("unknown tuple id {}", r.tuple_id)));
        }
        tuples
            .check_response(&r)
            .map_err(|e| Error::record(origin, line, e.to_string()))?;
        out.responses.push(r);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Lexicons

/// Formats a score with three decimals; never prints `-0.000`.
pub fn format_score(score: f64) -> String {
    let s = format!("{score:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

/// Renders `label<TAB>score` lines in lexicon order. Labels are term texts
/// when `terms` is given, otherwise term ids.
pub fn lexicon_to_tsv(lexicon: &ScoredLexicon, terms: Option<&[Term]>) -> Result<String> {
    let texts: Option<HashMap<&str, &str>> =
        terms.map(|ts| ts.iter().map(|t| (t.id.as_str(), t.text.as_str())).collect());
    let mut out = String::new();
    for e in lexicon.entries() {
        let label = match &texts {
            Some(map) => *map
                .get(e.term_id.as_str())
                .ok_or_else(|| Error::invalid(format!("term {} missing from the terms list", e.term_id)))?,
            None => e.term_id.as_str(),
        };
        out.push_str(label);
        out.push('\t');
        out.push_str(&format_score(e.score));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_lexicon(path: &Path, lexicon: &ScoredLexicon, terms: Option<&[Term]>) -> Result<()> {
    write_bytes(path, lexicon_to_tsv(lexicon, terms)?.as_bytes())
}

pub fn read_lexicon(path: &Path, terms: Option<&[Term]>) -> Result<ScoredLexicon> {
    parse_lexicon(&read_text(path)?, terms, &origin(path))
}

/// Parses `label<TAB>score` lines. With `terms`, labels are resolved from
/// term text to id; without, labels are taken as ids.
pub fn parse_lexicon(text: &str, terms: Option<&[Term]>, origin: &str) -> Result<ScoredLexicon> {
    let ids: Option<HashMap<&str, &TermId>> =
        terms.map(|ts| ts.iter().map(|t| (t.text.as_str(), &t.id)).collect());
    let mut scores = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::record(origin, i + 1, msg);
        let (label, score) = line
            .rsplit_once('\t')
            .ok_or_else(|| bad("expected term<TAB>score".to_string()))?;
        let score: f64 = score
            .parse()
            .map_err(|_| bad(format!("bad score {score:?}")))?;
        if !(-1.0..=1.0).contains(&score) {
            return Err(bad(format!("score {score} outside [-1, 1]")));
        }
        let id = match &ids {
            Some(map) => (*map
                .get(label)
                .ok_or_else(|| bad(format!("term {label:?} not in the terms list")))?)
            .clone(),
            None => TermId::new(label).map_err(|e| bad(e.to_string()))?,
        };
        if !seen.insert(id.clone()) {
            return Err(bad(format!("term {label:?} listed twice")));
        }
        scores.push((id, score));
    }
    if scores.is_empty() {
        return Err(Error::invalid(format!("{origin}: empty lexicon")));
    }
    ScoredLexicon::from_scores(scores, LexiconMetadata::default())
}

// ---------------------------------------------------------------------------
// Latent scores (simulator ground truth)

pub fn write_latent(path: &Path, latent: &[(TermId, f64)]) -> Result<()> {
    let mut out = String::new();
    for (id, v) in latent {
        out.push_str(&format!("{id}\t{v}\n"));
    }
    write_bytes(path, out.as_bytes())
}

pub fn read_latent(path: &Path) -> Result<Vec<(TermId, f64)>> {
    let origin = origin(path);
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::record(&origin, i + 1, msg);
        let (id, v) = line.split_once('\t').ok_or_else(|| bad("expected id<TAB>value".into()))?;
        let v: f64 = v.parse().map_err(|_| bad(format!("bad value {v:?}")))?;
        out.push((TermId::new(id).map_err(|e| bad(e.to_string()))?, v));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Reports

pub fn write_rank_plot(path: &Path, rows: &[RankPlotRow]) -> Result<()> {
    write_bytes(path, &rank_plot_to_csv(rows))
}

pub fn rank_plot_to_csv(rows: &[RankPlotRow]) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(["rank", "score", "uniform_reference"]).expect("in-memory write");
    for r in rows {
        w.write_record([r.rank.to_string(), r.score.to_string(), r.uniform_reference.to_string()])
            .expect("in-memory write");
    }
    finish_csv(w)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn curve_to_csv(curve: &AgreementCurve) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(CURVE_HEADER).expect("in-memory write");
    for r in &curve.rows {
        w.write_record([
            r.d_center.to_string(),
            opt(r.mean_agreement),
            opt(r.pooled_agreement),
            opt(r.lower_bound),
            r.pairs.to_string(),
            r.annotations.to_string(),
        ])
        .expect("in-memory write");
    }
    finish_csv(w)
}

pub fn write_curve(path: &Path, curve: &AgreementCurve) -> Result<()> {
    write_bytes(path, &curve_to_csv(curve))
}

pub fn read_curve(path: &Path) -> Result<AgreementCurve> {
    let origin = origin(path);
    let text = read_text(path)?;
    let mut rdr = csv_reader(&text);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(&origin, e))?;
        if i == 0 {
            check_header(&origin, &rec, &CURVE_HEADER)?;
            continue;
        }
        let line = record_line(&rec);
        let bad = |msg: String| Error::record(&origin, line, msg);
        if rec.len() != 6 {
            return Err(bad(format!("expected 6 columns, found {}", rec.len())));
        }
        let real = |s: &str| -> Result<f64> { s.parse().map_err(|_| bad(format!("bad number {s:?}"))) };
        let opt_real = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                real(s).map(Some)
            }
        };
        let count = |s: &str| -> Result<u64> { s.parse().map_err(|_| bad(format!("bad count {s:?}"))) };
        rows.push(CurveRow {
            d_center: real(&rec[0])?,
            mean_agreement: opt_real(&rec[1])?,
            pooled_agreement: opt_real(&rec[2])?,
            lower_bound: opt_real(&rec[3])?,
            pairs: count(&rec[4])?,
            annotations: count(&rec[5])?,
        });
    }
    AgreementCurve::new(rows)
}

pub fn write_split_half(path: &Path, result: &SplitHalfResult) -> Result<()> {
    write_bytes(path, &split_half_to_csv(result))
}

pub fn split_half_to_csv(result: &SplitHalfResult) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(["iteration", "spearman", "pearson"]).expect("in-memory write");
    for (i, (s, p)) in result.spearman_values.iter().zip(&result.pearson_values).enumerate() {
        w.write_record([i.to_string(), s.to_string(), p.to_string()])
            .expect("in-memory write");
    }
    finish_csv(w)
}

pub fn write_subsample(path: &Path, curve: &SubsampleCurve) -> Result<()> {
    write_bytes(path, &subsample_to_csv(curve))
}

pub fn subsample_to_csv(curve: &SubsampleCurve) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(["k", "mean_spearman_vs_full", "min_spearman_vs_full", "repetitions"])
        .expect("in-memory write");
    for r in &curve.rows {
        w.write_record([
            r.k.to_string(),
            r.mean_spearman_vs_full.to_string(),
            r.min_spearman_vs_full.to_string(),
            r.repetitions.to_string(),
        ])
        .expect("in-memory write");
    }
    finish_csv(w)
}

/// Writes `bytes` to `path`, syncing before returning.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    write_bytes(path, bytes)
}
