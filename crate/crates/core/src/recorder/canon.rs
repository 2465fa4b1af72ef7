//! Canonicalization of SPARQL responses into [`ResultSnapshot`]s.
//!
//! Terms are rendered in N-Triples syntax. A solution row becomes one token
//! of `?var=term` pairs in variable order, joined by U+001F. Blank-node
//! labels are renamed by first occurrence after sorting the tokens with all
//! labels masked, which is exact whenever that sort has no ties between
//! differently labelled structures (e.g. acyclic graphs).

use std::collections::HashMap;
use std::fmt::Write as _;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde_json::Value;

use super::{QueryForm, QueryRegistration, RecorderError};
use crate::trace::ResultSnapshot;

const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
const FIELD_SEP: char = '\u{1f}';
const EMPTY_ROW: &str = "()";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Iri(String),
    Blank(String),
    Literal {
        value: String,
        lang: Option<String>,
        datatype: Option<String>,
    },
}

impl Term {
    fn literal(value: String, lang: Option<String>, datatype: Option<String>) -> Term {
        Term::Literal {
            value,
            lang: lang.map(|l| l.to_ascii_lowercase()),
            datatype: datatype.filter(|d| d != XSD_STRING),
        }
    }

    fn render(&self, blank: &dyn Fn(&str) -> String, out: &mut String) {
        match self {
            Term::Iri(iri) => {
                let _ = write!(out, "<{iri}>");
            }
            Term::Blank(label) => out.push_str(&blank(label)),
            Term::Literal {
                value,
                lang,
                datatype,
            } => {
                out.push('"');
                for c in value.chars() {
                    match c {
                        '\\' => out.push_str("\\\\"),
                        '"' => out.push_str("\\\""),
                        '\n' => out.push_str("\\n"),
                        '\r' => out.push_str("\\r"),
                        '\t' => out.push_str("\\t"),
                        c => out.push(c),
                    }
                }
                out.push('"');
                if let Some(lang) = lang {
                    let _ = write!(out, "@{lang}");
                } else if let Some(dt) = datatype {
                    let _ = write!(out, "^^<{dt}>");
                }
            }
        }
    }
}

/// A canonicalizable unit: one solution row or one triple.
type Item = Vec<(Option<String>, Term)>;

fn render_item(item: &Item, blank: &dyn Fn(&str) -> String, triple: bool) -> String {
    if item.is_empty() {
        return EMPTY_ROW.to_owned();
    }
    let mut out = String::new();
    for (k, (var, term)) in item.iter().enumerate() {
        if k > 0 {
            out.push(if triple { ' ' } else { FIELD_SEP });
        }
        if let Some(var) = var {
            let _ = write!(out, "?{var}=");
        }
        term.render(blank, &mut out);
    }
    if triple {
        out.push_str(" .");
    }
    out
}

/// Renders items to tokens with blank nodes renamed canonically. When
/// `keep_order` is set the returned tokens follow the input order (the
/// renaming still derives from the sorted view).
fn canonical_tokens(items: &[Item], triple: bool, keep_order: bool) -> Vec<String> {
    let masked: Vec<String> = items
        .iter()
        .map(|it| render_item(it, &|_| "_:".to_owned(), triple))
        .collect();
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| masked[a].cmp(&masked[b]).then(items[a].cmp(&items[b])));

    let mut names: HashMap<&str, String> = HashMap::new();
    for &idx in &order {
        for (_, term) in &items[idx] {
            if let Term::Blank(label) = term {
                let next = names.len();
                names
                    .entry(label.as_str())
                    .or_insert_with(|| format!("_:b{next}"));
            }
        }
    }
    let blank = |label: &str| names[label].clone();
    let emit = |idx: usize| render_item(&items[idx], &blank, triple);
    if keep_order {
        (0..items.len()).map(emit).collect()
    } else {
        order.into_iter().map(emit).collect()
    }
}

/// Parsed SPARQL response body.
#[derive(Debug, Clone, PartialEq)]
pub enum RawResponse {
    Boolean(bool),
    Solutions(Vec<Vec<(String, Term)>>),
    Triples(Vec<[Term; 3]>),
}

/// Response serializations the recorder understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseFormat {
    Json,
    Xml,
    NTriples,
}

impl ResponseFormat {
    /// Picks the parser from the `Content-Type` header, sniffing the body
    /// when the header is missing or unfamiliar.
    pub fn detect(content_type: Option<&str>, body: &str) -> ResponseFormat {
        let ct = content_type.unwrap_or("").to_ascii_lowercase();
        if ct.contains("json") {
            ResponseFormat::Json
        } else if ct.contains("xml") {
            ResponseFormat::Xml
        } else if ct.contains("n-triples") || ct.contains("ntriples") || ct.starts_with("text/plain") {
            ResponseFormat::NTriples
        } else {
            match body.trim_start().chars().next() {
                Some('{') => ResponseFormat::Json,
                Some('<') if body.trim_start().starts_with("<?xml") || body.contains("<sparql") => {
                    ResponseFormat::Xml
                }
                _ => ResponseFormat::NTriples,
            }
        }
    }
}

fn malformed(reason: impl Into<String>) -> RecorderError {
    RecorderError::MalformedResponse(reason.into())
}

pub fn parse_response(body: &str, format: ResponseFormat) -> Result<RawResponse, RecorderError> {
    match format {
        ResponseFormat::Json => parse_json(body),
        ResponseFormat::Xml => parse_xml(body),
        ResponseFormat::NTriples => parse_ntriples(body).map(RawResponse::Triples),
    }
}

/// Turns a raw response body into the snapshot for `reg`.
pub fn canonicalize_result(
    body: &str,
    content_type: Option<&str>,
    reg: &QueryRegistration,
) -> Result<ResultSnapshot, RecorderError> {
    let raw = parse_response(body, ResponseFormat::detect(content_type, body))?;
    snapshot_from_raw(raw, reg)
}

pub fn snapshot_from_raw(raw: RawResponse, reg: &QueryRegistration) -> Result<ResultSnapshot, RecorderError> {
    let snapshot = match (reg.form, raw) {
        (QueryForm::Ask, RawResponse::Boolean(b)) => ResultSnapshot::ask(b),
        (QueryForm::Select, RawResponse::Solutions(rows)) => {
            let items: Vec<Item> = rows
                .into_iter()
                .map(|mut row| {
                    row.sort();
                    row.into_iter().map(|(v, t)| (Some(v), t)).collect()
                })
                .collect();
            let tokens = canonical_tokens(&items, false, reg.ordered);
            if reg.ordered {
                ResultSnapshot::ordered(tokens)
            } else {
                ResultSnapshot::unordered(tokens)
            }
            .map_err(|e| malformed(e.to_string()))?
        }
        (QueryForm::Construct | QueryForm::Describe, RawResponse::Triples(triples)) => {
            let items: Vec<Item> = triples
                .into_iter()
                .map(|t| t.into_iter().map(|term| (None, term)).collect())
                .collect();
            ResultSnapshot::unordered(canonical_tokens(&items, true, false))
                .map_err(|e| malformed(e.to_string()))?
        }
        (form, _) => {
            return Err(malformed(format!(
                "response kind does not match a {} query",
                form.name()
            )))
        }
    };
    Ok(snapshot)
}

fn json_term(v: &Value) -> Result<Term, RecorderError> {
    let kind = v.get("type").and_then(Value::as_str).ok_or_else(|| malformed("binding without type"))?;
    let value = v
        .get("value")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("binding without value"))?
        .to_owned();
    let attr = |k: &str| v.get(k).and_then(Value::as_str).map(str::to_owned);
    match kind {
        "uri" => Ok(Term::Iri(value)),
        "bnode" => Ok(Term::Blank(value)),
        "literal" | "typed-literal" => Ok(Term::literal(value, attr("xml:lang"), attr("datatype"))),
        other => Err(malformed(format!("unknown term type {other:?}"))),
    }
}

fn parse_json(body: &str) -> Result<RawResponse, RecorderError> {
    let doc: Value = serde_json::from_str(body).map_err(|e| malformed(format!("invalid JSON: {e}")))?;
    if let Some(b) = doc.get("boolean") {
        return b
            .as_bool()
            .map(RawResponse::Boolean)
            .ok_or_else(|| malformed("boolean result is not a bool"));
    }
    let bindings = doc
        .pointer("/results/bindings")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("missing results.bindings"))?;
    let rows = bindings
        .iter()
        .map(|row| {
            row.as_object()
                .ok_or_else(|| malformed("solution is not an object"))?
                .iter()
                .map(|(var, term)| Ok((var.clone(), json_term(term)?)))
                .collect::<Result<Vec<_>, RecorderError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RawResponse::Solutions(rows))
}

fn xml_attr(e: &BytesStart<'_>, name: &str) -> Result<Option<String>, RecorderError> {
    e.try_get_attribute(name)
        .map_err(|err| malformed(format!("bad XML attribute: {err}")))?
        .map(|a| {
            a.unescape_value()
                .map(|v| v.into_owned())
                .map_err(|err| malformed(format!("bad XML attribute: {err}")))
        })
        .transpose()
}

fn parse_xml(body: &str) -> Result<RawResponse, RecorderError> {
    #[derive(PartialEq)]
    enum TermKind {
        Uri,
        Bnode,
        Literal,
    }

    let mut reader = Reader::from_str(body);
    let mut rows: Vec<Vec<(String, Term)>> = Vec::new();
    let mut boolean: Option<bool> = None;
    let mut in_boolean = false;
    let mut saw_results = false;
    let mut binding: Option<String> = None;
    let mut term: Option<(TermKind, Option<String>, Option<String>)> = None;
    let mut text = String::new();

    loop {
        let event = reader
            .read_event()
            .map_err(|e| malformed(format!("invalid XML: {e}")))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let empty = matches!(event, Event::Empty(_));
                match e.local_name().as_ref() {
                    b"results" => saw_results = true,
                    b"result" => rows.push(Vec::new()),
                    b"binding" => binding = xml_attr(e, "name")?,
                    b"boolean" => in_boolean = true,
                    b"uri" => term = Some((TermKind::Uri, None, None)),
                    b"bnode" => term = Some((TermKind::Bnode, None, None)),
                    b"literal" => {
                        term = Some((
                            TermKind::Literal,
                            xml_attr(e, "xml:lang")?,
                            xml_attr(e, "datatype")?,
                        ))
                    }
                    _ => {}
                }
                text.clear();
                if empty && matches!(e.local_name().as_ref(), b"uri" | b"bnode" | b"literal") {
                    push_xml_term(&mut rows, &binding, term.take(), String::new())?;
                }
            }
            Event::Text(t) => text.push_str(&t.unescape().map_err(|e| malformed(format!("invalid XML text: {e}")))?),
            Event::CData(t) => text.push_str(&String::from_utf8_lossy(&t.into_inner())),
            Event::End(ref e) => match e.local_name().as_ref() {
                b"uri" | b"bnode" | b"literal" => {
                    push_xml_term(&mut rows, &binding, term.take(), std::mem::take(&mut text))?;
                }
                b"binding" => binding = None,
                b"boolean" => {
                    in_boolean = false;
                    boolean = Some(match text.trim() {
                        "true" | "1" => true,
                        "false" | "0" => false,
                        other => return Err(malformed(format!("bad boolean {other:?}"))),
                    });
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    if in_boolean {
        return Err(malformed("unterminated boolean"));
    }

    fn push_xml_term(
        rows: &mut [Vec<(String, Term)>],
        binding: &Option<String>,
        term: Option<(TermKind, Option<String>, Option<String>)>,
        value: String,
    ) -> Result<(), RecorderError> {
        let (Some(var), Some((kind, lang, dt)), Some(row)) = (binding, term, rows.last_mut()) else {
            return Err(malformed("term outside a binding"));
        };
        let term = match kind {
            TermKind::Uri => Term::Iri(value.trim().to_owned()),
            TermKind::Bnode => Term::Blank(value.trim().to_owned()),
            TermKind::Literal => Term::literal(value, lang, dt),
        };
        row.push((var.clone(), term));
        Ok(())
    }

    match (boolean, saw_results) {
        (Some(b), _) => Ok(RawResponse::Boolean(b)),
        (None, true) => Ok(RawResponse::Solutions(rows)),
        (None, false) => Err(malformed("XML document has neither results nor boolean")),
    }
}

struct NtCursor<'a> {
    rest: &'a str,
    line: usize,
}

impl<'a> NtCursor<'a> {
    fn err(&self, reason: &str) -> RecorderError {
        malformed(format!("N-Triples line {}: {reason}", self.line))
    }

    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start_matches([' ', '\t']);
    }

    fn take_until(&mut self, end: char) -> Result<&'a str, RecorderError> {
        let idx = self.rest.find(end).ok_or_else(|| self.err("unterminated term"))?;
        let (head, tail) = self.rest.split_at(idx);
        self.rest = &tail[end.len_utf8()..];
        Ok(head)
    }

    fn label(&mut self) -> &'a str {
        let end = self
            .rest
            .find(|c: char| c.is_whitespace())
            .unwrap_or(self.rest.len());
        let (head, tail) = self.rest.split_at(end);
        self.rest = tail;
        head
    }

    fn term(&mut self) -> Result<Term, RecorderError> {
        self.skip_ws();
        if let Some(r) = self.rest.strip_prefix('<') {
            self.rest = r;
            return Ok(Term::Iri(unescape_nt(self.take_until('>')?, self)?));
        }
        if let Some(r) = self.rest.strip_prefix("_:") {
            self.rest = r;
            let label = self.label();
            if label.is_empty() {
                return Err(self.err("empty blank node label"));
            }
            return Ok(Term::Blank(label.to_owned()));
        }
        if let Some(r) = self.rest.strip_prefix('"') {
            let mut end = None;
            let mut escaped = false;
            for (i, c) in r.char_indices() {
                match (escaped, c) {
                    (true, _) => escaped = false,
                    (false, '\\') => escaped = true,
                    (false, '"') => {
                        end = Some(i);
                        break;
                    }
                    _ => {}
                }
            }
            let end = end.ok_or_else(|| self.err("unterminated literal"))?;
            let value = unescape_nt(&r[..end], self)?;
            self.rest = &r[end + 1..];
            let (mut lang, mut datatype) = (None, None);
            if let Some(r) = self.rest.strip_prefix('@') {
                self.rest = r;
                lang = Some(self.label().to_owned());
            } else if let Some(r) = self.rest.strip_prefix("^^<") {
                self.rest = r;
                datatype = Some(self.take_until('>')?.to_owned());
            }
            return Ok(Term::literal(value, lang, datatype));
        }
        Err(self.err("expected IRI, blank node or literal"))
    }
}

fn unescape_nt(s: &str, cur: &NtCursor<'_>) -> Result<String, RecorderError> {
    if !s.contains('\\') {
        return Ok(s.to_owned());
    }
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('b') => out.push('\u{8}'),
            Some('f') => out.push('\u{c}'),
            Some('"') => out.push('"'),
            Some('\'') => out.push('\''),
            Some('\\') => out.push('\\'),
            Some(u @ ('u' | 'U')) => {
                let len = if u == 'u' { 4 } else { 8 };
                let hex: String = chars.by_ref().take(len).collect();
                let ch = u32::from_str_radix(&hex, 16)
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| cur.err("bad unicode escape"))?;
                out.push(ch);
            }
            _ => return Err(cur.err("bad escape")),
        }
    }
    Ok(out)
}

pub fn parse_ntriples(body: &str) -> Result<Vec<[Term; 3]>, RecorderError> {
    let mut triples = Vec::new();
    for (idx, line) in body.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut cur = NtCursor {
            rest: trimmed,
            line: idx + 1,
        };
        let s = cur.term()?;
        let p = cur.term()?;
        let o = cur.term()?;
        cur.skip_ws();
        if !cur.rest.starts_with('.') {
            return Err(cur.err("expected '.'"));
        }
        triples.push([s, p, o]);
    }
    Ok(triples)
}
