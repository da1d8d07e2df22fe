//! Loading bulletins, the tag catalog and the crop-usage thesaurus into a
//! uniform document model.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{canonical, collapse_ws, decode_bytes, normalize_newlines, DecodeError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("encoding error in {path}: undecodable byte 0x{byte:02x} at offset {offset}")]
    Encoding { path: String, offset: usize, byte: u8 },
    #[error("xml parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("schema error in {path} (record {line}): {message}")]
    Schema { path: String, line: usize, message: String },
    #[error("thesaurus {0} contains no concepts")]
    EmptyThesaurus(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceKind {
    #[serde(rename = "bsv-xml")]
    BsvXml,
    #[serde(rename = "bsv-ocr")]
    BsvOcr,
    #[serde(rename = "tweet")]
    Tweet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagCategory {
    Bioagressor,
    Disease,
    Crop,
}

impl TagCategory {
    pub fn parse(token: &str) -> Option<Self> {
        match canonical(token).as_str() {
            "bioagressor" => Some(Self::Bioagressor),
            "disease" => Some(Self::Disease),
            "crop" => Some(Self::Crop),
            _ => None,
        }
    }
}

impl fmt::Display for TagCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bioagressor => "bioagressor",
            Self::Disease => "disease",
            Self::Crop => "crop",
        })
    }
}

/// A document-level tag. The name is always held in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TagRef {
    pub name: String,
    pub category: TagCategory,
}

impl TagRef {
    /// Returns `None` when the canonical name is empty.
    pub fn new(name: &str, category: TagCategory) -> Option<Self> {
        let name = canonical(name);
        if name.is_empty() {
            None
        } else {
            Some(Self { name, category })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub source_kind: SourceKind,
    pub text: String,
    #[serde(default)]
    pub paragraphs: Vec<String>,
    #[serde(default)]
    pub tags: BTreeSet<TagRef>,
    /// Set when no usable text was extracted.
    #[serde(default)]
    pub empty: bool,
}

impl RawDocument {
    pub fn from_paragraphs(id: &str, source_kind: SourceKind, paragraphs: Vec<String>) -> Self {
        let text = paragraphs.join("\n");
        Self {
            id: id.to_owned(),
            source_kind,
            empty: paragraphs.is_empty(),
            text,
            paragraphs,
            tags: BTreeSet::new(),
        }
    }

    pub fn from_text(id: &str, source_kind: SourceKind, text: String) -> Self {
        Self {
            id: id.to_owned(),
            source_kind,
            empty: text.trim().is_empty(),
            text,
            paragraphs: Vec::new(),
            tags: BTreeSet::new(),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, IngestError> {
    fs::read(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            IngestError::NotFound(path.display().to_string())
        } else {
            IngestError::Io { path: path.display().to_string(), source: e }
        }
    })
}

fn read_text(path: &Path) -> Result<String, IngestError> {
    let bytes = read_file(path)?;
    decode_bytes(&bytes).map_err(|DecodeError::Undecodable { offset, byte }| IngestError::Encoding {
        path: path.display().to_string(),
        offset,
        byte,
    })
}

/// Load an OCR-processed plain-text bulletin.
pub fn load_plaintext_bulletin(path: &Path, id: &str) -> Result<RawDocument, IngestError> {
    let text = normalize_newlines(&read_text(path)?);
    Ok(RawDocument::from_text(id, SourceKind::BsvOcr, text))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XmlExtractConfig {
    /// Local element names treated as paragraphs (compared case-insensitively).
    pub paragraph_elements: Vec<String>,
    /// Minimum length in characters of a leaf text node used by the fallback.
    pub fallback_min_chars: usize,
}

impl Default for XmlExtractConfig {
    fn default() -> Self {
        Self {
            paragraph_elements: vec!["p".into(), "paragraphe".into(), "texte".into()],
            fallback_min_chars: 20,
        }
    }
}

pub fn load_xml_bulletin(path: &Path, id: &str) -> Result<RawDocument, IngestError> {
    load_xml_bulletin_with(path, id, &XmlExtractConfig::default())
}

pub fn load_xml_bulletin_with(
    path: &Path,
    id: &str,
    cfg: &XmlExtractConfig,
) -> Result<RawDocument, IngestError> {
    let xml = read_text(path)?;
    let paragraphs = extract_paragraphs(&xml, cfg).map_err(|message| IngestError::Parse {
        path: path.display().to_string(),
        message,
    })?;
    Ok(RawDocument::from_paragraphs(id, SourceKind::BsvXml, paragraphs))
}

struct OpenElement {
    /// Index into `slots` when this element is a paragraph element.
    slot: Option<usize>,
    has_child: bool,
    leaf_text: String,
}

/// Paragraph text in document order. Each text node belongs to its innermost
/// enclosing paragraph element; when no paragraph element occurs, leaf text
/// nodes of at least `fallback_min_chars` characters are used instead.
pub fn extract_paragraphs(xml: &str, cfg: &XmlExtractConfig) -> Result<Vec<String>, String> {
    let wanted: Vec<String> = cfg.paragraph_elements.iter().map(|s| s.to_lowercase()).collect();
    let mut reader = Reader::from_str(xml);
    reader.config_mut().check_end_names = true;

    let mut stack: Vec<OpenElement> = Vec::new();
    let mut slots: Vec<String> = Vec::new();
    let mut fallback: Vec<String> = Vec::new();
    let mut saw_root = false;

    let push_text = |stack: &mut Vec<OpenElement>, slots: &mut Vec<String>, text: &str| {
        if let Some(top) = stack.last_mut() {
            top.leaf_text.push_str(text);
        }
        if let Some(slot) = stack.iter().rev().find_map(|e| e.slot) {
            slots[slot].push_str(text);
        }
    };

    loop {
        let event = reader
            .read_event()
            .map_err(|e| format!("at byte {}: {e}", reader.buffer_position()))?;
        match event {
            Event::Start(start) => {
                saw_root = true;
                if let Some(parent) = stack.last_mut() {
                    parent.has_child = true;
                }
                let name = String::from_utf8_lossy(start.local_name().as_ref()).to_lowercase();
                let slot = wanted.contains(&name).then(|| {
                    slots.push(String::new());
                    slots.len() - 1
                });
                stack.push(OpenElement { slot, has_child: false, leaf_text: String::new() });
            }
            Event::Empty(_) => {
                saw_root = true;
                if let Some(parent) = stack.last_mut() {
                    parent.has_child = true;
                }
            }
            Event::End(_) => {
                let closed = stack.pop().ok_or_else(|| "unbalanced end tag".to_string())?;
                if !closed.has_child {
                    let leaf = collapse_ws(&closed.leaf_text);
                    if leaf.chars().count() >= cfg.fallback_min_chars {
                        fallback.push(leaf);
                    }
                }
            }
            Event::Text(t) => {
                let raw = t.unescape_with(resolve_entity).map_err(|e| e.to_string())?;
                push_text(&mut stack, &mut slots, &raw);
            }
            Event::CData(c) => {
                let raw = String::from_utf8_lossy(&c).into_owned();
                push_text(&mut stack, &mut slots, &raw);
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(format!("unexpected end of input with {} unclosed element(s)", stack.len()));
    }
    if !saw_root {
        return Err("no root element".into());
    }

    let primary: Vec<String> = slots.iter().map(|s| collapse_ws(s)).filter(|s| !s.is_empty()).collect();
    if slots.is_empty() {
        Ok(fallback)
    } else {
        Ok(primary)
    }
}

/// HTML named entities that show up in hand-written bulletin XML.
fn resolve_entity(name: &str) -> Option<&'static str> {
    if let Some(s) = quick_xml::escape::resolve_predefined_entity(name) {
        return Some(s);
    }
    Some(match name {
        "nbsp" => "\u{a0}",
        "eacute" => "é",
        "egrave" => "è",
        "ecirc" => "ê",
        "euml" => "ë",
        "agrave" => "à",
        "acirc" => "â",
        "ccedil" => "ç",
        "icirc" => "î",
        "iuml" => "ï",
        "ocirc" => "ô",
        "ugrave" => "ù",
        "ucirc" => "û",
        "uuml" => "ü",
        "oelig" => "œ",
        "Eacute" => "É",
        "Egrave" => "È",
        "Agrave" => "À",
        "Ccedil" => "Ç",
        "laquo" => "«",
        "raquo" => "»",
        "rsquo" => "\u{2019}",
        "lsquo" => "\u{2018}",
        "deg" => "°",
        "euro" => "€",
        _ => return None,
    })
}

/// Per-document tag assignment. Ordered maps keep loading reproducible.
pub type TagCatalog = BTreeMap<String, BTreeSet<TagRef>>;

#[derive(Debug, Deserialize)]
struct TagRecord {
    doc_id: String,
    #[serde(default)]
    tag: String,
    #[serde(default)]
    category: String,
}

/// Load a tag catalog from CSV (`doc_id,tag,category` header) or JSONL.
///
/// A record with an empty tag and category registers the document with no
/// tags. Duplicate `(doc, tag)` pairs collapse.
pub fn load_tag_catalog(path: &Path) -> Result<TagCatalog, IngestError> {
    let text = read_text(path)?;
    let pstr = path.display().to_string();
    let records = if is_jsonl(path, &text) {
        parse_jsonl::<TagRecord>(&text, &pstr)?
    } else {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut out = Vec::new();
        for (i, rec) in rdr.deserialize::<TagRecord>().enumerate() {
            let rec = rec.map_err(|e| IngestError::Schema {
                path: pstr.clone(),
                line: i + 2,
                message: e.to_string(),
            })?;
            out.push((i + 2, rec));
        }
        out
    };

    let mut catalog = TagCatalog::new();
    for (line, rec) in records {
        let doc_id = rec.doc_id.trim().to_owned();
        if doc_id.is_empty() {
            return Err(IngestError::Schema { path: pstr, line, message: "empty doc_id".into() });
        }
        let entry = catalog.entry(doc_id).or_default();
        if rec.tag.trim().is_empty() && rec.category.trim().is_empty() {
            continue;
        }
        let category = TagCategory::parse(&rec.category).ok_or_else(|| IngestError::Schema {
            path: pstr.clone(),
            line,
            message: format!("unknown tag category {:?}", rec.category),
        })?;
        let tag = TagRef::new(&rec.tag, category).ok_or_else(|| IngestError::Schema {
            path: pstr.clone(),
            line,
            message: "empty tag name".into(),
        })?;
        entry.insert(tag);
    }
    Ok(catalog)
}

/// Crop-usage concept labels in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thesaurus {
    pub concepts: BTreeSet<String>,
}

#[derive(Debug, Deserialize)]
struct ConceptRecord {
    label: String,
}

/// Load a thesaurus from plain text (one concept per line) or JSONL with a
/// `label` field.
pub fn load_thesaurus(path: &Path) -> Result<Thesaurus, IngestError> {
    let text = read_text(path)?;
    let pstr = path.display().to_string();
    let labels: Vec<String> = if is_jsonl(path, &text) {
        parse_jsonl::<ConceptRecord>(&text, &pstr)?.into_iter().map(|(_, r)| r.label).collect()
    } else {
        text.lines().map(str::to_owned).collect()
    };
    let concepts: BTreeSet<String> =
        labels.iter().map(|l| canonical(l)).filter(|c| !c.is_empty()).collect();
    if concepts.is_empty() {
        return Err(IngestError::EmptyThesaurus(pstr));
    }
    Ok(Thesaurus { concepts })
}

fn is_jsonl(path: &Path, text: &str) -> bool {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") | Some("ndjson") => true,
        Some("csv") | Some("txt") => false,
        _ => text.trim_start().starts_with('{'),
    }
}

fn parse_jsonl<T: serde::de::DeserializeOwned>(
    text: &str,
    path: &str,
) -> Result<Vec<(usize, T)>, IngestError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map(|r| (i + 1, r)).map_err(|e| IngestError::Schema {
                path: path.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Attach catalog tags to documents that have an entry.
pub fn attach_tags(docs: &mut [RawDocument], catalog: &TagCatalog) {
    for doc in docs {
        if let Some(tags) = catalog.get(&doc.id) {
            doc.tags.extend(tags.iter().cloned());
        }
    }
}

pub fn write_corpus_jsonl<W: Write>(mut w: W, docs: &[RawDocument]) -> io::Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut w, doc)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_corpus_jsonl<R: BufRead>(r: R) -> Result<Vec<RawDocument>, IngestError> {
    let mut docs = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| IngestError::Io { path: "<corpus>".into(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: RawDocument = serde_json::from_str(&line).map_err(|e| IngestError::Schema {
            path: "<corpus>".into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(doc.id.clone()) {
            return Err(IngestError::Schema {
                path: "<corpus>".into(),
                line: i + 1,
                message: format!("duplicate document id {:?}", doc.id),
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_file(name: &str, bytes: &[u8]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        fs::File::create(&path).unwrap().write_all(bytes).unwrap();
        (dir, path)
    }

    #[test]
    fn plaintext_normalizes_line_endings() {
        let (_d, p) = tmp_file("a.txt", b"a\r\nb");
        let doc = load_plaintext_bulletin(&p, "d1").unwrap();
        assert_eq!(doc.text, "a\nb");
        assert_eq!(doc.source_kind, SourceKind::BsvOcr);
        assert!(doc.paragraphs.is_empty());
        assert!(!doc.empty);
    }

    #[test]
    fn plaintext_empty_file_is_flagged() {
        let (_d, p) = tmp_file("a.txt", b"");
        let doc = load_plaintext_bulletin(&p, "d1").unwrap();
        assert_eq!(doc.text, "");
        assert!(doc.empty);
    }

    #[test]
    fn plaintext_missing_and_undecodable() {
        let err = load_plaintext_bulletin(Path::new("/nonexistent/x.txt"), "x").unwrap_err();
        assert!(matches!(err, IngestError::NotFound(_)));
        let (_d, p) = tmp_file("b.txt", b"caf\x81\xe9");
        assert!(matches!(load_plaintext_bulletin(&p, "b"), Err(IngestError::Encoding { .. })));
    }

    #[test]
    fn plaintext_latin1_fallback() {
        let (_d, p) = tmp_file("c.txt", b"bl\xe9 d'hiver");
        assert_eq!(load_plaintext_bulletin(&p, "c").unwrap().text, "blé d'hiver");
    }

    #[test]
    fn xml_two_paragraphs() {
        let (_d, p) = tmp_file("a.xml", b"<doc><p>a</p><p>b</p></doc>");
        let doc = load_xml_bulletin(&p, "x").unwrap();
        assert_eq!(doc.paragraphs, vec!["a", "b"]);
        assert_eq!(doc.text, "a\nb");
        assert_eq!(doc.source_kind, SourceKind::BsvXml);
    }

    #[test]
    fn xml_inline_markup_is_stripped() {
        let cfg = XmlExtractConfig::default();
        let paras = extract_paragraphs("<doc><p>x <b>y</b></p></doc>", &cfg).unwrap();
        assert_eq!(paras, vec!["x y"]);
    }

    #[test]
    fn xml_nested_paragraph_elements_use_innermost() {
        let cfg = XmlExtractConfig::default();
        let paras =
            extract_paragraphs("<doc><texte>intro<p>un</p><p>deux</p></texte></doc>", &cfg).unwrap();
        assert_eq!(paras, vec!["intro", "un", "deux"]);
    }

    #[test]
    fn xml_drops_empty_paragraphs_and_flags_empty_docs() {
        let cfg = XmlExtractConfig::default();
        let paras = extract_paragraphs("<doc><p>  </p><p>a</p><p/></doc>", &cfg).unwrap();
        assert_eq!(paras, vec!["a"]);
        let (_d, p) = tmp_file("e.xml", b"<doc><p> </p></doc>");
        let doc = load_xml_bulletin(&p, "e").unwrap();
        assert!(doc.empty);
        assert!(doc.paragraphs.is_empty());
    }

    #[test]
    fn xml_fallback_to_long_leaf_text() {
        let cfg = XmlExtractConfig::default();
        let xml = "<bulletin><titre>court</titre><corps><ligne>les captures de pyrales augmentent</ligne></corps></bulletin>";
        let paras = extract_paragraphs(xml, &cfg).unwrap();
        assert_eq!(paras, vec!["les captures de pyrales augmentent"]);
    }

    #[test]
    fn xml_entities_and_cdata() {
        let cfg = XmlExtractConfig::default();
        let paras =
            extract_paragraphs("<d><p>bl&eacute; &amp; ma&#239;s</p><p><![CDATA[a < b]]></p></d>", &cfg)
                .unwrap();
        assert_eq!(paras, vec!["blé & maïs", "a < b"]);
    }

    #[test]
    fn xml_truncated_is_parse_error() {
        let (_d, p) = tmp_file("t.xml", b"<doc><p>a</p><p>b");
        assert!(matches!(load_xml_bulletin(&p, "t"), Err(IngestError::Parse { .. })));
        let (_d2, p2) = tmp_file("u.xml", b"<doc><p>a</p");
        assert!(matches!(load_xml_bulletin(&p2, "u"), Err(IngestError::Parse { .. })));
        let (_d3, p3) = tmp_file("v.xml", b"<doc><p>a</q></doc>");
        assert!(matches!(load_xml_bulletin(&p3, "v"), Err(IngestError::Parse { .. })));
    }

    #[test]
    fn tag_catalog_csv() {
        let csv = "doc_id,tag,category\ndoc1,Pyrale,bioagressor\ndoc1,pyrale ,bioagressor\ndoc2,mildiou,disease\ndoc3,,\n";
        let (_d, p) = tmp_file("tags.csv", csv.as_bytes());
        let cat = load_tag_catalog(&p).unwrap();
        assert_eq!(cat["doc1"].len(), 1);
        assert!(cat["doc1"].contains(&TagRef::new("pyrale", TagCategory::Bioagressor).unwrap()));
        assert_eq!(cat["doc2"].iter().next().unwrap().category, TagCategory::Disease);
        assert!(cat["doc3"].is_empty());
        assert_eq!(load_tag_catalog(&p).unwrap(), cat);
    }

    #[test]
    fn tag_catalog_jsonl_and_unknown_category() {
        let jsonl = "{\"doc_id\":\"d\",\"tag\":\"blé\",\"category\":\"crop\"}\n";
        let (_d, p) = tmp_file("tags.jsonl", jsonl.as_bytes());
        let cat = load_tag_catalog(&p).unwrap();
        assert_eq!(cat["d"].iter().next().unwrap().category, TagCategory::Crop);

        let bad = "doc_id,tag,category\ndoc1,chiendent,weed\n";
        let (_d2, p2) = tmp_file("bad.csv", bad.as_bytes());
        match load_tag_catalog(&p2) {
            Err(IngestError::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn thesaurus_canonicalizes_and_dedups() {
        let (_d, p) = tmp_file("t.txt", "Blé\nblé \n\n".as_bytes());
        let th = load_thesaurus(&p).unwrap();
        assert_eq!(th.concepts.iter().collect::<Vec<_>>(), vec!["blé"]);
        let (_d2, p2) = tmp_file("t2.txt", b"ble\nmais\norge\n");
        assert_eq!(load_thesaurus(&p2).unwrap().concepts.len(), 3);
        let (_d3, p3) = tmp_file("t3.jsonl", "{\"label\":\"Colza\"}\n".as_bytes());
        assert!(load_thesaurus(&p3).unwrap().concepts.contains("colza"));
        let (_d4, p4) = tmp_file("t4.txt", b"");
        assert!(matches!(load_thesaurus(&p4), Err(IngestError::EmptyThesaurus(_))));
    }

    #[test]
    fn corpus_jsonl_rejects_duplicate_ids() {
        let d = RawDocument::from_text("a", SourceKind::BsvOcr, "x".into());
        let mut buf = Vec::new();
        write_corpus_jsonl(&mut buf, &[d.clone(), d]).unwrap();
        assert!(read_corpus_jsonl(buf.as_slice()).is_err());
    }
}
