//! Annotated-corpus XML: `<corpus>` → `<text>` → `<sentence>` → `<wf>` /
//! `<instance id lemma pos>`.

use super::{AnnotatedInstance, CorpusError, Pos};
use std::collections::BTreeSet;
use std::io::{Read, Write};
use xml::attribute::OwnedAttribute;
use xml::common::Position;
use xml::reader::{EventReader, XmlEvent};

#[derive(PartialEq)]
enum Where {
    Start,
    Corpus,
    Text,
    Sentence,
    Token {
        instance: Option<(String, String, Pos)>,
    },
    Done,
}

/// Parses an annotated document. Each `<instance>` yields one
/// [`AnnotatedInstance`] holding its full surrounding sentence; `gold_keys`
/// is left empty for the key file to fill.
pub fn parse_annotated_xml(reader: impl Read) -> Result<Vec<AnnotatedInstance>, CorpusError> {
    let mut parser = EventReader::new(reader);
    let mut state = Where::Start;
    let mut instances: Vec<AnnotatedInstance> = Vec::new();
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();
    // The sentence being accumulated: surface tokens plus the instances
    // whose windows it will become.
    let mut tokens: Vec<String> = Vec::new();
    let mut pending: Vec<(usize, String, String, Pos)> = Vec::new();
    let mut text_buf = String::new();

    loop {
        let event = parser.next().map_err(|e| CorpusError::XmlSyntax {
            line: e.position().row + 1,
            msg: e.msg().to_string(),
        })?;
        let line = parser.position().row + 1; // TextPosition rows are 0-based
        match event {
            XmlEvent::StartDocument { .. } | XmlEvent::ProcessingInstruction { .. } => {}
            XmlEvent::Comment(_) | XmlEvent::Whitespace(_) => {}
            XmlEvent::StartElement {
                name, attributes, ..
            } => {
                let element = name.local_name;
                state = match (state, element.as_str()) {
                    (Where::Start, "corpus") => Where::Corpus,
                    (Where::Corpus, "text") => Where::Text,
                    (Where::Text, "sentence") => {
                        tokens.clear();
                        pending.clear();
                        Where::Sentence
                    }
                    (Where::Sentence, "wf") => {
                        text_buf.clear();
                        Where::Token { instance: None }
                    }
                    (Where::Sentence, "instance") => {
                        let id = require_attr(&attributes, "instance", "id", line)?;
                        if !seen_ids.insert(id.clone()) {
                            return Err(CorpusError::XmlDuplicateInstance { id, line });
                        }
                        let lemma = require_attr(&attributes, "instance", "lemma", line)?;
                        let pos = Pos::parse(&require_attr(&attributes, "instance", "pos", line)?);
                        text_buf.clear();
                        Where::Token {
                            instance: Some((id, lemma, pos)),
                        }
                    }
                    _ => return Err(CorpusError::XmlUnexpectedElement { element, line }),
                };
            }
            XmlEvent::Characters(s) => match state {
                Where::Token { .. } => text_buf.push_str(&s),
                _ if s.trim().is_empty() => {}
                _ => {
                    return Err(CorpusError::XmlSyntax {
                        line,
                        msg: format!("unexpected text \"{}\"", s.trim()),
                    })
                }
            },
            XmlEvent::CData(s) => {
                if let Where::Token { .. } = state {
                    text_buf.push_str(&s);
                }
            }
            XmlEvent::EndElement { .. } => {
                state = match state {
                    Where::Token { instance } => {
                        let surface = text_buf.trim();
                        if surface.is_empty() {
                            return Err(CorpusError::XmlSyntax {
                                line,
                                msg: "empty token element".to_string(),
                            });
                        }
                        if let Some((id, lemma, pos)) = instance {
                            pending.push((tokens.len(), id, lemma, pos));
                        }
                        tokens.push(surface.to_string());
                        Where::Sentence
                    }
                    Where::Sentence => {
                        for (target_position, instance_id, lemma, pos) in pending.drain(..) {
                            instances.push(AnnotatedInstance {
                                instance_id,
                                lemma,
                                pos,
                                tokens: tokens.clone(),
                                target_position,
                                gold_keys: BTreeSet::new(),
                            });
                        }
                        Where::Text
                    }
                    Where::Text => Where::Corpus,
                    Where::Corpus => Where::Done,
                    s => s,
                };
            }
            XmlEvent::EndDocument => break,
        }
    }
    if !matches!(state, Where::Done) {
        return Err(CorpusError::XmlSyntax {
            line: parser.position().row + 1,
            msg: "document ended before </corpus>".to_string(),
        });
    }
    Ok(instances)
}

fn require_attr(
    attributes: &[OwnedAttribute],
    element: &str,
    attribute: &str,
    line: u64,
) -> Result<String, CorpusError> {
    attributes
        .iter()
        .find(|a| a.name.local_name == attribute)
        .map(|a| a.value.clone())
        .ok_or_else(|| CorpusError::XmlMissingAttr {
            element: element.to_string(),
            attribute: attribute.to_string(),
            line,
        })
}

/// Writes instances back out in the same shape the parser accepts, one
/// sentence element per instance.
pub fn write_annotated_xml(
    instances: &[AnnotatedInstance],
    mut w: impl Write,
) -> std::io::Result<()> {
    writeln!(w, "<corpus>")?;
    writeln!(w, "  <text>")?;
    for instance in instances {
        writeln!(w, "    <sentence>")?;
        for (i, token) in instance.tokens.iter().enumerate() {
            if i == instance.target_position {
                writeln!(
                    w,
                    "      <instance id=\"{}\" lemma=\"{}\" pos=\"{}\">{}</instance>",
                    escape(&instance.instance_id),
                    escape(&instance.lemma),
                    instance.pos,
                    escape(token),
                )?;
            } else {
                writeln!(w, "      <wf>{}</wf>", escape(token))?;
            }
        }
        writeln!(w, "    </sentence>")?;
    }
    writeln!(w, "  </text>")?;
    writeln!(w, "</corpus>")?;
    Ok(())
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}
