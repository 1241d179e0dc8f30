use std::collections::HashSet;
use std::fs;
use std::path::Path;

use roxmltree::{Document, Node};

use super::{AspectInstance, Dataset, Domain, Loaded, Polarity, RawSentence, Split, Warning};
use crate::error::{Error, Result};
use crate::text::Span;

/// Reads a SemEval ABSA file. Both the 2014 layout (`aspectTerms/aspectTerm`)
/// and the 2015/16 layout (`Opinions/Opinion`) are accepted.
///
/// Implicit targets (`NULL`) and `conflict` polarities are dropped silently;
/// offset mismatches are dropped with a warning.
pub fn parse_semeval_xml(path: &Path, name: &str, split: Split) -> Result<Loaded<Dataset>> {
    let xml = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_semeval_str(&xml, path, name, split)
}

pub(crate) fn parse_semeval_str(xml: &str, path: &Path, name: &str, split: Split) -> Result<Loaded<Dataset>> {
    let doc = Document::parse(xml).map_err(|e| Error::Xml {
        path: path.to_path_buf(),
        line: e.pos().row,
        message: e.to_string(),
    })?;
    let domain = Domain::from_dataset_name(name);
    let mut warnings = Vec::new();
    let mut sentences = Vec::new();
    let mut instances = Vec::new();
    let mut seen = HashSet::new();

    for node in doc.descendants().filter(|n| n.has_tag_name("sentence")) {
        let line = doc.text_pos_at(node.range().start).row;
        let loc = || format!("{}:{line}", path.display());
        let Some(id) = node.attribute("id") else {
            warnings.push(Warning {
                location: loc(),
                message: "sentence without id".into(),
            });
            continue;
        };
        let text = child(node, "text").and_then(|t| t.text()).unwrap_or("");
        if text.is_empty() {
            warnings.push(Warning {
                location: loc(),
                message: format!("sentence `{id}` has no text"),
            });
            continue;
        }
        if !seen.insert(id.to_string()) {
            warnings.push(Warning {
                location: loc(),
                message: format!("duplicate sentence id `{id}`"),
            });
            continue;
        }

        let mut found: Vec<AspectInstance> = Vec::new();
        let mut conflicted: Vec<Span> = Vec::new();
        for term in aspect_nodes(node) {
            let target = term
                .attribute("term")
                .or_else(|| term.attribute("target"))
                .unwrap_or("");
            if target == "NULL" || target.is_empty() {
                continue;
            }
            let polarity = match term.attribute("polarity") {
                Some("conflict") => continue,
                Some(p) => match p.parse::<Polarity>() {
                    Ok(p) => Some(p),
                    Err(_) => {
                        warnings.push(Warning {
                            location: loc(),
                            message: format!("sentence `{id}`: unknown polarity `{p}`"),
                        });
                        continue;
                    }
                },
                None => None,
            };
            let offsets = term
                .attribute("from")
                .zip(term.attribute("to"))
                .and_then(|(f, t)| Some((f.parse::<usize>().ok()?, t.parse::<usize>().ok()?)));
            let Some((from, to)) = offsets else {
                warnings.push(Warning {
                    location: loc(),
                    message: format!("sentence `{id}`: aspect `{target}` lacks numeric offsets"),
                });
                continue;
            };
            let inst = AspectInstance {
                sentence_id: id.to_string(),
                aspect_span: Span::new(from, to),
                aspect_text: target.to_string(),
                gold_opinions: Vec::new(),
                gold_polarity: polarity,
            };
            if let Err(msg) = inst.validate(text) {
                warnings.push(Warning {
                    location: loc(),
                    message: format!("sentence `{id}`: {msg}; instance dropped"),
                });
                continue;
            }
            // 2015/16 files repeat a target once per aspect category.
            if let Some(prev) = found.iter().find(|p| p.aspect_span == inst.aspect_span) {
                if prev.gold_polarity != inst.gold_polarity && !conflicted.contains(&inst.aspect_span) {
                    conflicted.push(inst.aspect_span);
                }
                continue;
            }
            found.push(inst);
        }
        for span in conflicted {
            warnings.push(Warning {
                location: loc(),
                message: format!("sentence `{id}`: target at {span} carries conflicting polarities; dropped"),
            });
            found.retain(|i| i.aspect_span != span);
        }

        sentences.push(RawSentence {
            id: id.to_string(),
            text: text.to_string(),
            domain,
            split,
        });
        instances.extend(found);
    }

    Ok(Loaded {
        value: Dataset::new(name, sentences, instances)?,
        warnings,
    })
}

fn child<'a, 'i>(node: Node<'a, 'i>, tag: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(tag))
}

fn aspect_nodes<'a, 'i>(sentence: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    sentence
        .children()
        .filter(|c| c.has_tag_name("aspectTerms") || c.has_tag_name("Opinions"))
        .flat_map(|c| c.children())
        .filter(|c| c.has_tag_name("aspectTerm") || c.has_tag_name("Opinion"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(xml: &str) -> Result<Loaded<Dataset>> {
        parse_semeval_str(xml, Path::new("fixture.xml"), "R14", Split::Train)
    }

    const SE14: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<sentences>
  <sentence id="s1">
    <text>The fajitas are great</text>
    <aspectTerms>
      <aspectTerm term="fajitas" polarity="positive" from="FROM" to="11"/>
    </aspectTerms>
  </sentence>
</sentences>"#;

    #[test]
    fn semeval14_single_instance() {
        let loaded = parse(&SE14.replace("FROM", "4")).unwrap();
        let ds = loaded.value;
        assert_eq!(ds.sentences.len(), 1);
        assert_eq!(ds.instances.len(), 1);
        assert_eq!(ds.instances[0].gold_polarity, Some(Polarity::Positive));
        assert_eq!(ds.instances[0].aspect_span, Span::new(4, 11));
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn offset_mismatch_is_dropped_with_warning() {
        let loaded = parse(&SE14.replace("FROM", "3")).unwrap();
        assert_eq!(loaded.value.instances.len(), 0);
        assert_eq!(loaded.value.sentences.len(), 1);
        assert_eq!(loaded.warnings.len(), 1);
    }

    #[test]
    fn semeval15_null_target_and_conflict_dropped() {
        let xml = r#"<Reviews><Review rid="1"><sentences>
  <sentence id="1:0">
    <text>Everything was fine.</text>
    <Opinions>
      <Opinion target="NULL" category="RESTAURANT#GENERAL" polarity="positive" from="0" to="0"/>
    </Opinions>
  </sentence>
  <sentence id="1:1">
    <text>The pizza was ok but the staff rude.</text>
    <Opinions>
      <Opinion target="pizza" category="FOOD#QUALITY" polarity="conflict" from="4" to="9"/>
      <Opinion target="staff" category="SERVICE#GENERAL" polarity="negative" from="25" to="30"/>
      <Opinion target="staff" category="SERVICE#OTHER" polarity="negative" from="25" to="30"/>
    </Opinions>
  </sentence>
</sentences></Review></Reviews>"#;
        let loaded = parse(xml).unwrap();
        assert_eq!(loaded.value.sentences.len(), 2);
        assert_eq!(loaded.value.instances.len(), 1);
        assert_eq!(loaded.value.instances[0].aspect_text, "staff");
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn null_only_file_yields_no_instances() {
        let xml = r#"<Reviews><Review rid="1"><sentences><sentence id="a"><text>Fine.</text>
<Opinions><Opinion target="NULL" polarity="positive" from="0" to="0"/></Opinions>
</sentence></sentences></Review></Reviews>"#;
        assert_eq!(parse(xml).unwrap().value.instances.len(), 0);
    }

    #[test]
    fn malformed_xml_reports_line() {
        let err = parse("<sentences>\n<sentence id=\"1\">\n<text>x</tex>\n</sentences>").unwrap_err();
        match err {
            Error::Xml { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_polarity_is_unlabeled() {
        let xml = SE14.replace("FROM", "4").replace(" polarity=\"positive\"", "");
        let ds = parse(&xml).unwrap().value;
        assert_eq!(ds.instances[0].gold_polarity, None);
    }
}
