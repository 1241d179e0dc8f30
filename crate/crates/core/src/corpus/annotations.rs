use std::fs;
use std::path::Path;

use super::{Dataset, Loaded, Warning};
use crate::error::{Error, Result};
use crate::text::{char_len, slice_chars, Span};

/// Attaches gold opinion spans from a tab-separated file with columns
/// `sentence_id, aspect_text, aspect_from, opinion_text, opinion_from`.
///
/// A first row whose third field is not a number is treated as a header.
/// Rows that cannot be matched or validated are skipped with a warning.
pub fn attach_opinion_annotations(dataset: Dataset, path: &Path) -> Result<Loaded<Dataset>> {
    let tsv = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    attach_from_str(dataset, &tsv, path)
}

pub(crate) fn attach_from_str(mut dataset: Dataset, tsv: &str, path: &Path) -> Result<Loaded<Dataset>> {
    let mut warnings = Vec::new();
    let texts: std::collections::HashMap<String, String> = dataset
        .sentences
        .iter()
        .map(|s| (s.id.clone(), s.text.clone()))
        .collect();

    for (lineno, line) in tsv.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut warn = |message: String| {
            warnings.push(Warning {
                location: format!("{}:{}", path.display(), lineno + 1),
                message,
            })
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            warn(format!("expected 5 tab-separated fields, found {}", fields.len()));
            continue;
        }
        let [sid, aspect_text, aspect_from, opinion_text, opinion_from] =
            [fields[0], fields[1], fields[2], fields[3], fields[4]];
        let Ok(aspect_from) = aspect_from.trim().parse::<usize>() else {
            if lineno != 0 {
                warn(format!("non-numeric aspect offset `{aspect_from}`"));
            }
            continue;
        };
        let Ok(opinion_from) = opinion_from.trim().parse::<usize>() else {
            warn(format!("non-numeric opinion offset `{opinion_from}`"));
            continue;
        };
        let Some(text) = texts.get(sid) else {
            warn(format!("unknown sentence id `{sid}`; row skipped"));
            continue;
        };
        let opinion = Span::new(opinion_from, opinion_from + char_len(opinion_text));
        if opinion.is_empty() || slice_chars(text, opinion) != Some(opinion_text) {
            warn(format!(
                "opinion `{opinion_text}` not found at {opinion} in sentence `{sid}`; row skipped"
            ));
            continue;
        }
        let aspect = Span::new(aspect_from, aspect_from + char_len(aspect_text));
        let Some(inst) = dataset
            .instances
            .iter_mut()
            .find(|i| i.sentence_id == sid && i.aspect_span == aspect && i.aspect_text == aspect_text)
        else {
            warn(format!(
                "no aspect `{aspect_text}` at {aspect} in sentence `{sid}`; row skipped"
            ));
            continue;
        };
        if opinion.overlaps(&inst.aspect_span) {
            warn(format!("opinion {opinion} overlaps aspect {aspect}; row skipped"));
            continue;
        }
        if !inst.gold_opinions.contains(&opinion) {
            inst.gold_opinions.push(opinion);
        }
    }
    Ok(Loaded {
        value: dataset,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::*;
    use crate::corpus::{Polarity, Split};

    fn fixture() -> Dataset {
        Dataset::new(
            "R14",
            vec![sentence("s1", "The fajitas are great", Split::Train)],
            vec![instance("s1", 4, "fajitas", Some(Polarity::Positive))],
        )
        .unwrap()
    }

    fn attach(tsv: &str) -> Loaded<Dataset> {
        attach_from_str(fixture(), tsv, Path::new("ann.tsv")).unwrap()
    }

    #[test]
    fn attaches_gold_opinion() {
        let loaded = attach("s1\tfajitas\t4\tgreat\t16\n");
        assert_eq!(loaded.value.instances[0].gold_opinions, vec![Span::new(16, 21)]);
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn header_row_is_skipped() {
        let loaded = attach("sentence_id\taspect\tfrom\topinion\topinion_from\ns1\tfajitas\t4\tgreat\t16\n");
        assert_eq!(loaded.value.aooe_eligible_count(), 1);
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn unknown_sentence_warns() {
        let loaded = attach("s999\tfajitas\t4\tgreat\t16\n");
        assert_eq!(loaded.value, fixture());
        assert_eq!(loaded.warnings.len(), 1);
    }

    #[test]
    fn empty_file_changes_nothing() {
        let loaded = attach("");
        assert_eq!(loaded.value, fixture());
        assert_eq!(loaded.value.aooe_eligible_count(), 0);
    }

    #[test]
    fn opinion_offset_mismatch_warns() {
        let loaded = attach("s1\tfajitas\t4\tgreat\t15\n");
        assert_eq!(loaded.value.aooe_eligible_count(), 0);
        assert_eq!(loaded.warnings.len(), 1);
    }
}
