use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{CoarsePos, SyntaxAnnotation};
use crate::error::{Error, Result};

/// Relations matched by the generic "mod" arc of the built-in patterns.
pub const DEFAULT_MOD_RELATIONS: [&str; 5] = ["amod", "advmod", "nmod", "compound", "case"];

/// Longest phrase a subtree emission may produce.
pub const SUBTREE_CAP: usize = 4;

/// One dependent-to-head arc: the dependent's POS, the arc label, the
/// head's POS.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcConstraint {
    pub dependent: BTreeSet<CoarsePos>,
    pub relations: BTreeSet<String>,
    pub head: BTreeSet<CoarsePos>,
}

impl ArcConstraint {
    pub fn new(dependent: &[CoarsePos], relations: &[&str], head: &[CoarsePos]) -> Self {
        ArcConstraint {
            dependent: dependent.iter().copied().collect(),
            relations: relations.iter().map(|r| r.to_string()).collect(),
            head: head.iter().copied().collect(),
        }
    }
}

/// Which matched nodes form the candidate phrase. Node 0 is the first
/// dependent of the chain, node `i + 1` the head of arc `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Emit {
    Nodes(Vec<usize>),
    /// The contiguous subtree of a node, capped in length.
    Subtree {
        node: usize,
        cap: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpinionRelationPattern {
    pub name: String,
    pub arcs: Vec<ArcConstraint>,
    pub emit: Emit,
    pub head_word: usize,
}

impl OpinionRelationPattern {
    pub fn validate(&self) -> Result<()> {
        let nodes = self.arcs.len() + 1;
        if self.arcs.is_empty() || self.arcs.len() > 2 {
            return Err(Error::Config(format!(
                "pattern {}: chain length must be 1 or 2",
                self.name
            )));
        }
        let emitted_ok = match &self.emit {
            Emit::Nodes(ns) => !ns.is_empty() && ns.iter().all(|&n| n < nodes) && ns.contains(&self.head_word),
            Emit::Subtree { node, cap } => *node < nodes && *cap > 0 && *node == self.head_word,
        };
        if !emitted_ok || self.head_word >= nodes {
            return Err(Error::Config(format!(
                "pattern {}: head word must be one of the emitted nodes",
                self.name
            )));
        }
        Ok(())
    }

    /// Parses `DEP>rel|rel>HEAD ; DEP>rel>HEAD => emit=0,1 head=1`.
    ///
    /// POS sets are `|`-separated class names; the relation `mod` stands for
    /// `mod_relations`. `emit=subtree:N:CAP` emits node N's subtree.
    pub fn parse(name: &str, spec: &str, mod_relations: &[String]) -> Result<Self> {
        let bad = |msg: &str| Error::Config(format!("pattern {name}: {msg} in `{spec}`"));
        let (chain, tail) = spec.split_once("=>").ok_or_else(|| bad("missing `=>`"))?;
        let mut arcs = Vec::new();
        for arc in chain.split(';') {
            let parts: Vec<&str> = arc.trim().split('>').map(str::trim).collect();
            let [dep, rels, head] = parts.as_slice() else {
                return Err(bad("arc must read DEP>rel>HEAD"));
            };
            let pos_set = |s: &str| -> Result<BTreeSet<CoarsePos>> { s.split('|').map(str::parse).collect() };
            let mut relations = BTreeSet::new();
            for r in rels.split('|').map(str::trim) {
                if r == "mod" {
                    relations.extend(mod_relations.iter().cloned());
                } else if !r.is_empty() {
                    relations.insert(r.to_string());
                }
            }
            arcs.push(ArcConstraint {
                dependent: pos_set(dep)?,
                relations,
                head: pos_set(head)?,
            });
        }
        let mut emit = None;
        let mut head_word = None;
        for field in tail.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad("expected a node index"));
            match k {
                "emit" => {
                    emit = Some(if let Some(rest) = v.strip_prefix("subtree:") {
                        let (node, cap) = rest.split_once(':').unwrap_or((rest, "4"));
                        Emit::Subtree {
                            node: num(node)?,
                            cap: num(cap)?,
                        }
                    } else {
                        Emit::Nodes(v.split(',').map(num).collect::<Result<_>>()?)
                    })
                }
                "head" => head_word = Some(num(v)?),
                _ => return Err(bad("unknown key")),
            }
        }
        let pattern = OpinionRelationPattern {
            name: name.to_string(),
            arcs,
            emit: emit.ok_or_else(|| bad("missing emit="))?,
            head_word: head_word.ok_or_else(|| bad("missing head="))?,
        };
        pattern.validate()?;
        Ok(pattern)
    }

    /// All matches as (phrase, head) pairs, in order of the chain's first
    /// dependent.
    pub fn matches(&self, ann: &SyntaxAnnotation) -> Vec<(Vec<usize>, usize)> {
        let mut out = Vec::new();
        'start: for first in 0..ann.len() {
            let mut nodes = vec![first];
            for arc in &self.arcs {
                let dep = *nodes.last().expect("non-empty");
                let Some(head) = ann.heads[dep] else { continue 'start };
                if !arc.dependent.contains(&ann.pos[dep])
                    || !arc.relations.contains(&ann.deprels[dep])
                    || !arc.head.contains(&ann.pos[head])
                {
                    continue 'start;
                }
                nodes.push(head);
            }
            let head = nodes[self.head_word];
            let phrase = match &self.emit {
                Emit::Nodes(idx) => {
                    let mut p: Vec<usize> = idx.iter().map(|&i| nodes[i]).collect();
                    p.sort_unstable();
                    p.dedup();
                    p
                }
                Emit::Subtree { node, cap } => contiguous_subtree(ann, nodes[*node], *cap),
            };
            out.push((phrase, head));
        }
        out
    }
}

/// The run of consecutive subtree words around `node`, at most `cap` long,
/// starting as far left as the cap allows.
fn contiguous_subtree(ann: &SyntaxAnnotation, node: usize, cap: usize) -> Vec<usize> {
    let members: BTreeSet<usize> = ann.subtree(node).into_iter().collect();
    let mut lo = node;
    while lo > 0 && members.contains(&(lo - 1)) {
        lo -= 1;
    }
    let mut hi = node;
    while members.contains(&(hi + 1)) {
        hi += 1;
    }
    let start = lo.max((node + 1).saturating_sub(cap));
    let end = hi.min(start + cap - 1);
    (start..=end).collect()
}

/// One opinion candidate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub phrase: Vec<usize>,
    pub head: usize,
    pub pattern: String,
}

/// Candidates with distinct heads, ordered by head; `mask` is the set of
/// heads.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
    pub mask: BTreeSet<usize>,
}

impl CandidateSet {
    /// Merges candidates sharing a head: the longest phrase wins, earlier
    /// candidates win ties.
    pub fn from_candidates(all: Vec<Candidate>) -> Self {
        let mut by_head: BTreeMap<usize, Candidate> = BTreeMap::new();
        for c in all {
            match by_head.get(&c.head) {
                Some(prev) if prev.phrase.len() >= c.phrase.len() => {}
                _ => {
                    by_head.insert(c.head, c);
                }
            }
        }
        let mask = by_head.keys().copied().collect();
        CandidateSet {
            candidates: by_head.into_values().collect(),
            mask,
        }
    }

    /// Drops candidates headed by any of `words` (e.g. the aspect itself).
    pub fn excluding(&self, words: &BTreeSet<usize>) -> CandidateSet {
        CandidateSet::from_candidates(
            self.candidates
                .iter()
                .filter(|c| !words.contains(&c.head))
                .cloned()
                .collect(),
        )
    }

    pub fn get(&self, head: usize) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.head == head)
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }
}

/// Ordered, name-unique collection of patterns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternRegistry {
    patterns: Vec<OpinionRelationPattern>,
    mod_relations: Vec<String>,
}

impl Default for PatternRegistry {
    fn default() -> Self {
        PatternRegistry::builtin(&DEFAULT_MOD_RELATIONS.map(String::from))
    }
}

impl PatternRegistry {
    /// The four built-in relations with the given "mod" relation set:
    ///
    /// * P1: ADJ -mod-> NOUN, emits the adjective.
    /// * P2: ADV -mod-> ADJ, emits adverb and adjective, headed by the adjective.
    /// * P3: ADJ -mod-> NOUN -mod-> NOUN, emits the adjective.
    /// * P4: ADP -mod-> NOUN, emits the adposition's subtree (at most 4 words).
    pub fn builtin(mod_relations: &[String]) -> Self {
        use CoarsePos::*;
        let rels: Vec<&str> = mod_relations.iter().map(String::as_str).collect();
        let arc = |d: CoarsePos, h: CoarsePos| ArcConstraint::new(&[d], &rels, &[h]);
        let patterns = vec![
            OpinionRelationPattern {
                name: "P1".into(),
                arcs: vec![arc(Adj, Noun)],
                emit: Emit::Nodes(vec![0]),
                head_word: 0,
            },
            OpinionRelationPattern {
                name: "P2".into(),
                arcs: vec![arc(Adv, Adj)],
                emit: Emit::Nodes(vec![0, 1]),
                head_word: 1,
            },
            OpinionRelationPattern {
                name: "P3".into(),
                arcs: vec![arc(Adj, Noun), arc(Noun, Noun)],
                emit: Emit::Nodes(vec![0]),
                head_word: 0,
            },
            OpinionRelationPattern {
                name: "P4".into(),
                arcs: vec![arc(Adp, Noun)],
                emit: Emit::Subtree {
                    node: 0,
                    cap: SUBTREE_CAP,
                },
                head_word: 0,
            },
        ];
        PatternRegistry {
            patterns,
            mod_relations: mod_relations.to_vec(),
        }
    }

    pub fn mod_relations(&self) -> &[String] {
        &self.mod_relations
    }

    pub fn register(&mut self, pattern: OpinionRelationPattern) -> Result<()> {
        pattern.validate()?;
        if self.patterns.iter().any(|p| p.name == pattern.name) {
            return Err(Error::Config(format!("pattern `{}` already registered", pattern.name)));
        }
        self.patterns.push(pattern);
        Ok(())
    }

    pub fn list_patterns(&self) -> &[OpinionRelationPattern] {
        &self.patterns
    }

    pub fn extract_candidates(&self, ann: &SyntaxAnnotation) -> CandidateSet {
        let mut all = Vec::new();
        for p in &self.patterns {
            for (phrase, head) in p.matches(ann) {
                all.push(Candidate {
                    phrase,
                    head,
                    pattern: p.name.clone(),
                });
            }
        }
        CandidateSet::from_candidates(all)
    }
}
