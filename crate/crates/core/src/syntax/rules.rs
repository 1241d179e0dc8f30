//! A small rule-based English tagger and dependency parser.
//!
//! It needs no model files, runs in microseconds and is fully deterministic,
//! which makes it the default annotator. Output follows Universal
//! Dependencies conventions closely enough for the opinion patterns: noun
//! chunks carry `amod`/`compound`/`det` arcs, copular clauses are headed by
//! their predicate, and prepositions attach to their noun with `case`.
//! Sentences it handles badly can be annotated offline and loaded through
//! the CoNLL-U annotator instead.

use super::{Annotator, AnnotatorToken, CoarsePos};
use crate::error::Result;
use crate::text::tokenize_words;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tag {
    Noun,
    Propn,
    Adj,
    Adv,
    Adp,
    Verb,
    Aux,
    Cop,
    Det,
    Pron,
    CConj,
    Num,
    Part,
    Punct,
}

impl Tag {
    fn coarse(self) -> CoarsePos {
        match self {
            Tag::Noun => CoarsePos::Noun,
            Tag::Propn => CoarsePos::Propn,
            Tag::Adj => CoarsePos::Adj,
            Tag::Adv => CoarsePos::Adv,
            Tag::Adp => CoarsePos::Adp,
            Tag::Verb | Tag::Aux | Tag::Cop => CoarsePos::Verb,
            _ => CoarsePos::Other,
        }
    }

    fn nominal(self) -> bool {
        matches!(self, Tag::Noun | Tag::Propn)
    }

    fn verbal(self) -> bool {
        matches!(self, Tag::Verb | Tag::Aux | Tag::Cop)
    }
}

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "each", "every", "some", "any", "no", "all", "both", "either",
    "neither", "another", "such", "what", "which", "whose", "many", "few", "several", "much", "more", "most", "less",
    "least", "enough", "my", "your", "his", "her", "its", "our", "their",
];

const PRONOUNS: &[&str] = &[
    "i",
    "me",
    "you",
    "he",
    "him",
    "she",
    "it",
    "we",
    "us",
    "they",
    "them",
    "myself",
    "yourself",
    "himself",
    "herself",
    "itself",
    "ourselves",
    "themselves",
    "mine",
    "yours",
    "ours",
    "theirs",
    "who",
    "whom",
    "something",
    "anything",
    "nothing",
    "everything",
    "someone",
    "anyone",
    "everyone",
    "nobody",
    "one",
    "there",
];

const CONJUNCTIONS: &[&str] = &["and", "or", "but", "nor", "yet", "&"];

const ADPOSITIONS: &[&str] = &[
    "of",
    "in",
    "on",
    "at",
    "for",
    "with",
    "without",
    "from",
    "by",
    "about",
    "as",
    "into",
    "onto",
    "over",
    "under",
    "after",
    "before",
    "during",
    "through",
    "throughout",
    "between",
    "among",
    "against",
    "around",
    "across",
    "behind",
    "beyond",
    "near",
    "per",
    "than",
    "toward",
    "towards",
    "upon",
    "within",
    "despite",
    "except",
    "like",
    "to",
    "if",
    "because",
    "while",
    "though",
    "although",
    "since",
    "unless",
    "until",
    "whether",
];

const COPULAS: &[&str] = &[
    "is", "are", "was", "were", "be", "been", "being", "am", "'s", "'re", "'m", "isn't", "aren't", "wasn't", "weren't",
    "it's", "that's", "there's", "he's", "she's", "what's", "they're", "we're", "you're", "i'm",
];

const AUXILIARIES: &[&str] = &[
    "do",
    "does",
    "did",
    "don't",
    "doesn't",
    "didn't",
    "have",
    "has",
    "had",
    "haven't",
    "hasn't",
    "hadn't",
    "will",
    "would",
    "shall",
    "should",
    "can",
    "could",
    "may",
    "might",
    "must",
    "won't",
    "wouldn't",
    "can't",
    "cannot",
    "couldn't",
    "shouldn't",
    "i've",
    "we've",
    "they've",
    "you've",
    "i'll",
    "we'll",
    "you'll",
    "it'll",
    "i'd",
    "we'd",
    "they'd",
];

const PARTICLES: &[&str] = &["not", "n't", "never"];

const ADVERBS: &[&str] = &[
    "very",
    "really",
    "quite",
    "too",
    "so",
    "extremely",
    "pretty",
    "rather",
    "fairly",
    "somewhat",
    "especially",
    "almost",
    "barely",
    "hardly",
    "always",
    "also",
    "just",
    "still",
    "even",
    "well",
    "again",
    "ever",
    "here",
    "now",
    "then",
    "definitely",
    "absolutely",
    "highly",
    "incredibly",
    "super",
    "only",
    "already",
    "sometimes",
    "often",
    "usually",
    "soon",
    "once",
    "twice",
    "overall",
    "however",
    "instead",
    "anyway",
    "though",
    "maybe",
    "perhaps",
    "yet",
    "exactly",
    "totally",
    "completely",
    "simply",
    "truly",
    "far",
    "way",
    "kinda",
    "bit",
    "back",
    "away",
    "out",
    "up",
    "down",
    "off",
    "when",
    "where",
    "how",
    "why",
];

const ADJECTIVES: &[&str] = &[
    "good",
    "great",
    "bad",
    "nice",
    "excellent",
    "poor",
    "fast",
    "slow",
    "cheap",
    "expensive",
    "delicious",
    "tasty",
    "friendly",
    "rude",
    "terrible",
    "awful",
    "horrible",
    "amazing",
    "awesome",
    "fantastic",
    "wonderful",
    "perfect",
    "fresh",
    "stale",
    "cold",
    "hot",
    "warm",
    "small",
    "big",
    "large",
    "huge",
    "tiny",
    "long",
    "short",
    "high",
    "low",
    "new",
    "old",
    "easy",
    "hard",
    "difficult",
    "simple",
    "clean",
    "dirty",
    "quiet",
    "loud",
    "noisy",
    "bright",
    "dim",
    "dark",
    "light",
    "heavy",
    "sleek",
    "fine",
    "decent",
    "mediocre",
    "bland",
    "best",
    "worst",
    "better",
    "worse",
    "happy",
    "sad",
    "sure",
    "quick",
    "pricey",
    "pricy",
    "reasonable",
    "attentive",
    "sweet",
    "sour",
    "spicy",
    "crispy",
    "crisp",
    "soggy",
    "greasy",
    "juicy",
    "cozy",
    "lovely",
    "beautiful",
    "ugly",
    "pleasant",
    "unpleasant",
    "helpful",
    "useless",
    "reliable",
    "sturdy",
    "flimsy",
    "responsive",
    "sharp",
    "clear",
    "smooth",
    "solid",
    "authentic",
    "average",
    "same",
    "other",
    "full",
    "empty",
    "free",
    "busy",
    "crowded",
    "overpriced",
    "disappointed",
    "disappointing",
    "satisfied",
    "impressed",
    "interesting",
    "boring",
    "charming",
    "outstanding",
    "annoying",
    "refreshing",
    "incredible",
    "superb",
    "stellar",
    "top",
    "worth",
    "real",
    "okay",
    "ok",
    "fabulous",
    "gorgeous",
    "dull",
    "slick",
    "rich",
    "salty",
    "dry",
    "raw",
    "thin",
    "thick",
    "wide",
    "narrow",
    "strong",
    "weak",
    "wrong",
    "right",
    "correct",
    "fancy",
    "casual",
    "romantic",
    "extensive",
    "limited",
    "generous",
    "tender",
    "fluffy",
    "creamy",
    "tough",
    "chewy",
    "buggy",
    "glossy",
    "durable",
    "portable",
    "affordable",
    "speedy",
    "lousy",
    "crappy",
    "yummy",
    "funky",
    "tasteless",
    "inexpensive",
    "first",
    "last",
    "next",
    "whole",
    "entire",
    "little",
    "own",
    "able",
    "unable",
    "different",
    "favorite",
    "favourite",
    "special",
    "main",
    "extra",
    "original",
    "regular",
    "standard",
    "late",
    "early",
    "ready",
    "open",
    "closed",
    "sorry",
    "glad",
    "fun",
    "mean",
    "slim",
    "stylish",
    "powerful",
    "quality",
];

const VERBS: &[&str] = &[
    "love",
    "loved",
    "loves",
    "like",
    "liked",
    "likes",
    "hate",
    "hated",
    "hates",
    "recommend",
    "recommended",
    "order",
    "ordered",
    "eat",
    "ate",
    "eaten",
    "go",
    "went",
    "gone",
    "goes",
    "come",
    "came",
    "comes",
    "get",
    "got",
    "gets",
    "gotten",
    "make",
    "made",
    "makes",
    "take",
    "took",
    "takes",
    "taken",
    "work",
    "works",
    "worked",
    "run",
    "runs",
    "ran",
    "buy",
    "bought",
    "buys",
    "use",
    "used",
    "uses",
    "try",
    "tried",
    "tries",
    "want",
    "wanted",
    "wants",
    "need",
    "needs",
    "needed",
    "think",
    "thought",
    "thinks",
    "say",
    "said",
    "says",
    "know",
    "knew",
    "knows",
    "seem",
    "seems",
    "seemed",
    "look",
    "looks",
    "looked",
    "feel",
    "feels",
    "felt",
    "taste",
    "tastes",
    "tasted",
    "serve",
    "serves",
    "served",
    "wait",
    "waited",
    "waits",
    "enjoy",
    "enjoyed",
    "enjoys",
    "keep",
    "kept",
    "keeps",
    "give",
    "gave",
    "gives",
    "given",
    "find",
    "found",
    "finds",
    "boot",
    "boots",
    "booted",
    "crash",
    "crashes",
    "crashed",
    "charge",
    "charges",
    "charged",
    "last",
    "lasts",
    "lasted",
    "arrive",
    "arrived",
    "arrives",
    "sit",
    "sat",
    "sits",
    "see",
    "saw",
    "seen",
    "sees",
    "bring",
    "brought",
    "brings",
    "leave",
    "left",
    "leaves",
    "pay",
    "paid",
    "pays",
    "cost",
    "costs",
    "sound",
    "sounds",
    "sounded",
    "smell",
    "smells",
    "smelled",
    "freeze",
    "freezes",
    "froze",
    "frozen",
    "install",
    "installed",
    "include",
    "includes",
    "included",
    "come",
    "became",
    "become",
    "becomes",
    "stop",
    "stopped",
    "stops",
    "start",
    "started",
    "starts",
    "help",
    "helped",
    "helps",
    "return",
    "returned",
    "returns",
    "expect",
    "expected",
    "expects",
    "disappoint",
    "disappoints",
    "impress",
    "impresses",
    "suggest",
    "suggested",
    "upgrade",
    "upgraded",
    "offer",
    "offers",
    "offered",
    "provide",
    "provides",
    "provided",
    "break",
    "broke",
    "broken",
    "breaks",
    "fix",
    "fixed",
    "fixes",
    "die",
    "died",
    "dies",
    "let",
    "lets",
    "put",
    "puts",
    "call",
    "called",
    "calls",
    "ask",
    "asked",
    "asks",
    "tell",
    "told",
    "tells",
    "share",
    "shared",
    "visit",
    "visited",
    "dine",
    "dined",
    "eat",
    "drink",
    "drank",
    "hope",
    "hoped",
    "wish",
    "wished",
    "beat",
    "beats",
    "rock",
    "rocks",
    "suck",
    "sucks",
    "sucked",
    "deliver",
    "delivered",
    "delivers",
    "handle",
    "handles",
    "handled",
    "load",
    "loads",
    "loaded",
    "play",
    "plays",
    "played",
    "cook",
    "cooked",
    "cooks",
];

/// Words whose suffix would otherwise suggest another class.
const NOUNS: &[&str] = &[
    "battery",
    "quality",
    "family",
    "delivery",
    "variety",
    "party",
    "city",
    "company",
    "display",
    "reply",
    "supply",
    "belly",
    "jelly",
    "music",
    "garlic",
    "logic",
    "graphics",
    "electronics",
    "table",
    "tables",
    "cable",
    "cables",
    "vegetable",
    "vegetables",
    "olive",
    "olives",
    "drive",
    "drives",
    "five",
    "price",
    "prices",
    "service",
    "staff",
    "food",
    "menu",
    "screen",
    "keyboard",
    "laptop",
    "computer",
    "atmosphere",
    "ambience",
    "ambiance",
    "decor",
    "place",
    "restaurant",
    "dish",
    "dishes",
    "pizza",
    "sushi",
    "waiter",
    "waitress",
    "manager",
    "life",
    "time",
    "design",
    "speed",
    "performance",
    "memory",
    "software",
    "system",
    "value",
    "portion",
    "portions",
    "bar",
    "wine",
    "drinks",
    "dessert",
    "view",
    "setting",
    "seating",
    "pricing",
    "wiring",
    "lighting",
    "building",
    "ceiling",
    "evening",
    "morning",
    "meeting",
    "thing",
    "things",
    "nothing",
    "something",
    "everything",
    "anything",
    "ring",
    "king",
    "wing",
    "wings",
    "pudding",
    "dressing",
    "stuffing",
    "topping",
    "toppings",
    "filling",
    "clothing",
    "housing",
    "bed",
    "shed",
    "need",
    "speed",
    "feed",
    "seed",
    "bread",
    "head",
    "steak",
    "salad",
    "rice",
    "fish",
    "chicken",
    "beef",
    "pork",
    "shrimp",
    "soup",
    "sauce",
    "cheese",
    "coffee",
    "tea",
    "water",
    "beer",
    "mouse",
    "trackpad",
    "touchpad",
    "charger",
    "port",
    "ports",
    "windows",
    "mac",
    "os",
    "hardware",
    "apps",
    "programs",
    "features",
    "size",
    "weight",
    "price",
    "cost",
    "money",
    "deal",
    "experience",
    "customer",
    "support",
    "warranty",
    "reservation",
    "wait",
    "waitstaff",
];

fn lexicon(list: &[&str], w: &str) -> bool {
    list.contains(&w)
}

fn is_punct(w: &str) -> bool {
    !w.chars().any(char::is_alphanumeric)
}

fn is_number(w: &str) -> bool {
    w.chars().any(|c| c.is_ascii_digit())
        && w.chars()
            .all(|c| c.is_ascii_digit() || c == '.' || c == ',' || c == '%' || c == '$')
}

/// Tag from the word alone.
fn lexical_tag(word: &str, lower: &str, index: usize) -> Tag {
    if is_punct(word) {
        return Tag::Punct;
    }
    if is_number(word) {
        return Tag::Num;
    }
    if lexicon(PARTICLES, lower) {
        return Tag::Part;
    }
    if lexicon(CONJUNCTIONS, lower) {
        return Tag::CConj;
    }
    if lexicon(COPULAS, lower) {
        return Tag::Cop;
    }
    if lexicon(AUXILIARIES, lower) {
        return Tag::Aux;
    }
    if lexicon(DETERMINERS, lower) {
        return Tag::Det;
    }
    if lexicon(PRONOUNS, lower) {
        return Tag::Pron;
    }
    if lexicon(ADPOSITIONS, lower) {
        return Tag::Adp;
    }
    if lexicon(ADVERBS, lower) {
        return Tag::Adv;
    }
    if lexicon(ADJECTIVES, lower) {
        return Tag::Adj;
    }
    if lexicon(NOUNS, lower) {
        return Tag::Noun;
    }
    if lexicon(VERBS, lower) {
        return Tag::Verb;
    }
    if index > 0 && word.chars().next().is_some_and(char::is_uppercase) {
        return Tag::Propn;
    }
    let n = lower.chars().count();
    if n > 4 && lower.ends_with("ly") {
        return Tag::Adv;
    }
    const ADJ_SUFFIXES: &[&str] = &["ous", "ful", "able", "ible", "ive", "less", "ical", "ish", "est"];
    if n > 4 && ADJ_SUFFIXES.iter().any(|s| lower.ends_with(s)) {
        return Tag::Adj;
    }
    if n > 4 && lower.ends_with("ing") {
        return Tag::Verb;
    }
    if n > 4 && lower.ends_with("ed") {
        // Resolved in context: participles after a subject are verbs.
        return Tag::Adj;
    }
    Tag::Noun
}

fn tag_sentence(words: &[String]) -> Vec<Tag> {
    let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
    let mut tags: Vec<Tag> = words
        .iter()
        .zip(&lower)
        .enumerate()
        .map(|(i, (w, l))| lexical_tag(w, l, i))
        .collect();
    for i in 0..tags.len() {
        let prev = i.checked_sub(1).map(|p| tags[p]);
        let next = tags.get(i + 1).copied();
        match tags[i] {
            // "the wait", "a great look"
            Tag::Verb if matches!(prev, Some(Tag::Det | Tag::Adj)) => tags[i] = Tag::Noun,
            // "boot time is", a noun modifier ahead of a copula
            Tag::Verb if matches!(next, Some(Tag::Noun)) && matches!(tags.get(i + 2), Some(Tag::Cop)) => {
                tags[i] = Tag::Noun
            }
            // "I ordered", "they charged": a participle right after a subject
            Tag::Adj
                if lower[i].ends_with("ed")
                    && !lexicon(ADJECTIVES, &lower[i])
                    && matches!(prev, Some(Tag::Pron | Tag::Noun | Tag::Propn)) =>
            {
                tags[i] = Tag::Verb
            }
            // "to go" is a marker, "to the bar" an adposition
            Tag::Adp if lower[i] == "to" && matches!(next, Some(Tag::Verb | Tag::Aux | Tag::Cop)) => {
                tags[i] = Tag::Part
            }
            // determiners standing alone are pronouns: "this is great"
            Tag::Det
                if !matches!(
                    next,
                    Some(Tag::Noun | Tag::Propn | Tag::Adj | Tag::Adv | Tag::Num | Tag::Det)
                ) =>
            {
                tags[i] = Tag::Pron
            }
            _ => {}
        }
    }
    tags
}

struct Parse<'a> {
    tags: &'a [Tag],
    lower: &'a [String],
    heads: Vec<Option<usize>>,
    rels: Vec<&'static str>,
    /// Head of the noun chunk a token belongs to.
    chunk_head: Vec<Option<usize>>,
    /// For chunks introduced by an adposition: the adposition's index.
    case_of: Vec<Option<usize>>,
}

impl<'a> Parse<'a> {
    fn attach(&mut self, dep: usize, head: usize, rel: &'static str) {
        debug_assert_ne!(dep, head);
        self.heads[dep] = Some(head);
        self.rels[dep] = rel;
    }

    /// The unit (chunk head or lone token) a token belongs to.
    fn unit(&self, t: usize) -> usize {
        self.chunk_head[t].unwrap_or(t)
    }

    fn is_chunk_head(&self, t: usize) -> bool {
        self.chunk_head[t] == Some(t)
    }

    fn chunks(&mut self, s: usize, e: usize) {
        let mut i = s;
        while i < e {
            let mut j = i;
            while j < e && matches!(self.tags[j], Tag::Det | Tag::Num) {
                j += 1;
            }
            while j < e && matches!(self.tags[j], Tag::Adv | Tag::Adj) {
                j += 1;
            }
            let mut k = j;
            while k < e && self.tags[k].nominal() {
                k += 1;
            }
            if k == j {
                i += 1;
                continue;
            }
            let head = k - 1;
            for t in i..k {
                self.chunk_head[t] = Some(head);
            }
            for t in i..head {
                match self.tags[t] {
                    Tag::Noun | Tag::Propn => self.attach(t, head, "compound"),
                    Tag::Adj => self.attach(t, head, "amod"),
                    Tag::Adv => {
                        let target = (t + 1..head).find(|&u| self.tags[u] == Tag::Adj).unwrap_or(head);
                        self.attach(t, target, "advmod")
                    }
                    Tag::Num => self.attach(t, head, "nummod"),
                    _ => {
                        let rel = if matches!(
                            self.lower[t].as_str(),
                            "my" | "your" | "his" | "her" | "its" | "our" | "their"
                        ) {
                            "nmod:poss"
                        } else {
                            "det"
                        };
                        self.attach(t, head, rel)
                    }
                }
            }
            i = k;
        }
    }

    /// Parses tokens `s..e` as one clause and returns its root.
    fn segment(&mut self, s: usize, e: usize) -> usize {
        self.chunks(s, e);
        let tags = self.tags;

        // adpositions governing a following chunk
        for t in s..e {
            if tags[t] == Tag::Adp && t + 1 < e && self.chunk_head[t + 1].is_some() && self.chunk_head[t].is_none() {
                let head = self.unit(t + 1);
                self.attach(t, head, "case");
                self.case_of[head] = Some(t);
            }
        }

        // coordination between like units: "food and service", "cheap and good"
        for t in s..e {
            if tags[t] != Tag::CConj || t == s || t + 1 >= e {
                continue;
            }
            let (l, r) = (self.unit(t - 1), self.unit(t + 1));
            let alike = (self.is_chunk_head(l) && self.is_chunk_head(r))
                || (tags[l] == Tag::Adj && tags[r] == Tag::Adj && self.chunk_head[r].is_none())
                || (tags[l].verbal() && tags[r].verbal());
            if alike && self.heads[r].is_none() {
                self.attach(r, l, "conj");
                self.attach(t, r, "cc");
            }
        }

        let root = self.clause_root(s, e);
        let units: Vec<usize> = (s..e).filter(|&t| self.heads[t].is_none() && t != root).collect();

        let root_is_copular = (s..e).any(|t| self.rels[t] == "cop");
        let mut subject_taken = false;
        // subjects: nearest chunk or pronoun before the root
        for &u in units.iter().rev() {
            if u < root
                && !subject_taken
                && (self.is_chunk_head(u) && self.case_of[u].is_none() || tags[u] == Tag::Pron)
            {
                self.attach(u, root, "nsubj");
                subject_taken = true;
            }
        }
        let mut object_taken = root_is_copular || !tags[root].verbal();
        for &u in &units {
            if self.heads[u].is_some() {
                continue;
            }
            let tag = tags[u];
            if self.is_chunk_head(u) {
                if let Some(adp) = self.case_of[u] {
                    let anchor = (adp > s).then(|| self.unit(adp - 1)).filter(|&a| a != u);
                    match anchor {
                        Some(a) if tags[a].nominal() => self.attach(u, a, "nmod"),
                        Some(a) if matches!(tags[a], Tag::Adj | Tag::Verb) && !self.descends_from(a, u) => {
                            self.attach(u, a, "obl")
                        }
                        _ => self.attach(u, root, if tags[root].nominal() { "nmod" } else { "obl" }),
                    }
                } else if u > root && !object_taken {
                    self.attach(u, root, "obj");
                    object_taken = true;
                } else {
                    self.attach(u, root, "dep");
                }
                continue;
            }
            if tag == Tag::Part && self.lower[u] == "to" && u + 1 < e {
                self.attach(u, u + 1, "mark");
                continue;
            }
            match tag {
                Tag::Adv | Tag::Part => {
                    let target = (u + 1..e)
                        .take_while(|&t| matches!(tags[t], Tag::Adv | Tag::Part | Tag::Adj))
                        .find(|&t| tags[t] == Tag::Adj && self.chunk_head[t].is_none());
                    match target {
                        Some(t) => self.attach(u, t, "advmod"),
                        None => self.attach(u, root, "advmod"),
                    }
                }
                Tag::Adj => {
                    let prev_chunk = (s..u).rev().find(|&t| self.is_chunk_head(t));
                    if tags[root].verbal() && u > root {
                        self.attach(u, root, "xcomp")
                    } else if let (false, Some(c)) = (tags[root].verbal(), prev_chunk) {
                        self.attach(u, c, "amod")
                    } else {
                        self.attach(u, root, "dep")
                    }
                }
                Tag::Aux => self.attach(u, root, "aux"),
                Tag::Cop => self.attach(u, root, if u < root { "aux" } else { "dep" }),
                Tag::Verb => {
                    let rel = if u > s && self.lower[u - 1] == "to" {
                        "xcomp"
                    } else {
                        "dep"
                    };
                    self.attach(u, root, rel)
                }
                Tag::Pron if u > root && !object_taken => {
                    self.attach(u, root, "obj");
                    object_taken = true;
                }
                Tag::CConj => self.attach(u, root, "cc"),
                _ => self.attach(u, root, "dep"),
            }
        }
        root
    }

    fn descends_from(&self, mut t: usize, ancestor: usize) -> bool {
        for _ in 0..=self.heads.len() {
            if t == ancestor {
                return true;
            }
            match self.heads[t] {
                Some(h) => t = h,
                None => return false,
            }
        }
        false
    }

    /// Picks the clause root: the predicate of a copular clause, else the
    /// main verb, else the first chunk, adjective or token.
    fn clause_root(&mut self, s: usize, e: usize) -> usize {
        let tags = self.tags;
        let free = |p: &Self, t: usize| p.heads[t].is_none();
        let main = (s..e).find(|&t| tags[t] == Tag::Verb && free(self, t));
        let cop = (s..e).find(|&t| tags[t] == Tag::Cop && free(self, t));
        if let Some(c) = cop.filter(|&c| main.is_none_or(|m| m > c)) {
            let complement = (c + 1..e)
                .find(|&t| !matches!(tags[t], Tag::Adv | Tag::Part))
                .filter(|&t| {
                    tags[t] == Tag::Adj || self.chunk_head[t].is_some() && self.case_of[self.unit(t)].is_none()
                });
            if let Some(t) = complement {
                let pred = self.unit(t);
                if free(self, pred) {
                    self.attach(c, pred, "cop");
                    for a in s..c {
                        if tags[a] == Tag::Aux && free(self, a) {
                            self.attach(a, pred, "aux");
                        }
                    }
                    return pred;
                }
            }
        }
        if let Some(m) = main {
            return m;
        }
        (s..e)
            .find(|&t| tags[t].verbal() && free(self, t))
            .or_else(|| (s..e).find(|&t| self.is_chunk_head(t) && free(self, t)))
            .or_else(|| (s..e).find(|&t| tags[t] == Tag::Adj && free(self, t)))
            .or_else(|| (s..e).find(|&t| free(self, t)))
            .expect("segment is non-empty")
    }
}

/// Splits at punctuation, and at conjunctions joining two verb-bearing parts.
fn segments(tags: &[Tag]) -> Vec<(usize, usize)> {
    let mut regions = Vec::new();
    let mut start = 0;
    for (i, &t) in tags.iter().enumerate() {
        if t == Tag::Punct {
            if i > start {
                regions.push((start, i));
            }
            start = i + 1;
        }
    }
    if start < tags.len() {
        regions.push((start, tags.len()));
    }
    let mut out = Vec::new();
    for (s, e) in regions {
        let mut from = s;
        for i in s..e {
            if tags[i] != Tag::CConj {
                continue;
            }
            let left = tags[from..i].iter().any(|t| t.verbal());
            let right = tags[i + 1..e].iter().any(|t| t.verbal());
            if left && right {
                out.push((from, i));
                from = i;
            }
        }
        out.push((from, e));
    }
    out.retain(|(s, e)| e > s);
    out
}

/// Rule-based annotator; tokens are exactly the shared word tokens.
#[derive(Clone, Debug, Default)]
pub struct RuleAnnotator;

impl RuleAnnotator {
    pub fn new() -> Self {
        RuleAnnotator
    }
}

impl Annotator for RuleAnnotator {
    fn name(&self) -> &str {
        "rules"
    }

    fn parse(&self, text: &str) -> Result<Vec<AnnotatorToken>> {
        let words = tokenize_words(text);
        let texts: Vec<String> = words.iter().map(|w| w.text.clone()).collect();
        let lower: Vec<String> = texts.iter().map(|w| w.to_lowercase()).collect();
        let tags = tag_sentence(&texts);
        let n = words.len();
        let mut p = Parse {
            tags: &tags,
            lower: &lower,
            heads: vec![None; n],
            rels: vec![""; n],
            chunk_head: vec![None; n],
            case_of: vec![None; n],
        };

        let mut roots = Vec::new();
        for (s, e) in segments(&tags) {
            // a clause-initial conjunction is left for the sentence level
            let s2 = if tags[s] == Tag::CConj && e - s > 1 { s + 1 } else { s };
            roots.push((s, s2, e, p.segment(s2, e)));
        }
        if let Some(&(_, _, _, first)) = roots.first() {
            let main = roots
                .iter()
                .find(|&&(_, b, e, _)| (b..e).any(|t| tags[t].verbal()))
                .map_or(first, |r| r.3);
            for &(s, s2, _, r) in &roots {
                if r != main {
                    let rel = if p.case_of[r].is_some() {
                        "obl"
                    } else if s2 > s {
                        "conj"
                    } else {
                        "parataxis"
                    };
                    p.attach(r, main, rel);
                }
                if s2 > s {
                    p.attach(s, r, "cc");
                }
            }
            for t in 0..n {
                if tags[t] == Tag::Punct {
                    let seg_root = roots.iter().rev().find(|&&(s, _, _, _)| s < t).map_or(main, |r| r.3);
                    p.attach(t, seg_root, "punct");
                }
            }
            p.rels[main] = "root";
        } else if n > 0 {
            // punctuation only
            p.rels[0] = "root";
            for t in 1..n {
                p.attach(t, 0, "punct");
            }
        }

        Ok(words
            .into_iter()
            .enumerate()
            .map(|(i, w)| AnnotatorToken {
                text: w.text,
                start: w.span.from,
                pos: tags[i].coarse(),
                head: p.heads[i],
                deprel: p.rels[i].to_string(),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{annotate, PatternRegistry, SyntaxAnnotation};
    use super::*;
    use proptest::prelude::*;
    use CoarsePos::*;

    fn parse(text: &str) -> SyntaxAnnotation {
        annotate(text, &RuleAnnotator::new()).unwrap()
    }

    #[test]
    fn golden_noun_chunk() {
        let a = parse("great battery life");
        assert_eq!(a.pos, vec![Adj, Noun, Noun]);
        assert_eq!(a.heads, vec![Some(2), Some(2), None]);
        assert_eq!(a.deprels, vec!["amod", "compound", "root"]);
    }

    #[test]
    fn copular_clause_is_headed_by_predicate() {
        let a = parse("The fajitas are great");
        assert_eq!(a.pos, vec![Other, Noun, Verb, Adj]);
        assert_eq!(a.heads, vec![Some(1), Some(3), Some(3), None]);
        assert_eq!(a.deprels, vec!["det", "nsubj", "cop", "root"]);
    }

    #[test]
    fn adverb_modifies_predicate() {
        let a = parse("The service was very slow.");
        assert_eq!(a.heads[3], Some(4));
        assert_eq!(a.deprels[3], "advmod");
        assert_eq!(a.heads[4], None);
        assert_eq!(a.deprels[5], "punct");
    }

    #[test]
    fn preposition_attaches_with_case() {
        let a = parse("Great value for the price");
        // Great -> value (amod), for -> price (case), price -> value (nmod)
        assert_eq!(a.heads, vec![Some(1), None, Some(4), Some(4), Some(1)]);
        assert_eq!(a.deprels[2], "case");
        assert_eq!(a.deprels[4], "nmod");
        let set = PatternRegistry::default().extract_candidates(&a);
        assert_eq!(set.mask, [0, 2].into_iter().collect());
    }

    #[test]
    fn clauses_split_at_conjunction() {
        let a = parse("The food is great but the service is slow");
        assert_eq!(a.heads[3], None);
        assert_eq!(a.heads[8], Some(3));
        assert_eq!(a.deprels[8], "conj");
        assert_eq!(a.heads[4], Some(8));
        assert_eq!(a.deprels[4], "cc");
    }

    #[test]
    fn deterministic() {
        let t = "I loved the crispy crust, but the wait was too long!";
        assert_eq!(parse(t), parse(t));
    }

    proptest! {
        #[test]
        fn always_a_tree(words in prop::collection::vec(prop::sample::select(vec![
            "the", "food", "is", "great", "very", "and", "but", "for", "price", ",", ".", "I",
            "loved", "not", "to", "go", "slow", "battery", "life", "with", "of", "Apple", "it's",
            "don't", "really", "cheap", "screen", "was", "a", "my", "5", "!", "ordered", "amazing",
        ]), 1..16)) {
            let text = words.join(" ");
            let a = parse(&text);
            prop_assert_eq!(a.len(), tokenize_words(&text).len());
            prop_assert!(a.validate().is_ok());
            prop_assert_eq!(a.heads.iter().filter(|h| h.is_none()).count(), 1);
        }
    }
}
