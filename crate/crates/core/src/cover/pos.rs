//! Lexicon-driven universal POS tagger for English.
//!
//! Closed-class words come from fixed lexicons, so the functional/non-functional
//! partition is exact for them. Open-class words are split into NOUN, VERB, ADJ,
//! ADV and PROPN with suffix and context heuristics.

use serde::{Deserialize, Serialize};

/// Identifies the tagger build. Part of every plan fingerprint.
pub const TAGGER_VERSION: &str = "lexicon-upos-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Upos {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
}

impl Upos {
    /// Non-functional = nouns, proper nouns, verbs, adjectives, adverbs.
    pub fn is_functional(self) -> bool {
        !matches!(
            self,
            Upos::Noun | Upos::Propn | Upos::Verb | Upos::Adj | Upos::Adv | Upos::X
        )
    }

    /// Punctuation and symbols are tokens but not words.
    pub fn is_word(self) -> bool {
        !matches!(self, Upos::Punct | Upos::Sym)
    }
}

const DET: &[&str] = &[
    "a",
    "an",
    "the",
    "this",
    "that",
    "these",
    "those",
    "some",
    "any",
    "no",
    "every",
    "each",
    "either",
    "neither",
    "all",
    "both",
    "another",
    "what",
    "which",
    "whatever",
    "whichever",
];

const PRON: &[&str] = &[
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
    "my",
    "your",
    "his",
    "her",
    "its",
    "our",
    "their",
    "mine",
    "yours",
    "hers",
    "ours",
    "theirs",
    "myself",
    "yourself",
    "himself",
    "herself",
    "itself",
    "ourselves",
    "yourselves",
    "themselves",
    "who",
    "whom",
    "whose",
    "whoever",
    "someone",
    "somebody",
    "something",
    "anyone",
    "anybody",
    "anything",
    "everyone",
    "everybody",
    "everything",
    "nobody",
    "nothing",
    "none",
    "one's",
];

const ADP: &[&str] = &[
    "of",
    "in",
    "on",
    "at",
    "by",
    "for",
    "with",
    "about",
    "against",
    "between",
    "into",
    "through",
    "during",
    "before",
    "after",
    "above",
    "below",
    "to",
    "from",
    "up",
    "down",
    "over",
    "under",
    "across",
    "along",
    "around",
    "behind",
    "beside",
    "besides",
    "beyond",
    "near",
    "toward",
    "towards",
    "upon",
    "within",
    "without",
    "among",
    "amongst",
    "past",
    "off",
    "onto",
    "via",
    "inside",
    "outside",
    "throughout",
    "despite",
    "except",
    "beneath",
    "underneath",
    "per",
    "amid",
    "out",
];

const CCONJ: &[&str] = &["and", "or", "but", "nor", "yet", "plus"];

const SCONJ: &[&str] = &[
    "if", "because", "although", "though", "while", "whereas", "unless", "since", "until", "till", "whether", "than",
    "as", "so", "once", "whenever", "wherever",
];

const AUX_ALWAYS: &[&str] = &[
    "am", "is", "are", "was", "were", "be", "been", "being", "can", "could", "will", "would", "shall", "should", "may",
    "might", "must", "ca", "wo",
];

const HAVE: &[&str] = &["have", "has", "had", "having"];
const DO: &[&str] = &["do", "does", "did"];

const PART: &[&str] = &["not", "n't"];

const INTJ: &[&str] = &[
    "oh", "ah", "yes", "hello", "hi", "hey", "wow", "ok", "okay", "please", "alas", "oops", "hmm", "bye",
];

const NUM_WORDS: &[&str] = &[
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
    "twenty",
    "thirty",
    "forty",
    "fifty",
    "sixty",
    "seventy",
    "eighty",
    "ninety",
    "hundred",
    "thousand",
    "million",
    "billion",
    "dozen",
];

const ADV: &[&str] = &[
    "very",
    "too",
    "also",
    "just",
    "only",
    "then",
    "now",
    "here",
    "there",
    "always",
    "never",
    "often",
    "soon",
    "still",
    "again",
    "even",
    "quite",
    "rather",
    "almost",
    "already",
    "ever",
    "perhaps",
    "maybe",
    "sometimes",
    "together",
    "away",
    "back",
    "home",
    "later",
    "early",
    "late",
    "far",
    "well",
    "instead",
    "once",
    "twice",
    "yesterday",
    "today",
    "tomorrow",
    "tonight",
    "alone",
    "abroad",
    "forward",
    "seldom",
    "when",
    "where",
    "why",
    "how",
];

const ADJ: &[&str] = &[
    "old",
    "young",
    "new",
    "small",
    "big",
    "large",
    "little",
    "tall",
    "short",
    "long",
    "wide",
    "narrow",
    "high",
    "low",
    "deep",
    "green",
    "red",
    "blue",
    "white",
    "black",
    "brown",
    "dark",
    "bright",
    "warm",
    "cold",
    "cool",
    "hot",
    "dry",
    "wet",
    "fresh",
    "sweet",
    "strong",
    "weak",
    "heavy",
    "light",
    "quiet",
    "busy",
    "happy",
    "sad",
    "tired",
    "hungry",
    "sick",
    "kind",
    "gentle",
    "brave",
    "wise",
    "clever",
    "proud",
    "calm",
    "good",
    "bad",
    "great",
    "many",
    "much",
    "few",
    "several",
    "other",
    "such",
    "same",
    "own",
    "last",
    "next",
    "first",
    "second",
    "third",
    "empty",
    "full",
    "rare",
    "broken",
    "frozen",
    "lonely",
    "friendly",
    "royal",
    "simple",
    "difficult",
    "easy",
    "distant",
    "former",
    "tiny",
    "torn",
    "snowy",
    "sandy",
    "dusty",
    "crowded",
    "secret",
    "lost",
    "free",
    "whole",
    "open",
    "close",
    "real",
    "true",
    "worried",
    "patient",
    "careful",
    "curious",
    "colorful",
    "beautiful",
    "injured",
    "sleeping",
    "hidden",
];

/// Irregular past and base forms that suffix rules miss.
const VERB: &[&str] = &[
    "sat",
    "ran",
    "went",
    "came",
    "saw",
    "took",
    "gave",
    "found",
    "stood",
    "told",
    "made",
    "held",
    "built",
    "fell",
    "rose",
    "shook",
    "led",
    "sold",
    "bought",
    "brought",
    "thought",
    "lost",
    "won",
    "rode",
    "drank",
    "ate",
    "slept",
    "kept",
    "left",
    "felt",
    "grew",
    "blew",
    "flew",
    "wrote",
    "read",
    "sang",
    "swam",
    "knew",
    "began",
    "stole",
    "crept",
    "fed",
    "lay",
    "got",
    "put",
    "set",
    "cut",
    "let",
    "say",
    "said",
    "go",
    "come",
    "see",
    "take",
    "give",
    "make",
    "find",
    "know",
    "think",
    "tell",
    "become",
    "leave",
    "feel",
    "bring",
    "begin",
    "keep",
    "hold",
    "write",
    "stand",
    "hear",
    "run",
    "sit",
    "eat",
    "drink",
    "sleep",
    "grow",
    "fly",
    "sing",
    "swim",
    "buy",
    "sell",
    "build",
    "walk",
    "look",
    "play",
    "carry",
    "watch",
    "shone",
    "fixed",
    "understood",
    "rest",
    "move",
    "visit",
    "lift",
    "wait",
    "help",
    "paid",
    "pay",
    "met",
    "spent",
    "sent",
    "heard",
    "caught",
    "taught",
    "meant",
    "hid",
    "struck",
    "wore",
    "drove",
    "spoke",
    "broke",
    "chose",
    "threw",
    "drew",
    "hung",
    "dug",
    "spun",
    "swept",
];

const ADJ_LY: &[&str] = &[
    "family", "friendly", "lonely", "holy", "ugly", "silly", "early", "only", "daily", "likely", "lovely", "elderly",
    "curly", "jolly", "fly", "reply", "supply", "july", "italy", "ally",
];

const ADJ_SUFFIXES: &[&str] = &[
    "ous", "ful", "ive", "able", "ible", "less", "ish", "ical", "ic", "ary", "est",
];

const SYMBOLS: &str = "$%+<=>^`|~#&*@\\/€£¥§©®°±×÷";

fn contains(list: &[&str], word: &str) -> bool {
    list.contains(&word)
}

fn looks_numeric(word: &str) -> bool {
    word.chars().next().is_some_and(|c| c.is_ascii_digit())
        && word.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',')
}

/// Tags one sentence. `words` are surface forms in order.
pub fn tag(words: &[&str]) -> Vec<Upos> {
    let mut tags: Vec<Upos> = Vec::with_capacity(words.len());
    let mut first_word = true;
    for (i, &surface) in words.iter().enumerate() {
        let next = words.get(i + 1).map(|w| w.to_lowercase());
        let prev = i.checked_sub(1).map(|p| (words[p].to_lowercase(), tags[p]));
        let t = tag_word(surface, first_word, prev.as_ref(), next.as_deref());
        // punctuation (e.g. an opening quote) keeps the next word sentence-initial
        if t.is_word() {
            first_word = false;
        }
        tags.push(t);
    }
    tags
}

fn tag_word(surface: &str, sentence_initial: bool, prev: Option<&(String, Upos)>, next: Option<&str>) -> Upos {
    let mut chars = surface.chars();
    let Some(c0) = chars.next() else {
        return Upos::X;
    };
    if surface.chars().all(|c| !c.is_alphanumeric()) {
        return if surface.chars().all(|c| SYMBOLS.contains(c)) {
            Upos::Sym
        } else {
            Upos::Punct
        };
    }
    if looks_numeric(surface) {
        return Upos::Num;
    }
    let lower = surface.to_lowercase();
    let lower = lower.as_str();

    // contractions such as "don't", "she's" start with a closed-class form
    if lower.ends_with("n't") || lower.ends_with("n’t") {
        return Upos::Aux;
    }
    if let Some((head, _)) = lower.split_once(['\'', '’']) {
        if contains(AUX_ALWAYS, head) || contains(HAVE, head) || contains(DO, head) {
            return Upos::Aux;
        }
        if contains(PRON, head) {
            return Upos::Pron;
        }
    }

    if contains(DET, lower) {
        return Upos::Det;
    }
    if contains(PRON, lower) {
        return Upos::Pron;
    }
    if contains(AUX_ALWAYS, lower) {
        return Upos::Aux;
    }
    if contains(HAVE, lower) {
        return if next.is_some_and(is_participle_like) {
            Upos::Aux
        } else {
            Upos::Verb
        };
    }
    if contains(DO, lower) {
        return if next.is_some_and(|n| n == "not" || n == "n't") {
            Upos::Aux
        } else {
            Upos::Verb
        };
    }
    if contains(PART, lower) {
        return Upos::Part;
    }
    if lower == "to" {
        return if next.is_some_and(|n| contains(VERB, n)) {
            Upos::Part
        } else {
            Upos::Adp
        };
    }
    if contains(CCONJ, lower) {
        return Upos::Cconj;
    }
    if contains(ADP, lower) {
        return Upos::Adp;
    }
    if contains(SCONJ, lower) {
        return Upos::Sconj;
    }
    if contains(INTJ, lower) {
        return Upos::Intj;
    }
    if contains(NUM_WORDS, lower) {
        return Upos::Num;
    }

    // open class
    if c0.is_uppercase() && !sentence_initial {
        return Upos::Propn;
    }
    if contains(ADV, lower) {
        return Upos::Adv;
    }
    if contains(ADJ, lower) {
        return Upos::Adj;
    }
    if contains(VERB, lower) {
        return Upos::Verb;
    }
    if lower.len() > 4 && lower.ends_with("ly") && !contains(ADJ_LY, lower) {
        return Upos::Adv;
    }
    if contains(ADJ_LY, lower) {
        return if lower == "family" { Upos::Noun } else { Upos::Adj };
    }
    if let Some((p, ptag)) = prev {
        let after_modal =
            *ptag == Upos::Aux && !contains(&["is", "are", "was", "were", "am", "be", "been", "being"], p.as_str());
        if after_modal || *ptag == Upos::Part && p == "to" {
            return Upos::Verb;
        }
    }
    if lower.len() > 4 && (lower.ends_with("ed") || lower.ends_with("ing")) {
        return Upos::Verb;
    }
    if lower.len() > 5 && ADJ_SUFFIXES.iter().any(|s| lower.ends_with(s)) {
        return Upos::Adj;
    }
    Upos::Noun
}

fn is_participle_like(word: &str) -> bool {
    (word.len() > 3 && (word.ends_with("ed") || word.ends_with("en")))
        || contains(
            &[
                "been", "done", "gone", "seen", "made", "found", "told", "built", "lost", "won", "left", "kept",
                "held", "brought", "bought", "sold", "read", "felt", "not", "never", "already", "just", "always",
            ],
            word,
        )
}

#[cfg(test)]
mod tests {
    use super::*;
    use Upos::*;

    #[test]
    fn cat_sat_on_the_mat() {
        let words = ["The", "cat", "sat", "on", "the", "mat", "."];
        assert_eq!(tag(&words), vec![Det, Noun, Verb, Adp, Det, Noun, Punct]);
    }

    #[test]
    fn partition_matches_tag_classes() {
        for t in [Det, Adp, Pron, Cconj, Sconj, Aux, Part, Intj, Punct, Sym, Num] {
            assert!(t.is_functional(), "{t:?}");
        }
        for t in [Noun, Propn, Verb, Adj, Adv] {
            assert!(!t.is_functional(), "{t:?}");
        }
    }

    #[test]
    fn auxiliaries_and_main_verbs() {
        let tags = tag(&["She", "has", "walked", "home", "."]);
        assert_eq!(tags[1], Aux);
        let tags = tag(&["She", "has", "a", "dog", "."]);
        assert_eq!(tags[1], Verb);
        let tags = tag(&["They", "did", "not", "go", "."]);
        assert_eq!(&tags[1..4], &[Aux, Part, Verb]);
    }

    #[test]
    fn proper_nouns_need_mid_sentence_capital() {
        let tags = tag(&["Yesterday", "Maria", "visited", "Paris", "quickly", "."]);
        assert_eq!(tags, vec![Adv, Propn, Verb, Propn, Adv, Punct]);
    }

    #[test]
    fn numbers_and_symbols() {
        let tags = tag(&["He", "paid", "$", "3.50", "for", "two", "apples", "!"]);
        assert_eq!(tags, vec![Pron, Verb, Sym, Num, Adp, Num, Noun, Punct]);
    }

    #[test]
    fn contractions_are_functional() {
        let tags = tag(&["I", "don't", "know", "."]);
        assert_eq!(tags[1], Aux);
    }
}
