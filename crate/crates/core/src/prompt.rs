//! Condenses a VLM prompt into a short text for the embedding model.
//!
//! Three passes: instructional boilerplate is cut out, stop words are
//! dropped and survivors lemmatized, and if the result still overflows the
//! text encoder's context window, words are pruned by part of speech
//! (nouns kept longest, then adjectives, then verbs, everything else first).
//!
//! The word tables are small embedded lists rather than a statistical
//! tagger, so results are deterministic and the crate stays self-contained.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use regex::Regex;

use crate::error::{Error, Result};

const DEFAULT_STOP_WORDS: &str = include_str!("../data/stopwords.txt");
const DEFAULT_LEMMAS: &str = include_str!("../data/lemmas.tsv");
const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.tsv");
const DEFAULT_INSTRUCTIONS: &str = include_str!("../data/instructions.txt");

/// Coarse part-of-speech classes. Declaration order is pruning priority,
/// lowest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pos {
    Other,
    Verb,
    Adj,
    Noun,
}

impl std::str::FromStr for Pos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NOUN" => Ok(Pos::Noun),
            "ADJ" => Ok(Pos::Adj),
            "VERB" => Ok(Pos::Verb),
            "OTHER" => Ok(Pos::Other),
            other => Err(Error::Parse {
                what: "part-of-speech tag".into(),
                reason: format!("unknown tag {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenizedPrompt {
    pub tokens: Vec<Token>,
    /// Whitespace word count plus begin/end markers; a cheap upper-bound
    /// guess before the real tokenizer is consulted.
    pub token_count_estimate: usize,
}

impl TokenizedPrompt {
    pub fn lemmas(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.lemma.as_str()).collect()
    }

    pub fn joined_lemmas(&self) -> String {
        self.lemmas().join(" ")
    }
}

/// Removes every occurrence of the given phrases, case-insensitively.
#[derive(Debug, Clone)]
pub struct InstructionStripper {
    pattern: Option<Regex>,
}

impl InstructionStripper {
    pub fn new<S: AsRef<str>>(phrases: &[S]) -> Result<Self> {
        let alternatives: Vec<String> = phrases
            .iter()
            .map(|p| p.as_ref().trim())
            .filter(|p| !p.is_empty())
            .map(phrase_pattern)
            .collect();
        if alternatives.is_empty() {
            return Ok(Self { pattern: None });
        }
        let src = format!(r"(?i)(?:{})[ \t]*[.!;:]*", alternatives.join("|"));
        let pattern = Regex::new(&src).map_err(|e| Error::Parse {
            what: "instruction blacklist".into(),
            reason: e.to_string(),
        })?;
        Ok(Self {
            pattern: Some(pattern),
        })
    }

    /// Parses a blacklist file body: one phrase per line, `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(&table_lines(text).collect::<Vec<_>>())
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&read_table(path.as_ref())?)
    }

    pub fn strip(&self, prompt: &str) -> String {
        let cut = match &self.pattern {
            Some(p) => p.replace_all(prompt, " "),
            None => prompt.into(),
        };
        cut.split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

impl Default for InstructionStripper {
    fn default() -> Self {
        Self::parse(DEFAULT_INSTRUCTIONS).expect("embedded blacklist is valid")
    }
}

fn phrase_pattern(phrase: &str) -> String {
    phrase
        .split_whitespace()
        .map(|w| regex::escape(w).replace('\'', "['’]"))
        .collect::<Vec<_>>()
        .join(r"\s+")
}

/// Convenience wrapper over the default blacklist.
pub fn strip_instructions(prompt: &str) -> String {
    InstructionStripper::default().strip(prompt)
}

/// Stop-word list, irregular lemma table and POS lexicon.
#[derive(Debug, Clone)]
pub struct WordTables {
    stop_words: HashSet<String>,
    irregular: HashMap<String, (String, Pos)>,
    lexicon: HashMap<String, Pos>,
}

impl Default for WordTables {
    fn default() -> Self {
        Self::parse(DEFAULT_STOP_WORDS, DEFAULT_LEMMAS, DEFAULT_LEXICON)
            .expect("embedded word tables are valid")
    }
}

impl WordTables {
    pub fn parse(stop_words: &str, lemmas: &str, lexicon: &str) -> Result<Self> {
        let stop_words = table_lines(stop_words).map(str::to_lowercase).collect();
        let mut irregular = HashMap::new();
        for line in table_lines(lemmas) {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::Parse {
                    what: "lemma table".into(),
                    reason: format!("expected 3 tab-separated columns in {line:?}"),
                });
            }
            irregular.insert(cols[0].to_lowercase(), (cols[1].to_lowercase(), cols[2].parse()?));
        }
        let mut lex = HashMap::new();
        for line in table_lines(lexicon) {
            let (word, pos) = line.split_once('\t').ok_or_else(|| Error::Parse {
                what: "POS lexicon".into(),
                reason: format!("expected word<TAB>tag in {line:?}"),
            })?;
            lex.insert(word.to_lowercase(), pos.parse()?);
        }
        Ok(Self {
            stop_words,
            irregular,
            lexicon: lex,
        })
    }

    /// Loads tables from files; `None` keeps the embedded default for that table.
    pub fn from_paths(stop_words: Option<&Path>, lemmas: Option<&Path>, lexicon: Option<&Path>) -> Result<Self> {
        let load = |p: Option<&Path>, default: &str| -> Result<String> {
            match p {
                Some(p) => read_table(p),
                None => Ok(default.to_owned()),
            }
        };
        Self::parse(
            &load(stop_words, DEFAULT_STOP_WORDS)?,
            &load(lemmas, DEFAULT_LEMMAS)?,
            &load(lexicon, DEFAULT_LEXICON)?,
        )
    }

    pub fn is_stop_word(&self, word: &str) -> bool {
        self.stop_words.contains(word)
    }

    fn lexicon_has(&self, word: &str, pos: Pos) -> bool {
        self.lexicon.get(word) == Some(&pos)
    }

    /// Tags a lowercase word from the tables, falling back to suffix rules.
    pub fn tag(&self, word: &str) -> Pos {
        if let Some((_, pos)) = self.irregular.get(word) {
            return *pos;
        }
        if let Some(&pos) = self.lexicon.get(word) {
            return pos;
        }
        if word.chars().any(|c| c.is_ascii_digit()) {
            return Pos::Other;
        }
        for pos in [Pos::Noun, Pos::Verb, Pos::Adj] {
            if deinflections(word, pos).iter().any(|c| self.lexicon_has(c, pos)) {
                return pos;
            }
        }
        const ADJ_SUFFIXES: [&str; 9] = ["ous", "ful", "ive", "able", "ible", "less", "ish", "ical", "ic"];
        if word.ends_with("ly") {
            Pos::Other
        } else if (word.ends_with("ing") || word.ends_with("ed")) && has_vowel(&word[..word.len() - 2]) {
            Pos::Verb
        } else if ADJ_SUFFIXES.iter().any(|s| word.ends_with(s) && word.len() > s.len() + 2) {
            Pos::Adj
        } else {
            Pos::Noun
        }
    }

    /// Reduces a lowercase word to its dictionary form for the given class.
    pub fn lemmatize(&self, word: &str, pos: Pos) -> String {
        if let Some((lemma, _)) = self.irregular.get(word) {
            return lemma.clone();
        }
        if self.lexicon.contains_key(word) {
            return word.to_owned();
        }
        let candidates = deinflections(word, pos);
        if let Some(hit) = candidates.iter().find(|c| self.lexicon.contains_key(c.as_str())) {
            return hit.clone();
        }
        match pos {
            Pos::Noun => noun_fallback(word),
            Pos::Verb => verb_fallback(word),
            Pos::Adj | Pos::Other => word.to_owned(),
        }
    }
}

/// Candidate base forms, tried against the lexicon in order.
fn deinflections(word: &str, pos: Pos) -> Vec<String> {
    let mut out = Vec::new();
    let strip = |suffix: &str| word.strip_suffix(suffix).filter(|s| s.len() >= 2);
    match pos {
        Pos::Noun => {
            if let Some(s) = strip("ies") {
                out.push(format!("{s}y"));
            }
            if let Some(s) = strip("es") {
                out.push(s.to_owned());
            }
            if let Some(s) = strip("s") {
                if !word.ends_with("ss") {
                    out.push(s.to_owned());
                }
            }
        }
        Pos::Verb => {
            if let Some(s) = strip("ies") {
                out.push(format!("{s}y"));
            }
            if let Some(s) = strip("es") {
                out.push(s.to_owned());
            }
            if let Some(s) = strip("s") {
                out.push(s.to_owned());
            }
            for suffix in ["ing", "ed"] {
                if let Some(s) = strip(suffix) {
                    out.push(s.to_owned());
                    out.push(format!("{s}e"));
                    if let Some(u) = undouble(s) {
                        out.push(u);
                    }
                    if suffix == "ed" {
                        if let Some(t) = s.strip_suffix('i') {
                            out.push(format!("{t}y"));
                        }
                    }
                }
            }
        }
        Pos::Adj => {
            for suffix in ["est", "er"] {
                if let Some(s) = strip(suffix) {
                    out.push(s.to_owned());
                    out.push(format!("{s}e"));
                    if let Some(u) = undouble(s) {
                        out.push(u);
                    }
                    if let Some(t) = s.strip_suffix('i') {
                        out.push(format!("{t}y"));
                    }
                }
            }
        }
        Pos::Other => {}
    }
    out
}

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn has_vowel(s: &str) -> bool {
    s.bytes().enumerate().any(|(i, c)| is_vowel(c) || (c == b'y' && i > 0))
}

fn undouble(stem: &str) -> Option<String> {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 3 && b[n - 1] == b[n - 2] && !is_vowel(b[n - 1]) && !matches!(b[n - 1], b'l' | b's' | b'z' | b'f') {
        Some(stem[..n - 1].to_owned())
    } else {
        None
    }
}

fn vowel_groups(s: &str) -> usize {
    let mut groups = 0;
    let mut prev = false;
    for (i, c) in s.bytes().enumerate() {
        let v = is_vowel(c) || (c == b'y' && i > 0);
        if v && !prev {
            groups += 1;
        }
        prev = v;
    }
    groups
}

fn noun_fallback(word: &str) -> String {
    if word.len() <= 3 || word.ends_with("ss") || word.ends_with("us") || word.ends_with("is") {
        return word.to_owned();
    }
    if let Some(s) = word.strip_suffix("ies") {
        return format!("{s}y");
    }
    for suffix in ["sses", "shes", "ches", "xes", "zzes"] {
        if word.ends_with(suffix) {
            return word[..word.len() - 2].to_owned();
        }
    }
    match word.strip_suffix('s') {
        Some(s) => s.to_owned(),
        None => word.to_owned(),
    }
}

fn verb_fallback(word: &str) -> String {
    for suffix in ["ing", "ed"] {
        let Some(stem) = word.strip_suffix(suffix) else {
            continue;
        };
        if stem.len() < 2 || !has_vowel(stem) {
            continue;
        }
        if let Some(u) = undouble(stem) {
            return u;
        }
        if suffix == "ed" {
            if let Some(t) = stem.strip_suffix('i') {
                return format!("{t}y");
            }
        }
        let b = stem.as_bytes();
        let n = b.len();
        // one-syllable consonant-vowel-consonant stems lost a final "e"
        let cvc = n >= 2
            && !is_vowel(b[n - 1])
            && !matches!(b[n - 1], b'w' | b'x' | b'y')
            && is_vowel(b[n - 2])
            && (n == 2 || !is_vowel(b[n - 3]));
        if cvc && vowel_groups(stem) == 1 {
            return format!("{stem}e");
        }
        return stem.to_owned();
    }
    if let Some(s) = word.strip_suffix("ies").filter(|s| s.len() >= 2) {
        return format!("{s}y");
    }
    if word.len() > 3 && word.ends_with('s') && !word.ends_with("ss") {
        return word[..word.len() - 1].to_owned();
    }
    word.to_owned()
}

/// Full preprocessing stage: blacklist, stop words, lemmas, POS.
#[derive(Debug, Clone, Default)]
pub struct PromptPreprocessor {
    pub stripper: InstructionStripper,
    pub tables: WordTables,
}

impl PromptPreprocessor {
    pub fn strip_instructions(&self, prompt: &str) -> String {
        self.stripper.strip(prompt)
    }

    /// Lowercases, splits on anything that is not a letter or digit, drops
    /// stop words, then tags and lemmatizes what is left.
    pub fn normalize(&self, text: &str) -> TokenizedPrompt {
        let lower = text.to_lowercase();
        let tokens: Vec<Token> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty() && !self.tables.is_stop_word(w))
            .map(|w| {
                let pos = self.tables.tag(w);
                Token {
                    surface: w.to_owned(),
                    lemma: self.tables.lemmatize(w, pos),
                    pos,
                }
            })
            .collect();
        let token_count_estimate = tokens.len() + 2;
        TokenizedPrompt {
            tokens,
            token_count_estimate,
        }
    }

    /// Strip, normalize and prune to the context window. Falls back to the
    /// stripped prompt if every word was a stop word, and to the raw prompt
    /// if stripping removed everything.
    pub fn prepare(&self, prompt: &str, window: usize, count_fn: &dyn Fn(&str) -> usize) -> String {
        let stripped = self.strip_instructions(prompt);
        let tp = self.normalize(&stripped);
        if tp.tokens.is_empty() {
            return if stripped.is_empty() { prompt.trim().to_owned() } else { stripped };
        }
        prune_to_window(&tp, window, count_fn)
    }
}

/// Drops words until `count_fn` of the joined lemmas fits in `window`.
///
/// Each step removes the last remaining word of the lowest-priority class
/// present. If even a single word overflows, that word is returned anyway
/// and the tokenizer truncates it downstream.
pub fn prune_to_window(tp: &TokenizedPrompt, window: usize, count_fn: &dyn Fn(&str) -> usize) -> String {
    let mut kept: Vec<&Token> = tp.tokens.iter().collect();
    let join = |kept: &[&Token]| kept.iter().map(|t| t.lemma.as_str()).collect::<Vec<_>>().join(" ");
    loop {
        let text = join(&kept);
        if kept.len() <= 1 || count_fn(&text) <= window {
            return text;
        }
        let lowest = kept.iter().map(|t| t.pos).min().expect("non-empty");
        let victim = kept.iter().rposition(|t| t.pos == lowest).expect("class present");
        kept.remove(victim);
    }
}

fn table_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

fn read_table(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(n: &str) -> usize {
        n.split_whitespace().count() + 2
    }

    #[test]
    fn strips_vqa_boilerplate() {
        assert_eq!(
            strip_instructions("What color is the car? Answer the question using a single word or phrase."),
            "What color is the car?"
        );
        assert_eq!(strip_instructions(""), "");
        assert_eq!(strip_instructions("Is the dog asleep?"), "Is the dog asleep?");
        assert_eq!(
            strip_instructions("ANSWER THE QUESTION USING A SINGLE WORD OR PHRASE. x answer the question using a single word or phrase"),
            "x"
        );
        assert_eq!(
            strip_instructions("Which one? A. cat B. dog Answer with the option’s letter from the given choices directly."),
            "Which one? A. cat B. dog"
        );
    }

    #[test]
    fn custom_blacklist_with_comments() {
        let s = InstructionStripper::parse("# header\n\nbe brief\n").unwrap();
        assert_eq!(s.strip("Count the cats. Be brief!"), "Count the cats.");
    }

    #[test]
    fn lemmas_of_examples() {
        let pp = PromptPreprocessor::default();
        assert_eq!(pp.normalize("running").lemmas(), ["run"]);
        assert!(pp.normalize("the to of").tokens.is_empty());
        assert_eq!(pp.normalize("cars").lemmas(), ["car"]);
        assert_eq!(
            pp.normalize("What color is the car on the left").lemmas(),
            ["color", "car", "left"]
        );
    }

    #[test]
    fn lemmatizer_spot_checks() {
        let pp = PromptPreprocessor::default();
        let cases = [
            ("sitting", "sit"),
            ("making", "make"),
            ("riding", "ride"),
            ("looking", "look"),
            ("flying", "fly"),
            ("holding", "hold"),
            ("buses", "bus"),
            ("boxes", "box"),
            ("dishes", "dish"),
            ("horses", "horse"),
            ("children", "child"),
            ("bigger", "big"),
            ("larger", "large"),
            ("painted", "paint"),
            ("building", "building"),
            ("ceiling", "ceiling"),
            ("umbrellas", "umbrella"),
            ("glasses", "glass"),
        ];
        for (w, lemma) in cases {
            assert_eq!(pp.normalize(w).lemmas(), [lemma], "{w}");
        }
    }

    #[test]
    fn pos_tags() {
        let t = WordTables::default();
        assert_eq!(t.tag("car"), Pos::Noun);
        assert_eq!(t.tag("red"), Pos::Adj);
        assert_eq!(t.tag("holding"), Pos::Verb);
        assert_eq!(t.tag("quickly"), Pos::Other);
        assert_eq!(t.tag("zebras"), Pos::Noun);
        assert_eq!(t.tag("glorious"), Pos::Adj);
        assert_eq!(t.tag("2023"), Pos::Other);
    }

    fn tok(lemma: &str, pos: Pos) -> Token {
        Token {
            surface: lemma.into(),
            lemma: lemma.into(),
            pos,
        }
    }

    #[test]
    fn under_budget_keeps_everything() {
        let tp = TokenizedPrompt {
            tokens: vec![tok("red", Pos::Adj), tok("car", Pos::Noun), tok("park", Pos::Verb)],
            token_count_estimate: 5,
        };
        assert_eq!(prune_to_window(&tp, 77, &words), "red car park");
    }

    #[test]
    fn prunes_other_then_verb() {
        let tp = TokenizedPrompt {
            tokens: vec![
                tok("n1", Pos::Noun),
                tok("v1", Pos::Verb),
                tok("n2", Pos::Noun),
                tok("a1", Pos::Adj),
                tok("o1", Pos::Other),
            ],
            token_count_estimate: 7,
        };
        // 5 words + 2 markers = 7; window 5 forces two removals
        assert_eq!(prune_to_window(&tp, 5, &words), "n1 n2 a1");
    }

    #[test]
    fn removal_runs_back_to_front_within_class() {
        let tp = TokenizedPrompt {
            tokens: vec![tok("a", Pos::Verb), tok("b", Pos::Verb), tok("c", Pos::Verb)],
            token_count_estimate: 5,
        };
        assert_eq!(prune_to_window(&tp, 3, &words), "a");
        assert_eq!(prune_to_window(&tp, 4, &words), "a b");
        assert_eq!(prune_to_window(&tp, 5, &words), "a b c");
    }

    #[test]
    fn oversized_single_token_is_returned() {
        let tp = TokenizedPrompt {
            tokens: vec![tok("x", Pos::Other), tok("y", Pos::Noun)],
            token_count_estimate: 4,
        };
        assert_eq!(prune_to_window(&tp, 2, &words), "y");
        assert_eq!(prune_to_window(&TokenizedPrompt::default(), 2, &words), "");
    }

    #[test]
    fn prepare_falls_back_when_all_stop_words() {
        let pp = PromptPreprocessor::default();
        assert_eq!(pp.prepare("Is it?", 77, &words), "Is it?");
        assert_eq!(
            pp.prepare("Answer the question using a single word or phrase.", 77, &words),
            "Answer the question using a single word or phrase."
        );
        assert_eq!(
            pp.prepare("What color is the car? Answer the question using a single word or phrase.", 77, &words),
            "color car"
        );
    }
}
