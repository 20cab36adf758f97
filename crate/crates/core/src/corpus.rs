//! Template sentence corpus: active/passive sentences from subject-verb-object
//! triples, frequency filtering, and pattern extraction from tagged text.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetId, SentenceStimulus, Voice, WordToken};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SvoTriple {
    pub subject: String,
    pub verb: String,
    pub object: String,
    pub frequency: u64,
}

/// `subject<TAB>verb<TAB>object<TAB>frequency` lines; `#` starts a comment.
pub fn parse_triples(text: &str) -> Result<Vec<SvoTriple>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let bad = |msg: &str| Error::format("triples", format!("line {}: {msg}", i + 1));
        if fields.len() != 4 {
            return Err(bad(&format!("{} fields, expected 4", fields.len())));
        }
        if fields[..3].iter().any(|f| f.is_empty()) {
            return Err(bad("empty field"));
        }
        let frequency = fields[3].parse::<u64>().map_err(|e| bad(&format!("frequency: {e}")))?;
        out.push(SvoTriple {
            subject: fields[0].to_lowercase(),
            verb: fields[1].to_lowercase(),
            object: fields[2].to_lowercase(),
            frequency,
        });
    }
    Ok(out)
}

pub fn load_triples(path: &Path) -> Result<Vec<SvoTriple>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_triples(&text)
}

pub fn triples_to_tsv(triples: &[SvoTriple]) -> String {
    triples
        .iter()
        .map(|t| format!("{}\t{}\t{}\t{}\n", t.subject, t.verb, t.object, t.frequency))
        .collect()
}

/// Newline-delimited entries, lowercased; blank lines and `#` comments skipped.
pub fn load_allowlist(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect())
}

/// Keep triples with `frequency >= threshold` whose verb and both entities
/// are allowlisted, sorted by (subject, verb, object, frequency).
pub fn subsample(
    triples: &[SvoTriple],
    threshold: u64,
    verbs: &BTreeSet<String>,
    entities: &BTreeSet<String>,
) -> Vec<SvoTriple> {
    let mut out: Vec<SvoTriple> = triples
        .iter()
        .filter(|t| {
            t.frequency >= threshold
                && verbs.contains(&t.verb)
                && entities.contains(&t.subject)
                && entities.contains(&t.object)
        })
        .cloned()
        .collect();
    out.sort();
    out
}

/// Irregular forms looked up before the suffix rules apply.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Inflector {
    forms: HashMap<String, (String, String)>,
}

impl Inflector {
    /// `lemma<TAB>past<TAB>participle` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut forms = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').map(str::trim).collect();
            if f.len() != 3 || f.iter().any(|x| x.is_empty()) {
                return Err(Error::format(
                    "inflection table",
                    format!("line {}: expected lemma, past, participle", i + 1),
                ));
            }
            forms.insert(f[0].to_string(), (f[1].to_string(), f[2].to_string()));
        }
        Ok(Self { forms })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The table shipped with the crate.
    pub fn builtin() -> &'static Inflector {
        static TABLE: OnceLock<Inflector> = OnceLock::new();
        TABLE.get_or_init(|| Inflector::parse(include_str!("../data/inflections.tsv")).expect("shipped table parses"))
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    pub fn past(&self, lemma: &str) -> Result<String> {
        check_lemma(lemma)?;
        Ok(match self.forms.get(lemma) {
            Some((past, _)) => past.clone(),
            None => regular_ed(lemma),
        })
    }

    pub fn participle(&self, lemma: &str) -> Result<String> {
        check_lemma(lemma)?;
        Ok(match self.forms.get(lemma) {
            Some((_, part)) => part.clone(),
            None => regular_ed(lemma),
        })
    }
}

fn check_lemma(lemma: &str) -> Result<()> {
    if lemma.is_empty() || !lemma.bytes().all(|b| b.is_ascii_lowercase()) {
        return Err(Error::invalid(format!(
            "verb lemma must be lowercase letters, got `{lemma}`"
        )));
    }
    Ok(())
}

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn syllables(word: &[u8]) -> usize {
    let mut groups = 0;
    let mut prev = false;
    for &c in word {
        let v = is_vowel(c);
        if v && !prev {
            groups += 1;
        }
        prev = v;
    }
    groups
}

/// Suffix rules: `-e` takes `-d`, consonant + `y` becomes `-ied`, a
/// one-syllable consonant-vowel-consonant ending doubles its final consonant
/// (except w, x, y), anything else takes `-ed`.
fn regular_ed(lemma: &str) -> String {
    let b = lemma.as_bytes();
    let n = b.len();
    let last = b[n - 1];
    if last == b'e' {
        return format!("{lemma}d");
    }
    if last == b'y' && n >= 2 && !is_vowel(b[n - 2]) {
        return format!("{}ied", &lemma[..n - 1]);
    }
    if n >= 3
        && !is_vowel(last)
        && !matches!(last, b'w' | b'x' | b'y')
        && is_vowel(b[n - 2])
        && !is_vowel(b[n - 3])
        && syllables(b) == 1
    {
        return format!("{lemma}{}ed", last as char);
    }
    format!("{lemma}ed")
}

/// Simple past with the shipped irregular table.
pub fn past_tense(lemma: &str) -> Result<String> {
    Inflector::builtin().past(lemma)
}

pub fn past_participle(lemma: &str) -> Result<String> {
    Inflector::builtin().participle(lemma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSentence {
    pub stimulus: SentenceStimulus,
    pub triple: SvoTriple,
    pub template: Voice,
}

fn tok(text: &str, pos: &str, id: &str, position: usize) -> WordToken {
    WordToken {
        text: text.to_string(),
        pos: pos.to_string(),
        sentence_id: id.to_string(),
        position,
    }
}

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

/// Active: "the S V-past the O". Passive: "the O was V-participle by the S".
pub fn generate_with(
    inflector: &Inflector,
    triple: &SvoTriple,
    voice: Voice,
    sentence_id: &str,
) -> Result<GeneratedSentence> {
    let subject = words(&triple.subject);
    let object = words(&triple.object);
    if subject.is_empty() || object.is_empty() {
        return Err(Error::invalid("triple has an empty subject or object"));
    }
    let mut spec: Vec<(String, &str)> = Vec::new();
    let push_np = |spec: &mut Vec<(String, &str)>, np: &[&str]| {
        spec.push(("the".into(), "DT"));
        spec.extend(np.iter().map(|w| (w.to_lowercase(), "NN")));
    };
    match voice {
        Voice::Active => {
            push_np(&mut spec, &subject);
            spec.push((inflector.past(&triple.verb)?, "VBD"));
            push_np(&mut spec, &object);
        }
        Voice::Passive => {
            push_np(&mut spec, &object);
            spec.push(("was".into(), "VBD"));
            spec.push((inflector.participle(&triple.verb)?, "VBN"));
            spec.push(("by".into(), "IN"));
            push_np(&mut spec, &subject);
        }
    }
    let tokens = spec
        .iter()
        .enumerate()
        .map(|(i, (w, p))| tok(w, p, sentence_id, i))
        .collect();
    let stimulus = SentenceStimulus {
        sentence_id: sentence_id.to_string(),
        tokens,
        voice,
        dataset_id: DatasetId::Generated,
    };
    stimulus.validate()?;
    Ok(GeneratedSentence {
        stimulus,
        triple: triple.clone(),
        template: voice,
    })
}

pub fn generate(triple: &SvoTriple, voice: Voice, sentence_id: &str) -> Result<GeneratedSentence> {
    generate_with(Inflector::builtin(), triple, voice, sentence_id)
}

/// Active and passive sentence for every triple, deduplicated by text
/// (first occurrence kept) and numbered `{prefix}-NNNNNN`.
pub fn generate_corpus(triples: &[SvoTriple], prefix: &str) -> Result<Vec<GeneratedSentence>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for t in triples {
        for voice in [Voice::Active, Voice::Passive] {
            let id = format!("{prefix}-{:06}", out.len());
            let g = generate(t, voice, &id)?;
            if seen.insert(g.stimulus.text()) {
                out.push(g);
            }
        }
    }
    Ok(out)
}

/// A tagged sentence matching one of the two templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternMatch {
    pub stimulus: SentenceStimulus,
    pub voice: Voice,
    pub subject: String,
    /// Main verb as it appears: the simple past in actives, the participle
    /// in passives.
    pub verb: String,
    pub object: String,
    /// Tokens after the final noun group, kept verbatim.
    pub trailing: Vec<String>,
}

impl PatternMatch {
    pub fn has_trailing_clause(&self) -> bool {
        !self.trailing.is_empty()
    }
}

struct Cursor<'a> {
    toks: &'a [WordToken],
    at: usize,
}

impl Cursor<'_> {
    fn word(&mut self, w: &str) -> Option<()> {
        let t = self.toks.get(self.at)?;
        (t.text == w).then(|| self.at += 1)
    }

    fn run(&mut self, pred: fn(&WordToken) -> bool) -> Option<String> {
        let start = self.at;
        while self.toks.get(self.at).is_some_and(pred) {
            self.at += 1;
        }
        (self.at > start).then(|| {
            self.toks[start..self.at]
                .iter()
                .map(|t| t.text.as_str())
                .collect::<Vec<_>>()
                .join(" ")
        })
    }
}

fn match_passive(toks: &[WordToken]) -> Option<(String, String, String, usize)> {
    let mut c = Cursor { toks, at: 0 };
    c.word("the")?;
    let object = c.run(WordToken::is_noun)?;
    c.word("was")?;
    let verb = c.run(WordToken::is_verb)?;
    c.word("by")?;
    c.word("the")?;
    let subject = c.run(WordToken::is_noun)?;
    Some((subject, verb, object, c.at))
}

fn match_active(toks: &[WordToken]) -> Option<(String, String, String, usize)> {
    let mut c = Cursor { toks, at: 0 };
    c.word("the")?;
    let subject = c.run(WordToken::is_noun)?;
    let verb = c.run(WordToken::is_verb)?;
    c.word("the")?;
    let object = c.run(WordToken::is_noun)?;
    Some((subject, verb, object, c.at))
}

/// Sentences that open with "the [noun+] was [verb+] by the [noun+]" or
/// "the [noun+] [verb+] the [noun+]". Punctuation tokens are dropped first.
pub fn extract_patterns(sentences: &[SentenceStimulus]) -> Vec<PatternMatch> {
    let mut out = Vec::new();
    for s in sentences {
        let toks: Vec<WordToken> = s
            .tokens
            .iter()
            .filter(|t| t.pos != "." && t.text != ".")
            .cloned()
            .collect();
        let (voice, found) = match match_passive(&toks) {
            Some(m) => (Voice::Passive, m),
            None => match match_active(&toks) {
                Some(m) => (Voice::Active, m),
                None => continue,
            },
        };
        let (subject, verb, object, end) = found;
        let tokens: Vec<WordToken> = toks
            .iter()
            .enumerate()
            .map(|(i, t)| WordToken {
                position: i,
                ..t.clone()
            })
            .collect();
        out.push(PatternMatch {
            stimulus: SentenceStimulus {
                tokens,
                voice,
                ..s.clone()
            },
            voice,
            subject,
            verb,
            object,
            trailing: toks[end..].iter().map(|t| t.text.clone()).collect(),
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub active: usize,
    pub passive: usize,
    pub with_trailing_clause: usize,
    pub vocabulary: usize,
    pub length_histogram: BTreeMap<usize, usize>,
}

pub fn corpus_stats(matches: &[PatternMatch]) -> CorpusStats {
    let mut vocab = BTreeSet::new();
    let mut hist = BTreeMap::new();
    for m in matches {
        vocab.extend(m.stimulus.tokens.iter().map(|t| t.text.clone()));
        *hist.entry(m.stimulus.len()).or_insert(0) += 1;
    }
    CorpusStats {
        sentences: matches.len(),
        active: matches.iter().filter(|m| m.voice == Voice::Active).count(),
        passive: matches.iter().filter(|m| m.voice == Voice::Passive).count(),
        with_trailing_clause: matches.iter().filter(|m| m.has_trailing_clause()).count(),
        vocabulary: vocab.len(),
        length_histogram: hist,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_tagged;

    fn triple(s: &str, v: &str, o: &str) -> SvoTriple {
        SvoTriple {
            subject: s.into(),
            verb: v.into(),
            object: o.into(),
            frequency: 10,
        }
    }

    #[test]
    fn inflection_examples() {
        assert_eq!(past_tense("encourage").unwrap(), "encouraged");
        assert_eq!(past_tense("eat").unwrap(), "ate");
        assert_eq!(past_participle("eat").unwrap(), "eaten");
        assert!(past_tense("").is_err());
        assert!(past_tense("Eat").is_err());
    }

    #[test]
    fn suffix_rule_table() {
        let table = [
            ("stop", "stopped"),
            ("plan", "planned"),
            ("rob", "robbed"),
            ("like", "liked"),
            ("carry", "carried"),
            ("play", "played"),
            ("fix", "fixed"),
            ("show", "showed"),
            ("watch", "watched"),
            ("visit", "visited"),
            ("kick", "kicked"),
            ("need", "needed"),
        ];
        let plain = Inflector::default();
        for (lemma, want) in table {
            if Inflector::builtin().forms.contains_key(lemma) {
                assert_eq!(past_tense(lemma).unwrap(), want, "{lemma}");
            } else {
                assert_eq!(plain.past(lemma).unwrap(), want, "{lemma}");
            }
        }
        assert_eq!(plain.past("visit").unwrap(), "visited");
    }

    #[test]
    fn template_examples() {
        let g = generate(&triple("dog", "eat", "bone"), Voice::Passive, "x").unwrap();
        assert_eq!(g.stimulus.text(), "the bone was eaten by the dog");
        let g = generate(&triple("woman", "encourage", "girl"), Voice::Active, "x").unwrap();
        assert_eq!(g.stimulus.text(), "the woman encouraged the girl");
        let g = generate(&triple("boy", "watch", "girl"), Voice::Passive, "x").unwrap();
        assert_eq!(g.stimulus.text(), "the girl was watched by the boy");
    }

    #[test]
    fn extraction_examples() {
        let s = |t: &str| parse_tagged(t, "s", DatasetId::Simulated).unwrap();
        let m = extract_patterns(&[s("the/DT dog/NN ate/VBD the/DT bone/NN")]);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].voice, Voice::Active);
        let m = extract_patterns(&[s("the/DT bone/NN was/VBD eaten/VBN by/IN the/DT dog/NN")]);
        assert_eq!(
            (m[0].voice, m[0].subject.as_str(), m[0].object.as_str()),
            (Voice::Passive, "dog", "bone")
        );
        assert!(extract_patterns(&[s("dogs/NNS ate/VBD bones/NNS")]).is_empty());
        let m = extract_patterns(&[s("the/DT dog/NN ate/VBD the/DT bone/NN that/WDT he/PRP found/VBD ./.")]);
        assert_eq!(m[0].trailing, vec!["that", "he", "found"]);
        assert!(m[0].has_trailing_clause());
    }

    #[test]
    fn counts_before_and_after_dedup() {
        let triples = vec![
            triple("dog", "eat", "bone"),
            triple("dog", "eat", "bone"),
            triple("man", "see", "boy"),
        ];
        let all = generate_corpus(&triples, "ssc").unwrap();
        assert_eq!(all.len(), 4);
        assert_eq!(all.iter().filter(|g| g.template == Voice::Active).count(), 2);
        let texts: BTreeSet<String> = all.iter().map(|g| g.stimulus.text()).collect();
        assert_eq!(texts.len(), all.len());
    }

    #[test]
    fn subsample_rules() {
        let verbs: BTreeSet<String> = ["eat".to_string()].into();
        let entities: BTreeSet<String> = ["dog".to_string(), "bone".to_string()].into();
        let mut low = triple("dog", "eat", "bone");
        low.frequency = 5;
        let ok = triple("dog", "eat", "bone");
        let stranger = triple("dog", "eat", "cake");
        let kept = subsample(&[low, ok.clone(), stranger], 6, &verbs, &entities);
        assert_eq!(kept, vec![ok]);
        assert!(subsample(&[], 6, &verbs, &entities).is_empty());
    }

    #[test]
    fn triple_tsv_round_trip() {
        let t = vec![triple("new york", "host", "party"), triple("a", "b", "c")];
        assert_eq!(parse_triples(&triples_to_tsv(&t)).unwrap(), t);
        assert!(parse_triples("a\tb\tc\n").is_err());
        assert!(parse_triples("a\tb\tc\tx\n").is_err());
    }
}
