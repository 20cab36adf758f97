use std::path::Path;

use super::{DatasetId, SentenceStimulus, Voice, WordToken};
use crate::error::{Error, Result};

/// Parse a `word/TAG word/TAG ...` line into a stimulus. Words are lowercased.
/// Voice is passive when a form of "be" is followed by a participle (VBN).
pub fn parse_tagged(line: &str, sentence_id: &str, dataset_id: DatasetId) -> Result<SentenceStimulus> {
    let mut tokens = Vec::new();
    for (position, item) in line.split_whitespace().enumerate() {
        let (word, pos) = item.rsplit_once('/').ok_or_else(|| {
            Error::format(
                "tagged sentence",
                format!("token `{item}` has no /TAG in {sentence_id}"),
            )
        })?;
        if word.is_empty() || pos.is_empty() {
            return Err(Error::format(
                "tagged sentence",
                format!("token `{item}` in {sentence_id}"),
            ));
        }
        tokens.push(WordToken {
            text: word.to_lowercase(),
            pos: pos.to_string(),
            sentence_id: sentence_id.to_string(),
            position,
        });
    }
    let passive = tokens
        .windows(2)
        .any(|w| matches!(w[0].text.as_str(), "was" | "were") && w[1].pos == "VBN");
    let stim = SentenceStimulus {
        sentence_id: sentence_id.to_string(),
        tokens,
        voice: if passive { Voice::Passive } else { Voice::Active },
        dataset_id,
    };
    stim.validate()?;
    Ok(stim)
}

fn parse_list(text: &str, prefix: &str, width: usize, dataset: DatasetId) -> Vec<SentenceStimulus> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(i, l)| parse_tagged(l, &format!("{prefix}-{i:0width$}"), dataset).expect("shipped list parses"))
        .collect()
}

/// Stimulus lists shipped with the crate.
pub mod builtin {
    use super::*;

    /// The 32 sentences of the PassAct2 MEG experiment (16 passive, 16 active).
    pub fn passact2() -> Vec<SentenceStimulus> {
        parse_list(include_str!("../../data/passact2.txt"), "pa2", 2, DatasetId::PassAct2)
    }

    /// 160 sentences built from the PassAct2 vocabulary, listed verbatim
    /// (including repeated lines and the "women" spelling).
    pub fn passact2_generated() -> Vec<SentenceStimulus> {
        parse_list(
            include_str!("../../data/passact2_generated.txt"),
            "gen",
            3,
            DatasetId::Generated,
        )
    }

    /// The 32 Krns2 sentences, which vary determiners ("a" / "the").
    pub fn krns2() -> Vec<SentenceStimulus> {
        parse_list(include_str!("../../data/krns2.txt"), "krns2", 2, DatasetId::Krns2)
    }
}

pub fn load_stimuli(path: &Path) -> Result<Vec<SentenceStimulus>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stimuli: Vec<SentenceStimulus> = serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("stimulus file {}", path.display()), e.to_string()))?;
    let mut seen = std::collections::HashSet::new();
    for s in &stimuli {
        s.validate()?;
        if !seen.insert(s.sentence_id.as_str()) {
            return Err(Error::invalid(format!("duplicate sentence id {}", s.sentence_id)));
        }
    }
    Ok(stimuli)
}

pub fn save_stimuli(path: &Path, stimuli: &[SentenceStimulus]) -> Result<()> {
    let text = serde_json::to_string_pretty(stimuli).expect("stimuli serialize");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passact2_shape() {
        let s = builtin::passact2();
        assert_eq!(s.len(), 32);
        let passive = s.iter().filter(|x| x.voice == Voice::Passive).count();
        assert_eq!(passive, 16);
        assert_eq!(s[0].text(), "the boy was liked by the girl");
        assert_eq!(s[31].text(), "the boy liked the girl");
        assert_eq!(s[16].voice, Voice::Active);
    }

    #[test]
    fn generated_list_is_verbatim() {
        let g = builtin::passact2_generated();
        assert_eq!(g.len(), 160);
        assert_eq!(g[0].text(), "the girl was despised by the man");
        assert!(g.iter().any(|s| s.text() == "the man despised the women"));
    }

    #[test]
    fn krns2_has_indefinite_determiners() {
        let k = builtin::krns2();
        assert_eq!(k.len(), 32);
        assert_eq!(k[1].text(), "a monkey touched a school");
        assert_eq!(k[1].tokens[0].pos, "DT");
    }

    #[test]
    fn missing_tag_rejected() {
        assert!(parse_tagged("the/DT dog", "x", DatasetId::Simulated).is_err());
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stimuli.json");
        let s = builtin::passact2();
        save_stimuli(&path, &s).unwrap();
        assert_eq!(load_stimuli(&path).unwrap(), s);
    }
}
