use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    heuristic_syllables, AlignedResponse, AlignedWord, AudioRef, Grade, PhonemeClass, Pos,
    SyntaxSpans, TokenAnnotation, ToneSpec,
};
use crate::error::{Error, Result};

/// On-disk alignment file layout.
#[derive(Debug, Serialize, Deserialize)]
struct ResponseFile {
    response_id: String,
    prompt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transcript: Option<String>,
    words: Vec<AlignedWord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    tokens: Vec<TokenFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    syntax: Option<SyntaxSpans>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wav: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tone: Option<ToneSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grade: Option<Grade>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grade2: Option<Grade>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TokenFile {
    token: String,
    pos: Pos,
    #[serde(default)]
    stopword: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    syllables: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reject {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct LoadReport {
    /// Accepted responses, ordered by (prompt id, response id).
    pub responses: Vec<AlignedResponse>,
    pub rejects: Vec<Reject>,
    pub warnings: Vec<String>,
}

/// Loads a corpus from a manifest file (one alignment path per line, relative
/// paths resolved against the manifest's directory) or from a directory of
/// `*.json` alignment files.
///
/// A referenced file that does not exist is fatal. Files that parse but break
/// response invariants are returned in `rejects` with the reason.
pub fn load_corpus(path: &Path) -> Result<LoadReport> {
    let files = if path.is_dir() {
        let mut files = Vec::new();
        for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
            let p = entry.map_err(|e| Error::io(path, e))?.path();
            if p.extension().is_some_and(|x| x == "json") {
                files.push(p);
            }
        }
        files
    } else {
        read_manifest(path)?
    };

    for f in &files {
        if !f.is_file() {
            return Err(Error::io(
                f,
                std::io::Error::new(std::io::ErrorKind::NotFound, "alignment file not found"),
            ));
        }
    }

    let outcomes: Vec<(PathBuf, std::result::Result<AlignedResponse, String>)> = files
        .par_iter()
        .map(|f| (f.clone(), load_one(f)))
        .collect();

    let mut report = LoadReport::default();
    if files.is_empty() {
        let msg = format!("{} lists no alignment files; corpus is empty", path.display());
        log::warn!("{msg}");
        report.warnings.push(msg);
    }
    for (path, outcome) in outcomes {
        match outcome {
            Ok(r) => report.responses.push(r),
            Err(reason) => report.rejects.push(Reject { path, reason }),
        }
    }
    report
        .responses
        .sort_by(|a, b| (&a.prompt_id, &a.response_id).cmp(&(&b.prompt_id, &b.response_id)));
    let mut i = 1;
    while i < report.responses.len() {
        let (prev, cur) = (&report.responses[i - 1], &report.responses[i]);
        if prev.prompt_id == cur.prompt_id && prev.response_id == cur.response_id {
            let dup = report.responses.remove(i);
            report.rejects.push(Reject {
                path: PathBuf::from(&dup.response_id),
                reason: format!("duplicate response id {}", dup.response_id),
            });
        } else {
            i += 1;
        }
    }
    report.rejects.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(report)
}

fn read_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = PathBuf::from(l);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        })
        .collect())
}

fn load_one(path: &Path) -> std::result::Result<AlignedResponse, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let file: ResponseFile = serde_json::from_str(&text).map_err(|e| format!("malformed json: {e}"))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let response = from_file(file, base);
    response.validate()?;
    Ok(response)
}

/// Reads and validates a single alignment file.
pub fn load_response_file(path: &Path) -> Result<AlignedResponse> {
    load_one(path).map_err(|m| Error::parse("alignment file", path, m))
}

fn from_file(file: ResponseFile, base: &Path) -> AlignedResponse {
    let mut words = file.words;
    for w in &mut words {
        w.text = w.text.to_lowercase();
    }
    let tokens = if file.tokens.is_empty() {
        words
            .iter()
            .map(|w| TokenAnnotation {
                token: w.text.clone(),
                pos: Pos::Other,
                is_stopword: false,
                syllable_count: syllables_for(&w.text, Some(w)),
            })
            .collect()
    } else {
        let mut word_iter = words.iter();
        file.tokens
            .into_iter()
            .map(|t| {
                let aligned = if t.pos == Pos::Punct { None } else { word_iter.next() };
                let syllable_count = t
                    .syllables
                    .unwrap_or_else(|| syllables_for(&t.token, aligned));
                TokenAnnotation {
                    token: t.token.to_lowercase(),
                    pos: t.pos,
                    is_stopword: t.stopword,
                    syllable_count,
                }
            })
            .collect()
    };
    let transcript = file.transcript.unwrap_or_else(|| {
        words
            .iter()
            .map(|w| w.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    });
    let audio = match (file.wav, file.tone) {
        (Some(p), _) => Some(AudioRef::Wav(if p.is_absolute() { p } else { base.join(p) })),
        (None, Some(t)) => Some(AudioRef::Tone(t)),
        (None, None) => None,
    };
    AlignedResponse {
        response_id: file.response_id,
        prompt_id: file.prompt_id,
        words,
        tokens,
        syntax: file.syntax,
        transcript,
        audio,
        grade: file.grade,
        second_grade: file.grade2,
    }
}

fn syllables_for(token: &str, word: Option<&AlignedWord>) -> u32 {
    match word {
        Some(w) if !w.phonemes.is_empty() => w
            .phonemes
            .iter()
            .filter(|p| p.klass == PhonemeClass::Vowel)
            .count() as u32,
        _ => heuristic_syllables(token),
    }
}

/// Writes a response in the alignment-file layout. `wav` overrides the audio
/// reference with a path relative to the file.
pub fn write_response_file(
    response: &AlignedResponse,
    path: &Path,
    wav: Option<&Path>,
) -> Result<()> {
    let (wav_field, tone_field) = match (wav, &response.audio) {
        (Some(p), _) => (Some(p.to_path_buf()), None),
        (None, Some(AudioRef::Wav(p))) => (Some(p.clone()), None),
        (None, Some(AudioRef::Tone(t))) => (None, Some(t.clone())),
        (None, None) => (None, None),
    };
    let file = ResponseFile {
        response_id: response.response_id.clone(),
        prompt_id: response.prompt_id.clone(),
        transcript: Some(response.transcript.clone()),
        words: response.words.clone(),
        tokens: response
            .tokens
            .iter()
            .map(|t| TokenFile {
                token: t.token.clone(),
                pos: t.pos,
                stopword: t.is_stopword,
                syllables: Some(t.syllable_count),
            })
            .collect(),
        syntax: response.syntax.clone(),
        wav: wav_field,
        tone: tone_field,
        grade: response.grade,
        grade2: response.second_grade,
    };
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::parse("response", path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes every response to `<dir>/responses/<prompt>_<response>.json` plus a
/// manifest listing them in corpus order. Returns the manifest path.
pub fn write_corpus(responses: &[AlignedResponse], dir: &Path) -> Result<PathBuf> {
    let sub = dir.join("responses");
    fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    let mut manifest = String::new();
    for r in responses {
        let name = format!("{}_{}.json", file_safe(&r.prompt_id), file_safe(&r.response_id));
        write_response_file(r, &sub.join(&name), None)?;
        manifest.push_str(&format!("responses/{name}\n"));
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alignment(id: &str, words: &[(&str, f64, f64)]) -> String {
        let words: Vec<String> = words
            .iter()
            .map(|(t, s, e)| format!(r#"{{"text":"{t}","start":{s},"end":{e}}}"#))
            .collect();
        format!(
            r#"{{"response_id":"{id}","prompt_id":"p1","grade":"LB1","words":[{}]}}"#,
            words.join(",")
        )
    }

    fn write_corpus(dir: &Path, files: &[(&str, String)]) -> PathBuf {
        let mut manifest = String::new();
        for (name, body) in files {
            fs::write(dir.join(name), body).unwrap();
            manifest.push_str(name);
            manifest.push('\n');
        }
        let m = dir.join("manifest.txt");
        fs::write(&m, manifest).unwrap();
        m
    }

    #[test]
    fn three_valid_responses_load() {
        let dir = tempfile::tempdir().unwrap();
        let files: Vec<(&str, String)> = vec![
            ("a.json", alignment("a", &[("hello", 0.0, 0.4), ("there", 0.5, 0.9)])),
            ("b.json", alignment("b", &[("yes", 0.1, 0.3)])),
            ("c.json", alignment("c", &[("Well", 0.0, 0.2), ("no", 0.3, 0.5)])),
        ];
        let m = write_corpus(dir.path(), &files);
        let report = load_corpus(&m).unwrap();
        assert_eq!(report.responses.len(), 3);
        assert!(report.rejects.is_empty());
        let c = &report.responses[2];
        assert_eq!(c.words[0].text, "well");
        assert_eq!(c.transcript, "well no");
        assert_eq!(c.tokens.len(), 2);
        assert_eq!(c.grade, Some(Grade::LB1));
    }

    #[test]
    fn overlapping_words_are_rejected_with_reason() {
        let dir = tempfile::tempdir().unwrap();
        let files = vec![
            ("ok.json", alignment("ok", &[("a", 0.0, 0.4)])),
            ("bad.json", alignment("bad", &[("a", 0.0, 0.5), ("b", 0.3, 0.9)])),
        ];
        let m = write_corpus(dir.path(), &files);
        let report = load_corpus(&m).unwrap();
        assert_eq!(report.responses.len(), 1);
        assert_eq!(report.rejects.len(), 1);
        assert!(report.rejects[0].reason.contains("overlapping words"));
    }

    #[test]
    fn empty_manifest_warns() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_corpus(dir.path(), &[]);
        let report = load_corpus(&m).unwrap();
        assert!(report.responses.is_empty());
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn missing_file_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("manifest.txt");
        fs::write(&m, "nope.json\n").unwrap();
        assert!(matches!(load_corpus(&m), Err(Error::Io { .. })));
    }

    #[test]
    fn malformed_json_is_collected() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_corpus(dir.path(), &[("x.json", "{not json".to_string())]);
        let report = load_corpus(&m).unwrap();
        assert_eq!(report.rejects.len(), 1);
        assert!(report.rejects[0].reason.starts_with("malformed json"));
    }

    #[test]
    fn manifest_order_does_not_matter() {
        let dir = tempfile::tempdir().unwrap();
        let a = alignment("a", &[("x", 0.0, 0.4)]);
        let b = alignment("b", &[("y", 0.0, 0.4)]);
        fs::write(dir.path().join("a.json"), &a).unwrap();
        fs::write(dir.path().join("b.json"), &b).unwrap();
        fs::write(dir.path().join("m1.txt"), "a.json\nb.json\n").unwrap();
        fs::write(dir.path().join("m2.txt"), "b.json\na.json\n").unwrap();
        let r1 = load_corpus(&dir.path().join("m1.txt")).unwrap();
        let r2 = load_corpus(&dir.path().join("m2.txt")).unwrap();
        assert_eq!(r1.responses, r2.responses);
    }

    #[test]
    fn tokens_with_punctuation_map_to_words() {
        let body = r#"{"response_id":"r","prompt_id":"p","words":[
            {"text":"cat","start":0.0,"end":0.3,"phonemes":[
                {"label":"K","class":"consonant","start":0.0,"end":0.1},
                {"label":"AE1","class":"vowel","stress":1,"start":0.1,"end":0.2},
                {"label":"T","class":"consonant","start":0.2,"end":0.3}]}],
            "tokens":[{"token":"cat","pos":"NOUN"},{"token":".","pos":"PUNCT"}]}"#;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        fs::write(&p, body).unwrap();
        let r = load_response_file(&p).unwrap();
        assert_eq!(r.tokens.len(), 2);
        assert_eq!(r.tokens[0].syllable_count, 1);
        assert_eq!(r.tokens[1].pos, Pos::Punct);
    }

    #[test]
    fn write_then_read_preserves_response() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("a.json");
        fs::write(&src, alignment("a", &[("hi", 0.0, 0.25)])).unwrap();
        let r = load_response_file(&src).unwrap();
        let out = dir.path().join("b.json");
        write_response_file(&r, &out, None).unwrap();
        assert_eq!(load_response_file(&out).unwrap(), r);
    }

    #[test]
    fn write_corpus_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("a.json");
        fs::write(&src, alignment("r/1", &[("hello", 0.0, 0.4), ("there", 0.5, 0.9)])).unwrap();
        let r = load_response_file(&src).unwrap();
        let manifest = super::write_corpus(std::slice::from_ref(&r), &dir.path().join("out")).unwrap();
        let back = load_corpus(&manifest).unwrap();
        assert!(back.rejects.is_empty());
        assert_eq!(back.responses, vec![r]);
    }
}
