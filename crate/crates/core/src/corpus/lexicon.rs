use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_FILLERS: [&str; 6] = ["uh", "um", "er", "err", "hmm", "mm"];

pub const FREQUENCY_FILE: &str = "frequency.tsv";
pub const COMPLEXITY_FILE: &str = "complexity.tsv";
pub const STOPWORDS_FILE: &str = "stopwords.txt";
pub const FILLERS_FILE: &str = "fillers.txt";

/// Word lists consulted by the grammar/vocabulary and fluency extractors.
#[derive(Debug, Clone, PartialEq)]
pub struct LexicalResources {
    /// 1 = most frequent.
    pub frequency_rank: BTreeMap<String, u32>,
    /// Average rated complexity, in [1, 6].
    pub complexity_avg: BTreeMap<String, f64>,
    /// Modal rated complexity, in [1, 6].
    pub complexity_mode: BTreeMap<String, f64>,
    pub stopwords: BTreeSet<String>,
    pub filled_pauses: BTreeSet<String>,
}

impl Default for LexicalResources {
    fn default() -> Self {
        LexicalResources {
            frequency_rank: BTreeMap::new(),
            complexity_avg: BTreeMap::new(),
            complexity_mode: BTreeMap::new(),
            stopwords: BTreeSet::new(),
            filled_pauses: DEFAULT_FILLERS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl LexicalResources {
    pub fn is_filler(&self, word: &str) -> bool {
        self.filled_pauses.contains(word)
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    /// Rank of `word`, or `None` when it is outside the frequency list.
    pub fn rank(&self, word: &str) -> Option<u32> {
        self.frequency_rank.get(word).copied()
    }

    /// Loads the four resource files from a directory. Missing stopword or
    /// filler lists fall back to empty / default sets; missing frequency or
    /// complexity lists are errors.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut res = LexicalResources {
            frequency_rank: read_frequency(&dir.join(FREQUENCY_FILE))?,
            ..Default::default()
        };
        let (avg, mode) = read_complexity(&dir.join(COMPLEXITY_FILE))?;
        res.complexity_avg = avg;
        res.complexity_mode = mode;
        let sw = dir.join(STOPWORDS_FILE);
        if sw.exists() {
            res.stopwords = read_word_list(&sw)?;
        }
        let fp = dir.join(FILLERS_FILE);
        if fp.exists() {
            res.filled_pauses = read_word_list(&fp)?;
        }
        Ok(res)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut freq: Vec<(&String, &u32)> = self.frequency_rank.iter().collect();
        freq.sort_by_key(|(w, r)| (**r, (*w).clone()));
        let text: String = freq.iter().map(|(w, r)| format!("{w}\t{r}\n")).collect();
        write(&dir.join(FREQUENCY_FILE), &text)?;
        let text: String = self
            .complexity_avg
            .iter()
            .map(|(w, a)| {
                let m = self.complexity_mode.get(w).copied().unwrap_or(*a);
                format!("{w}\t{a}\t{m}\n")
            })
            .collect();
        write(&dir.join(COMPLEXITY_FILE), &text)?;
        let text: String = self.stopwords.iter().map(|w| format!("{w}\n")).collect();
        write(&dir.join(STOPWORDS_FILE), &text)?;
        let text: String = self.filled_pauses.iter().map(|w| format!("{w}\n")).collect();
        write(&dir.join(FILLERS_FILE), &text)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

/// `word<TAB>rank` per line.
pub fn read_frequency(path: &Path) -> Result<BTreeMap<String, u32>> {
    let mut out = BTreeMap::new();
    for (n, line) in lines(path)? {
        let mut parts = line.split('\t');
        let (Some(word), Some(rank)) = (parts.next(), parts.next()) else {
            return Err(Error::parse("frequency list", path, format!("line {n}: expected word<TAB>rank")));
        };
        let rank: u32 = rank
            .trim()
            .parse()
            .map_err(|e| Error::parse("frequency list", path, format!("line {n}: {e}")))?;
        if rank == 0 {
            return Err(Error::parse("frequency list", path, format!("line {n}: rank must be positive")));
        }
        out.insert(word.trim().to_lowercase(), rank);
    }
    Ok(out)
}

type ComplexityMaps = (BTreeMap<String, f64>, BTreeMap<String, f64>);

/// `word<TAB>avg<TAB>mode` per line, scores in [1, 6].
pub fn read_complexity(path: &Path) -> Result<ComplexityMaps> {
    let mut avg = BTreeMap::new();
    let mut mode = BTreeMap::new();
    for (n, line) in lines(path)? {
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() < 3 {
            return Err(Error::parse("complexity lexicon", path, format!("line {n}: expected word<TAB>avg<TAB>mode")));
        }
        let parse = |s: &str| -> Result<f64> {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|e| Error::parse("complexity lexicon", path, format!("line {n}: {e}")))?;
            if !(1.0..=6.0).contains(&v) {
                return Err(Error::parse("complexity lexicon", path, format!("line {n}: score {v} outside [1, 6]")));
            }
            Ok(v)
        };
        let word = parts[0].trim().to_lowercase();
        avg.insert(word.clone(), parse(parts[1])?);
        mode.insert(word, parse(parts[2])?);
    }
    Ok((avg, mode))
}

pub fn read_word_list(path: &Path) -> Result<BTreeSet<String>> {
    Ok(lines(path)?.into_iter().map(|(_, l)| l.to_lowercase()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mut res = LexicalResources::default();
        res.frequency_rank.insert("the".into(), 1);
        res.frequency_rank.insert("cat".into(), 900);
        res.complexity_avg.insert("cat".into(), 2.0);
        res.complexity_mode.insert("cat".into(), 1.0);
        res.stopwords.insert("the".into());
        res.write_dir(dir.path()).unwrap();
        assert_eq!(LexicalResources::load_dir(dir.path()).unwrap(), res);
    }

    #[test]
    fn rejects_out_of_range_complexity() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.tsv");
        fs::write(&p, "cat\t7.5\t2\n").unwrap();
        assert!(read_complexity(&p).is_err());
    }

    #[test]
    fn rejects_zero_rank() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.tsv");
        fs::write(&p, "cat\t0\n").unwrap();
        assert!(read_frequency(&p).is_err());
    }

    #[test]
    fn default_fillers() {
        let res = LexicalResources::default();
        assert!(res.is_filler("um") && res.is_filler("uh") && !res.is_filler("cat"));
    }
}
