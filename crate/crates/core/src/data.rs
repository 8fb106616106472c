//! Synthetic corpora, preference pairs, and byte-level JSONL ingestion.
//!
//! Synthetic vocabulary layout (after the reserved ids and system prefix):
//! topic tokens, analysis-marker tokens, filler tokens grouped into one block
//! per topic, and a single noise token. Responses are built from sentences;
//! a sentence is an optional marker followed by a clause of fillers drawn
//! from the prompt's leading topic.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

pub type TokenSequence = Vec<usize>;

/// First byte id in text mode; ids `0..3` are PAD, EOS and SEP.
pub const TEXT_BYTE_OFFSET: usize = 3;
pub const TEXT_VOCAB_SIZE: usize = TEXT_BYTE_OFFSET + 256;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: TokenSequence,
    pub chosen: TokenSequence,
    pub rejected: TokenSequence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticTaskSpec {
    /// Seeds the topic-to-filler assignment.
    pub grammar_seed: u64,
    pub n_topics: usize,
    pub n_markers: usize,
    pub fillers_per_topic: usize,
    pub prompt_len: (usize, usize),
    pub clause_len: (usize, usize),
    pub corpus_sentences: (usize, usize),
    pub corpus_marker_prob: f64,
    pub sft_sentences: (usize, usize),
    pub sft_marker_prob: f64,
    pub chosen_sentences: (usize, usize),
    pub marker_weight: f64,
    pub noise_weight: f64,
    /// Penalty per repeated 4-gram.
    pub repetition_penalty: f64,
    /// Chosen-minus-rejected planted margins are drawn uniformly from this range.
    pub margin: (f64, f64),
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            grammar_seed: 0,
            n_topics: 8,
            n_markers: 8,
            fillers_per_topic: 5,
            prompt_len: (2, 4),
            clause_len: (2, 4),
            corpus_sentences: (1, 6),
            corpus_marker_prob: 0.5,
            sft_sentences: (1, 2),
            sft_marker_prob: 0.25,
            chosen_sentences: (3, 6),
            marker_weight: 1.0,
            noise_weight: 1.0,
            repetition_penalty: 0.5,
            margin: (1.0, 2.0),
        }
    }
}

/// Token id ranges for the synthetic task under a given model config.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticVocab {
    pub eos: usize,
    pub sep: usize,
    pub topics: Range<usize>,
    pub markers: Range<usize>,
    pub fillers: Range<usize>,
    pub noise: usize,
    /// `blocks[t]` lists the fillers belonging to topic `t`.
    pub blocks: Vec<Vec<usize>>,
}

impl SyntheticVocab {
    pub fn new(cfg: &ModelConfig, spec: &SyntheticTaskSpec) -> Result<Self> {
        let reserved: HashSet<usize> = [cfg.pad_token_id, cfg.eos_token_id, cfg.sep_token_id]
            .into_iter()
            .chain(cfg.system_prefix_ids.iter().copied())
            .collect();
        let first = reserved.iter().max().map_or(0, |m| m + 1);
        if (0..first).any(|i| !reserved.contains(&i)) {
            return Err(Error::Config(
                "reserved token ids must be contiguous from 0".into(),
            ));
        }
        let n_fill = spec.n_topics * spec.fillers_per_topic;
        let needed = first + spec.n_topics + spec.n_markers + n_fill + 1;
        if needed > cfg.vocab_size {
            return Err(Error::Config(format!(
                "synthetic task needs {needed} token ids, vocabulary has {}",
                cfg.vocab_size
            )));
        }
        if spec.n_topics == 0 || spec.n_markers == 0 || spec.fillers_per_topic == 0 {
            return Err(Error::Config(
                "synthetic task sizes must be positive".into(),
            ));
        }
        let topics = first..first + spec.n_topics;
        let markers = topics.end..topics.end + spec.n_markers;
        let fillers = markers.end..markers.end + n_fill;
        let noise = fillers.end;
        let mut pool: Vec<usize> = fillers.clone().collect();
        pool.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.grammar_seed));
        let blocks = pool
            .chunks(spec.fillers_per_topic)
            .map(<[usize]>::to_vec)
            .collect();
        Ok(Self {
            eos: cfg.eos_token_id,
            sep: cfg.sep_token_id,
            topics,
            markers,
            fillers,
            noise,
            blocks,
        })
    }

    pub fn is_marker(&self, t: usize) -> bool {
        self.markers.contains(&t)
    }

    fn block_of(&self, topic: usize) -> &[usize] {
        &self.blocks[topic - self.topics.start]
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi)
}

fn check_ranges(spec: &SyntheticTaskSpec) -> Result<()> {
    for (name, (lo, hi)) in [
        ("prompt_len", spec.prompt_len),
        ("clause_len", spec.clause_len),
        ("corpus_sentences", spec.corpus_sentences),
        ("sft_sentences", spec.sft_sentences),
        ("chosen_sentences", spec.chosen_sentences),
    ] {
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!(
                "{name} range ({lo}, {hi}) is invalid"
            )));
        }
    }
    if spec.chosen_sentences.0 > spec.n_markers {
        return Err(Error::Config(
            "chosen responses need distinct markers".into(),
        ));
    }
    Ok(())
}

struct Grammar<'a> {
    vocab: &'a SyntheticVocab,
    spec: &'a SyntheticTaskSpec,
}

impl Grammar<'_> {
    fn prompt(&self, rng: &mut ChaCha8Rng) -> TokenSequence {
        let n = uniform(rng, self.spec.prompt_len);
        (0..n)
            .map(|_| rng.random_range(self.vocab.topics.clone()))
            .collect()
    }

    fn clause(&self, topic: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let block = self.vocab.block_of(topic);
        let n = uniform(rng, self.spec.clause_len);
        (0..n)
            .map(|_| block[rng.random_range(0..block.len())])
            .collect()
    }

    fn marker(&self, rng: &mut ChaCha8Rng) -> usize {
        rng.random_range(self.vocab.markers.clone())
    }

    fn sentences(
        &self,
        topic: usize,
        count: usize,
        marker_prob: f64,
        rng: &mut ChaCha8Rng,
    ) -> Vec<usize> {
        let mut out = Vec::new();
        for _ in 0..count {
            if rng.random_bool(marker_prob) {
                out.push(self.marker(rng));
            }
            out.extend(self.clause(topic, rng));
        }
        out
    }

    fn chosen(&self, topic: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        loop {
            let k = uniform(rng, self.spec.chosen_sentences);
            let mut markers: Vec<usize> = self.vocab.markers.clone().collect();
            markers.shuffle(rng);
            let mut out = Vec::new();
            for &m in markers.iter().take(k) {
                out.push(m);
                out.extend(self.clause(topic, rng));
            }
            if repeated_ngrams(&out, 4) == 0 {
                return out;
            }
        }
    }

    fn rejected(&self, topic: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        match rng.random_range(0..3) {
            // truncated
            0 => self.sentences(topic, 1, 0.5, rng),
            // rambling: one clause over and over
            1 => {
                let mut out = Vec::new();
                if rng.random_bool(0.5) {
                    out.push(self.marker(rng));
                }
                let clause = self.clause(topic, rng);
                for _ in 0..rng.random_range(3..=5) {
                    out.extend_from_slice(&clause);
                }
                out
            }
            // noisy
            _ => {
                let k = rng.random_range(2..=4);
                let mut out = self.sentences(topic, k, 0.3, rng);
                for t in out.iter_mut() {
                    if !self.vocab.is_marker(*t) && rng.random_bool(0.4) {
                        *t = self.vocab.noise;
                    }
                }
                out
            }
        }
    }
}

/// Number of n-grams that repeat an earlier one: `total - distinct`.
pub fn repeated_ngrams(seq: &[usize], n: usize) -> usize {
    if seq.len() < n {
        return 0;
    }
    let total = seq.len() - n + 1;
    let distinct: HashSet<&[usize]> = seq.windows(n).collect();
    total - distinct.len()
}

/// The rule the preference data is planted with: weighted marker count,
/// minus noise tokens, minus a penalty per repeated 4-gram.
pub fn planted_score(vocab: &SyntheticVocab, spec: &SyntheticTaskSpec, response: &[usize]) -> f64 {
    let markers = response.iter().filter(|&&t| vocab.is_marker(t)).count() as f64;
    let noise = response.iter().filter(|&&t| t == vocab.noise).count() as f64;
    spec.marker_weight * markers
        - spec.noise_weight * noise
        - spec.repetition_penalty * repeated_ngrams(response, 4) as f64
}

/// Pretraining corpus: `prompt ∥ SEP ∥ response ∥ EOS` documents.
pub fn gen_corpus(
    cfg: &ModelConfig,
    spec: &SyntheticTaskSpec,
    n: usize,
    seed: u64,
) -> Result<Vec<TokenSequence>> {
    if n == 0 {
        return Err(Error::Config("corpus size must be positive".into()));
    }
    check_ranges(spec)?;
    let vocab = SyntheticVocab::new(cfg, spec)?;
    let g = Grammar {
        vocab: &vocab,
        spec,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let prompt = g.prompt(&mut rng);
        let k = uniform(&mut rng, spec.corpus_sentences);
        let resp = g.sentences(prompt[0], k, spec.corpus_marker_prob, &mut rng);
        let mut doc = prompt;
        doc.push(vocab.sep);
        doc.extend(resp);
        doc.push(vocab.eos);
        out.push(doc);
    }
    Ok(out)
}

/// Instruction data: short, EOS-terminated responses in the same document
/// layout as [`gen_corpus`].
pub fn gen_sft_examples(
    cfg: &ModelConfig,
    spec: &SyntheticTaskSpec,
    n: usize,
    seed: u64,
) -> Result<Vec<TokenSequence>> {
    if n == 0 {
        return Err(Error::Config("SFT set size must be positive".into()));
    }
    check_ranges(spec)?;
    let vocab = SyntheticVocab::new(cfg, spec)?;
    let g = Grammar {
        vocab: &vocab,
        spec,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let prompt = g.prompt(&mut rng);
        let k = uniform(&mut rng, spec.sft_sentences);
        let resp = g.sentences(prompt[0], k, spec.sft_marker_prob, &mut rng);
        let mut doc = prompt;
        doc.push(vocab.sep);
        doc.extend(resp);
        doc.push(vocab.eos);
        out.push(doc);
    }
    Ok(out)
}

/// Prompt prefix of a document (tokens before the first SEP).
pub fn split_document(doc: &[usize], sep: usize) -> Option<(&[usize], &[usize])> {
    let i = doc.iter().position(|&t| t == sep)?;
    Some((&doc[..i], &doc[i + 1..]))
}

/// Preference pairs. Chosen responses carry several distinct markers with no
/// repeated 4-grams; rejected ones are truncated, rambling, or noisy, and are
/// resampled until the planted margin exceeds a draw from `spec.margin`.
/// Both responses end with EOS.
pub fn gen_preference_pairs(
    cfg: &ModelConfig,
    spec: &SyntheticTaskSpec,
    n: usize,
    seed: u64,
) -> Result<Vec<PreferencePair>> {
    if n == 0 {
        return Err(Error::Config("preference set size must be positive".into()));
    }
    check_ranges(spec)?;
    if !(spec.margin.0 > 0.0 && spec.margin.0 <= spec.margin.1) {
        return Err(Error::Config(
            "margin range must be positive and ordered".into(),
        ));
    }
    let vocab = SyntheticVocab::new(cfg, spec)?;
    let g = Grammar {
        vocab: &vocab,
        spec,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let prompt = g.prompt(&mut rng);
        let topic = prompt[0];
        let chosen = g.chosen(topic, &mut rng);
        let margin = rng.random_range(spec.margin.0..=spec.margin.1);
        let target = planted_score(&vocab, spec, &chosen) - margin;
        let mut rejected = None;
        for _ in 0..64 {
            let r = g.rejected(topic, &mut rng);
            if planted_score(&vocab, spec, &r) <= target && r != chosen {
                rejected = Some(r);
                break;
            }
        }
        // The fallback scores zero, below any chosen margin.
        let mut rejected = rejected.unwrap_or_else(|| g.clause(topic, &mut rng));
        let mut chosen = chosen;
        chosen.push(vocab.eos);
        rejected.push(vocab.eos);
        let pair = PreferencePair {
            prompt,
            chosen,
            rejected,
        };
        if pair_fits(cfg, &pair) {
            out.push(pair);
        }
    }
    Ok(out)
}

/// `prompt ∥ SEP ∥ response` must fit the context for both responses.
pub fn pair_fits(cfg: &ModelConfig, p: &PreferencePair) -> bool {
    let base = p.prompt.len() + 1;
    base + p.chosen.len() <= cfg.max_context && base + p.rejected.len() <= cfg.max_context
}

/// Removes every EOS from prompts and responses.
pub fn strip_stop_tokens(pairs: &[PreferencePair], eos: usize) -> Vec<PreferencePair> {
    let strip = |s: &TokenSequence| s.iter().copied().filter(|&t| t != eos).collect::<Vec<_>>();
    pairs
        .iter()
        .map(|p| PreferencePair {
            prompt: strip(&p.prompt),
            chosen: strip(&p.chosen),
            rejected: strip(&p.rejected),
        })
        .collect()
}

pub fn encode_bytes(s: &str) -> TokenSequence {
    s.bytes().map(|b| b as usize + TEXT_BYTE_OFFSET).collect()
}

/// Inverse of [`encode_bytes`]; fails on reserved ids or invalid UTF-8.
pub fn decode_bytes(ids: &[usize]) -> Result<String> {
    let bytes = ids
        .iter()
        .map(|&id| {
            id.checked_sub(TEXT_BYTE_OFFSET)
                .filter(|b| *b < 256)
                .map(|b| b as u8)
                .ok_or_else(|| Error::Data(format!("token {id} is not a byte token")))
        })
        .collect::<Result<Vec<u8>>>()?;
    String::from_utf8(bytes).map_err(|e| Error::Data(format!("decoded bytes are not UTF-8: {e}")))
}

#[derive(Debug, Serialize, Deserialize)]
struct PreferenceRecord {
    prompt: String,
    chosen: String,
    rejected: String,
}

#[derive(Debug)]
pub struct IngestReport {
    pub pairs: Vec<PreferencePair>,
    /// One entry per skipped line: `(line number, reason)`.
    pub warnings: Vec<(usize, String)>,
}

/// Reads `{"prompt", "chosen", "rejected"}` records, byte-tokenizing each field.
pub fn ingest_jsonl(path: &Path) -> Result<IngestReport> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<PreferenceRecord>(&line) {
            Ok(r) if r.chosen == r.rejected => {
                warnings.push((i + 1, "chosen equals rejected".to_string()))
            }
            Ok(r) => pairs.push(PreferencePair {
                prompt: encode_bytes(&r.prompt),
                chosen: encode_bytes(&r.chosen),
                rejected: encode_bytes(&r.rejected),
            }),
            Err(e) => warnings.push((i + 1, e.to_string())),
        }
    }
    if pairs.is_empty() {
        return Err(Error::Data(format!(
            "{} contains no valid preference records",
            path.display()
        )));
    }
    Ok(IngestReport { pairs, warnings })
}

pub fn export_jsonl(pairs: &[PreferencePair], path: &Path) -> Result<()> {
    let mut out = String::new();
    for p in pairs {
        let rec = PreferenceRecord {
            prompt: decode_bytes(&p.prompt)?,
            chosen: decode_bytes(&p.chosen)?,
            rejected: decode_bytes(&p.rejected)?,
        };
        out.push_str(&serde_json::to_string(&rec).expect("plain strings serialize"));
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes synthetic pairs as JSONL with token ids (no byte decoding).
pub fn write_token_pairs(pairs: &[PreferencePair], path: &Path) -> Result<()> {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&serde_json::to_string(p).expect("token lists serialize"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_token_pairs(path: &Path) -> Result<Vec<PreferencePair>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
        })
        .collect()
}

/// One JSON array of token ids per line.
pub fn write_docs(docs: &[TokenSequence], path: &Path) -> Result<()> {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d).expect("token lists serialize"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_docs(path: &Path) -> Result<Vec<TokenSequence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig::desk()
    }

    #[test]
    fn desk_vocabulary_fills_exactly_64_ids() {
        let v = SyntheticVocab::new(&cfg(), &SyntheticTaskSpec::default()).unwrap();
        assert_eq!(v.topics, 7..15);
        assert_eq!(v.markers, 15..23);
        assert_eq!(v.fillers, 23..63);
        assert_eq!(v.noise, 63);
        let mut all: Vec<usize> = v.blocks.concat();
        all.sort();
        assert_eq!(all, (23..63).collect::<Vec<_>>());
    }

    #[test]
    fn zero_sizes_rejected() {
        let s = SyntheticTaskSpec::default();
        assert!(gen_corpus(&cfg(), &s, 0, 1).is_err());
        assert!(gen_preference_pairs(&cfg(), &s, 0, 1).is_err());
        assert!(gen_sft_examples(&cfg(), &s, 0, 1).is_err());
    }

    #[test]
    fn generators_are_seed_deterministic() {
        let s = SyntheticTaskSpec::default();
        assert_eq!(
            gen_corpus(&cfg(), &s, 50, 3).unwrap(),
            gen_corpus(&cfg(), &s, 50, 3).unwrap()
        );
        assert_ne!(
            gen_corpus(&cfg(), &s, 50, 3).unwrap(),
            gen_corpus(&cfg(), &s, 50, 4).unwrap()
        );
        assert_eq!(
            gen_preference_pairs(&cfg(), &s, 50, 3).unwrap(),
            gen_preference_pairs(&cfg(), &s, 50, 3).unwrap()
        );
    }

    #[test]
    fn documents_end_with_single_eos() {
        let c = cfg();
        let s = SyntheticTaskSpec::default();
        for doc in gen_corpus(&c, &s, 200, 1)
            .unwrap()
            .iter()
            .chain(&gen_sft_examples(&c, &s, 200, 1).unwrap())
        {
            assert_eq!(*doc.last().unwrap(), c.eos_token_id);
            assert_eq!(doc.iter().filter(|&&t| t == c.eos_token_id).count(), 1);
            assert!(split_document(doc, c.sep_token_id).is_some());
        }
    }

    #[test]
    fn sft_responses_are_short() {
        let c = cfg();
        for doc in gen_sft_examples(&c, &SyntheticTaskSpec::default(), 500, 2).unwrap() {
            let (_, resp) = split_document(&doc, c.sep_token_id).unwrap();
            assert!(resp.len() <= 32);
        }
    }

    #[test]
    fn chosen_always_beats_rejected_under_planted_rule() {
        let c = cfg();
        let s = SyntheticTaskSpec::default();
        let v = SyntheticVocab::new(&c, &s).unwrap();
        for p in gen_preference_pairs(&c, &s, 500, 9).unwrap() {
            assert_ne!(p.chosen, p.rejected);
            let sc = planted_score(&v, &s, &p.chosen[..p.chosen.len() - 1]);
            let sr = planted_score(&v, &s, &p.rejected[..p.rejected.len() - 1]);
            assert!(sc - sr >= s.margin.0, "{sc} vs {sr}");
        }
    }

    #[test]
    fn strip_removes_eos_only() {
        let p = PreferencePair {
            prompt: vec![7, 8],
            chosen: vec![20, 1],
            rejected: vec![9, 10],
        };
        let s = strip_stop_tokens(std::slice::from_ref(&p), 1);
        assert_eq!(s[0].chosen, vec![20]);
        assert_eq!(s[0].rejected, p.rejected);
        assert_eq!(s[0].prompt, p.prompt);
        let untouched = PreferencePair {
            chosen: vec![20],
            ..p
        };
        assert_eq!(
            strip_stop_tokens(std::slice::from_ref(&untouched), 1)[0],
            untouched
        );
    }

    #[test]
    fn strip_leaves_no_eos_in_stream() {
        let c = cfg();
        let pairs = gen_preference_pairs(&c, &SyntheticTaskSpec::default(), 300, 5).unwrap();
        assert!(pairs.iter().any(|p| p.chosen.contains(&c.eos_token_id)));
        let stripped = strip_stop_tokens(&pairs, c.eos_token_id);
        let count = stripped
            .iter()
            .flat_map(|p| p.prompt.iter().chain(&p.chosen).chain(&p.rejected))
            .filter(|&&t| t == c.eos_token_id)
            .count();
        assert_eq!(count, 0);
        for (a, b) in pairs.iter().zip(&stripped) {
            assert_eq!(a.chosen.len(), b.chosen.len() + 1);
        }
    }

    #[test]
    fn repeated_ngram_counts() {
        assert_eq!(repeated_ngrams(&[1, 2, 1, 2, 1, 2], 4), 1);
        assert_eq!(repeated_ngrams(&[5; 10], 4), 6);
        assert_eq!(repeated_ngrams(&[1, 2, 3], 4), 0);
    }

    #[test]
    fn byte_codec_roundtrips_utf8() {
        let s = "héllo, wörld";
        assert_eq!(decode_bytes(&encode_bytes(s)).unwrap(), s);
        assert!(decode_bytes(&[1]).is_err());
    }

    #[test]
    fn ingest_counts_malformed_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        fs::write(
            &path,
            "{\"prompt\":\"hi\",\"chosen\":\"a long answer\",\"rejected\":\"no\"}\n{\"prompt\":\"x\"}\n",
        )
        .unwrap();
        let r = ingest_jsonl(&path).unwrap();
        assert_eq!(r.pairs.len(), 1);
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(r.warnings[0].0, 2);
        assert_eq!(r.pairs[0].prompt, encode_bytes("hi"));
    }

    #[test]
    fn ingest_empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        fs::write(&path, "").unwrap();
        assert!(matches!(ingest_jsonl(&path), Err(Error::Data(_))));
        assert!(matches!(
            ingest_jsonl(&dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }
}
