//! Word-sequence decoding over left-to-right word HMMs with DNN
//! pseudo-log-likelihoods: the standard rule, the uncertainty-weighted rule,
//! an exhaustive reference decoder, and WER scoring.
//!
//! The decode objective, shared bit-for-bit by [`viterbi_decode`] and
//! [`brute_force_decode`], for a path through states `q_0 .. q_{T-1}`
//! spelling the word string `w_1 .. w_N`:
//!
//! ```text
//!   sum_t  UW[t] * pll[t][q_t]                  (weighted acoustic evidence)
//! + sum of T-1 transition log-probs             (self-loop / forward / exit)
//! + lambda * (log p(w_1|<s>) + sum log p(w_i|w_{i-1}) + log p(</s>|w_N))
//! ```
//!
//! Only the emission terms are weighted; transitions and the language model
//! are not, so a track of all-ones reproduces the unweighted rule exactly.

mod wer;

pub use wer::{alignment_report, wer, WerBreakdown};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("decode input has no frames")]
    EmptyInput,
    #[error("reference word string is empty")]
    EmptyReference,
    #[error("search space of {0} paths exceeds the brute-force guard")]
    TooLarge(u64),
    #[error("invalid lexicon: {0}")]
    BadLexicon(String),
    #[error("invalid language model: {0}")]
    BadLanguageModel(String),
    #[error("invalid decode task: {0}")]
    BadTask(String),
}

/// One pronounceable word: a left-to-right chain of globally unique state ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub symbol: String,
    pub states: Vec<usize>,
}

/// A word inventory with fixed HMM transition log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub words: Vec<Word>,
    pub n_states: usize,
    pub self_loop_logp: f64,
    pub forward_logp: f64,
}

impl Lexicon {
    /// Builds a lexicon assigning each word's states sequential global ids.
    pub fn new(words: &[(&str, usize)]) -> Result<Self, DecodeError> {
        let mut next_id = 0;
        let words: Vec<Word> = words
            .iter()
            .map(|(symbol, n)| {
                let states = (next_id..next_id + n).collect();
                next_id += n;
                Word {
                    symbol: symbol.to_string(),
                    states,
                }
            })
            .collect();
        Self::from_words(words)
    }

    /// Builds a lexicon from explicit state sequences.
    pub fn from_words(words: Vec<Word>) -> Result<Self, DecodeError> {
        if words.is_empty() {
            return Err(DecodeError::BadLexicon("no words".into()));
        }
        let n_states: usize = words.iter().map(|w| w.states.len()).sum();
        let mut seen = vec![false; n_states];
        for word in &words {
            if word.states.is_empty() {
                return Err(DecodeError::BadLexicon(format!(
                    "word {:?} has no states",
                    word.symbol
                )));
            }
            for &s in &word.states {
                if s >= n_states || seen[s] {
                    return Err(DecodeError::BadLexicon(format!(
                        "state id {s} is out of range or reused"
                    )));
                }
                seen[s] = true;
            }
        }
        let mut symbols: Vec<&str> = words.iter().map(|w| w.symbol.as_str()).collect();
        symbols.sort_unstable();
        symbols.dedup();
        if symbols.len() != words.len() {
            return Err(DecodeError::BadLexicon("duplicate word symbol".into()));
        }
        Ok(Self {
            words,
            n_states,
            self_loop_logp: 0.5f64.ln(),
            forward_logp: 0.5f64.ln(),
        })
    }

    pub fn word_index(&self, symbol: &str) -> Option<usize> {
        self.words.iter().position(|w| w.symbol == symbol)
    }
}

/// Bigram language model over the lexicon words plus sentence start/end.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageModel {
    /// `log p(w | <s>)` per word.
    pub log_p_start: Vec<f64>,
    /// `log p(w_j | w_i)`, indexed `[i][j]`.
    pub log_p_next: Vec<Vec<f64>>,
    /// `log p(</s> | w_i)` per word.
    pub log_p_end: Vec<f64>,
    /// Language model scale.
    pub lambda: f64,
}

impl LanguageModel {
    pub fn new(
        log_p_start: Vec<f64>,
        log_p_next: Vec<Vec<f64>>,
        log_p_end: Vec<f64>,
        lambda: f64,
    ) -> Result<Self, DecodeError> {
        let n = log_p_start.len();
        if log_p_next.len() != n || log_p_end.len() != n || log_p_next.iter().any(|r| r.len() != n)
        {
            return Err(DecodeError::BadLanguageModel("shape mismatch".into()));
        }
        if lambda <= 0.0 {
            return Err(DecodeError::BadLanguageModel("lambda must be > 0".into()));
        }
        let lm = Self {
            log_p_start,
            log_p_next,
            log_p_end,
            lambda,
        };
        let sum_start: f64 = lm.log_p_start.iter().map(|l| l.exp()).sum();
        if (sum_start - 1.0).abs() > 1e-6 {
            return Err(DecodeError::BadLanguageModel(format!(
                "start context sums to {sum_start}"
            )));
        }
        for i in 0..n {
            let sum: f64 =
                lm.log_p_next[i].iter().map(|l| l.exp()).sum::<f64>() + lm.log_p_end[i].exp();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(DecodeError::BadLanguageModel(format!(
                    "context {i} sums to {sum}"
                )));
            }
        }
        Ok(lm)
    }

    /// Uniform bigram: every follower (words and sentence end) equally likely.
    pub fn uniform(n_words: usize, lambda: f64) -> Self {
        let start = (1.0 / n_words as f64).ln();
        let next = (1.0 / (n_words + 1) as f64).ln();
        Self {
            log_p_start: vec![start; n_words],
            log_p_next: vec![vec![next; n_words]; n_words],
            log_p_end: vec![next; n_words],
            lambda,
        }
    }

    /// Add-one smoothed bigram estimated from word-index transcripts.
    pub fn from_transcripts(transcripts: &[Vec<usize>], n_words: usize, lambda: f64) -> Self {
        let mut start = vec![1.0f64; n_words];
        let mut next = vec![vec![1.0f64; n_words]; n_words];
        let mut end = vec![1.0f64; n_words];
        for t in transcripts {
            if let Some(&first) = t.first() {
                start[first] += 1.0;
            }
            for pair in t.windows(2) {
                next[pair[0]][pair[1]] += 1.0;
            }
            if let Some(&last) = t.last() {
                end[last] += 1.0;
            }
        }
        let start_sum: f64 = start.iter().sum();
        let log_p_start = start.iter().map(|c| (c / start_sum).ln()).collect();
        let mut log_p_next = Vec::with_capacity(n_words);
        let mut log_p_end = Vec::with_capacity(n_words);
        for i in 0..n_words {
            let sum: f64 = next[i].iter().sum::<f64>() + end[i];
            log_p_next.push(next[i].iter().map(|c| (c / sum).ln()).collect());
            log_p_end.push((end[i] / sum).ln());
        }
        Self {
            log_p_start,
            log_p_next,
            log_p_end,
            lambda,
        }
    }
}

/// Everything one decode needs: the pseudo-log-likelihood matrix, the
/// per-frame weight track (or `None` for the unweighted rule), the lexicon,
/// and the language model.
#[derive(Debug, Clone, Copy)]
pub struct DecodeTask<'a> {
    /// `pll[t][s]`, `T` frames by `S` states.
    pub pll: &'a [Vec<f64>],
    /// Per-frame acoustic weights; `None` disables the weighting path.
    pub weights: Option<&'a [f64]>,
    pub lexicon: &'a Lexicon,
    pub lm: &'a LanguageModel,
}

impl<'a> DecodeTask<'a> {
    fn validate(&self) -> Result<(), DecodeError> {
        if self.pll.is_empty() {
            return Err(DecodeError::EmptyInput);
        }
        for row in self.pll {
            if row.len() != self.lexicon.n_states {
                return Err(DecodeError::BadTask(format!(
                    "pll row has {} states, lexicon has {}",
                    row.len(),
                    self.lexicon.n_states
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(DecodeError::BadTask("non-finite pseudo-likelihood".into()));
            }
        }
        if let Some(w) = self.weights {
            if w.len() != self.pll.len() {
                return Err(DecodeError::BadTask(format!(
                    "{} weights for {} frames",
                    w.len(),
                    self.pll.len()
                )));
            }
            if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(DecodeError::BadTask(
                    "weights must be finite and positive".into(),
                ));
            }
        }
        Ok(())
    }

    fn emit(&self, t: usize, state: usize) -> f64 {
        match self.weights {
            Some(w) => w[t] * self.pll[t][state],
            None => self.pll[t][state],
        }
    }
}

/// A decoded word string with its score and per-word frame spans.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Lexicon indices of the decoded words.
    pub words: Vec<usize>,
    /// Frame span `[start, end)` of each word.
    pub spans: Vec<(usize, usize)>,
    pub score: f64,
}

impl Hypothesis {
    pub fn symbols<'a>(&self, lexicon: &'a Lexicon) -> Vec<&'a str> {
        self.words
            .iter()
            .map(|&w| lexicon.words[w].symbol.as_str())
            .collect()
    }
}

/// Pseudo-log-likelihood of one state: `log(posterior) - log(prior)`.
pub fn pseudo_log_likelihood(posterior: f64, prior: f64) -> f64 {
    posterior.ln() - prior.ln()
}

/// Builds the full `T x S` matrix from log-posteriors and floored priors.
pub fn pll_matrix(log_posteriors: &[Vec<f64>], priors: &[f64]) -> Vec<Vec<f64>> {
    let log_priors: Vec<f64> = priors.iter().map(|p| p.ln()).collect();
    log_posteriors
        .iter()
        .map(|row| row.iter().zip(&log_priors).map(|(lp, pr)| lp - pr).collect())
        .collect()
}

/// Trellis node: one state position inside one word.
#[derive(Debug, Clone, Copy)]
struct Node {
    word: usize,
    pos: usize,
    state: usize,
}

struct Trellis {
    nodes: Vec<Node>,
    /// First node index of each word.
    word_first: Vec<usize>,
    /// Last node index of each word.
    word_last: Vec<usize>,
}

impl Trellis {
    fn new(lexicon: &Lexicon) -> Self {
        let mut nodes = Vec::with_capacity(lexicon.n_states);
        let mut word_first = Vec::with_capacity(lexicon.words.len());
        let mut word_last = Vec::with_capacity(lexicon.words.len());
        for (w, word) in lexicon.words.iter().enumerate() {
            word_first.push(nodes.len());
            for (pos, &state) in word.states.iter().enumerate() {
                nodes.push(Node { word, pos, state });
            }
            word_last.push(nodes.len() - 1);
        }
        Self {
            nodes,
            word_first,
            word_last,
        }
    }
}

const NO_PREV: u32 = u32::MAX;

/// Exact dynamic-programming decode of the weighted objective.
///
/// Exact score ties are broken toward the lexicographically smallest word
/// string, which keeps decodes deterministic.
pub fn viterbi_decode(task: &DecodeTask) -> Result<Hypothesis, DecodeError> {
    task.validate()?;
    let lexicon = task.lexicon;
    let lm = task.lm;
    let trellis = Trellis::new(lexicon);
    let n_nodes = trellis.nodes.len();
    let n_frames = task.pll.len();
    let n_words = lexicon.words.len();

    let mut delta_prev = vec![f64::NEG_INFINITY; n_nodes];
    let mut delta_curr = vec![f64::NEG_INFINITY; n_nodes];
    // bp[t * n_nodes + p] = predecessor node at t-1, or NO_PREV at t = 0.
    let mut bp = vec![NO_PREV; n_frames * n_nodes];

    // Word-string prefix of the best path into a node, for tie-breaking only.
    let prefix_of = |t: usize, node: usize, bp: &[u32]| -> Vec<usize> {
        let mut words = Vec::new();
        let mut p = node;
        let mut time = t;
        loop {
            if trellis.nodes[p].pos == 0 {
                let prev = bp[time * n_nodes + p];
                if time == 0 || prev == NO_PREV {
                    words.push(trellis.nodes[p].word);
                    break;
                }
                let prev = prev as usize;
                if trellis.nodes[prev].word != trellis.nodes[p].word {
                    words.push(trellis.nodes[p].word);
                }
                p = prev;
            } else {
                p = bp[time * n_nodes + p] as usize;
            }
            time -= 1;
        }
        words.reverse();
        words
    };
    let lex_less = |a: &[usize], b: &[usize]| -> bool {
        let sa: Vec<&str> = a.iter().map(|&w| lexicon.words[w].symbol.as_str()).collect();
        let sb: Vec<&str> = b.iter().map(|&w| lexicon.words[w].symbol.as_str()).collect();
        sa < sb
    };

    for (p, node) in trellis.nodes.iter().enumerate() {
        if node.pos == 0 {
            delta_prev[p] = lm.lambda * lm.log_p_start[node.word] + task.emit(0, node.state);
        }
    }

    for t in 1..n_frames {
        // Best scored word exit at t-1, per predecessor word.
        let exit_scores: Vec<f64> = (0..n_words)
            .map(|v| delta_prev[trellis.word_last[v]] + lexicon.forward_logp)
            .collect();

        for (p, node) in trellis.nodes.iter().enumerate() {
            let mut best = delta_prev[p] + lexicon.self_loop_logp;
            let mut best_prev = p as u32;

            let mut consider = |cand: f64, prev: u32, bp: &[u32]| {
                if cand > best {
                    best = cand;
                    best_prev = prev;
                } else if cand == best && prev != best_prev {
                    // Exact tie: keep the lexicographically smaller prefix.
                    let mut a = prefix_of(t - 1, prev as usize, bp);
                    let mut b = prefix_of(t - 1, best_prev as usize, bp);
                    if trellis.nodes[prev as usize].word != node.word {
                        a.push(node.word);
                    }
                    if trellis.nodes[best_prev as usize].word != node.word {
                        b.push(node.word);
                    }
                    if lex_less(&a, &b) {
                        best_prev = prev;
                    }
                }
            };

            if node.pos > 0 {
                consider(delta_prev[p - 1] + lexicon.forward_logp, (p - 1) as u32, &bp);
            } else {
                for v in 0..n_words {
                    let cand = exit_scores[v] + lm.lambda * lm.log_p_next[v][node.word];
                    consider(cand, trellis.word_last[v] as u32, &bp);
                }
            }
            delta_curr[p] = best + task.emit(t, node.state);
            bp[t * n_nodes + p] = best_prev;
        }
        std::mem::swap(&mut delta_prev, &mut delta_curr);
    }

    // Terminate in some word's last state, consuming the end-of-sentence
    // language model term.
    let mut best_score = f64::NEG_INFINITY;
    let mut best_end: Option<usize> = None;
    for w in 0..n_words {
        let p = trellis.word_last[w];
        let score = delta_prev[p] + lm.lambda * lm.log_p_end[w];
        let better = score > best_score
            || (score == best_score
                && best_end.is_some_and(|prev_p| {
                    lex_less(
                        &prefix_of(n_frames - 1, p, &bp),
                        &prefix_of(n_frames - 1, prev_p, &bp),
                    )
                }));
        if better {
            best_score = score;
            best_end = Some(p);
        }
    }
    let best_end = best_end.ok_or(DecodeError::EmptyInput)?;

    // Trace back word spans.
    let mut spans = Vec::new();
    let mut p = best_end;
    let mut end = n_frames;
    for t in (0..n_frames).rev() {
        let prev = bp[t * n_nodes + p];
        let boundary = t == 0
            || prev == NO_PREV
            || trellis.nodes[prev as usize].word != trellis.nodes[p].word;
        if boundary {
            spans.push((trellis.nodes[p].word, t, end));
            end = t;
        }
        if t > 0 {
            p = prev as usize;
        }
    }
    spans.reverse();
    let words = spans.iter().map(|s| s.0).collect();
    Ok(Hypothesis {
        words,
        spans: spans.iter().map(|s| (s.1, s.2)).collect(),
        score: best_score,
    })
}

const BRUTE_FORCE_GUARD: u64 = 10_000_000;

/// Number of ways to split `frames` over `states` positions, each >= 1,
/// saturating at the guard.
fn compositions(frames: usize, states: usize) -> u64 {
    if states == 0 || states > frames {
        return 0;
    }
    // C(frames - 1, states - 1)
    let n = (frames - 1) as u64;
    let k = ((states - 1) as u64).min(n - (states - 1) as u64);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > BRUTE_FORCE_GUARD as u128 * 2 {
            return BRUTE_FORCE_GUARD + 1;
        }
    }
    acc.min(u64::MAX as u128) as u64
}

/// Exhaustive enumeration of every word string and segmentation, scoring the
/// same objective as [`viterbi_decode`]. Ties prefer the lexicographically
/// smallest word string.
pub fn brute_force_decode(task: &DecodeTask) -> Result<Hypothesis, DecodeError> {
    task.validate()?;
    let lexicon = task.lexicon;
    let n_frames = task.pll.len();
    let n_words = lexicon.words.len();
    let min_word_len: usize = lexicon
        .words
        .iter()
        .map(|w| w.states.len())
        .min()
        .unwrap_or(1);

    // Count paths before enumerating anything.
    fn count_paths(
        lexicon: &Lexicon,
        n_frames: usize,
        used_states: usize,
        min_word_len: usize,
    ) -> u64 {
        let mut total = compositions(n_frames, used_states);
        if total > BRUTE_FORCE_GUARD {
            return total;
        }
        if used_states + min_word_len <= n_frames {
            for word in &lexicon.words {
                let next = used_states + word.states.len();
                if next <= n_frames {
                    total =
                        total.saturating_add(count_paths(lexicon, n_frames, next, min_word_len));
                    if total > BRUTE_FORCE_GUARD {
                        return total;
                    }
                }
            }
        }
        total
    }
    let mut total_paths = 0u64;
    for word in &lexicon.words {
        if word.states.len() <= n_frames {
            total_paths = total_paths.saturating_add(count_paths(
                lexicon,
                n_frames,
                word.states.len(),
                min_word_len,
            ));
        }
        if total_paths > BRUTE_FORCE_GUARD {
            return Err(DecodeError::TooLarge(total_paths));
        }
    }

    struct Search<'a, 'b> {
        task: &'b DecodeTask<'a>,
        best: Option<(f64, Vec<usize>, Vec<usize>)>, // score, words, durations
    }

    impl Search<'_, '_> {
        /// Emission + transition score of laying `chain` over all frames with
        /// the given per-state durations.
        fn path_score(&self, chain: &[usize], durations: &[usize]) -> f64 {
            let lexicon = self.task.lexicon;
            let mut score = 0.0;
            let mut t = 0;
            for (i, (&state, &d)) in chain.iter().zip(durations).enumerate() {
                for _ in 0..d {
                    score += self.task.emit(t, state);
                    t += 1;
                }
                score += (d - 1) as f64 * lexicon.self_loop_logp;
                if i + 1 < chain.len() {
                    score += lexicon.forward_logp;
                }
            }
            score
        }

        fn lm_score(&self, words: &[usize]) -> f64 {
            let lm = self.task.lm;
            let mut s = lm.log_p_start[words[0]];
            for pair in words.windows(2) {
                s += lm.log_p_next[pair[0]][pair[1]];
            }
            s += lm.log_p_end[*words.last().unwrap()];
            lm.lambda * s
        }

        fn consider(&mut self, score: f64, words: &[usize], durations: &[usize]) {
            let lexicon = self.task.lexicon;
            let better = match &self.best {
                None => true,
                Some((best_score, best_words, _)) => {
                    score > *best_score
                        || (score == *best_score && {
                            let a: Vec<&str> = words
                                .iter()
                                .map(|&w| lexicon.words[w].symbol.as_str())
                                .collect();
                            let b: Vec<&str> = best_words
                                .iter()
                                .map(|&w| lexicon.words[w].symbol.as_str())
                                .collect();
                            a < b
                        })
                }
            };
            if better {
                self.best = Some((score, words.to_vec(), durations.to_vec()));
            }
        }

        fn enumerate_durations(
            &mut self,
            words: &[usize],
            chain: &[usize],
            durations: &mut Vec<usize>,
            remaining: usize,
        ) {
            let pos = durations.len();
            if pos == chain.len() {
                if remaining == 0 {
                    let score = self.path_score(chain, durations) + self.lm_score(words);
                    self.consider(score, words, durations);
                }
                return;
            }
            let still_needed = chain.len() - pos - 1;
            for d in 1..=remaining.saturating_sub(still_needed) {
                durations.push(d);
                self.enumerate_durations(words, chain, durations, remaining - d);
                durations.pop();
            }
        }

        fn enumerate_words(
            &mut self,
            words: &mut Vec<usize>,
            chain: &mut Vec<usize>,
            n_frames: usize,
        ) {
            if !words.is_empty() && chain.len() <= n_frames {
                let mut durations = Vec::with_capacity(chain.len());
                self.enumerate_durations(&words.clone(), chain, &mut durations, n_frames);
            }
            if chain.len() >= n_frames {
                return;
            }
            for w in 0..self.task.lexicon.words.len() {
                let states = self.task.lexicon.words[w].states.clone();
                if chain.len() + states.len() > n_frames {
                    continue;
                }
                words.push(w);
                chain.extend_from_slice(&states);
                self.enumerate_words(words, chain, n_frames);
                chain.truncate(chain.len() - states.len());
                words.pop();
            }
        }
    }

    let mut search = Search { task, best: None };
    search.enumerate_words(&mut Vec::new(), &mut Vec::new(), n_frames);
    let (score, words, durations) = search.best.ok_or_else(|| {
        DecodeError::BadTask(format!(
            "no word sequence fits {n_frames} frames (shortest word has {min_word_len} states)"
        ))
    })?;
    let _ = n_words;

    // Rebuild word spans from per-state durations.
    let mut spans = Vec::with_capacity(words.len());
    let mut cursor = 0;
    let mut d_iter = durations.iter();
    for &w in &words {
        let frames: usize = lexicon.words[w]
            .states
            .iter()
            .map(|_| d_iter.next().copied().unwrap_or(0))
            .sum();
        spans.push((cursor, cursor + frames));
        cursor += frames;
    }
    Ok(Hypothesis {
        words,
        spans,
        score,
    })
}
