//! Caption and text-embedding randomization strategies.
//!
//! | code | strategy                        | default probability | default repeats |
//! |------|---------------------------------|---------------------|-----------------|
//! | MC   | sample from a caption pool      | -                   | 1               |
//! | GN   | Gaussian noise on text features | scale 0.1           | 1               |
//! | RC   | replace the whole caption       | 0.4                 | 1               |
//! | RT   | replace or add a random word    | 0.1                 | 2 train / 4 inference |
//! | CWR  | repeat a caption word           | 0.4                 | 2 train / 4 inference |
//! | RNA  | add a random number             | 0.4                 | 2 train / 4 inference |
//!
//! Each function is a pure function of its inputs and `seed`. Captions are
//! split on whitespace and re-joined with single spaces whenever a round
//! changes them; a caption no round touched is returned byte-for-byte.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, ChaCha8Rng};
use crate::store::read_token_list;

pub const DEFAULT_NOISE_SCALE: f64 = 0.1;
pub const DEFAULT_REPLACE_PROBABILITY: f64 = 0.4;
pub const DEFAULT_TOKEN_PROBABILITY: f64 = 0.1;
pub const DEFAULT_NUMBER_RANGE: u64 = 1_000_000;
pub const TRAIN_REPEATS: usize = 2;
pub const INFERENCE_REPEATS: usize = 4;
pub const RANDOM_CAPTION_LEN: usize = 6;

pub const FIXED_CAPTION: &str = "An image";
pub const CLASS_CAPTION_PREFIX: &str = "An image of ";

static DEFAULT_VOCAB: &str = include_str!("../data/vocab.txt");

/// Ordered, nonempty token list used by the random-word strategies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab(Vec<String>);

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Empty("vocabulary"));
        }
        Ok(Self(tokens))
    }

    /// The bundled list of 10,000 frequent English words.
    pub fn english() -> Self {
        Self(
            DEFAULT_VOCAB
                .lines()
                .filter(|l| !l.is_empty())
                .map(str::to_owned)
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(read_token_list(path)?)
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn pick<'a>(&'a self, rng: &mut ChaCha8Rng) -> &'a str {
        self.0.choose(rng).expect("vocab is nonempty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Mc,
    Gn,
    Rc,
    Rt,
    Cwr,
    Rna,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Mc,
        Strategy::Gn,
        Strategy::Rc,
        Strategy::Rt,
        Strategy::Cwr,
        Strategy::Rna,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Strategy::Mc => "mc",
            Strategy::Gn => "gn",
            Strategy::Rc => "rc",
            Strategy::Rt => "rt",
            Strategy::Cwr => "cwr",
            Strategy::Rna => "rna",
        }
    }

    /// GN works on text embeddings; everything else on caption text.
    pub fn is_embedding(self) -> bool {
        self == Strategy::Gn
    }

    pub fn default_probability(self) -> f64 {
        match self {
            Strategy::Rt => DEFAULT_TOKEN_PROBABILITY,
            Strategy::Rc | Strategy::Cwr | Strategy::Rna => DEFAULT_REPLACE_PROBABILITY,
            Strategy::Mc | Strategy::Gn => 1.0,
        }
    }

    pub fn default_repeats(self, phase: Phase) -> usize {
        match (self, phase) {
            (Strategy::Mc | Strategy::Gn | Strategy::Rc, _) => 1,
            (_, Phase::Train) => TRAIN_REPEATS,
            (_, Phase::Inference) => INFERENCE_REPEATS,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    #[default]
    Train,
    Inference,
}

/// How the RT probability is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenMode {
    /// One Bernoulli trial per round.
    #[default]
    PerStep,
    /// One Bernoulli trial per token per round.
    PerToken,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub strategy: Strategy,
    pub probability: f64,
    pub repeats: usize,
    pub noise_scale: f64,
    pub number_range: u64,
    pub token_mode: TokenMode,
    pub seed: u64,
}

impl TransformSpec {
    pub fn new(strategy: Strategy, phase: Phase, seed: u64) -> Self {
        Self {
            strategy,
            probability: strategy.default_probability(),
            repeats: strategy.default_repeats(phase),
            noise_scale: DEFAULT_NOISE_SCALE,
            number_range: DEFAULT_NUMBER_RANGE,
            token_mode: TokenMode::PerStep,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::InvalidConfig(format!(
                "probability must lie in [0, 1], got {}",
                self.probability
            )));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be at least 1".into()));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise_scale must be finite and >= 0, got {}",
                self.noise_scale
            )));
        }
        if self.number_range == 0 {
            return Err(Error::InvalidConfig("number_range must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies a caption strategy. MC needs `pool`; RC and RT need `vocab`.
    pub fn apply_caption(
        &self,
        caption: &str,
        pool: Option<&[String]>,
        vocab: Option<&Vocab>,
        seed: u64,
    ) -> Result<String> {
        let need_vocab = || vocab.ok_or(Error::Empty("vocabulary"));
        match self.strategy {
            Strategy::Mc => {
                let pool = pool.ok_or_else(|| Error::Missing {
                    what: "caption pool",
                    id: caption.to_owned(),
                })?;
                multiple_captions_sample(pool, seed).map(str::to_owned)
            }
            Strategy::Gn => Err(Error::InvalidConfig(
                "gn operates on text embeddings, not captions".into(),
            )),
            Strategy::Rc => Ok(random_caption_replace(caption, self.probability, need_vocab()?, seed)),
            Strategy::Rt => Ok(match self.token_mode {
                TokenMode::PerStep => {
                    random_token_replace(caption, self.probability, self.repeats, need_vocab()?, seed)
                }
                TokenMode::PerToken => {
                    random_token_replace_per_token(caption, self.probability, self.repeats, need_vocab()?, seed)
                }
            }),
            Strategy::Cwr => Ok(caption_word_repeat(caption, self.probability, self.repeats, seed)),
            Strategy::Rna => Ok(random_number_add(
                caption,
                self.probability,
                self.repeats,
                self.number_range,
                seed,
            )),
        }
    }
}

/// Uniform choice from a caption pool.
pub fn multiple_captions_sample(pool: &[String], seed: u64) -> Result<&str> {
    let mut r = rng::from_seed(seed);
    pool.choose(&mut r)
        .map(String::as_str)
        .ok_or(Error::Empty("caption pool"))
}

/// `out = emb + noise_scale * z`, `z` standard normal per coordinate.
pub fn gaussian_noise(emb: &[f32], noise_scale: f64, seed: u64) -> Vec<f32> {
    if noise_scale == 0.0 {
        return emb.to_vec();
    }
    let mut r = rng::from_seed(seed);
    emb.iter()
        .map(|&x| {
            let z: f64 = r.sample(StandardNormal);
            (f64::from(x) + noise_scale * z) as f32
        })
        .collect()
}

fn random_sequence(vocab: &Vocab, len: usize, r: &mut ChaCha8Rng) -> String {
    (0..len).map(|_| vocab.pick(r)).collect::<Vec<_>>().join(" ")
}

/// With probability `p`, replaces the caption by six random vocab tokens.
pub fn random_caption_replace(caption: &str, p: f64, vocab: &Vocab, seed: u64) -> String {
    let mut r = rng::from_seed(seed);
    if r.random_bool(p) {
        random_sequence(vocab, RANDOM_CAPTION_LEN, &mut r)
    } else {
        caption.to_owned()
    }
}

/// Token buffer that only materializes once a round edits it.
struct Tokens<'a> {
    original: &'a str,
    tokens: Option<Vec<String>>,
}

impl<'a> Tokens<'a> {
    fn new(original: &'a str) -> Self {
        Self { original, tokens: None }
    }

    fn get(&mut self) -> &mut Vec<String> {
        let original = self.original;
        self.tokens
            .get_or_insert_with(|| original.split_whitespace().map(str::to_owned).collect())
    }

    fn len(&mut self) -> usize {
        match &self.tokens {
            Some(t) => t.len(),
            None => self.original.split_whitespace().count(),
        }
    }

    fn finish(self) -> String {
        match self.tokens {
            Some(t) => t.join(" "),
            None => self.original.to_owned(),
        }
    }
}

/// Per round, with probability `p`, either overwrites a uniformly chosen
/// token or inserts a vocab token at a uniform position (fair coin between
/// the two). Empty captions can only grow.
pub fn random_token_replace(caption: &str, p: f64, repeats: usize, vocab: &Vocab, seed: u64) -> String {
    let mut r = rng::from_seed(seed);
    let mut toks = Tokens::new(caption);
    for _ in 0..repeats {
        if !r.random_bool(p) {
            continue;
        }
        let n = toks.len();
        let replace = r.random_bool(0.5) && n > 0;
        let word = vocab.pick(&mut r).to_owned();
        if replace {
            let at = r.random_range(0..n);
            toks.get()[at] = word;
        } else {
            let at = r.random_range(0..=n);
            toks.get().insert(at, word);
        }
    }
    toks.finish()
}

/// RT variant with an independent trial for every token in every round;
/// an "add" places the new word right after the token that triggered it.
pub fn random_token_replace_per_token(caption: &str, p: f64, repeats: usize, vocab: &Vocab, seed: u64) -> String {
    let mut r = rng::from_seed(seed);
    let mut toks = Tokens::new(caption);
    for _ in 0..repeats {
        let n = toks.len();
        if n == 0 {
            if r.random_bool(p) {
                let word = vocab.pick(&mut r).to_owned();
                toks.get().push(word);
            }
            continue;
        }
        let mut i = 0;
        let mut remaining = n;
        while remaining > 0 {
            remaining -= 1;
            if r.random_bool(p) {
                let word = vocab.pick(&mut r).to_owned();
                if r.random_bool(0.5) {
                    toks.get()[i] = word;
                } else {
                    toks.get().insert(i + 1, word);
                    i += 1;
                }
            }
            i += 1;
        }
    }
    toks.finish()
}

/// Per round, with probability `p`, copies a uniformly chosen token to a uniform position.
pub fn caption_word_repeat(caption: &str, p: f64, repeats: usize, seed: u64) -> String {
    let mut r = rng::from_seed(seed);
    let mut toks = Tokens::new(caption);
    for _ in 0..repeats {
        if !r.random_bool(p) {
            continue;
        }
        let n = toks.len();
        if n == 0 {
            continue;
        }
        let from = r.random_range(0..n);
        let at = r.random_range(0..=n);
        let t = toks.get();
        let word = t[from].clone();
        t.insert(at, word);
    }
    toks.finish()
}

/// Per round, with probability `p`, inserts a uniform integer in `[0, number_range)` at a uniform position.
pub fn random_number_add(caption: &str, p: f64, repeats: usize, number_range: u64, seed: u64) -> String {
    let mut r = rng::from_seed(seed);
    let mut toks = Tokens::new(caption);
    for _ in 0..repeats {
        if !r.random_bool(p) {
            continue;
        }
        let number = r.random_range(0..number_range.max(1));
        let n = toks.len();
        let at = r.random_range(0..=n);
        toks.get().insert(at, number.to_string());
    }
    toks.finish()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CaptionScheme {
    Fixed,
    Class,
    Random,
}

impl FromStr for CaptionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(CaptionScheme::Fixed),
            "class" => Ok(CaptionScheme::Class),
            "random" => Ok(CaptionScheme::Random),
            _ => Err(Error::InvalidConfig(format!("unknown caption scheme {s:?}"))),
        }
    }
}

/// Fixed, class-template or random-token conditioning captions.
pub fn caption_scheme(
    scheme: &CaptionScheme,
    class_name: Option<&str>,
    vocab: Option<&Vocab>,
    seed: u64,
) -> Result<String> {
    match scheme {
        CaptionScheme::Fixed => Ok(FIXED_CAPTION.to_owned()),
        CaptionScheme::Class => {
            let name = class_name.ok_or(Error::Empty("class name"))?;
            Ok(format!("{CLASS_CAPTION_PREFIX}{name}"))
        }
        CaptionScheme::Random => {
            let vocab = vocab.ok_or(Error::Empty("vocabulary"))?;
            Ok(random_sequence(vocab, RANDOM_CAPTION_LEN, &mut rng::from_seed(seed)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        Vocab::new(["alpha", "beta", "gamma", "delta", "omega"].map(String::from).to_vec()).unwrap()
    }

    fn count(s: &str) -> usize {
        s.split_whitespace().count()
    }

    #[test]
    fn bundled_vocab() {
        let v = Vocab::english();
        assert_eq!(v.len(), 10_000);
        assert!(v
            .tokens()
            .iter()
            .all(|t| !t.is_empty() && !t.contains(char::is_whitespace)));
        assert!(Vocab::new(Vec::new()).is_err());
    }

    #[test]
    fn strategy_codes_and_defaults() {
        for s in Strategy::ALL {
            assert_eq!(s.code().parse::<Strategy>().unwrap(), s);
        }
        assert!("xx".parse::<Strategy>().is_err());
        assert_eq!(Strategy::Rt.default_probability(), 0.1);
        assert_eq!(Strategy::Rc.default_probability(), 0.4);
        assert_eq!(Strategy::Rna.default_repeats(Phase::Train), 2);
        assert_eq!(Strategy::Cwr.default_repeats(Phase::Inference), 4);
        assert_eq!(Strategy::Rc.default_repeats(Phase::Inference), 1);
        let spec = TransformSpec::new(Strategy::Gn, Phase::Train, 0);
        assert_eq!(spec.noise_scale, 0.1);
        assert_eq!(spec.number_range, 1_000_000);
    }

    #[test]
    fn multiple_captions() {
        let one = vec!["only".to_string()];
        assert_eq!(multiple_captions_sample(&one, 5).unwrap(), "only");
        assert!(multiple_captions_sample(&[], 5).is_err());
        let pool: Vec<String> = (0..21).map(|i| format!("c{i}")).collect();
        assert_eq!(
            multiple_captions_sample(&pool, 9).unwrap(),
            multiple_captions_sample(&pool, 9).unwrap()
        );
    }

    #[test]
    fn gaussian_noise_zero_scale_and_determinism() {
        let v = vec![0.5f32, -0.25, 1.0];
        assert_eq!(gaussian_noise(&v, 0.0, 1), v);
        assert_eq!(gaussian_noise(&v, 0.1, 1), gaussian_noise(&v, 0.1, 1));
        assert_ne!(gaussian_noise(&v, 0.1, 1), gaussian_noise(&v, 0.1, 2));
    }

    #[test]
    fn random_caption_forced_branches() {
        let v = vocab();
        assert_eq!(random_caption_replace("a dog  on grass", 0.0, &v, 3), "a dog  on grass");
        let out = random_caption_replace("a dog", 1.0, &v, 3);
        let toks: Vec<&str> = out.split(' ').collect();
        assert_eq!(toks.len(), 6);
        assert!(toks.iter().all(|t| v.tokens().iter().any(|w| w == t)));
    }

    #[test]
    fn token_replace_branches() {
        let v = vocab();
        assert_eq!(random_token_replace("Wall  View 003", 0.0, 4, &v, 1), "Wall  View 003");
        for seed in 0..200 {
            let out = random_token_replace("Wall View 003", 1.0, 2, &v, seed);
            assert!((3..=5).contains(&count(&out)), "{out}");
            assert_ne!(out, "Wall View 003");
            // the first round on an empty caption can only add
            assert_eq!(count(&random_token_replace("", 1.0, 1, &v, seed)), 1);
            assert!((1..=2).contains(&count(&random_token_replace("", 1.0, 2, &v, seed))));
        }
    }

    #[test]
    fn token_replace_inference_form() {
        // four rounds at p = 1 keep every original word in order unless replaced
        let out = random_token_replace("Wall View 003", 1.0, 4, &Vocab::english(), 11);
        assert!((3..=7).contains(&count(&out)));
    }

    #[test]
    fn token_replace_per_token_mode() {
        let v = vocab();
        assert_eq!(random_token_replace_per_token("a b c", 0.0, 3, &v, 0), "a b c");
        let out = random_token_replace_per_token("a b c", 1.0, 1, &v, 0);
        assert!((3..=6).contains(&count(&out)));
        // every original token was either overwritten or followed by an insertion
        let kept: Vec<&str> = out.split(' ').filter(|t| ["a", "b", "c"].contains(t)).collect();
        assert_eq!(count(&out), 3 + kept.len());
    }

    #[test]
    fn word_repeat() {
        assert_eq!(caption_word_repeat("dog", 1.0, 1, 7), "dog dog");
        assert_eq!(caption_word_repeat("", 1.0, 3, 7), "");
        assert_eq!(caption_word_repeat("x  y", 0.0, 3, 7), "x  y");
        for seed in 0..50 {
            let out = caption_word_repeat("the quick brown fox", 1.0, 2, seed);
            assert_eq!(count(&out), 6);
            assert!(out.split(' ').all(|t| ["the", "quick", "brown", "fox"].contains(&t)));
        }
    }

    #[test]
    fn number_add() {
        let caption = "Mothers influence on her young hippo";
        assert_eq!(random_number_add(caption, 0.0, 4, 1_000_000, 2), caption);
        for seed in 0..50 {
            let out = random_number_add(caption, 1.0, 3, 1_000_000, seed);
            let nums: Vec<u64> = out.split(' ').filter_map(|t| t.parse().ok()).collect();
            assert_eq!(nums.len(), 3);
            assert!(nums.iter().all(|&n| n < 1_000_000));
            let words: Vec<&str> = out.split(' ').filter(|t| t.parse::<u64>().is_err()).collect();
            assert_eq!(words.join(" "), caption);
        }
        assert_eq!(random_number_add("", 1.0, 1, 1, 0), "0");
    }

    #[test]
    fn schemes() {
        let v = vocab();
        assert_eq!(
            caption_scheme(&CaptionScheme::Fixed, None, None, 0).unwrap(),
            "An image"
        );
        assert_eq!(
            caption_scheme(&CaptionScheme::Class, Some("tench"), None, 0).unwrap(),
            "An image of tench"
        );
        let random = caption_scheme(&CaptionScheme::Random, None, Some(&v), 4).unwrap();
        assert_eq!(count(&random), 6);
        assert!(random.split(' ').all(|t| v.tokens().iter().any(|w| w == t)));
        assert!(caption_scheme(&CaptionScheme::Class, None, None, 0).is_err());
        assert!(caption_scheme(&CaptionScheme::Random, None, None, 0).is_err());
    }

    #[test]
    fn spec_validation_and_dispatch() {
        let mut spec = TransformSpec::new(Strategy::Rc, Phase::Train, 0);
        assert!(spec.validate().is_ok());
        spec.probability = 1.5;
        assert!(spec.validate().is_err());
        let gn = TransformSpec::new(Strategy::Gn, Phase::Train, 0);
        assert!(gn.apply_caption("x", None, None, 0).is_err());
        let rc = TransformSpec::new(Strategy::Rc, Phase::Train, 0);
        assert!(matches!(
            rc.apply_caption("x", None, None, 0),
            Err(Error::Empty("vocabulary"))
        ));
    }
}
