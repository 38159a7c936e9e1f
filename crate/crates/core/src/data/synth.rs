use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{classify_overlap, DataError, Example, OverlapClass, RelationTuple, Sentence, Span};

/// Synthetic corpus parameters.
///
/// Sentences are clause sequences `HEAD clue TAIL` with one clue word per
/// relation. Pair-overlap sentences stack several clues before one tail;
/// single-entity-overlap sentences attach several `clue TAIL` groups to one
/// head. Every other token is filler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub neo: usize,
    pub epo: usize,
    pub seo: usize,
    /// Sentences that are both EPO and SEO.
    pub epo_seo: usize,
    pub relations: usize,
    pub entities: usize,
    pub entity_max_len: usize,
    pub filler_words: usize,
    /// Relative frequency of 1, 2, 3, 4 and 5 tuples per sentence.
    pub tuple_weights: [f64; 5],
    pub train_fraction: f64,
    pub valid_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            neo: 131,
            epo: 25,
            seo: 30,
            epo_seo: 14,
            relations: 6,
            entities: 120,
            entity_max_len: 2,
            filler_words: 40,
            tuple_weights: [36835.0, 12065.0, 3672.0, 2623.0, 1001.0],
            train_fraction: 0.7,
            valid_fraction: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn sentences(&self) -> usize {
        self.neo + self.epo + self.seo + self.epo_seo
    }

    /// Sets one field from a `key = value` config entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let int = || value.parse::<usize>().map_err(|e| format!("{key}: {e}"));
        let float = || value.parse::<f64>().map_err(|e| format!("{key}: {e}"));
        match key {
            "neo" => self.neo = int()?,
            "epo" => self.epo = int()?,
            "seo" => self.seo = int()?,
            "epo_seo" => self.epo_seo = int()?,
            "relations" => self.relations = int()?,
            "entities" => self.entities = int()?,
            "entity_max_len" => self.entity_max_len = int()?,
            "filler_words" => self.filler_words = int()?,
            "train_fraction" => self.train_fraction = float()?,
            "valid_fraction" => self.valid_fraction = float()?,
            "tuple_weights" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{key}: {e}")))
                    .collect::<Result<_, _>>()?;
                self.tuple_weights = parts
                    .try_into()
                    .map_err(|_| format!("{key}: expected 5 comma-separated weights"))?;
            }
            _ => return Err(format!("unknown synthetic key {key}")),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InfeasibleConfig(m));
        if self.sentences() == 0 {
            return bad("no sentences requested".into());
        }
        if self.relations == 0 {
            return bad("at least one relation is required".into());
        }
        if (self.epo > 0 || self.epo_seo > 0) && self.relations < 2 {
            return bad("pair overlap needs at least two relations".into());
        }
        if self.entities < 2 * MAX_TUPLES {
            return bad(format!("need at least {} entities", 2 * MAX_TUPLES));
        }
        if self.entity_max_len == 0 || self.filler_words == 0 {
            return bad("entity_max_len and filler_words must be positive".into());
        }
        if self.tuple_weights.iter().any(|w| !w.is_finite() || *w < 0.0) || self.tuple_weights.iter().sum::<f64>() <= 0.0 {
            return bad("tuple weights must be non-negative with a positive sum".into());
        }
        let (tf, vf) = (self.train_fraction, self.valid_fraction);
        if !(0.0..=1.0).contains(&tf) || !(0.0..=1.0).contains(&vf) || tf + vf > 1.0 {
            return bad("split fractions must lie in [0, 1] and sum to at most 1".into());
        }
        Ok(())
    }
}

const MAX_TUPLES: usize = 5;
const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Deterministic pseudo-word for index `i` with at least `syllables` syllables.
fn pseudo_word(mut i: usize, syllables: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut out = String::new();
    for _ in 0..syllables {
        let s = i % base;
        i /= base;
        out.push(CONSONANTS[s / VOWELS.len()] as char);
        out.push(VOWELS[s % VOWELS.len()] as char);
    }
    while i > 0 {
        let s = i % base;
        i /= base;
        out.push(CONSONANTS[s / VOWELS.len()] as char);
        out.push(VOWELS[s % VOWELS.len()] as char);
    }
    out
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Largest-remainder allocation of `total` over `weights`; ties go to the
/// lower index.
fn allocate(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).expect("finite").then(a.cmp(&b))
    });
    let missing = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    Neo,
    Epo,
    Seo,
    EpoSeo,
}

impl Shape {
    fn min_tuples(self) -> usize {
        match self {
            Shape::Neo => 1,
            Shape::Epo | Shape::Seo => 2,
            Shape::EpoSeo => 3,
        }
    }

    fn expected(self) -> Vec<OverlapClass> {
        match self {
            Shape::Neo => vec![OverlapClass::Neo],
            Shape::Epo => vec![OverlapClass::Epo],
            Shape::Seo => vec![OverlapClass::Seo],
            Shape::EpoSeo => vec![OverlapClass::Epo, OverlapClass::Seo],
        }
    }
}

struct Lexicon {
    fillers: Vec<String>,
    clues: Vec<String>,
    entities: Vec<Vec<String>>,
    relations: Vec<String>,
}

impl Lexicon {
    fn new(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let fillers = (0..cfg.filler_words).map(|i| pseudo_word(i, 2)).collect();
        let clues = (0..cfg.relations).map(|i| pseudo_word(cfg.filler_words + i, 2)).collect();
        let mut next = 0usize;
        let entities = (0..cfg.entities)
            .map(|_| {
                let len = rng.gen_range(1..=cfg.entity_max_len);
                (0..len)
                    .map(|_| {
                        next += 1;
                        capitalize(&pseudo_word(next - 1, 2))
                    })
                    .collect()
            })
            .collect();
        let relations = (0..cfg.relations).map(|i| format!("/synth/rel{i}")).collect();
        Self { fillers, clues, entities, relations }
    }
}

/// One clause: a head and `(clues, tail)` groups. Entities are pool indexes.
struct Clause {
    head: usize,
    groups: Vec<(Vec<usize>, usize)>,
}

struct Builder<'a> {
    lex: &'a Lexicon,
    tokens: Vec<String>,
    tuples: Vec<(Span, Span, usize)>,
}

impl Builder<'_> {
    fn fillers(&mut self, rng: &mut ChaCha8Rng, max: usize) {
        for _ in 0..rng.gen_range(0..=max) {
            let w = self.lex.fillers.choose(rng).expect("non-empty").clone();
            self.tokens.push(w);
        }
    }

    fn entity(&mut self, e: usize) -> Span {
        let start = self.tokens.len();
        self.tokens.extend(self.lex.entities[e].iter().cloned());
        Span::new(start, self.tokens.len() - 1)
    }

    fn clause(&mut self, c: &Clause) {
        let head = self.entity(c.head);
        for (gi, (rels, tail)) in c.groups.iter().enumerate() {
            if gi > 0 {
                self.tokens.push(",".into());
            }
            for (ri, &r) in rels.iter().enumerate() {
                if ri > 0 {
                    self.tokens.push("and".into());
                }
                self.tokens.push(self.lex.clues[r].clone());
            }
            let tail_span = self.entity(*tail);
            for &r in rels {
                self.tuples.push((head, tail_span, r));
            }
        }
    }
}

fn sentence(lex: &Lexicon, shape: Shape, k: usize, rng: &mut ChaCha8Rng) -> Result<Example, DataError> {
    let mut pool: Vec<usize> = (0..lex.entities.len()).collect();
    pool.shuffle(rng);
    let mut fresh = pool.into_iter();
    let mut take = || fresh.next().expect("pool checked by validate");
    let rel = |rng: &mut ChaCha8Rng| rng.gen_range(0..lex.relations.len());
    let two_rels = |rng: &mut ChaCha8Rng| {
        let picked: Vec<usize> = rand::seq::index::sample(rng, lex.relations.len(), 2).into_vec();
        picked
    };

    let mut clauses = Vec::new();
    let simple = match shape {
        Shape::Neo => k,
        Shape::Epo => {
            let r = two_rels(rng);
            clauses.push(Clause { head: take(), groups: vec![(r, take())] });
            k - 2
        }
        Shape::Seo => {
            let head = take();
            let g1 = (vec![rel(rng)], take());
            let g2 = (vec![rel(rng)], take());
            clauses.push(Clause { head, groups: vec![g1, g2] });
            k - 2
        }
        Shape::EpoSeo => {
            let head = take();
            let g1 = (two_rels(rng), take());
            let g2 = (vec![rel(rng)], take());
            clauses.push(Clause { head, groups: vec![g1, g2] });
            k - 3
        }
    };
    for _ in 0..simple {
        clauses.push(Clause { head: take(), groups: vec![(vec![rel(rng)], take())] });
    }
    clauses.shuffle(rng);

    let mut b = Builder { lex, tokens: Vec::new(), tuples: Vec::new() };
    b.fillers(rng, 2);
    for (i, c) in clauses.iter().enumerate() {
        if i > 0 {
            b.tokens.push(if rng.gen_bool(0.5) { "while".into() } else { "and".into() });
            b.fillers(rng, 1);
        }
        b.clause(c);
    }
    b.fillers(rng, 2);
    b.tokens.push(".".into());

    let s = Sentence::new(b.tokens);
    let tuples = b
        .tuples
        .iter()
        .map(|&(h, t, r)| RelationTuple::new(&s, h, t, &lex.relations[r]))
        .collect::<Result<Vec<_>, _>>()?;
    let ex = Example::new(s, tuples);
    debug_assert_eq!(ex.tuples.len(), k);
    let got: Vec<OverlapClass> = classify_overlap(&ex.tuples).into_iter().collect();
    if got != shape.expected() {
        return Err(DataError::Format(format!("generator produced {got:?} for {shape:?}")));
    }
    Ok(ex)
}

/// Generates the synthetic corpus. Output depends only on `cfg` and `seed`.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<Vec<Example>, DataError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lex = Lexicon::new(cfg, &mut rng);

    let counts = allocate(cfg.sentences(), &cfg.tuple_weights);
    let mut ks: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| std::iter::repeat_n(i + 1, n))
        .collect();
    ks.shuffle(&mut rng);

    let mut plan = Vec::with_capacity(ks.len());
    for (shape, n) in [(Shape::EpoSeo, cfg.epo_seo), (Shape::Epo, cfg.epo), (Shape::Seo, cfg.seo)] {
        for _ in 0..n {
            let pos = ks.iter().position(|&k| k >= shape.min_tuples()).ok_or_else(|| {
                DataError::InfeasibleConfig(format!(
                    "tuple-count histogram leaves too few sentences with >= {} tuples",
                    shape.min_tuples()
                ))
            })?;
            plan.push((shape, ks.remove(pos)));
        }
    }
    plan.extend(ks.into_iter().map(|k| (Shape::Neo, k)));
    plan.shuffle(&mut rng);

    plan.into_iter().map(|(shape, k)| sentence(&lex, shape, k, &mut rng)).collect()
}

/// Seeded shuffle into train / validation / test by fraction.
pub fn split_examples(
    examples: &[Example],
    train_fraction: f64,
    valid_fraction: f64,
    seed: u64,
) -> (Vec<Example>, Vec<Example>, Vec<Example>) {
    let mut idx: Vec<usize> = (0..examples.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = examples.len();
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let n_valid = (((n as f64) * valid_fraction).round() as usize).min(n - n_train.min(n));
    let pick = |r: &[usize]| r.iter().map(|&i| examples[i].clone()).collect::<Vec<_>>();
    let n_train = n_train.min(n);
    (
        pick(&idx[..n_train]),
        pick(&idx[n_train..n_train + n_valid]),
        pick(&idx[n_train + n_valid..]),
    )
}
