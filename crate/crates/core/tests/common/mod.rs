//! Builders for the scripted model fixtures under `data/fixtures`.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use slotguide::bridge::toy::{basic_tokenize, PathToken, Peak, ToyAttention, ToyDefault, ToyInput, ToySpec, ToyStep};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Output vocabulary; ids are assigned on first use after `<pad>` and `</s>`.
#[derive(Default)]
pub struct Vocab {
    pub pieces: Vec<String>,
}

pub const EOS: u32 = 1;

impl Vocab {
    pub fn new() -> Self {
        Vocab { pieces: vec!["<pad>".into(), "</s>".into()] }
    }

    pub fn id(&mut self, piece: &str) -> u32 {
        match self.pieces.iter().position(|p| p == piece) {
            Some(i) => i as u32,
            None => {
                self.pieces.push(piece.to_string());
                (self.pieces.len() - 1) as u32
            }
        }
    }

    /// Words become `▁word`; punctuation and `##`-marked continuations
    /// attach to the previous piece.
    pub fn sentence(&mut self, text: &str) -> Vec<u32> {
        text.split_whitespace()
            .map(|w| {
                if let Some(rest) = w.strip_prefix("##") {
                    self.id(rest)
                } else if w.chars().all(|c| c.is_ascii_punctuation()) {
                    self.id(w)
                } else {
                    self.id(&format!("▁{w}"))
                }
            })
            .collect()
    }
}

/// Attention with per-layer weights on chosen source tokens. Layers without
/// an explicit weight on a token give it nothing special; `sink` absorbs
/// `sink_total` minus the chosen weights in every layer, and the remaining
/// mass is spread over the other tokens.
pub fn attention(num_layers: usize, sink: usize, sink_total: f64, peaks: &[(usize, Vec<f64>)]) -> ToyAttention {
    let mut out = Vec::new();
    for l in 0..num_layers {
        let mut used = 0.0;
        for (token, weights) in peaks {
            let w = weights[l];
            used += w;
            out.push(Peak { token: *token, weight: w, layers: Some(vec![l]), heads: None });
        }
        let s = sink_total - used;
        if s > 1e-12 {
            out.push(Peak { token: sink, weight: s, layers: Some(vec![l]), heads: None });
        }
    }
    ToyAttention::peaks(out)
}

pub fn quiet(num_layers: usize, sink: usize) -> ToyAttention {
    attention(num_layers, sink, 0.9, &[])
}

/// A path through the script: the sentence's pieces then EOS, each with
/// logprob `default_lp` unless overridden, and quiet attention unless
/// overridden. Step indices count generated tokens from zero.
pub struct PathSpec<'a> {
    pub sentence: &'a str,
    pub logprobs: Vec<(usize, f64)>,
    pub attention: Vec<(usize, ToyAttention)>,
}

pub fn build_path(vocab: &mut Vocab, spec: &PathSpec, default_lp: f64, quiet: &ToyAttention) -> Vec<PathToken> {
    let mut tokens = vocab.sentence(spec.sentence);
    tokens.push(EOS);
    tokens
        .into_iter()
        .enumerate()
        .map(|(i, token)| PathToken {
            token,
            logprob: spec.logprobs.iter().find(|(s, _)| *s == i).map_or(default_lp, |(_, lp)| *lp),
            attention: spec.attention.iter().find(|(s, _)| *s == i).map_or_else(|| quiet.clone(), |(_, a)| a.clone()),
        })
        .collect()
}

pub fn source_index(text: &str, token: &str) -> usize {
    basic_tokenize(text).0.iter().position(|t| t == token).unwrap_or_else(|| panic!("`{token}` not in `{text}`"))
}

// ---------------------------------------------------------------------------
// Grid-recovery suite: six single-slot MRs whose pools hold a fluent but
// wrong candidate A and a correct candidate B. Each case is lost by exactly
// one off-default threshold value.

pub const GRID_LAYERS: usize = 4;
pub const GRID_DEVELOPERS: [&str; 6] = ["Valve", "Bungie", "Ubisoft", "Nintendo", "Capcom", "Sega"];

pub fn grid_mr(dev: &str) -> String {
    format!("inform(developer[{dev}])")
}

/// Per-layer weights on the developer value, q elsewhere.
fn dev_att(w: [f64; 4]) -> ToyAttention {
    // source: intent = inform | developer = X ; sink on `|`
    attention(GRID_LAYERS, 3, 0.95, &[(6, w.to_vec())])
}

pub fn grid_suite() -> (ToySpec, Vec<String>) {
    const Q: f64 = 0.01;
    let quiet = dev_att([Q; 4]);
    let high_v = dev_att([0.95, Q, Q, Q]);
    let eos_strong = dev_att([Q, Q, 0.9, 0.9]);
    // (A step 1, A eos, B step 1, B eos)
    let cases: [(ToyAttention, ToyAttention, ToyAttention, ToyAttention); 6] = [
        // verbatim 0.5 tracks A's 0.7 spike
        (dev_att([0.7, Q, Q, Q]), eos_strong.clone(), high_v.clone(), quiet.clone()),
        // verbatim 1.0 loses B's only durable evidence
        (quiet.clone(), quiet.clone(), high_v.clone(), eos_strong.clone()),
        // paraphrased 0.3 tracks A (0.345)
        (dev_att([Q, 0.68, Q, Q]), quiet.clone(), high_v.clone(), quiet.clone()),
        // paraphrased 0.5 misses B (0.445)
        (quiet.clone(), quiet.clone(), dev_att([Q, 0.88, Q, Q]), quiet.clone()),
        // unrealized 0.05 erases B (0.08)
        (quiet.clone(), quiet.clone(), dev_att([0.3, 0.9, Q, Q]), dev_att([Q, Q, 0.15, 0.15])),
        // unrealized 0.2 keeps A (0.155)
        (dev_att([0.3, 0.9, Q, Q]), dev_att([Q, Q, 0.3, 0.3]), high_v.clone(), quiet.clone()),
    ];
    let mut vocab = Vocab::new();
    let mut inputs = Vec::new();
    let mut mrs = Vec::new();
    for (dev, (a1, a_eos, b1, b_eos)) in GRID_DEVELOPERS.iter().zip(cases) {
        let text = format!("intent = inform | developer = {dev}");
        let a = PathSpec { sentence: "It is fun .", logprobs: vec![(0, -0.3)], attention: vec![(1, a1), (4, a_eos)] };
        let b_sentence = format!("{dev} made it .");
        let b = PathSpec { sentence: &b_sentence, logprobs: vec![(0, -1.5)], attention: vec![(1, b1), (4, b_eos)] };
        let paths = [build_path(&mut vocab, &a, -0.05, &quiet), build_path(&mut vocab, &b, -0.05, &quiet)];
        inputs.push(ToyInput::from_paths(text, &paths).unwrap());
        mrs.push(grid_mr(dev));
    }
    let spec = ToySpec {
        model: "toy-grid".into(),
        vocab: vocab.pieces,
        eos: EOS,
        num_layers: GRID_LAYERS,
        num_heads: 2,
        inputs,
        default: None,
    };
    (spec, mrs)
}

// ---------------------------------------------------------------------------
// Beam-sweep suite: the only candidate that realizes the developer enters
// the beam at rank 4 of the first step.

pub const SWEEP_DEVELOPERS: [&str; 4] = ["Atari", "Konami", "Sony", "Square"];

pub fn sweep_suite() -> (ToySpec, Vec<String>) {
    let quiet = dev_att([0.01; 4]);
    let spike = dev_att([0.95, 0.01, 0.01, 0.01]);
    let mut vocab = Vocab::new();
    let mut inputs = Vec::new();
    let mut mrs = Vec::new();
    for dev in SWEEP_DEVELOPERS {
        let text = format!("intent = inform | developer = {dev}");
        let right = format!("{dev} made it .");
        let sentences = ["It is fun .", "This is fun .", "The game is fun .", "A fun game .", &right, "We like it ."];
        let paths: Vec<_> = sentences
            .iter()
            .enumerate()
            .map(|(rank, s)| {
                let att = if *s == right { vec![(1, spike.clone())] } else { vec![] };
                let spec = PathSpec { sentence: s, logprobs: vec![(0, -1.0 - 0.5 * rank as f64)], attention: att };
                build_path(&mut vocab, &spec, -0.05, &quiet)
            })
            .collect();
        inputs.push(ToyInput::from_paths(text, &paths).unwrap());
        mrs.push(grid_mr(dev));
    }
    let spec = ToySpec {
        model: "toy-sweep".into(),
        vocab: vocab.pieces,
        eos: EOS,
        num_layers: GRID_LAYERS,
        num_heads: 2,
        inputs,
        default: None,
    };
    (spec, mrs)
}

// ---------------------------------------------------------------------------
// Demo suite over three ViGGO MRs showing the three attention patterns.

pub const DEMO_MRS: [&str; 3] = [
    "request_explanation(rating[poor], genres[vehicular combat], player_perspective[third person])",
    "inform(name[Portal], developer[Valve], rating[excellent])",
    "inform(name[Halo], has_multiplayer[yes], platforms[Xbox, PC])",
];

pub const DEMO_REFS: [&str; 3] = [
    "What is it about third person vehicular combat games that you find so distasteful?",
    "Portal is an amazing game by Valve.",
    "Halo is a multiplayer game for Xbox and PC.",
];

pub const DEMO_LAYERS: usize = 4;

pub fn demo_suite() -> ToySpec {
    let l = DEMO_LAYERS;
    let mut vocab = Vocab::new();
    let mut inputs = Vec::new();
    let one =
        |layers: &[usize], w: f64| -> Vec<f64> { (0..l).map(|i| if layers.contains(&i) { w } else { 0.0 }).collect() };

    // 1: verbatim "third", paraphrased "poor"; the likelier path drops genres.
    let text =
        "intent = request explanation | rating = poor | genres = vehicular combat | player perspective = third person";
    let quiet1 = quiet(l, 0);
    let third = attention(l, 0, 0.97, &[(source_index(text, "third"), one(&[0], 0.97))]);
    let vehic = attention(l, 0, 0.95, &[(source_index(text, "vehicular"), one(&[0], 0.95))]);
    let poor = attention(l, 0, 0.9, &[(source_index(text, "poor"), one(&[0, 1], 0.45))]);
    let a = PathSpec {
        sentence: "What is it about third person games that you find so dis ##tasteful ?",
        logprobs: vec![(6, -0.2)],
        attention: vec![(5, third.clone()), (11, poor.clone())],
    };
    let b = PathSpec {
        sentence: "What is it about third person vehicular combat games that you find so dis ##tasteful ?",
        logprobs: vec![(6, -1.9)],
        attention: vec![(5, third), (7, vehic), (13, poor)],
    };
    let paths = [build_path(&mut vocab, &a, -0.1, &quiet1), build_path(&mut vocab, &b, -0.1, &quiet1)];
    inputs.push(ToyInput::from_paths(text, &paths).unwrap());

    // 2: the likelier path stops before naming the developer.
    let text = "intent = inform | name = Portal | developer = Valve | rating = excellent";
    let quiet2 = quiet(l, 0);
    let v = |tok: &str| attention(l, 0, 0.95, &[(source_index(text, tok), one(&[0], 0.95))]);
    let excellent = attention(l, 0, 0.9, &[(source_index(text, "excellent"), one(&[0, 1], 0.5))]);
    let a = PathSpec {
        sentence: "Portal is an amazing game .",
        logprobs: vec![(5, -0.3)],
        attention: vec![(1, v("Portal")), (3, excellent.clone())],
    };
    let b = PathSpec {
        sentence: "Portal is an amazing game by Valve .",
        logprobs: vec![(5, -1.5)],
        attention: vec![(1, v("Portal")), (3, excellent), (7, v("Valve"))],
    };
    let paths = [build_path(&mut vocab, &a, -0.1, &quiet2), build_path(&mut vocab, &b, -0.1, &quiet2)];
    inputs.push(ToyInput::from_paths(text, &paths).unwrap());

    // 3: platforms considered at step 5, then left unrealized by the
    // likelier path and attended to again at its end.
    let text = "intent = inform | name = Halo | has multiplayer = yes | platforms = Xbox, PC";
    let quiet3 = quiet(l, 0);
    let v = |tok: &str| attention(l, 0, 0.95, &[(source_index(text, tok), one(&[0], 0.95))]);
    let xbox = source_index(text, "Xbox");
    let considered = attention(l, 0, 0.9, &[(xbox, one(&[0, 1], 0.45))]);
    let unrealized = attention(l, 0, 0.9, &[(xbox, one(&[0, 1, 2, 3], 0.3))]);
    let a = PathSpec {
        sentence: "Halo is a multiplayer game .",
        logprobs: vec![(5, -0.3)],
        attention: vec![(1, v("Halo")), (4, v("multiplayer")), (5, considered.clone()), (6, unrealized)],
    };
    let b = PathSpec {
        sentence: "Halo is a multiplayer game for Xbox and PC .",
        logprobs: vec![(5, -1.5)],
        attention: vec![(1, v("Halo")), (4, v("multiplayer")), (5, considered), (7, v("Xbox")), (9, v("PC"))],
    };
    let paths = [build_path(&mut vocab, &a, -0.1, &quiet3), build_path(&mut vocab, &b, -0.1, &quiet3)];
    inputs.push(ToyInput::from_paths(text, &paths).unwrap());

    ToySpec {
        model: "toy-demo".into(),
        vocab: vocab.pieces,
        eos: EOS,
        num_layers: l,
        num_heads: 2,
        inputs,
        default: None,
    }
}

/// Two layers, two heads, eight pieces; every prefix gets a distinct
/// distribution so batched answers can be checked for order.
pub fn server_suite() -> ToySpec {
    let vocab: Vec<String> = ["<pad>", "</s>", "▁a", "▁b", "▁c", "▁d", "▁e", "."].map(String::from).to_vec();
    let text = "intent = inform | name = Portal";
    let mut steps = Vec::new();
    for i in 0..10u32 {
        let prefix: Vec<u32> = if i == 0 { vec![] } else { vec![2 + (i - 1) % 6; ((i - 1) / 6 + 1) as usize] };
        let favourite = 2 + i % 6;
        steps.push(slotguide::bridge::toy::ToyStep {
            prefix,
            next: vec![(favourite, -0.2 - 0.01 * i as f64), (EOS, -2.5)],
            attention: attention(2, 0, 0.5, &[(6, vec![0.1 + 0.03 * i as f64, 0.2])]),
        });
    }
    ToySpec {
        model: "toy-server".into(),
        vocab,
        eos: EOS,
        num_layers: 2,
        num_heads: 2,
        inputs: vec![ToyInput { text: text.into(), tokens: None, offsets: None, steps, default: None }],
        default: Some(slotguide::bridge::toy::ToyDefault {
            next: vec![(EOS, -0.1)],
            attention: ToyAttention::default(),
        }),
    }
}

// ---------------------------------------------------------------------------
// Random enumerable toys for checking beam search against brute force.

/// A fully scripted toy: every prefix of non-EOS tokens shorter than
/// `horizon` has a next-token distribution over the whole vocabulary.
pub fn random_spec(rng: &mut impl Rng) -> (ToySpec, usize) {
    let vocab_size = rng.gen_range(2..=4usize);
    let horizon = rng.gen_range(1..=5usize);
    let vocab: Vec<String> = (0..vocab_size).map(|i| if i == 0 { "</s>".into() } else { format!("▁w{i}") }).collect();
    let mut steps = Vec::new();
    let mut frontier: Vec<Vec<u32>> = vec![vec![]];
    for _ in 0..horizon {
        let mut next_frontier = Vec::new();
        for prefix in frontier {
            let logits: Vec<f64> = (0..vocab_size).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let norm = logits.iter().map(|x| x.exp()).sum::<f64>().ln();
            let next = logits.iter().enumerate().map(|(t, x)| (t as u32, x - norm)).collect();
            steps.push(ToyStep { prefix: prefix.clone(), next, attention: Default::default() });
            for t in 1..vocab_size as u32 {
                let mut p = prefix.clone();
                p.push(t);
                next_frontier.push(p);
            }
        }
        frontier = next_frontier;
    }
    // queried only for the attention of sequences cut off at the horizon
    let cutoff = ToyDefault { next: vec![(0, 0.0)], attention: Default::default() };
    let input = ToyInput { text: "a b".into(), tokens: None, offsets: None, steps, default: Some(cutoff) };
    let spec = ToySpec {
        model: "toy-oracle".into(),
        vocab,
        eos: 0,
        num_layers: 1,
        num_heads: 1,
        inputs: vec![input],
        default: None,
    };
    (spec, horizon)
}

/// Best complete sequence by summed log-probability: either ended by EOS
/// within the horizon, or cut off at the horizon.
pub fn enumerate_best(spec: &ToySpec, horizon: usize) -> (Vec<u32>, f64, usize) {
    let table: std::collections::HashMap<&[u32], &[(u32, f64)]> =
        spec.inputs[0].steps.iter().map(|s| (s.prefix.as_slice(), s.next.as_slice())).collect();
    let mut best: Option<(Vec<u32>, f64)> = None;
    let mut count = 0;
    let mut stack: Vec<(Vec<u32>, f64)> = vec![(vec![], 0.0)];
    let mut offer = |seq: Vec<u32>, score: f64| {
        if best.as_ref().is_none_or(|(_, b)| score > *b) {
            best = Some((seq, score));
        }
    };
    while let Some((prefix, score)) = stack.pop() {
        if prefix.len() == horizon {
            count += 1;
            offer(prefix, score);
            continue;
        }
        for &(t, lp) in table[prefix.as_slice()] {
            if t == spec.eos {
                count += 1;
                offer(prefix.clone(), score + lp);
            } else {
                let mut p = prefix.clone();
                p.push(t);
                stack.push((p, score + lp));
            }
        }
    }
    let (seq, score) = best.unwrap();
    (seq, score, count)
}
