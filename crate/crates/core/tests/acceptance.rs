//! Acceptance suite. Every criterion prints one `PASS` or `FAIL` line with
//! its runtime; run with `--nocapture` to see them.

#![allow(clippy::single_range_in_vec_init)]

mod common;

use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slotguide::aligner::{evaluate_utterance, AlignOptions, Utterance};
use slotguide::attention::AttentionStack;
use slotguide::bridge::toy::basic_tokenize;
use slotguide::bridge::{ToySpec, ToyStepper, TraceFile, TraceStepper};
use slotguide::data::{annotate, read_dataset};
use slotguide::decoder::{
    beam_decode, length_weighted_score, rerank_semantic, BeamHypothesis, DecodeConfig, ModelStepper,
};
use slotguide::lexicon::Lexicon;
use slotguide::mr::{
    compute_slot_spans, linearize_mr, parse_mr, DatasetFormat, MeaningRepresentation, SlotId, SlotSpanIndex,
    TokenizedInput,
};
use slotguide::pipeline::{decode_corpus, prepare, record_trace, DecodeSettings, Strategy};
use slotguide::ser::evaluate_corpus;
use slotguide::tracking::{count_errors, finalize_at_eos, track_step, Confidence, MentionLedger, TrackerConfig};
use slotguide::tuner::{grid_search, GridSpec};

/// Criteria that cannot be met as stated. They still run and print FAIL,
/// but do not fail the build.
const EXPECTED_FAILURES: &[&str] = &["aligner_golden_positions"];

fn criterion(name: &str, budget: Duration, check: impl FnOnce() -> Result<(), String>) {
    let start = Instant::now();
    let mut outcome = check();
    let elapsed = start.elapsed();
    if outcome.is_ok() && elapsed > budget {
        outcome = Err(format!("took {elapsed:?}, budget {budget:?}"));
    }
    match outcome {
        Ok(()) => println!("PASS {name} ({elapsed:.2?})"),
        Err(why) => {
            println!("FAIL {name} ({elapsed:.2?}): {why}");
            if !EXPECTED_FAILURES.contains(&name) {
                panic!("{name}: {why}");
            }
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn viggo(raw: &str) -> (MeaningRepresentation, Lexicon) {
    let lex = Lexicon::builtin(DatasetFormat::Viggo);
    let mut mr = parse_mr(raw, DatasetFormat::Viggo).unwrap();
    mr.apply_lexicon(&lex);
    (mr, lex)
}

const SECOND: Duration = Duration::from_secs(1);

#[test]
fn linearization_exact() {
    criterion("linearization_exact", SECOND, || {
        let mr = parse_mr(DEMO_MRS[0], DatasetFormat::Viggo).map_err(|e| e.to_string())?;
        let got = linearize_mr(&mr);
        let want = "intent = request explanation | rating = poor | genres = vehicular combat | player perspective = third person";
        ensure(got == want, || format!("got `{got}`"))
    });
}

const TABLE9_MR: &str = "inform(name[BioShock], developer[2K Boston], genres[action-adventure, role-playing, shooter], has_multiplayer[no], platforms[PlayStation, Xbox, PC], has_linux_release[no], has_mac_release[yes])";
const TABLE9_REF: &str = "Developed by 2K Boston, BioShock is a single-player shooter game that will have you role-playing through a well constructed action-adventure narrative. It is available for PlayStation, Xbox, Mac and PC, but is not available for Linux.";

fn table9_alignments() -> Result<(Vec<(usize, String)>, usize), String> {
    let (mr, lex) = viggo(TABLE9_MR);
    let r = evaluate_utterance(TABLE9_REF, &mr, &lex, &AlignOptions::default()).map_err(|e| e.to_string())?;
    let got = r.alignments.iter().map(|a| (a.position, a.slot_name.clone())).collect();
    Ok((got, r.breakdown.errors()))
}

fn expect_alignments(want: &[(usize, &str)]) -> Result<(), String> {
    let (got, errors) = table9_alignments()?;
    let want: Vec<(usize, String)> = want.iter().map(|(p, s)| (*p, s.to_string())).collect();
    ensure(errors == 0, || format!("{errors} errors"))?;
    ensure(got == want, || format!("got {got:?}"))
}

#[test]
fn aligner_golden_positions() {
    criterion("aligner_golden_positions", SECOND, || {
        expect_alignments(&[
            (13, "developer"),
            (25, "name"),
            (39, "has_multiplayer"),
            (53, "genres"),
            (174, "platforms"),
            (191, "has_mac_release"),
            (228, "has_linux_release"),
        ])
    });
}

/// The same golden example at the character offsets the reference string
/// actually has: the mentions start at 13, 24, 38, 52, 172, 191 and 228.
#[test]
fn aligner_golden_offsets() {
    let at = |needle: &str| TABLE9_REF.find(needle).unwrap();
    assert_eq!(
        [
            at("2K Boston"),
            at("BioShock"),
            at("single-player"),
            at("shooter"),
            at("PlayStation"),
            at("Mac"),
            at("Linux")
        ],
        [13, 24, 38, 52, 172, 191, 228]
    );
    expect_alignments(&[
        (13, "developer"),
        (24, "name"),
        (38, "has_multiplayer"),
        (52, "genres"),
        (172, "platforms"),
        (191, "has_mac_release"),
        (228, "has_linux_release"),
    ])
    .unwrap();
}

#[test]
fn boolean_polarity_suite() {
    criterion("boolean_polarity_suite", SECOND, || {
        let cases = [
            ("There's no Linux release or multiplayer, but there is Mac support.", "inform(has_mac_release[yes])"),
            ("Though it's not available on Linux, it does have a Mac release as well.", "inform(has_mac_release[yes])"),
            (
                "It is available on PC and Mac but not Linux, and it can be found on Steam.",
                "inform(available_on_steam[yes])",
            ),
        ];
        for (utt, raw) in cases {
            let (mr, lex) = viggo(raw);
            let r = evaluate_utterance(utt, &mr, &lex, &AlignOptions::default()).map_err(|e| e.to_string())?;
            let boolean = &mr.slots[0].name;
            ensure(r.alignments.iter().any(|a| &a.slot_name == boolean), || format!("`{utt}`: {boolean} not aligned"))?;
            ensure(r.breakdown.errors() == 0, || format!("`{utt}`: {:?}", r.errors))?;
        }
        Ok(())
    });
}

#[test]
fn scalar_synonym_suite() {
    criterion("scalar_synonym_suite", SECOND, || {
        for (value, words) in
            [("excellent", &["amazing", "fantastic", "great"][..]), ("poor", &["bad", "negative"][..])]
        {
            let (mr, lex) = viggo(&format!("inform(rating[{value}])"));
            for w in words {
                let utt = format!("It is a {w} game.");
                let r = evaluate_utterance(&utt, &mr, &lex, &AlignOptions::default()).map_err(|e| e.to_string())?;
                ensure(r.breakdown.errors() == 0 && r.alignments.len() == 1, || {
                    format!("rating={value} against `{utt}`: {:?}", r.errors)
                })?;
            }
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// Tracker components on hand-authored attention.

const T_LAYERS: usize = 6;
const T_HEADS: usize = 8;

struct TrackerRig {
    spans: SlotSpanIndex,
    source_len: usize,
    sink: usize,
    spare: usize,
    developer_token: usize,
    cfg: TrackerConfig,
}

impl TrackerRig {
    fn new() -> Self {
        let (mr, _) = viggo("inform(name[Portal], developer[Valve])");
        let text = linearize_mr(&mr);
        let (tokens, offsets) = basic_tokenize(&text);
        let source_len = tokens.len();
        let sink = tokens.iter().position(|t| t == "|").unwrap();
        let developer_token = tokens.iter().position(|t| t == "Valve").unwrap();
        let spans = compute_slot_spans(&mr, &text, &TokenizedInput::new(tokens, offsets).unwrap()).unwrap();
        TrackerRig { spans, source_len, sink, spare: 0, developer_token, cfg: TrackerConfig::default() }
    }

    /// Head 0 of each listed layer puts `w` on the developer value and the
    /// rest on the sink. Other heads split evenly between the sink and the
    /// intent token, so neither outweighs a real peak.
    fn stack(&self, layers: &[usize], w: f64) -> AttentionStack {
        let mut data = Vec::new();
        for l in 0..T_LAYERS {
            for h in 0..T_HEADS {
                let mut row = vec![0.0; self.source_len];
                if h == 0 {
                    let peak = if layers.contains(&l) { w } else { 0.0 };
                    row[self.developer_token] = peak;
                    row[self.sink] = 1.0 - peak;
                } else {
                    row[self.sink] = 0.5;
                    row[self.spare] = 0.5;
                }
                data.extend(row);
            }
        }
        AttentionStack::new(T_LAYERS, T_HEADS, self.source_len, data).unwrap()
    }

    fn step(&self, ledger: &MentionLedger, stack: &AttentionStack) -> MentionLedger {
        track_step(ledger, stack, &self.spans, &self.cfg).unwrap()
    }

    fn eos(&self, ledger: &MentionLedger, stack: &AttentionStack) -> MentionLedger {
        finalize_at_eos(ledger, stack, &self.spans, &self.cfg).unwrap()
    }
}

const DEVELOPER: SlotId = SlotId(1);

fn confidence(ledger: &MentionLedger) -> Option<Confidence> {
    ledger.get(DEVELOPER).map(|r| r.confidence)
}

#[test]
fn tracker_components() {
    criterion("tracker_components", Duration::from_secs(5), || {
        let rig = TrackerRig::new();
        let empty = MentionLedger::new();
        let bottom = [0, 1, 2];

        let got = confidence(&rig.step(&empty, &rig.stack(&[0], 0.91)));
        ensure(got == Some(Confidence::High), || format!("verbatim 0.91 gave {got:?}"))?;
        let got = confidence(&rig.step(&empty, &rig.stack(&[0], 0.89)));
        ensure(got.is_none(), || format!("verbatim 0.89 gave {got:?}"))?;

        let low = rig.step(&empty, &rig.stack(&bottom, 0.45));
        ensure(confidence(&low) == Some(Confidence::Low), || format!("paraphrased 0.45 gave {:?}", confidence(&low)))?;
        let got = confidence(&rig.step(&empty, &rig.stack(&bottom, 0.35)));
        ensure(got.is_none(), || format!("paraphrased 0.35 gave {got:?}"))?;

        let eos_hit = rig.stack(&[0, 1, 2, 3, 4, 5], 0.15);
        let erased = rig.eos(&low, &eos_hit);
        ensure(confidence(&erased).is_none(), || "EOS hit kept a low record".into())?;
        ensure(erased.erased().contains(&DEVELOPER), || "erasure not remembered".into())?;
        let high = rig.step(&empty, &rig.stack(&[0], 0.91));
        let kept = rig.eos(&high, &eos_hit);
        ensure(confidence(&kept) == Some(Confidence::High), || "EOS hit erased a high record".into())?;
        let quiet = rig.eos(&low, &rig.stack(&[], 0.0));
        ensure(confidence(&quiet) == Some(Confidence::Low), || "EOS without a hit erased a record".into())
    });
}

// ---------------------------------------------------------------------------
// Beam search against exhaustive enumeration.

#[test]
fn beam_oracle_equivalence() {
    criterion("beam_oracle_equivalence", Duration::from_secs(30), || {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut mismatches = Vec::new();
        for case in 0..100 {
            let (spec, horizon) = random_spec(&mut rng);
            let (want, want_score, sequences) = enumerate_best(&spec, horizon);
            let vocab_size = spec.vocab.len();
            let toy = ToyStepper::new(spec).map_err(|e| e.to_string())?;
            let enc = toy.tokenize("a b").map_err(|e| e.to_string())?;
            let spans = SlotSpanIndex { spans: vec![], source_len: enc.ids.len() };
            let cfg = DecodeConfig {
                beam_size: sequences,
                early_stopping: false,
                max_len: horizon,
                length_alpha: 0.0,
                top_k: Some(sequences.max(vocab_size)),
                tracker: TrackerConfig::default(),
            };
            let pool = beam_decode(&toy, &enc.ids, &spans, &cfg).map_err(|e| format!("case {case}: {e}"))?;
            let top = &pool[0];
            if top.tokens != want || (top.logprob_sum - want_score).abs() > 1e-9 {
                mismatches.push(format!(
                    "case {case}: beam {:?} ({}) vs oracle {want:?} ({want_score})",
                    top.tokens, top.logprob_sum
                ));
            }
        }
        ensure(mismatches.is_empty(), || format!("{} mismatches: {}", mismatches.len(), mismatches.join("; ")))
    });
}

// ---------------------------------------------------------------------------
// Reranking contract.

/// A ledger tracking exactly `slots`, built by one verbatim spike per slot.
fn ledger_tracking(slots: &[usize], n: usize, spans: &SlotSpanIndex, cfg: &TrackerConfig) -> MentionLedger {
    let mut ledger = MentionLedger::new();
    for &s in slots {
        let mut row = vec![0.0; n + 1];
        row[s] = 0.95;
        row[n] = 0.05;
        let stack = AttentionStack::new(1, 1, n + 1, row).unwrap();
        ledger = track_step(&ledger, &stack, spans, cfg).unwrap();
    }
    ledger
}

#[test]
fn reranking_contract() {
    criterion("reranking_contract", Duration::from_secs(10), || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xbea);
        let cfg = TrackerConfig::default();
        let names = ["name", "developer", "release_year", "esrb", "rating"];
        let mut violations = Vec::new();
        for case in 0..200 {
            let n = rng.gen_range(1..=names.len());
            let raw = format!(
                "inform({})",
                names[..n].iter().enumerate().map(|(i, s)| format!("{s}[v{i}]")).collect::<Vec<_>>().join(", ")
            );
            let (mr, _) = viggo(&raw);
            // one source token per slot value, then a sink
            let spans = SlotSpanIndex {
                spans: (0..n)
                    .map(|i| slotguide::mr::SlotSpan {
                        slot: SlotId(i),
                        name_span: 0..0,
                        value_spans: vec![i..i + 1],
                        is_boolean: false,
                    })
                    .collect(),
                source_len: n + 1,
            };
            let alpha = [0.0, 0.6, 1.0][rng.gen_range(0..3)];
            let size = rng.gen_range(1..=8);
            let mut pool = Vec::new();
            let mut tracked_counts = Vec::new();
            for _ in 0..size {
                let tracked: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.6)).collect();
                let len = rng.gen_range(1..=4);
                // a coarse grid of log-probabilities so that score ties occur
                let logprob_sum = -(rng.gen_range(1..=6) as f64) * len as f64 / 2.0;
                tracked_counts.push(tracked.len());
                pool.push(BeamHypothesis {
                    tokens: vec![2; len],
                    logprob_sum,
                    ledger: ledger_tracking(&tracked, n, &spans, &cfg),
                    finish_reason: None,
                });
            }
            let chosen = rerank_semantic(&pool, &mr, alpha).map_err(|e| e.to_string())?;
            let errors: Vec<usize> = tracked_counts.iter().map(|t| n - t).collect();
            for (h, &e) in pool.iter().zip(&errors) {
                if count_errors(&h.ledger, &mr) != e {
                    violations.push(format!("case {case}: ledger does not track what was planted"));
                }
            }
            let min = *errors.iter().min().unwrap();
            let score = |i: usize| length_weighted_score(&pool[i], alpha);
            let best_score = (0..size).filter(|&i| errors[i] == min).map(score).fold(f64::NEG_INFINITY, f64::max);
            let first = (0..size).find(|&i| errors[i] == min && score(i) == best_score).unwrap();
            if chosen != first {
                violations.push(format!("case {case}: chose {chosen}, expected {first} (errors {errors:?})"));
            }
        }
        ensure(violations.is_empty(), || format!("{} violations: {}", violations.len(), violations.join("; ")))
    });
}

// ---------------------------------------------------------------------------
// Record and replay.

#[test]
fn record_replay_determinism() {
    criterion("record_replay_determinism", Duration::from_secs(10), || {
        let toy = ToyStepper::new(demo_suite()).map_err(|e| e.to_string())?;
        let lex = Lexicon::builtin(DatasetFormat::Viggo);
        let mut mrs: Vec<_> = DEMO_MRS.iter().map(|m| parse_mr(m, DatasetFormat::Viggo).unwrap()).collect();
        for mr in &mut mrs {
            mr.apply_lexicon(&lex);
        }
        let base = DecodeSettings {
            strategy: Strategy::Greedy,
            decode: DecodeConfig::default(),
            lexicon: &lex,
            align: AlignOptions::default(),
        };
        let trace = record_trace(&toy, &mrs, &base, &Strategy::ALL).map_err(|e| e.to_string())?;
        // through the file format, not just in memory
        let text = trace.to_string().map_err(|e| e.to_string())?;
        let replay = TraceStepper::new(TraceFile::read_from(text.as_bytes()).map_err(|e| e.to_string())?);
        for strategy in Strategy::ALL {
            let s = DecodeSettings { strategy, ..base.clone() };
            let live = decode_corpus(&toy, &mrs, &s).map_err(|e| e.to_string())?;
            let again = decode_corpus(&replay, &mrs, &s).map_err(|e| format!("{strategy}: {e}"))?;
            let as_json = |o: &dyn erased::Json| o.json();
            ensure(as_json(&live) == as_json(&again), || format!("{strategy}: outcomes differ"))?;
            let report = |outs: &[slotguide::pipeline::DecodeOutcome]| {
                let pairs: Vec<_> = mrs.iter().cloned().zip(outs.iter().map(|o| o.utterance.clone())).collect();
                evaluate_corpus(&pairs, &lex, &AlignOptions::default()).unwrap()
            };
            ensure(as_json(&report(&live)) == as_json(&report(&again)), || format!("{strategy}: reports differ"))?;
        }
        Ok(())
    });
}

mod erased {
    /// Byte-level comparison through serde, which also covers float bits.
    pub trait Json {
        fn json(&self) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn json(&self) -> String {
            serde_json::to_string(self).unwrap()
        }
    }
}

// ---------------------------------------------------------------------------

#[test]
fn grid_search_recovery() {
    criterion("grid_search_recovery", Duration::from_secs(60), || {
        let spec = ToySpec::from_json(&read_fixture("grid_suite.json")).map_err(|e| e.to_string())?;
        let toy = ToyStepper::new(spec).map_err(|e| e.to_string())?;
        let lex = Lexicon::builtin(DatasetFormat::Viggo);
        let prepared = read_fixture("grid_suite.txt")
            .lines()
            .map(|l| {
                let (mr, _) = viggo(l);
                prepare(&toy, &mr)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let grid = GridSpec::thresholds(&[0.5, 0.9, 1.0], &[0.3, 0.4, 0.5], &[0.05, 0.1, 0.2]);
        let report = grid_search(&toy, &prepared, &lex, &AlignOptions::default(), &DecodeConfig::default(), &grid)
            .map_err(|e| e.to_string())?;
        let best = report.best();
        let p = best.point;
        ensure((p.verbatim, p.paraphrased, p.unrealized) == (0.9, 0.4, 0.1), || format!("best is {}", p.label()))?;
        ensure(report.rows[1].ser > best.ser, || "the best SER is not unique".into())
    });
}

#[test]
fn ser_arithmetic() {
    criterion("ser_arithmetic", SECOND, || {
        let lex = Lexicon::builtin(DatasetFormat::Viggo);
        let mut records =
            read_dataset(fixture("viggo_planted.csv"), DatasetFormat::Viggo).map_err(|e| e.to_string())?;
        annotate(&mut records, &lex);
        let pairs: Vec<_> = records.into_iter().map(|r| (r.mr, r.reference.unwrap())).collect();
        let report = evaluate_corpus(&pairs, &lex, &AlignOptions::default()).map_err(|e| e.to_string())?;
        ensure(report.totals.total_slots == 100 && report.totals.errors() == 3, || format!("{:?}", report.totals))?;
        ensure(format!("{:.2}", report.ser) == "3.00", || format!("SER {}", report.ser))
    });
}

/// Keeps the expected-failure list honest: the aligner itself is exercised
/// by `aligner_golden_offsets`, so only the stated positions may differ.
#[test]
fn expected_failures_are_position_only() {
    let (got, errors) = table9_alignments().unwrap();
    assert_eq!(errors, 0);
    let slots: Vec<&str> = got.iter().map(|(_, s)| s.as_str()).collect();
    assert_eq!(
        slots,
        ["developer", "name", "has_multiplayer", "genres", "platforms", "has_mac_release", "has_linux_release"]
    );
    // a sanity check that Utterance agrees with the char offsets used above
    assert_eq!(Utterance::new(TABLE9_REF).chars.len(), TABLE9_REF.chars().count());
}
