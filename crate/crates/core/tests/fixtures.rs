//! Keeps the checked-in fixture files in sync with their builders.
//! Run with `UPDATE_FIXTURES=1` to rewrite them.

mod common;

use common::*;
use slotguide::bridge::{ToySpec, ToyStepper};
use slotguide::decoder::DecodeConfig;
use slotguide::lexicon::Lexicon;
use slotguide::mr::{parse_mr, DatasetFormat};
use slotguide::pipeline::{record_trace, DecodeSettings, Strategy};

fn check(name: &str, body: &str) {
    let path = fixture(name);
    if std::env::var_os("UPDATE_FIXTURES").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, body).unwrap();
        return;
    }
    let on_disk = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{name}: {e}; run with UPDATE_FIXTURES=1"));
    assert!(on_disk == body, "{name} is stale; run with UPDATE_FIXTURES=1");
}

fn spec_json(spec: &ToySpec) -> String {
    serde_json::to_string(spec).unwrap() + "\n"
}

fn lines(items: &[String]) -> String {
    items.iter().map(|s| format!("{s}\n")).collect()
}

#[test]
fn grid_suite_is_current() {
    let (spec, mrs) = grid_suite();
    ToyStepper::new(spec.clone()).unwrap();
    check("grid_suite.json", &spec_json(&spec));
    check("grid_suite.txt", &lines(&mrs));
}

#[test]
fn sweep_suite_is_current() {
    let (spec, mrs) = sweep_suite();
    ToyStepper::new(spec.clone()).unwrap();
    check("sweep_suite.json", &spec_json(&spec));
    check("sweep_suite.txt", &lines(&mrs));
}

#[test]
fn server_suite_is_current() {
    let spec = server_suite();
    ToyStepper::new(spec.clone()).unwrap();
    check("toy_server.json", &spec_json(&spec));
}

#[test]
fn demo_suite_is_current() {
    let spec = demo_suite();
    let toy = ToyStepper::new(spec.clone()).unwrap();
    check("demo_toy.json", &spec_json(&spec));

    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["mr", "ref"]).unwrap();
    for (mr, r) in DEMO_MRS.iter().zip(DEMO_REFS) {
        csv.write_record([*mr, r]).unwrap();
    }
    check("demo.csv", &String::from_utf8(csv.into_inner().unwrap()).unwrap());

    let lex = Lexicon::builtin(DatasetFormat::Viggo);
    let mut mrs: Vec<_> = DEMO_MRS.iter().map(|m| parse_mr(m, DatasetFormat::Viggo).unwrap()).collect();
    for mr in &mut mrs {
        mr.apply_lexicon(&lex);
    }
    let settings = DecodeSettings {
        strategy: Strategy::Greedy,
        decode: DecodeConfig::default(),
        lexicon: &lex,
        align: Default::default(),
    };
    let trace = record_trace(&toy, &mrs, &settings, &Strategy::ALL).unwrap();
    check("demo_trace.ndjson", &trace.to_string().unwrap());
}
