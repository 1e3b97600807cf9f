use std::collections::BTreeSet;
use std::path::Path;

use drivelime::pipeline::{run_pipeline, run_stage, Context, InputSource, PipelineConfig, Stage};
use drivelime::synth::SynthSpec;
use drivelime::{Algorithm, Error};
use serde_json::Value;

fn repo_file(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn small() -> PipelineConfig {
    PipelineConfig {
        input: InputSource::Synth(SynthSpec {
            n_rows: 200,
            n_features: 6,
            informative: 2,
            ..SynthSpec::default()
        }),
        repeats: 3,
        models: vec![Algorithm::LR, Algorithm::GNB, Algorithm::DTC],
        explain_instances: 10,
        lime: drivelime::lime::LimeConfig {
            n_samples: 200,
            ..Default::default()
        },
        ..PipelineConfig::default()
    }
}

fn keys(v: &Value) -> BTreeSet<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

#[test]
fn schema_document_matches_config_fields() {
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(repo_file("docs/config.schema.json")).unwrap()).unwrap();
    let config = serde_json::to_value(PipelineConfig::default()).unwrap();
    assert_eq!(keys(&schema["properties"]), keys(&config));
    assert_eq!(keys(&schema["properties"]["lime"]["properties"]), keys(&config["lime"]));
    let synth = &schema["properties"]["input"]["oneOf"][1]["properties"]["synth"]["properties"];
    assert_eq!(keys(synth), keys(&config["input"]["synth"]));
}

#[test]
fn example_config_parses() {
    let text = std::fs::read_to_string(repo_file("configs/driving.json")).unwrap();
    let config = PipelineConfig::from_json(&text).unwrap();
    assert_eq!(config.seed, 42);
    assert!(matches!(config.input, InputSource::Csv { .. }));
}

#[test]
fn config_round_trips_and_rejects_unknown_fields() {
    let c = small();
    let back = PipelineConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(back, c);
    assert_eq!(PipelineConfig::from_json("{}").unwrap(), PipelineConfig::default());
    assert!(matches!(PipelineConfig::from_json(r#"{"sed": 1}"#), Err(Error::Config(_))));
}

#[test]
fn violations_are_reported_together() {
    let c = PipelineConfig {
        repeats: 0,
        k_features: 0,
        models: vec![Algorithm::LR, Algorithm::LR],
        ..PipelineConfig::default()
    };
    let Err(Error::Config(v)) = c.validate(None) else {
        panic!("expected a configuration error");
    };
    assert_eq!(v.len(), 3, "{v:?}");
}

#[test]
fn oversized_k_keeps_every_feature() {
    let config = PipelineConfig {
        k_features: 10,
        ..small()
    };
    let ctx = Context::<f64>::load(config).unwrap();
    let (_, report) = run_stage(&ctx, Stage::Compare).unwrap();
    let report = report.unwrap();
    assert_eq!(report.selected_features.len(), 6);
    for m in &report.models {
        assert_eq!(m.before.accuracy, m.after.accuracy, "{}", m.model);
        assert_eq!(m.before.mse, m.after.mse, "{}", m.model);
    }
}

#[test]
fn full_run_publishes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let report = run_pipeline::<f64>(small(), tmp.path()).unwrap();
    assert_eq!(report.models.len(), 3);
    let json: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["format_version"], 1);
    assert_eq!(json["best_model"], report.best_model.as_str());
    let md = std::fs::read_to_string(tmp.path().join("report.md")).unwrap();
    assert_eq!(md.matches("| Model Name |").count(), 2);
}
