//! Talks to the bundled bridge script in stub mode. Skipped when no
//! `python3` is on the path.

use std::collections::BTreeSet;
use std::process::Command;

use absa_core::backend::{AdaptationConfig, Encoder, ExternalEncoder};
use absa_core::corpus::TextCorpus;
use absa_core::Polarity;

fn bridge() -> Option<ExternalEncoder> {
    if Command::new("python3").arg("--version").output().is_err() {
        eprintln!("python3 not found, skipping");
        return None;
    }
    let script = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scripts/hf_bridge.py");
    Some(ExternalEncoder::spawn(&format!("python3 {script} --stub")).expect("stub bridge starts"))
}

#[test]
fn stub_bridge_serves_the_encoder_contract() {
    let Some(enc) = bridge() else { return };
    assert_eq!((enc.num_layers(), enc.num_heads(), enc.hidden_size()), (2, 2, 4));
    let text = "great battery life";
    let alignment = enc.tokenize_with_alignment(text).unwrap();
    assert_eq!(alignment.n_subtokens, 5);
    let view = enc.attention_maps(text, &[0, 1]).unwrap();
    view.check_row_stochastic().unwrap();
    assert_eq!(view.heads.len(), 2);
    let v = enc.embed_span(text, &BTreeSet::from([0])).unwrap();
    assert_eq!(v.dim(), 4);
    assert_ne!(
        enc.embed_label(Polarity::Positive).unwrap(),
        enc.embed_label(Polarity::Negative).unwrap()
    );
    assert!(enc.attention_maps(text, &[2]).is_err());
}

#[test]
fn stub_adaptation_opens_a_new_state() {
    let Some(enc) = bridge() else { return };
    let dir = tempfile::tempdir().unwrap();
    let corpus = TextCorpus {
        documents: vec!["the screen is bright".into(), "slow service".into()],
        provenance: vec![],
    };
    let config = AdaptationConfig {
        epochs: 2,
        ..Default::default()
    };
    let adapted = enc.domain_adapt(&corpus, &config, dir.path()).unwrap();
    assert_eq!(adapted.losses.len(), 3);
    assert_ne!(adapted.encoder.fingerprint(), enc.fingerprint());
    assert!(adapted.run_dir.starts_with(dir.path()));
}
