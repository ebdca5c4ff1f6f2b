//! Every decoder rejects arbitrary corruption with an error, never a panic or
//! a silently different value.

use proptest::prelude::*;
use speakgen::corpus::{decode_corpus, encode_corpus, generate_synthetic_corpus, import_csv, SyntheticCorpusSpec};
use speakgen::gan::{ArchConfig, Checkpoint, TrainConfig, TrainState};
use speakgen::ganspace::{fit_generator_directions, DirectionBasis, DirectionRegistry};
use speakgen::ndmath::SeededRng;
use std::sync::OnceLock;

struct Blobs {
    corpus: Vec<u8>,
    checkpoint: Vec<u8>,
    basis: Vec<u8>,
}

fn blobs() -> &'static Blobs {
    static B: OnceLock<Blobs> = OnceLock::new();
    B.get_or_init(|| {
        let corpus = generate_synthetic_corpus(&SyntheticCorpusSpec {
            speakers: 3,
            utterances_per_speaker: 4,
            ..Default::default()
        })
        .unwrap();
        let cfg = TrainConfig {
            arch: ArchConfig {
                latent_dim: 4,
                hidden: 6,
                blocks: 1,
            },
            ..Default::default()
        };
        let state = TrainState::init(&cfg);
        let basis = fit_generator_directions(&state.generator, 50, 3, &mut SeededRng::new(0)).unwrap();
        let ck = state.into_checkpoint(cfg, corpus.content_hash());
        Blobs {
            corpus: encode_corpus(&corpus),
            checkpoint: ck.encode(),
            basis: basis.encode(),
        }
    })
}

fn all_reject(bytes: &[u8]) -> Result<(), TestCaseError> {
    prop_assert!(decode_corpus(bytes).is_err());
    prop_assert!(Checkpoint::decode(bytes).is_err());
    prop_assert!(DirectionBasis::decode(bytes).is_err());
    Ok(())
}

#[derive(Debug, Clone)]
enum Damage {
    Xor { at: usize, mask: u8 },
    Truncate(usize),
    Append(Vec<u8>),
}

fn apply(bytes: &[u8], d: &Damage) -> Vec<u8> {
    let mut b = bytes.to_vec();
    match d {
        Damage::Xor { at, mask } => {
            let i = at % b.len();
            b[i] ^= mask;
        }
        Damage::Truncate(at) => b.truncate(at % b.len()),
        Damage::Append(tail) => b.extend_from_slice(tail),
    }
    b
}

fn damage() -> impl Strategy<Value = Damage> {
    prop_oneof![
        (any::<usize>(), 1u8..=255).prop_map(|(at, mask)| Damage::Xor { at, mask }),
        any::<usize>().prop_map(Damage::Truncate),
        prop::collection::vec(any::<u8>(), 1..16).prop_map(Damage::Append),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn damaged_files_are_rejected(d in damage(), which in 0usize..3) {
        let b = blobs();
        let src = [&b.corpus, &b.checkpoint, &b.basis][which];
        all_reject(&apply(src, &d))?;
    }

    #[test]
    fn random_bytes_are_rejected(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        all_reject(&bytes)?;
    }

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
        let _ = import_csv(&text);
        let _ = DirectionRegistry::from_text(&text);
    }
}

#[test]
fn intact_files_round_trip() {
    let b = blobs();
    assert_eq!(encode_corpus(&decode_corpus(&b.corpus).unwrap()), b.corpus);
    assert_eq!(Checkpoint::decode(&b.checkpoint).unwrap().encode(), b.checkpoint);
    assert_eq!(DirectionBasis::decode(&b.basis).unwrap().encode(), b.basis);
}

#[test]
fn each_loader_rejects_the_other_formats() {
    let b = blobs();
    assert!(decode_corpus(&b.checkpoint).is_err());
    assert!(Checkpoint::decode(&b.basis).is_err());
    assert!(DirectionBasis::decode(&b.corpus).is_err());
}

#[test]
fn files_round_trip_through_disk() {
    use speakgen::corpus::{load_corpus, save_corpus};
    let b = blobs();
    let dir = tempfile::tempdir().unwrap();
    let corpus = decode_corpus(&b.corpus).unwrap();
    save_corpus(&corpus, dir.path().join("c.embc")).unwrap();
    assert_eq!(load_corpus(dir.path().join("c.embc")).unwrap(), corpus);

    let ck = Checkpoint::decode(&b.checkpoint).unwrap();
    ck.save(dir.path().join("m.egan")).unwrap();
    assert_eq!(Checkpoint::load(dir.path().join("m.egan")).unwrap().encode(), b.checkpoint);

    let basis = DirectionBasis::decode(&b.basis).unwrap();
    basis.save(dir.path().join("b.edir")).unwrap();
    assert_eq!(DirectionBasis::load(dir.path().join("b.edir")).unwrap(), basis);

    let mut reg = DirectionRegistry::new(basis.directions());
    reg.register_label(1, "planted binary", "flip sweep, 300 seeds", "positive offsets raise the score").unwrap();
    reg.save(dir.path().join("r.tsv")).unwrap();
    assert_eq!(DirectionRegistry::load(dir.path().join("r.tsv")).unwrap(), reg);

    assert!(matches!(load_corpus(dir.path().join("absent")), Err(speakgen::Error::Io(_))));
}
