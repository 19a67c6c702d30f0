//! Generates the household corpus and prints the potential tables a few
//! observed relations would receive.

use sarp::corpus::{label_histogram, CorpusGeneratorSpec, PotentialTable};

fn show(name: &str, t: &PotentialTable) {
    println!(
        "{name:<28} 11={:.4} 00={:.4} 01={:.4} 10={:.4}",
        t.present_present, t.absent_absent, t.absent_present, t.present_absent
    );
}

fn main() -> anyhow::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/household_corpus.json");
    let spec: CorpusGeneratorSpec = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let corpus = spec.generate(11)?;
    println!("{} images", corpus.len());
    for (label, count) in label_histogram(&corpus) {
        println!("  {label:<10} {count}");
    }
    println!();
    for (s, p, o) in [
        ("banana", "on", "plate"),
        ("tv", "on", "shelf"),
        ("banana", "on", "shelf"),
        ("banana", "under", "plate"),
        ("remote", "on", "sofa"),
    ] {
        let c = corpus.phi_counts(s, p, o);
        println!(
            "{s} {p} {o}: either={} triplet={} both-without={} object-only={} subject-only={}",
            c.either, c.both_with_relation, c.both_without_relation, c.object_without_subject, c.subject_without_object
        );
        show("  raw", &PotentialTable::from_counts(&c));
        show("  smoothed", &corpus.potential_for(s, p, o));
    }
    Ok(())
}
