//! Learns per-bit weights on a synthetic domain-shift corpus and compares
//! nearest-neighbour accuracy against the unweighted distance.

use drapekit::metric::{learn_weights, nn_accuracy, DomainShiftCorpus, DomainShiftSpec, LearnSettings, WeightVector};

fn main() -> drapekit::Result<()> {
    let spec = DomainShiftSpec::default();
    let corpus = DomainShiftCorpus::generate(&spec, 7)?;
    let out = learn_weights(&corpus.db, &corpus.calib, &LearnSettings::default())?;
    for (i, it) in out.log.iter().enumerate() {
        println!("iteration {i:>2}: objective {:.4}", it.objective);
    }
    let plain = nn_accuracy(&corpus.test, &corpus.db, &WeightVector::ones(spec.params))?;
    let learned = nn_accuracy(&corpus.test, &corpus.db, &out.weights)?;
    println!("accuracy: unit weights {:.1}%, learned {:.1}%", 100.0 * plain, 100.0 * learned);
    Ok(())
}
