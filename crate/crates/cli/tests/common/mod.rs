#![allow(dead_code)]

use partpyr_core::descriptor::{ExtractionConfig, Extractor, Variant};
use partpyr_core::index_store::synth::{generate_synthetic, SynthDataset, SynthSpec};
use partpyr_core::index_store::{build_index, RetrievalIndex};

pub fn small_spec() -> SynthSpec {
    SynthSpec {
        n_categories: 3,
        models_per_category: 2,
        views_per_model: 2,
        queries_per_category: 1,
        ..SynthSpec::default()
    }
}

pub fn small_data() -> SynthDataset {
    generate_synthetic(&small_spec())
}

pub fn small_index(data: &SynthDataset) -> RetrievalIndex {
    let extractor = Extractor::new(ExtractionConfig::default()).unwrap();
    build_index(&data.views, &extractor, Variant::Full).unwrap()
}
