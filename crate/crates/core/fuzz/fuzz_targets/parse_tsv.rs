#![no_main]

use dialogue_curricula::corpus::{parse_tsv, Corpus, ProbabilitySource};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_tsv(text) {
        for r in &records {
            assert!(!r.query.contains('\t') && !r.response.contains('\t'));
        }
        if let Ok(corpus) = Corpus::from_records(records, ProbabilitySource::ResponsesOnly) {
            assert!(!corpus.is_empty());
        }
    }
});
