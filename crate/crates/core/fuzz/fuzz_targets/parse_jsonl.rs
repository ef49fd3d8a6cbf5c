#![no_main]

use dialogue_curricula::corpus::{parse_jsonl, Corpus, ProbabilitySource};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_jsonl(text) {
        let _ = Corpus::from_records(records, ProbabilitySource::QueriesAndResponses);
    }
});
