#![no_main]

use dialogue_curricula::attributes::parse_confidence;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(losses) = parse_confidence(text) {
        assert!(losses.values().all(|l| l.is_finite()));
    }
});
