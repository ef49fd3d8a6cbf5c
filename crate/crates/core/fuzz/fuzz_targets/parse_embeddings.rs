#![no_main]

use dialogue_curricula::embeddings::parse_embeddings;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = parse_embeddings(text) {
        assert!(table.dim() > 0 && !table.is_empty());
        for token in text.split_whitespace().take(8) {
            if let Some(v) = table.get(token) {
                assert_eq!(v.len(), table.dim());
            }
        }
    }
});
