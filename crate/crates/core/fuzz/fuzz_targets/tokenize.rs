#![no_main]

use dialogue_curricula::corpus::tokenize;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for token in tokenize(text) {
        assert!(!token.is_empty());
        assert!(!token.chars().any(char::is_whitespace));
        assert!(token.chars().count() == 1 || !token.chars().any(|c| c.is_ascii_punctuation()));
    }
});
