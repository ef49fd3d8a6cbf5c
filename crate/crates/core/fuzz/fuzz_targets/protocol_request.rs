#![no_main]

use dialogue_curricula::learner::Request;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(request) = Request::parse(line) {
        let again = request.to_line();
        assert!(!again.contains('\n'));
        assert_eq!(Request::parse(&again).unwrap(), request);
    }
});
