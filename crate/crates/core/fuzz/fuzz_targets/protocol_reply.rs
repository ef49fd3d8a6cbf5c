#![no_main]

use dialogue_curricula::learner::Reply;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(reply) = Reply::parse(line) {
        let again = reply.to_line();
        assert!(!again.contains('\n'));
        assert_eq!(Reply::parse(&again).unwrap(), reply);
    }
});
