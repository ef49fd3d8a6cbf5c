#![no_main]

use dialogue_curricula::attributes::Attribute;
use dialogue_curricula::scheduler::Mode;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mode) = text.parse::<Mode>() {
        assert_eq!(mode.label().parse::<Mode>().unwrap(), mode);
    }
    if let Ok(a) = text.parse::<Attribute>() {
        assert_eq!(a.to_string().parse::<Attribute>().unwrap(), a);
    }
});
