#![no_main]

use dialogue_curricula::attributes::{read_scores_csv, write_scores_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(scores) = read_scores_csv(data) {
        let mut buf = Vec::new();
        write_scores_csv(&scores, &mut buf).unwrap();
        assert_eq!(read_scores_csv(buf.as_slice()).unwrap(), scores);
    }
});
