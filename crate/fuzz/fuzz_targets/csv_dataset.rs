#![no_main]

use libfuzzer_sys::fuzz_target;
use minimax_infer::data::Dataset;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(parsed) = Dataset::from_csv_str(text) else {
        return;
    };
    let again = Dataset::from_csv_str(&parsed.to_csv_string()).expect("round trip");
    assert_eq!(parsed, again);
});
