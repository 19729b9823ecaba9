#![no_main]

use libfuzzer_sys::fuzz_target;
use minimax_cli::ModelSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(spec) = ModelSpec::parse(text, "fuzz") else {
        return;
    };
    assert_eq!(spec.offset.len(), spec.moment_dim());
    if spec.moment_dim() * spec.param_dim() <= 64 {
        let _ = spec.model();
        let _ = spec.family(&["y".into(), "z".into()], 8);
        let _ = spec.space();
    }
});
