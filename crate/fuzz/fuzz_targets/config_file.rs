#![no_main]

use libfuzzer_sys::fuzz_target;
use minimax_cli::CliConfig;
use minimax_infer::tuning::validate_tuning;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = CliConfig::parse(text, "fuzz") {
        assert!(validate_tuning(&cfg.tuning).is_empty());
        assert!(cfg.tuning.draws >= 1);
    }
});
