#![no_main]

use libfuzzer_sys::fuzz_target;

use scalinglab::harness::{DatasetSpec, ExperimentConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = ExperimentConfig::from_json_str(text) {
        let _ = config.config_hash();
        // Resolving inline datasets exercises problem validation; the
        // generator path is left to the run itself (unbounded work).
        if let DatasetSpec::Inline(defs) = &config.dataset {
            if defs.len() <= 4 {
                let _ = config.dataset.resolve();
            }
        }
    }
});
