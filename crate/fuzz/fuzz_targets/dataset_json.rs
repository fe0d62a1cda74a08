#![no_main]

use libfuzzer_sys::fuzz_target;

use scalinglab::analysis::mv_limit;
use scalinglab::toyworld::Dataset;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(dataset) = Dataset::from_json_str(text) {
        // A small enumeration cap keeps adversarial inputs bounded.
        let _ = mv_limit(&dataset, 4096);
    }
});
