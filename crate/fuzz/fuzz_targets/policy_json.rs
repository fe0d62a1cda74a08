#![no_main]

use libfuzzer_sys::fuzz_target;

use scalinglab::rng::SimRng;
use scalinglab::toyworld::{enumerate_paths, greedy_solution, sample_solution, PolicySpec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(policy) = PolicySpec::from_json_str(text) {
        // Anything that validates must be safe to run on.
        let _ = greedy_solution(&policy);
        let _ = sample_solution(&policy, &mut SimRng::new(0));
        let _ = enumerate_paths(&policy, 4096);
    }
});
