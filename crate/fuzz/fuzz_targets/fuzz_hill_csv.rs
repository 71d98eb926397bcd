#![no_main]

use gpemu::simulators::{hill_inputs, read_hill_samples};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(samples) = read_hill_samples(data, "fuzz") {
        if !samples.is_empty() {
            let _ = hill_inputs(&samples, 1.0, 2, 0, 1.0);
        }
    }
});
