#![no_main]

use gpemu_cli::config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(pairs) = config::parse(text) {
        for (k, v) in pairs {
            assert!(!k.is_empty());
            assert_eq!(config::parse_override(&format!("{k}={v}")).unwrap(), (k, v));
        }
    }
});
