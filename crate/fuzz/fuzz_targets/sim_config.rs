#![no_main]
use libfuzzer_sys::fuzz_target;
use jinet::simgen::SimConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = SimConfig::from_kv_str(text) {
        assert_eq!(SimConfig::from_kv_str(&cfg.to_kv_string()).unwrap(), cfg);
    }
});
