#![no_main]
use libfuzzer_sys::fuzz_target;
use jinet::io::Manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = Manifest::from_kv_str(text) {
        assert_eq!(Manifest::from_kv_str(&m.to_kv_string()).unwrap(), m);
    }
});
