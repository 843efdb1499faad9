#![no_main]
use libfuzzer_sys::fuzz_target;

// Small value parsers used on the command line.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = text.parse::<jinet::Ranks>() {
        assert_eq!(r.to_string().parse::<jinet::Ranks>().unwrap(), r);
    }
    if let Ok(s) = text.parse::<jinet::simgen::Setting>() {
        assert_eq!(s.to_string().parse::<jinet::simgen::Setting>().unwrap(), s);
    }
    if let Ok(m) = text.parse::<jinet::io::SymmetrizeMode>() {
        assert_eq!(m.to_string().parse::<jinet::io::SymmetrizeMode>().unwrap(), m);
    }
});
