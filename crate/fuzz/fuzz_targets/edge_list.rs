#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    for directed in [false, true] {
        if let Ok(g) = jinet::io::read_edge_list(data, directed) {
            let n = g.node_ids.len();
            assert_eq!(g.weights.shape(), (n, n));
            assert!(g.weights.iter().all(|w| *w >= 0.0));
        }
    }
});
