#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = jinet::io::read_dense_matrix(data) {
        let back = jinet::io::read_dense_matrix(jinet::io::matrix_to_csv(&m).as_bytes()).unwrap();
        assert_eq!(back.shape(), m.shape());
        assert!(back.iter().zip(m.iter()).all(|(a, b)| a == b));
    }
    let _ = jinet::io::read_dense_network(data);
});
