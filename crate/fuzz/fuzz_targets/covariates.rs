#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let categorical = ["region".to_string()];
    if let Ok(t) = jinet::io::read_covariates(data, &categorical) {
        assert_eq!(t.values.nrows(), t.node_ids.len());
        assert_eq!(t.values.ncols(), t.column_names.len());
        let _ = jinet::io::prepare_covariates(t, &jinet::io::PipelineConfig::default());
    }
});
