#![no_main]

use libfuzzer_sys::fuzz_target;
use mabc_relay::experiment::ExperimentSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(spec) = ExperimentSpec::from_json(s) {
            let text = serde_json::to_string(&spec).unwrap();
            let again = ExperimentSpec::from_json(&text).expect("serialized spec must parse");
            assert_eq!(spec, again);
        }
    }
});
