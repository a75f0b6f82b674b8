#![no_main]

use libfuzzer_sys::fuzz_target;
use mabc_relay::conic::ConicProblem;

fuzz_target!(|data: &str| {
    if let Ok(p) = ConicProblem::parse(data) {
        let text = p.dump();
        let again = ConicProblem::parse(&text).expect("dump output must parse");
        assert_eq!(p, again);
        assert_eq!(text, again.dump());
    }
});
