#![no_main]

use libfuzzer_sys::fuzz_target;
use step_orch_core::sim::Scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(scenario) = Scenario::from_json(text) {
        // Validation must never panic, and a scenario must survive a
        // serialize/parse round trip.
        let _ = scenario.validate();
        let rewritten = serde_json::to_string(&scenario).expect("scenario serializes");
        let reparsed = Scenario::from_json(&rewritten).expect("serializer output parses");
        assert_eq!(reparsed, scenario);
    }
});
