mod common;

use common::{compare_traces, fixture, render_hand_trace, run_hand_trace};

#[test]
fn greedy_toy_run_matches_hand_computed_trace() {
    let actual = render_hand_trace(&run_hand_trace());
    if std::env::var_os("PRINT_TRACE").is_some() {
        print!("{actual}");
    }
    let expected = std::fs::read_to_string(fixture("hand_trace.golden")).unwrap();
    compare_traces(&actual, &expected, 1e-9).unwrap();
}
