use proptest::prelude::*;
use serde_json::Value;
use vmono_cli::output::write_json;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1024))]

    #[test]
    fn finite_floats_round_trip_exactly(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let text = write_json(&x).unwrap();
        let back: f64 = text.trim().parse().unwrap();
        prop_assert_eq!(back, x);
        prop_assert_eq!(serde_json::from_str::<f64>(&text).unwrap(), x);
    }

    #[test]
    fn nested_values_parse_back(xs in prop::collection::vec(-1e300..1e300f64, 0..12)) {
        let text = write_json(&serde_json::json!({ "xs": xs, "n": xs.len() })).unwrap();
        let doc: Value = serde_json::from_str(&text).unwrap();
        let back: Vec<f64> = doc["xs"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        prop_assert_eq!(back, xs);
    }
}

#[test]
fn non_finite_floats_become_null() {
    for x in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
        assert_eq!(write_json(&x).unwrap(), "null\n");
    }
    let text = write_json(&vec![1.0, f64::NAN]).unwrap();
    let doc: Value = serde_json::from_str(&text).unwrap();
    assert!(doc[1].is_null());
    assert_eq!(doc[0], 1.0);
}

#[test]
fn floats_have_fixed_width() {
    assert_eq!(write_json(&1.0f64).unwrap(), "1.0000000000000000e0\n");
    assert_eq!(write_json(&-0.1f64).unwrap(), "-1.0000000000000001e-1\n");
}
