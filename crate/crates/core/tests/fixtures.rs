use std::path::PathBuf;

use sotgen::stack::{deserialize_stack, serialize_stack, StackOfTasks};
use sotgen::{Error, Stack};

fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/stacks")
        .join(name);
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn precision_safety_stack_round_trips() {
    let s: Stack = deserialize_stack(&fixture("precision_safety.json")).unwrap();
    assert_eq!(s.order(), ["oa", "ik", "max_manip", "max_mjl"]);
    let oa = s.entry("oa").unwrap();
    assert_eq!((oa.params.r_rest, oa.params.gamma_cl, oa.params.t_traj), (Some(0.102), Some(1.726), Some(1.385)));
    let ik = s.entry("ik").unwrap();
    assert_eq!((ik.params.gamma_cl, ik.params.t_traj), (Some(1.255), Some(3.609)));
    assert_eq!(s.entry("max_manip").unwrap().params.gamma_ol, Some(35.307));
    let mjl = s.entry("max_mjl").unwrap();
    assert!(!mjl.active);
    assert_eq!(mjl.params.gamma_ol, Some(15.001));
    assert_eq!(deserialize_stack::<f64>(&serialize_stack(&s)).unwrap(), s);
}

#[test]
fn precision_time_stack_round_trips() {
    let s: Stack = deserialize_stack(&fixture("precision_time.json")).unwrap();
    let oa = s.entry("oa").unwrap();
    assert_eq!((oa.params.r_rest, oa.params.gamma_cl, oa.params.t_traj), (Some(0.477), Some(1.257), Some(1.03)));
    let ik = s.entry("ik").unwrap();
    assert_eq!((ik.params.gamma_cl, ik.params.t_traj), (Some(1.623), Some(2.641)));
    assert_eq!(s.entry("max_manip").unwrap().params.gamma_ol, Some(8.628));
    assert_eq!(s.entry("max_mjl").unwrap().params.gamma_ol, Some(51.074));
    assert!(!s.entry("max_mjl").unwrap().active);
    assert_eq!(deserialize_stack::<f64>(&serialize_stack(&s)).unwrap(), s);
}

#[test]
fn unset_cost_is_explicit_null() {
    let s: Stack = deserialize_stack(&fixture("precision_time.json")).unwrap();
    assert!(s.cost.is_none());
    assert!(serialize_stack(&s).contains("\"cost\": null"));
    let priced = s.with_cost(0.25);
    let text = serialize_stack(&priced);
    assert_eq!(deserialize_stack::<f64>(&text).unwrap().cost, Some(0.25));
}

#[test]
fn f32_stack_reads_the_same_document() {
    let s: StackOfTasks<f32> = deserialize_stack(&fixture("precision_safety.json")).unwrap();
    assert_eq!(s.entry("ik").unwrap().params.t_traj, Some(3.609f32));
}

#[test]
fn truncated_document_reports_position() {
    let text = fixture("precision_time.json");
    let cut = &text[..text.len() / 2];
    match deserialize_stack::<f64>(cut) {
        Err(Error::Parse { line, .. }) => assert!(line > 1),
        other => panic!("{other:?}"),
    }
}
