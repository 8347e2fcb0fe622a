use pyo3::prelude::*;
use pyo3::types::PyDict;

fn run(code: &str) {
    Python::attach(|py| {
        let module = pyo3::wrap_pymodule!(vocabsize::vocabsize)(py);
        let globals = PyDict::new(py);
        globals.set_item("vocabsize", module).unwrap();
        let code = std::ffi::CString::new(code).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn formulas_cross_the_boundary() {
    run(r#"
assert vocabsize.attention_index(6, 6, 6, 6) == 1.0
assert vocabsize.attention_index(0, 0, 0, 0) is None
assert vocabsize.logits_to_words(-2.0, slope=1.0, midpoint=-2.0) == 70000
theta, se = vocabsize.estimate_ability([])
assert abs(theta) < 1e-9 and abs(se - 3.0) < 1e-3
"#);
}

#[test]
fn session_round_trip() {
    run(r#"
bank = vocabsize.ItemBank.demo()
s = vocabsize.Session(bank, seed=11)
while s.state != "awaiting_demographics":
    item = s.next_item()
    assert "pseudoword" != item.get("stage")
    s.answer(item["item_id"], 0 if item["stage"] == "definition" else "know")
try:
    s.answer("x", "know")
    raise AssertionError("answer accepted after the last item")
except ValueError:
    pass
r = s.finalize()
assert r["demographics"] is None and r["trusted"] is False
assert s.result() == r
"#);
}

#[test]
fn bad_inputs_raise_value_error() {
    run(r#"
for call in (
    lambda: vocabsize.estimate_ability([], prior_sd=0.0),
    lambda: vocabsize.Session(vocabsize.ItemBank.demo(), total_items=31),
    lambda: vocabsize.ItemBank.from_json("{"),
    lambda: vocabsize.clean([{"session_id": 1}]),
):
    try:
        call()
        raise AssertionError("no error")
    except ValueError:
        pass
"#);
}
