use pyo3::prelude::*;
use pyo3::types::PyDict;

const SCRIPT: &std::ffi::CStr = cr#"
import attn_transport as at

a = at.AttentionMatrix.canonical("uniform:4")
assert a.shape == (4, 4) and a.mask == "causal" and a.is_row_stochastic
m = a.normalize()
s = m.svd()
assert abs(s.singular_values[0] - 1.0) < 1e-12
assert 0.0 < m.asymmetry_g() < 0.7072

exact = at.exact_conductance(a)
assert abs(exact.phi - 13 / 47) < 1e-12
assert at.sweep_conductance(a).phi >= exact.phi - 1e-12
assert abs(at.temporal_sweep(a).phi_min - 13 / 37) < 1e-12
assert at.closed_form_landscape(100).phi_min >= 0.2

try:
    at.AttentionMatrix([[0.5, 0.5], [0.5, 0.5]], mask="causal")
    raise AssertionError("mask violation not raised")
except at.TransportError as e:
    assert "MaskViolation" in str(e)

scores = list(range(100))
labels = [int(i >= 50) for i in range(100)]
assert at.auroc(scores, labels) == 1.0
value, reported, bins, fallback = at.lc_auroc(scores, labels, [i + 1 for i in range(100)])
assert 0.45 <= value <= 0.55 and reported >= value

import json
report = json.loads(at.run_landscape(["uniform:50", "window:3:50"]))
assert report["summary"]["floor_fraction"] == 0.5
ok = True
"#;

#[test]
fn bindings_work_from_python() {
    use attn_transport::attn_transport;
    pyo3::append_to_inittab!(attn_transport);
    Python::initialize();
    Python::attach(|py| {
        let globals = PyDict::new(py);
        py.run(SCRIPT, Some(&globals), None).inspect_err(|e| e.print(py))?;
        let ok: bool = globals.get_item("ok")?.unwrap().extract()?;
        assert!(ok);
        PyResult::Ok(())
    })
    .unwrap();
}
