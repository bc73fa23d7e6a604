use pyo3::prelude::*;
use pyo3::types::PyDict;

use privquad_py::privquad_module;

fn run(code: &str) -> PyResult<()> {
    pyo3::append_to_inittab!(privquad_module);
    Python::attach(|py| {
        let globals = PyDict::new(py);
        let src = std::ffi::CString::new(code).unwrap();
        py.run(&src, Some(&globals), None)
    })
}

#[test]
fn module_round_trip() {
    run(r#"
import math
import privquad

d = privquad.DyadicDensity([1.5, 0.5])
assert d.resolution == 1
assert abs(d.quad_functional() - 1.25) < 1e-12
c = d.coefficients(2)
assert abs(c[0] - 1.0) < 1e-12 and abs(c[1] - 0.5) < 1e-12

cfg = privquad.NiConfig(2.0, 2.0, 4, sigma="paper")
assert abs(cfg.sigma - (4 + math.pi ** 2 / 3)) < 1e-9
recs = cfg.sanitize(d.sample(10, 3), 5)
assert len(recs) == 10 and len(recs[0]) == 16

assert privquad.select_j_ni(4096, 1.0, 0.5, 2.0) >= 1
assert privquad.gof_threshold("ni", 4096, 1.0, 0.5, 2.0) > 0
assert privquad.audit_rr(1.0, 0.5, 21).passed

try:
    privquad.NiConfig(-1.0, 2.0, 4)
    raise AssertionError("negative alpha accepted")
except ValueError:
    pass
"#)
    .unwrap();
}
