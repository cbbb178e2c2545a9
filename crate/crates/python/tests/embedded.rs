use pyo3::prelude::*;

use lqswitch_py::lqswitch_py;

#[test]
fn module_runs_in_embedded_interpreter() {
    pyo3::append_to_inittab!(lqswitch_py);
    Python::initialize();
    Python::attach(|py| {
        py.run(
            cr#"
import math
import lqswitch

plant = lqswitch.Plant.example1()
weights = lqswitch.Weights.example1()
sol = lqswitch.dare(plant, weights)
assert sol["residual"] < 1e-9
cert = lqswitch.common_certificate(plant, [[0.0, 0.0]], sol["k_star"])
assert cert["t_min"] == 16
assert math.isinf(lqswitch.linear_feedback_cost(plant, weights, [[0.0, 0.7]]))
report = dict(lqswitch.certify(plant, weights, [[0.0, 0.0]], [[0.0, 0.7]], 10.0, 30))
assert report["common_certificate"].startswith("inapplicable")
mean, se = lqswitch.paired_gap(plant, weights, [[0.0, 0.0]], sol["k_star"], math.inf, 1, horizon=20, n_traj=10)
assert mean == 0.0 and se == 0.0
try:
    lqswitch.Weights([[1.0]], [[1.0], [2.0]])
except ValueError:
    pass
else:
    raise AssertionError
"#,
            None,
            None,
        )
        .unwrap();
    });
}
