use pyo3::prelude::*;
use robreg_py::robreg_py;

fn run(code: &std::ffi::CStr) {
    Python::attach(|py| {
        if let Err(e) = py.run(code, None, None) {
            e.display(py);
            panic!("python code failed");
        }
    });
}

fn init() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| {
        pyo3::append_to_inittab!(robreg_py);
        Python::initialize();
    });
}

#[test]
fn dataset_round_trip_and_estimates() {
    init();
    run(c"
import math, os, tempfile
import robreg_py as rr

ds = rr.sample(d=2, n=16, seed=3, sigma=0.5)
assert (ds.n, ds.d, len(ds)) == (16, 2, 16)
assert repr(ds) == 'Dataset(n=16, d=2)'
path = os.path.join(tempfile.mkdtemp(), 'd.csv')
ds.write(path)
back = rr.Dataset.read(path)
assert back.x == ds.x and back.y == ds.y

bad = rr.contaminate(ds, eps=0.125, magnitude=10.0, seed=3)
assert sum(bad.mask) == 2
sub = rr.estimate(bad, 'subset', eps=0.125, ncm_budget=10.0)
assert sorted(sub['deleted']) == [i for i, m in enumerate(bad.mask) if m]

plain = rr.Dataset([[1.0], [2.0], [3.0]], [2.0, 4.0, 6.0])
assert abs(rr.estimate(plain, 'ols')['theta_hat'][0] - 2.0) < 1e-12
assert rr.param_error([1.0, 0.0], [0.0, 0.0], [[4.0, 0.0], [0.0, 1.0]]) == 2.0
");
}

#[test]
fn errors_become_python_exceptions() {
    init();
    run(c"
import robreg_py as rr

def raises(f):
    try:
        f()
    except rr.RobregError:
        return True
    return False

ds = rr.sample(d=1, n=10)
assert raises(lambda: rr.estimate(ds, 'magic'))
assert raises(lambda: rr.Dataset([[1.0], [2.0, 3.0]], [1.0, 2.0]))
assert raises(lambda: rr.fit_loglog([0.1, 0.2], [1.0, 2.0]))
assert raises(lambda: rr.hc_coefficient([]))
assert raises(lambda: rr.contaminate(ds, eps=0.1, strategy='nope'))
");
}

#[test]
fn reports_are_plain_dicts() {
    init();
    run(c"
import robreg_py as rr

rep = rr.pair_report('mean_shift', 0.04, mc_samples=10000)
assert isinstance(rep, dict)
assert abs(rep['tv_closed_form'] - 0.04) < 1e-12
assert rep['claimed']['theta_gap']['formula'] == '(δ+√δ)/(1+√δ)'

rows = rr.run_sweep('''
instance.d = 1
instance.noise = zero
estimators.list = ols
sweep.eps = 0
sweep.reps = 2
sweep.n = 20
''')
assert len(rows) == 2 and all(r['param_error'] < 1e-12 for r in rows)
");
}
