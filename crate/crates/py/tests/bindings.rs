use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn with_module<F: FnOnce(&Bound<'_, PyModule>)>(f: F) {
    Python::initialize();
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(speechgrade_py::speechgrade_module)(py);
        f(m.bind(py).cast::<PyModule>().unwrap());
    });
}

#[test]
fn metrics_are_exposed() {
    with_module(|m| {
        let q: f64 = m.getattr("qwk").unwrap().call1((vec![0usize, 1, 2], vec![0usize, 1, 2], 3usize)).unwrap().extract().unwrap();
        assert_eq!(q, 1.0);
        let r = m.getattr("metric_report").unwrap().call1((vec![0usize, 1, 2, 2], vec![0usize, 2, 2, 1], 3usize)).unwrap();
        let d = r.cast::<PyDict>().unwrap();
        assert_eq!(d.get_item("n").unwrap().unwrap().extract::<usize>().unwrap(), 4);
        assert!(d.contains("confusion").unwrap());
    });
}

#[test]
fn library_errors_raise_the_module_exception() {
    with_module(|m| {
        let e = m.getattr("qwk").unwrap().call1((vec![0usize, 1], vec![0usize], 2usize)).unwrap_err();
        let py = m.py();
        assert!(e.is_instance(py, &m.getattr("SpeechgradeError").unwrap()));
        assert!(e.value(py).to_string().starts_with("invalid"));
    });
}

#[test]
fn synth_extract_train_explain() {
    let dir = tempfile::tempdir().unwrap();
    with_module(|m| {
        let manifest = m.getattr("synth_corpus").unwrap().call1((dir.path(), 5u64, 80usize)).unwrap();
        let kw = PyDict::new(m.py());
        kw.set_item("resources", dir.path().join("resources")).unwrap();
        kw.set_item("groups", vec!["FF", "GVF"]).unwrap();
        let mats = m.getattr("extract").unwrap().call((manifest, 5u64), Some(&kw)).unwrap();
        let fm = mats.get_item("p1").unwrap();
        assert_eq!(fm.getattr("n_rows").unwrap().extract::<usize>().unwrap(), 80);
        let kw = PyDict::new(m.py());
        kw.set_item("family", "decision_tree").unwrap();
        kw.set_item("folds", 3).unwrap();
        let out = m.getattr("train").unwrap().call((&fm, 5u64), Some(&kw)).unwrap();
        let model = out.get_item(0).unwrap();
        assert!(out.get_item(1).unwrap().cast::<PyList>().unwrap().len() > 0);
        let report = model.call_method1("evaluate", (&fm,)).unwrap();
        assert!(report.get_item("qwk").unwrap().extract::<f64>().unwrap() > 0.0);
        let imp = model.call_method0("importance").unwrap();
        assert!(imp.cast::<PyList>().unwrap().len() > 0);
        let bg = fm.call_method1("split", ("train",)).unwrap();
        let curve = model.call_method1("pdp", (&bg, "speaking_rate")).unwrap();
        assert_eq!(curve.get_item("grid").unwrap().len().unwrap(), 20);
        let shap = model.call_method1("shap", (fm.call_method1("split", ("test",)).unwrap(),)).unwrap();
        let phi = shap.get_item("phi").unwrap();
        assert_eq!(phi.len().unwrap(), 16);
        // Round trip through JSON keeps predictions.
        let json: String = model.call_method0("to_json").unwrap().extract().unwrap();
        let again = m.getattr("Model").unwrap().call_method1("from_json", (json,)).unwrap();
        let a: Vec<usize> = model.call_method1("predict", (&fm,)).unwrap().extract().unwrap();
        let b: Vec<usize> = again.call_method1("predict", (&fm,)).unwrap().extract().unwrap();
        assert_eq!(a, b);
    });
}
