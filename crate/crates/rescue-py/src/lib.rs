use pyo3::prelude::*;

#[pymodule]
fn rescue_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
