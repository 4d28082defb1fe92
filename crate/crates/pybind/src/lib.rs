use pyo3::prelude::*;

#[pymodule]
fn ncrecon_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
