/// Shared tolerances used for structural checks across the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericSettings {
    /// Entrywise residual above which a coupling is rejected as not (anti-)Hermitian.
    pub hermiticity_reject: f64,
    /// Default tolerance for matrix equality (max-entry absolute difference).
    pub matrix_eq: f64,
    /// Residual imaginary part treated as zero when classifying eigenvalues.
    pub imag_zero: f64,
}

impl Default for NumericSettings {
    fn default() -> Self {
        Self {
            hermiticity_reject: 1e-9,
            matrix_eq: 1e-9,
            imag_zero: 1e-9,
        }
    }
}
