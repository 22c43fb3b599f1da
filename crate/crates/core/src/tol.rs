//! Numerical tolerances shared across the crate.

/// Allowed deviation of an image's total mass from one.
pub const TAU_MASS: f64 = 1e-6;

/// Allowed negative pixel mass; ingestion clips values in `[-TAU_FEAS, 0)` to zero.
pub const TAU_FEAS: f64 = 1e-8;

/// Default bound on LP duality gap and residuals.
pub const TAU_LP: f64 = 1e-7;

/// Environment variable overriding [`TAU_LP`] in the command-line tool.
pub const LP_TOL_ENV: &str = "FLOWCERT_LP_TOL";

/// [`TAU_LP`], or the value of `FLOWCERT_LP_TOL` when set to a positive number.
pub fn lp_tol_from_env() -> Result<f64, String> {
    match std::env::var(LP_TOL_ENV) {
        Ok(raw) => match raw.trim().parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
            _ => Err(format!("{LP_TOL_ENV} must be a positive number, got {raw:?}")),
        },
        Err(_) => Ok(TAU_LP),
    }
}
