use thiserror::Error;

/// Two vectors that must agree in width did not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("width mismatch: expected {expected}, got {got}")]
pub struct WidthMismatch {
    pub expected: usize,
    pub got: usize,
}

impl WidthMismatch {
    pub fn check(expected: usize, got: usize) -> Result<(), WidthMismatch> {
        if expected == got {
            Ok(())
        } else {
            Err(WidthMismatch { expected, got })
        }
    }
}
