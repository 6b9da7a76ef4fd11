//! Error types shared by every module of the crate.

use thiserror::Error;

/// Crate-wide error enumeration. Variant names follow the operation
/// contracts: constructors reject bad inputs, arithmetic reports precision
/// exhaustion, and the verification layers report violated identities.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("polynomial is not certifiably irreducible: {0}")]
    NotIrreducible(String),
    #[error("proposed uniformizer does not have valuation one: {0}")]
    NotUniformizer(String),
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),
    #[error("residue class is not a unit: {0}")]
    NotAUnit(String),
    #[error("element or series is not invertible at working precision: {0}")]
    NotInvertible(String),
    #[error("composition diverges: {0}")]
    DivergentComposition(String),
    #[error("series is not a Frobenius series for this field: {0}")]
    NotAFrobeniusSeries(String),
    #[error("argument outside the convergence domain: {0}")]
    ConvergenceDomain(String),
    #[error("value expected to be Galois invariant is not: {0}")]
    NotGaloisInvariant(String),
    #[error("series does not lie in the image of the Frobenius substitution: {0}")]
    NotInImage(String),
    #[error("norm iteration did not stabilize within the budget: {0}")]
    NoStabilization(String),
    #[error("series is not fixed by the norm operator: {0}")]
    NotNormFixed(String),
    #[error("psi does not fix the logarithmic derivative: {0}")]
    PsiOneViolation(String),
    #[error("unit tower is not norm compatible: {0}")]
    NormCompatibilityViolation(String),
    #[error("base level trace formula violated: {0}")]
    RemarkM0Violation(String),
    #[error("operation requires the cyclotomic configuration: {0}")]
    NotCyclotomic(String),
    #[error("character level does not match measure level: {0}")]
    LevelMismatch(String),
    #[error("Gauss sum undefined for the trivial character")]
    TrivialCharacter,
    #[error("Frobenius scalar is degenerate for this map: {0}")]
    DegenerateFrobenius(String),
    #[error("regulator series is not in the psi-kernel: {0}")]
    PsiZeroViolation(String),
    #[error("character conductor does not match the requested level: {0}")]
    ConductorMismatch(String),
    #[error("element is not a principal unit: {0}")]
    NotPrincipalUnit(String),
    #[error("value does not generate the expected subgroup: {0}")]
    NotAGenerator(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
