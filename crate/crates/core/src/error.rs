use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("pieces overlap: [{0}, {1}] intersects [{2}, {3}]")]
    Overlap(f64, f64, f64, f64),
    #[error("species supports are not separated: {0}")]
    Separation(String),
    #[error("density is negative ({value}) at x = {x}")]
    NegativeDensity { x: f64, value: f64 },
    #[error("density is discontinuous at x = {x} (jump {jump})")]
    Discontinuity { x: f64, jump: f64 },
    #[error("boundary flux has unbounded total variation: {0}")]
    DivergentFlux(String),
    #[error("position {x} outside the domain [0, {ell}]")]
    Domain { x: f64, ell: f64 },
    #[error("mixing locus y = {y} lies outside the gap ({lo}, {hi})")]
    LocusOutOfGap { y: f64, lo: f64, hi: f64 },
    #[error("no interior zero at s = {s}: arctanh argument outside (-1, 1)")]
    ArctanhDomain { s: f64 },
    #[error("negative radicand {radicand} at s = {s}")]
    NegativeRadicand { s: f64, radicand: f64 },
    #[error("zero denominator in gyration radius: {0}")]
    ZeroDenominator(String),
    #[error("inverse transform needs an even number of terms in [8, 20], got {0}")]
    NonEvenTerms(usize),
    #[error("transform could not be evaluated at s = {0}")]
    Abscissa(String),
    #[error("criteria fail at abscissa s = {s}: {reason}")]
    CriteriaFailedAtAbscissa { s: f64, reason: String },
    #[error("front undefined on audit window starting at t = {0}")]
    UndefinedFront(f64),
    #[error("singular junction system: {0}")]
    SingularSystem(String),
    #[error("invalid network: {0}")]
    Network(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
