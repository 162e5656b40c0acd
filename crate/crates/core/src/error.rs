use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("constellation has no points")]
    EmptyConstellation,

    #[error("SU states disagree on sample count ({0} vs {1})")]
    MismatchedTime(u64, u64),

    #[error("decision threshold undefined: c0 = 0 and c1 + ce * sum(h^2) = 0")]
    UndefinedThreshold,

    #[error("no trials observed under {0}")]
    MissingHypothesis(&'static str),

    #[error("quantizer index {index} out of range for {bits} quantization bits")]
    IndexOutOfRange { index: u32, bits: u32 },

    #[error("malformed wire message: {0}")]
    MalformedMessage(String),

    #[error("message for unknown process (su {su}, pu {pu}, component {component})")]
    UnknownProcess {
        su: usize,
        pu: usize,
        component: usize,
    },

    #[error("degenerate mean-increment condition: right-hand side {0} must be positive")]
    DegenerateRate(f64),

    #[error("target message rate {0} is not attainable")]
    UnattainableRate(f64),

    #[error("outage target infeasible: outage at zero interference is {at_zero} > {target}")]
    InfeasibleOutage { at_zero: f64, target: f64 },

    #[error("no feasible operating point: {0}")]
    NoFeasiblePoint(String),

    #[error("no SU transmitter available for selection")]
    NoTransmitter,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("calibration missing for scheme {0}")]
    MissingCalibration(&'static str),

    #[error("calibration file does not match scenario (expected hash {expected}, found {found})")]
    CalibrationMismatch { expected: String, found: String },

    #[error("calibration file parse error: {0}")]
    CalibrationParse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
