use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("truncated input: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },

    #[error("header field `{field}` is not a valid {expected}: {value:?}")]
    HeaderField {
        field: &'static str,
        expected: &'static str,
        value: String,
    },

    #[error("signal {signal}: digital minimum equals digital maximum ({value})")]
    DegenerateScaling { signal: usize, value: i64 },

    #[error("record count mismatch: header declares {declared}, payload holds {actual}")]
    RecordCount { declared: i64, actual: usize },

    #[error("signals use different sample counts per record ({0:?})")]
    MixedSampleRates(Vec<usize>),

    #[error("summary line {line}: {reason}")]
    Summary { line: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("window of {window_s} s does not fit in a {duration_s} s recording")]
    WindowTooLong { window_s: f64, duration_s: f64 },

    #[error("class {0} has too few segments to split")]
    ClassAbsent(&'static str),

    #[error("band {low}-{high} Hz exceeds the Nyquist frequency {nyquist} Hz")]
    BandAboveNyquist { low: f64, high: f64, nyquist: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("all confusion counts are zero")]
    EmptyConfusion,

    #[error("bad container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
