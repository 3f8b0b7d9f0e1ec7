use tripmem_core::config::ConfigError;
use tripmem_core::datagen::DatagenError;
use tripmem_core::editing::EditingError;
use tripmem_core::harness::{GeneratorError, HarnessError};
use tripmem_core::protocol::ProtocolError;
use tripmem_core::retrieval::RetrievalError;
use tripmem_core::store::{IngestOutcomeError, StoreError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_STORAGE: u8 = 3;
pub const EXIT_GENERATOR: u8 = 4;
pub const EXIT_OVERFLOW: u8 = 5;
pub const EXIT_AMBIGUOUS: u8 = 6;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }

    pub fn usage(msg: impl std::fmt::Display) -> Self {
        Self::new(EXIT_USAGE, anyhow::anyhow!("{msg}"))
    }

    pub fn context(mut self, ctx: impl std::fmt::Display + Send + Sync + 'static) -> Self {
        self.error = self.error.context(ctx);
        self
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::new(EXIT_USAGE, e)
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        let code = match e {
            StoreError::InvalidTriple(_) | StoreError::Embedding(_) => EXIT_DATA,
            _ => EXIT_STORAGE,
        };
        Self::new(code, e)
    }
}

impl From<IngestOutcomeError> for CliError {
    fn from(e: IngestOutcomeError) -> Self {
        match e {
            IngestOutcomeError::Line(l) => Self::new(EXIT_DATA, l),
            IngestOutcomeError::Store(s) => s.into(),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        Self::new(EXIT_USAGE, e)
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        Self::new(EXIT_DATA, e)
    }
}

impl From<GeneratorError> for CliError {
    fn from(e: GeneratorError) -> Self {
        Self::new(EXIT_GENERATOR, e)
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        Self::new(e_code(&e), e)
    }
}

fn e_code(e: &HarnessError) -> u8 {
    match e {
        HarnessError::Generator(_) | HarnessError::Malformed { .. } | HarnessError::Decode(_) => {
            EXIT_GENERATOR
        }
        HarnessError::Store(StoreError::InvalidTriple(_) | StoreError::Embedding(_)) => EXIT_DATA,
        HarnessError::Store(_) => EXIT_STORAGE,
        HarnessError::Sentence { source, .. } => e_code(source),
        _ => EXIT_DATA,
    }
}

impl From<DatagenError> for CliError {
    fn from(e: DatagenError) -> Self {
        let code = match e {
            DatagenError::Io(_) => EXIT_STORAGE,
            _ => EXIT_DATA,
        };
        Self::new(code, e)
    }
}

impl From<EditingError> for CliError {
    fn from(e: EditingError) -> Self {
        match e {
            EditingError::Harness(h) => h.into(),
            EditingError::Io(_) => Self::new(EXIT_STORAGE, e),
            _ => Self::new(EXIT_DATA, e),
        }
    }
}
