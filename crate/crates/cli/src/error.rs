use paintdet::codec::CodecError;
use paintdet::data::DataError;
use paintdet::denoiser::DenoiserError;
use paintdet::diffusion::DiffusionError;
use paintdet::eval::EvalError;
use paintdet::nn::NnError;
use paintdet::pipeline::PipelineError;
use paintdet::postproc::PostprocError;

/// Failure classes, one per exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFinite(_) => CliError::Numeric(e.to_string()),
            NnError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::Style(_) | CodecError::PaletteSize(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Spec(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DiffusionError> for CliError {
    fn from(e: DiffusionError) -> Self {
        match e {
            DiffusionError::Nn(inner) => inner.into(),
            DiffusionError::Schedule(_) | DiffusionError::Eta(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DenoiserError> for CliError {
    fn from(e: DenoiserError) -> Self {
        match e {
            DenoiserError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            DenoiserError::Config(_) => CliError::Usage(e.to_string()),
            DenoiserError::Nn(inner) => inner.into(),
            DenoiserError::Diffusion(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PostprocError> for CliError {
    fn from(e: PostprocError) -> Self {
        match e {
            PostprocError::Config(_) => CliError::Usage(e.to_string()),
            PostprocError::Nn(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Codec(e) => e.into(),
            PipelineError::Postproc(e) => e.into(),
            PipelineError::Eval(e) => e.into(),
            PipelineError::Diffusion(e) => e.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}
