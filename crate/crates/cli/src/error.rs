use tlebm_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_REGIME: i32 = 5;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Core(e) => match e {
                CoreError::InvalidParams { .. } | CoreError::InvalidOptions { .. } | CoreError::RangeInvalid(_) => {
                    EXIT_CONFIG
                }
                CoreError::EpsilonOutOfRange { .. }
                | CoreError::EpsilonNotSupercritical { .. }
                | CoreError::NotBistable { .. }
                | CoreError::NoWarmEquilibrium { .. }
                | CoreError::LambdaZero
                | CoreError::AtmosphericCoalbedoUnsupported
                | CoreError::NoEntry => EXIT_REGIME,
                _ => EXIT_OTHER,
            },
        }
    }
}
