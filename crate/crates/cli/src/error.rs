use std::fmt;

/// Stage failure, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Data(anyhow::Error),
    Backend(anyhow::Error),
}

pub type StageResult<T> = Result<T, Failure>;

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Backend(_) => 4,
        }
    }

    fn inner(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Data(e) | Failure::Backend(e) => e,
        }
    }

    fn class(&self) -> &'static str {
        match self {
            Failure::Config(_) => "configuration error",
            Failure::Data(_) => "data error",
            Failure::Backend(_) => "backend error",
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:#}", self.class(), self.inner())
    }
}

pub trait ResultExt<T> {
    fn config(self) -> StageResult<T>;
    fn data(self) -> StageResult<T>;
    fn backend(self) -> StageResult<T>;
}

impl<T, E: Into<anyhow::Error>> ResultExt<T> for Result<T, E> {
    fn config(self) -> StageResult<T> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn data(self) -> StageResult<T> {
        self.map_err(|e| Failure::Data(e.into()))
    }

    fn backend(self) -> StageResult<T> {
        self.map_err(|e| Failure::Backend(e.into()))
    }
}
