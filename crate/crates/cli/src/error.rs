//! Error classes that decide the process exit code.

use std::fmt;

/// 1: bad configuration or usage, 2: bad or missing data, 3: anything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 1,
            ErrorClass::Data => 2,
        }
    }
}

#[derive(Debug)]
pub struct Classified {
    pub class: ErrorClass,
    pub message: String,
}

impl fmt::Display for Classified {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Classified {}

pub fn config_error(message: impl Into<String>) -> anyhow::Error {
    Classified {
        class: ErrorClass::Config,
        message: message.into(),
    }
    .into()
}

pub fn data_error(message: impl Into<String>) -> anyhow::Error {
    Classified {
        class: ErrorClass::Data,
        message: message.into(),
    }
    .into()
}

/// Exit code for an error: the first classified cause wins, otherwise 3.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    err.chain()
        .find_map(|e| e.downcast_ref::<Classified>())
        .map_or(3, |c| c.class.exit_code())
}
