// Copyright 2026 The routemine Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by this crate.
///
/// The variants split along the lines callers care about: bad configuration
/// (fixable by editing the config), bad input data (fixable by fixing the
/// file), infeasible packages (a routine runtime outcome, handled by reject
/// channels), and contract violations (bugs in the caller or in this crate).
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Input data could not be read or parsed.
    #[error("input error: {0}")]
    Input(String),

    /// A package that no open unit load can accept.
    #[error("package {package_id} does not fit any feasible unit load")]
    Infeasible { package_id: String },

    /// An API precondition was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A pipeline stage failed; the stage name tells you where.
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True when the error means the caller's configuration is bad.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }

    /// True when the error means input data was unreadable or malformed.
    pub fn is_input(&self) -> bool {
        match self {
            Error::Input(_) | Error::Io(_) | Error::Json(_) => true,
            Error::Stage { source, .. } => source.is_input(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
