use std::net::SocketAddr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] hullpaint::Error),

    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },

    #[error("usage: {0}")]
    Usage(String),

    #[error("server error: {0}")]
    Server(String),
}

pub type ServiceResult<T> = std::result::Result<T, ServiceError>;
