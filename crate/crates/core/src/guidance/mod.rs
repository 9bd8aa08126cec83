//! Score providers: the request/response contract, an analytic oracle and an HTTP client.

mod analytic;
pub mod noise;
mod remote;
mod request;
pub mod wire;

pub use analytic::{AnalyticProvider, SceneTarget, Target, ZeroProvider};
pub use remote::{RemoteConfig, RemoteProvider};
pub use request::{FrameMeta, ModelKind, ScoreProvider, ScoreRequest};
pub use wire::PROTOCOL;
