//! Human curation of mapped traffic-light candidates.
//!
//! A [`CurationSession`] owns the candidate set produced by `build-map` and
//! an append-only journal of decisions; the current state is always the
//! replay of that journal over the initial candidates. [`router`] exposes
//! the session over HTTP under `/api/v1`.

mod error;
mod overlay;
mod server;
mod session;

pub use error::CurationError;
pub use overlay::{render_overlay, OVERLAY_SCALE};
pub use server::{router, serve, AppState};
pub use session::{
    Action, CurationSession, Decision, EditLock, Event, SaveOutcome, SessionConfig, JOURNAL_VERSION,
};
