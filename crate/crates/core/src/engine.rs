//! Engine facade (under construction).
pub struct Engine;
pub enum EngineUsed { Native, Fallback }
pub struct RunOutcome;
