//! The scaffold workflow language and its interpreter.
//!
//! A scaffold is a bounded declarative workflow over agents, meetings, and
//! chats rather than generated general-purpose code: statically checkable,
//! safe to execute, and expressive enough for every seed pattern and mutation
//! operator in the corpus.

mod execute;
mod program;
mod seeds;
mod validate;

pub use execute::{execute, ExecError, ExecEvent, ExecutionTrace, RuntimeError};
pub use program::{
    placeholders, AgentSpec, BranchArm, ChatMessage, MeetingSpec, Placeholder, ProgramFileError,
    ScaffoldFile, Step, WorkflowProgram, MAX_REPEAT_COUNT, SCAFFOLD_SCHEMA, SYSTEM_SPEAKER,
};
pub use seeds::{expert_panel_scaffold, seed_scaffolds, EXPERT_PANEL_FIXTURE};
pub use validate::{validate_program, Diagnostic, DiagnosticCode};
