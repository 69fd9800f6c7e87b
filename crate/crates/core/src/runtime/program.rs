//! The scaffold workflow language: agents, meetings, chats, and steps.
//!
//! Programs are bounded and statically checkable: loops carry literal counts,
//! branches match literal strings with a mandatory default, and every control
//! path ends in exactly one `return` step.

use crate::providers::SchemaField;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Schema version string for scaffold program files.
pub const SCAFFOLD_SCHEMA: &str = "agentbreeder-scaffold/1";

/// The reserved speaker for chats injected by the program itself.
pub const SYSTEM_SPEAKER: &str = "system";

/// Maximum literal repeat count.
pub const MAX_REPEAT_COUNT: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub agent_name: String,
    pub agent_role: String,
    pub agent_goal: String,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeetingSpec {
    pub meeting_name: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub meeting: String,
    /// An agent name, or [`SYSTEM_SPEAKER`].
    pub speaker: String,
    /// May contain `{task}`, `{required_answer_format}`, and `{var:NAME}`.
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchArm {
    pub value: String,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Step {
    /// Posts a rendered message to a meeting's history.
    AppendChat { chat: ChatMessage },
    /// Calls the scaffold model as `agent` with the visible chat history and
    /// binds each schema field to `<bind_prefix>.<field>`.
    Invoke {
        agent: String,
        meeting: String,
        schema: Vec<SchemaField>,
        bind_prefix: String,
    },
    /// Runs `steps` a literal number of times (1..=8).
    Repeat { count: u32, steps: Vec<Step> },
    /// Exact-string dispatch on a bound variable; `default` is mandatory.
    SelectBranch {
        variable: String,
        arms: Vec<BranchArm>,
        default: Vec<Step>,
    },
    /// Renders the template into the final answer and stops.
    Return { template: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowProgram {
    pub agents: Vec<AgentSpec>,
    pub meetings: Vec<MeetingSpec>,
    pub steps: Vec<Step>,
}

impl WorkflowProgram {
    /// Canonical serialization: stable key order, no insignificant
    /// whitespace. Content-addressed ids and descriptors hash this form.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("program serializes")
    }

    pub fn agent(&self, name: &str) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.agent_name == name)
    }

    pub fn meeting(&self, name: &str) -> Option<&MeetingSpec> {
        self.meetings.iter().find(|m| m.meeting_name == name)
    }

    /// Names of meetings the agent belongs to, in declaration order.
    pub fn meetings_of(&self, agent_name: &str) -> Vec<&str> {
        self.meetings
            .iter()
            .filter(|m| m.members.iter().any(|member| member == agent_name))
            .map(|m| m.meeting_name.as_str())
            .collect()
    }

    /// Worst-case number of invoke steps on any control path.
    pub fn worst_case_invocations(&self) -> u64 {
        fn count(steps: &[Step]) -> u64 {
            steps
                .iter()
                .map(|step| match step {
                    Step::Invoke { .. } => 1,
                    Step::Repeat { count: n, steps } => (*n as u64).saturating_mul(count(steps)),
                    Step::SelectBranch { arms, default, .. } => arms
                        .iter()
                        .map(|arm| count(&arm.steps))
                        .chain(std::iter::once(count(default)))
                        .max()
                        .unwrap_or(0),
                    _ => 0,
                })
                .sum()
        }
        count(&self.steps)
    }
}

/// On-disk form of a scaffold: schema header plus name, thought, and the
/// program fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaffoldFile {
    pub schema: String,
    pub name: String,
    pub thought: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub agents: Vec<AgentSpec>,
    pub meetings: Vec<MeetingSpec>,
    pub steps: Vec<Step>,
}

#[derive(Debug, Error)]
pub enum ProgramFileError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema {found:?}, expected {SCAFFOLD_SCHEMA:?}")]
    Schema { found: String },
}

impl ScaffoldFile {
    pub fn parse(text: &str) -> Result<Self, ProgramFileError> {
        let file: ScaffoldFile = serde_json::from_str(text)?;
        if file.schema != SCAFFOLD_SCHEMA {
            return Err(ProgramFileError::Schema { found: file.schema });
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, ProgramFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ProgramFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        ScaffoldFile::parse(&text)
    }

    pub fn program(&self) -> WorkflowProgram {
        WorkflowProgram {
            agents: self.agents.clone(),
            meetings: self.meetings.clone(),
            steps: self.steps.clone(),
        }
    }

    pub fn from_parts(name: &str, thought: &str, program: &WorkflowProgram) -> Self {
        ScaffoldFile {
            schema: SCAFFOLD_SCHEMA.to_string(),
            name: name.to_string(),
            thought: thought.to_string(),
            note: None,
            agents: program.agents.clone(),
            meetings: program.meetings.clone(),
            steps: program.steps.clone(),
        }
    }
}

/// Template placeholders recognized in chat content and return templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placeholder {
    Task,
    RequiredAnswerFormat,
    Var(String),
}

/// Scans a template for placeholders. Unrecognized brace groups are treated
/// as literal text.
pub fn placeholders(template: &str) -> Vec<Placeholder> {
    let mut found = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let tail = &rest[open + 1..];
        let Some(close) = tail.find('}') else { break };
        let inner = &tail[..close];
        match inner {
            "task" => found.push(Placeholder::Task),
            "required_answer_format" => found.push(Placeholder::RequiredAnswerFormat),
            _ => {
                if let Some(name) = inner.strip_prefix("var:") {
                    found.push(Placeholder::Var(name.to_string()));
                }
            }
        }
        rest = &tail[close + 1..];
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_json_round_trips() {
        let program = WorkflowProgram {
            agents: vec![AgentSpec {
                agent_name: "a".into(),
                agent_role: "r".into(),
                agent_goal: "g".into(),
                temperature: 0.5,
            }],
            meetings: vec![MeetingSpec {
                meeting_name: "m".into(),
                members: vec!["a".into()],
            }],
            steps: vec![Step::Return {
                template: "{var:x}".into(),
            }],
        };
        let json = program.canonical_json();
        let parsed: WorkflowProgram = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.canonical_json(), json);
    }

    #[test]
    fn placeholder_scanning() {
        let found = placeholders("Task: {task} fmt {required_answer_format} v {var:a.b} {junk}");
        assert_eq!(
            found,
            vec![
                Placeholder::Task,
                Placeholder::RequiredAnswerFormat,
                Placeholder::Var("a.b".into()),
            ]
        );
    }

    #[test]
    fn worst_case_invocation_counting() {
        let invoke = Step::Invoke {
            agent: "a".into(),
            meeting: "m".into(),
            schema: vec![],
            bind_prefix: "x".into(),
        };
        let program = WorkflowProgram {
            agents: vec![],
            meetings: vec![],
            steps: vec![
                invoke.clone(),
                Step::Repeat {
                    count: 3,
                    steps: vec![invoke.clone()],
                },
                Step::SelectBranch {
                    variable: "v".into(),
                    arms: vec![BranchArm {
                        value: "x".into(),
                        steps: vec![invoke.clone(), invoke.clone()],
                    }],
                    default: vec![invoke],
                },
            ],
        };
        assert_eq!(program.worst_case_invocations(), 1 + 3 + 2);
    }
}
