//! Static validation of workflow programs.
//!
//! The diagnostics cover the mistakes a generated program can plausibly make:
//! invoking non-members, chatting to undeclared meetings, reading unbound
//! variables, missing or unreachable returns, loop-count violations, and
//! invocation budgets.

use super::program::{
    placeholders, BranchArm, Placeholder, Step, WorkflowProgram, MAX_REPEAT_COUNT, SYSTEM_SPEAKER,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticCode {
    EmptyName,
    DuplicateAgent,
    DuplicateMeeting,
    UnknownAgent,
    UnknownMeeting,
    NonMemberInvoke,
    NonMemberSpeaker,
    UnboundVariable,
    MissingReturn,
    UnreachableStep,
    ReturnInLoop,
    LoopCountViolation,
    CapViolation,
    MissingDefaultArm,
    TemperatureRange,
    EmptyBindPrefix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub message: String,
}

impl Diagnostic {
    fn new(code: DiagnosticCode, message: impl Into<String>) -> Self {
        Diagnostic {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.code, self.message)
    }
}

/// Whether a step sequence returns on every control path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Termination {
    AlwaysReturns,
    MayContinue,
}

struct Validator<'p> {
    program: &'p WorkflowProgram,
    diagnostics: Vec<Diagnostic>,
}

impl<'p> Validator<'p> {
    fn check_declarations(&mut self) {
        let mut agent_names = BTreeSet::new();
        for agent in &self.program.agents {
            if agent.agent_name.is_empty() {
                self.diagnostics
                    .push(Diagnostic::new(DiagnosticCode::EmptyName, "agent with empty name"));
            }
            if agent.agent_name == SYSTEM_SPEAKER {
                self.diagnostics.push(Diagnostic::new(
                    DiagnosticCode::DuplicateAgent,
                    "agent name \"system\" is reserved",
                ));
            }
            if !agent_names.insert(agent.agent_name.as_str()) {
                self.diagnostics.push(Diagnostic::new(
                    DiagnosticCode::DuplicateAgent,
                    format!("duplicate agent {:?}", agent.agent_name),
                ));
            }
            if !(0.0..=2.0).contains(&agent.temperature) {
                self.diagnostics.push(Diagnostic::new(
                    DiagnosticCode::TemperatureRange,
                    format!(
                        "agent {:?} temperature {} outside [0, 2]",
                        agent.agent_name, agent.temperature
                    ),
                ));
            }
        }
        let mut meeting_names = BTreeSet::new();
        for meeting in &self.program.meetings {
            if meeting.meeting_name.is_empty() {
                self.diagnostics.push(Diagnostic::new(
                    DiagnosticCode::EmptyName,
                    "meeting with empty name",
                ));
            }
            if !meeting_names.insert(meeting.meeting_name.as_str()) {
                self.diagnostics.push(Diagnostic::new(
                    DiagnosticCode::DuplicateMeeting,
                    format!("duplicate meeting {:?}", meeting.meeting_name),
                ));
            }
            for member in &meeting.members {
                if self.program.agent(member).is_none() {
                    self.diagnostics.push(Diagnostic::new(
                        DiagnosticCode::UnknownAgent,
                        format!(
                            "meeting {:?} lists undeclared agent {:?}",
                            meeting.meeting_name, member
                        ),
                    ));
                }
            }
        }
    }

    fn is_member(&self, meeting: &str, agent: &str) -> bool {
        self.program
            .meeting(meeting)
            .map(|m| m.members.iter().any(|member| member == agent))
            .unwrap_or(false)
    }

    fn check_template(&mut self, template: &str, bound: &BTreeSet<String>, context: &str) {
        for placeholder in placeholders(template) {
            if let Placeholder::Var(name) = placeholder {
                if !bound.contains(&name) {
                    self.diagnostics.push(Diagnostic::new(
                        DiagnosticCode::UnboundVariable,
                        format!("{context} references unbound variable {name:?}"),
                    ));
                }
            }
        }
    }

    /// Walks a step sequence, tracking bound variables. Returns the
    /// termination kind and the bindings available after the sequence.
    fn check_steps(
        &mut self,
        steps: &[Step],
        bound: &BTreeSet<String>,
        in_loop: bool,
    ) -> (Termination, BTreeSet<String>) {
        let mut bound = bound.clone();
        let mut returned = false;
        for (index, step) in steps.iter().enumerate() {
            if returned {
                self.diagnostics.push(Diagnostic::new(
                    DiagnosticCode::UnreachableStep,
                    format!("step {index} is unreachable: every prior path already returned"),
                ));
                break;
            }
            match step {
                Step::AppendChat { chat } => {
                    if self.program.meeting(&chat.meeting).is_none() {
                        self.diagnostics.push(Diagnostic::new(
                            DiagnosticCode::UnknownMeeting,
                            format!("chat to undeclared meeting {:?}", chat.meeting),
                        ));
                    } else if chat.speaker != SYSTEM_SPEAKER
                        && !self.is_member(&chat.meeting, &chat.speaker)
                    {
                        self.diagnostics.push(Diagnostic::new(
                            DiagnosticCode::NonMemberSpeaker,
                            format!(
                                "speaker {:?} is not a member of meeting {:?}",
                                chat.speaker, chat.meeting
                            ),
                        ));
                    }
                    self.check_template(&chat.content, &bound, "chat content");
                }
                Step::Invoke {
                    agent,
                    meeting,
                    schema,
                    bind_prefix,
                } => {
                    if self.program.agent(agent).is_none() {
                        self.diagnostics.push(Diagnostic::new(
                            DiagnosticCode::UnknownAgent,
                            format!("invoke of undeclared agent {agent:?}"),
                        ));
                    }
                    if self.program.meeting(meeting).is_none() {
                        self.diagnostics.push(Diagnostic::new(
                            DiagnosticCode::UnknownMeeting,
                            format!("invoke in undeclared meeting {meeting:?}"),
                        ));
                    } else if !self.is_member(meeting, agent) {
                        self.diagnostics.push(Diagnostic::new(
                            DiagnosticCode::NonMemberInvoke,
                            format!("agent {agent:?} invoked in meeting {meeting:?} it never joined"),
                        ));
                    }
                    if bind_prefix.is_empty() {
                        self.diagnostics.push(Diagnostic::new(
                            DiagnosticCode::EmptyBindPrefix,
                            format!("invoke of {agent:?} has an empty bind_prefix"),
                        ));
                    }
                    for field in schema {
                        bound.insert(format!("{bind_prefix}.{}", field.name));
                    }
                }
                Step::Repeat { count, steps } => {
                    if *count == 0 || *count > MAX_REPEAT_COUNT {
                        self.diagnostics.push(Diagnostic::new(
                            DiagnosticCode::LoopCountViolation,
                            format!("repeat count {count} outside 1..={MAX_REPEAT_COUNT}"),
                        ));
                    }
                    let (termination, body_bound) = self.check_steps(steps, &bound, true);
                    if termination == Termination::AlwaysReturns {
                        self.diagnostics.push(Diagnostic::new(
                            DiagnosticCode::ReturnInLoop,
                            "repeat body returns on every path, so later iterations are dead",
                        ));
                    }
                    // The body runs at least once, so its bindings survive.
                    bound = body_bound;
                }
                Step::SelectBranch {
                    variable,
                    arms,
                    default,
                } => {
                    if !bound.contains(variable) {
                        self.diagnostics.push(Diagnostic::new(
                            DiagnosticCode::UnboundVariable,
                            format!("branch on unbound variable {variable:?}"),
                        ));
                    }
                    if default.is_empty() && arms.iter().all(|arm| arm.steps.is_empty()) {
                        self.diagnostics.push(Diagnostic::new(
                            DiagnosticCode::MissingDefaultArm,
                            "select_branch with no steps in any arm or default",
                        ));
                    }
                    let mut all_return = true;
                    let mut common: Option<BTreeSet<String>> = None;
                    let mut consider = |term: Termination, arm_bound: BTreeSet<String>| {
                        if term == Termination::MayContinue {
                            all_return = false;
                            common = Some(match common.take() {
                                None => arm_bound,
                                Some(prev) => prev.intersection(&arm_bound).cloned().collect(),
                            });
                        }
                    };
                    for BranchArm { steps, .. } in arms {
                        let (term, arm_bound) = self.check_steps(steps, &bound, in_loop);
                        consider(term, arm_bound);
                    }
                    let (term, default_bound) = self.check_steps(default, &bound, in_loop);
                    consider(term, default_bound);
                    if all_return {
                        if in_loop {
                            self.diagnostics.push(Diagnostic::new(
                                DiagnosticCode::ReturnInLoop,
                                "branch inside a loop returns on every path",
                            ));
                        }
                        returned = true;
                    } else {
                        // Only bindings guaranteed on every continuing path
                        // survive the branch.
                        bound = common.unwrap_or_else(|| bound.clone());
                    }
                }
                Step::Return { template } => {
                    self.check_template(template, &bound, "return template");
                    if in_loop {
                        self.diagnostics.push(Diagnostic::new(
                            DiagnosticCode::ReturnInLoop,
                            "return inside a repeat loop",
                        ));
                    }
                    returned = true;
                }
            }
        }
        let termination = if returned {
            Termination::AlwaysReturns
        } else {
            Termination::MayContinue
        };
        (termination, bound)
    }
}

/// Validates a program against the structural rules and the invocation cap.
/// Returns an empty list iff the program is well-formed.
pub fn validate_program(program: &WorkflowProgram, invocation_cap: u32) -> Vec<Diagnostic> {
    let mut validator = Validator {
        program,
        diagnostics: Vec::new(),
    };
    validator.check_declarations();
    let (termination, _) = validator.check_steps(&program.steps, &BTreeSet::new(), false);
    if termination == Termination::MayContinue {
        validator.diagnostics.push(Diagnostic::new(
            DiagnosticCode::MissingReturn,
            "not every control path ends in a return step",
        ));
    }
    let worst_case = program.worst_case_invocations();
    if worst_case > invocation_cap as u64 {
        validator.diagnostics.push(Diagnostic::new(
            DiagnosticCode::CapViolation,
            format!("worst-case invocations {worst_case} exceed cap {invocation_cap}"),
        ));
    }
    validator.diagnostics
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::SchemaField;
    use crate::runtime::program::{AgentSpec, ChatMessage, MeetingSpec};

    fn agent(name: &str) -> AgentSpec {
        AgentSpec {
            agent_name: name.into(),
            agent_role: "role".into(),
            agent_goal: "goal".into(),
            temperature: 0.5,
        }
    }

    fn minimal_program() -> WorkflowProgram {
        WorkflowProgram {
            agents: vec![agent("solver")],
            meetings: vec![MeetingSpec {
                meeting_name: "room".into(),
                members: vec!["solver".into()],
            }],
            steps: vec![
                Step::AppendChat {
                    chat: ChatMessage {
                        meeting: "room".into(),
                        speaker: "system".into(),
                        content: "Task: {task}".into(),
                    },
                },
                Step::Invoke {
                    agent: "solver".into(),
                    meeting: "room".into(),
                    schema: vec![SchemaField::new("answer", "the answer")],
                    bind_prefix: "out".into(),
                },
                Step::Return {
                    template: "{var:out.answer}".into(),
                },
            ],
        }
    }

    #[test]
    fn minimal_program_is_clean() {
        assert!(validate_program(&minimal_program(), 10).is_empty());
    }

    #[test]
    fn non_member_invoke_is_diagnosed() {
        let mut program = minimal_program();
        program.agents.push(agent("outsider"));
        program.steps.insert(
            1,
            Step::Invoke {
                agent: "outsider".into(),
                meeting: "room".into(),
                schema: vec![],
                bind_prefix: "x".into(),
            },
        );
        let diagnostics = validate_program(&program, 10);
        assert!(diagnostics
            .iter()
            .any(|d| d.code == DiagnosticCode::NonMemberInvoke));
    }

    #[test]
    fn missing_return_is_diagnosed() {
        let mut program = minimal_program();
        program.steps.pop();
        let diagnostics = validate_program(&program, 10);
        assert!(diagnostics
            .iter()
            .any(|d| d.code == DiagnosticCode::MissingReturn));
    }

    #[test]
    fn unbound_variable_is_diagnosed() {
        let mut program = minimal_program();
        program.steps[2] = Step::Return {
            template: "{var:nope.answer}".into(),
        };
        let diagnostics = validate_program(&program, 10);
        assert!(diagnostics
            .iter()
            .any(|d| d.code == DiagnosticCode::UnboundVariable));
    }

    #[test]
    fn loop_rules_are_enforced() {
        let mut program = minimal_program();
        program.steps.insert(
            1,
            Step::Repeat {
                count: 9,
                steps: vec![Step::Return {
                    template: "x".into(),
                }],
            },
        );
        let diagnostics = validate_program(&program, 10);
        assert!(diagnostics
            .iter()
            .any(|d| d.code == DiagnosticCode::LoopCountViolation));
        assert!(diagnostics
            .iter()
            .any(|d| d.code == DiagnosticCode::ReturnInLoop));
    }

    #[test]
    fn cap_violation_is_diagnosed() {
        let mut program = minimal_program();
        program.steps.insert(
            1,
            Step::Repeat {
                count: 8,
                steps: vec![Step::Invoke {
                    agent: "solver".into(),
                    meeting: "room".into(),
                    schema: vec![],
                    bind_prefix: "x".into(),
                }],
            },
        );
        let diagnostics = validate_program(&program, 5);
        assert!(diagnostics
            .iter()
            .any(|d| d.code == DiagnosticCode::CapViolation));
    }

    #[test]
    fn branch_bindings_intersect_across_arms() {
        let mut program = minimal_program();
        // A variable bound only in one arm must not be readable afterwards.
        program.steps.insert(
            2,
            Step::SelectBranch {
                variable: "out.answer".into(),
                arms: vec![BranchArm {
                    value: "A".into(),
                    steps: vec![Step::Invoke {
                        agent: "solver".into(),
                        meeting: "room".into(),
                        schema: vec![SchemaField::new("extra", "")],
                        bind_prefix: "arm".into(),
                    }],
                }],
                default: vec![],
            },
        );
        program.steps[3] = Step::Return {
            template: "{var:arm.extra}".into(),
        };
        let diagnostics = validate_program(&program, 10);
        assert!(diagnostics
            .iter()
            .any(|d| d.code == DiagnosticCode::UnboundVariable));
    }
}
