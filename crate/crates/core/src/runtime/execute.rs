//! The workflow interpreter: runs a program's forward pass on one task.

use super::program::{
    placeholders, ChatMessage, Placeholder, Step, WorkflowProgram, SYSTEM_SPEAKER,
};
use crate::providers::{ChatModel, ChatRequest, Message, ProviderError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecEvent {
    pub step_index: u32,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
    pub tokens_used: u64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub events: Vec<ExecEvent>,
    /// Present iff execution succeeded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    pub invocations_used: u32,
}

impl ExecutionTrace {
    pub fn tokens_total(&self) -> u64 {
        self.events.iter().map(|e| e.tokens_used).sum()
    }
}

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("provider error: {0}")]
    Provider(#[from] ProviderError),
    #[error("invocation cap {cap} exceeded")]
    CapExceeded { cap: u32 },
    #[error("unbound variable {name:?} at runtime")]
    UnboundVariable { name: String },
    #[error("no return step was reached")]
    NoReturn,
}

/// Execution failure carrying the partial trace, so callers can still audit
/// token usage and the invocation budget.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct ExecError {
    pub error: RuntimeError,
    pub trace: ExecutionTrace,
}

struct Executor<'a> {
    program: &'a WorkflowProgram,
    provider: &'a dyn ChatModel,
    task: &'a str,
    required_answer_format: &'a str,
    cap: u32,
    variables: BTreeMap<String, String>,
    /// Global append-order log of (meeting, speaker, content).
    log: Vec<ChatMessage>,
    trace: ExecutionTrace,
    started: Instant,
    step_counter: u32,
}

enum Flow {
    Continue,
    Returned(String),
}

impl<'a> Executor<'a> {
    fn render(&self, template: &str) -> Result<String, RuntimeError> {
        let mut rendered = template.to_string();
        for placeholder in placeholders(template) {
            match placeholder {
                Placeholder::Task => rendered = rendered.replace("{task}", self.task),
                Placeholder::RequiredAnswerFormat => {
                    rendered =
                        rendered.replace("{required_answer_format}", self.required_answer_format)
                }
                Placeholder::Var(name) => {
                    let value = self
                        .variables
                        .get(&name)
                        .ok_or_else(|| RuntimeError::UnboundVariable { name: name.clone() })?;
                    rendered = rendered.replace(&format!("{{var:{name}}}"), value);
                }
            }
        }
        Ok(rendered)
    }

    fn push_event(&mut self, kind: &str, speaker: Option<&str>, tokens: u64) {
        let event = ExecEvent {
            step_index: self.step_counter,
            kind: kind.to_string(),
            speaker: speaker.map(str::to_string),
            tokens_used: tokens,
            elapsed_ms: self.started.elapsed().as_millis() as u64,
        };
        self.trace.events.push(event);
        self.step_counter += 1;
    }

    /// Builds the agent's view: a system identity message plus every chat in
    /// meetings the agent belongs to, in global append order.
    fn context_for(&self, agent_name: &str) -> Vec<Message> {
        let spec = self.program.agent(agent_name);
        let identity = match spec {
            Some(agent) => format!(
                "You are {}.\nRole: {}\nGoal: {}",
                agent.agent_name, agent.agent_role, agent.agent_goal
            ),
            None => format!("You are {agent_name}."),
        };
        let visible: Vec<&str> = self.program.meetings_of(agent_name);
        let mut messages = vec![Message::system(identity)];
        for chat in &self.log {
            if !visible.contains(&chat.meeting.as_str()) {
                continue;
            }
            if chat.speaker == agent_name {
                messages.push(Message::assistant(chat.content.clone()));
            } else if chat.speaker == SYSTEM_SPEAKER {
                messages.push(Message::user(chat.content.clone()));
            } else {
                messages.push(Message::user(format!("{}: {}", chat.speaker, chat.content)));
            }
        }
        messages
    }

    fn run_steps(&mut self, steps: &[Step]) -> Result<Flow, RuntimeError> {
        for step in steps {
            match step {
                Step::AppendChat { chat } => {
                    let content = self.render(&chat.content)?;
                    self.log.push(ChatMessage {
                        meeting: chat.meeting.clone(),
                        speaker: chat.speaker.clone(),
                        content,
                    });
                    self.push_event("append_chat", Some(&chat.speaker), 0);
                }
                Step::Invoke {
                    agent,
                    meeting: _,
                    schema,
                    bind_prefix,
                } => {
                    if self.trace.invocations_used >= self.cap {
                        return Err(RuntimeError::CapExceeded { cap: self.cap });
                    }
                    let temperature = self
                        .program
                        .agent(agent)
                        .map(|a| a.temperature)
                        .unwrap_or(0.5);
                    let request = ChatRequest {
                        messages: self.context_for(agent),
                        temperature,
                        response_schema: schema.clone(),
                    };
                    let response = self.provider.chat(&request)?;
                    self.trace.invocations_used += 1;
                    for field in schema {
                        let value = response.fields.get(&field.name).cloned().unwrap_or_default();
                        self.variables.insert(format!("{bind_prefix}.{}", field.name), value);
                    }
                    let tokens = response.usage.total();
                    self.push_event("invoke", Some(agent), tokens);
                }
                Step::Repeat { count, steps } => {
                    for _ in 0..*count {
                        if let Flow::Returned(answer) = self.run_steps(steps)? {
                            return Ok(Flow::Returned(answer));
                        }
                    }
                }
                Step::SelectBranch {
                    variable,
                    arms,
                    default,
                } => {
                    let value = self
                        .variables
                        .get(variable)
                        .ok_or_else(|| RuntimeError::UnboundVariable {
                            name: variable.clone(),
                        })?
                        .clone();
                    let branch = arms
                        .iter()
                        .find(|arm| arm.value == value)
                        .map(|arm| arm.steps.as_slice())
                        .unwrap_or(default.as_slice());
                    self.push_event("select_branch", None, 0);
                    if let Flow::Returned(answer) = self.run_steps(branch)? {
                        return Ok(Flow::Returned(answer));
                    }
                }
                Step::Return { template } => {
                    let answer = self.render(template)?;
                    self.push_event("return", None, 0);
                    return Ok(Flow::Returned(answer));
                }
            }
        }
        Ok(Flow::Continue)
    }
}

/// Executes a validated program on one task. The provider is called once per
/// invoke step with the agent's visible chat history; the invocation cap is
/// enforced in every outcome, including errors.
pub fn execute(
    program: &WorkflowProgram,
    task: &str,
    required_answer_format: &str,
    provider: &dyn ChatModel,
    cap: u32,
) -> Result<ExecutionTrace, ExecError> {
    let mut executor = Executor {
        program,
        provider,
        task,
        required_answer_format,
        cap,
        variables: BTreeMap::new(),
        log: Vec::new(),
        trace: ExecutionTrace::default(),
        started: Instant::now(),
        step_counter: 0,
    };
    match executor.run_steps(&program.steps) {
        Ok(Flow::Returned(answer)) => {
            executor.trace.final_answer = Some(answer);
            Ok(executor.trace)
        }
        Ok(Flow::Continue) => Err(ExecError {
            error: RuntimeError::NoReturn,
            trace: executor.trace,
        }),
        Err(error) => Err(ExecError {
            error,
            trace: executor.trace,
        }),
    }
}
