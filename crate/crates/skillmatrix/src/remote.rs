//! HTTP planning service client.
//!
//! The service receives `{"system": <skill list prompt>, "task": <text>}`
//! as a JSON POST and answers either with plain text or with a JSON object
//! holding the text under `reply`, `text` or `content`. The text must be a
//! numbered list of subtasks.

use std::time::Duration;

use serde::Serialize;
use skillmatrix_core::planner::{parse_numbered_reply, planner_prompt, PlanError, Planner, SkillList, SubtaskPlan};

pub const URL_VAR: &str = "SKILLMATRIX_PLANNER_URL";
pub const TOKEN_VAR: &str = "SKILLMATRIX_PLANNER_TOKEN";

#[derive(Debug, Clone)]
pub struct RemotePlanner {
    url: String,
    token: Option<String>,
    timeout: Duration,
    attempts: u32,
}

#[derive(Serialize)]
struct Request<'a> {
    system: &'a str,
    task: &'a str,
}

impl RemotePlanner {
    pub fn new(url: &str, token: Option<String>) -> Self {
        RemotePlanner {
            url: url.into(),
            token,
            timeout: Duration::from_secs(30),
            attempts: 3,
        }
    }

    /// Reads the endpoint and bearer token from the environment.
    pub fn from_env() -> Result<Self, PlanError> {
        let url = std::env::var(URL_VAR).map_err(|_| PlanError::Transport(format!("{URL_VAR} is not set")))?;
        Ok(Self::new(&url, std::env::var(TOKEN_VAR).ok()))
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn ask(&self, agent: &ureq::Agent, system: &str, task: &str) -> Result<String, PlanError> {
        let mut req = agent.post(&self.url);
        if let Some(t) = &self.token {
            req = req.header("authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .send_json(Request { system, task })
            .map_err(|e| PlanError::Transport(e.to_string()))?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| PlanError::Transport(e.to_string()))
    }
}

/// Pulls the reply text out of a service response body.
pub fn reply_text(body: &str) -> String {
    if let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(body) {
        for key in ["reply", "text", "content"] {
            if let Some(serde_json::Value::String(s)) = map.get(key) {
                return s.clone();
            }
        }
    }
    body.to_string()
}

impl Planner for RemotePlanner {
    fn plan(&mut self, task: &str, skills: &SkillList) -> Result<SubtaskPlan, PlanError> {
        if task.trim().is_empty() {
            return Err(PlanError::EmptyTask);
        }
        if skills.is_empty() {
            return Err(PlanError::EmptySkillList);
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let system = planner_prompt(skills);
        let mut last = PlanError::Transport("no attempt made".into());
        for _ in 0..self.attempts.max(1) {
            match self.ask(&agent, &system, task) {
                Ok(body) => return parse_numbered_reply(&reply_text(&body), skills),
                Err(e) if e.is_retriable() => last = e,
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_text_forms() {
        assert_eq!(reply_text("1. Grasp can"), "1. Grasp can");
        assert_eq!(reply_text(r#"{"reply":"1. Grasp can"}"#), "1. Grasp can");
        assert_eq!(reply_text(r#"{"content":"x"}"#), "x");
        assert_eq!(reply_text(r#"{"other":1}"#), r#"{"other":1}"#);
    }
}
