//! Meta-skill list, subtask extraction and task decomposition.
//!
//! Skill templates are plain text with at most one `<object>` and at most
//! one `<container>` placeholder. A subtask is bound to the template whose
//! literal text aligns with it and covers the most characters.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::normalize_name;

pub const OBJECT: &str = "<object>";
pub const CONTAINER: &str = "<container>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutorKind {
    Vla,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HybridRoutine {
    Search,
    Shoot,
    Climb,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillPromptEntry {
    pub name: String,
    pub template: String,
    pub kind: ExecutorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routine: Option<HybridRoutine>,
    /// Whether the execution checker must see the object before dispatch.
    #[serde(default = "default_true")]
    pub gated: bool,
}

impl SkillPromptEntry {
    pub fn vla(template: &str) -> Self {
        SkillPromptEntry {
            name: template.into(),
            template: template.into(),
            kind: ExecutorKind::Vla,
            routine: None,
            gated: true,
        }
    }

    pub fn hybrid(template: &str, routine: HybridRoutine) -> Self {
        SkillPromptEntry {
            name: template.into(),
            template: template.into(),
            kind: ExecutorKind::Hybrid,
            routine: Some(routine),
            gated: routine != HybridRoutine::Search,
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        for ph in [OBJECT, CONTAINER] {
            if self.template.matches(ph).count() > 1 {
                return Err(PlanError::BadTemplate(self.template.clone()));
            }
        }
        if self.template.trim().is_empty() || self.name.trim().is_empty() {
            return Err(PlanError::BadTemplate(self.template.clone()));
        }
        if self.kind == ExecutorKind::Hybrid && self.routine.is_none() {
            return Err(PlanError::BadTemplate(self.template.clone()));
        }
        Ok(())
    }

    pub fn has_object(&self) -> bool {
        self.template.contains(OBJECT)
    }

    /// Instantiates the template.
    pub fn render(&self, object: Option<&str>, container: Option<&str>) -> String {
        let mut s = self.template.clone();
        if let Some(o) = object {
            s = s.replacen(OBJECT, o, 1);
        }
        if let Some(c) = container {
            s = s.replacen(CONTAINER, c, 1);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("task text is empty")]
    EmptyTask,
    #[error("skill list is empty")]
    EmptySkillList,
    #[error("no applicable template for {0:?}")]
    NoTemplate(String),
    #[error("{0:?} matches no skill template")]
    UnknownSubtask(String),
    #[error("skill {0:?} is already registered")]
    Duplicate(String),
    #[error("malformed skill template {0:?}")]
    BadTemplate(String),
    #[error("skill {0:?} used by the plan is missing from the skill list")]
    Missing(String),
    /// The remote planner could not be reached; retrying may succeed.
    #[error("planner transport failure: {0}")]
    Transport(String),
    #[error("planner reply could not be parsed:\n{raw}")]
    Unparseable { raw: String },
}

impl PlanError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, PlanError::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SkillList {
    pub skills: Vec<SkillPromptEntry>,
}

impl SkillList {
    pub fn new(skills: Vec<SkillPromptEntry>) -> Result<Self, PlanError> {
        let mut list = SkillList { skills: Vec::new() };
        for s in skills {
            list.register(s)?;
        }
        Ok(list)
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&SkillPromptEntry> {
        self.skills.iter().find(|s| s.name == name)
    }

    /// Appends a new entry; names must be unique.
    pub fn register(&mut self, entry: SkillPromptEntry) -> Result<(), PlanError> {
        entry.validate()?;
        if self.get(&entry.name).is_some() {
            return Err(PlanError::Duplicate(entry.name));
        }
        self.skills.push(entry);
        Ok(())
    }

    /// Binds free subtask text to the best-aligned template.
    pub fn match_text(&self, text: &str) -> Option<Subtask> {
        let norm = normalize_text(text);
        let mut best: Option<(usize, &SkillPromptEntry, Captures)> = None;
        for entry in &self.skills {
            let Some(caps) = align(&entry.template, &norm) else { continue };
            let score = literal_len(&entry.template);
            if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                best = Some((score, entry, caps));
            }
        }
        best.map(|(_, entry, caps)| Subtask {
            skill: entry.name.clone(),
            object: caps.object.map(|o| normalize_name(&o)),
            container: caps.container.map(|c| normalize_name(&c)),
            text: text.trim().to_owned(),
            new_skill: false,
        })
    }

    pub fn entry_for(&self, subtask: &Subtask) -> Option<&SkillPromptEntry> {
        self.get(&subtask.skill)
    }

    /// Builds a subtask from a skill name and arguments.
    pub fn instantiate(&self, skill: &str, object: Option<&str>, container: Option<&str>) -> Result<Subtask, PlanError> {
        let entry = self.get(skill).ok_or_else(|| PlanError::Missing(skill.into()))?;
        Ok(Subtask {
            skill: entry.name.clone(),
            object: object.map(normalize_name),
            container: container.map(normalize_name),
            text: entry.render(object, container),
            new_skill: false,
        })
    }
}

/// Built-in meta-skills. The eight VLA entries cover movement and
/// manipulation; searching, shooting and climbing are hybrid routines.
pub fn default_skill_list() -> SkillList {
    SkillList::new(vec![
        SkillPromptEntry::vla("Move to <object>"),
        SkillPromptEntry::vla("Grasp <object>"),
        SkillPromptEntry::vla("Position <object> over the <container>"),
        SkillPromptEntry::vla("Release <object>"),
        SkillPromptEntry::vla("Place <object>"),
        SkillPromptEntry::vla("Open <object>"),
        SkillPromptEntry::vla("Close <object>"),
        SkillPromptEntry::vla("Move through <object>"),
        SkillPromptEntry::hybrid("Search for <object>", HybridRoutine::Search),
        SkillPromptEntry::hybrid("Shoot <object>", HybridRoutine::Shoot),
        SkillPromptEntry::hybrid("Climb the ramp", HybridRoutine::Climb),
    ])
    .expect("built-in skill list is valid")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtask {
    /// Name of the skill entry this subtask instantiates.
    pub skill: String,
    pub object: Option<String>,
    #[serde(default)]
    pub container: Option<String>,
    pub text: String,
    /// Proposed by a planner but absent from the skill list; never executed.
    #[serde(default)]
    pub new_skill: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SubtaskPlan {
    pub steps: Vec<Subtask>,
}

impl SubtaskPlan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.text.as_str()).collect()
    }

    /// Every step must name a registered skill and none may be quarantined.
    pub fn validate(&self, skills: &SkillList) -> Result<(), PlanError> {
        for s in &self.steps {
            if s.new_skill || skills.get(&s.skill).is_none() {
                return Err(PlanError::Missing(s.skill.clone()));
            }
        }
        Ok(())
    }
}

/// Lowercases, collapses whitespace and strips trailing punctuation.
pub fn normalize_text(text: &str) -> String {
    let joined = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    joined.trim_end_matches(['.', '!', ';', ',']).trim().to_owned()
}

#[derive(Debug, Default)]
struct Captures {
    object: Option<String>,
    container: Option<String>,
}

enum Part<'a> {
    Lit(&'a str),
    Object,
    Container,
}

fn parts(template: &str) -> Vec<Part<'_>> {
    let mut out = Vec::new();
    let mut rest = template;
    loop {
        let next = [(OBJECT, 0u8), (CONTAINER, 1u8)]
            .iter()
            .filter_map(|(ph, t)| rest.find(ph).map(|i| (i, *ph, *t)))
            .min_by_key(|(i, _, _)| *i);
        match next {
            Some((i, ph, t)) => {
                if i > 0 {
                    out.push(Part::Lit(&rest[..i]));
                }
                out.push(if t == 0 { Part::Object } else { Part::Container });
                rest = &rest[i + ph.len()..];
            }
            None => {
                if !rest.is_empty() {
                    out.push(Part::Lit(rest));
                }
                return out;
            }
        }
    }
}

fn literal_len(template: &str) -> usize {
    parts(template)
        .iter()
        .map(|p| match p {
            Part::Lit(s) => s.len(),
            _ => 0,
        })
        .sum()
}

/// Aligns normalized text against a template; placeholders capture
/// non-empty spans up to the next literal.
fn align(template: &str, text: &str) -> Option<Captures> {
    let lowered = normalize_text(template);
    let parts = parts(&lowered);
    let mut caps = Captures::default();
    let mut pos = 0;
    let mut i = 0;
    while i < parts.len() {
        match &parts[i] {
            Part::Lit(lit) => {
                if !text[pos..].starts_with(lit) {
                    return None;
                }
                pos += lit.len();
            }
            ph => {
                let end = match parts.get(i + 1) {
                    Some(Part::Lit(next)) => pos + text[pos..].find(next)?,
                    Some(_) => return None,
                    None => text.len(),
                };
                let span = text[pos..end].trim();
                if span.is_empty() {
                    return None;
                }
                match ph {
                    Part::Object => caps.object = Some(span.to_string()),
                    _ => caps.container = Some(span.to_string()),
                }
                pos = end;
            }
        }
        i += 1;
    }
    (pos == text.len()).then_some(caps)
}

/// Returns the object named by a subtask, or `None` for objectless skills.
pub fn extract_object(subtask_text: &str, skills: &SkillList) -> Result<Option<String>, PlanError> {
    skills
        .match_text(subtask_text)
        .map(|s| s.object)
        .ok_or_else(|| PlanError::UnknownSubtask(subtask_text.into()))
}

pub trait Planner {
    fn plan(&mut self, task: &str, skills: &SkillList) -> Result<SubtaskPlan, PlanError>;
}

/// Deterministic rule-based decomposition.
///
/// A task is split into clauses on "and", "then" and commas; each clause is
/// expanded by the first rule whose pattern it matches.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplatePlanner;

type Steps = Vec<(&'static str, Option<String>, Option<String>)>;

fn strip_prefix_any<'a>(s: &'a str, prefixes: &[&str]) -> Option<&'a str> {
    prefixes.iter().find_map(|p| s.strip_prefix(p))
}

fn split_pair<'a>(s: &'a str, seps: &[&str]) -> Option<(&'a str, &'a str)> {
    seps.iter().find_map(|sep| {
        s.find(sep)
            .map(|i| (s[..i].trim(), s[i + sep.len()..].trim()))
            .filter(|(a, b)| !a.is_empty() && !b.is_empty())
    })
}

fn expand_clause(clause: &str, after_motion: bool) -> Option<Steps> {
    let obj = |s: &str| Some(normalize_name(s));
    if let Some(rest) = strip_prefix_any(clause, &["put ", "place "]) {
        let (item, container) = split_pair(rest, &[" into ", " in ", " inside "])?;
        let (item, container) = (obj(item), obj(container));
        let mut steps: Steps = Vec::new();
        if after_motion {
            steps.push(("Search for <object>", item.clone(), None));
        }
        steps.push(("Move to <object>", item.clone(), None));
        steps.push(("Grasp <object>", item.clone(), None));
        if after_motion {
            steps.push(("Search for <object>", container.clone(), None));
        }
        steps.push(("Move to <object>", container.clone(), None));
        steps.push(("Position <object> over the <container>", item.clone(), container));
        steps.push(("Release <object>", item, None));
        return Some(steps);
    }
    if let Some(rest) = strip_prefix_any(clause, &["cross ", "go through ", "pass through "]) {
        let rest = rest.trim_end_matches(" at the front").trim_end_matches(" in front");
        return Some(vec![("Move through <object>", obj(rest), None)]);
    }
    if clause.starts_with("climb") {
        return Some(vec![
            ("Move to <object>", obj("ramp"), None),
            ("Climb the ramp", None, None),
        ]);
    }
    if let Some(rest) = strip_prefix_any(clause, &["open "]) {
        let o = obj(rest);
        return Some(vec![("Move to <object>", o.clone(), None), ("Open <object>", o, None)]);
    }
    if let Some(rest) = strip_prefix_any(clause, &["close ", "shut "]) {
        let o = obj(rest);
        return Some(vec![("Move to <object>", o.clone(), None), ("Close <object>", o, None)]);
    }
    if let Some(rest) = strip_prefix_any(clause, &["pick up ", "grab ", "grasp "]) {
        let o = obj(rest);
        return Some(vec![("Move to <object>", o.clone(), None), ("Grasp <object>", o, None)]);
    }
    if let Some(rest) = strip_prefix_any(clause, &["shoot ", "knock down ", "hit "]) {
        let o = obj(rest);
        return Some(vec![("Search for <object>", o.clone(), None), ("Shoot <object>", o, None)]);
    }
    if let Some(rest) = strip_prefix_any(clause, &["find ", "search for ", "look for "]) {
        return Some(vec![("Search for <object>", obj(rest), None)]);
    }
    if let Some(rest) = strip_prefix_any(clause, &["move to ", "go to ", "approach "]) {
        return Some(vec![("Move to <object>", obj(rest), None)]);
    }
    if let Some(rest) = strip_prefix_any(clause, &["release ", "drop "]) {
        return Some(vec![("Release <object>", obj(rest), None)]);
    }
    None
}

fn split_clauses(task: &str) -> Vec<String> {
    let mut s = task.to_owned();
    for sep in [", and then ", ", then ", " and then ", " then ", ", and ", ", "] {
        s = s.replace(sep, "\u{1}");
    }
    s = s.replace(" and ", "\u{1}");
    s.split('\u{1}')
        .map(|c| c.trim().to_owned())
        .filter(|c| !c.is_empty())
        .collect()
}

impl Planner for TemplatePlanner {
    fn plan(&mut self, task: &str, skills: &SkillList) -> Result<SubtaskPlan, PlanError> {
        let norm = normalize_text(task);
        if norm.is_empty() {
            return Err(PlanError::EmptyTask);
        }
        if skills.is_empty() {
            return Err(PlanError::EmptySkillList);
        }
        let mut plan = SubtaskPlan::default();
        for (i, clause) in split_clauses(&norm).iter().enumerate() {
            let steps = expand_clause(clause, i > 0).ok_or_else(|| PlanError::NoTemplate(task.trim().into()))?;
            for (skill, object, container) in steps {
                plan.steps
                    .push(skills.instantiate(skill, object.as_deref(), container.as_deref())?);
            }
        }
        Ok(plan)
    }
}

/// Prompt sent to a chat-style planning service: the skill list followed
/// by the task, asking for a numbered list of subtasks.
pub fn planner_prompt(skills: &SkillList) -> String {
    let mut s = String::from(
        "You are a task planning agent for a mobile manipulation robot. \
         Decompose the user's task into an ordered list of subtasks. \
         Each subtask must instantiate one skill from the list below, replacing \
         <object> and <container> with object names from the task. \
         Answer only with numbered lines of the form \"N. <subtask>\".\n\nSkills:\n",
    );
    for (i, e) in skills.skills.iter().enumerate() {
        s.push_str(&format!("{}. {}\n", i + 1, e.template));
    }
    s
}

/// Parses a numbered reply ("1. Move to red can") into a plan. Lines that
/// match no template become quarantined new-skill steps.
pub fn parse_numbered_reply(reply: &str, skills: &SkillList) -> Result<SubtaskPlan, PlanError> {
    let unparseable = || PlanError::Unparseable { raw: reply.into() };
    let mut plan = SubtaskPlan::default();
    for (expected, line) in (1u32..).zip(reply.lines().map(str::trim).filter(|l| !l.is_empty())) {
        let (num, text) = line.split_once('.').ok_or_else(unparseable)?;
        let n: u32 = num.trim().parse().map_err(|_| unparseable())?;
        let text = text.trim();
        if n != expected || text.is_empty() {
            return Err(unparseable());
        }
        let step = skills.match_text(text).unwrap_or_else(|| Subtask {
            skill: text.into(),
            object: None,
            container: None,
            text: text.into(),
            new_skill: true,
        });
        plan.steps.push(step);
    }
    if plan.is_empty() {
        return Err(unparseable());
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_two_decomposition() {
        let skills = default_skill_list();
        let plan = TemplatePlanner
            .plan("Put the red cola can into the white box", &skills)
            .unwrap();
        assert_eq!(
            plan.texts(),
            vec![
                "Move to red cola can",
                "Grasp red cola can",
                "Move to white box",
                "Position red cola can over the white box",
                "Release red cola can",
            ]
        );
        assert_eq!(plan.steps[3].container.as_deref(), Some("white box"));
        plan.validate(&skills).unwrap();
    }

    #[test]
    fn substitutes_other_objects() {
        let skills = default_skill_list();
        let plan = TemplatePlanner
            .plan("Put the pink cube into the white box.", &skills)
            .unwrap();
        assert_eq!(plan.len(), 5);
        assert_eq!(plan.steps[0].object.as_deref(), Some("pink cube"));
        assert_eq!(plan.steps[2].object.as_deref(), Some("white box"));
    }

    #[test]
    fn unmatched_task_errors() {
        let err = TemplatePlanner.plan("Dance the tango", &default_skill_list()).unwrap_err();
        assert!(matches!(err, PlanError::NoTemplate(_)));
        assert_eq!(TemplatePlanner.plan("   ", &default_skill_list()), Err(PlanError::EmptyTask));
        assert_eq!(
            TemplatePlanner.plan("Put a into b", &SkillList::default()),
            Err(PlanError::EmptySkillList)
        );
    }

    #[test]
    fn extract_examples() {
        let s = default_skill_list();
        assert_eq!(extract_object("move to red cola can", &s).unwrap().as_deref(), Some("red cola can"));
        assert_eq!(extract_object("grasp green can", &s).unwrap().as_deref(), Some("green can"));
        assert_eq!(extract_object("climb the ramp", &s).unwrap(), None);
        assert_eq!(extract_object("Open the drawer", &s).unwrap().as_deref(), Some("drawer"));
        assert!(extract_object("juggle three balls", &s).is_err());
    }

    #[test]
    fn longest_template_wins() {
        let s = default_skill_list();
        let st = s.match_text("Move through obstacles").unwrap();
        assert_eq!(st.skill, "Move through <object>");
        let st = s.match_text("Position red can over the white box").unwrap();
        assert_eq!(st.object.as_deref(), Some("red can"));
        assert_eq!(st.container.as_deref(), Some("white box"));
    }

    #[test]
    fn long_horizon_decompositions() {
        let s = default_skill_list();
        let p1 = TemplatePlanner
            .plan("Cross the obstacles at the front and put the red can into the white box.", &s)
            .unwrap();
        assert_eq!(p1.steps[0].text, "Move through obstacles");
        assert_eq!(p1.steps[1].text, "Search for red can");
        let p2 = TemplatePlanner
            .plan("Climb the ramp and put the green can into the drawer.", &s)
            .unwrap();
        assert_eq!(p2.steps[1].text, "Climb the ramp");
        let p3 = TemplatePlanner
            .plan(
                "Open the drawer and put the purple cube into the drawer, then close the drawer.",
                &s,
            )
            .unwrap();
        assert_eq!(p3.steps.first().unwrap().text, "Move to drawer");
        assert_eq!(p3.steps.last().unwrap().text, "Close drawer");
        assert!(p3.len() >= 10);
    }

    #[test]
    fn registration_rules() {
        let mut s = default_skill_list();
        let n = s.len();
        s.register(SkillPromptEntry::vla("Push <object>")).unwrap();
        assert_eq!(s.len(), n + 1);
        assert!(s.get("Push <object>").is_some());
        assert_eq!(
            s.register(SkillPromptEntry::vla("Move to <object>")),
            Err(PlanError::Duplicate("Move to <object>".into()))
        );
        assert!(matches!(
            s.register(SkillPromptEntry::vla("Swap <object> and <object>")),
            Err(PlanError::BadTemplate(_))
        ));
    }

    #[test]
    fn numbered_reply_parsing() {
        let s = default_skill_list();
        let plan = parse_numbered_reply("1. Move to red can\n2. Grasp red can\n3. Juggle red can\n", &s).unwrap();
        assert_eq!(plan.len(), 3);
        assert!(!plan.steps[0].new_skill);
        assert!(plan.steps[2].new_skill);
        assert!(plan.validate(&s).is_err());
        let err = parse_numbered_reply("Sure! Here is a plan: move to the can", &s).unwrap_err();
        assert!(matches!(err, PlanError::Unparseable { raw } if raw.contains("Sure!")));
        assert!(parse_numbered_reply("1. Move to a\n3. Grasp a", &s).is_err());
    }
}
