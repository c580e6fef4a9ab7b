//! Tasks, sub-tasks and the controller's progress record.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::value::is_identifier;
use crate::variables::{Variable, VariableError, VariableStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSource {
    Benchmark,
    Interactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub intent: String,
    pub apps_in_scope: Vec<String>,
    #[serde(default)]
    pub initial_context: Vec<Variable>,
    pub source: TaskSource,
}

impl Task {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.id.is_empty() {
            return Err(PlanError::InvalidTask("empty task id".into()));
        }
        if self.apps_in_scope.is_empty() {
            return Err(PlanError::InvalidTask(format!("task `{}` has no apps in scope", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Executor {
    Browser,
    Api,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopBinding {
    pub list_var: String,
    pub alias: String,
    /// Set on expanded instances: position in the list and the element bound to `alias`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<(usize, Value)>,
    /// Id of the template an instance was expanded from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubTask {
    pub id: String,
    pub goal: String,
    pub executor: Executor,
    #[serde(default)]
    pub consumes: Vec<String>,
    #[serde(default)]
    pub produces: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loop_binding: Option<LoopBinding>,
}

impl SubTask {
    pub fn new(id: impl Into<String>, goal: impl Into<String>, executor: Executor) -> Self {
        SubTask {
            id: id.into(),
            goal: goal.into(),
            executor,
            consumes: Vec::new(),
            produces: Vec::new(),
            loop_binding: None,
        }
    }

    pub fn consuming(mut self, names: &[&str]) -> Self {
        self.consumes = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn producing(mut self, names: &[&str]) -> Self {
        self.produces = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn looping(mut self, list_var: &str, alias: &str) -> Self {
        self.loop_binding = Some(LoopBinding {
            list_var: list_var.into(),
            alias: alias.into(),
            element: None,
            template: None,
        });
        self
    }

    pub fn is_loop_template(&self) -> bool {
        self.loop_binding.as_ref().is_some_and(|b| b.element.is_none())
    }

    fn alias(&self) -> Option<&str> {
        self.loop_binding.as_ref().map(|b| b.alias.as_str())
    }

    /// Consumed names that must come from the variable store (the loop alias
    /// is supplied by the binding instead).
    pub fn store_inputs(&self) -> impl Iterator<Item = &str> {
        let alias = self.alias();
        self.consumes
            .iter()
            .map(String::as_str)
            .filter(move |c| Some(*c) != alias)
    }

    /// The sub-task as a sub-agent sees it: loop instances carry their
    /// template's unsuffixed output names.
    pub fn for_execution(&self) -> SubTask {
        let mut out = self.clone();
        if let Some((i, _)) = self.loop_binding.as_ref().and_then(|b| b.element.as_ref()) {
            let suffix = format!("_{i}");
            out.produces = self
                .produces
                .iter()
                .map(|p| p.strip_suffix(&suffix).unwrap_or(p).to_string())
                .collect();
        }
        out
    }

    fn validate_names(&self) -> Result<(), PlanError> {
        for name in self.consumes.iter().chain(&self.produces) {
            if !is_identifier(name) {
                return Err(PlanError::Validation(format!(
                    "sub-task `{}` names invalid variable `{name}`",
                    self.id
                )));
            }
        }
        if let Some(b) = &self.loop_binding {
            if !is_identifier(&b.alias) || !is_identifier(&b.list_var) {
                return Err(PlanError::Validation(format!("sub-task `{}` has an invalid loop binding", self.id)));
            }
            if !self.consumes.contains(&b.list_var) {
                return Err(PlanError::Validation(format!(
                    "loop sub-task `{}` must consume its list `{}`",
                    self.id, b.list_var
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubTaskStatus {
    Pending,
    Running,
    Succeeded,
    Failed,
    Skipped,
}

impl SubTaskStatus {
    pub fn is_resolved(self) -> bool {
        !matches!(self, SubTaskStatus::Pending | SubTaskStatus::Running)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultStatus {
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubTaskResult {
    pub subtask_id: String,
    pub status: ResultStatus,
    pub produced: Vec<Variable>,
    pub answer: Option<String>,
    pub step_count: u32,
    pub failure_reason: Option<String>,
}

impl SubTaskResult {
    pub fn succeeded(subtask_id: &str, produced: Vec<Variable>, answer: Option<String>, step_count: u32) -> Self {
        SubTaskResult {
            subtask_id: subtask_id.into(),
            status: ResultStatus::Succeeded,
            produced,
            answer,
            step_count,
            failure_reason: None,
        }
    }

    pub fn failed(subtask_id: &str, reason: impl Into<String>, step_count: u32) -> Self {
        SubTaskResult {
            subtask_id: subtask_id.into(),
            status: ResultStatus::Failed,
            produced: Vec::new(),
            answer: None,
            step_count,
            failure_reason: Some(reason.into()),
        }
    }

    pub fn is_success(&self) -> bool {
        self.status == ResultStatus::Succeeded
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("plan has no sub-tasks")]
    EmptyPlan,
    #[error("plan validation failed: {0}")]
    Validation(String),
    #[error("no pending sub-task is runnable")]
    Deadlock,
    #[error("`{0}` is not a list")]
    NotAList(String),
    #[error("unknown sub-task `{0}`")]
    UnknownSubtask(String),
    #[error("sub-task `{0}` is not running")]
    NotRunning(String),
    #[error(transparent)]
    Variable(#[from] VariableError),
    #[error("plan is already terminal")]
    Terminal,
}

/// Checks names and dataflow: each consumed name is produced earlier in the
/// list or bound in `available`.
pub fn validate_plan(subtasks: &[SubTask], available: &BTreeSet<String>) -> Result<(), PlanError> {
    if subtasks.is_empty() {
        return Err(PlanError::EmptyPlan);
    }
    let mut bound = available.clone();
    let mut ids = BTreeSet::new();
    for st in subtasks {
        if st.id.is_empty() || !ids.insert(st.id.clone()) {
            return Err(PlanError::Validation(format!("duplicate or empty sub-task id `{}`", st.id)));
        }
        st.validate_names()?;
        if let Some(missing) = st.store_inputs().find(|c| !bound.contains(*c)) {
            return Err(PlanError::Validation(format!(
                "sub-task `{}` consumes `{missing}` before anything produces it",
                st.id
            )));
        }
        bound.extend(st.produces.iter().cloned());
    }
    Ok(())
}

/// What the controller should do next.
#[derive(Debug, Clone, PartialEq)]
pub enum Dispatch {
    Run { index: usize, inputs: VariableStore },
    Conclude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanState {
    pub task_id: String,
    pub subtasks: Vec<SubTask>,
    pub cursor: usize,
    pub statuses: Vec<SubTaskStatus>,
    pub variables: VariableStore,
    pub revision_count: u32,
    pub final_answer: Option<String>,
    #[serde(default)]
    pub aborted: Option<String>,
}

impl PlanState {
    pub fn new(task: &Task, subtasks: Vec<SubTask>) -> Result<PlanState, PlanError> {
        let variables = VariableStore::from_vars(task.initial_context.iter().cloned())?;
        let available: BTreeSet<String> = variables.names().map(str::to_string).collect();
        validate_plan(&subtasks, &available)?;
        let n = subtasks.len();
        Ok(PlanState {
            task_id: task.id.clone(),
            subtasks,
            cursor: 0,
            statuses: vec![SubTaskStatus::Pending; n],
            variables,
            revision_count: 0,
            final_answer: None,
            aborted: None,
        })
    }

    pub fn is_terminal(&self) -> bool {
        self.final_answer.is_some() || self.aborted.is_some()
    }

    pub fn all_resolved(&self) -> bool {
        self.statuses.iter().all(|s| s.is_resolved())
    }

    pub fn any_failed(&self) -> bool {
        self.statuses.contains(&SubTaskStatus::Failed)
    }

    fn index_of(&self, id: &str) -> Option<usize> {
        self.subtasks.iter().position(|s| s.id == id)
    }

    fn runnable(&self, st: &SubTask) -> bool {
        st.store_inputs().all(|c| self.variables.contains(c))
    }

    /// Lowest-index pending sub-task whose inputs are bound; loop templates
    /// are expanded in place when reached.
    pub fn next_step(&mut self) -> Result<Dispatch, PlanError> {
        if self.is_terminal() {
            return Err(PlanError::Terminal);
        }
        loop {
            let candidate = (0..self.subtasks.len()).find(|&i| {
                self.statuses[i] == SubTaskStatus::Pending && self.runnable(&self.subtasks[i])
            });
            let Some(index) = candidate else {
                if self.all_resolved() {
                    return Ok(Dispatch::Conclude);
                }
                return Err(PlanError::Deadlock);
            };
            if self.subtasks[index].is_loop_template() {
                let template = self.subtasks[index].clone();
                let list_name = &template.loop_binding.as_ref().unwrap().list_var;
                let list_var = self.variables.get(list_name).cloned().expect("runnable");
                let instances = expand_loop(&template, &list_var)?;
                if instances.is_empty() {
                    for name in &template.produces {
                        self.variables
                            .bind(Variable::new(name.clone(), Value::Array(Vec::new()), template.id.clone()))?;
                    }
                    self.statuses[index] = SubTaskStatus::Succeeded;
                } else {
                    let n = instances.len();
                    self.subtasks.splice(index..=index, instances);
                    self.statuses
                        .splice(index..=index, std::iter::repeat_n(SubTaskStatus::Pending, n));
                }
                continue;
            }
            let st = &self.subtasks[index];
            let mut inputs = self.variables.view(st.store_inputs());
            if let Some(LoopBinding {
                alias,
                element: Some((_, value)),
                ..
            }) = &st.loop_binding
            {
                inputs.bind(Variable::new(alias.clone(), value.clone(), st.id.clone()))?;
            }
            self.statuses[index] = SubTaskStatus::Running;
            self.cursor = index;
            return Ok(Dispatch::Run { index, inputs });
        }
    }

    /// Merges a finished sub-task's outputs and updates its status.
    pub fn record_result(&mut self, result: &SubTaskResult) -> Result<(), PlanError> {
        let index = self
            .index_of(&result.subtask_id)
            .ok_or_else(|| PlanError::UnknownSubtask(result.subtask_id.clone()))?;
        if self.statuses[index] != SubTaskStatus::Running {
            return Err(PlanError::NotRunning(result.subtask_id.clone()));
        }
        if !result.is_success() {
            self.statuses[index] = SubTaskStatus::Failed;
            self.cursor = index + 1;
            return Ok(());
        }
        let st = self.subtasks[index].clone();
        for v in &result.produced {
            if !st.produces.contains(&v.name) {
                return Err(PlanError::Validation(format!(
                    "sub-task `{}` produced undeclared `{}`",
                    st.id, v.name
                )));
            }
        }
        // Check every binding before mutating so a collision leaves the store intact.
        for v in &result.produced {
            if let Some(existing) = self.variables.get(&v.name) {
                if existing.producer != st.id || existing.value != v.value {
                    return Err(PlanError::Variable(VariableError::Collision {
                        name: v.name.clone(),
                        existing: existing.producer.clone(),
                        producer: st.id.clone(),
                    }));
                }
            }
        }
        for v in &result.produced {
            self.variables.bind(Variable::new(v.name.clone(), v.value.clone(), st.id.clone()))?;
        }
        self.statuses[index] = SubTaskStatus::Succeeded;
        self.cursor = index + 1;
        self.aggregate_loop(&st)?;
        Ok(())
    }

    /// Once every instance of a loop succeeded, binds each output's values as a
    /// list under the unsuffixed name.
    fn aggregate_loop(&mut self, finished: &SubTask) -> Result<(), PlanError> {
        let Some(LoopBinding {
            template: Some(template),
            ..
        }) = &finished.loop_binding
        else {
            return Ok(());
        };
        let members: Vec<usize> = (0..self.subtasks.len())
            .filter(|&i| {
                self.subtasks[i]
                    .loop_binding
                    .as_ref()
                    .and_then(|b| b.template.as_ref())
                    == Some(template)
            })
            .collect();
        if members.iter().any(|&i| self.statuses[i] != SubTaskStatus::Succeeded) {
            return Ok(());
        }
        let bases = finished.for_execution().produces;
        for (k, base) in bases.iter().enumerate() {
            let values: Vec<Value> = members
                .iter()
                .map(|&i| {
                    let name = &self.subtasks[i].produces[k];
                    self.variables.value(name).cloned().unwrap_or(Value::Null)
                })
                .collect();
            self.variables
                .bind(Variable::new(base.clone(), Value::Array(values), template.clone()))?;
        }
        Ok(())
    }

    /// Appends recovery sub-tasks. Ids that clash with existing ones are suffixed.
    pub fn append_subtasks(&mut self, mut extra: Vec<SubTask>) -> Result<(), PlanError> {
        let taken: BTreeSet<String> = self.subtasks.iter().map(|s| s.id.clone()).collect();
        for st in &mut extra {
            if taken.contains(&st.id) {
                st.id = format!("{}_r{}", st.id, self.revision_count + 1);
            }
        }
        let mut available: BTreeSet<String> = self.variables.names().map(str::to_string).collect();
        // Outputs of still-pending sub-tasks may feed the new ones.
        for (st, status) in self.subtasks.iter().zip(&self.statuses) {
            if *status == SubTaskStatus::Pending {
                available.extend(st.produces.iter().cloned());
            }
        }
        validate_plan(&extra, &available)?;
        let all_ids: BTreeSet<&str> = self.subtasks.iter().chain(&extra).map(|s| s.id.as_str()).collect();
        if all_ids.len() != self.subtasks.len() + extra.len() {
            return Err(PlanError::Validation("replan reuses sub-task ids".into()));
        }
        self.statuses.extend(std::iter::repeat_n(SubTaskStatus::Pending, extra.len()));
        self.subtasks.extend(extra);
        self.revision_count += 1;
        Ok(())
    }

    /// Marks everything unfinished as skipped; called on terminal transitions.
    pub fn skip_remaining(&mut self) {
        for s in &mut self.statuses {
            if !s.is_resolved() {
                *s = SubTaskStatus::Skipped;
            }
        }
    }

    pub fn complete(&mut self, answer: String) {
        self.skip_remaining();
        self.final_answer = Some(answer);
        self.cursor = self.subtasks.len();
    }

    pub fn abort(&mut self, reason: String) {
        self.skip_remaining();
        self.aborted = Some(reason);
        self.cursor = self.subtasks.len();
    }
}

/// One instance per list element, in order. Output names gain an `_{index}` suffix.
pub fn expand_loop(template: &SubTask, list_var: &Variable) -> Result<Vec<SubTask>, PlanError> {
    let binding = template
        .loop_binding
        .as_ref()
        .ok_or_else(|| PlanError::Validation(format!("`{}` is not a loop", template.id)))?;
    if binding.list_var != list_var.name {
        return Err(PlanError::Validation(format!(
            "loop `{}` iterates `{}`, not `{}`",
            template.id, binding.list_var, list_var.name
        )));
    }
    let Value::Array(items) = &list_var.value else {
        return Err(PlanError::NotAList(list_var.name.clone()));
    };
    Ok(items
        .iter()
        .enumerate()
        .map(|(i, item)| SubTask {
            id: format!("{}_{i}", template.id),
            goal: template.goal.clone(),
            executor: template.executor,
            consumes: template.consumes.clone(),
            produces: template.produces.iter().map(|p| format!("{p}_{i}")).collect(),
            loop_binding: Some(LoopBinding {
                list_var: binding.list_var.clone(),
                alias: binding.alias.clone(),
                element: Some((i, item.clone())),
                template: Some(template.id.clone()),
            }),
        })
        .collect())
}
