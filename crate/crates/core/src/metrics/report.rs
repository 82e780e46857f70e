use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Resolved,
    Unresolved,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Resolved => "resolved",
            Outcome::Unresolved => "unresolved",
        }
    }
}

/// Final state of one repair task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: String,
    pub outcome: Outcome,
    /// Rounds used, counting from 1.
    pub iterations: u32,
}

impl TaskOutcome {
    pub fn new(task_id: impl Into<String>, outcome: Outcome, iterations: u32) -> Self {
        TaskOutcome { task_id: task_id.into(), outcome, iterations }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub resolved: usize,
    pub pass_at_1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rendering_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_ssim: Option<f64>,
    pub per_task: Vec<TaskOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("cannot score an empty list of outcomes")]
pub struct NoOutcomes;

pub fn pass_at_1(outcomes: &[TaskOutcome]) -> Result<EvalReport, NoOutcomes> {
    if outcomes.is_empty() {
        return Err(NoOutcomes);
    }
    let resolved = outcomes.iter().filter(|o| o.outcome == Outcome::Resolved).count();
    Ok(EvalReport {
        total: outcomes.len(),
        resolved,
        pass_at_1: resolved as f64 / outcomes.len() as f64,
        rendering_accuracy: None,
        mean_ssim: None,
        per_task: outcomes.to_vec(),
    })
}

impl EvalReport {
    /// Per-task rows followed by a `TOTAL` row holding resolved/total.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut write = |row: [&str; 3]| w.write_record(row).expect("writing to memory");
        write(["task_id", "outcome", "iterations"]);
        for t in &self.per_task {
            write([&t.task_id, t.outcome.as_str(), &t.iterations.to_string()]);
        }
        write(["TOTAL", &format!("{}/{}", self.resolved, self.total), &format!("{:.4}", self.pass_at_1)]);
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv of utf-8 fields")
    }
}
