//! Polling resource for long-running operations.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::error::ApiError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Job {
    Running,
    Done { result: Value },
    Failed { error: ApiError },
}

#[derive(Default)]
pub struct Jobs {
    jobs: Mutex<HashMap<String, Job>>,
}

impl Jobs {
    pub fn start(&self) -> String {
        let id = uuid::Uuid::new_v4().to_string();
        self.jobs.lock().unwrap().insert(id.clone(), Job::Running);
        id
    }

    pub fn finish(&self, id: &str, outcome: Result<Value, ApiError>) {
        let job = match outcome {
            Ok(result) => Job::Done { result },
            Err(error) => Job::Failed { error },
        };
        self.jobs.lock().unwrap().insert(id.to_string(), job);
    }

    pub fn get(&self, id: &str) -> Option<Job> {
        self.jobs.lock().unwrap().get(id).cloned()
    }
}
