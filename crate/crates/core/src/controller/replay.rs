use std::collections::HashMap;

use super::{Controller, ControllerError, ControllerRequest};
use crate::dataset::InstructionRecord;
use crate::grammar::RoutedResponse;

/// Returns the gold response recorded for each corpus entry.
///
/// Lookup is by record id when the request carries one, otherwise by exact
/// instruction text.
#[derive(Debug, Clone, Default)]
pub struct ReplayController {
    by_id: HashMap<String, RoutedResponse>,
    by_instruction: HashMap<String, RoutedResponse>,
}

impl ReplayController {
    /// Records are validated on load, so their gold responses always parse.
    pub fn new<'a>(records: impl IntoIterator<Item = &'a InstructionRecord>) -> ReplayController {
        let mut replay = ReplayController::default();
        for record in records {
            let resp = record.gold().clone();
            replay.by_instruction.entry(record.instruction.clone()).or_insert_with(|| resp.clone());
            replay.by_id.insert(record.id.clone(), resp);
        }
        replay
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

impl Controller for ReplayController {
    fn route(&self, request: &ControllerRequest) -> Result<RoutedResponse, ControllerError> {
        request.validate()?;
        let hit = match &request.record_id {
            Some(id) => self.by_id.get(id).ok_or_else(|| ControllerError::UnknownRecord(id.clone())),
            None => self
                .by_instruction
                .get(&request.instruction)
                .ok_or_else(|| ControllerError::UnknownRecord(format!("instruction {:?}", request.instruction))),
        };
        hit.cloned()
    }

    fn name(&self) -> &str {
        "replay"
    }
}
