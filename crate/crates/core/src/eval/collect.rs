//! Queries a chat endpoint for one system's answers to the evaluation items.

use thiserror::Error;

use super::{EvalItem, SystemOutput};
use crate::generate::endpoint::{ChatMessage, ChatRequest, Dispatcher};
use crate::retry::RemoteError;

#[derive(Debug, Error)]
#[error("request for item {item_id} failed after {collected} answer(s): {source}")]
pub struct CollectError {
    pub item_id: String,
    pub collected: usize,
    /// Answers gathered before the failing item, in item order.
    pub partial: Vec<SystemOutput>,
    #[source]
    pub source: RemoteError,
}

/// Sends each item's instruction as the system message and its input as the
/// user message. Answers come back in item order.
pub fn collect_outputs(
    items: &[EvalItem],
    system_name: &str,
    model: &str,
    temperature: f64,
    dispatcher: &Dispatcher,
) -> Result<Vec<SystemOutput>, CollectError> {
    let mut outputs = Vec::with_capacity(items.len());
    let chunk = dispatcher.max_in_flight().max(1);
    for (c, batch) in items.chunks(chunk).enumerate() {
        let requests: Vec<ChatRequest> = batch
            .iter()
            .map(|item| ChatRequest {
                model: model.to_owned(),
                messages: vec![ChatMessage::system(&item.instruction), ChatMessage::user(&item.input)],
                temperature,
            })
            .collect();
        for (item, reply) in batch.iter().zip(dispatcher.dispatch(c * chunk, &requests)) {
            match reply.result {
                Ok(text) => outputs.push(SystemOutput {
                    item_id: item.id.clone(),
                    system_name: system_name.to_owned(),
                    text,
                }),
                Err(source) => {
                    return Err(CollectError {
                        item_id: item.id.clone(),
                        collected: outputs.len(),
                        partial: outputs,
                        source,
                    })
                }
            }
        }
    }
    Ok(outputs)
}
