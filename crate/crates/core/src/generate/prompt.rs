use crate::dataset::InstructionRecord;
use crate::error::{Error, Result};

pub const DEFAULT_DIRECTIVE: &str = "Write new examples about transportation safety in exactly the same \
Instruction/Input/Output layout. Each example must ask a different question from the ones above.";

pub const SYSTEM_MESSAGE: &str = "You write instruction-following training data for a transportation safety assistant.";

/// Renders one triple in the block layout shared by prompts and parsed replies.
pub fn render_block(instruction: &str, input: &str, output: &str) -> String {
    format!("Instruction: {instruction}\nInput: {input}\nOutput: {output}\n")
}

/// Few-shot prompt with the first `k` seeds rendered verbatim, then `directive`.
pub fn build_prompt(seeds: &[InstructionRecord], k: usize, directive: &str) -> Result<String> {
    if k < 1 {
        return Err(Error::invalid("at least one in-context example is required"));
    }
    if k > seeds.len() {
        return Err(Error::invalid(format!("asked for {k} examples but only {} seeds exist", seeds.len())));
    }
    let mut prompt = format!("Here are {k} examples of transportation safety instructions with answers.\n\n");
    for s in &seeds[..k] {
        prompt.push_str(&render_block(&s.instruction, &s.input, &s.output));
        prompt.push('\n');
    }
    prompt.push_str(directive);
    prompt.push('\n');
    Ok(prompt)
}
