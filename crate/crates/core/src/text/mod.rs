//! Text-side processing: instruction templates and tokenization.

pub mod instruction;
pub mod tokenizer;

pub use instruction::{apply_instruction, parse_template_file, InstructionTemplate, TemplateRegistry};
pub use tokenizer::{build_vocab, detokenize, tokenize, Vocab};
