//! Blackbird Language Matrix generation: phenomenon grammars, template algebra,
//! realization, answer sets, a reference solver and lexical augmentation.

pub mod answers;
pub mod augment;
pub mod dataset;
pub mod dsl;
pub mod grammar;
pub mod instance;
pub mod lexicon;
pub mod realize;
pub mod seed;
pub mod solver;
pub mod template;

pub use answers::{build_answer_set, AnswerConfig, AnswerSet, ViolationKind, ViolationLabel};
pub use dsl::{parse_phenomenon, serialize_phenomenon, validate, DslError};
pub use grammar::PhenomenonGrammar;
pub use instance::BlmInstance;
pub use realize::{realize_context, ContextSequence, RealizedItem};
pub use solver::{solve, verify_unique};
pub use template::{build_template, Operator, Shape, TemplateMatrix};
