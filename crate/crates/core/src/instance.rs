//! A complete BLM instance: context, answer set, provenance.

use serde::{Deserialize, Serialize};

use crate::answers::AnswerSet;
use crate::augment::AugmentationRecord;
use crate::grammar::PhenomenonGrammar;
use crate::realize::ContextSequence;
use crate::solver::{verify_unique, Solution, VerifyFailure};
use crate::template::TemplateMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlmInstance {
    pub id: String,
    pub seed: Option<u64>,
    pub template: Option<TemplateMatrix>,
    pub context: ContextSequence,
    pub answers: AnswerSet,
    pub augmentation: Option<AugmentationRecord>,
}

impl BlmInstance {
    pub fn verify(&self, g: &PhenomenonGrammar) -> Result<Solution, VerifyFailure> {
        verify_unique(&self.context, &self.answers, g)
    }
}
