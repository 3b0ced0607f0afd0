use serde::{Deserialize, Serialize};

use super::{NUM_REPETITIONS, NUM_SUBJECTS, WITHIN_SUBJECT_MAX};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Pretrain,
    Finetune,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Pretrain => "pretrain",
            Split::Finetune => "finetune",
            Split::Test => "test",
        }
    }
}

/// Subjects seen during pretraining (`within`) versus held out (`cross`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectGroup {
    Within,
    Cross,
}

impl SubjectGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            SubjectGroup::Within => "within",
            SubjectGroup::Cross => "cross",
        }
    }
}

pub fn subject_group(subject: u32) -> SubjectGroup {
    if subject <= WITHIN_SUBJECT_MAX {
        SubjectGroup::Within
    } else {
        SubjectGroup::Cross
    }
}

/// Repetitions 2 and 5 are test data for everyone; repetitions 1, 3, 4 pretrain subjects
/// 1-25; repetition 6 (and 1, 3, 4 for subjects 26-40) is finetuning data.
pub fn assign_split(subject: u32, repetition: u8) -> Result<Split> {
    if !(1..=NUM_SUBJECTS).contains(&subject) {
        return Err(Error::Internal(format!("subject {subject} outside 1..={NUM_SUBJECTS}")));
    }
    if !(1..=NUM_REPETITIONS).contains(&repetition) {
        return Err(Error::Internal(format!(
            "repetition {repetition} cannot be split (rest windows are discarded earlier)"
        )));
    }
    Ok(match (subject_group(subject), repetition) {
        (_, 2 | 5) => Split::Test,
        (SubjectGroup::Within, 1 | 3 | 4) => Split::Pretrain,
        _ => Split::Finetune,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_examples() {
        assert_eq!(assign_split(3, 2).unwrap(), Split::Test);
        assert_eq!(assign_split(10, 6).unwrap(), Split::Finetune);
        assert_eq!(assign_split(30, 3).unwrap(), Split::Finetune);
        assert_eq!(assign_split(25, 4).unwrap(), Split::Pretrain);
        assert_eq!(assign_split(26, 4).unwrap(), Split::Finetune);
    }

    #[test]
    fn rest_repetition_is_internal_error() {
        assert!(matches!(assign_split(1, 0), Err(Error::Internal(_))));
        assert!(assign_split(0, 1).is_err());
        assert!(assign_split(41, 1).is_err());
    }
}
