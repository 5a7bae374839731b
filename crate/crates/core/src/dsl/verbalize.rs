use crate::miner::{CandidateRule, Direction};
use crate::store::{MetaError, MetaTable};

/// Natural-language conditional for a mined rule.
///
/// The first body step becomes the condition over `A` and `B`; the head is
/// restated over `A` with its object reached from `B` through the remaining
/// steps, e.g. `mother <- (father, spouse)` reads
/// "If the father of A is B, then the mother of A is the spouse of B".
pub fn verbalize_rule(rule: &CandidateRule, meta: &MetaTable) -> Result<String, MetaError> {
    let head = meta.get(&rule.head)?;
    let Some((first, rest)) = rule.body.split_first() else {
        return Ok(format!("{} holds", head.clause("A", "B")));
    };
    let first_meta = meta.get(&first.relation)?;
    let condition = match first.direction {
        Direction::Forward => first_meta.clause("A", "B"),
        Direction::Inverse => first_meta.clause("B", "A"),
    };
    let mut object = "B".to_string();
    for step in rest {
        let m = meta.get(&step.relation)?;
        object = match step.direction {
            Direction::Forward => m.object_phrase(&object),
            Direction::Inverse => m.inverse_phrase(&object),
        };
    }
    Ok(format!("If {condition}, then {}", head.clause("A", &object)))
}
