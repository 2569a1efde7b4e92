use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{ConsentError, ContextTag, Effect, RecipientClass, TransferRequest};
use crate::telemetry::Category;

/// Effect for one (category, recipient class) cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticRule {
    pub category: Category,
    pub recipient: RecipientClass,
    pub effect: Effect,
}

/// Overrides static rules when every present field matches. Lower priority wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRule {
    pub priority: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipient: Option<RecipientClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<ContextTag>,
    pub effect: Effect,
}

impl ContextRule {
    fn matches(&self, recipient: RecipientClass, category: Category, context: ContextTag) -> bool {
        self.recipient.is_none_or(|r| r == recipient)
            && self.category.is_none_or(|c| c == category)
            && self.context.is_none_or(|c| c == context)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentPolicy {
    pub user_id: String,
    #[serde(default)]
    pub version: u64,
    #[serde(default)]
    pub rules: Vec<StaticRule>,
    #[serde(default)]
    pub context_rules: Vec<ContextRule>,
}

impl ConsentPolicy {
    /// No rules at all: everything is denied.
    pub fn empty(user_id: impl Into<String>) -> Self {
        ConsentPolicy { user_id: user_id.into(), version: 0, rules: Vec::new(), context_rules: Vec::new() }
    }

    /// A typical starting point: self allowed, clinicians ask, researchers ask,
    /// insurers denied; emergencies let clinicians through.
    pub fn example_emergency_allows(user_id: impl Into<String>) -> Self {
        let mut p = ConsentPolicy::empty(user_id);
        for category in Category::KNOWN {
            for recipient in RecipientClass::ALL {
                let effect = match recipient {
                    RecipientClass::SelfAccess => Effect::Allow,
                    RecipientClass::Clinician | RecipientClass::Researcher => Effect::AskUser,
                    RecipientClass::Insurer => Effect::Deny,
                };
                p.rules.push(StaticRule { category, recipient, effect });
            }
        }
        p.context_rules.push(ContextRule {
            priority: 1,
            recipient: Some(RecipientClass::Clinician),
            category: None,
            context: Some(ContextTag::Emergency),
            effect: Effect::Allow,
        });
        p
    }

    /// Same grid, but an emergency context denies everyone except the user.
    pub fn example_emergency_restricts(user_id: impl Into<String>) -> Self {
        let mut p = ConsentPolicy::example_emergency_allows(user_id);
        p.context_rules = vec![
            ContextRule {
                priority: 1,
                recipient: Some(RecipientClass::SelfAccess),
                category: None,
                context: Some(ContextTag::Emergency),
                effect: Effect::Allow,
            },
            ContextRule { priority: 2, recipient: None, category: None, context: Some(ContextTag::Emergency), effect: Effect::Deny },
        ];
        p
    }

    pub fn validate(&self) -> Result<(), ConsentError> {
        let mut cells = HashSet::new();
        for r in &self.rules {
            if r.category == Category::Unknown {
                return Err(ConsentError::InvalidPolicy("rule names an unknown category".into()));
            }
            if !cells.insert((r.category, r.recipient)) {
                return Err(ConsentError::InvalidPolicy(format!(
                    "duplicate rule for ({}, {})",
                    r.category, r.recipient
                )));
            }
        }
        let mut priorities = HashSet::new();
        for r in &self.context_rules {
            if !priorities.insert(r.priority) {
                return Err(ConsentError::InvalidPolicy(format!("duplicate context-rule priority {}", r.priority)));
            }
        }
        Ok(())
    }

    /// True when rules and context rules equal `other`'s (version ignored).
    pub fn same_rules(&self, other: &ConsentPolicy) -> bool {
        self.rules == other.rules && self.context_rules == other.context_rules
    }

    fn effect_for(&self, recipient: RecipientClass, category: Category, context: ContextTag) -> (Effect, String) {
        if category == Category::Unknown {
            return (Effect::Deny, "unknown data category".into());
        }
        let mut ordered: Vec<&ContextRule> = self.context_rules.iter().collect();
        ordered.sort_by_key(|r| r.priority);
        if let Some(r) = ordered.into_iter().find(|r| r.matches(recipient, category, context)) {
            return (r.effect, format!("context rule priority {} for {category}", r.priority));
        }
        if let Some(r) = self.rules.iter().find(|r| r.category == category && r.recipient == recipient) {
            return (r.effect, format!("static rule ({category}, {recipient})"));
        }
        (Effect::Deny, format!("no rule for ({category}, {recipient}); default deny"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluation {
    pub effect: Effect,
    pub reason: String,
}

/// Evaluate every requested category and combine: any deny denies, otherwise
/// any ask asks, otherwise allow. A request with no categories is denied.
pub fn evaluate(request: &TransferRequest, policy: &ConsentPolicy) -> Evaluation {
    if request.categories.is_empty() {
        return Evaluation { effect: Effect::Deny, reason: "request names no categories".into() };
    }
    let results: Vec<(Effect, String)> = request
        .categories
        .iter()
        .map(|&c| policy.effect_for(request.recipient, c, request.context))
        .collect();
    for wanted in [Effect::Deny, Effect::AskUser] {
        if let Some((e, reason)) = results.iter().find(|(e, _)| *e == wanted) {
            return Evaluation { effect: *e, reason: reason.clone() };
        }
    }
    let reason = results.into_iter().map(|(_, r)| r).collect::<Vec<_>>().join("; ");
    Evaluation { effect: Effect::Allow, reason }
}
