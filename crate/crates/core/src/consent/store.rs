use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{evaluate, ConsentError, ConsentPolicy, ContextTag, Effect, RecipientClass};
use crate::ledger::{AuditEvent, DecidedBy, Decision, EventKind, Ledger};
use crate::telemetry::Category;

/// 24 hours of simulated time.
pub const DEFAULT_REQUEST_TTL_MS: i64 = 24 * 60 * 60 * 1000;

const SYSTEM_ACTOR: &str = "consent-engine";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestState {
    Pending,
    Allowed,
    Denied,
    Expired,
}

impl fmt::Display for RequestState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RequestState::Pending => "pending",
            RequestState::Allowed => "allowed",
            RequestState::Denied => "denied",
            RequestState::Expired => "expired",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewRequest {
    pub requester: String,
    pub recipient: RecipientClass,
    pub user_id: String,
    pub categories: Vec<Category>,
    #[serde(default = "routine")]
    pub context: ContextTag,
}

fn routine() -> ContextTag {
    ContextTag::Routine
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferRequest {
    pub request_id: String,
    pub requester: String,
    pub recipient: RecipientClass,
    pub user_id: String,
    pub categories: Vec<Category>,
    pub context: ContextTag,
    pub state: RequestState,
    pub created_at: i64,
    pub expires_at: i64,
    pub decided_at: Option<i64>,
    pub decided_by: Option<DecidedBy>,
    pub reason: Option<String>,
}

impl TransferRequest {
    pub fn is_allowed(&self) -> bool {
        self.state == RequestState::Allowed
    }
}

struct Requests {
    next_id: u64,
    by_id: BTreeMap<String, TransferRequest>,
}

/// Policies and transfer requests for every user. Policy reads are concurrent;
/// request state changes are serialized so each transition is a single
/// compare-and-set on the state.
pub struct ConsentStore {
    policies: RwLock<HashMap<String, ConsentPolicy>>,
    requests: Mutex<Requests>,
    ttl_ms: i64,
}

impl Default for ConsentStore {
    fn default() -> Self {
        ConsentStore::new(DEFAULT_REQUEST_TTL_MS)
    }
}

impl ConsentStore {
    pub fn new(ttl_ms: i64) -> Self {
        ConsentStore {
            policies: RwLock::new(HashMap::new()),
            requests: Mutex::new(Requests { next_id: 1, by_id: BTreeMap::new() }),
            ttl_ms,
        }
    }

    pub fn ttl_ms(&self) -> i64 {
        self.ttl_ms
    }

    /// Current policy; a user who never stored one gets the empty (deny-all) policy.
    pub fn policy(&self, user_id: &str) -> ConsentPolicy {
        let policies = self.policies.read().expect("policy lock poisoned");
        policies.get(user_id).cloned().unwrap_or_else(|| ConsentPolicy::empty(user_id))
    }

    /// Replace a user's policy. `policy.version` must equal the stored version;
    /// the stored copy gets the next version. Resubmitting identical rules is a
    /// no-op that returns the current policy unchanged.
    pub fn put_policy(&self, policy: ConsentPolicy) -> Result<ConsentPolicy, ConsentError> {
        policy.validate()?;
        if policy.user_id.is_empty() {
            return Err(ConsentError::InvalidPolicy("user_id is required".into()));
        }
        let mut policies = self.policies.write().expect("policy lock poisoned");
        let current = policies.get(&policy.user_id).cloned().unwrap_or_else(|| ConsentPolicy::empty(&policy.user_id));
        if policy.version != current.version {
            return Err(ConsentError::VersionConflict { submitted: policy.version, current: current.version });
        }
        if current.version > 0 && current.same_rules(&policy) {
            return Ok(current);
        }
        let mut stored = policy;
        stored.version = current.version + 1;
        policies.insert(stored.user_id.clone(), stored.clone());
        Ok(stored)
    }

    /// Create a request, log it, and run the policy. Allow and deny outcomes are
    /// decided immediately; ask_user leaves the request pending and logs a
    /// notification.
    pub fn submit(&self, new: NewRequest, now: i64, ledger: &Ledger) -> Result<TransferRequest, ConsentError> {
        if new.requester.is_empty() || new.user_id.is_empty() {
            return Err(ConsentError::InvalidRequest("requester and user_id are required".into()));
        }
        let policy = self.policy(&new.user_id);
        let mut requests = self.requests.lock().expect("request lock poisoned");
        let request_id = format!("req-{:08}", requests.next_id);
        requests.next_id += 1;
        let mut req = TransferRequest {
            request_id: request_id.clone(),
            requester: new.requester,
            recipient: new.recipient,
            user_id: new.user_id,
            categories: new.categories,
            context: new.context,
            state: RequestState::Pending,
            created_at: now,
            expires_at: now.saturating_add(self.ttl_ms),
            decided_at: None,
            decided_by: None,
            reason: None,
        };
        ledger.append(
            AuditEvent::new(EventKind::Requested, &req.user_id, &req.requester, now)
                .with_request(&request_id)
                .with_categories(req.categories.iter().copied())
                .with_detail("recipient", req.recipient.as_str())
                .with_detail("context", format!("{:?}", req.context).to_lowercase()),
        )?;
        let eval = evaluate(&req, &policy);
        req.reason = Some(eval.reason.clone());
        let base = |kind| {
            AuditEvent::new(kind, &req.user_id, SYSTEM_ACTOR, now)
                .with_request(&request_id)
                .with_categories(req.categories.iter().copied())
                .with_detail("policy_version", policy.version.to_string())
        };
        match eval.effect {
            Effect::AskUser => {
                ledger.append(base(EventKind::Notified))?;
            }
            Effect::Allow | Effect::Deny => {
                let decision = if eval.effect == Effect::Allow { Decision::Allow } else { Decision::Deny };
                ledger.append(base(EventKind::Decided).with_decision(decision, DecidedBy::Policy).with_detail("reason", eval.reason))?;
                req.state = state_for(decision);
                req.decided_at = Some(now);
                req.decided_by = Some(DecidedBy::Policy);
            }
        }
        requests.by_id.insert(request_id, req.clone());
        Ok(req)
    }

    /// Apply the user's decision to a pending request. Repeating the decision
    /// already in force is a successful no-op; anything else on a decided or
    /// expired request is a conflict.
    pub fn decide_pending(
        &self,
        request_id: &str,
        decision: Decision,
        actor: &str,
        now: i64,
        ledger: &Ledger,
    ) -> Result<TransferRequest, ConsentError> {
        let mut requests = self.requests.lock().expect("request lock poisoned");
        let req = requests.by_id.get_mut(request_id).ok_or_else(|| ConsentError::NotFound(request_id.to_string()))?;
        if actor != req.user_id {
            return Err(ConsentError::Unauthorized { actor: actor.to_string(), user: req.user_id.clone() });
        }
        if req.state == RequestState::Pending && now >= req.expires_at {
            req.state = RequestState::Expired;
        }
        match req.state {
            RequestState::Pending => {}
            s if s == state_for(decision) => return Ok(req.clone()),
            s => return Err(ConsentError::Conflict { id: request_id.to_string(), state: s }),
        }
        ledger.append(
            AuditEvent::new(EventKind::Decided, &req.user_id, actor, now)
                .with_request(request_id)
                .with_categories(req.categories.iter().copied())
                .with_decision(decision, DecidedBy::User),
        )?;
        req.state = state_for(decision);
        req.decided_at = Some(now);
        req.decided_by = Some(DecidedBy::User);
        Ok(req.clone())
    }

    /// Move every pending request past its TTL to expired; returns those moved.
    pub fn expire(&self, now: i64) -> Vec<TransferRequest> {
        let mut requests = self.requests.lock().expect("request lock poisoned");
        let mut out = Vec::new();
        for req in requests.by_id.values_mut() {
            if req.state == RequestState::Pending && now >= req.expires_at {
                req.state = RequestState::Expired;
                out.push(req.clone());
            }
        }
        out
    }

    /// Pending requests for `user_id` (all users when `None`), oldest first.
    pub fn pending(&self, user_id: Option<&str>, now: i64) -> Vec<TransferRequest> {
        self.expire(now);
        self.list(user_id).into_iter().filter(|r| r.state == RequestState::Pending).collect()
    }

    pub fn list(&self, user_id: Option<&str>) -> Vec<TransferRequest> {
        let requests = self.requests.lock().expect("request lock poisoned");
        requests.by_id.values().filter(|r| user_id.is_none_or(|u| r.user_id == u)).cloned().collect()
    }

    pub fn get(&self, request_id: &str) -> Option<TransferRequest> {
        self.requests.lock().expect("request lock poisoned").by_id.get(request_id).cloned()
    }
}

fn state_for(decision: Decision) -> RequestState {
    match decision {
        Decision::Allow => RequestState::Allowed,
        Decision::Deny => RequestState::Denied,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::Filter;
    use std::sync::Arc;

    fn ask(user: &str) -> NewRequest {
        NewRequest {
            requester: "dr-who".into(),
            recipient: RecipientClass::Clinician,
            user_id: user.into(),
            categories: vec![Category::HeartRate],
            context: ContextTag::Routine,
        }
    }

    fn setup() -> (ConsentStore, Ledger) {
        let store = ConsentStore::default();
        store.put_policy(ConsentPolicy::example_emergency_allows("u1")).unwrap();
        (store, Ledger::in_memory())
    }

    fn kinds(ledger: &Ledger) -> Vec<EventKind> {
        ledger.snapshot().into_iter().map(|b| b.event.kind).collect()
    }

    #[test]
    fn pending_then_allow() {
        let (store, ledger) = setup();
        let req = store.submit(ask("u1"), 10, &ledger).unwrap();
        assert_eq!(req.state, RequestState::Pending);
        assert_eq!(store.pending(Some("u1"), 11).len(), 1);
        let done = store.decide_pending(&req.request_id, Decision::Allow, "u1", 20, &ledger).unwrap();
        assert_eq!(done.state, RequestState::Allowed);
        assert_eq!(done.decided_at, Some(20));
        assert_eq!(kinds(&ledger), vec![EventKind::Requested, EventKind::Notified, EventKind::Decided]);
        assert!(store.pending(Some("u1"), 21).is_empty());
    }

    #[test]
    fn repeat_decision_is_noop() {
        let (store, ledger) = setup();
        let req = store.submit(ask("u1"), 0, &ledger).unwrap();
        store.decide_pending(&req.request_id, Decision::Deny, "u1", 1, &ledger).unwrap();
        let again = store.decide_pending(&req.request_id, Decision::Deny, "u1", 2, &ledger).unwrap();
        assert_eq!(again.state, RequestState::Denied);
        assert_eq!(again.decided_at, Some(1));
        let decided = ledger.query(&Filter { kind: Some(EventKind::Decided), ..Filter::default() });
        assert_eq!(decided.len(), 1);
    }

    #[test]
    fn allow_after_deny_conflicts() {
        let (store, ledger) = setup();
        let req = store.submit(ask("u1"), 0, &ledger).unwrap();
        store.decide_pending(&req.request_id, Decision::Deny, "u1", 1, &ledger).unwrap();
        let err = store.decide_pending(&req.request_id, Decision::Allow, "u1", 2, &ledger).unwrap_err();
        assert!(matches!(err, ConsentError::Conflict { state: RequestState::Denied, .. }));
        assert_eq!(store.get(&req.request_id).unwrap().state, RequestState::Denied);
    }

    #[test]
    fn only_owner_decides() {
        let (store, ledger) = setup();
        let req = store.submit(ask("u1"), 0, &ledger).unwrap();
        let err = store.decide_pending(&req.request_id, Decision::Allow, "dr-who", 1, &ledger).unwrap_err();
        assert!(matches!(err, ConsentError::Unauthorized { .. }));
        assert!(matches!(
            store.decide_pending("req-missing", Decision::Allow, "u1", 1, &ledger),
            Err(ConsentError::NotFound(_))
        ));
    }

    #[test]
    fn ttl_expiry() {
        let store = ConsentStore::new(1000);
        store.put_policy(ConsentPolicy::example_emergency_allows("u1")).unwrap();
        let ledger = Ledger::in_memory();
        let req = store.submit(ask("u1"), 0, &ledger).unwrap();
        assert_eq!(store.pending(Some("u1"), 999).len(), 1);
        assert!(store.pending(Some("u1"), 1000).is_empty());
        let err = store.decide_pending(&req.request_id, Decision::Deny, "u1", 1001, &ledger).unwrap_err();
        assert!(matches!(err, ConsentError::Conflict { state: RequestState::Expired, .. }));
        assert_eq!(ConsentStore::default().ttl_ms(), DEFAULT_REQUEST_TTL_MS);
    }

    #[test]
    fn expiry_without_sweep() {
        let store = ConsentStore::new(1000);
        store.put_policy(ConsentPolicy::example_emergency_allows("u1")).unwrap();
        let ledger = Ledger::in_memory();
        let req = store.submit(ask("u1"), 0, &ledger).unwrap();
        assert!(store.decide_pending(&req.request_id, Decision::Allow, "u1", 5000, &ledger).is_err());
        assert_eq!(store.get(&req.request_id).unwrap().state, RequestState::Expired);
    }

    #[test]
    fn policy_decisions_logged() {
        let (store, ledger) = setup();
        let mut new = ask("u1");
        new.recipient = RecipientClass::Insurer;
        let req = store.submit(new, 0, &ledger).unwrap();
        assert_eq!(req.state, RequestState::Denied);
        assert_eq!(req.decided_by, Some(DecidedBy::Policy));
        let mut new = ask("u1");
        new.context = ContextTag::Emergency;
        assert_eq!(store.submit(new, 0, &ledger).unwrap().state, RequestState::Allowed);
        let unknown_user = store.submit(ask("nobody"), 0, &ledger).unwrap();
        assert_eq!(unknown_user.state, RequestState::Denied);
        assert!(!kinds(&ledger).contains(&EventKind::Notified));
    }

    #[test]
    fn policy_versioning() {
        let store = ConsentStore::default();
        assert_eq!(store.policy("u").version, 0);
        let v1 = store.put_policy(ConsentPolicy::example_emergency_allows("u")).unwrap();
        assert_eq!(v1.version, 1);
        let same = store.put_policy(v1.clone()).unwrap();
        assert_eq!(same.version, 1);
        let mut stale = ConsentPolicy::example_emergency_restricts("u");
        stale.version = 0;
        assert!(matches!(store.put_policy(stale.clone()), Err(ConsentError::VersionConflict { current: 1, .. })));
        stale.version = 1;
        assert_eq!(store.put_policy(stale).unwrap().version, 2);
    }

    #[test]
    fn concurrent_update_and_evaluate() {
        let store = Arc::new(ConsentStore::default());
        let allow = ConsentPolicy::example_emergency_allows("u");
        let deny = ConsentPolicy::example_emergency_restricts("u");
        store.put_policy(allow.clone()).unwrap();
        let writer = {
            let store = Arc::clone(&store);
            std::thread::spawn(move || {
                for i in 0..200 {
                    let mut p = if i % 2 == 0 { deny.clone() } else { allow.clone() };
                    p.version = store.policy("u").version;
                    store.put_policy(p).unwrap();
                }
            })
        };
        let mut last = 0;
        for _ in 0..2000 {
            let p = store.policy("u");
            assert!(p.version >= last);
            last = p.version;
            assert!(p.same_rules(&ConsentPolicy::example_emergency_allows("u")) || p.same_rules(&ConsentPolicy::example_emergency_restricts("u")));
        }
        writer.join().unwrap();
        assert_eq!(store.policy("u").version, 201);
    }
}
