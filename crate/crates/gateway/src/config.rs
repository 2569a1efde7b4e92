//! Scenario configuration: one JSON document, any field overridable by a
//! dotted path such as `stripe.k=3` or `devices.0.seed=9`.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use petwear_core::consent::{ConsentPolicy, ContextTag, RecipientClass, DEFAULT_REQUEST_TTL_MS};
use petwear_core::dataplane::{check_params, NodeFault, CODEC_BROTLI, CODEC_NONE, DEFAULT_K, DEFAULT_M};
use petwear_core::dp::TierMap;
use petwear_core::he::Preset;
use petwear_core::ledger::Decision;
use petwear_core::telemetry::{Category, DeviceProfile};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{GatewayError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Simulated seconds of device output.
    pub duration_s: u64,
    pub devices: Vec<DeviceProfile>,
    pub he_preset: String,
    pub mpc_parties: usize,
    pub codec: u8,
    pub dp: DpConfig,
    pub consent: ConsentConfig,
    pub stripe: StripeConfig,
    pub storage: StorageConfig,
    pub requests: Vec<ScriptedRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpConfig {
    pub budget_per_user: f64,
    pub tiers: TierMap,
    /// Per-user ε preference in [0.1, 1.0].
    pub preferences: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyTemplate {
    DenyAll,
    EmergencyAllows,
    EmergencyRestricts,
}

impl PolicyTemplate {
    pub fn build(self, user: &str) -> ConsentPolicy {
        match self {
            PolicyTemplate::DenyAll => ConsentPolicy::empty(user),
            PolicyTemplate::EmergencyAllows => ConsentPolicy::example_emergency_allows(user),
            PolicyTemplate::EmergencyRestricts => ConsentPolicy::example_emergency_restricts(user),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsentConfig {
    pub ttl_ms: i64,
    /// Applied to every device owner without an explicit policy.
    pub default_policy: PolicyTemplate,
    pub policies: Vec<ConsentPolicy>,
    /// Revocation tree depth; each user can hold `2^depth` recipients.
    pub tree_depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StripeConfig {
    pub k: usize,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub node: usize,
    #[serde(flatten)]
    pub fault: NodeFault,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StorageConfig {
    pub nodes: usize,
    /// Faults applied after ingestion, before any transfer request runs.
    pub faults: Vec<FaultPlan>,
}

/// A transfer request replayed by `run`, optionally followed by the user's
/// answer and a release.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedRequest {
    pub requester: String,
    pub recipient: RecipientClass,
    pub user_id: String,
    pub categories: Vec<Category>,
    #[serde(default = "routine")]
    pub context: ContextTag,
    #[serde(default)]
    pub user_decision: Option<Decision>,
    #[serde(default)]
    pub release: bool,
}

fn routine() -> ContextTag {
    ContextTag::Routine
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 7,
            duration_s: 64,
            devices: (0..2).map(|i| DeviceProfile::typical(format!("device-{i:03}"), format!("user-{i:03}"), i)).collect(),
            he_preset: Preset::ToyWide.name().to_string(),
            mpc_parties: 3,
            codec: CODEC_BROTLI,
            dp: DpConfig::default(),
            consent: ConsentConfig::default(),
            stripe: StripeConfig::default(),
            storage: StorageConfig::default(),
            requests: Vec::new(),
        }
    }
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig { budget_per_user: 5.0, tiers: TierMap::default(), preferences: BTreeMap::new() }
    }
}

impl Default for ConsentConfig {
    fn default() -> Self {
        ConsentConfig {
            ttl_ms: DEFAULT_REQUEST_TTL_MS,
            default_policy: PolicyTemplate::EmergencyAllows,
            policies: Vec::new(),
            tree_depth: 4,
        }
    }
}

impl Default for StripeConfig {
    fn default() -> Self {
        StripeConfig { k: DEFAULT_K, m: DEFAULT_M }
    }
}

impl Default for StorageConfig {
    fn default() -> Self {
        StorageConfig { nodes: 6, faults: Vec::new() }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ScenarioConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(&self) -> Result<Preset> {
        Preset::from_name(&self.he_preset)
            .ok_or_else(|| GatewayError::Config(format!("unknown HE preset {}", self.he_preset)))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GatewayError::Config(m));
        self.preset()?;
        if self.duration_s == 0 {
            return bad("duration_s must be positive".into());
        }
        if self.devices.is_empty() {
            return bad("at least one device is required".into());
        }
        let mut ids = HashSet::new();
        for d in &self.devices {
            d.validate()?;
            if !ids.insert(&d.device_id) {
                return bad(format!("duplicate device id {}", d.device_id));
            }
        }
        if self.mpc_parties < 2 {
            return bad("mpc_parties must be at least 2".into());
        }
        if ![CODEC_NONE, CODEC_BROTLI].contains(&self.codec) {
            return bad(format!("unknown codec {}", self.codec));
        }
        if !(self.dp.budget_per_user >= 0.0 && self.dp.budget_per_user.is_finite()) {
            return bad("dp.budget_per_user must be non-negative".into());
        }
        check_params(self.stripe.k, self.stripe.m)?;
        if self.storage.nodes < self.stripe.k + self.stripe.m {
            return bad(format!("{} nodes cannot hold k + m = {} chunks", self.storage.nodes, self.stripe.k + self.stripe.m));
        }
        if let Some(f) = self.storage.faults.iter().find(|f| f.node >= self.storage.nodes) {
            return bad(format!("fault plan names node {} of {}", f.node, self.storage.nodes));
        }
        if !(1..=16).contains(&self.consent.tree_depth) {
            return bad("consent.tree_depth must be in 1..=16".into());
        }
        for p in &self.consent.policies {
            p.validate()?;
        }
        Ok(())
    }

    /// Apply `path=value` overrides. Values parse as JSON when they can and
    /// are taken as strings otherwise.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[(S, S)]) -> Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        for (path, raw) in overrides {
            let value = serde_json::from_str(raw.as_ref()).unwrap_or_else(|_| Value::String(raw.as_ref().to_string()));
            set_path(&mut doc, path.as_ref(), value)?;
        }
        let cfg: ScenarioConfig = serde_json::from_value(doc)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let unknown = || GatewayError::Config(format!("unknown config key {path}"));
    let mut cur = doc;
    for part in path.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(part).ok_or_else(unknown)?,
            Value::Array(items) => {
                let i: usize = part.parse().map_err(|_| unknown())?;
                items.get_mut(i).ok_or_else(unknown)?
            }
            _ => return Err(unknown()),
        };
    }
    *cur = value;
    Ok(())
}

/// Split CLI words such as `--stripe.k 3` or `--stripe.k=3` into pairs.
pub fn parse_override_args(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| GatewayError::Config(format!("expected --dotted.key, got {arg}")))?;
        match key.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it.next().ok_or_else(|| GatewayError::Config(format!("missing value for --{key}")))?;
                out.push((key.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}
