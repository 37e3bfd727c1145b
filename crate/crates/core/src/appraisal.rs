// SPDX-License-Identifier: Apache-2.0

//! Claim appraisal against reference values.
//!
//! A policy is an ordered list of rules. Each rule reads one claim by path,
//! compares it with one reference value, and reports into one trust
//! category. Every rule is evaluated; a category with any failed rule is
//! contraindicated, a category whose rules all pass is affirming, and a
//! category without rules stays at `none`. The overall status is the worst
//! tier across categories.
//!
//! Policies are selected by the request's policy id only. The rule language
//! has no conditionals, so claims can never steer which rules apply.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trustmee_abi::cbor::{self, Map, Value};

use crate::identity::{ComponentHash, ComponentIdentity, SignerKey};

pub const PATH_COMPONENT_HASH: &str = "/component/hash";
pub const PATH_COMPONENT_SIGNER: &str = "/component/signer";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    InstanceIdentity,
    Executables,
    Hardware,
    Configuration,
}

impl Category {
    pub const ALL: [Category; 4] =
        [Category::InstanceIdentity, Category::Executables, Category::Hardware, Category::Configuration];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::InstanceIdentity => "instance_identity",
            Category::Executables => "executables",
            Category::Hardware => "hardware",
            Category::Configuration => "configuration",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Category::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleOp {
    Eq,
    InSet,
    Gte,
    Present,
}

impl RuleOp {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleOp::Eq => "eq",
            RuleOp::InSet => "in_set",
            RuleOp::Gte => "gte",
            RuleOp::Present => "present",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [RuleOp::Eq, RuleOp::InSet, RuleOp::Gte, RuleOp::Present].into_iter().find(|o| o.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub claim_path: String,
    pub op: RuleOp,
    /// Unused by `present`.
    #[serde(default)]
    pub reference_key: String,
    pub category: Category,
}

impl Rule {
    pub fn new(claim_path: impl Into<String>, op: RuleOp, reference_key: impl Into<String>, category: Category) -> Self {
        Rule { claim_path: claim_path.into(), op, reference_key: reference_key.into(), category }
    }

    fn pins_component(&self) -> bool {
        matches!(self.claim_path.as_str(), PATH_COMPONENT_HASH | PATH_COMPONENT_SIGNER)
            && matches!(self.op, RuleOp::Eq | RuleOp::InSet)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppraisalPolicy {
    pub policy_id: String,
    pub rules: Vec<Rule>,
}

impl AppraisalPolicy {
    pub fn from_toml_str(text: &str) -> Result<Self, PolicyError> {
        toml::from_str(text).map_err(|e| PolicyError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("policy serializes")
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        Self::from_toml_str(&std::fs::read_to_string(path).map_err(|e| PolicyError::Parse(e.to_string()))?)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("cannot parse policy: {0}")]
    Parse(String),
    #[error("validation failed: {0}")]
    ValidationFailed(String),
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("policy pins neither a component hash nor a signer")]
    UnpinnablePolicy,
    #[error("invalid reference value {key:?}: {reason}")]
    InvalidReferenceValue { key: String, reason: String },
}

/// Trust tiers, numbered as in AR4SI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Tier {
    None = 0,
    Affirming = 2,
    Warning = 32,
    Contraindicated = 96,
}

impl Tier {
    pub fn from_code(code: i64) -> Option<Self> {
        Some(match code {
            0 => Tier::None,
            2 => Tier::Affirming,
            32 => Tier::Warning,
            96 => Tier::Contraindicated,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrustVector {
    tiers: BTreeMap<Category, Tier>,
}

impl TrustVector {
    pub fn from_outcomes(outcomes: &[RuleOutcome]) -> Self {
        let mut tiers: BTreeMap<Category, Tier> = Category::ALL.iter().map(|c| (*c, Tier::None)).collect();
        for o in outcomes {
            let t = tiers.get_mut(&o.rule.category).expect("all categories present");
            *t = match (o.passed, *t) {
                (false, _) | (_, Tier::Contraindicated) => Tier::Contraindicated,
                (true, _) => Tier::Affirming,
            };
        }
        TrustVector { tiers }
    }

    pub fn tier(&self, category: Category) -> Tier {
        self.tiers[&category]
    }

    /// Worst tier across categories.
    pub fn overall(&self) -> Tier {
        self.tiers.values().copied().max().unwrap_or(Tier::None)
    }

    pub fn to_value(&self) -> Value {
        Value::Map(self.tiers.iter().map(|(c, t)| (c.as_str().to_owned(), Value::Int(*t as i64))).collect())
    }

    pub fn from_value(v: &Value) -> Option<Self> {
        let m = v.as_map()?;
        if m.len() != Category::ALL.len() {
            return None;
        }
        let tiers = m
            .iter()
            .map(|(k, v)| Some((Category::parse(k)?, Tier::from_code(v.as_int()?)?)))
            .collect::<Option<_>>()?;
        Some(TrustVector { tiers })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleOutcome {
    pub rule: Rule,
    pub passed: bool,
    pub detail: String,
}

impl RuleOutcome {
    pub fn to_value(&self) -> Value {
        cbor::map([
            ("path", Value::Text(self.rule.claim_path.clone())),
            ("op", Value::Text(self.rule.op.as_str().into())),
            ("ref", Value::Text(self.rule.reference_key.clone())),
            ("category", Value::Text(self.rule.category.as_str().into())),
            ("passed", Value::Bool(self.passed)),
            ("detail", Value::Text(self.detail.clone())),
        ])
    }

    pub fn from_value(v: &Value) -> Option<Self> {
        let text = |k: &str| v.get(k).and_then(Value::as_text);
        Some(RuleOutcome {
            rule: Rule {
                claim_path: text("path")?.to_owned(),
                op: RuleOp::parse(text("op")?)?,
                reference_key: text("ref")?.to_owned(),
                category: Category::parse(text("category")?)?,
            },
            passed: v.get("passed")?.as_bool()?,
            detail: text("detail")?.to_owned(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Appraisal {
    pub trust_vector: TrustVector,
    pub outcomes: Vec<RuleOutcome>,
}

impl Appraisal {
    /// Adds a failed pseudo-rule, e.g. for a component that reported an
    /// error instead of claims, and recomputes the vector.
    pub fn record_failure(&mut self, claim_path: &str, category: Category, detail: impl Into<String>) {
        self.outcomes.push(RuleOutcome {
            rule: Rule::new(claim_path, RuleOp::Present, "", category),
            passed: false,
            detail: detail.into(),
        });
        self.trust_vector = TrustVector::from_outcomes(&self.outcomes);
    }

    /// Verdict for a request whose policy id is not installed.
    pub fn unknown_policy(policy_id: &str) -> Self {
        let mut a = Appraisal { trust_vector: TrustVector::from_outcomes(&[]), outcomes: Vec::new() };
        a.record_failure("", Category::InstanceIdentity, format!("unknown policy {policy_id:?}"));
        a
    }
}

/// Host-emitted identity claims plus whatever the component reported.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClaimSet {
    pub component: ComponentIdentity,
    pub attester: Map,
}

impl ClaimSet {
    pub fn to_value(&self) -> Value {
        cbor::map([
            (
                "component",
                cbor::map([
                    ("hash", Value::Text(self.component.hash.to_hex())),
                    ("signer", self.component.signer.map(|s| Value::Text(s.to_hex())).unwrap_or(Value::Null)),
                ]),
            ),
            ("attester", Value::Map(self.attester.clone())),
        ])
    }

    pub fn from_value(v: &Value) -> Option<Self> {
        let comp = v.get("component")?;
        let hash = comp.get("hash")?.as_text()?.parse::<ComponentHash>().ok()?;
        let signer = match comp.get("signer")? {
            Value::Null => None,
            s => Some(s.as_text()?.parse::<SignerKey>().ok()?),
        };
        Some(ClaimSet {
            component: ComponentIdentity { hash, signer },
            attester: v.get("attester")?.as_map()?.clone(),
        })
    }
}

/// Reference values by key. A value used with `in_set` is an array.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReferenceValueStore {
    values: HashMap<String, Value>,
}

/// Converts JSON/TOML reference values. Integers must fit `i64`; floats are refused.
pub fn value_from_json(v: &serde_json::Value) -> Result<Value, String> {
    Ok(match v {
        serde_json::Value::Null => Value::Null,
        serde_json::Value::Bool(b) => Value::Bool(*b),
        serde_json::Value::Number(n) => Value::Int(n.as_i64().ok_or_else(|| format!("{n} is not an i64"))?),
        serde_json::Value::String(s) => Value::Text(s.clone()),
        serde_json::Value::Array(a) => Value::Array(a.iter().map(value_from_json).collect::<Result<_, _>>()?),
        serde_json::Value::Object(o) => Value::Map(
            o.iter()
                .map(|(k, v)| Ok((k.clone(), value_from_json(v)?)))
                .collect::<Result<_, String>>()?,
        ),
    })
}

impl ReferenceValueStore {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    pub fn insert(&mut self, key: impl Into<String>, value: Value) {
        self.values.insert(key.into(), value);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Parses a JSON object of `key: value` pairs.
    pub fn parse_json(text: &str) -> Result<Vec<(String, Value)>, PolicyError> {
        let obj: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(text).map_err(|e| PolicyError::Parse(e.to_string()))?;
        Self::pairs(obj)
    }

    /// Parses a TOML table of `key = value` pairs.
    pub fn parse_toml(text: &str) -> Result<Vec<(String, Value)>, PolicyError> {
        let obj: serde_json::Map<String, serde_json::Value> =
            toml::from_str(text).map_err(|e| PolicyError::Parse(e.to_string()))?;
        Self::pairs(obj)
    }

    fn pairs(obj: serde_json::Map<String, serde_json::Value>) -> Result<Vec<(String, Value)>, PolicyError> {
        obj.into_iter()
            .map(|(k, v)| {
                let value = value_from_json(&v)
                    .map_err(|reason| PolicyError::InvalidReferenceValue { key: k.clone(), reason })?;
                Ok((k, value))
            })
            .collect()
    }
}

fn toml_value(v: &Value) -> Option<toml::Value> {
    Some(match v {
        Value::Null => return None,
        Value::Bool(b) => toml::Value::Boolean(*b),
        Value::Int(i) => toml::Value::Integer(*i),
        Value::Text(s) => toml::Value::String(s.clone()),
        Value::Bytes(b) => toml::Value::String(hex::encode(b)),
        Value::Array(a) => toml::Value::Array(a.iter().filter_map(toml_value).collect()),
        Value::Map(m) => toml::Value::Table(m.iter().filter_map(|(k, v)| Some((k.clone(), toml_value(v)?))).collect()),
    })
}

/// Renders reference values in the form [`ReferenceValueStore::parse_toml`]
/// reads. TOML has no byte strings or nulls: bytes become hex text and
/// nulls are dropped.
pub fn reference_values_to_toml<'a>(values: impl IntoIterator<Item = (&'a str, &'a Value)>) -> String {
    let table: toml::map::Map<String, toml::Value> =
        values.into_iter().filter_map(|(k, v)| Some((k.to_owned(), toml_value(v)?))).collect();
    toml::to_string(&table).expect("a TOML table serializes")
}

fn describe(v: &Value) -> String {
    match v {
        Value::Text(s) => format!("{s:?}"),
        Value::Bytes(b) => format!("h'{}'", hex::encode(b)),
        Value::Int(i) => i.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Null => "null".into(),
        Value::Array(a) => format!("[{} items]", a.len()),
        Value::Map(m) => format!("{{{} entries}}", m.len()),
    }
}

fn evaluate_rule(claims: &Value, rule: &Rule, refs: &ReferenceValueStore) -> RuleOutcome {
    let outcome = |passed: bool, detail: String| RuleOutcome { rule: rule.clone(), passed, detail };
    let claim = match claims.pointer(&rule.claim_path) {
        Some(Value::Null) | None => return outcome(false, "claim absent".into()),
        Some(c) => c,
    };
    if rule.op == RuleOp::Present {
        return outcome(true, "claim present".into());
    }
    let Some(reference) = refs.get(&rule.reference_key) else {
        return outcome(false, format!("unknown reference key {:?}", rule.reference_key));
    };
    match rule.op {
        RuleOp::Eq => {
            let ok = claim == reference;
            outcome(ok, if ok { "equal".into() } else { format!("{} != {}", describe(claim), describe(reference)) })
        }
        RuleOp::InSet => match reference {
            Value::Array(set) => {
                let ok = set.contains(claim);
                outcome(ok, if ok { "in set".into() } else { format!("{} not in set", describe(claim)) })
            }
            _ => outcome(false, "reference value is not a set".into()),
        },
        RuleOp::Gte => match (claim, reference) {
            (Value::Int(c), Value::Int(r)) => {
                let ok = c >= r;
                outcome(ok, if ok { format!("{c} >= {r}") } else { format!("{c} < {r}") })
            }
            _ => outcome(false, "gte needs integer claim and reference".into()),
        },
        RuleOp::Present => unreachable!(),
    }
}

/// Evaluates every rule of `policy` against `claims`. Never short-circuits.
pub fn appraise(claims: &ClaimSet, policy: &AppraisalPolicy, refs: &ReferenceValueStore) -> Appraisal {
    let value = claims.to_value();
    let outcomes: Vec<RuleOutcome> = policy.rules.iter().map(|r| evaluate_rule(&value, r, refs)).collect();
    Appraisal { trust_vector: TrustVector::from_outcomes(&outcomes), outcomes }
}

/// Checks the invariants a policy must satisfy before installation.
pub fn validate_policy(policy: &AppraisalPolicy, refs: &ReferenceValueStore) -> Result<(), PolicyError> {
    let fail = |m: String| Err(PolicyError::ValidationFailed(m));
    if policy.policy_id.is_empty() {
        return fail("policy_id must be non-empty".into());
    }
    if !policy.rules.iter().any(Rule::pins_component) {
        return fail(format!(
            "no eq/in_set rule on {PATH_COMPONENT_HASH} or {PATH_COMPONENT_SIGNER} (component pin required)"
        ));
    }
    for (i, rule) in policy.rules.iter().enumerate() {
        if !rule.claim_path.starts_with('/') {
            return fail(format!("rule {i}: claim path {:?} must start with '/'", rule.claim_path));
        }
        if rule.op == RuleOp::Present {
            continue;
        }
        match refs.get(&rule.reference_key) {
            None => return fail(format!("rule {i}: unknown reference key {:?}", rule.reference_key)),
            Some(v) if rule.op == RuleOp::InSet && v.as_array().is_none() => {
                return fail(format!("rule {i}: reference {:?} is not a set", rule.reference_key))
            }
            Some(v) if rule.op == RuleOp::Gte && v.as_int().is_none() => {
                return fail(format!("rule {i}: reference {:?} is not an integer", rule.reference_key))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Immutable set of installed policies and reference values. Installation
/// produces a new snapshot, so an appraisal always sees one consistent state.
#[derive(Clone, Debug, Default)]
pub struct PolicySnapshot {
    policies: HashMap<String, Arc<AppraisalPolicy>>,
    refs: ReferenceValueStore,
}

impl PolicySnapshot {
    pub fn policy(&self, policy_id: &str) -> Result<&Arc<AppraisalPolicy>, PolicyError> {
        self.policies.get(policy_id).ok_or_else(|| PolicyError::UnknownPolicy(policy_id.to_owned()))
    }

    pub fn reference_values(&self) -> &ReferenceValueStore {
        &self.refs
    }

    pub fn policy_ids(&self) -> impl Iterator<Item = &str> {
        self.policies.keys().map(String::as_str)
    }

    /// Validated install; replaces any policy with the same id.
    pub fn with_policy(&self, policy: AppraisalPolicy) -> Result<Self, PolicyError> {
        validate_policy(&policy, &self.refs)?;
        let mut next = self.clone();
        next.policies.insert(policy.policy_id.clone(), Arc::new(policy));
        Ok(next)
    }

    /// Merges reference values. Rejects updates that would break an installed
    /// policy (e.g. replacing a set with a scalar).
    pub fn with_reference_values(&self, values: impl IntoIterator<Item = (String, Value)>) -> Result<Self, PolicyError> {
        let mut next = self.clone();
        for (k, v) in values {
            next.refs.insert(k, v);
        }
        for p in next.policies.values() {
            validate_policy(p, &next.refs)?;
        }
        Ok(next)
    }

    /// Appraises under the policy named `policy_id`; unknown ids fail closed.
    pub fn appraise(&self, policy_id: &str, claims: &ClaimSet) -> Appraisal {
        match self.policy(policy_id) {
            Ok(p) => appraise(claims, p, &self.refs),
            Err(_) => Appraisal::unknown_policy(policy_id),
        }
    }
}

/// Flat-path policy as used before component identity claims existed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegacyPolicy {
    pub policy_id: String,
    #[serde(default)]
    pub rules: Vec<Rule>,
}

/// Which components a migrated policy accepts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ComponentPin {
    pub hashes: Vec<ComponentHash>,
    pub signers: Vec<SignerKey>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MigratedPolicy {
    pub policy: AppraisalPolicy,
    /// Reference values the pin rules refer to.
    pub reference_values: Vec<(String, Value)>,
}

impl fmt::Display for MigratedPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.policy.to_toml_string())
    }
}

pub fn pin_hash_key(policy_id: &str) -> String {
    format!("{policy_id}.component-hash")
}

pub fn pin_signer_key(policy_id: &str) -> String {
    format!("{policy_id}.component-signer")
}

/// Rewrites a legacy policy for nested claims: each claim path `p` becomes
/// `/attester` + `p`, and component pin rules are prepended.
pub fn migrate_policy(legacy: &LegacyPolicy, pin: &ComponentPin) -> Result<MigratedPolicy, PolicyError> {
    if pin.hashes.is_empty() && pin.signers.is_empty() {
        return Err(PolicyError::UnpinnablePolicy);
    }
    let id = &legacy.policy_id;
    let mut rules = Vec::new();
    let mut reference_values = Vec::new();
    if !pin.hashes.is_empty() {
        rules.push(Rule::new(PATH_COMPONENT_HASH, RuleOp::InSet, pin_hash_key(id), Category::InstanceIdentity));
        reference_values.push((
            pin_hash_key(id),
            Value::Array(pin.hashes.iter().map(|h| Value::Text(h.to_hex())).collect()),
        ));
    }
    if !pin.signers.is_empty() {
        rules.push(Rule::new(PATH_COMPONENT_SIGNER, RuleOp::InSet, pin_signer_key(id), Category::InstanceIdentity));
        reference_values.push((
            pin_signer_key(id),
            Value::Array(pin.signers.iter().map(|s| Value::Text(s.to_hex())).collect()),
        ));
    }
    rules.extend(legacy.rules.iter().map(|r| {
        let sep = if r.claim_path.starts_with('/') { "" } else { "/" };
        Rule { claim_path: format!("/attester{sep}{}", r.claim_path), ..r.clone() }
    }));
    Ok(MigratedPolicy { policy: AppraisalPolicy { policy_id: id.clone(), rules }, reference_values })
}
