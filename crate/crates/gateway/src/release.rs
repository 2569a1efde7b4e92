//! Release of stored data to an approved requester.
//!
//! Clinicians and the user get decrypted readings. Researchers and insurers
//! get one Laplace-noised mean per category, computed from a homomorphic sum
//! so individual packets are never decrypted on their behalf.

use std::collections::BTreeMap;

use petwear_core::dataplane::decompress;
use petwear_core::dp::{calibrate_epsilon, release_exact, PrivacyBudget, Query, Release};
use petwear_core::he::{Ciphertext, SecretKey};
use petwear_core::ledger::{AuditEvent, EventKind};
use petwear_core::telemetry::{Category, Metric};
use serde::Serialize;
use zeroize::Zeroize;

use crate::error::{GatewayError, Result};
use crate::pipeline::{PacketRecord, FIXED_POINT_SCALE};
use crate::state::Gateway;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawSeries {
    pub metric: Metric,
    pub first_ms: i64,
    pub last_ms: i64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryRelease {
    pub category: Category,
    pub packets: usize,
    pub samples: usize,
    pub epochs: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dp: Option<Release>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub raw: Vec<RawSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReleaseOutcome {
    pub request_id: String,
    pub user_id: String,
    pub requester: String,
    pub mode: &'static str,
    pub categories: Vec<CategoryRelease>,
}

impl Gateway {
    /// Release the data behind an allowed request. Aggregate releases check
    /// and debit the privacy budget before anything is decrypted.
    pub fn release_for_analysis(&self, request_id: &str) -> Result<ReleaseOutcome> {
        let out = self.release_inner(request_id);
        self.count_release(out.is_ok());
        out
    }

    fn release_inner(&self, request_id: &str) -> Result<ReleaseOutcome> {
        let req = self
            .request(request_id)
            .ok_or_else(|| petwear_core::consent::ConsentError::NotFound(request_id.to_string()))?;
        if !req.is_allowed() {
            return Err(GatewayError::NotAllowed { id: req.request_id, state: req.state });
        }
        let aggregate = req.recipient.aggregate_only();
        let categories: Vec<Category> = {
            let mut c = req.categories.clone();
            c.sort();
            c.dedup();
            c
        };

        let index = self.packets();
        let mut by_category: BTreeMap<Category, Vec<&PacketRecord>> = BTreeMap::new();
        for c in &categories {
            let recs: Vec<&PacketRecord> = index.iter().filter(|r| r.user_id == req.user_id && r.category == *c).collect();
            if recs.is_empty() {
                return Err(GatewayError::NoData { user: req.user_id.clone(), category: c.to_string() });
            }
            by_category.insert(*c, recs);
        }

        let mut epsilons = BTreeMap::new();
        if aggregate {
            let pref = self.config.dp.preferences.get(&req.user_id).copied();
            for c in &categories {
                epsilons.insert(*c, calibrate_epsilon(self.config.dp.tiers.tier(*c), pref)?);
            }
            let total: f64 = epsilons.values().sum();
            let mut budgets = self.budgets.lock().expect("budget lock");
            let budget = match budgets.entry(req.user_id.clone()) {
                std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::btree_map::Entry::Vacant(e) => e.insert(PrivacyBudget::new(&req.user_id, self.budget_capacity())?),
            };
            if !budget.can_afford(total) {
                return Err(petwear_core::dp::DpError::BudgetExhausted { requested: total, remaining: budget.remaining() }.into());
            }
        }

        let mut released = Vec::new();
        for (category, recs) in by_category {
            let mut by_epoch: BTreeMap<u64, Vec<&PacketRecord>> = BTreeMap::new();
            for r in recs {
                by_epoch.entry(r.epoch).or_default().push(r);
            }
            let mut secrets = Vec::new();
            for &epoch in by_epoch.keys() {
                let sk = self
                    .keys
                    .lock()
                    .expect("key service lock")
                    .open_secret(&req.user_id, category, epoch, &req.requester)?;
                self.ledger.append(
                    AuditEvent::new(EventKind::KeyReleased, &req.user_id, &req.requester, self.now())
                        .with_request(&req.request_id)
                        .with_categories([category])
                        .with_detail("epoch", epoch.to_string()),
                )?;
                secrets.push(sk);
            }

            let packets: usize = by_epoch.values().map(Vec::len).sum();
            let samples: usize = by_epoch.values().flatten().map(|r| r.count).sum();
            let mut entry = CategoryRelease {
                category,
                packets,
                samples,
                epochs: by_epoch.keys().copied().collect(),
                dp: None,
                raw: Vec::new(),
            };
            let mut sum: u128 = 0;
            for ((_, recs), sk) in by_epoch.iter().zip(&secrets) {
                if aggregate {
                    sum += self.sum_fixed(recs, sk)?;
                } else {
                    for r in recs {
                        let mut slots = self.ctx.decrypt_slots(sk, &self.load(r)?)?;
                        entry.raw.push(RawSeries {
                            metric: r.metric,
                            first_ms: r.first_ms,
                            last_ms: r.last_ms,
                            values: slots[..r.count].iter().map(|&v| v as f64 / FIXED_POINT_SCALE).collect(),
                        });
                        slots.zeroize();
                    }
                }
            }
            drop(secrets);
            self.ledger.append(
                AuditEvent::new(EventKind::Decrypted, &req.user_id, &req.requester, self.now())
                    .with_request(&req.request_id)
                    .with_categories([category])
                    .with_detail("mode", if aggregate { "aggregate" } else { "raw" })
                    .with_detail("packets", packets.to_string())
                    .with_detail("samples", samples.to_string()),
            )?;

            if aggregate {
                let metric = category.metric().ok_or_else(|| GatewayError::NoData {
                    user: req.user_id.clone(),
                    category: category.to_string(),
                })?;
                let (lo, hi) = metric.range();
                let mean = sum as f64 / FIXED_POINT_SCALE / samples as f64;
                sum.zeroize();
                let q = Query::BoundedMean { lo, hi, n: samples };
                let rel = {
                    let mut budgets = self.budgets.lock().expect("budget lock");
                    let budget = budgets.get_mut(&req.user_id).expect("created above");
                    let mut rng = self.dp_rng.lock().expect("dp rng lock");
                    release_exact(&q, vec![mean.clamp(lo, hi)], epsilons[&category], budget, &mut *rng, self.now())?
                };
                self.ledger.append(
                    AuditEvent::new(EventKind::DpReleased, &req.user_id, &req.requester, self.now())
                        .with_request(&req.request_id)
                        .with_categories([category])
                        .with_detail("query", q.name())
                        .with_detail("epsilon", format!("{}", rel.epsilon))
                        .with_detail("budget_remaining", format!("{}", rel.budget_remaining)),
                )?;
                entry.dp = Some(rel);
            }
            released.push(entry);
        }

        Ok(ReleaseOutcome {
            request_id: req.request_id,
            user_id: req.user_id,
            requester: req.requester,
            mode: if aggregate { "aggregate" } else { "raw" },
            categories: released,
        })
    }

    fn load(&self, rec: &PacketRecord) -> Result<Ciphertext> {
        let payload = self.cluster.fetch(&rec.manifest)?;
        let bytes = decompress(&payload, rec.codec)?;
        Ok(self.ctx.deserialize_ciphertext(&bytes)?)
    }

    /// Sum every reading of `recs` under one key. Ciphertexts are added in
    /// batches small enough that no slot can wrap the plaintext modulus, and
    /// only the batch sums are decrypted.
    fn sum_fixed(&self, recs: &[&PacketRecord], sk: &SecretKey) -> Result<u128> {
        let t = self.ctx.plaintext_modulus();
        let max_slot = recs
            .iter()
            .map(|r| (r.metric.range().1 * FIXED_POINT_SCALE).round() as u64)
            .max()
            .unwrap_or(1)
            .max(1);
        let batch = ((t - 1) / max_slot).max(1) as usize;
        let mut total: u128 = 0;
        for chunk in recs.chunks(batch) {
            let mut acc: Option<Ciphertext> = None;
            for r in chunk {
                let ct = self.load(r)?;
                acc = Some(match acc {
                    None => ct,
                    Some(a) => self.ctx.add(&a, &ct)?,
                });
            }
            let mut slots = self.ctx.decrypt_slots(sk, &acc.expect("non-empty batch"))?;
            total += slots.iter().map(|&v| v as u128).sum::<u128>();
            slots.zeroize();
        }
        Ok(total)
    }
}
