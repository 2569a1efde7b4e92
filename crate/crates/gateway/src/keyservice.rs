//! Key service: one BGV key pair per (user, category, epoch). Secret keys are
//! stored only sealed under a per-epoch data key, and the data key only as a
//! complete-subtree envelope over the user's recipient tree.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use petwear_core::consent::{unwrap, KeyEnvelope, RevocationTree};
use petwear_core::crypto::{hmac, open, seal, Key};
use petwear_core::he::{HeContext, PublicKey, SecretKey};
use petwear_core::telemetry::Category;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use zeroize::Zeroize;

use crate::error::{GatewayError, Result};

pub struct EpochKeys {
    pub epoch: u64,
    pub envelope: KeyEnvelope,
    pub public: Arc<PublicKey>,
    nonce: [u8; 12],
    sealed_secret: Vec<u8>,
}

struct UserKeys {
    tree: RevocationTree,
    leaves: BTreeMap<String, u32>,
    categories: BTreeMap<Category, Vec<EpochKeys>>,
}

pub struct KeyService {
    ctx: Arc<HeContext>,
    master: Key,
    depth: u32,
    rng: ChaCha20Rng,
    users: BTreeMap<String, UserKeys>,
    unwraps: u64,
}

fn seal_aad(user: &str, category: Category, epoch: u64) -> Vec<u8> {
    let mut aad = b"petwear-sk".to_vec();
    aad.extend_from_slice(&(user.len() as u32).to_le_bytes());
    aad.extend_from_slice(user.as_bytes());
    aad.push(category.code());
    aad.extend_from_slice(&epoch.to_le_bytes());
    aad
}

impl KeyService {
    pub fn new(ctx: Arc<HeContext>, seed: u64, depth: u32) -> Self {
        let master = hmac(&seed.to_le_bytes(), &[b"key-service-master"]);
        let rng_seed = hmac(&master, &[b"key-service-rng"]);
        KeyService {
            ctx,
            master,
            depth,
            rng: ChaCha20Rng::from_seed(rng_seed),
            users: BTreeMap::new(),
            unwraps: 0,
        }
    }

    pub fn context(&self) -> &Arc<HeContext> {
        &self.ctx
    }

    /// Frame-authentication key shared with one device.
    pub fn session_key(&self, device_id: &str) -> Key {
        hmac(&self.master, &[b"session", device_id.as_bytes()])
    }

    /// Successful envelope unwraps since start.
    pub fn unwrap_count(&self) -> u64 {
        self.unwraps
    }

    fn user(&mut self, user: &str) -> Result<&mut UserKeys> {
        if !self.users.contains_key(user) {
            let tree_master = hmac(&self.master, &[b"tree", user.as_bytes()]);
            let tree = RevocationTree::new(self.depth, tree_master)?;
            self.users.insert(user.to_string(), UserKeys { tree, leaves: BTreeMap::new(), categories: BTreeMap::new() });
        }
        Ok(self.users.get_mut(user).expect("inserted above"))
    }

    /// Fresh key pair and data key for a new epoch of `category`.
    fn rotate(&mut self, user: &str, category: Category) -> Result<u64> {
        let ctx = Arc::clone(&self.ctx);
        let mut data_key: Key = self.rng.random();
        let mut nonce = [0u8; 12];
        self.rng.fill(&mut nonce);
        let keygen_seed = self.rng.random::<u64>();
        let entry = self.user(user)?;
        let mut rng = ChaCha20Rng::seed_from_u64(keygen_seed);
        let envelope = entry.tree.rotate_epoch_and_wrap(category, &data_key, &mut rng);
        let epoch = envelope.epoch;
        let keys = ctx.keygen(keygen_seed);
        let mut sk_bytes = ctx.serialize_secret_key(&keys.secret);
        let sealed_secret = seal(&data_key, &nonce, &seal_aad(user, category, epoch), &sk_bytes);
        sk_bytes.zeroize();
        data_key.zeroize();
        entry.categories.entry(category).or_default().push(EpochKeys {
            epoch,
            envelope,
            public: Arc::new(keys.public),
            nonce,
            sealed_secret,
        });
        Ok(epoch)
    }

    /// Public key for new data of `(user, category)`, with its epoch.
    pub fn public_key(&mut self, user: &str, category: Category) -> Result<(u64, Arc<PublicKey>)> {
        let needs = self.users.get(user).and_then(|u| u.categories.get(&category)).is_none_or(Vec::is_empty);
        if needs {
            self.rotate(user, category)?;
        }
        let current = self.users[user].categories[&category].last().expect("at least one epoch");
        Ok((current.epoch, Arc::clone(&current.public)))
    }

    /// Tree leaf for a recipient identity, allocated on first use.
    pub fn leaf_for(&mut self, user: &str, recipient: &str) -> Result<u32> {
        let entry = self.user(user)?;
        if let Some(&leaf) = entry.leaves.get(recipient) {
            return Ok(leaf);
        }
        let leaf = entry.leaves.len() as u32;
        if leaf >= entry.tree.leaves() {
            return Err(GatewayError::Keys(format!("recipient tree of {user} is full")));
        }
        entry.leaves.insert(recipient.to_string(), leaf);
        Ok(leaf)
    }

    /// Unwrap the epoch's data key as `recipient` and open the sealed secret key.
    pub fn open_secret(&mut self, user: &str, category: Category, epoch: u64, recipient: &str) -> Result<SecretKey> {
        let leaf = self.leaf_for(user, recipient)?;
        let ctx = Arc::clone(&self.ctx);
        let entry = &self.users[user];
        let keys = entry
            .categories
            .get(&category)
            .and_then(|v| v.iter().find(|k| k.epoch == epoch))
            .ok_or_else(|| GatewayError::Keys(format!("no {category} keys for epoch {epoch}")))?;
        let holder = entry.tree.holder_keys(leaf)?;
        let grant = entry.tree.grant(category);
        let mut data_key = unwrap(&keys.envelope, &holder, &grant)?;
        self.unwraps += 1;
        let opened = open(&data_key, &keys.nonce, &seal_aad(user, category, epoch), &keys.sealed_secret);
        data_key.zeroize();
        let mut sk_bytes = opened.ok_or_else(|| GatewayError::Keys("sealed secret key failed to open".into()))?;
        let sk = ctx.deserialize_secret_key(&sk_bytes);
        sk_bytes.zeroize();
        Ok(sk?)
    }

    /// Revoke a recipient and start a new epoch for every category of the
    /// user. Returns false when the recipient was unknown or already revoked.
    pub fn revoke(&mut self, user: &str, recipient: &str) -> Result<bool> {
        let Some(entry) = self.users.get_mut(user) else {
            return Ok(false);
        };
        let Some(&leaf) = entry.leaves.get(recipient) else {
            return Ok(false);
        };
        if !entry.tree.revoke(leaf)? {
            return Ok(false);
        }
        let categories: Vec<Category> = entry.categories.keys().copied().collect();
        for c in categories {
            self.rotate(user, c)?;
        }
        Ok(true)
    }

    pub fn epochs(&self, user: &str, category: Category) -> Vec<u64> {
        self.users
            .get(user)
            .and_then(|u| u.categories.get(&category))
            .map(|v| v.iter().map(|k| k.epoch).collect())
            .unwrap_or_default()
    }

    /// Write public keys, envelopes and sealed secret keys (never plaintext
    /// keys) as one JSON file per user.
    pub fn write_fixtures(&self, dir: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct EpochOut {
            category: Category,
            epoch: u64,
            envelope: String,
            public_key: String,
            nonce: String,
            sealed_secret_key: String,
        }
        #[derive(Serialize)]
        struct UserOut<'a> {
            user_id: &'a str,
            tree_depth: u32,
            revoked_leaves: Vec<u32>,
            recipients: &'a BTreeMap<String, u32>,
            epochs: Vec<EpochOut>,
        }
        std::fs::create_dir_all(dir)?;
        for (user, keys) in &self.users {
            let epochs = keys
                .categories
                .iter()
                .flat_map(|(c, v)| v.iter().map(move |k| (*c, k)))
                .map(|(category, k)| EpochOut {
                    category,
                    epoch: k.epoch,
                    envelope: hex::encode(k.envelope.to_bytes()),
                    public_key: hex::encode(self.ctx.serialize_public_key(&k.public)),
                    nonce: hex::encode(k.nonce),
                    sealed_secret_key: hex::encode(&k.sealed_secret),
                })
                .collect();
            let out = UserOut {
                user_id: user,
                tree_depth: self.depth,
                revoked_leaves: keys.tree.revoked().iter().copied().collect(),
                recipients: &keys.leaves,
                epochs,
            };
            std::fs::write(dir.join(format!("{user}.json")), serde_json::to_vec_pretty(&out)?)?;
        }
        Ok(())
    }
}
