use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use super::{retrieve_demographics, DemographicQuery, DemographicResult, DemographicsError, LlmProvider};
use crate::artifact::{read_json, write_json};

/// Persistent result cache, one JSON file per `(concept, scope, provider)`.
///
/// Lookups and provider calls for the same key are serialized, so concurrent
/// callers trigger at most one request per key. Entries are never rewritten.
pub struct DemographicCache {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl DemographicCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(query: &DemographicQuery, provider_id: &str) -> String {
        let mut h = Sha256::new();
        for part in [query.concept.to_lowercase(), query.scope.to_string(), provider_id.to_string()] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, query: &DemographicQuery, provider_id: &str) -> Result<Option<DemographicResult>, DemographicsError> {
        let path = self.path_for(&Self::key(query, provider_id));
        if !path.exists() {
            return Ok(None);
        }
        read_json(&path)
            .map(Some)
            .map_err(|e| DemographicsError::Cache(e.to_string()))
    }

    /// Cached result, or a fresh provider round trip that is then stored.
    /// Failed retrievals are not cached.
    pub fn retrieve(
        &self,
        query: &DemographicQuery,
        provider: &dyn LlmProvider,
    ) -> Result<DemographicResult, DemographicsError> {
        let id = provider.id();
        let key = Self::key(query, &id);
        let lock = {
            let mut locks = self.locks.lock().expect("cache lock map poisoned");
            locks.entry(key.clone()).or_default().clone()
        };
        let _guard = lock.lock().expect("cache key lock poisoned");
        if let Some(hit) = self.get(query, &id)? {
            return Ok(hit);
        }
        let result = retrieve_demographics(query, provider)?;
        write_json(&self.path_for(&key), &result).map_err(|e| DemographicsError::Cache(e.to_string()))?;
        Ok(result)
    }
}
