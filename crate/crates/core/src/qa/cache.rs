use std::num::NonZeroUsize;
use std::time::{Duration, Instant};

use lru::LruCache;
use parking_lot::Mutex;

use super::Answer;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub course_id: String,
    pub model_version: u64,
    /// Normalized question text.
    pub question: String,
    /// The requested language, `auto` when detection was requested.
    pub lang: String,
}

/// LRU answer cache with a per-entry time to live. Capacity 0 disables it.
pub struct AnswerCache {
    inner: Option<Mutex<LruCache<CacheKey, (Instant, Answer)>>>,
    ttl: Duration,
}

impl AnswerCache {
    pub fn new(capacity: usize, ttl: Duration) -> Self {
        Self { inner: NonZeroUsize::new(capacity).map(|c| Mutex::new(LruCache::new(c))), ttl }
    }

    pub fn disabled() -> Self {
        Self::new(0, Duration::ZERO)
    }

    pub fn get(&self, key: &CacheKey) -> Option<Answer> {
        let mut cache = self.inner.as_ref()?.lock();
        match cache.get(key) {
            Some((stored, answer)) if stored.elapsed() <= self.ttl => Some(answer.clone()),
            Some(_) => {
                cache.pop(key);
                None
            }
            None => None,
        }
    }

    pub fn insert(&self, key: CacheKey, answer: Answer) {
        if let Some(cache) = &self.inner {
            cache.lock().put(key, (Instant::now(), answer));
        }
    }

    pub fn len(&self) -> usize {
        self.inner.as_ref().map_or(0, |c| c.lock().len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops every entry of `course_id` older than `keep_version`.
    pub fn evict_course(&self, course_id: &str, keep_version: u64) {
        if let Some(cache) = &self.inner {
            let mut cache = cache.lock();
            let stale: Vec<CacheKey> = cache
                .iter()
                .filter(|(k, _)| k.course_id == course_id && k.model_version != keep_version)
                .map(|(k, _)| k.clone())
                .collect();
            for k in stale {
                cache.pop(&k);
            }
        }
    }
}
