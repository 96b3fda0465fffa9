use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatRequest, LlmError};

/// SHA-256 over a canonical rendering of (model, messages, temperature, seed).
/// Message contents are whitespace-normalized; `max_tokens` is not part of
/// the key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey(pub String);

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl CacheKey {
    pub fn of(req: &ChatRequest) -> CacheKey {
        let messages: Vec<[String; 2]> = req
            .messages
            .iter()
            .map(|m| [m.role.as_str().to_string(), normalize_ws(&m.content)])
            .collect();
        let canonical = serde_json::json!([
            req.model.trim(),
            format!("{:.6}", req.temperature),
            req.seed,
            messages
        ]);
        let digest = Sha256::digest(canonical.to_string().as_bytes());
        CacheKey(hex::encode(digest))
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    text: String,
}

/// Completion cache, optionally backed by an append-only JSON-lines file.
#[derive(Debug, Default)]
pub struct ResponseCache {
    entries: RwLock<HashMap<CacheKey, String>>,
    file: Option<(PathBuf, Mutex<File>)>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache::default()
    }

    /// Opens (or creates) a persisted cache. Later lines win when a key
    /// appears more than once.
    pub fn open(path: &Path) -> Result<Self, LlmError> {
        let err = |source| LlmError::Cache {
            path: path.display().to_string(),
            source,
        };
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(err)?);
            for line in reader.lines() {
                let line = line.map_err(err)?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Entry>(&line) {
                    Ok(e) => {
                        entries.insert(CacheKey(e.key), e.text);
                    }
                    Err(e) => log::warn!("skipping corrupt cache line in {}: {e}", path.display()),
                }
            }
        } else if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(err)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(err)?;
        Ok(ResponseCache {
            entries: RwLock::new(entries),
            file: Some((path.to_path_buf(), Mutex::new(file))),
        })
    }

    pub fn get(&self, key: &CacheKey) -> Option<String> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, key: CacheKey, text: &str) -> Result<(), LlmError> {
        if let Some((path, file)) = &self.file {
            let line = serde_json::to_string(&Entry {
                key: key.0.clone(),
                text: text.to_string(),
            })
            .expect("entry serializes");
            let mut f = file.lock().expect("cache file lock");
            writeln!(f, "{line}")
                .and_then(|_| f.flush())
                .map_err(|source| LlmError::Cache {
                    path: path.display().to_string(),
                    source,
                })?;
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert(key, text.to_string());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatMessage, Role};

    fn req(content: &str) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage::new(Role::User, content)],
            temperature: 0.7,
            max_tokens: 64,
            seed: Some(1),
        }
    }

    #[test]
    fn key_normalizes_whitespace() {
        assert_eq!(CacheKey::of(&req("hello  world\n")), CacheKey::of(&req(" hello world")));
        assert_ne!(CacheKey::of(&req("hello world")), CacheKey::of(&req("hello, world")));
    }

    #[test]
    fn key_ignores_json_field_order() {
        let a: ChatRequest = serde_json::from_str(
            r#"{"model":"m","messages":[{"role":"user","content":"x"}],"temperature":0.7,"max_tokens":5,"seed":3}"#,
        )
        .unwrap();
        let b: ChatRequest = serde_json::from_str(
            r#"{"seed":3,"temperature":0.7,"max_tokens":9,"messages":[{"content":"x","role":"user"}],"model":"m"}"#,
        )
        .unwrap();
        assert_eq!(CacheKey::of(&a), CacheKey::of(&b));
    }

    #[test]
    fn key_depends_on_seed_and_temperature() {
        let mut r = req("x");
        let base = CacheKey::of(&r);
        r.seed = Some(2);
        assert_ne!(base, CacheKey::of(&r));
        r.seed = Some(1);
        r.temperature = 0.0;
        assert_ne!(base, CacheKey::of(&r));
    }

    #[test]
    fn persisted_cache_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/cache.jsonl");
        let key = CacheKey::of(&req("x"));
        {
            let cache = ResponseCache::open(&path).unwrap();
            cache.insert(key.clone(), "line one\n  spaced  ").unwrap();
        }
        let cache = ResponseCache::open(&path).unwrap();
        assert_eq!(cache.get(&key).as_deref(), Some("line one\n  spaced  "));
        assert_eq!(cache.len(), 1);
    }
}
