//! Session and profile persistence.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Duration, Utc};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::dialog::SessionState;
use crate::reformulation::UserProfile;

pub const DEFAULT_SESSION_TTL_SECS: i64 = 3600;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid key '{0}'")]
    InvalidKey(String),
    #[error("storage I/O: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt record {key}: {source}")]
    Corrupt {
        key: String,
        source: serde_json::Error,
    },
}

/// Keys double as file names, so they are restricted to a safe alphabet.
pub fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key.len() <= 128
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        && !key.starts_with('.')
}

fn check_key(key: &str) -> Result<(), StoreError> {
    if valid_key(key) {
        Ok(())
    } else {
        Err(StoreError::InvalidKey(key.to_string()))
    }
}

/// True once `now` is more than `ttl` past the session's last save. An
/// unreadable timestamp counts as expired.
pub fn is_expired(session: &SessionState, now: DateTime<Utc>, ttl: Duration) -> bool {
    match DateTime::parse_from_rfc3339(&session.updated_at) {
        Ok(saved) => now.signed_duration_since(saved.with_timezone(&Utc)) > ttl,
        Err(_) => true,
    }
}

pub trait SessionStore: Send + Sync {
    fn create(&self, session: &SessionState) -> Result<(), StoreError>;
    /// The saved snapshot, or `None` if absent or expired. Expired sessions
    /// are removed on the way.
    fn load(&self, id: &str, now: DateTime<Utc>) -> Result<Option<SessionState>, StoreError>;
    fn save(&self, session: &SessionState) -> Result<(), StoreError>;
    /// Returns whether a session was removed.
    fn delete(&self, id: &str) -> Result<bool, StoreError>;
}

pub trait ProfileStore: Send + Sync {
    /// The stored profile, or an empty one for a new user.
    fn load(&self, user_id: &str) -> Result<UserProfile, StoreError>;
    fn save(&self, profile: &UserProfile) -> Result<(), StoreError>;
}

#[derive(Debug)]
pub struct MemorySessionStore {
    sessions: Mutex<HashMap<String, SessionState>>,
    ttl: Duration,
}

impl MemorySessionStore {
    pub fn new(ttl: Duration) -> Self {
        MemorySessionStore {
            sessions: Mutex::new(HashMap::new()),
            ttl,
        }
    }
}

impl Default for MemorySessionStore {
    fn default() -> Self {
        Self::new(Duration::seconds(DEFAULT_SESSION_TTL_SECS))
    }
}

impl SessionStore for MemorySessionStore {
    fn create(&self, session: &SessionState) -> Result<(), StoreError> {
        self.save(session)
    }

    fn load(&self, id: &str, now: DateTime<Utc>) -> Result<Option<SessionState>, StoreError> {
        let mut sessions = self.sessions.lock().unwrap();
        match sessions.get(id) {
            Some(s) if is_expired(s, now, self.ttl) => {
                sessions.remove(id);
                Ok(None)
            }
            found => Ok(found.cloned()),
        }
    }

    fn save(&self, session: &SessionState) -> Result<(), StoreError> {
        check_key(&session.session_id)?;
        self.sessions
            .lock()
            .unwrap()
            .insert(session.session_id.clone(), session.clone());
        Ok(())
    }

    fn delete(&self, id: &str) -> Result<bool, StoreError> {
        Ok(self.sessions.lock().unwrap().remove(id).is_some())
    }
}

/// A directory of `<key>.json` documents written atomically.
#[derive(Debug, Clone)]
struct JsonDir {
    dir: PathBuf,
}

impl JsonDir {
    fn open(dir: PathBuf) -> Result<Self, StoreError> {
        fs::create_dir_all(&dir)?;
        Ok(JsonDir { dir })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn read<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, StoreError> {
        check_key(key)?;
        let bytes = match fs::read(self.path(key)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|source| StoreError::Corrupt {
                key: key.to_string(),
                source,
            })
    }

    /// Writes to a temporary sibling, syncs, then renames over the target, so
    /// readers only ever see a complete document.
    fn write<T: Serialize>(&self, key: &str, value: &T) -> Result<(), StoreError> {
        check_key(key)?;
        let mut bytes = serde_json::to_vec_pretty(value).expect("records serialize");
        bytes.push(b'\n');
        let tmp = self
            .dir
            .join(format!(".{key}.{}.tmp", uuid::Uuid::new_v4().simple()));
        let result = (|| {
            let mut file = fs::File::create(&tmp)?;
            file.write_all(&bytes)?;
            file.sync_all()?;
            fs::rename(&tmp, self.path(key))
        })();
        if result.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        Ok(result?)
    }

    fn remove(&self, key: &str) -> Result<bool, StoreError> {
        check_key(key)?;
        match fs::remove_file(self.path(key)) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(e.into()),
        }
    }
}

/// One JSON file per session under `<data_dir>/sessions`. Several processes
/// may share the directory.
#[derive(Debug, Clone)]
pub struct FileSessionStore {
    files: JsonDir,
    ttl: Duration,
}

impl FileSessionStore {
    pub fn open(data_dir: &Path, ttl: Duration) -> Result<Self, StoreError> {
        Ok(FileSessionStore {
            files: JsonDir::open(data_dir.join("sessions"))?,
            ttl,
        })
    }

    pub fn session_path(&self, id: &str) -> PathBuf {
        self.files.path(id)
    }
}

impl SessionStore for FileSessionStore {
    fn create(&self, session: &SessionState) -> Result<(), StoreError> {
        self.save(session)
    }

    fn load(&self, id: &str, now: DateTime<Utc>) -> Result<Option<SessionState>, StoreError> {
        if !valid_key(id) {
            return Ok(None);
        }
        match self.files.read::<SessionState>(id)? {
            Some(s) if is_expired(&s, now, self.ttl) => {
                self.files.remove(id)?;
                Ok(None)
            }
            found => Ok(found),
        }
    }

    fn save(&self, session: &SessionState) -> Result<(), StoreError> {
        self.files.write(&session.session_id, session)
    }

    fn delete(&self, id: &str) -> Result<bool, StoreError> {
        if !valid_key(id) {
            return Ok(false);
        }
        self.files.remove(id)
    }
}

#[derive(Debug, Default)]
pub struct MemoryProfileStore {
    profiles: Mutex<HashMap<String, UserProfile>>,
}

impl ProfileStore for MemoryProfileStore {
    fn load(&self, user_id: &str) -> Result<UserProfile, StoreError> {
        Ok(self
            .profiles
            .lock()
            .unwrap()
            .get(user_id)
            .cloned()
            .unwrap_or_else(|| UserProfile::new(user_id)))
    }

    fn save(&self, profile: &UserProfile) -> Result<(), StoreError> {
        self.profiles
            .lock()
            .unwrap()
            .insert(profile.user_id.clone(), profile.clone());
        Ok(())
    }
}

/// One JSON file per user under `<data_dir>/profiles`.
#[derive(Debug, Clone)]
pub struct FileProfileStore {
    files: JsonDir,
}

impl FileProfileStore {
    pub fn open(data_dir: &Path) -> Result<Self, StoreError> {
        Ok(FileProfileStore {
            files: JsonDir::open(data_dir.join("profiles"))?,
        })
    }
}

impl ProfileStore for FileProfileStore {
    fn load(&self, user_id: &str) -> Result<UserProfile, StoreError> {
        Ok(self
            .files
            .read(user_id)?
            .unwrap_or_else(|| UserProfile::new(user_id)))
    }

    fn save(&self, profile: &UserProfile) -> Result<(), StoreError> {
        self.files.write(&profile.user_id, profile)
    }
}
