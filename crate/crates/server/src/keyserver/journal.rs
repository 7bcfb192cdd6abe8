//! Append-only JSON-lines journal. Each mutation is written and synced
//! before it is applied in memory; the state is rebuilt by replay on start.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use mg_core::PublishedKey;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    AccountCreated {
        username: String,
        salt: String,
        iterations: u32,
        verifier: String,
    },
    IdentityClaimed {
        identity: String,
        username: String,
    },
    IdentityReleased {
        identity: String,
    },
    KeyPublished {
        key: PublishedKey,
    },
}

pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    /// Opens `path` for appending and returns the events already in it. A torn
    /// final line from an interrupted write is dropped and truncated away.
    pub fn open(path: &Path) -> std::io::Result<(Self, Vec<Event>)> {
        let mut events = Vec::new();
        let mut valid_len = 0u64;
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for line in reader.split(b'\n') {
                let line = line?;
                match serde_json::from_slice::<Event>(&line) {
                    Ok(e) => {
                        events.push(e);
                        valid_len += line.len() as u64 + 1;
                    }
                    Err(_) => break,
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        if file.metadata()?.len() > valid_len {
            file.set_len(valid_len)?;
        }
        Ok((Journal { path: path.to_path_buf(), file }, events))
    }

    pub fn append(&mut self, event: &Event) -> std::io::Result<()> {
        let mut line = serde_json::to_vec(event).map_err(std::io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.jsonl");
        {
            let (mut j, events) = Journal::open(&path).unwrap();
            assert!(events.is_empty());
            j.append(&Event::IdentityClaimed { identity: "a@x.com".into(), username: "alice".into() }).unwrap();
            j.append(&Event::IdentityReleased { identity: "a@x.com".into() }).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"event\":\"identity_cla").unwrap();
        drop(f);

        let (mut j, events) = Journal::open(&path).unwrap();
        assert_eq!(events.len(), 2);
        j.append(&Event::IdentityReleased { identity: "b@x.com".into() }).unwrap();
        drop(j);
        assert_eq!(Journal::open(&path).unwrap().1.len(), 3);
    }
}
