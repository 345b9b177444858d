//! Study persistence: a JSON manifest plus an append-only log holding one
//! JSON response per line. A response is acknowledged only after its line
//! has been synced to disk.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::state::StudyManifest;
use crate::error::{Error, Result};
use crate::model::Response;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOG_FILE: &str = "responses.ndjson";

#[derive(Debug)]
pub struct StudyStore {
    dir: PathBuf,
    log: File,
}

impl StudyStore {
    pub fn create(root: &Path, manifest: &StudyManifest) -> Result<Self> {
        let dir = root.join(&manifest.study_id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(MANIFEST_FILE);
        let tmp = dir.join("manifest.json.tmp");
        let json = serde_json::to_vec_pretty(manifest).map_err(|e| Error::invalid(e.to_string()))?;
        {
            let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            f.write_all(&json).map_err(|e| Error::io(&tmp, e))?;
            f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        }
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        let log_path = dir.join(LOG_FILE);
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;
        Ok(StudyStore { dir, log })
    }

    /// Loads a study directory, replaying its log. A final line without a
    /// newline is a write that never completed; it is dropped from the file.
    pub fn open(dir: &Path) -> Result<(StudyManifest, Vec<Response>, Self)> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: StudyManifest =
            serde_json::from_slice(&bytes).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;

        let log_path = dir.join(LOG_FILE);
        let mut log = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;
        let mut responses = Vec::new();
        let mut complete_len: u64 = 0;
        {
            let mut reader = BufReader::new(&log);
            let mut line = String::new();
            let mut number = 0;
            loop {
                line.clear();
                let read = reader.read_line(&mut line).map_err(|e| Error::io(&log_path, e))?;
                if read == 0 {
                    break;
                }
                number += 1;
                if !line.ends_with('\n') {
                    log::warn!("{}: dropping incomplete final record", log_path.display());
                    break;
                }
                let r: Response = serde_json::from_str(line.trim_end())
                    .map_err(|e| Error::record(log_path.display().to_string(), number, e.to_string()))?;
                responses.push(r);
                complete_len += read as u64;
            }
        }
        let len = log.metadata().map_err(|e| Error::io(&log_path, e))?.len();
        if len != complete_len {
            log.set_len(complete_len).map_err(|e| Error::io(&log_path, e))?;
            log.seek(SeekFrom::End(0)).map_err(|e| Error::io(&log_path, e))?;
        }
        Ok((
            manifest,
            responses,
            StudyStore {
                dir: dir.to_path_buf(),
                log,
            },
        ))
    }

    pub fn append(&mut self, response: &Response) -> Result<()> {
        let path = self.dir.join(LOG_FILE);
        let mut line = serde_json::to_string(response).map_err(|e| Error::invalid(e.to_string()))?;
        line.push('\n');
        self.log.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))?;
        self.log.sync_data().map_err(|e| Error::io(&path, e))
    }
}

/// Study directories under `root` that contain a manifest, sorted by name.
pub fn study_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.exists() {
        return Ok(Vec::new());
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}
