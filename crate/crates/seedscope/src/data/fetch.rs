//! Dataset download with SHA-256 verification and an on-disk cache.
//!
//! Cache layout: `<cache_dir>/<name>/<sha256>.csv`. A verified cached copy
//! is reused without touching the network. Writes go through a temp file
//! and an atomic rename so concurrent fetchers never observe partial files.

use crate::data::{DatasetSource, DatasetSpec};
use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let read = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if read == 0 {
            break;
        }
        hasher.update(&buf[..read]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Fetch a remote dataset into the cache, returning the local file path.
///
/// A cache hit (existing file whose digest matches) short-circuits without
/// any network access. A checksum mismatch is fatal and removes the
/// offending file; transport failures are retriable.
pub fn fetch_dataset(spec: &DatasetSpec, cache_dir: &Path) -> Result<PathBuf> {
    if spec.source != DatasetSource::RemoteUrl {
        return Err(Error::Config(format!(
            "dataset {}: fetch_dataset requires a remote-url source",
            spec.name
        )));
    }
    spec.validate()?;
    let url = spec.url.as_deref().expect("validated above");
    let expected = spec.checksum.as_deref().expect("validated above").to_ascii_lowercase();

    let dir = cache_dir.join(&spec.name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let target = dir.join(format!("{expected}.csv"));

    if target.exists() {
        let actual = sha256_file(&target)?;
        if actual == expected {
            return Ok(target);
        }
        // Corrupted cache entry: remove and re-download.
        fs::remove_file(&target).map_err(|e| Error::io(&target, e))?;
    }

    let bytes = download(url)?;
    let actual = sha256_hex(&bytes);
    if actual != expected {
        return Err(Error::ChecksumMismatch {
            path: target,
            expected,
            actual,
        });
    }

    let tmp = dir.join(format!(".{expected}.csv.tmp-{}", std::process::id()));
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))?;
    Ok(target)
}

fn download(url: &str) -> Result<Vec<u8>> {
    let client = reqwest::blocking::Client::builder()
        .timeout(std::time::Duration::from_secs(600))
        .build()
        .map_err(|e| Error::Network {
            url: url.to_string(),
            message: e.to_string(),
        })?;
    let response = client.get(url).send().map_err(|e| Error::Network {
        url: url.to_string(),
        message: e.to_string(),
    })?;
    if !response.status().is_success() {
        return Err(Error::Network {
            url: url.to_string(),
            message: format!("HTTP status {}", response.status()),
        });
    }
    let bytes = response.bytes().map_err(|e| Error::Network {
        url: url.to_string(),
        message: e.to_string(),
    })?;
    Ok(bytes.to_vec())
}

/// Resolve a dataset spec to a readable local file, downloading if needed.
pub fn resolve_source_file(spec: &DatasetSpec, cache_dir: &Path) -> Result<PathBuf> {
    match spec.source {
        DatasetSource::LocalFile => {
            let path = spec
                .path
                .clone()
                .ok_or_else(|| Error::Config(format!("dataset {}: missing path", spec.name)))?;
            if !path.exists() {
                return Err(Error::Dataset(format!(
                    "{}: local file {} does not exist",
                    spec.name,
                    path.display()
                )));
            }
            if let Some(expected) = &spec.checksum {
                let actual = sha256_file(&path)?;
                if actual != expected.to_ascii_lowercase() {
                    return Err(Error::ChecksumMismatch {
                        path,
                        expected: expected.clone(),
                        actual,
                    });
                }
            }
            Ok(path)
        }
        DatasetSource::RemoteUrl => fetch_dataset(spec, cache_dir),
        DatasetSource::Synthetic => Err(Error::Config(format!(
            "dataset {}: synthetic sources have no source file",
            spec.name
        ))),
    }
}

#[cfg(test)]
pub(crate) mod test_server {
    //! Minimal single-threaded HTTP file server for fetch tests.

    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    pub struct FixtureServer {
        pub url: String,
        pub hits: Arc<AtomicUsize>,
        shutdown: std::sync::mpsc::Sender<()>,
        handle: Option<std::thread::JoinHandle<()>>,
    }

    impl FixtureServer {
        /// Serve `body` for every GET until dropped.
        pub fn serve(body: Vec<u8>) -> Self {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            let addr = listener.local_addr().unwrap();
            listener.set_nonblocking(true).unwrap();
            let hits = Arc::new(AtomicUsize::new(0));
            let hits_inner = Arc::clone(&hits);
            let (tx, rx) = std::sync::mpsc::channel::<()>();
            let handle = std::thread::spawn(move || loop {
                if rx.try_recv().is_ok() {
                    return;
                }
                match listener.accept() {
                    Ok((mut stream, _)) => {
                        hits_inner.fetch_add(1, Ordering::SeqCst);
                        let mut buf = [0u8; 4096];
                        let _ = stream.read(&mut buf);
                        let header = format!(
                            "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nContent-Type: text/csv\r\nConnection: close\r\n\r\n",
                            body.len()
                        );
                        let _ = stream.write_all(header.as_bytes());
                        let _ = stream.write_all(&body);
                    }
                    Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(std::time::Duration::from_millis(5));
                    }
                    Err(_) => return,
                }
            });
            FixtureServer {
                url: format!("http://{addr}/fixture.csv"),
                hits,
                shutdown: tx,
                handle: Some(handle),
            }
        }
    }

    impl Drop for FixtureServer {
        fn drop(&mut self) {
            let _ = self.shutdown.send(());
            if let Some(h) = self.handle.take() {
                let _ = h.join();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_server::FixtureServer;
    use super::*;
    use crate::data::ColumnRef;
    use std::sync::atomic::Ordering;

    fn remote_spec(url: &str, checksum: &str) -> DatasetSpec {
        DatasetSpec {
            name: "fixture".into(),
            source: DatasetSource::RemoteUrl,
            url: Some(url.into()),
            checksum: Some(checksum.into()),
            path: None,
            target_column: Some(ColumnRef::Name("y".into())),
            feature_columns: vec![ColumnRef::Name("x".into())],
            expected_rows: None,
            count: 0,
            d: 8,
            gen_seed: 0,
        }
    }

    /// A ~1 MB CSV fixture with a known digest.
    fn megabyte_fixture() -> Vec<u8> {
        let mut body = String::with_capacity(1 << 20);
        body.push_str("x,y\n");
        let mut i = 0u64;
        while body.len() < (1 << 20) {
            body.push_str(&format!("{},{}\n", i, i * 2));
            i += 1;
        }
        body.into_bytes()
    }

    #[test]
    fn fresh_download_verifies_digest() {
        let body = megabyte_fixture();
        let digest = sha256_hex(&body);
        let server = FixtureServer::serve(body.clone());
        let cache = tempfile::tempdir().unwrap();

        let path = fetch_dataset(&remote_spec(&server.url, &digest), cache.path()).unwrap();
        assert!(path.exists());
        assert_eq!(std::fs::read(&path).unwrap(), body);
        assert_eq!(sha256_file(&path).unwrap(), digest);
        assert_eq!(server.hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn cache_hit_makes_no_network_call() {
        let body = b"x,y\n1,2\n".to_vec();
        let digest = sha256_hex(&body);
        let cache = tempfile::tempdir().unwrap();

        let spec;
        {
            let server = FixtureServer::serve(body);
            spec = remote_spec(&server.url, &digest);
            fetch_dataset(&spec, cache.path()).unwrap();
        } // server is gone now; any network call would fail

        let path = fetch_dataset(&spec, cache.path()).unwrap();
        assert!(path.exists());
    }

    #[test]
    fn checksum_mismatch_is_fatal_and_removes_file() {
        let body = b"x,y\n1,2\n".to_vec();
        let wrong = sha256_hex(b"something else");
        let server = FixtureServer::serve(body);
        let cache = tempfile::tempdir().unwrap();

        let err = fetch_dataset(&remote_spec(&server.url, &wrong), cache.path()).unwrap_err();
        match &err {
            Error::ChecksumMismatch { expected, actual, path } => {
                assert_eq!(expected, &wrong);
                assert_ne!(actual, expected);
                assert!(!path.exists(), "no file may remain after a mismatch");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(!err.is_retriable());
    }

    #[test]
    fn corrupted_cache_entry_is_replaced() {
        let body = b"x,y\n1,2\n".to_vec();
        let digest = sha256_hex(&body);
        let server = FixtureServer::serve(body.clone());
        let cache = tempfile::tempdir().unwrap();
        let spec = remote_spec(&server.url, &digest);

        // Seed the cache with garbage under the right name.
        let dir = cache.path().join("fixture");
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join(format!("{digest}.csv")), b"garbage").unwrap();

        let path = fetch_dataset(&spec, cache.path()).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), body);
        assert_eq!(server.hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn network_failure_is_retriable() {
        // Nothing listens on this port.
        let spec = remote_spec("http://127.0.0.1:9/unreachable.csv", &sha256_hex(b"x"));
        let cache = tempfile::tempdir().unwrap();
        let err = fetch_dataset(&spec, cache.path()).unwrap_err();
        assert!(err.is_retriable(), "expected retriable network error, got {err:?}");
    }
}
