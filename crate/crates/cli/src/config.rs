//! Layered key-value configuration: defaults, then the `--config` file, then
//! `--set` overrides, then dedicated flags such as `--seed`.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use laimpute::kv::{KvConfig, KvMap};

/// File entries overlaid with `--set` pairs.
pub fn layered(file: Option<&Path>, sets: &[String]) -> Result<KvMap> {
    let mut map = match file {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            KvMap::parse(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => KvMap::new(),
    };
    for pair in sets {
        map.set_pair(pair).with_context(|| format!("--set {pair}"))?;
    }
    Ok(map)
}

/// Entries of `map` whose key is in `keys`.
pub fn subset(map: &KvMap, keys: &[&str]) -> KvMap {
    let mut out = KvMap::new();
    for k in map.keys().filter(|k| keys.contains(k)) {
        out.insert(k, map.get_str(k).unwrap_or_default());
    }
    out
}

/// Rejects keys outside `T::KEYS` and `extra`, then builds `T` from the rest.
pub fn split<T: KvConfig>(map: &KvMap, extra: &[&str]) -> Result<T> {
    let known: Vec<&str> = T::KEYS.iter().chain(extra).copied().collect();
    map.check_keys(&known)?;
    Ok(T::from_kv(&subset(map, T::KEYS))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use laimpute::TrainConfig;

    #[test]
    fn set_overrides_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.kv");
        fs::write(&path, "epochs=5\nbatch_size=4\n").unwrap();
        let map = layered(Some(&path), &["epochs=7".into()]).unwrap();
        let cfg: TrainConfig = split(&map, &[]).unwrap();
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.batch_size, 4);
        assert_eq!(cfg.learning_rate, TrainConfig::default().learning_rate);
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let map = layered(None, &["epochz=3".into()]).unwrap();
        let err = split::<TrainConfig>(&map, &[]).unwrap_err();
        assert!(err.to_string().contains("epochz"), "{err}");
    }

    #[test]
    fn extra_keys_pass_through() {
        let map = layered(None, &["n_series=3".into(), "epochs=2".into()]).unwrap();
        let cfg: TrainConfig = split(&map, &["n_series"]).unwrap();
        assert_eq!(cfg.epochs, 2);
    }
}
