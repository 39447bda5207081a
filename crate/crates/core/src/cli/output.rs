use super::config::RunConfig;
use super::CliError;
use flexseg::grid::Network;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

/// Files of one run, all named `<network>_<mode>_<timestamp>` and tagged with
/// the config hash.
pub struct Output {
    pub hash: String,
    dir: PathBuf,
    stem: String,
    pub written: Vec<PathBuf>,
}

impl Output {
    /// Creates the output directory and echoes the effective config into it.
    pub fn start(cfg: &RunConfig, net: &Network, mode: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(&cfg.out_dir)?;
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        let base = format!("{}_{}_{}", sanitize(&net.name), mode, ts);
        let mut stem = base.clone();
        let mut n = 1;
        while cfg.out_dir.join(format!("{stem}.config.toml")).exists() {
            stem = format!("{base}-{n}");
            n += 1;
        }
        let mut out = Self {
            hash: cfg.hash(net, mode),
            dir: cfg.out_dir.clone(),
            stem,
            written: Vec::new(),
        };
        let text = cfg.to_toml();
        out.write("config.toml", &text)?;
        Ok(out)
    }

    pub fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}.{suffix}", self.stem))
    }

    /// Writes a file, prefixing the config hash in the file's comment syntax.
    /// JSON documents carry the hash as a field instead.
    pub fn write(&mut self, suffix: &str, content: &str) -> Result<PathBuf, CliError> {
        let path = self.path(suffix);
        let tagged = tag(&path, &self.hash, content);
        std::fs::write(&path, tagged)?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Writes to a caller-chosen path (debug dumps).
    pub fn write_at(&mut self, path: &Path, content: &str) -> Result<(), CliError> {
        std::fs::write(path, tag(path, &self.hash, content))?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    pub fn report(&self) {
        println!("config_hash {}", self.hash);
        for p in &self.written {
            println!("wrote {}", p.display());
        }
    }
}

fn tag(path: &Path, hash: &str, content: &str) -> String {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => content.to_string(),
        Some("svg") => format!("<!-- config_hash={hash} -->\n{content}"),
        _ => format!("# config_hash={hash}\n{content}"),
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '-'
            }
        })
        .collect()
}
