//! Flag, config-file and environment resolution, plus exit-code mapping.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;

use kbqa::model::ModelConfig;
use kbqa::train_eval::TrainConfig;

use crate::Common;

pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_EXCLUDED: &str = "starred_actors>directed_by,directed_by>starred_actors";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Runtime,
}

/// A failed command: a kind that fixes the exit code, and a one-line message.
#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub message: String,
}

fn one_line(s: String) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl Failure {
    pub fn usage(message: String) -> Self {
        Self {
            kind: Kind::Usage,
            message: one_line(message),
        }
    }

    pub fn data(e: impl Display) -> Self {
        Self {
            kind: Kind::Data,
            message: one_line(format!("{e:#}")),
        }
    }

    pub fn runtime(e: impl Display) -> Self {
        Self {
            kind: Kind::Runtime,
            message: one_line(format!("{e:#}")),
        }
    }

    pub fn code(&self) -> u8 {
        match self.kind {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Runtime => 3,
        }
    }

    /// `error[<kind>]: <message>`
    pub fn line(&self) -> String {
        let kind = match self.kind {
            Kind::Usage => "usage",
            Kind::Data => "data",
            Kind::Runtime => "runtime",
        };
        format!("error[{kind}]: {}", self.message)
    }
}

/// Every setting a subcommand may need, after merging sources.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub common: Common,
    pub seed: u64,
    pub profile: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub finetune: TrainConfig,
    pub grid: Vec<usize>,
    pub excluded: Vec<String>,
}

pub fn parse_config_text(text: &str, origin: &str) -> Result<BTreeMap<String, String>, Failure> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("{origin}:{}: expected key=value", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, Failure> {
    v.parse()
        .map_err(|_| Failure::usage(format!("bad value {v:?} for {key}")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, Failure> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn default_finetune() -> TrainConfig {
    TrainConfig {
        max_epochs: 40,
        min_steps: 200,
        patience: 5,
        ..TrainConfig::default()
    }
}

impl Resolved {
    pub fn new(common: &Common) -> Result<Self, Failure> {
        let file = match &common.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::data(format!("reading {}: {e}", p.display())))?;
                parse_config_text(&text, &p.display().to_string())?
            }
            None => BTreeMap::new(),
        };
        let env_seed = match std::env::var("STAG_SEED") {
            Ok(v) => Some(num::<u64>("STAG_SEED", &v)?),
            Err(_) => None,
        };
        Self::merge(common, &file, env_seed)
    }

    /// Precedence: environment seed, then flags, then the config file, then
    /// built-in defaults.
    pub fn merge(common: &Common, file: &BTreeMap<String, String>, env_seed: Option<u64>) -> Result<Self, Failure> {
        let mut model = ModelConfig::default();
        let mut train = TrainConfig::default();
        let mut finetune = default_finetune();
        let mut seed = DEFAULT_SEED;
        let mut profile = "movie-A".to_string();
        let mut grid = vec![0, 10, 50, 100, 500];
        let mut excluded = DEFAULT_EXCLUDED.to_string();
        let mut model_pairs = Vec::new();
        for (k, v) in file {
            match k.as_str() {
                "seed" => seed = num(k, v)?,
                "profile" => profile = v.clone(),
                "epochs" => train.max_epochs = num(k, v)?,
                "lr" => train.lr = num(k, v)?,
                "batch_size" => train.batch_size = num(k, v)?,
                "patience" => train.patience = num(k, v)?,
                "min_steps" => train.min_steps = num(k, v)?,
                "clip_norm" => train.clip_norm = num(k, v)?,
                "finetune.epochs" => finetune.max_epochs = num(k, v)?,
                "finetune.lr" => finetune.lr = num(k, v)?,
                "finetune.min_steps" => finetune.min_steps = num(k, v)?,
                "finetune.patience" => finetune.patience = num(k, v)?,
                "beam" => model.beam_width = num(k, v)?,
                "n" => grid = list(k, v)?,
                "exclude-paths" => excluded = v.clone(),
                _ => model_pairs.push((k.as_str(), v.as_str())),
            }
        }
        let unknown = model
            .apply_pairs(model_pairs)
            .map_err(|e| Failure::usage(format!("config: {e}")))?;
        if !unknown.is_empty() {
            return Err(Failure::usage(format!("unknown config keys: {}", unknown.join(", "))));
        }
        if let Some(s) = common.seed {
            seed = s;
        }
        if let Some(s) = env_seed {
            seed = s;
        }
        if let Some(p) = &common.profile {
            profile = p.clone();
        }
        if let Some(e) = common.epochs {
            train.max_epochs = e;
        }
        if let Some(lr) = common.lr {
            train.lr = lr;
            finetune.lr = lr;
        }
        if let Some(b) = common.beam {
            model.beam_width = b;
        }
        if let Some(s) = common.shortlist {
            model.shortlist = s;
        }
        if let Some(n) = &common.n {
            grid = list("--n", n)?;
        }
        if let Some(x) = &common.exclude_paths {
            excluded = x.clone();
        }
        model
            .validate()
            .map_err(|e| Failure::usage(format!("model config: {e}")))?;
        train.seed = seed;
        finetune.seed = seed;
        Ok(Self {
            common: common.clone(),
            seed,
            profile,
            model,
            train,
            finetune,
            grid,
            excluded: excluded
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
        })
    }

    pub fn describe(&self) -> String {
        let mut parts = vec![format!("seed={}", self.seed), format!("profile={}", self.profile)];
        parts.extend(self.model.to_pairs().into_iter().map(|(k, v)| format!("{k}={v}")));
        parts.extend(self.train.to_pairs().into_iter().map(|(k, v)| format!("train.{k}={v}")));
        parts.extend(self.finetune.to_pairs().into_iter().map(|(k, v)| format!("finetune.{k}={v}")));
        parts.push(format!("n={:?}", self.grid));
        parts.push(format!("exclude-paths={}", self.excluded.join(",")));
        for (name, p) in [
            ("kg", &self.common.kg),
            ("dataset", &self.common.dataset),
            ("ckpt", &self.common.ckpt),
            ("out", &self.common.out),
        ] {
            if let Some(p) = p {
                parts.push(format!("{name}={}", p.display()));
            }
        }
        parts.join(" ")
    }

    pub fn require_out(&self) -> Result<&Path, Failure> {
        self.common
            .out
            .as_deref()
            .ok_or_else(|| Failure::usage("--out is required".into()))
    }

    pub fn require_kg(&self) -> Result<&Path, Failure> {
        self.common
            .kg
            .as_deref()
            .ok_or_else(|| Failure::usage("--kg is required".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_env_flag_file() {
        let file = parse_config_text("# c\nseed = 3\nlr=0.01\nd_model=32\nn=0,100\n", "t").unwrap();
        let mut common = Common::default();
        let r = Resolved::merge(&common, &file, None).unwrap();
        assert_eq!((r.seed, r.train.lr, r.model.d_model), (3, 0.01, 32));
        assert_eq!(r.grid, vec![0, 100]);
        common.seed = Some(5);
        assert_eq!(Resolved::merge(&common, &file, None).unwrap().seed, 5);
        assert_eq!(Resolved::merge(&common, &file, Some(9)).unwrap().seed, 9);
    }

    #[test]
    fn unknown_key_is_usage_error() {
        let file = parse_config_text("bogus=1\n", "t").unwrap();
        let e = Resolved::merge(&Common::default(), &file, None).unwrap_err();
        assert_eq!(e.code(), 1);
        assert!(e.line().starts_with("error[usage]: unknown config keys: bogus"));
        assert!(parse_config_text("novalue\n", "t").is_err());
    }
}
