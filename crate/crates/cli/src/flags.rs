use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Arg, ArgMatches, Args, Command, FromArgMatches};

use crate::config::{RunConfig, KEYS};

/// `--config FILE` plus one `--KEY VALUE` flag per config key; flags win over
/// the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFlags {
    pub file: Option<PathBuf>,
    pub overrides: Vec<(String, String)>,
}

impl ConfigFlags {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                RunConfig::parse_text(&text)
                    .with_context(|| format!("in config {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        for (k, v) in &self.overrides {
            cfg.set(k, v).with_context(|| format!("flag --{k}"))?;
        }
        Ok(cfg)
    }
}

impl FromArgMatches for ConfigFlags {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let mut out = Self::default();
        out.update_from_arg_matches(m)?;
        Ok(out)
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        self.file = m.get_one::<PathBuf>("config").cloned();
        self.overrides = KEYS
            .iter()
            .filter_map(|(k, _)| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
            .collect();
        Ok(())
    }
}

impl Args for ConfigFlags {
    fn augment_args(cmd: Command) -> Command {
        let cmd = cmd.arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("key = value config file; flags override it"),
        );
        KEYS.iter().fold(cmd, |cmd, (key, doc)| {
            cmd.arg(
                Arg::new(*key)
                    .long(*key)
                    .value_name("VALUE")
                    .help(*doc)
                    .help_heading("Config keys"),
            )
        })
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}
