//! Option lookup with precedence: command-line flag, then config file, then
//! the flag's default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::parser::ValueSource;
use clap::ArgMatches;
use hiervec::config::parse_key_values;
use hiervec::{Error, Result};

pub struct Opts<'a> {
    matches: &'a ArgMatches,
    file: BTreeMap<String, String>,
    /// Directory of the config file; relative paths in it resolve here.
    base: PathBuf,
}

impl<'a> Opts<'a> {
    pub fn new(matches: &'a ArgMatches) -> Result<Self> {
        let (file, base) = match matches.get_one::<String>("config") {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Usage(format!("cannot read config {path}: {e}")))?;
                let kv = parse_key_values(&text)?;
                let base = Path::new(path).parent().unwrap_or(Path::new(".")).to_path_buf();
                // keys may use `-` or `_`
                (kv.into_iter().map(|(k, v)| (k.replace('_', "-"), v)).collect(), base)
            }
            None => (BTreeMap::new(), PathBuf::from(".")),
        };
        Ok(Opts { matches, file, base })
    }

    fn known(&self, name: &str) -> bool {
        self.matches.ids().any(|id| id.as_str() == name)
    }

    /// The raw string for `name`, and whether it came from the config file.
    fn raw(&self, name: &str) -> Option<(String, bool)> {
        if !self.known(name) {
            return self.file.get(name).map(|v| (v.clone(), true));
        }
        let from_cli = self.matches.value_source(name) == Some(ValueSource::CommandLine);
        if !from_cli {
            if let Some(v) = self.file.get(name) {
                return Some((v.clone(), true));
            }
        }
        self.matches.get_one::<String>(name).map(|v| (v.clone(), false))
    }

    pub fn get<T: FromStr>(&self, name: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(name) {
            None => Ok(None),
            Some((v, _)) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::Usage(format!("--{name}: cannot parse {v:?}: {e}"))),
        }
    }

    pub fn req<T: FromStr>(&self, name: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(name)?.ok_or_else(|| Error::Usage(format!("--{name} is required (flag or config key)")))
    }

    pub fn path(&self, name: &str) -> Result<Option<PathBuf>> {
        Ok(self.raw(name).map(|(v, from_file)| if from_file { self.base.join(v) } else { PathBuf::from(v) }))
    }

    pub fn req_path(&self, name: &str) -> Result<PathBuf> {
        self.path(name)?.ok_or_else(|| Error::Usage(format!("--{name} is required (flag or config key)")))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, name: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(name) {
            None => Ok(None),
            Some((v, _)) => v
                .split(',')
                .map(|s| s.trim().parse().map_err(|e| Error::Usage(format!("--{name}: bad item {s:?}: {e}"))))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}
