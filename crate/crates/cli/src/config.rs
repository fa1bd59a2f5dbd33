//! Run configuration: command-line flags merged over an optional TOML file.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use pwi::{Baseline, BuildProtocol, InitialEstimate, NoiseModel, Partition, ReferenceSource};

use crate::CliError;

/// Every setting a command may read. Flags and config-file keys share the
/// same names (config keys use `_` where flags use `-`).
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Reference signal set (directory of .mat files or a .csv archive).
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Observed signal set (directory of .mat files or a .csv archive).
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory of P2 PGM images used as the reference set.
    #[arg(long)]
    pub from_pgm: Option<PathBuf>,

    /// Signal dimension.
    #[arg(long)]
    pub m: Option<usize>,
    /// Realizations per ensemble.
    #[arg(long)]
    pub q: Option<usize>,
    /// Number of grid points.
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n_points: Option<usize>,
    /// Amplitude of the time variation of generated signals.
    #[arg(long)]
    pub smoothness: Option<f64>,

    /// Knot count for a uniform partition.
    #[arg(long)]
    pub p: Option<usize>,
    /// Explicit 1-based knot list, e.g. `1,35,70,105,141`.
    #[arg(long)]
    pub knots: Option<String>,
    /// Knot counts for a convergence sweep, e.g. `5,8,15,28`.
    #[arg(long)]
    pub p_list: Option<String>,
    /// Explicit knot lists for a sweep, separated by `;`.
    #[arg(long)]
    pub knot_lists: Option<String>,

    /// hadamard-randn-rand | hadamard-randn | additive:<scale>
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,

    /// sampled | additive
    #[arg(long)]
    pub estimator: Option<String>,
    /// Noise power E[xi^2] for the additive estimator.
    #[arg(long)]
    pub xi_power: Option<f64>,
    /// Sign (+1 or -1) of the noise cross-term surrogate.
    #[arg(long, allow_negative_numbers = true)]
    pub holder_sign: Option<f64>,
    /// reconstruct | oracle | file:<path>
    #[arg(long)]
    pub initial: Option<String>,
    /// Knot reference estimates for the sampled estimator: reconstruct | oracle
    #[arg(long)]
    pub references: Option<String>,
    /// Comma-separated baselines: gol, averaging (empty for none).
    #[arg(long)]
    pub baselines: Option<String>,
    /// Also write every estimate as a matrix file.
    #[arg(long)]
    pub write_estimates: Option<bool>,
}

macro_rules! merge_fields {
    ($flags:expr, $file:expr, $($f:ident),* $(,)?) => {
        RunConfig { $($f: $flags.$f.or($file.$f),)* }
    };
}

impl RunConfig {
    /// Flag values win over file values.
    pub fn merged_over(self, file: RunConfig) -> RunConfig {
        merge_fields!(
            self,
            file,
            x,
            y,
            out,
            from_pgm,
            m,
            q,
            n_points,
            smoothness,
            p,
            knots,
            p_list,
            knot_lists,
            noise,
            seed,
            estimator,
            xi_power,
            holder_sign,
            initial,
            references,
            baselines,
            write_estimates,
        )
    }

    pub fn load_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn require<T: Clone>(value: &Option<T>, flag: &str) -> Result<T, CliError> {
        value
            .clone()
            .ok_or_else(|| CliError::Usage(format!("missing required setting --{flag}")))
    }

    pub fn out_dir(&self) -> Result<PathBuf, CliError> {
        RunConfig::require(&self.out, "out")
    }

    pub fn noise_model(&self) -> Result<NoiseModel, CliError> {
        let name = RunConfig::require(&self.noise, "noise")?;
        Ok(name.parse()?)
    }

    /// Exactly one of `--p` and `--knots`.
    pub fn partition(&self, grid_len: usize) -> Result<Partition, CliError> {
        match (&self.p, &self.knots) {
            (Some(p), None) => Ok(Partition::uniform(grid_len, *p)?),
            (None, Some(list)) => Ok(Partition::from_one_based(
                &parse_list(list, "knots")?,
                grid_len,
            )?),
            (None, None) => Err(CliError::Usage("one of --p or --knots is required".into())),
            (Some(_), Some(_)) => Err(CliError::Usage(
                "--p and --knots are mutually exclusive".into(),
            )),
        }
    }

    /// Exactly one of `--p-list` and `--knot-lists`.
    pub fn sweep(&self, grid_len: usize) -> Result<Vec<Partition>, CliError> {
        match (&self.p_list, &self.knot_lists) {
            (Some(list), None) => parse_list(list, "p-list")?
                .into_iter()
                .map(|p| Partition::uniform(grid_len, p).map_err(CliError::from))
                .collect(),
            (None, Some(lists)) => lists
                .split(';')
                .filter(|s| !s.trim().is_empty())
                .map(|l| {
                    Partition::from_one_based(&parse_list(l, "knot-lists")?, grid_len)
                        .map_err(CliError::from)
                })
                .collect(),
            (None, None) => Err(CliError::Usage(
                "one of --p-list or --knot-lists is required".into(),
            )),
            (Some(_), Some(_)) => Err(CliError::Usage(
                "--p-list and --knot-lists are mutually exclusive".into(),
            )),
        }
    }

    pub fn protocol(&self) -> Result<BuildProtocol, CliError> {
        let initial = match self.initial.as_deref().unwrap_or("reconstruct") {
            "reconstruct" => InitialEstimate::Reconstruct,
            "oracle" => InitialEstimate::Oracle,
            other => match other.strip_prefix("file:") {
                Some(path) => InitialEstimate::Given(pwi::io::read_matrix(path)?),
                None => {
                    return Err(CliError::Usage(format!(
                        "unknown initial estimate `{other}`"
                    )))
                }
            },
        };
        let references = match self.estimator.as_deref().unwrap_or("sampled") {
            "sampled" => match self.references.as_deref().unwrap_or("reconstruct") {
                "reconstruct" => ReferenceSource::Reconstruct,
                "oracle" => ReferenceSource::Oracle,
                other => return Err(CliError::Usage(format!("unknown references `{other}`"))),
            },
            "additive" => {
                let xi_power = RunConfig::require(&self.xi_power, "xi-power")?;
                let sign = self.holder_sign.unwrap_or(1.0);
                ReferenceSource::Additive { xi_power, sign }
            }
            other => return Err(CliError::Usage(format!("unknown estimator `{other}`"))),
        };
        Ok(BuildProtocol {
            initial,
            references,
        })
    }

    pub fn baselines(&self) -> Result<Vec<Baseline>, CliError> {
        let list = self.baselines.as_deref().unwrap_or("gol,averaging");
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<Baseline>().map_err(CliError::from))
            .collect()
    }
}

fn parse_list(list: &str, flag: &str) -> Result<Vec<usize>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::Usage(format!("--{flag}: `{s}` is not a positive integer")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let flags = RunConfig {
            seed: Some(1),
            ..Default::default()
        };
        let file: RunConfig = toml::from_str("seed = 9\nm = 4\nN = 17\n").unwrap();
        let merged = flags.merged_over(file);
        assert_eq!(merged.seed, Some(1));
        assert_eq!(merged.m, Some(4));
        assert_eq!(merged.n_points, Some(17));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("colour = 1\n").is_err());
    }

    #[test]
    fn partition_forms_are_exclusive() {
        let both = RunConfig {
            p: Some(3),
            knots: Some("1,5,9".into()),
            ..Default::default()
        };
        assert!(matches!(both.partition(9), Err(CliError::Usage(_))));
        let none = RunConfig::default();
        assert!(matches!(none.partition(9), Err(CliError::Usage(_))));
        let knots = RunConfig {
            knots: Some("1,5,9".into()),
            ..Default::default()
        };
        assert_eq!(knots.partition(9).unwrap().one_based(), vec![1, 5, 9]);
    }

    #[test]
    fn sweep_from_knot_lists() {
        let cfg = RunConfig {
            knot_lists: Some("1,9; 1,5,9".into()),
            ..Default::default()
        };
        let parts = cfg.sweep(9).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[1].knot_count(), 3);
    }

    #[test]
    fn baselines_default_and_empty() {
        assert_eq!(RunConfig::default().baselines().unwrap().len(), 2);
        let none = RunConfig {
            baselines: Some(String::new()),
            ..Default::default()
        };
        assert!(none.baselines().unwrap().is_empty());
    }

    #[test]
    fn additive_estimator_needs_noise_power() {
        let cfg = RunConfig {
            estimator: Some("additive".into()),
            ..Default::default()
        };
        assert!(cfg.protocol().is_err());
        let cfg = RunConfig {
            estimator: Some("additive".into()),
            xi_power: Some(0.25),
            holder_sign: Some(-1.0),
            ..Default::default()
        };
        assert_eq!(
            cfg.protocol().unwrap().references,
            ReferenceSource::Additive {
                xi_power: 0.25,
                sign: -1.0
            }
        );
    }
}
