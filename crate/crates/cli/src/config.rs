//! Run configuration: a TOML file overlaid by command-line flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::Deserialize;
use slotguide::aligner::AlignOptions;
use slotguide::bridge::{Endpoint, RemoteStepper, ToyStepper, TraceStepper};
use slotguide::decoder::{DecodeConfig, ModelStepper};
use slotguide::lexicon::Lexicon;
use slotguide::mr::DatasetFormat;
use slotguide::tracking::TrackerConfig;

use crate::CliError;

/// Where model steps come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepperSource {
    Trace(PathBuf),
    Server(String),
    Toy(PathBuf),
}

impl FromStr for StepperSource {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let (kind, rest) = s.split_once(':').ok_or_else(|| {
            CliError::Config(format!("stepper `{s}` must be trace:<path>, server:<endpoint> or toy:<path>"))
        })?;
        if rest.is_empty() {
            return Err(CliError::Config(format!("stepper `{s}` has an empty target")));
        }
        match kind {
            "trace" => Ok(StepperSource::Trace(rest.into())),
            "server" => Ok(StepperSource::Server(rest.into())),
            "toy" => Ok(StepperSource::Toy(rest.into())),
            other => Err(CliError::Config(format!("unknown stepper kind `{other}`"))),
        }
    }
}

impl StepperSource {
    fn rebase(self, dir: &Path) -> Self {
        match self {
            StepperSource::Trace(p) => StepperSource::Trace(dir.join(p)),
            StepperSource::Toy(p) => StepperSource::Toy(dir.join(p)),
            server => server,
        }
    }

    pub fn open(&self) -> Result<Box<dyn ModelStepper>, CliError> {
        Ok(match self {
            StepperSource::Trace(p) => Box::new(TraceStepper::load(p)?),
            StepperSource::Toy(p) => Box::new(ToyStepper::load(p)?),
            StepperSource::Server(e) => Box::new(RemoteStepper::connect(e.parse::<Endpoint>()?)?),
        })
    }
}

/// The TOML file. Relative paths are resolved against the file's directory.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<PathBuf>,
    pub format: Option<String>,
    pub lexicon: Option<PathBuf>,
    pub stepper: Option<String>,
    pub out: Option<PathBuf>,
    pub strategy: Option<String>,
    pub preset: Option<String>,
    pub thresholds: Option<[f64; 3]>,
    pub decode: Option<DecodeConfig>,
    pub align: Option<AlignOptions>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        cfg.dataset = cfg.dataset.map(|p| dir.join(p));
        cfg.lexicon = cfg.lexicon.map(|p| dir.join(p));
        cfg.out = cfg.out.map(|p| dir.join(p));
        if let Some(s) = &cfg.stepper {
            let src = s.parse::<StepperSource>()?.rebase(dir);
            cfg.stepper = Some(match src {
                StepperSource::Trace(p) => format!("trace:{}", p.display()),
                StepperSource::Toy(p) => format!("toy:{}", p.display()),
                StepperSource::Server(e) => format!("server:{e}"),
            });
        }
        Ok(cfg)
    }
}

fn parse_thresholds(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err("expected three comma-separated values v,p,u".into());
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("`{p}` is not a number"))?;
    }
    Ok(out)
}

/// Flags shared by the commands that decode or evaluate.
#[derive(Clone, Debug, Default, Args)]
pub struct RunArgs {
    /// TOML run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset file (CSV, JSON lines, or one MR per line).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// viggo, e2e or multiwoz.
    #[arg(long)]
    pub format: Option<String>,
    /// Slot lexicon (TOML); defaults to the builtin one for the format.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// trace:<path>, server:<host:port | exec:cmd> or toy:<spec.json>.
    #[arg(long)]
    pub stepper: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub beam_size: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Tracker thresholds as v,p,u.
    #[arg(long, value_parser = parse_thresholds)]
    pub thresholds: Option<[f64; 3]>,
    /// Tracker preset: small, base, large-t5 or large-bart.
    #[arg(long)]
    pub preset: Option<String>,
    /// Align scalar slots on their stem alone.
    #[arg(long)]
    pub soft_scalar: bool,
}

/// Fully resolved settings.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub format: DatasetFormat,
    pub lexicon: Lexicon,
    pub stepper: Option<StepperSource>,
    pub out: Option<PathBuf>,
    pub strategy: Option<String>,
    pub decode: DecodeConfig,
    pub align: AlignOptions,
}

impl RunConfig {
    pub fn resolve(args: &RunArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let format_name = args.format.clone().or(file.format).unwrap_or_else(|| "viggo".into());
        let format: DatasetFormat =
            format_name.parse().map_err(|e: slotguide::Error| CliError::Config(e.to_string()))?;
        let lexicon = match args.lexicon.clone().or(file.lexicon) {
            Some(p) => Lexicon::load(&p).map_err(|e| CliError::Config(e.to_string()))?,
            None => Lexicon::builtin(format),
        };
        let stepper = args.stepper.clone().or(file.stepper).map(|s| s.parse()).transpose()?;

        let mut decode = file.decode.unwrap_or_default();
        let preset = |name: &String| -> Result<[f64; 3], CliError> {
            let (v, p, u) = TrackerConfig::preset(name).map_err(|e| CliError::Config(e.to_string()))?.thresholds();
            Ok([v, p, u])
        };
        // explicit thresholds beat a preset from the same layer
        let thresholds = match (args.thresholds, &args.preset, file.thresholds, &file.preset) {
            (Some(t), _, _, _) => Some(t),
            (None, Some(name), _, _) => Some(preset(name)?),
            (None, None, Some(t), _) => Some(t),
            (None, None, None, Some(name)) => Some(preset(name)?),
            _ => None,
        };
        if let Some([v, p, u]) = thresholds {
            decode.tracker.verbatim.threshold = v;
            decode.tracker.paraphrased.threshold = p;
            decode.tracker.unrealized.threshold = u;
        }
        if let Some(b) = args.beam_size {
            decode.beam_size = b;
        }
        if let Some(m) = args.max_len {
            decode.max_len = m;
        }
        decode.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let mut align = file.align.unwrap_or_default();
        align.soft_scalar |= args.soft_scalar;

        Ok(RunConfig {
            dataset: args.dataset.clone().or(file.dataset),
            format,
            lexicon,
            stepper,
            out: args.out.clone().or(file.out),
            strategy: file.strategy,
            decode,
            align,
        })
    }

    pub fn dataset(&self) -> Result<&Path, CliError> {
        self.dataset.as_deref().ok_or_else(|| CliError::Config("no dataset given (--dataset)".into()))
    }

    pub fn out(&self) -> Result<&Path, CliError> {
        self.out.as_deref().ok_or_else(|| CliError::Config("no output location given (--out)".into()))
    }

    pub fn open_stepper(&self) -> Result<Box<dyn ModelStepper>, CliError> {
        self.stepper.as_ref().ok_or_else(|| CliError::Config("no stepper given (--stepper)".into()))?.open()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepper_sources() {
        assert_eq!("trace:a.ndjson".parse::<StepperSource>().unwrap(), StepperSource::Trace("a.ndjson".into()));
        assert_eq!("server:127.0.0.1:9".parse::<StepperSource>().unwrap(), StepperSource::Server("127.0.0.1:9".into()));
        assert!("model.bin".parse::<StepperSource>().is_err());
        assert!("toy:".parse::<StepperSource>().is_err());
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "format = \"e2e\"\ndataset = \"d.csv\"\nthresholds = [0.8, 0.3, 0.2]\n[decode]\nbeam_size = 4\nmax_len = 20\n",
        )
        .unwrap();
        let args = RunArgs { config: Some(path), beam_size: Some(7), ..Default::default() };
        let cfg = RunConfig::resolve(&args).unwrap();
        assert_eq!(cfg.format, DatasetFormat::E2e);
        assert_eq!(cfg.dataset.unwrap(), dir.path().join("d.csv"));
        assert_eq!(cfg.decode.beam_size, 7);
        assert_eq!(cfg.decode.max_len, 20);
        assert_eq!(cfg.decode.tracker.thresholds(), (0.8, 0.3, 0.2));

        let defaults = RunConfig::resolve(&RunArgs::default()).unwrap();
        assert_eq!(defaults.decode.beam_size, 10);
        assert_eq!(defaults.decode.tracker.thresholds(), (0.9, 0.4, 0.1));
    }

    #[test]
    fn bad_config_is_a_config_error() {
        let args = RunArgs { format: Some("amr".into()), ..Default::default() };
        assert!(matches!(RunConfig::resolve(&args), Err(CliError::Config(_))));
        assert!(parse_thresholds("0.9,0.4").is_err());
        assert_eq!(parse_thresholds("0.9, 0.4,0.1").unwrap(), [0.9, 0.4, 0.1]);
    }
}
