//! Command-line frontend: run configs, fibers, Green values, preset listing
//! and config validation. [`main_with_args`] returns the process exit code:
//! 0 when every verdict passes, 2 when any fails, 3 when a verdict is
//! inconclusive, 1 on config, map or input errors.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::{Context, ExperimentReport, ExperimentSpec, Status, EXPERIMENTS};
use crate::fibers::{backward_orbit, write_cloud_binary, write_cloud_csv, FiberMode};
use crate::iteration::{green_value, write_green_csv};
use crate::map::{EndomorphismMap, MapDefinition, PRESET_HELP};
use crate::projective::{parse_lift, parse_point};
use crate::tolerances::Tolerances;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "projdyn",
    version,
    about = "Equidistribution experiments for endomorphisms of P^k"
)]
pub struct Cli {
    /// Run config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for `run`, output file for `fiber` and `green`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Marks the run as deterministic in its config; outputs are
    /// reproducible at any thread count either way.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment named in --config.
    Run,
    /// Exact backward orbit of a point.
    Fiber {
        /// Preset such as `power(2)`, inline JSON, or a map-definition file.
        #[arg(long)]
        map: String,
        /// Target point, e.g. `1:1` or `0.5+1i:1`.
        #[arg(long)]
        target: String,
        #[arg(long)]
        depth: u32,
        #[arg(long, value_enum, default_value_t = FiberFormat::Csv)]
        format: FiberFormat,
    },
    /// Green function at the points of a file, one `z0:z1[:...]` per line.
    Green {
        #[arg(long)]
        map: String,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        depth: usize,
    },
    /// List map presets and experiments.
    Presets,
    /// Check a config and its map without running anything.
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FiberFormat {
    Csv,
    Binary,
}

/// Map given as a preset string, an inline definition, or a definition file
/// (resolved relative to the config file).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MapSpec {
    Preset(String),
    Definition(MapDefinition),
    File { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub map: MapSpec,
    pub experiment: String,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub deterministic: bool,
}

/// A parsed config with its digest and the directory it was read from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub digest: String,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn build_map(&self) -> Result<EndomorphismMap> {
        let tol = &self.config.tolerances;
        let as_map_error = |e: Error| Error::config("map", e.to_string());
        match &self.config.map {
            MapSpec::Preset(name) => {
                EndomorphismMap::from_definition(&MapDefinition::preset(name, 1), tol)
                    .map_err(as_map_error)
            }
            MapSpec::Definition(def) => {
                EndomorphismMap::from_definition(def, tol).map_err(as_map_error)
            }
            MapSpec::File { file } => {
                let path = self.base_dir.join(file);
                let text = fs::read_to_string(&path)
                    .map_err(|e| Error::config("map.file", format!("{}: {e}", path.display())))?;
                EndomorphismMap::from_json(&text, tol).map_err(as_map_error)
            }
        }
    }

    pub fn experiment(&self) -> Result<ExperimentSpec> {
        ExperimentSpec::from_parts(&self.config.experiment, &self.config.params)
    }

    pub fn context(&self) -> Context {
        Context::new(self.config.tolerances.clone(), self.config.seed).with_digest(&self.digest)
    }
}

/// Compact JSON with object keys sorted at every level.
pub fn canonical_json(value: &serde_json::Value) -> String {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .iter()
                .map(|k| {
                    format!(
                        "{}:{}",
                        serde_json::to_string(k).expect("string key"),
                        canonical_json(&map[k.as_str()])
                    )
                })
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => {
            let body: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", body.join(","))
        }
        other => other.to_string(),
    }
}

/// SHA-256 of the canonical config, ignoring `output_dir`.
pub fn config_digest(value: &serde_json::Value) -> String {
    let mut v = value.clone();
    if let Some(obj) = v.as_object_mut() {
        obj.remove("output_dir");
    }
    hex::encode(Sha256::digest(canonical_json(&v).as_bytes()))
}

/// Parse config text, apply command-line overrides, then digest and
/// deserialize it strictly.
pub fn load_config_str(
    text: &str,
    seed: Option<u64>,
    deterministic: bool,
    base_dir: &Path,
) -> Result<LoadedConfig> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::config("config", "top level must be a JSON object"))?;
    if let Some(s) = seed {
        obj.insert("seed".into(), s.into());
    }
    if deterministic {
        obj.insert("deterministic".into(), true.into());
    }
    let digest = config_digest(&value);
    let config: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let message = e.into_inner().to_string();
        let key = if path == "." {
            // Missing or unknown top-level fields carry the name in the message.
            message
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "config".into())
        } else {
            path
        };
        Error::config(key, message)
    })?;
    Ok(LoadedConfig {
        config,
        digest,
        base_dir: base_dir.to_path_buf(),
    })
}

pub fn load_config(path: &Path, seed: Option<u64>, deterministic: bool) -> Result<LoadedConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    load_config_str(&text, seed, deterministic, &base)
}

/// Map from a preset string, inline JSON, or a definition file path.
pub fn parse_map_arg(spec: &str, tol: &Tolerances) -> Result<EndomorphismMap> {
    let spec = spec.trim();
    if spec.starts_with('{') {
        return EndomorphismMap::from_json(spec, tol);
    }
    let path = Path::new(spec);
    if path.is_file() {
        return EndomorphismMap::from_json(&fs::read_to_string(path)?, tol);
    }
    EndomorphismMap::from_definition(&MapDefinition::preset(spec, 1), tol)
}

/// Run a loaded config and write its outputs under `out_root/<digest>/`.
pub fn execute(loaded: &LoadedConfig, out_root: &Path) -> Result<(ExperimentReport, PathBuf)> {
    let f = loaded.build_map()?;
    let spec = loaded.experiment()?;
    let mut report = spec.run(&f, &loaded.context())?;
    if loaded.config.deterministic {
        report.notes.push("deterministic run".into());
    }
    let dir = report.write_outputs(out_root)?;
    Ok((report, dir))
}

pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::Pass | Status::Report => EXIT_PASS,
        Status::Fail => EXIT_FAIL,
        Status::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(fs::File::create(p)?))
        }
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn require_config(cli: &Cli) -> Result<LoadedConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::config("--config", "this subcommand needs --config PATH"))?;
    load_config(path, cli.seed, cli.deterministic)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Run => {
            let loaded = require_config(cli)?;
            let root = cli
                .out
                .clone()
                .or_else(|| loaded.config.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out"));
            let (report, dir) = execute(&loaded, &root)?;
            let mut verdicts = Vec::new();
            report.write_verdicts(&mut verdicts)?;
            print!("{}", String::from_utf8_lossy(&verdicts));
            println!("outputs: {}", dir.display());
            Ok(exit_code(report.overall()))
        }
        Command::Fiber {
            map,
            target,
            depth,
            format,
        } => {
            let tol = Tolerances::default();
            let f = parse_map_arg(map, &tol)?;
            let a = parse_point(target)?;
            let cloud = backward_orbit(&f, &a, *depth, FiberMode::Exact, &tol)?;
            let mut out = output(&cli.out)?;
            match format {
                FiberFormat::Csv => write_cloud_csv(&mut out, &cloud)?,
                FiberFormat::Binary => write_cloud_binary(&mut out, &cloud)?,
            }
            out.flush()?;
            eprintln!(
                "total_weight={} distinct_atoms={}",
                cloud.total_weight(),
                cloud.atoms.len()
            );
            Ok(EXIT_PASS)
        }
        Command::Green { map, points, depth } => {
            let tol = Tolerances::default();
            let f = parse_map_arg(map, &tol)?;
            let text = fs::read_to_string(points)?;
            let mut rows = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let z = parse_lift(line).map_err(|e| {
                    Error::InvalidArgument(format!("{} line {}: {e}", points.display(), i + 1))
                })?;
                let g = green_value(&f, &z, *depth)?;
                rows.push((z, g));
            }
            let mut out = output(&cli.out)?;
            write_green_csv(&mut out, f.dim(), &rows)?;
            out.flush()?;
            Ok(EXIT_PASS)
        }
        Command::Presets => {
            println!("map presets:");
            for (name, what) in PRESET_HELP {
                println!("  {name:<30} {what}");
            }
            println!("experiments:");
            for (name, what) in EXPERIMENTS {
                println!("  {name:<30} {what}");
            }
            Ok(EXIT_PASS)
        }
        Command::Validate => {
            let loaded = require_config(cli)?;
            let f = loaded.build_map()?;
            let spec = loaded.experiment()?;
            let cert = f.certificate();
            println!("map: {}", f.describe());
            println!(
                "certificate: {:?} witness {:e} threshold {:e}{}",
                cert.method,
                cert.witness,
                cert.threshold,
                if cert.heuristic { " (heuristic)" } else { "" }
            );
            println!("experiment: {}", spec.name());
            println!("config_digest: {}", loaded.digest);
            Ok(EXIT_PASS)
        }
    }
}

/// Parse arguments, run, and return the exit code. Diagnostics go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_ERROR
            } else {
                EXIT_PASS
            };
            let _ = e.print();
            return code;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_ERROR;
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_ERROR;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_json_sorts_nested_keys() {
        let v: serde_json::Value =
            serde_json::from_str(r#"{"b": {"y": 1, "x": [2, {"q": 0, "p": 1}]}, "a": "s"}"#)
                .unwrap();
        assert_eq!(
            canonical_json(&v),
            r#"{"a":"s","b":{"x":[2,{"p":1,"q":0}],"y":1}}"#
        );
    }

    #[test]
    fn digest_ignores_order_whitespace_and_output_dir() {
        let a = r#"{"map": "power(2)", "experiment": "counting", "seed": 4}"#;
        let b = "{\n  \"seed\":4,\"experiment\" : \"counting\",\n \"map\":\"power(2)\", \"output_dir\": \"x\"}";
        let la = load_config_str(a, None, false, Path::new(".")).unwrap();
        let lb = load_config_str(b, None, false, Path::new(".")).unwrap();
        assert_eq!(la.digest, lb.digest);
        let lc = load_config_str(a, Some(5), false, Path::new(".")).unwrap();
        assert_ne!(la.digest, lc.digest);
        assert_eq!(lc.config.seed, 5);
    }

    #[test]
    fn unknown_top_level_key_is_named() {
        let err = load_config_str(
            r#"{"map": "power(2)", "experiment": "counting", "sead": 1}"#,
            None,
            false,
            Path::new("."),
        )
        .unwrap_err();
        assert!(
            matches!(&err, Error::Config { key, .. } if key == "sead"),
            "{err}"
        );
    }

    #[test]
    fn nested_tolerance_key_is_named() {
        let err = load_config_str(
            r#"{"map": "power(2)", "experiment": "counting", "tolerances": {"residual": "x"}}"#,
            None,
            false,
            Path::new("."),
        )
        .unwrap_err();
        assert!(
            matches!(&err, Error::Config { key, .. } if key == "tolerances.residual"),
            "{err}"
        );
    }

    #[test]
    fn degenerate_map_is_a_map_error() {
        let cfg = r#"{"map": {"dim": 1, "components": [[{"exps": [1, 1], "re": 1}], [{"exps": [0, 2], "re": 1}]]}, "experiment": "counting"}"#;
        let loaded = load_config_str(cfg, None, false, Path::new(".")).unwrap();
        let err = loaded.build_map().unwrap_err();
        assert!(
            matches!(&err, Error::Config { key, message } if key == "map" && message.contains("degenerate")),
            "{err}"
        );
    }

    #[test]
    fn map_argument_forms() {
        let tol = Tolerances::default();
        assert_eq!(parse_map_arg("power(3)", &tol).unwrap().degree(), 3);
        let inline = r#"{"dim": 1, "components": "quadratic_family(-1, 0)"}"#;
        assert_eq!(parse_map_arg(inline, &tol).unwrap().degree(), 2);
        assert!(parse_map_arg("cubic(1)", &tol).is_err());
    }
}
