use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coopdelay::config::RunConfig;
use coopdelay::integrator::{write_csv, RunStatus};
use coopdelay::pipeline::{classify_config, run_config, Report};
use coopdelay::presets::{preset_config, CATALOG};

#[derive(Parser)]
#[command(
    name = "coopdelay",
    version,
    about = "Simulate and classify planar cooperative delay systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate, classify, integrate and certify one config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Analysis only; writes the report without integrating.
    Classify {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Built-in system families.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Run every *.toml config in a directory, one worker per config.
    Batch {
        dir: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print (or write) the config for a preset.
    Emit {
        name: String,
        /// Parameter override, repeatable.
        #[arg(long = "param", value_name = "KEY=VALUE", value_parser = parse_param)]
        params: Vec<(String, f64)>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Default)]
struct Overrides {
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Directory that relative output paths are resolved against.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code: code as u8,
            message: message.into(),
        }
    }
}

fn load(path: &Path, o: &Overrides) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(path).map_err(|e| Failure::new(2, format!("validate: {e}")))?;
    if let Some(dt) = o.dt {
        cfg.numerics.dt = Some(dt);
    }
    if let Some(h) = o.horizon {
        cfg.numerics.horizon = h;
    }
    cfg.check_numerics()
        .map_err(|e| Failure::new(2, format!("validate: {e}")))?;
    Ok(cfg)
}

fn out_path(o: &Overrides, p: &str) -> PathBuf {
    match &o.out_dir {
        Some(d) => d.join(p),
        None => PathBuf::from(p),
    }
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>) -> Result<(), Failure> {
    let io_err = |e: io::Error| Failure::new(1, format!("output: {}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    write(&mut w).and_then(|_| w.flush()).map_err(io_err)
}

fn write_report(path: &Path, rep: &Report) -> Result<(), Failure> {
    write_file(path, |w| writeln!(w, "{}", rep.to_json()))
}

fn summary(rep: &Report) -> String {
    let mut s = format!("fate {}", rep.fate.name());
    if let Some(k) = rep.k {
        s += &format!(" (K = {k:.10})");
    }
    if let Some(o) = &rep.outcome {
        s += &match o.status {
            RunStatus::ConvergedTo { x, y } => format!(", converged to ({x:.6}, {y:.6}) at t = {}", o.final_time),
            RunStatus::BlowUpAt { t } => format!(", blow-up at t = {t}"),
            RunStatus::ExtinctBy { t } => format!(", extinct by t = {t}"),
            RunStatus::ReachedHorizon => {
                let (x, y) = o.final_state;
                format!(", reached horizon {} at ({x:.6e}, {y:.6e})", o.final_time)
            }
        };
    }
    if let Some(c) = &rep.certification {
        s += &format!(", certification {}", c.status.as_str());
    }
    if !rep.caveats.is_empty() {
        let tags: Vec<_> = rep.caveats.iter().map(|c| c.tag()).collect();
        s += &format!(" [caveats: {}]", tags.join(", "));
    }
    s
}

fn run(path: &Path, o: &Overrides) -> Result<(String, i32), Failure> {
    let cfg = load(path, o)?;
    let res = run_config(&cfg).map_err(|e| Failure::new(e.exit_code(), e.to_string()))?;
    let csv = out_path(o, &cfg.outputs.trajectory);
    write_file(&csv, |w| write_csv(&res.trajectory, w, cfg.outputs.stride))?;
    write_report(&out_path(o, &cfg.outputs.report), &res.report)?;
    Ok((summary(&res.report), res.report.exit_code()))
}

fn classify(path: &Path, o: &Overrides) -> Result<(String, i32), Failure> {
    let cfg = load(path, o)?;
    let rep = classify_config(&cfg).map_err(|e| Failure::new(e.exit_code(), e.to_string()))?;
    write_report(&out_path(o, &cfg.outputs.report), &rep)?;
    Ok((summary(&rep), 0))
}

fn batch(dir: &Path, o: &Overrides) -> Result<(String, i32), Failure> {
    let mut configs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::new(2, format!("validate: {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    configs.sort();
    let base = o.out_dir.clone().unwrap_or_else(|| dir.to_path_buf());
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|p| {
                let stem = p.file_stem().unwrap_or_default().to_owned();
                let o = Overrides {
                    out_dir: Some(base.join(stem)),
                    ..o.clone()
                };
                s.spawn(move || run(p, &o))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut code = 0;
    let mut lines = Vec::new();
    for (p, r) in configs.iter().zip(results) {
        match r {
            Ok((s, c)) => {
                code = code.max(c);
                lines.push(format!("{}: {s}", p.display()));
            }
            Err(f) => {
                code = code.max(f.code as i32);
                lines.push(format!("{}: error {}", p.display(), f.message));
            }
        }
    }
    Ok((lines.join("\n"), code))
}

fn preset(action: PresetAction) -> Result<(String, i32), Failure> {
    match action {
        PresetAction::List => {
            let mut out = String::new();
            for p in CATALOG {
                out += &format!("{}\n    {}\n", p.name, p.summary);
                for q in p.params {
                    out += &format!("    --param {}={} ({})\n", q.name, q.default, q.doc);
                }
            }
            Ok((out.trim_end().to_string(), 0))
        }
        PresetAction::Emit { name, params, output } => {
            let cfg = preset_config(&name, &params).map_err(|e| Failure::new(2, format!("validate: {e}")))?;
            let text = cfg.to_toml_string();
            match output {
                Some(path) => {
                    write_file(&path, |w| w.write_all(text.as_bytes()))?;
                    Ok((format!("wrote {}", path.display()), 0))
                }
                None => Ok((text.trim_end().to_string(), 0)),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run { config, overrides } => run(&config, &overrides),
        Command::Classify { config, overrides } => classify(&config, &overrides),
        Command::Preset { action } => preset(action),
        Command::Batch { dir, overrides } => batch(&dir, &overrides),
    };
    match res {
        Ok((msg, code)) => {
            println!("{msg}");
            ExitCode::from(code as u8)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
