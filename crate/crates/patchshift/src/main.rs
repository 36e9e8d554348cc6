use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use patchshift::checkpoint;
use patchshift::complexity::{complexity_rows, format_table};
use patchshift::config::{load_config, parse_overrides, RunConfig};
use patchshift::dataset_io;
use patchshift::pattern_io::{content_hash, load_pattern, render_pgm};
use patchshift::run::{dataset_for, run};
use patchshift::{CliError, Result};
use patchshift_core::patterns::{pattern_metrics, tile_offsets, OffsetGrid};
use patchshift_core::synth::gen_dataset;
use patchshift_core::train::evaluate;

/// Temporal patch shift experiments: patterns, synthetic data, training and complexity.
#[derive(Parser)]
#[command(name = "patchshift", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a shift pattern, its metrics and optionally render it as PGM.
    Pattern(PatternArgs),
    /// Generate a synthetic dataset (JSON sidecar + binary blob).
    GenData(GenDataArgs),
    /// Train a model; writes metrics.csv, summary.json and a checkpoint.
    Run(RunArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Attention cost of joint, divided, sparse and patch-shift attention.
    Complexity(ComplexityArgs),
}

#[derive(Args)]
struct PatternArgs {
    /// Built-in name (none, center_one, uneven_half, even2, bayerA, B4, C9, D16) or a pattern file.
    pattern: String,
    /// Tile the pattern over a HxW patch grid.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    /// Write a grayscale PGM of the (tiled) offsets.
    #[arg(long)]
    render: Option<PathBuf>,
    /// Pixels per cell in the PGM.
    #[arg(long, default_value_t = 16)]
    cell: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted overrides, e.g. `--model.pattern C9 --optim.lr=0.05`.
    #[arg(
        trailing_var_arg = true,
        allow_hyphen_values = true,
        value_name = "OVERRIDES"
    )]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let overrides = parse_overrides(&self.overrides)?;
        load_config(self.config.as_deref(), &overrides)
    }
}

#[derive(Args)]
struct GenDataArgs {
    /// Output directory (default: the run's output directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "dataset")]
    stem: String,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct RunArgs {
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    quiet: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset sidecar; defaults to the data the checkpoint's run used.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Evaluate the training split instead of validation.
    #[arg(long)]
    train: bool,
}

#[derive(Args)]
struct ComplexityArgs {
    /// Spatial tokens per frame.
    #[arg(long = "N", visible_alias = "tokens")]
    tokens: usize,
    /// Frames.
    #[arg(long = "T", visible_alias = "frames")]
    frames: usize,
    /// Channel width.
    #[arg(long = "D", visible_alias = "dim")]
    dim: usize,
    #[arg(long, default_value_t = 1)]
    heads: usize,
    /// Tokens per attention window (patch shift); defaults to N.
    #[arg(long)]
    window: Option<usize>,
    /// Fraction of token pairs kept by sparse/local attention.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Execute joint and patch-shift layers and report tallied MACs.
    #[arg(long)]
    measure: bool,
    #[arg(long)]
    json: bool,
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got '{s}'"))?;
    let h: usize = h.parse().map_err(|_| format!("bad height in '{s}'"))?;
    let w: usize = w.parse().map_err(|_| format!("bad width in '{s}'"))?;
    if h == 0 || w == 0 {
        return Err("grid extents must be positive".into());
    }
    Ok((h, w))
}

fn format_grid(grid: &OffsetGrid) -> String {
    let mut s = String::new();
    for r in 0..grid.height() {
        let cells: Vec<String> = (0..grid.width())
            .map(|c| match grid.get(r, c) {
                o if o > 0 => format!("+{o}"),
                o => o.to_string(),
            })
            .collect();
        s.push_str(&format!("[{}]\n", cells.join(", ")));
    }
    s
}

fn cmd_pattern(a: PatternArgs) -> Result<()> {
    let p = load_pattern(&a.pattern)?;
    let (h, w) = a.grid.unwrap_or((p.height(), p.width()));
    let grid = tile_offsets(&p, h, w);
    let m = pattern_metrics(&p);
    let hash = content_hash(&p);
    if let Some(path) = &a.render {
        if a.cell == 0 {
            return Err(CliError::Config("--cell must be positive".into()));
        }
        std::fs::write(path, render_pgm(&grid, a.cell)).map_err(CliError::io(path))?;
    }
    let counts = grid.offset_counts();
    if a.json {
        let v = serde_json::json!({
            "name": p.name(),
            "pattern": p.rows(),
            "grid": [h, w],
            "offsets": grid.offsets().chunks(w).collect::<Vec<_>>(),
            "counts": counts.iter().map(|(k, v)| (k.to_string(), *v)).collect::<std::collections::BTreeMap<_, _>>(),
            "metrics": m,
            "hash": hash,
        });
        println!("{}", serde_json::to_string_pretty(&v).expect("json"));
        return Ok(());
    }
    println!(
        "pattern {} ({}x{}), grid {}x{}",
        p.name(),
        p.height(),
        p.width(),
        h,
        w
    );
    print!("{}", format_grid(&grid));
    println!("receptive_field {}", m.receptive_field);
    println!("shift {:.1}%", 100.0 * m.shift_pct);
    println!("evenness {:.4}", m.evenness);
    let counts: Vec<String> = counts.iter().map(|(k, v)| format!("{k:+}:{v}")).collect();
    println!("counts {}", counts.join(" "));
    println!("hash {hash}");
    Ok(())
}

fn cmd_gen_data(a: GenDataArgs) -> Result<()> {
    let cfg = a.config.load()?;
    cfg.task
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let data = gen_dataset(&cfg.task, cfg.data_seed)?;
    let dir = a.out.unwrap_or_else(|| cfg.output_dir());
    let path = dataset_io::save(&dir, &a.stem, &data)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let cfg = a.config.load()?;
    if !a.quiet {
        eprintln!("run {} -> {}", cfg.name, cfg.output_dir().display());
    }
    let out = run(&cfg)?;
    if !a.quiet {
        for r in &out.summary.epochs {
            eprintln!(
                "epoch {:>3}  loss {:.4}  val_top1 {:.4}",
                r.epoch, r.train_loss, r.val_top1
            );
        }
    }
    let e = &out.summary.final_eval;
    println!(
        "{} variant={} params={} val_top1={:.4} val_loss={:.4}",
        cfg.name,
        cfg.model.variant.name(),
        out.summary.param_count,
        e.top1,
        e.loss
    );
    println!("metrics {}", out.csv.display());
    if let Some(c) = &out.checkpoint {
        println!("checkpoint {}", c.display());
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let (model, header) = checkpoint::load(&a.checkpoint)?;
    let data = match &a.data {
        Some(p) => dataset_io::load(p)?,
        None => {
            let run_cfg: RunConfig = header
                .run
                .clone()
                .ok_or_else(|| {
                    CliError::Config("checkpoint has no run configuration; pass --data".into())
                })
                .and_then(|v| {
                    serde_json::from_value(v)
                        .map_err(|e| CliError::Data(format!("checkpoint run configuration: {e}")))
                })?;
            dataset_for(&run_cfg)?
        }
    };
    let split = if a.train { &data.train } else { &data.val };
    let e = evaluate(&model, split)?;
    let v = serde_json::json!({
        "checkpoint": a.checkpoint,
        "split": if a.train { "train" } else { "val" },
        "pattern_hash": header.pattern_hash,
        "eval": e,
    });
    println!("{}", serde_json::to_string_pretty(&v).expect("json"));
    Ok(())
}

fn cmd_complexity(a: ComplexityArgs) -> Result<()> {
    let window = a.window.unwrap_or(a.tokens);
    let rows = complexity_rows(
        a.tokens, a.frames, a.dim, a.heads, window, a.alpha, a.measure,
    )?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&rows).expect("json"));
    } else {
        println!(
            "N={} T={} D={} heads={} window={}",
            a.tokens, a.frames, a.dim, a.heads, window
        );
        print!("{}", format_table(&rows));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pattern(a) => cmd_pattern(a),
        Command::GenData(a) => cmd_gen_data(a),
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Complexity(a) => cmd_complexity(a),
    };
    let _ = std::io::stdout().flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
