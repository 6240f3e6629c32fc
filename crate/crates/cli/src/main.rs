use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clinn::config::RunConfig;
use clinn::evalreport::{export_prediction, improvement_ratio, metrics, predict, EvalSet, MetricsRecord};
use clinn::harness::{run_matrix, run_to_dir_with, write_metrics, Matrix, METRICS_FILE};
use clinn::indicator::IndicatorParams;
use clinn::loss::Method;
use clinn::network::{NetworkError, NetworkParams};
use clinn::oracle::exact_grid;
use clinn::problems::{get_problem, CaseId, Grid, ProblemSpec};
use clinn::shockgeom::{analyze, default_offset, flag_field};
use serde_json::{Map, Value};

#[derive(Parser)]
#[command(name = "clinn", version, about = "Conservation-law-informed neural networks for scalar conservation laws")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and write a run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint against the exact solution and export plots.
    Eval(EvalArgs),
    /// Run the shock indicator on a prediction or on the exact solution.
    Indicate(FieldArgs),
    /// Fit shock tracks and RH targets on a prediction or the exact solution.
    Shocks(ShockArgs),
    /// Tabulate metrics files with improvement ratios against the PINN entry.
    Compare(CompareArgs),
    /// Train a case x method x seed matrix and write a consolidated report.
    Matrix(MatrixArgs),
}

#[derive(Args, Default)]
struct ConfigArgs {
    /// Flat JSON file with RunConfig fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Test case: 1A, 1B, 2A, 2B, 3A, 3B or 2D.
    #[arg(long)]
    case: Option<String>,
    /// Loss preset: clinn, ifnn, pinnwe or pinn.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Start from the reduced desk-scale settings instead of the full ones.
    #[arg(long)]
    desk: bool,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    /// Epochs per phase, comma separated; a single value applies to every phase.
    #[arg(long)]
    epochs: Option<String>,
    /// Number of refinement rounds.
    #[arg(long)]
    rar: Option<usize>,
    #[arg(long)]
    npt: Option<usize>,
    #[arg(long)]
    weq: Option<f64>,
    #[arg(long)]
    wif: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    grid_nx: Option<usize>,
    #[arg(long)]
    grid_nt: Option<usize>,
    #[arg(long)]
    eval_nx: Option<usize>,
    #[arg(long)]
    eval_nt: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    /// Offset of the RH side samples from the fitted shock.
    #[arg(long)]
    h_offset: Option<f64>,
    /// Record per-epoch wall time in history.csv.
    #[arg(long)]
    wall_time: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory; defaults to runs/<case>_<method>_s<seed>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print losses every N epochs (0 disables).
    #[arg(long, default_value_t = 500)]
    progress: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    case: String,
    /// Preset recorded in metrics.json.
    #[arg(long, default_value = "clinn")]
    method: String,
    /// Expected width; a checkpoint of another width is rejected.
    #[arg(long)]
    width: Option<usize>,
    /// Expected depth; a checkpoint of another depth is rejected.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    eval_nx: Option<usize>,
    #[arg(long)]
    eval_nt: Option<usize>,
    /// Output directory; defaults to an `eval` directory next to the checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FieldArgs {
    #[arg(long)]
    case: String,
    /// Network to analyze; the exact solution is used when absent.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Nodes per spatial axis (512 in 1D, 128 in 2D by default).
    #[arg(long)]
    grid_nx: Option<usize>,
    /// Time levels (64 in 1D, 32 in 2D by default).
    #[arg(long)]
    grid_nt: Option<usize>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// List every node, not only flagged ones.
    #[arg(long)]
    all: bool,
}

#[derive(Args)]
struct ShockArgs {
    #[command(flatten)]
    field: FieldArgs,
    #[arg(long)]
    h_offset: Option<f64>,
}

#[derive(Args)]
struct CompareArgs {
    /// metrics.json files (or run directories containing one).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct MatrixArgs {
    /// Comma-separated case ids; an empty list gives an empty report.
    #[arg(long, default_value = "1B")]
    cases: String,
    #[arg(long, default_value = "clinn,ifnn,pinnwe,pinn")]
    methods: String,
    #[arg(long, default_value = "7,11,13")]
    seeds: String,
    #[arg(long, default_value = "matrix")]
    out: PathBuf,
    /// Concurrent runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Use the full-scale settings instead of the desk-scale ones.
    #[arg(long)]
    full: bool,
    /// Epochs per phase, comma separated.
    #[arg(long)]
    epochs: Option<String>,
}

/// An error with the process exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self {
            code: 1,
            message: format!("{}: {e}", path.display()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Indicate(a) => cmd_indicate(a),
        Command::Shocks(a) => cmd_shocks(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Matrix(a) => cmd_matrix(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn parse_case(s: &str) -> Result<CaseId, Failure> {
    s.parse().map_err(|e| Failure::usage(format!("{e}")))
}

fn parse_method(s: &str) -> Result<Method, Failure> {
    s.parse().map_err(|e| Failure::usage(format!("{e}")))
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T, Failure>) -> Result<Vec<T>, Failure> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(item).collect()
}

fn parse_epochs(s: &str) -> Result<Vec<usize>, Failure> {
    parse_list(s, |p| p.parse().map_err(|_| Failure::usage(format!("invalid epoch count `{p}`"))))
}

/// Config file fields, overridden by flags, on top of the full or desk defaults.
fn build_config(a: &ConfigArgs) -> Result<RunConfig, Failure> {
    let mut fields = Map::new();
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        match serde_json::from_str(&text) {
            Ok(Value::Object(m)) => fields = m,
            Ok(_) => return Err(Failure::usage(format!("{}: expected a JSON object", path.display()))),
            Err(e) => return Err(Failure::usage(format!("{}: {e}", path.display()))),
        }
    }
    if let Some(c) = &a.case {
        fields.insert("case".into(), parse_case(c)?.as_str().into());
    }
    if let Some(m) = &a.method {
        fields.insert("method".into(), parse_method(m)?.as_str().into());
    }
    let mut set = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            fields.insert(k.into(), v);
        }
    };
    set("seed", a.seed.map(Value::from));
    set("width", a.width.map(Value::from));
    set("depth", a.depth.map(Value::from));
    set("rar_rounds", a.rar.map(Value::from));
    set("n_pt", a.npt.map(Value::from));
    set("w_eq", a.weq.map(Value::from));
    set("w_if", a.wif.map(Value::from));
    set("lr", a.lr.map(Value::from));
    set("grid_nx", a.grid_nx.map(Value::from));
    set("grid_nt", a.grid_nt.map(Value::from));
    set("eval_nx", a.eval_nx.map(Value::from));
    set("eval_nt", a.eval_nt.map(Value::from));
    set("eval_every", a.eval_every.map(Value::from));
    set("h_offset", a.h_offset.map(Value::from));
    if a.wall_time {
        set("record_wall_time", Some(true.into()));
    }
    let epochs = a.epochs.as_deref().map(parse_epochs).transpose()?;
    if let Some(e) = &epochs {
        fields.insert("epochs".into(), e.clone().into());
    }

    let case = match fields.get("case") {
        Some(v) => parse_case(v.as_str().unwrap_or_default())?,
        None => return Err(Failure::usage("no case given (use --case or a config file)")),
    };
    let method = match fields.get("method") {
        Some(v) => parse_method(v.as_str().unwrap_or_default())?,
        None => Method::Clinn,
    };
    let seed = fields.get("seed").and_then(Value::as_u64).unwrap_or(0);
    let base = if a.desk {
        RunConfig::desk(case, method, seed)
    } else {
        RunConfig::paper(case, method)
    };
    let mut cfg = base
        .overlay_json(&Value::Object(fields.clone()).to_string())
        .map_err(|e| Failure::usage(e.to_string()))?;
    // a single epoch count, or a round count without epochs, fills every phase
    let phases = cfg.rar_rounds + 1;
    if cfg.epochs.len() != phases && (epochs.as_ref().is_some_and(|e| e.len() == 1) || !fields.contains_key("epochs")) {
        let fill = *cfg.epochs.last().unwrap_or(&0);
        cfg.epochs.resize(phases, fill);
        if epochs.as_ref().is_some_and(|e| e.len() == 1) {
            cfg.epochs = vec![fill; phases];
        }
    }
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(cfg)
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let mut cfg = build_config(&a.config)?;
    let dir = a
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}_{}_s{}", cfg.case, cfg.method, cfg.seed)));
    cfg.out = Some(dir.clone());
    let every = a.progress;
    let run = run_to_dir_with(&cfg, &dir, |r| {
        if every > 0 && r.epoch % every == 0 {
            eprintln!(
                "epoch {:>6}  total {:.4e}  gov {:.3e} ic {:.3e} bc {:.3e} im {:.3e} bd {:.3e} rh {:.3e}{}",
                r.epoch,
                r.total,
                r.gov,
                r.ic,
                r.bc,
                r.im,
                r.bd,
                r.rh,
                r.eval_mse.map(|m| format!("  eval {m:.4e}")).unwrap_or_default()
            );
        }
    })
    .map_err(|e| Failure {
        code: e.exit_code() as u8,
        message: e.to_string(),
    })?;
    let m = &run.metrics;
    let best = run.outcome.history.best.expect("completed runs are evaluated");
    println!(
        "{} {} seed {}: MSE_All {:.4e} (best at epoch {}), wrote {}",
        m.case,
        m.method,
        cfg.seed,
        m.mse_all,
        best.epoch,
        dir.display()
    );
    Ok(())
}

fn load_checkpoint(path: &Path, spec: &ProblemSpec) -> Result<NetworkParams, Failure> {
    let params = NetworkParams::load(path).map_err(|e| match e {
        NetworkError::Io { .. } => Failure::usage(format!("cannot read checkpoint: {e}")),
        other => Failure::usage(format!("invalid checkpoint {}: {other}", path.display())),
    })?;
    if params.arch().input_dim != spec.input_dim() {
        return Err(Failure::usage(format!(
            "checkpoint takes {} inputs but case {} has {}",
            params.arch().input_dim,
            spec.id,
            spec.input_dim()
        )));
    }
    Ok(params)
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let case = parse_case(&a.case)?;
    let method = parse_method(&a.method)?;
    let spec = get_problem(case);
    let params = load_checkpoint(&a.checkpoint, &spec)?;
    let arch = params.arch();
    if a.width.is_some_and(|w| w != arch.width) || a.depth.is_some_and(|d| d != arch.depth) {
        return Err(Failure::usage(format!(
            "checkpoint has width {} and depth {}, expected width {} and depth {}",
            arch.width,
            arch.depth,
            a.width.map_or("any".into(), |w| w.to_string()),
            a.depth.map_or("any".into(), |d| d.to_string()),
        )));
    }
    let defaults = RunConfig::paper(case, method);
    let set = EvalSet::new(&spec, a.eval_nx.unwrap_or(defaults.eval_nx), a.eval_nt.unwrap_or(defaults.eval_nt))
        .map_err(|e| Failure::usage(e.to_string()))?;
    let dir = a.out.unwrap_or_else(|| {
        a.checkpoint
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("eval")
    });
    let m = metrics(&set, method, &params).map_err(|e| Failure {
        code: 3,
        message: e.to_string(),
    })?;
    export_prediction(&params, &spec, &set, &dir).map_err(|e| Failure::io(&dir, e))?;
    write_metrics(&dir.join(METRICS_FILE), &m).map_err(|e| Failure::io(&dir, e))?;
    println!(
        "{case} {method}: MSE_All {:.4e}  MSE_T1..T4 {:.4e} {:.4e} {:.4e} {:.4e}, wrote {}",
        m.mse_all,
        m.mse_t1,
        m.mse_t2,
        m.mse_t3,
        m.mse_t4,
        dir.display()
    );
    Ok(())
}

/// Values on the analysis grid: the network's prediction or the exact solution.
fn field_values(a: &FieldArgs) -> Result<(ProblemSpec, Grid, Vec<f64>), Failure> {
    let spec = get_problem(parse_case(&a.case)?);
    let two_d = spec.dim() == 2;
    let nx = a.grid_nx.unwrap_or(if two_d { 128 } else { 512 });
    let nt = a.grid_nt.unwrap_or(if two_d { 32 } else { 64 });
    let grid = Grid::new(&spec, nx, nt).map_err(|e| Failure::usage(e.to_string()))?;
    let values = match &a.checkpoint {
        Some(path) => {
            let params = load_checkpoint(path, &spec)?;
            predict(&params, &grid).map_err(|e| Failure {
                code: 3,
                message: e.to_string(),
            })?
        }
        None => exact_grid(spec.id, &grid).map_err(|e| Failure {
            code: 3,
            message: e.to_string(),
        })?,
    };
    Ok((spec, grid, values))
}

fn emit(out: &Option<PathBuf>, text: &str) -> CmdResult {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_indicate(a: FieldArgs) -> CmdResult {
    let (spec, grid, values) = field_values(&a)?;
    let field = flag_field(&spec, &grid, &values, &IndicatorParams::default()).map_err(|e| Failure::usage(e.to_string()))?;
    let mut csv = String::from(if grid.dim == 1 { "t,x,u,out,flag\n" } else { "t,x,y,u,out,flag\n" });
    let mut flagged = 0;
    for (k, slice) in field.slices.iter().enumerate() {
        for s in 0..grid.slice_len() {
            let flag = slice.flags[s];
            flagged += usize::from(flag);
            if !(flag || a.all) {
                continue;
            }
            let g = k * grid.slice_len() + s;
            let p = grid.point(g);
            let _ = write!(csv, "{}", p[grid.dim]);
            for c in &p[..grid.dim] {
                let _ = write!(csv, ",{c}");
            }
            let _ = writeln!(csv, ",{},{},{}", values[g], slice.outputs[s], u8::from(flag));
        }
    }
    emit(&a.out, &csv)?;
    eprintln!("{flagged} flagged cells over {} time levels", grid.nt);
    Ok(())
}

fn cmd_shocks(a: ShockArgs) -> CmdResult {
    let (spec, grid, values) = field_values(&a.field)?;
    let field = flag_field(&spec, &grid, &values, &IndicatorParams::default()).map_err(|e| Failure::usage(e.to_string()))?;
    let h = a.h_offset.unwrap_or_else(|| default_offset(&grid));
    if !(h > 0.0 && h.is_finite()) {
        return Err(Failure::usage(format!("h_offset must be positive, got {h}")));
    }
    let geometry = analyze(&spec, &field, h);
    let mut csv = String::new();
    if grid.dim == 1 {
        csv.push_str("track_id,t,x,s\n");
        for (id, c) in geometry.curves.iter().enumerate() {
            for ((t, x), s) in c.samples.iter().zip(&c.speeds) {
                let _ = writeln!(csv, "{id},{t},{x},{s}");
            }
        }
        eprintln!("{} tracks, {} discontinuity points", geometry.curves.len(), geometry.pd.len());
    } else {
        csv.push_str("t,x,y,nx,ny,s\n");
        for tg in &geometry.targets {
            let p = &tg.point;
            let _ = writeln!(csv, "{},{},{},{},{},{}", p[2], p[0], p[1], tg.normal[0], tg.normal[1], tg.speed);
        }
        eprintln!("{} front points, {} discontinuity points", geometry.targets.len(), geometry.pd.len());
    }
    emit(&a.field.out, &csv)
}

fn read_metrics(path: &Path) -> Result<MetricsRecord, Failure> {
    let file = if path.is_dir() { path.join(METRICS_FILE) } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).map_err(|e| Failure::usage(format!("{}: {e}", file.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", file.display())))
}

/// Text table of MSE_T1..T4 and MSE_All with an improvement column when a
/// PINN entry is present.
fn comparison_table(entries: &[(String, MetricsRecord)]) -> Result<String, Failure> {
    let baseline = entries
        .iter()
        .position(|(_, m)| m.method == Method::Pinn)
        .filter(|_| entries.len() > 1);
    let mut s = String::new();
    let _ = write!(
        s,
        "{:<28} {:>11} {:>11} {:>11} {:>11} {:>11}",
        "method", "MSE_T1", "MSE_T2", "MSE_T3", "MSE_T4", "MSE_All"
    );
    if baseline.is_some() {
        let _ = write!(s, " {:>12}", "improvement");
    }
    s.push('\n');
    for (i, (label, m)) in entries.iter().enumerate() {
        let _ = write!(s, "{:<28}", label);
        for v in m.slice_mses().into_iter().chain([m.mse_all]) {
            let _ = write!(s, " {:>11.3e}", v);
        }
        if let Some(b) = baseline {
            if i == b {
                let _ = write!(s, " {:>12}", "baseline");
            } else {
                let r = improvement_ratio(m.mse_all, entries[b].1.mse_all).map_err(|e| Failure::usage(e.to_string()))?;
                let _ = write!(s, " {:>11.1}%", r);
            }
        }
        s.push('\n');
    }
    Ok(s)
}

fn cmd_compare(a: CompareArgs) -> CmdResult {
    let mut entries = Vec::new();
    for p in &a.inputs {
        let m = read_metrics(p)?;
        let label = format!("{} ({})", m.method, p.display());
        entries.push((label, m));
    }
    let case = entries[0].1.case;
    if let Some((_, other)) = entries.iter().find(|(_, m)| m.case != case) {
        return Err(Failure::usage(format!(
            "metrics mix cases {case} and {}; compare one case at a time",
            other.case
        )));
    }
    println!("case {case}");
    print!("{}", comparison_table(&entries)?);
    Ok(())
}

fn cmd_matrix(a: MatrixArgs) -> CmdResult {
    let matrix = Matrix {
        cases: parse_list(&a.cases, parse_case)?,
        methods: parse_list(&a.methods, parse_method)?,
        seeds: parse_list(&a.seeds, |s| {
            s.parse().map_err(|_| Failure::usage(format!("invalid seed `{s}`")))
        })?,
    };
    let epochs = a.epochs.as_deref().map(parse_epochs).transpose()?;
    let full = a.full;
    let config_for = |case, method, seed| {
        let mut c = if full {
            RunConfig {
                seed,
                ..RunConfig::paper(case, method)
            }
        } else {
            RunConfig::desk(case, method, seed)
        };
        if let Some(e) = &epochs {
            c.epochs = e.clone();
        }
        c
    };
    if let Some(e) = &epochs {
        for (case, method, seed) in matrix.entries() {
            config_for(case, method, seed)
                .validate()
                .map_err(|err| Failure::usage(format!("epochs {e:?}: {err}")))?;
        }
    }
    let report = run_matrix(&matrix, config_for, &a.out, a.jobs, |r| {
        match &r.metrics {
            Some(m) => eprintln!("{} {} seed {}: MSE_All {:.4e}", r.case, r.method, r.seed, m.mse_all),
            None => eprintln!(
                "{} {} seed {}: failed (exit {}): {}",
                r.case,
                r.method,
                r.seed,
                r.exit_code,
                r.error.as_deref().unwrap_or("")
            ),
        }
    })
    .map_err(|e| Failure {
        code: e.exit_code() as u8,
        message: e.to_string(),
    })?;
    print!("{}", report.to_markdown());
    Ok(())
}
