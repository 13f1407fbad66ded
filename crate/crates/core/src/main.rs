use std::collections::HashMap;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use pcal::active::{run_with, supervised_with, Dataset, ExperimentConfig, ExperimentLog, Separation};
use pcal::io::{load_cloud, load_labels, load_ply, save_cloud};
use pcal::learner::{AugmentConfig, Hyper, Learner, SoftmaxEnsembleLearner};
use pcal::metrics::{confusion, miou, miou_at_90, region_area};
use pcal::plot::curves_svg;
use pcal::regions::{RegionKind, RegionSet, SupervoxelParams};
use pcal::scene::{scene_pair, SceneSpec};
use pcal::selection::{Policy, RedalParams, SelectionBudget};
use pcal::{Error, PointCloud};

#[derive(Parser)]
#[command(name = "pcal", version, about = "Region-based active learning for point-cloud segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic training scene and its held-out twin.
    Generate(GenerateArgs),
    /// Run active-learning experiments and write one CSV per run.
    Run(Box<RunArgs>),
    /// Split a cloud into regions and print a summary.
    Separate(SeparateArgs),
    /// Score a prediction file against a labeled cloud.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output prefix; writes `<out>_train.alpc` and `<out>_eval.alpc`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Scene description (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    eval_offset: u64,
    #[arg(long)]
    partial_annotation: bool,
}

#[derive(Args, Clone)]
struct SeparationArgs {
    /// columns | supervoxels
    #[arg(long)]
    separation: Option<String>,
    /// Column edge length in meters; a comma list sweeps several.
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    min_pts: Option<usize>,
    #[arg(long)]
    ground_area: Option<f64>,
    #[arg(long)]
    ransac_iters: Option<usize>,
    #[arg(long)]
    inlier_threshold: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// Training cloud (.alpc or .ply); the default synthetic scene otherwise.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Held-out evaluation cloud.
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Evaluate on the training cloud's ground truth even when an eval cloud exists.
    #[arg(long)]
    eval_on_train: bool,
    /// Scene description used when no --train is given.
    #[arg(long)]
    scene_config: Option<PathBuf>,
    #[arg(long)]
    scene_seed: Option<u64>,
    #[arg(long)]
    eval_offset: Option<u64>,
    /// Class count for PLY input.
    #[arg(long)]
    classes: Option<usize>,
    /// Experiment settings (key = value lines, keys named like the flags).
    #[arg(long)]
    config: Option<PathBuf>,
    /// random | avg_var | avg_ent | redal | all
    #[arg(long)]
    policy: Option<String>,
    #[command(flatten)]
    separation: SeparationArgs,
    #[arg(long)]
    cycles: Option<usize>,
    /// Master seed; a comma list runs each seed.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    ensemble: Option<usize>,
    /// point_fraction | area_m2 | region_count
    #[arg(long)]
    budget_mode: Option<String>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    initial_budget_mode: Option<String>,
    #[arg(long)]
    initial_budget: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    /// Letters from SREC (scale, rotation, elastic, chromatic) or `none`.
    #[arg(long)]
    augment: Option<String>,
    #[arg(long)]
    k_neighbors: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    k_div: Option<usize>,
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long)]
    single_member: bool,
    /// Comma list of classes left out of the mIoU.
    #[arg(long)]
    ignore_class: Option<String>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also write learning curves with the mIoU@90 target.
    #[arg(long)]
    svg: bool,
    #[arg(long)]
    log_area: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SeparateArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    classes: Option<usize>,
    #[command(flatten)]
    separation: SeparationArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Region dump destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    cloud: PathBuf,
    /// One predicted label per line.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    ignore_class: Option<String>,
}

enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

fn usage(msg: impl Display) -> CliError {
    CliError::Usage(msg.to_string())
}

type CliResult<T> = std::result::Result<T, CliError>;

/// `key = value` settings from a config file.
#[derive(Default)]
struct Settings(HashMap<String, String>);

impl Settings {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map = HashMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("{}:{}: expected key = value", path.display(), n + 1)))?;
            map.insert(k.trim().replace('_', "-"), v.trim().to_string());
        }
        Ok(Self(map))
    }

    /// Flag value, else config-file value, else `default`.
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T>
    where
        T::Err: Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.0.get(key) {
            Some(s) => s.parse().map_err(|e| usage(format!("config key {key}: {e}"))),
            None => Ok(default),
        }
    }

    fn flag(&self, flag: bool, key: &str) -> CliResult<bool> {
        if flag {
            return Ok(true);
        }
        self.pick(None, key, false)
    }
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> CliResult<Vec<T>>
where
    T::Err: Display,
{
    let items = s
        .split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| usage(format!("bad {what} '{p}': {e}"))))
        .collect::<CliResult<Vec<T>>>()?;
    if items.is_empty() {
        return Err(usage(format!("empty {what} list")));
    }
    Ok(items)
}

fn parse_budget(mode: &str, amount: f64) -> CliResult<SelectionBudget> {
    let b = match mode {
        "point_fraction" => SelectionBudget::PointFraction(amount),
        "area_m2" => SelectionBudget::AreaM2(amount),
        "region_count" => {
            if amount.fract() != 0.0 || amount < 1.0 {
                return Err(usage(format!("region_count budget must be a positive integer, got {amount}")));
            }
            SelectionBudget::RegionCount(amount as usize)
        }
        other => return Err(usage(format!("unknown budget mode '{other}'"))),
    };
    b.validate().map_err(usage)?;
    Ok(b)
}

fn read_cloud(path: &Path, classes: Option<usize>) -> pcal::Result<PointCloud> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("ply") => load_ply(path, classes),
        _ => load_cloud(path),
    }
}

fn separations(args: &SeparationArgs, settings: &Settings, seed: u64) -> CliResult<Vec<Separation>> {
    let kind = settings.pick(args.separation.clone(), "separation", "columns".to_string())?;
    match kind.as_str() {
        "columns" => {
            let rs: Vec<f64> = parse_list(&settings.pick(args.r.clone(), "r", "0.5".to_string())?, "r")?;
            if let Some(bad) = rs.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
                return Err(usage(format!("column edge --r must be positive, got {bad}")));
            }
            Ok(rs.into_iter().map(|r| Separation::Columns { r }).collect())
        }
        "supervoxels" => {
            let d = SupervoxelParams::default();
            let p = SupervoxelParams {
                eps: settings.pick(args.eps, "eps", d.eps)?,
                min_pts: settings.pick(args.min_pts, "min-pts", d.min_pts)?,
                ground_region_target_area: settings.pick(args.ground_area, "ground-area", d.ground_region_target_area)?,
                ransac_iters: settings.pick(args.ransac_iters, "ransac-iters", d.ransac_iters)?,
                inlier_threshold: settings.pick(args.inlier_threshold, "inlier-threshold", d.inlier_threshold)?,
                kmeans_iters: d.kmeans_iters,
                seed,
            };
            if !(p.eps > 0.0) || p.min_pts == 0 || !(p.inlier_threshold > 0.0) || p.ransac_iters == 0 {
                return Err(usage("supervoxel parameters must be positive"));
            }
            Ok(vec![Separation::Supervoxels(p)])
        }
        other => Err(usage(format!("unknown separation '{other}' (columns, supervoxels)"))),
    }
}

fn cmd_generate(args: GenerateArgs) -> CliResult<()> {
    let mut spec = match &args.config {
        Some(p) => SceneSpec::load(p).map_err(|e| match e {
            Error::InvalidSpec(m) => usage(m),
            other => CliError::Runtime(other),
        })?,
        None => SceneSpec::default(),
    };
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    spec.partial_annotation |= args.partial_annotation;
    let (train, eval) = scene_pair(&spec, args.eval_offset)?;
    let prefix = args.out.to_string_lossy().into_owned();
    let train_path = PathBuf::from(format!("{prefix}_train.alpc"));
    let eval_path = PathBuf::from(format!("{prefix}_eval.alpc"));
    save_cloud(&train, &train_path)?;
    save_cloud(&eval, &eval_path)?;
    println!("{} {} points", train_path.display(), train.len());
    println!("{} {} points", eval_path.display(), eval.len());
    Ok(())
}

fn separation_tag(sep: &Separation, sweep: bool) -> String {
    match sep {
        Separation::Columns { r } if sweep => format!("columns-r{r}"),
        _ => sep.name().to_string(),
    }
}

fn cmd_run(args: RunArgs) -> CliResult<()> {
    let settings = Settings::load(args.config.as_deref())?;
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Runtime(Error::InvalidArgument(e.to_string())))?;
    }

    let policy_list = settings.pick(args.policy.clone(), "policy", "avg_ent".to_string())?;
    let policies: Vec<Policy> = if policy_list == "all" {
        Policy::ALL.to_vec()
    } else {
        parse_list(&policy_list, "policy")?
    };
    let seeds: Vec<u64> = parse_list(&settings.pick(args.seed.clone(), "seed", "0".to_string())?, "seed")?;
    let mut unique = seeds.clone();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() != seeds.len() {
        return Err(usage("--seed values must be distinct"));
    }

    let d = ExperimentConfig::default();
    let hyper = Hyper {
        lr: settings.pick(args.lr, "lr", d.learner.hyper.lr)?,
        epochs: settings.pick(args.epochs, "epochs", d.learner.hyper.epochs)?,
        batch: settings.pick(args.batch, "batch", d.learner.hyper.batch)?,
        l2: settings.pick(args.l2, "l2", d.learner.hyper.l2)?,
    };
    if !(hyper.lr > 0.0) || hyper.batch == 0 || !(hyper.l2 >= 0.0) {
        return Err(usage(format!("invalid learner settings {hyper:?}")));
    }
    let augment: AugmentConfig = settings
        .pick(args.augment.clone(), "augment", d.learner.augment.to_string())?
        .parse()
        .map_err(usage)?;
    let learner = SoftmaxEnsembleLearner {
        members: settings.pick(args.ensemble, "ensemble", d.learner.members)?,
        hyper,
        augment,
        k_neighbors: settings.pick(args.k_neighbors, "k-neighbors", d.learner.k_neighbors)?,
        ..d.learner.clone()
    };
    if learner.members == 0 {
        return Err(usage("--ensemble must be at least 1"));
    }
    if learner.k_neighbors < 3 {
        return Err(usage("--k-neighbors must be at least 3"));
    }
    let rd = RedalParams::default();
    let redal = RedalParams {
        alpha: settings.pick(args.alpha, "alpha", rd.alpha)?,
        beta: settings.pick(args.beta, "beta", rd.beta)?,
        gamma: settings.pick(args.gamma, "gamma", rd.gamma)?,
        clusters: settings.pick(args.k_div, "k-div", rd.clusters)?,
        decay: settings.pick(args.decay, "decay", rd.decay)?,
        single_member: settings.flag(args.single_member, "single-member")?,
    };
    redal.validate().map_err(usage)?;
    let budget = parse_budget(
        &settings.pick(args.budget_mode.clone(), "budget-mode", "point_fraction".to_string())?,
        settings.pick(args.budget, "budget", 0.01)?,
    )?;
    let initial_budget = parse_budget(
        &settings.pick(args.initial_budget_mode.clone(), "initial-budget-mode", "point_fraction".to_string())?,
        settings.pick(args.initial_budget, "initial-budget", 0.01)?,
    )?;
    let cycles = settings.pick(args.cycles, "cycles", d.cycles)?;
    if cycles == 0 {
        return Err(usage("--cycles must be at least 1"));
    }
    let ignore: Vec<usize> = match settings.pick(args.ignore_class.clone(), "ignore-class", String::new())? {
        s if s.is_empty() => Vec::new(),
        s => parse_list(&s, "ignore class")?,
    };
    let eval_on_train = settings.flag(args.eval_on_train, "eval-on-train")?;

    let (train, eval) = match &args.train {
        Some(path) => {
            let train = read_cloud(path, args.classes)?;
            let eval = args.eval.as_ref().map(|p| read_cloud(p, args.classes)).transpose()?;
            (train, eval)
        }
        None => {
            if args.eval.is_some() {
                return Err(usage("--eval requires --train"));
            }
            let mut spec = match &args.scene_config {
                Some(p) => SceneSpec::load(p)?,
                None => SceneSpec::default(),
            };
            spec.seed = settings.pick(args.scene_seed, "scene-seed", spec.seed)?;
            let offset = settings.pick(args.eval_offset, "eval-offset", 1)?;
            let (train, eval) = scene_pair(&spec, offset)?;
            (train, Some(eval))
        }
    };
    let eval = if eval_on_train { None } else { eval };
    if let Some(e) = &eval {
        if e.class_count() != train.class_count() {
            return Err(CliError::Runtime(Error::InvalidCloud(format!(
                "training cloud has {} classes, evaluation cloud {}",
                train.class_count(),
                e.class_count()
            ))));
        }
    }
    if let Some(bad) = ignore.iter().find(|&&c| c >= train.class_count()) {
        return Err(usage(format!("--ignore-class {bad} is not a class of the cloud")));
    }

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    eprintln!("preparing features for {} training points", train.len());
    let train_prep = learner.prepare(&train)?;
    let eval_prep = eval.as_ref().map(|c| learner.prepare(c)).transpose()?;
    let dataset = Dataset { cloud: &train, prepared: &train_prep };
    let eval_set = eval.as_ref().zip(eval_prep.as_ref()).map(|(cloud, prepared)| Dataset { cloud, prepared });

    let mut stdout = std::io::stdout().lock();
    for &seed in &seeds {
        let seps = separations(&args.separation, &settings, seed)?;
        let sweep = seps.len() > 1;
        let mut target = None;
        if args.svg {
            let base = ExperimentConfig { seed, learner: learner.clone(), ignore: ignore.clone(), ..d.clone() };
            let full = supervised_with(&base, &learner, dataset, eval_set).map_err(|e| run_error("supervised", seed, e))?;
            let t = miou_at_90(full);
            writeln!(stdout, "supervised seed={seed} miou={full} miou@90={t}").ok();
            target = Some(t);
        }
        for sep in &seps {
            let tag = separation_tag(sep, sweep);
            let regions = sep.build(&train).map_err(|e| run_error(&tag, seed, e))?;
            let mut logs: Vec<(String, ExperimentLog)> = Vec::new();
            for &policy in &policies {
                let config = ExperimentConfig {
                    separation: sep.clone(),
                    policy,
                    redal,
                    budget,
                    initial_budget,
                    cycles,
                    learner: learner.clone(),
                    seed,
                    ignore: ignore.clone(),
                };
                config.validate().map_err(usage)?;
                let name = format!("{policy}_{tag}_{seed}");
                eprintln!("running {name} over {} regions", regions.len());
                let log = run_with(&config, &learner, dataset, &regions, eval_set).map_err(|e| run_error(&name, seed, e))?;
                let path = args.out.join(format!("{name}.csv"));
                log.write_csv(&path)?;
                let last = log.rows.last().expect("log has rows");
                write!(
                    stdout,
                    "{name} miou={} labeled_fraction={} labeled_area_m2={}",
                    last.miou, last.labeled_fraction, last.labeled_area_m2
                )
                .ok();
                if let Some(t) = target {
                    match log.fraction_reaching(t) {
                        Some(f) => write!(stdout, " fraction_at_miou90={f}").ok(),
                        None => write!(stdout, " fraction_at_miou90=-").ok(),
                    };
                }
                writeln!(stdout, " csv={}", path.display()).ok();
                logs.push((policy.to_string(), log));
            }
            if args.svg {
                let refs: Vec<(String, &ExperimentLog)> = logs.iter().map(|(n, l)| (n.clone(), l)).collect();
                let svg = curves_svg(&format!("{tag}, seed {seed}"), &refs, target, args.log_area);
                let path = args.out.join(format!("curves_{tag}_{seed}.svg"));
                std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
            }
        }
    }
    Ok(())
}

fn run_error(name: &str, seed: u64, e: Error) -> CliError {
    CliError::Runtime(Error::InvalidArgument(format!("run {name} (seed {seed}): {e}")))
}

fn cmd_separate(args: SeparateArgs) -> CliResult<()> {
    let settings = Settings::default();
    let seps = separations(&args.separation, &settings, args.seed.unwrap_or(0))?;
    if seps.len() != 1 {
        return Err(usage("separate takes a single --r"));
    }
    let cloud = read_cloud(&args.cloud, args.classes)?;
    let set: RegionSet = seps[0].build(&cloud)?;
    let mut area = 0.0;
    for r in &set.regions {
        area += region_area(&cloud, r)?;
    }
    let count = |k: RegionKind| set.regions.iter().filter(|r| r.kind == k).count();
    println!("regions {}", set.len());
    println!("mean_points {}", cloud.len() as f64 / set.len() as f64);
    println!("total_area_m2 {area}");
    for kind in [RegionKind::Column, RegionKind::SupervoxelGround, RegionKind::SupervoxelObject] {
        println!("{kind} {}", count(kind));
    }
    if let Some(out) = &args.out {
        let mut f = std::io::BufWriter::new(std::fs::File::create(out).map_err(|e| Error::io(out, e))?);
        set.write_dump(&mut f).and_then(|_| f.flush()).map_err(|e| Error::io(out, e))?;
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    let cloud = read_cloud(&args.cloud, args.classes)?;
    let pred = load_labels(&args.pred)?;
    let ignore: Vec<usize> = match &args.ignore_class {
        Some(s) => parse_list(s, "ignore class")?,
        None => Vec::new(),
    };
    let cm = confusion(&pred, cloud.gt_labels(), cloud.class_count(), &ignore)?;
    let (m, per_class) = miou(&cm)?;
    println!("miou {m}");
    for (c, v) in per_class.iter().enumerate() {
        match v {
            Some(v) => println!("iou_c{c} {v}"),
            None => println!("iou_c{c} -"),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(*a),
        Command::Separate(a) => cmd_separate(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
