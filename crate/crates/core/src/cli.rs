//! `evlm` command line.
//!
//! Settings resolve as flag, then environment (`EVLM_<KEY>`, or
//! `CAPTION_*` for caption client keys), then the `--config` file of
//! `key = value` lines, then built-in defaults.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::align::{
    grad_check, pair_cosines, save_checkpoint, save_trajectory_csv, synthetic_dataset, train_toy, AlignConfig,
    CosineMode, PreparedSample, SyntheticSpec, ToyModel,
};
use crate::caption::{
    build_training_mix, qa_sample, run_annotation, serve_review_api, AnnotateOptions, AnnotateScope, CaptionClient,
    Clock, HttpCaptionClient, HttpClientConfig, ManifestStore, MixWeights, ProblemLists, ReviewContext,
    ScriptedClient,
};
use crate::error::{Error, Result};
use crate::event_model::{Event, EventStream, Polarity, SensorGeometry};
use crate::ingest::{read_event_file, write_evt_bin};
use crate::representation::{assemble_esr, generate_adaptive_ratios, render_frame, write_bundle, EsrConfig};

#[derive(Debug, Parser)]
#[command(name = "evlm", version, about = "Event-camera representation, toy alignment and caption tooling")]
pub struct Cli {
    /// File of `key = value` settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for generated files.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a CSV, EVT1 or ATIS40 event file to EVT1.
    Convert {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        geometry: GeometryArgs,
    },
    /// Render all events of a file into one red-blue frame (PNG or PPM by extension).
    Render {
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        geometry: GeometryArgs,
    },
    /// Build the multi-level frame bundle of an event file.
    Esr {
        input: PathBuf,
        #[command(flatten)]
        esr: EsrArgs,
        #[command(flatten)]
        geometry: GeometryArgs,
    },
    /// Print the tile ratio set, one `cols rows` pair per line.
    Ratios { n_min: u32, n_max: u32 },
    /// Caption pending and regenerating manifest records.
    Annotate {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        caption: CaptionArgs,
        /// Only records sent back for regeneration.
        #[arg(long)]
        regenerating_only: bool,
    },
    /// Mark up to `per_class` captioned records of each class for review.
    QaSample {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        per_class: Option<usize>,
    },
    /// Serve the review API.
    Serve {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        bind: Option<String>,
        /// Directory of review UI assets.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[command(flatten)]
        caption: CaptionArgs,
    },
    /// Weighted draw of records from several manifests, written as JSONL.
    Mix {
        /// `name=path/to/manifest.jsonl`, repeatable.
        #[arg(long = "source", required = true)]
        sources: Vec<String>,
        /// `name=weight,...`; defaults to n-imagenet=0.6,dsec=0.1,hardvs=0.3.
        #[arg(long)]
        weights: Option<String>,
        #[arg(long)]
        total: usize,
        /// Output file; standard output when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train the toy alignment model on a synthetic set.
    TrainToy {
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Compare analytic and finite-difference gradients of the toy losses.
    Gradcheck {
        #[arg(long)]
        epsilon: Option<f64>,
        /// Embedding width; 1 runs a one-parameter quadratic self-test.
        #[arg(long)]
        dims: Option<usize>,
    },
    /// Throughput of frame rendering and bundle assembly.
    Bench {
        /// Event file; a seeded synthetic stream is used when omitted.
        input: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        /// Size of the synthetic stream.
        #[arg(long)]
        synthetic_events: Option<usize>,
        #[command(flatten)]
        esr: EsrArgs,
    },
}

#[derive(Debug, Args, Clone, Default)]
pub struct GeometryArgs {
    /// Sensor width; inferred from the events when omitted.
    #[arg(long)]
    pub width: Option<u16>,
    #[arg(long)]
    pub height: Option<u16>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct EsrArgs {
    #[arg(long)]
    pub n_epsilon: Option<usize>,
    #[arg(long)]
    pub total_events: Option<usize>,
    #[arg(long)]
    pub tile_size: Option<usize>,
    #[arg(long)]
    pub n_min: Option<u32>,
    #[arg(long)]
    pub n_max: Option<u32>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct CaptionArgs {
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// Question lists file; built-in lists when omitted.
    #[arg(long)]
    pub problems: Option<PathBuf>,
    /// Answer every request with this text instead of calling the endpoint.
    #[arg(long)]
    pub mock_caption: Option<String>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Request timeout in seconds.
    #[arg(long)]
    pub timeout: Option<u64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// `flatten` or `per-pair`.
    #[arg(long)]
    pub cosine_mode: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
}

/// Layered settings lookup.
pub struct Settings {
    file: HashMap<String, String>,
}

fn env_name(key: &str) -> String {
    if key.starts_with("caption_") {
        key.to_ascii_uppercase()
    } else {
        format!("EVLM_{}", key.to_ascii_uppercase())
    }
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut file = HashMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            file.insert(k.trim().replace('-', "_"), v.trim().to_string());
        }
        Ok(Self { file })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::parse(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
            None => Ok(Self { file: HashMap::new() }),
        }
    }

    fn raw(&self, key: &str) -> Option<(String, String)> {
        let env = env_name(key);
        if let Ok(v) = std::env::var(&env) {
            return Some((v, env));
        }
        self.file.get(key).map(|v| (v.clone(), format!("config key {key}")))
    }

    pub fn get<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            Some((v, origin)) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::Config(format!("{origin}: cannot parse {v:?}: {e}"))),
            None => Ok(None),
        }
    }

    pub fn value<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }
}

struct Ctx<'a> {
    settings: Settings,
    seed: u64,
    out_dir: PathBuf,
    out: &'a mut dyn Write,
}

fn geometry(args: &GeometryArgs) -> Result<Option<SensorGeometry>> {
    match (args.width, args.height) {
        (Some(w), Some(h)) => Ok(Some(SensorGeometry::new(w, h)?)),
        (None, None) => Ok(None),
        _ => Err(Error::Config("give both --width and --height or neither".into())),
    }
}

fn esr_config(s: &Settings, a: &EsrArgs) -> Result<EsrConfig> {
    let d = EsrConfig::default();
    let c = EsrConfig {
        n_epsilon: s.value(a.n_epsilon, "n_epsilon", d.n_epsilon)?,
        total_events: s.value(a.total_events, "total_events", d.total_events)?,
        n_min: s.value(a.n_min, "n_min", d.n_min)?,
        n_max: s.value(a.n_max, "n_max", d.n_max)?,
        tile_size: s.value(a.tile_size, "tile_size", d.tile_size)?,
        tie_break_area_factor: s.value(None, "tie_break_area_factor", d.tie_break_area_factor)?,
    };
    c.validate()?;
    Ok(c)
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn write_frame(frame: &crate::RgbFrame, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")) {
        frame.write_ppm(path)
    } else {
        std::fs::write(path, frame.to_png()?).map_err(|e| Error::io(path, e))
    }
}

fn caption_setup(ctx: &Ctx, a: &CaptionArgs) -> Result<(Arc<dyn CaptionClient>, ProblemLists, AnnotateOptions)> {
    let s = &ctx.settings;
    let client: Arc<dyn CaptionClient> = match s.get(a.mock_caption.clone(), "mock_caption")? {
        Some(text) => Arc::new(ScriptedClient::always(&text)),
        None => {
            let d = HttpClientConfig::default();
            let config = HttpClientConfig {
                endpoint: s.value(a.endpoint.clone(), "caption_endpoint", d.endpoint)?,
                model: s.value(a.model.clone(), "caption_model", d.model)?,
                api_key: s.get(None, "caption_api_key")?.filter(|k: &String| !k.is_empty()),
                timeout: Duration::from_secs(s.value(a.timeout, "caption_timeout", d.timeout.as_secs())?),
                retries: s.value(None, "caption_retries", d.retries)?,
                backoff: d.backoff,
            };
            Arc::new(HttpCaptionClient::new(config))
        }
    };
    let lists = match s.get(a.problems.as_ref().map(|p| p.display().to_string()), "problems")? {
        Some(p) => ProblemLists::load(Path::new(&p))?,
        None => ProblemLists::default(),
    };
    let d = AnnotateOptions::default();
    let options = AnnotateOptions {
        max_in_flight: s.value(a.max_in_flight, "max_in_flight", d.max_in_flight)?,
        seed: ctx.seed,
        frames_per_item: s.value(None, "frames_per_item", d.frames_per_item)?,
        scope: AnnotateScope::All,
        clock: Clock::from_env(),
    };
    Ok((client, lists, options))
}

fn synthetic_stream(events: usize, seed: u64) -> EventStream {
    let geometry = SensorGeometry::new(640, 480).expect("valid geometry");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events = (0..events as u64)
        .map(|t| {
            let p = if rng.random::<bool>() { Polarity::Positive } else { Polarity::Negative };
            Event::new(t, rng.random_range(0..640), rng.random_range(0..480), p)
        })
        .collect();
    EventStream::new(geometry, events, "synthetic")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn gradcheck_model(dims: usize, epsilon: f64, seed: u64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for normalize in [true, false] {
        let spec = SyntheticSpec {
            samples: 3,
            embed_dim: dims,
            normalize,
            seed,
            ..SyntheticSpec::default()
        };
        let data: Vec<PreparedSample> = synthetic_dataset(&spec)?.iter().map(|s| s.prepare()).collect();
        let model = ToyModel::init(spec.dims(), seed);
        for mode in [CosineMode::Flatten, CosineMode::PerPairMean] {
            let config = AlignConfig {
                cosine_mode: mode,
                ..AlignConfig::default()
            };
            let eval = |p: &[f64]| {
                let mut m = model.clone();
                m.set_flat(p)?;
                let (b, g) = m.loss_and_grad(&data, &config)?;
                Ok((b.total, g))
            };
            worst = worst.max(grad_check(eval, &model.to_flat(), epsilon)?.max_rel_error);
        }
    }
    Ok(worst)
}

fn run_command(command: Command, ctx: &mut Ctx) -> Result<i32> {
    let s = &ctx.settings;
    match command {
        Command::Convert { input, output, geometry: g } => {
            let stream = read_event_file(&input, geometry(&g)?)?;
            std::fs::write(&output, write_evt_bin(&stream)).map_err(|e| Error::io(&output, e))?;
            writeln!(ctx.out, "{} events, {}", stream.len(), stream.geometry).map_err(io_err)?;
        }
        Command::Render { input, output, geometry: g } => {
            let stream = read_event_file(&input, geometry(&g)?)?;
            let frame = render_frame(&stream.events, stream.geometry)?;
            let path = output.unwrap_or_else(|| ctx.out_dir.join("render.png"));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            write_frame(&frame, &path)?;
            writeln!(ctx.out, "{}", path.display()).map_err(io_err)?;
        }
        Command::Esr { input, esr, geometry: g } => {
            let config = esr_config(s, &esr)?;
            let stream = read_event_file(&input, geometry(&g)?)?;
            let bundle = assemble_esr(&stream, &config)?;
            write_bundle(&bundle, &ctx.out_dir)?;
            let (n1, n2, n3, np) = bundle.counts();
            writeln!(ctx.out, "{n1} {n2} {n3} {np}").map_err(io_err)?;
        }
        Command::Ratios { n_min, n_max } => {
            for r in generate_adaptive_ratios(n_min, n_max)?.iter() {
                writeln!(ctx.out, "{r}").map_err(io_err)?;
            }
        }
        Command::Annotate {
            manifest,
            caption,
            regenerating_only,
        } => {
            let (client, lists, mut options) = caption_setup(ctx, &caption)?;
            if regenerating_only {
                options.scope = AnnotateScope::RegeneratingOnly;
            }
            let mut store = ManifestStore::load(&manifest)?;
            let summary = run_annotation(&mut store, client.as_ref(), &lists, &options)?;
            for (id, msg) in &summary.errors {
                eprintln!("{id}: {msg}");
            }
            writeln!(ctx.out, "succeeded {} failed {}", summary.succeeded, summary.failed).map_err(io_err)?;
        }
        Command::QaSample { manifest, per_class } => {
            let per_class = s.value(per_class, "per_class", crate::caption::DEFAULT_QA_PER_CLASS)?;
            let mut store = ManifestStore::load(&manifest)?;
            for r in qa_sample(&mut store, per_class, ctx.seed, Clock::from_env())? {
                writeln!(ctx.out, "{}\t{}", r.class_id, r.id).map_err(io_err)?;
            }
        }
        Command::Serve {
            manifest,
            bind,
            static_dir,
            caption,
        } => {
            let (client, lists, options) = caption_setup(ctx, &caption)?;
            let bind = s.value(bind, "bind", "127.0.0.1:8080".to_string())?;
            let static_dir = s.get(static_dir.map(|p| p.display().to_string()), "static_dir")?;
            let review = ReviewContext {
                store: Arc::new(Mutex::new(ManifestStore::load(&manifest)?)),
                client,
                lists: Arc::new(lists),
                options,
                static_dir: static_dir.map(PathBuf::from),
            };
            let handle = serve_review_api(review, &bind)?;
            eprintln!("review service on {}", handle.url());
            handle.wait()?;
        }
        Command::Mix {
            sources,
            weights,
            total,
            output,
        } => {
            let weights = match s.get(weights, "mix_weights")? {
                Some(w) => w.parse::<MixWeights>()?,
                None => MixWeights::hybrid_default(),
            };
            let mut by_source = BTreeMap::new();
            for spec in &sources {
                let (name, path) = spec
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("--source expects name=path, got {spec:?}")))?;
                let store = ManifestStore::load(Path::new(path))?;
                by_source.insert(name.to_string(), store.records().to_vec());
            }
            let draws = build_training_mix(&by_source, &weights, total, ctx.seed)?;
            let mut text = String::new();
            for d in &draws {
                let line = serde_json::json!({ "source": d.source, "record": d.record });
                text.push_str(&line.to_string());
                text.push('\n');
            }
            match output {
                Some(p) => std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?,
                None => ctx.out.write_all(text.as_bytes()).map_err(io_err)?,
            }
        }
        Command::TrainToy { train } => {
            let d = AlignConfig::default();
            let cosine_mode = match s.get(train.cosine_mode.clone(), "cosine_mode")? {
                Some(m) => m.parse::<CosineMode>().map_err(Error::Config)?,
                None => d.cosine_mode,
            };
            let config = AlignConfig {
                lambda1: s.value(train.lambda1, "lambda1", d.lambda1)?,
                lambda2: s.value(train.lambda2, "lambda2", d.lambda2)?,
                learning_rate: s.value(train.learning_rate, "learning_rate", d.learning_rate)?,
                epochs: s.value(train.epochs, "epochs", d.epochs)?,
                fuse_mode: d.fuse_mode,
                cosine_mode,
            };
            let sd = SyntheticSpec::default();
            let spec = SyntheticSpec {
                samples: s.value(train.samples, "samples", sd.samples)?,
                embed_dim: s.value(train.embed_dim, "embed_dim", sd.embed_dim)?,
                seed: ctx.seed,
                ..sd
            };
            let data = synthetic_dataset(&spec)?;
            let outcome = train_toy(&data, ToyModel::init(spec.dims(), ctx.seed), &config)?;
            std::fs::create_dir_all(&ctx.out_dir).map_err(|e| Error::io(&ctx.out_dir, e))?;
            save_trajectory_csv(&outcome.trajectory, &ctx.out_dir.join("trajectory.csv"))?;
            save_checkpoint(&outcome.model, &ctx.out_dir.join("toy.ckpt"))?;
            if let (Some(first), Some(last)) = (outcome.trajectory.first(), outcome.trajectory.last()) {
                writeln!(ctx.out, "initial total {:.6}", first.total).map_err(io_err)?;
                writeln!(ctx.out, "final total {:.6}", last.total).map_err(io_err)?;
            }
            let prepared: Vec<PreparedSample> = data.iter().map(|x| x.prepare()).collect();
            let pairs = pair_cosines(&outcome.model, &prepared)?;
            let wins = pairs.iter().filter(|(m, x)| m > x).count();
            writeln!(ctx.out, "matched > mismatched {wins}/{}", pairs.len()).map_err(io_err)?;
        }
        Command::Gradcheck { epsilon, dims } => {
            let epsilon = s.value(epsilon, "epsilon", 1e-5)?;
            let dims = s.value(dims, "dims", 3)?;
            let err = if dims == 1 {
                grad_check(|w| Ok((w[0] * w[0], vec![2.0 * w[0]])), &[3.0], epsilon)?.max_rel_error
            } else {
                gradcheck_model(dims, epsilon, ctx.seed)?
            };
            writeln!(ctx.out, "max relative error {err:.3e}").map_err(io_err)?;
            return Ok(if err <= 1e-6 { 0 } else { 1 });
        }
        Command::Bench {
            input,
            iterations,
            synthetic_events,
            esr,
        } => {
            let iterations = s.value(iterations, "iterations", 5)?.max(1);
            let config = esr_config(s, &esr)?;
            let stream = match input {
                Some(p) => read_event_file(&p, None)?,
                None => synthetic_stream(s.value(synthetic_events, "synthetic_events", 1_000_000)?, ctx.seed),
            };
            let n = stream.len() as f64;
            let mut render_t = Vec::with_capacity(iterations);
            let mut esr_t = Vec::with_capacity(iterations);
            for _ in 0..iterations {
                let t = Instant::now();
                std::hint::black_box(render_frame(&stream.events, stream.geometry)?);
                render_t.push(t.elapsed().as_secs_f64());
                let t = Instant::now();
                std::hint::black_box(assemble_esr(&stream, &config)?);
                esr_t.push(t.elapsed().as_secs_f64());
            }
            let rate = |t: f64| if t > 0.0 { n / t } else { f64::INFINITY };
            writeln!(ctx.out, "events: {}", stream.len()).map_err(io_err)?;
            writeln!(ctx.out, "render: {:.0} ev/s", rate(median(render_t))).map_err(io_err)?;
            writeln!(ctx.out, "esr: {:.0} ev/s", rate(median(esr_t))).map_err(io_err)?;
        }
    }
    Ok(0)
}

/// Runs a parsed command line, writing data to `out`. Returns the exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    let settings = Settings::load(cli.config.as_deref())?;
    let seed = settings.value(cli.seed, "seed", 0u64)?;
    let out_dir = settings.value(cli.out_dir.map(|p| p.display().to_string()), "out_dir", ".".to_string())?;
    let mut ctx = Ctx {
        settings,
        seed,
        out_dir: PathBuf::from(out_dir),
        out,
    };
    run_command(cli.command, &mut ctx)
}

/// Entry point for the binary.
pub fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(code) => std::process::ExitCode::from(code as u8),
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            std::process::ExitCode::FAILURE
        }
    }
}
