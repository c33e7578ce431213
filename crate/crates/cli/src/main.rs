mod config;
mod error;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use paintdet::codec::{render_annotation, AnnotationStyle, AnnotationVariant, Image};
use paintdet::data::{generate_dataset, read_dataset, write_dataset, Dataset};
use paintdet::denoiser::{generate, train, TaskPrompt, UNet};
use paintdet::diffusion::PixelCodec;
use paintdet::eval::{average_precision, coco_metrics, MetricsReport};
use paintdet::pipeline::{ground_truths, roundtrip};
use paintdet::postproc::{detect, DetectionSet, FeatureExtractor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use config::RunConfig;
use error::CliError;

/// Object detection by painting boxes with a conditional diffusion model.
#[derive(Debug, Parser)]
#[command(name = "paintdet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic shapes dataset.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        /// Id of the first image; ids are consecutive.
        #[arg(long, default_value_t = 0)]
        first_id: u64,
    },
    /// Render clean annotation images from ground truth.
    Render {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// a: white background, b: full boxes, c: shrunk, d: shrunk with dots.
        #[arg(long, default_value = "d")]
        variant: AnnotationVariant,
    },
    /// Train the denoiser; writes a checkpoint and a JSONL step log.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides train.steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Step log path (default: `<out>.jsonl`).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Report mean loss on stderr every N steps (0 disables).
        #[arg(long, default_value_t = 500)]
        progress_every: usize,
    },
    /// Sample generated images for every dataset image.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Supplies the diffusion schedule and sampling seed.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// x reconstructs the input, y generates the annotation.
        #[arg(long, value_enum, default_value_t = Prompt::Y)]
        prompt: Prompt,
    },
    /// Decode generated annotation images into detections.
    Detect {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        /// Directory of generated images laid out like the dataset.
        #[arg(long)]
        gen: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Apply same-class NMS (IoU 0.5 unless postproc.nms_iou is set).
        #[arg(long)]
        nms: bool,
    },
    /// Score a results file against the dataset.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        results: PathBuf,
        /// Print a fixed-width table instead of JSON.
        #[arg(long)]
        table: bool,
    },
    /// Render, decode and score ground truth without a model.
    Roundtrip {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        /// Overrides codec.style.shrink_ratio.
        #[arg(long)]
        shrink: Option<f64>,
        /// Also write the decoded detections here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        table: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Prompt {
    X,
    Y,
}

impl From<Prompt> for TaskPrompt {
    fn from(p: Prompt) -> Self {
        match p {
            Prompt::X => TaskPrompt::ReconstructX,
            Prompt::Y => TaskPrompt::GenerateY,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenData {
            config,
            out,
            count,
            first_id,
        } => {
            let cfg = RunConfig::load(config.as_deref())?;
            let data = generate_dataset(&cfg.data, first_id, count)?;
            fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
            write_dataset(&out, &data)?;
            eprintln!("wrote {count} images to {}", out.display());
            Ok(())
        }
        Command::Render {
            config,
            dataset,
            out,
            variant,
        } => {
            let cfg = RunConfig::load(config.as_deref())?;
            let data = read_dataset(&dataset)?;
            let palette = cfg.palette(&data.classes)?;
            let style = AnnotationStyle::for_variant(&cfg.codec.style, variant);
            for s in &data.samples {
                write_image(
                    &out,
                    &s.file,
                    &render_annotation(&s.image, &s.boxes, &style, &palette)?,
                )?;
            }
            Ok(())
        }
        Command::Train {
            config,
            dataset,
            out,
            steps,
            log,
            progress_every,
        } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            if let Some(n) = steps {
                cfg.train.steps = n;
            }
            run_train(&cfg, &dataset, &out, log, progress_every)
        }
        Command::Infer {
            ckpt,
            dataset,
            out,
            config,
            seed,
            prompt,
        } => {
            let cfg = RunConfig::load(config.as_deref())?;
            let model = UNet::load(&ckpt)?;
            let data = read_dataset(&dataset)?;
            let (sched, plan) = cfg.diffusion.build()?;
            let seed = seed.unwrap_or(cfg.seed);
            for s in &data.samples {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(s.id);
                let (img, _) = generate(
                    &s.image,
                    prompt.into(),
                    &model,
                    &PixelCodec,
                    &plan,
                    &sched,
                    &mut rng,
                )?;
                write_image(&out, &s.file, &img)?;
            }
            Ok(())
        }
        Command::Detect {
            config,
            dataset,
            gen,
            out,
            nms,
        } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            if nms && cfg.postproc.nms_iou.is_none() {
                cfg.postproc.nms_iou = Some(0.5);
            }
            let data = read_dataset(&dataset)?;
            let palette = cfg.palette(&data.classes)?;
            let fx = FeatureExtractor::new(cfg.postproc.extractor_seed);
            let mut sets = Vec::with_capacity(data.samples.len());
            for s in &data.samples {
                let y_hat = read_image(&gen.join(&s.file))?;
                sets.push(detect(
                    s.id,
                    &s.image,
                    &y_hat,
                    &fx,
                    &palette,
                    cfg.codec.style.shrink_ratio,
                    &cfg.postproc,
                )?);
            }
            write_text(&out, &DetectionSet::list_to_json(&sets))
        }
        Command::Eval {
            config,
            dataset,
            results,
            table,
        } => {
            let cfg = RunConfig::load(config.as_deref())?;
            let data = read_dataset(&dataset)?;
            let text = fs::read_to_string(&results).map_err(|e| CliError::io(&results, e))?;
            let sets = DetectionSet::list_from_json(&text)?;
            let metrics = coco_metrics(&sets, &ground_truths(&data))?;
            let extra = extra_ap(&cfg, &data, &sets)?;
            if table {
                println!("{}", table_header(&extra));
                println!("{}", table_row(&metrics, &extra));
            } else {
                let mut v = serde_json::to_value(metrics).expect("metrics serialize");
                merge(&mut v, &extra);
                println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            }
            Ok(())
        }
        Command::Roundtrip {
            config,
            dataset,
            shrink,
            out,
            table,
        } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            if let Some(r) = shrink {
                cfg.codec.style.shrink_ratio = r;
                cfg.validate()?;
            }
            let data = read_dataset(&dataset)?;
            let palette = cfg.palette(&data.classes)?;
            let fx = FeatureExtractor::new(cfg.postproc.extractor_seed);
            let (report, sets) = roundtrip(&data, &palette, &cfg.codec.style, &fx, &cfg.postproc)?;
            let extra = extra_ap(&cfg, &data, &sets)?;
            if let Some(path) = out {
                write_text(&path, &DetectionSet::list_to_json(&sets))?;
            }
            if table {
                println!(
                    "shrink {:.4}  images {}  gts {}  dets {}  cross-class {}",
                    report.shrink_ratio,
                    report.images,
                    report.ground_truths,
                    report.detections,
                    report.cross_class_errors
                );
                println!("{}", table_header(&extra));
                println!("{}", table_row(&report.metrics, &extra));
            } else {
                let mut v = serde_json::to_value(&report).expect("report serializes");
                merge(&mut v["metrics"], &extra);
                println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            }
            Ok(())
        }
    }
}

fn run_train(
    cfg: &RunConfig,
    dataset: &Path,
    out: &Path,
    log: Option<PathBuf>,
    progress_every: usize,
) -> Result<(), CliError> {
    let data = read_dataset(dataset)?;
    let palette = cfg.palette(&data.classes)?;
    let pairs: Vec<(Image, Image)> = data
        .samples
        .iter()
        .map(|s| {
            Ok((
                s.image.clone(),
                render_annotation(&s.image, &s.boxes, &cfg.codec.style, &palette)?,
            ))
        })
        .collect::<Result<_, CliError>>()?;
    let (sched, _) = cfg.diffusion.build()?;
    let mut model = UNet::new(cfg.model.clone())?;
    let log_path = log.unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".jsonl");
        PathBuf::from(p)
    });
    let mut log =
        BufWriter::new(fs::File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    eprintln!(
        "training {} parameters on {} pairs for {} steps",
        model.num_parameters(),
        pairs.len(),
        cfg.train.steps
    );
    let mut window = 0.0f64;
    let mut io_error = None;
    let result = train(
        &mut model,
        &pairs,
        &cfg.train,
        &sched,
        &PixelCodec,
        &mut rng,
        |rec| {
            if let Err(e) = writeln!(
                log,
                "{}",
                serde_json::to_string(rec).expect("record serializes")
            ) {
                io_error = Some(e);
            }
            window += rec.loss as f64;
            if progress_every > 0 && (rec.step + 1) % progress_every == 0 {
                eprintln!(
                    "step {:>6}  loss {:.5}",
                    rec.step + 1,
                    window / progress_every as f64
                );
                window = 0.0;
            }
            Ok(())
        },
    );
    log.flush().map_err(|e| CliError::io(&log_path, e))?;
    if let Some(e) = io_error {
        return Err(CliError::io(&log_path, e));
    }
    result?;
    model.save(out)?;
    Ok(())
}

fn extra_ap(
    cfg: &RunConfig,
    data: &Dataset,
    sets: &[DetectionSet],
) -> Result<BTreeMap<String, f64>, CliError> {
    let gts = ground_truths(data);
    let mut out = BTreeMap::new();
    for &t in &cfg.eval.extra_iou {
        out.insert(format!("AP@{t:.2}"), average_precision(sets, &gts, t)?);
    }
    Ok(out)
}

fn merge(v: &mut serde_json::Value, extra: &BTreeMap<String, f64>) {
    if let Some(map) = v.as_object_mut() {
        for (k, x) in extra {
            map.insert(k.clone(), serde_json::json!(x));
        }
    }
}

fn table_header(extra: &BTreeMap<String, f64>) -> String {
    let mut s = MetricsReport::table_header().to_string();
    for k in extra.keys() {
        s.push_str(&format!("  {k:>7}"));
    }
    s
}

fn table_row(m: &MetricsReport, extra: &BTreeMap<String, f64>) -> String {
    let mut s = m.table_row();
    for v in extra.values() {
        s.push_str(&format!("  {:>7.1}", 100.0 * v));
    }
    s
}

fn write_image(dir: &Path, rel: &str, img: &Image) -> Result<(), CliError> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let f = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    img.write_ppm(BufWriter::new(f))?;
    Ok(())
}

fn read_image(path: &Path) -> Result<Image, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Image::read_ppm(BufReader::new(f))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
