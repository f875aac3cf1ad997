//! Command-line front end: every command reads one experiment config and writes static artifacts.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::embed::{extract_output_features, nearest_centroid_purity, render_scatter, silhouette_score, tsne};
use crate::error::{Error, Result};
use crate::formats::{CheckpointFile, DatasetFile};
use crate::nn::{evaluate, softmax, Network, NUM_CLASSES};
use crate::pipeline::{angle_error_deg, labeled_set, record_tensor, simulate_dataset, split, train_on_dataset};
use crate::raster::GrayImage;
use crate::xai::{explain, reinject, render_heatmap, ClassChoice};

pub const THREADS_ENV: &str = "ISARXAI_THREADS";

#[derive(Debug, Parser)]
#[command(name = "isarxai", version, about = "Simulated ISAR imaging, recognition and relevance maps")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Base preset applied before the config file: 8ghz or 4ghz.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Override one config key, e.g. `--set train.epochs=50`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Overrides `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; falls back to ISARXAI_THREADS, then to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the labelled image dataset.
    Simulate {
        /// Defaults to `<output_dir>/dataset.isards`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the classifier and write a checkpoint plus per-epoch history.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Overrides `train.epochs`.
        #[arg(long)]
        epochs: Option<usize>,
        /// Defaults to `<output_dir>/model.isarnn`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Defaults to `<output_dir>/history.csv`.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Accuracy and confusion matrix of a checkpoint on a dataset split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
        /// Defaults to `<output_dir>/confusion.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relevance heatmaps, conservation and re-injection results per image.
    Explain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated record indices, or `all`.
        #[arg(long, default_value = "all")]
        indices: String,
        /// Defaults to `<output_dir>/explain`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Mark imaging angles against an HRRP library and tabulate accuracy per angle range.
    Angle {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Overrides `angle.target`.
        #[arg(long)]
        target: Option<String>,
        /// Overrides `angle.n_images`.
        #[arg(long)]
        n_images: Option<usize>,
        /// Overrides `angle.ranges`, e.g. `0:30,30:60`.
        #[arg(long)]
        ranges: Option<String>,
        /// Defaults to `<output_dir>/angle`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// t-SNE of the network outputs over one or more datasets.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Repeatable; each file's stem tags its points.
        #[arg(long = "dataset", required = true)]
        datasets: Vec<PathBuf>,
        /// Defaults to `<output_dir>/embed`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Dataset overview: item table, images and the effective config.
    Report {
        #[arg(long)]
        dataset: PathBuf,
        /// Defaults to `<output_dir>/report`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
    All,
}

/// Files written by a command; removed again unless the command completes.
struct Outputs {
    written: Vec<PathBuf>,
    done: bool,
}

impl Outputs {
    fn new() -> Self {
        Outputs {
            written: Vec::new(),
            done: false,
        }
    }

    fn claim(&mut self, path: PathBuf) -> Result<PathBuf> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        self.written.push(path.clone());
        Ok(path)
    }

    fn bytes(&mut self, path: PathBuf, bytes: &[u8]) -> Result<()> {
        let path = self.claim(path)?;
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    fn csv(&mut self, path: PathBuf, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io(&path, e.into_error()))?;
        self.bytes(path, &bytes)
    }

    fn finish(mut self) {
        self.done = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.done {
            for path in &self.written {
                let _ = std::fs::remove_file(path);
            }
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::config(format!("{THREADS_ENV}=`{v}` is not a thread count"))),
        _ => Ok(None),
    }
}

fn load_config(global: &GlobalArgs, extra: Vec<String>) -> Result<ExperimentConfig> {
    let mut overrides = global.overrides.clone();
    overrides.extend(extra);
    let mut cfg = ExperimentConfig::load_with_preset(global.preset.as_deref(), global.config.as_deref(), &overrides)?;
    if let Some(dir) = &global.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn load_network(path: &Path, dataset: Option<&DatasetFile>) -> Result<Network<f32>> {
    let net = CheckpointFile::read(path)?.network()?;
    if let Some(ds) = dataset {
        if net.spec().input != [1, ds.height, ds.width] {
            return Err(Error::config(format!(
                "checkpoint expects {:?} inputs but the dataset holds {}×{} images",
                net.spec().input,
                ds.height,
                ds.width
            )));
        }
    }
    Ok(net)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt)
}

fn class_name(ds: &DatasetFile, k: usize) -> String {
    ds.class_names.get(k).cloned().unwrap_or_else(|| k.to_string())
}

fn parse_indices(spec: &str, len: usize) -> Result<Vec<usize>> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok((0..len).collect());
    }
    spec.split(',')
        .map(|s| {
            let i: usize = s
                .trim()
                .parse()
                .map_err(|_| Error::param(format!("`{s}` is not a record index")))?;
            if i >= len {
                return Err(Error::param(format!("index {i} is out of range for {len} records")));
            }
            Ok(i)
        })
        .collect()
}

fn parse_ranges(spec: &str) -> Result<String> {
    let ranges = spec
        .split(',')
        .map(|r| {
            let (lo, hi) = r
                .split_once(':')
                .ok_or_else(|| Error::param(format!("range `{r}` is not lo:hi")))?;
            let lo: f64 = lo.trim().parse().map_err(|_| Error::param(format!("bad range start in `{r}`")))?;
            let hi: f64 = hi.trim().parse().map_err(|_| Error::param(format!("bad range end in `{r}`")))?;
            Ok(format!("[{lo:?}, {hi:?}]"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(format!("[{}]", ranges.join(", ")))
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli.global.threads)? {
        if n == 0 {
            return Err(Error::config("thread count must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::config(e.to_string()))?;
    pool.install(|| dispatch(&cli))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate { out } => {
            let cfg = load_config(g, vec![])?;
            cmd_simulate(&cfg, out.clone().unwrap_or_else(|| cfg.output_dir.join("dataset.isards")))
        }
        Command::Train {
            dataset,
            epochs,
            out,
            history,
        } => {
            let cfg = load_config(g, epochs.iter().map(|e| format!("train.epochs={e}")).collect())?;
            let out = out.clone().unwrap_or_else(|| cfg.output_dir.join("model.isarnn"));
            let history = history.clone().unwrap_or_else(|| cfg.output_dir.join("history.csv"));
            cmd_train(&cfg, dataset, out, history)
        }
        Command::Evaluate {
            checkpoint,
            dataset,
            split,
            out,
        } => {
            let cfg = load_config(g, vec![])?;
            let out = out.clone().unwrap_or_else(|| cfg.output_dir.join("confusion.csv"));
            cmd_evaluate(&cfg, checkpoint, dataset, *split, out)
        }
        Command::Explain {
            checkpoint,
            dataset,
            indices,
            out_dir,
        } => {
            let cfg = load_config(g, vec![])?;
            let dir = out_dir.clone().unwrap_or_else(|| cfg.output_dir.join("explain"));
            cmd_explain(&cfg, checkpoint, dataset, indices, &dir)
        }
        Command::Angle {
            checkpoint,
            target,
            n_images,
            ranges,
            out_dir,
        } => {
            let mut extra = Vec::new();
            if let Some(t) = target {
                extra.push(format!("angle.target=\"{t}\""));
            }
            if let Some(n) = n_images {
                extra.push(format!("angle.n_images={n}"));
            }
            if let Some(r) = ranges {
                extra.push(format!("angle.ranges={}", parse_ranges(r)?));
            }
            let cfg = load_config(g, extra)?;
            let dir = out_dir.clone().unwrap_or_else(|| cfg.output_dir.join("angle"));
            cmd_angle(&cfg, checkpoint, &dir)
        }
        Command::Embed {
            checkpoint,
            datasets,
            out_dir,
        } => {
            let cfg = load_config(g, vec![])?;
            let dir = out_dir.clone().unwrap_or_else(|| cfg.output_dir.join("embed"));
            cmd_embed(&cfg, checkpoint, datasets, &dir)
        }
        Command::Report { dataset, out_dir } => {
            let cfg = load_config(g, vec![])?;
            let dir = out_dir.clone().unwrap_or_else(|| cfg.output_dir.join("report"));
            cmd_report(&cfg, dataset, &dir)
        }
    }
}

fn cmd_simulate(cfg: &ExperimentConfig, out: PathBuf) -> Result<()> {
    let ds = simulate_dataset(cfg)?;
    let mut outputs = Outputs::new();
    let bytes = ds.to_bytes()?;
    outputs.bytes(out.clone(), &bytes)?;
    outputs.finish();
    println!("wrote {} images ({}×{}) to {}", ds.len(), ds.height, ds.width, out.display());
    for (k, name) in ds.class_names.iter().enumerate() {
        let n = ds.records.iter().filter(|r| r.class_id as usize == k).count();
        println!("  {name}: {n}");
    }
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, dataset: &Path, out: PathBuf, history: PathBuf) -> Result<()> {
    let ds = DatasetFile::read(dataset)?;
    let model = train_on_dataset(cfg, &ds, |e| {
        eprintln!(
            "epoch {:>4}  train loss {:.4}  train acc {:.4}{}",
            e.epoch,
            e.train_loss,
            e.train_accuracy,
            e.test_accuracy.map_or_else(String::new, |a| format!("  test acc {a:.4}"))
        )
    })?;
    let rows: Vec<Vec<String>> = model
        .history
        .epochs
        .iter()
        .map(|e| {
            vec![
                e.epoch.to_string(),
                fmt(e.train_loss),
                fmt(e.train_accuracy),
                opt(e.test_loss),
                opt(e.test_accuracy),
            ]
        })
        .collect();
    let mut outputs = Outputs::new();
    let ckpt = CheckpointFile::from_network(&model.network, cfg.train.seed, cfg.train.epochs as u64);
    outputs.bytes(out.clone(), &ckpt.to_bytes()?)?;
    outputs.csv(
        history,
        &["epoch", "train_loss", "train_accuracy", "test_loss", "test_accuracy"],
        &rows,
    )?;
    outputs.finish();
    println!(
        "test accuracy {:.4} on {} images; checkpoint {}",
        model.test.accuracy,
        model.test_indices.len(),
        out.display()
    );
    Ok(())
}

fn cmd_evaluate(cfg: &ExperimentConfig, checkpoint: &Path, dataset: &Path, which: Split, out: PathBuf) -> Result<()> {
    let ds = DatasetFile::read(dataset)?;
    let net = load_network(checkpoint, Some(&ds))?;
    let indices = match which {
        Split::All => (0..ds.len()).collect(),
        Split::Train => split(&ds, cfg.dataset.train_per_class)?.0,
        Split::Test => split(&ds, cfg.dataset.train_per_class)?.1,
    };
    let set = labeled_set::<f32>(&ds, &indices)?;
    let eval = evaluate(&net, &set)?;
    let mut header = vec!["true".to_string()];
    header.extend((0..NUM_CLASSES).map(|k| class_name(&ds, k)));
    let rows: Vec<Vec<String>> = (0..NUM_CLASSES)
        .map(|t| {
            let mut row = vec![class_name(&ds, t)];
            row.extend(eval.confusion[t].iter().map(|c| c.to_string()));
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut outputs = Outputs::new();
    outputs.csv(out, &header, &rows)?;
    outputs.finish();
    println!(
        "accuracy {:.4} ({} of {}), mean cross-entropy {:.4}",
        eval.accuracy,
        eval.predictions.iter().zip(&set.labels).filter(|(p, t)| p == t).count(),
        set.len(),
        eval.mean_loss
    );
    Ok(())
}

fn cmd_explain(cfg: &ExperimentConfig, checkpoint: &Path, dataset: &Path, indices: &str, dir: &Path) -> Result<()> {
    let ds = DatasetFile::read(dataset)?;
    let net = load_network(checkpoint, Some(&ds))?.cast::<f64>();
    let indices = parse_indices(indices, ds.len())?;
    let results = indices
        .par_iter()
        .map(|&i| {
            let input = record_tensor::<f64>(&ds, i)?;
            let map = explain(&net, &input, ClassChoice::Predicted, &cfg.lrp)?;
            let p = softmax(&net.logits(&input)?.to_f64_vec());
            let (re_class, re_prob) = reinject(&net, &map)?;
            let gray = GrayImage::from_unit(&ds.records[i].pixels, ds.width, ds.height)?;
            let heat = render_heatmap(&map);
            let pair = gray.to_rgb().beside(&heat);
            let row = vec![
                i.to_string(),
                ds.records[i].class_id.to_string(),
                map.target_class.to_string(),
                fmt(p[map.target_class]),
                fmt(map.seed_logit),
                fmt(map.total()),
                fmt(map.conservation_error()),
                re_class.to_string(),
                fmt(re_prob),
            ];
            Ok((i, gray.encode_pgm(), heat.encode_ppm(), pair.encode_ppm(), row))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut outputs = Outputs::new();
    let mut rows = Vec::with_capacity(results.len());
    for (i, gray, heat, pair, row) in results {
        outputs.bytes(dir.join(format!("{i:04}_input.pgm")), &gray)?;
        outputs.bytes(dir.join(format!("{i:04}_heatmap.ppm")), &heat)?;
        outputs.bytes(dir.join(format!("{i:04}_pair.ppm")), &pair)?;
        rows.push(row);
    }
    let worst = rows.iter().map(|r| r[6].parse::<f64>().unwrap_or(f64::NAN)).fold(0.0, f64::max);
    outputs.csv(
        dir.join("explain.csv"),
        &[
            "index",
            "true",
            "predicted",
            "probability",
            "seed_logit",
            "relevance_sum",
            "conservation_error",
            "reinjected_class",
            "reinjected_probability",
        ],
        &rows,
    )?;
    outputs.finish();
    println!(
        "explained {} images into {}; worst conservation error {worst:.3e}",
        rows.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_angle(cfg: &ExperimentConfig, checkpoint: &Path, dir: &Path) -> Result<()> {
    let net = load_network(checkpoint, None)?;
    let exp = crate::pipeline::angle_experiment(cfg, &net)?;
    let rows: Vec<Vec<String>> = exp
        .report
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt(r.lo),
                fmt(r.hi),
                r.errors.to_string(),
                r.total.to_string(),
                opt(r.accuracy),
                r.dense.to_string(),
                r.reliable.to_string(),
                r.multi.to_string(),
            ]
        })
        .collect();
    let captures: Vec<Vec<String>> = exp
        .captures
        .iter()
        .map(|c| {
            vec![
                fmt(c.true_angle_deg),
                fmt(c.mark.angle_deg),
                fmt(angle_error_deg(c.true_angle_deg, c.mark.angle_deg)),
                fmt(c.mark.rmse),
                fmt(c.mark.xcoeff),
                c.true_class.to_string(),
                c.predicted.to_string(),
                fmt(c.probability),
            ]
        })
        .collect();
    let mut outputs = Outputs::new();
    outputs.csv(
        dir.join("angle_report.csv"),
        &["lo_deg", "hi_deg", "errors", "total", "accuracy", "dense", "reliable", "multi"],
        &rows,
    )?;
    outputs.csv(
        dir.join("angle_captures.csv"),
        &[
            "true_angle_deg",
            "marked_angle_deg",
            "mark_error_deg",
            "rmse",
            "xcoeff",
            "true_class",
            "predicted",
            "probability",
        ],
        &captures,
    )?;
    outputs.finish();
    println!(
        "{} captures of {}; overall accuracy {:.4}",
        exp.captures.len(),
        cfg.angle.target,
        exp.report.overall_accuracy
    );
    for r in &exp.report.rows {
        println!(
            "  [{:>5}, {:>5})  {:>3}/{:<3}  {}{}{}{}",
            r.lo,
            r.hi,
            r.total - r.errors,
            r.total,
            r.accuracy.map_or_else(|| "  n/a ".to_string(), |a| format!("{a:.4}")),
            if r.dense { "  dense" } else { "" },
            if r.reliable { "  reliable" } else { "" },
            if r.multi { "  multi" } else { "" },
        );
    }
    Ok(())
}

fn cmd_embed(cfg: &ExperimentConfig, checkpoint: &Path, datasets: &[PathBuf], dir: &Path) -> Result<()> {
    let net = load_network(checkpoint, None)?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut tags = Vec::new();
    for path in datasets {
        let ds = DatasetFile::read(path)?;
        if net.spec().input != [1, ds.height, ds.width] {
            return Err(Error::config(format!("{} does not match the checkpoint input size", path.display())));
        }
        let tag = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        let inputs = (0..ds.len()).map(|i| record_tensor::<f32>(&ds, i)).collect::<Result<Vec<_>>>()?;
        features.extend(extract_output_features(&net, &inputs)?);
        labels.extend(ds.records.iter().map(|r| r.class_id as usize));
        tags.extend(std::iter::repeat_n(tag, ds.len()));
    }
    let emb = tsne(&features, &labels, &cfg.tsne)?;
    let rows: Vec<Vec<String>> = emb
        .points
        .iter()
        .zip(&labels)
        .zip(&tags)
        .map(|((p, l), t)| vec![fmt(p[0]), fmt(p[1]), l.to_string(), t.clone()])
        .collect();
    let mut outputs = Outputs::new();
    outputs.csv(dir.join("embedding.csv"), &["x", "y", "label", "tag"], &rows)?;
    outputs.bytes(dir.join("embedding.ppm"), &render_scatter(&emb.points, &labels, 512).encode_ppm())?;
    outputs.finish();
    println!(
        "embedded {} points; final KL {:.4}, silhouette {:.4}, centroid purity {:.4}",
        emb.points.len(),
        emb.kl_history.last().copied().unwrap_or(f64::NAN),
        silhouette_score(&emb.points, &labels)?,
        nearest_centroid_purity(&emb.points, &labels)?
    );
    Ok(())
}

fn cmd_report(cfg: &ExperimentConfig, dataset: &Path, dir: &Path) -> Result<()> {
    let ds = DatasetFile::read(dataset)?;
    let (train_idx, _) = split(&ds, cfg.dataset.train_per_class)?;
    let mut in_train = vec![false; ds.len()];
    for i in train_idx {
        in_train[i] = true;
    }
    let mut outputs = Outputs::new();
    let mut rows = Vec::with_capacity(ds.len());
    for (i, r) in ds.records.iter().enumerate() {
        let name = class_name(&ds, r.class_id as usize);
        let image = format!("images/{i:04}_{}.pgm", name.to_lowercase());
        outputs.bytes(dir.join(&image), &GrayImage::from_unit(&r.pixels, ds.width, ds.height)?.encode_pgm())?;
        rows.push(vec![
            i.to_string(),
            r.class_id.to_string(),
            name,
            fmt((r.initial_angle as f64).to_degrees()),
            fmt(r.bandwidth as f64),
            if in_train[i] { "train" } else { "test" }.to_string(),
            image,
        ]);
    }
    outputs.csv(
        dir.join("items.csv"),
        &["index", "class_id", "class_name", "initial_angle_deg", "bandwidth_hz", "split", "image"],
        &rows,
    )?;
    outputs.bytes(dir.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    outputs.finish();
    println!("{} images of {}×{} in {}", ds.len(), ds.height, ds.width, dataset.display());
    for (k, name) in ds.class_names.iter().enumerate() {
        let n = ds.records.iter().filter(|r| r.class_id as usize == k).count();
        let t = ds.records.iter().zip(&in_train).filter(|(r, &t)| t && r.class_id as usize == k).count();
        println!("  {name}: {n} ({t} train, {} test)", n - t);
    }
    println!("report written to {}", dir.display());
    Ok(())
}

/// Parses `args` (program name first), runs the command and maps errors to exit code 1.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
