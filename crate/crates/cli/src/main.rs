//! `handflow` command-line tool.
//!
//! Every subcommand reads an optional flat config file (`--config`), applies
//! `--set key=value` overrides and `--seed`, and writes a manifest next to
//! its output. Failures print one line `handflow: error[<kind>]: <message>`
//! to stderr: usage errors exit 2, malformed data exits 3, anything else 1.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use handflow::evalkit::JointLayout;
use handflow::harness::eval::{mmd_rows, mpjpe_rows, self_mmd_rows, view_rows};
use handflow::harness::report::{ambiguity_regret_svg, load_rows, save_rows};
use handflow::harness::{
    annotate_dataset, derive_seed, evaluate_split, load_checkpoint, observe_world, train_run, verify_dataset,
    write_atomic, Dataset, Manifest, MetricReport, RunConfig, Split,
};
use handflow::Error;

#[derive(Parser)]
#[command(name = "handflow", version, about = "Conditional normalizing flows over two-hand poses")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the synthetic world and write an unannotated dataset.
    SynthData {
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate plausible annotation sets for every record of a dataset.
    GenAnnotations {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on the train split; writes checkpoints into a directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Shorthand for `--set train.steps=N`.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Draw pose samples for every record of a split (CSV).
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: SplitArg,
        /// Samples per record (defaults to eval.samples).
        #[arg(long)]
        n: Option<usize>,
    },
    /// MMD of flow samples and of the mode against the annotation sets.
    EvalMmd {
        /// Checkpoint; omit together with --self-test.
        #[arg(long, required_unless_present = "self_test")]
        model: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: SplitArg,
        /// Compare each annotation set against itself instead.
        #[arg(long)]
        self_test: bool,
    },
    /// Mode MPJPE against ground truth and annotations, plus ambiguity.
    EvalMpjpe {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: SplitArg,
    },
    /// Rank cameras by ambiguity and report their regret.
    SelectViews {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output directory for views.csv and ambiguity_regret.svg.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: SplitArg,
    },
    /// Per-frame means and a summary block of a metric CSV.
    Report {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli, &args[1..]) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = match &e {
                Error::Data(_) | Error::Json(_) => ("data", 3),
                Error::Config(_) => ("config", 2),
                Error::Io(_) => ("io", 1),
                _ => ("runtime", 1),
            };
            let msg = e.to_string().replace('\n', " ");
            eprintln!("handflow: error[{kind}]: {msg}");
            ExitCode::from(code)
        }
    }
}

fn config(common: &Common, extra: &[String]) -> handflow::Result<RunConfig> {
    let mut overrides = common.set.clone();
    overrides.extend_from_slice(extra);
    if let Some(s) = common.seed {
        overrides.push(format!("seed={s}"));
    }
    RunConfig::load(common.config.as_deref(), &overrides)
}

fn manifest_path(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join("manifest.json")
    } else {
        let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        out.with_file_name(name)
    }
}

fn finish(mut m: Manifest, inputs: &[&Path], outputs: &[&Path], out: &Path, is_dir: bool) -> handflow::Result<()> {
    m.inputs = inputs.iter().map(|p| p.display().to_string()).collect();
    m.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
    m.save(&manifest_path(out, is_dir))
}

fn run(cli: Cli, args: &[String]) -> handflow::Result<()> {
    let common = &cli.common;
    match cli.command {
        Command::SynthData { out } => {
            let run = config(common, &[])?;
            let assets = run.assets.build()?;
            let ds = observe_world(&run, &assets)?;
            ds.save(&out)?;
            finish(Manifest::new("synth-data", args, &run), &[], &[&out], &out, false)
        }
        Command::GenAnnotations { data, out } => {
            let run = config(common, &[])?;
            let assets = run.assets.build()?;
            let mut ds = Dataset::load(&data)?;
            annotate_dataset(&mut ds, &run, &assets)?;
            let bad = verify_dataset(&ds, &run, &assets);
            if !bad.is_empty() {
                return Err(Error::InvalidPose(format!("{} annotation sets fail verification, first {}", bad.len(), bad[0])));
            }
            ds.save(&out)?;
            finish(Manifest::new("gen-annotations", args, &run), &[&data], &[&out], &out, false)
        }
        Command::Train { data, out, steps } => {
            let extra: Vec<String> = steps.map(|s| format!("train.steps={s}")).into_iter().collect();
            let run = config(common, &extra)?;
            let assets = run.assets.build()?;
            let ds = Dataset::load(&data)?;
            std::fs::create_dir_all(&out)?;
            let outcome = train_run(&ds, &run, &assets, &out)?;
            let model = out.join("model.json");
            finish(Manifest::new("train", args, &run), &[&data], &[&model, &out.join("curve.csv")], &out, true)?;
            if let Some(s) = outcome.diverged_at {
                return Err(Error::Diverged { step: s });
            }
            Ok(())
        }
        Command::Sample { model, data, out, split, n } => {
            let run = config(common, &[])?;
            let (_, m) = load_checkpoint(&model)?;
            let ds = Dataset::load(&data)?;
            let n = n.unwrap_or(run.eval.samples);
            let mut csv = String::from("frame,camera,sample");
            for i in 0..m.flow.config.dim {
                csv.push_str(&format!(",psi{i}"));
            }
            csv.push('\n');
            let seed = derive_seed(run.seed, "sample");
            for r in ds.split(split.into()) {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, &r.key()));
                for (k, p) in m.sample(&r.observation, n, &mut rng)?.iter().enumerate() {
                    csv.push_str(&format!("{},{},{k}", r.frame_id, r.camera_id));
                    for x in p {
                        csv.push_str(&format!(",{x}"));
                    }
                    csv.push('\n');
                }
            }
            write_atomic(&out, csv.as_bytes())?;
            finish(Manifest::new("sample", args, &run), &[&model, &data], &[&out], &out, false)
        }
        Command::EvalMmd { model, data, out, split, self_test } => {
            let run = config(common, &[])?;
            let assets = run.assets.build()?;
            let layout = JointLayout::of(&assets.skeleton);
            let ds = Dataset::load(&data)?;
            let mut inputs = vec![data.as_path()];
            let rows = if self_test {
                let evals = annotation_evals(&ds, split.into(), &assets)?;
                self_mmd_rows(&evals, &run.eval, &layout)?
            } else {
                let model = model.as_deref().expect("required by clap");
                inputs.push(model);
                let (_, m) = load_checkpoint(model)?;
                let evals = evaluate_split(&m, &ds, split.into(), &assets, run.eval.samples, derive_seed(run.seed, "eval"))?;
                mmd_rows(&evals, &run.eval, &layout)?
            };
            save_rows(&out, &rows)?;
            finish(Manifest::new("eval-mmd", args, &run), &inputs, &[&out], &out, false)
        }
        Command::EvalMpjpe { model, data, out, split } => {
            let run = config(common, &[])?;
            let assets = run.assets.build()?;
            let layout = JointLayout::of(&assets.skeleton);
            let ds = Dataset::load(&data)?;
            let (_, m) = load_checkpoint(&model)?;
            let evals = evaluate_split(&m, &ds, split.into(), &assets, run.eval.samples, derive_seed(run.seed, "eval"))?;
            save_rows(&out, &mpjpe_rows(&evals, &layout)?)?;
            finish(Manifest::new("eval-mpjpe", args, &run), &[&model, &data], &[&out], &out, false)
        }
        Command::SelectViews { model, data, out, split } => {
            let run = config(common, &[])?;
            let assets = run.assets.build()?;
            let layout = JointLayout::of(&assets.skeleton);
            let ds = Dataset::load(&data)?;
            let (_, m) = load_checkpoint(&model)?;
            let evals = evaluate_split(&m, &ds, split.into(), &assets, run.eval.samples, derive_seed(run.seed, "eval"))?;
            let (sel, rows) = view_rows(&evals, &run.eval, &layout)?;
            let (csv, svg) = (out.join("views.csv"), out.join("ambiguity_regret.svg"));
            save_rows(&csv, &rows)?;
            write_atomic(&svg, ambiguity_regret_svg(&sel).as_bytes())?;
            println!(
                "best {} (regret {:.3}), worst {} (regret {:.3}), mean regret {:.3}",
                sel.best().camera_id,
                sel.best().regret,
                sel.worst().camera_id,
                sel.worst().regret,
                sel.mean_regret()
            );
            finish(Manifest::new("select-views", args, &run), &[&model, &data], &[&csv, &svg], &out, true)
        }
        Command::Report { metrics, out } => {
            let run = config(common, &[])?;
            let rows = load_rows(&metrics)?;
            let rep = MetricReport::from_rows(&rows);
            write_atomic(&out, rep.to_csv().as_bytes())?;
            for (k, v) in &rep.summary {
                println!("{k} {v}");
            }
            finish(Manifest::new("report", args, &run), &[&metrics], &[&out], &out, false)
        }
    }
}

/// Annotation-only evaluations for the self test: samples and mode are
/// taken from the annotations themselves.
fn annotation_evals(ds: &Dataset, split: Split, assets: &handflow::handmodel::ModelAssets) -> handflow::Result<Vec<handflow::harness::RecordEval>> {
    use handflow::harness::pose_joints;
    ds.split(split)
        .map(|r| {
            let cam = &r.observation.camera;
            let annotations = r
                .annotations
                .annotations
                .iter()
                .map(|a| pose_joints(a, assets, cam))
                .collect::<handflow::Result<Vec<_>>>()?;
            if annotations.is_empty() {
                return Err(Error::Data(format!("{} has no annotations; run gen-annotations first", r.key())));
            }
            Ok(handflow::harness::RecordEval {
                frame_id: r.frame_id.clone(),
                camera_id: r.camera_id.clone(),
                camera: cam.clone(),
                samples: annotations.clone(),
                mode: annotations[0].clone(),
                gt: r.joints3d.clone(),
                annotations,
                invalid_samples: 0,
            })
        })
        .collect()
}
