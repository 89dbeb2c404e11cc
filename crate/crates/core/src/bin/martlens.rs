use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use martlens::bands::{self, BandDataConfig};
use martlens::bundle::{self, sha256_hex, ModelRegistryEntry, TrainOptions};
use martlens::data::{self, DEFAULT_TARGET};
use martlens::edge::{self, EdgePipeline, SyntheticExtractor, TransmitOptions};
use martlens::explain::{self, ExplainerConfig, DEFAULT_NUM_FEATURES, DEFAULT_NUM_SAMPLES, DEFAULT_SEED};
use martlens::service::{self, DATA_ROOT_ENV, DEFAULT_PORT};

type Error = Box<dyn std::error::Error + Send + Sync>;
type Result<T> = std::result::Result<T, Error>;

#[derive(Parser)]
#[command(name = "martlens", version, about = "Explainable livestock price prediction")]
struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic mart sales CSV plus a `.meta.json` with the generator's parameters.
    GenData {
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "mart.csv")]
        out: PathBuf,
    },
    /// Fit a price model and write the model bundle.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = DEFAULT_TARGET)]
        target: String,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[arg(long, default_value_t = 42)]
        split_seed: u64,
        #[arg(long, default_value_t = martlens::discretize::DEFAULT_BINS)]
        bins: usize,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Score a model on a labelled CSV.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Price one animal.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        instance: InstanceArg,
    },
    /// Explain one predicted price.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        instance: InstanceArg,
        #[command(flatten)]
        explainer: ExplainerArgs,
    },
    /// Compare the explanation before and after overriding feature values.
    Whatif {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        instance: InstanceArg,
        /// Override as NAME=VALUE; repeatable.
        #[arg(long = "set", value_parser = parse_override, required = true)]
        overrides: Vec<(String, f64)>,
        #[command(flatten)]
        explainer: ExplainerArgs,
    },
    /// Regress weight from synthetic image features and score weight bands.
    BandsEval {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 200.0)]
        width: f64,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        /// Mix side, front, back and cross views.
        #[arg(long)]
        multi_view: bool,
        /// Samples CSV (f0.., true_weight_kg, pov) instead of generated data.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
    },
    /// Sample, deduplicate and package a frame stream; optionally send it.
    SimulateEdge {
        /// Directory of `.pgm` frames; a synthetic stream is used otherwise.
        #[arg(long)]
        frames_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 250)]
        frames: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = edge::DEFAULT_STRIDE)]
        stride: usize,
        #[arg(long, default_value_t = edge::DEFAULT_DEDUPE_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value = "cam-01")]
        stream_id: String,
        /// Send feature packets instead of frames.
        #[arg(long)]
        extract_at_edge: bool,
        /// Write the encoded packet stream here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Service base URL, e.g. http://127.0.0.1:8080
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Persistence root; defaults to $MARTLENS_DATA_ROOT or ./martlens-data.
        #[arg(long)]
        data_root: Option<PathBuf>,
    },
}

#[derive(Args)]
struct InstanceArg {
    /// JSON object of feature values, or @path to a file holding one.
    #[arg(long)]
    instance: String,
}

impl InstanceArg {
    fn load(&self) -> Result<BTreeMap<String, f64>> {
        let text = match self.instance.strip_prefix('@') {
            Some(path) => std::fs::read_to_string(path)?,
            None => self.instance.clone(),
        };
        serde_json::from_str(&text).map_err(|e| format!("--instance: {e}").into())
    }
}

#[derive(Args)]
struct ExplainerArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_NUM_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_NUM_FEATURES)]
    features: usize,
}

impl ExplainerArgs {
    fn config(&self) -> ExplainerConfig {
        ExplainerConfig {
            seed: self.seed,
            num_samples: self.samples,
            num_features: self.features,
            ..ExplainerConfig::default()
        }
    }
}

fn parse_override(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got {s:?}"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn emit_json(value: &impl Serialize) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn load_model(path: &Path) -> Result<ModelRegistryEntry> {
    ModelRegistryEntry::load(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn print_metrics(label: &str, m: &martlens::linreg::RegressionMetrics) {
    println!("{label:<6} rmse {:>12.4}  mae {:>12.4}  r2 {:>8.4}", m.rmse, m.mae, m.r2);
}

fn run(cli: Cli) -> Result<()> {
    let json = cli.json;
    match cli.command {
        Command::GenData { n, seed, out } => {
            let d = data::gen_synthetic_mart(n, seed);
            d.save_csv(&out)?;
            let meta = data::sidecar_path(&out);
            let params = data::synthetic_params(d.len(), seed);
            let mut bytes = serde_json::to_vec_pretty(&params)?;
            bytes.push(b'\n');
            bundle::write_atomic(&meta, &bytes)?;
            if json {
                emit_json(&json!({ "path": out, "meta": meta, "rows": d.len(), "features": d.n_features() }))?;
            } else {
                println!("wrote {} rows x {} features to {}", d.len(), d.n_features(), out.display());
                println!("generator parameters: {}", meta.display());
            }
        }
        Command::Train {
            data: path,
            target,
            lambda,
            train_fraction,
            split_seed,
            bins,
            out,
        } => {
            let bytes = std::fs::read(&path)?;
            let text = String::from_utf8(bytes)?;
            let d = data::parse_csv(&text, &target)?;
            let options = TrainOptions {
                lambda,
                train_fraction,
                split_seed,
                n_bins: bins,
            };
            let outcome = bundle::train(&d, &sha256_hex(text.as_bytes()), &options)?;
            let entry = ModelRegistryEntry::new(outcome.artifact);
            entry.save(&out)?;
            if json {
                emit_json(&json!({
                    "path": out,
                    "model_id": entry.model_id,
                    "metrics": outcome.train_metrics,
                    "test_metrics": outcome.test_metrics,
                    "train_rows": outcome.train_rows,
                    "test_rows": outcome.test_rows,
                }))?;
            } else {
                println!("model {} -> {}", entry.model_id, out.display());
                println!("rows   train {}  test {}", outcome.train_rows, outcome.test_rows);
                print_metrics("train", &outcome.train_metrics);
                if let Some(m) = &outcome.test_metrics {
                    print_metrics("test", m);
                }
            }
        }
        Command::Evaluate { model, data: path } => {
            let entry = load_model(&model)?;
            let d = data::load_csv(&path, &entry.artifact.model.target_name)?;
            let m = entry.artifact.model.evaluate(&d)?;
            if json {
                emit_json(&json!({ "model_id": entry.model_id, "rows": d.len(), "metrics": m }))?;
            } else {
                println!("rows {}", d.len());
                print_metrics("eval", &m);
            }
        }
        Command::Predict { model, instance } => {
            let entry = load_model(&model)?;
            let price = entry.artifact.model.predict_map(&instance.load()?)?;
            if json {
                emit_json(&json!({ "model_id": entry.model_id, "price": price }))?;
            } else {
                println!("{price:.2}");
            }
        }
        Command::Explain {
            model,
            instance,
            explainer,
        } => {
            let entry = load_model(&model)?;
            let e = explain::explain_map(
                &entry.artifact.model,
                &entry.artifact.discretization,
                &instance.load()?,
                &explainer.config(),
            )?;
            if json {
                emit_json(&e)?;
            } else {
                print!("{}", explain::render_text(&e));
            }
        }
        Command::Whatif {
            model,
            instance,
            overrides,
            explainer,
        } => {
            let entry = load_model(&model)?;
            let names = &entry.artifact.model.feature_names;
            let unknown: Vec<&str> = overrides
                .iter()
                .map(|(k, _)| k.as_str())
                .filter(|k| !names.iter().any(|n| n == k))
                .collect();
            if !unknown.is_empty() {
                return Err(format!("unknown feature(s) in --set: {}", unknown.join(", ")).into());
            }
            let cfg = explainer.config();
            let base = instance.load()?;
            let mut changed = base.clone();
            changed.extend(overrides.iter().cloned());
            let run = |inst: &BTreeMap<String, f64>| {
                explain::explain_map(&entry.artifact.model, &entry.artifact.discretization, inst, &cfg)
            };
            let before = run(&base)?;
            let after = run(&changed)?;
            let delta = after.predicted_value - before.predicted_value;
            if json {
                emit_json(&json!({
                    "before": { "price": before.predicted_value, "explanation": before },
                    "after": { "price": after.predicted_value, "explanation": after },
                    "delta": delta,
                }))?;
            } else {
                println!("== before ==");
                print!("{}", explain::render_text(&before));
                println!("== after ==");
                print!("{}", explain::render_text(&after));
                println!("delta {delta:+.2}");
            }
        }
        Command::BandsEval {
            n,
            seed,
            width,
            classes,
            multi_view,
            data: path,
            train_fraction,
        } => {
            let samples = match path {
                Some(p) => bands::read_samples_csv(std::fs::File::open(p)?)?,
                None if multi_view => bands::gen_band_samples(&BandDataConfig::multi_view(n, seed)),
                None => bands::gen_band_samples(&BandDataConfig {
                    n,
                    seed,
                    ..BandDataConfig::default()
                }),
            };
            let (train_idx, test_idx) = data::split_indices(samples.len(), train_fraction, seed)?;
            let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
            let (train, test) = (pick(&train_idx), pick(&test_idx));
            let scheme = bands::make_bands(width, classes)?;
            let model = bands::train_band_model(&train)?;
            let report = bands::evaluate_bands(&model, &test, &scheme)?;
            if json {
                emit_json(&report)?;
            } else {
                print!("{}", report.render_table());
            }
        }
        Command::SimulateEdge {
            frames_dir,
            frames,
            seed,
            stride,
            threshold,
            stream_id,
            extract_at_edge,
            out,
            endpoint,
        } => {
            let stream = match frames_dir {
                Some(dir) => edge::read_pgm_dir(&dir)?,
                None => edge::synthetic_stream(frames, 64, 48, seed),
            };
            let pipeline = EdgePipeline {
                stride,
                threshold,
                extract_at_edge,
            };
            let packets = pipeline.package(&stream_id, &stream, &SyntheticExtractor::default())?;
            if let Some(path) = &out {
                bundle::write_atomic(path, &edge::encode_stream(&packets))?;
            }
            let delivery = match &endpoint {
                Some(url) => {
                    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
                    Some(rt.block_on(edge::transmit(&packets, url, &TransmitOptions::default()))?)
                }
                None => None,
            };
            if json {
                emit_json(&json!({
                    "input_frames": stream.len(),
                    "packets": packets.len(),
                    "out": out,
                    "delivery": delivery,
                }))?;
            } else {
                println!("frames {}  packets {}", stream.len(), packets.len());
                if let Some(p) = &out {
                    println!("packet stream -> {}", p.display());
                }
                if let Some(r) = &delivery {
                    println!(
                        "sent {}  acked {}  duplicates {}  failed {}",
                        r.sent, r.acked, r.duplicates, r.failed
                    );
                    for rej in &r.rejected {
                        println!("  seq {} rejected: {}", rej.seq, rej.reason);
                    }
                }
            }
        }
        Command::Serve { port, host, data_root } => {
            let root = data_root
                .or_else(|| std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("martlens-data"));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::run(root, SocketAddr::new(host, port)))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
