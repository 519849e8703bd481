use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use positionality_adapters::{fetch_predictions, TargetSource};
use positionality_core::demographics::CulturalSphereTable;
use positionality_core::domain::{read_instances, read_predictions, write_instances, write_predictions, Annotation};
use positionality_core::report::{render, ReportFormat, ReportLayout};
use positionality_core::sampling::{parse_filter, stratified_sample, SamplingSpec};
use positionality_core::scale::LabelScale;
use positionality_core::stats::{participant_groups, positionality_table, AnalysisConfig, AnalysisOutput};
use positionality_core::storage::{
    export_rows, read_export, read_profiles, write_export, write_profiles, ExportFormat, ExportRow, StudyStore,
};
use positionality_core::synth::{generate_population, PopulationSpec};
use positionality_service::{AppState, ServiceConfig};

#[derive(Parser)]
#[command(name = "positionality", version, about = "Demographic alignment auditing for datasets and models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a stratified, seeded sample of instances.
    Sample {
        #[arg(long)]
        instances: PathBuf,
        /// attr=value[,attr=value]
        #[arg(long, default_value = "")]
        filter: String,
        #[arg(long)]
        strata: String,
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect one target's predictions for a set of instances.
    FetchPredictions {
        /// TargetSource JSON.
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        instances: PathBuf,
        /// Built-in scale name or a scale JSON file.
        #[arg(long, default_value = "social_acceptability")]
        scale: String,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the failure manifest; defaults to <out>.failures.json.
        #[arg(long)]
        failures: Option<PathBuf>,
    },
    /// Generate a synthetic annotator population.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long, default_value = "social_acceptability")]
        scale: String,
        #[arg(long)]
        out_annotations: PathBuf,
        #[arg(long)]
        out_profiles: PathBuf,
    },
    /// Correlate group-aggregated annotations with each target.
    Analyze {
        /// Annotation export, CSV or JSONL by extension.
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value = "social_acceptability")]
        scale: String,
        /// Analysis config JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Country to cultural sphere table JSON.
        #[arg(long)]
        spheres: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an analysis as tables.
    Report {
        #[arg(long)]
        analysis: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: String,
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a study's annotations and profiles.
    Export {
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long)]
        study: String,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to <out>.profiles.jsonl.
        #[arg(long)]
        profiles_out: Option<PathBuf>,
    },
    /// Run the study service.
    Serve {
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Environment variable holding the operator token.
        #[arg(long, default_value = "POSITIONALITY_OPERATOR_TOKEN")]
        operator_token_env: String,
    },
}

fn scale_arg(arg: &str) -> Result<LabelScale> {
    match arg {
        "social_acceptability" => Ok(LabelScale::social_acceptability()),
        "hate_speech" => Ok(LabelScale::hate_speech()),
        path => {
            let f = File::open(path).with_context(|| format!("scale {path:?} is neither built-in nor a file"))?;
            Ok(serde_json::from_reader(BufReader::new(f))?)
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn export_format_for(path: &Path) -> ExportFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("ndjson") => ExportFormat::Jsonl,
        _ => ExportFormat::Csv,
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Sample {
            instances,
            filter,
            strata,
            n,
            seed,
            out,
        } => {
            let pool = read_instances(open(&instances)?)?;
            let spec = SamplingSpec {
                filter: parse_filter(&filter)?,
                strata_attribute: strata,
                n_total: n,
                seed,
            };
            let sample = stratified_sample(&pool, &spec)?;
            write_instances(create(&out)?, &sample)?;
            tracing::info!(drawn = sample.len(), from = pool.len(), "sample written");
        }
        Command::FetchPredictions {
            source,
            instances,
            scale,
            out,
            failures,
        } => {
            let source: TargetSource = serde_json::from_reader(open(&source)?)?;
            let instances = read_instances(open(&instances)?)?;
            let scale = scale_arg(&scale)?;
            let runtime = tokio::runtime::Runtime::new()?;
            let outcome = runtime.block_on(fetch_predictions(&source, &instances, &scale))?;
            write_predictions(create(&out)?, &outcome.records)?;
            let manifest = failures.unwrap_or_else(|| with_suffix(&out, ".failures.json"));
            let mut w = create(&manifest)?;
            serde_json::to_writer_pretty(&mut w, &outcome.failures)?;
            w.write_all(b"\n")?;
            tracing::info!(
                records = outcome.records.len(),
                failures = outcome.failures.len(),
                retries = outcome.retries,
                "predictions written"
            );
        }
        Command::Synth {
            spec,
            instances,
            targets,
            scale,
            out_annotations,
            out_profiles,
        } => {
            let spec: PopulationSpec = serde_json::from_reader(open(&spec)?)?;
            let instances = read_instances(open(&instances)?)?;
            let targets = read_predictions(open(&targets)?)?;
            let scale = scale_arg(&scale)?;
            let pop = generate_population(&spec, &instances, &targets, &scale)?;
            let rows = pop
                .annotations
                .iter()
                .map(|a| {
                    Ok(ExportRow {
                        participant_id: a.participant_id.clone(),
                        instance_id: a.instance_id.clone(),
                        score: a.score,
                        label_text: scale.label_for_score(a.score)?.to_string(),
                        created_at: a.created_at,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_export(create(&out_annotations)?, &rows, export_format_for(&out_annotations))?;
            let mut w = create(&out_profiles)?;
            for p in &pop.profiles {
                serde_json::to_writer(&mut w, p)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            tracing::info!(annotators = pop.profiles.len(), annotations = rows.len(), "population written");
        }
        Command::Analyze {
            annotations,
            profiles,
            predictions,
            scale,
            config,
            spheres,
            out,
        } => {
            let scale = scale_arg(&scale)?;
            let config: AnalysisConfig = match config {
                Some(p) => serde_json::from_reader(open(&p)?)?,
                None => AnalysisConfig::default(),
            };
            let table = match spheres {
                Some(p) => CulturalSphereTable::from_json(&std::fs::read_to_string(p)?)?,
                None => CulturalSphereTable::shipped(),
            };
            let rows = read_export(open(&annotations)?, export_format_for(&annotations))?;
            let annotations: Vec<Annotation> = rows.into_iter().map(ExportRow::into_annotation).collect();
            let profiles: std::collections::BTreeMap<_, _> = read_profiles(open(&profiles)?)?
                .into_iter()
                .map(|r| (r.participant_id, r.profile))
                .collect();
            let grouping = participant_groups(&profiles, &table);
            let predictions = read_predictions(open(&predictions)?)?;
            let output = positionality_table(&annotations, &grouping, &predictions, &scale, &config)?;
            let mut w = create(&out)?;
            serde_json::to_writer_pretty(&mut w, &output)?;
            w.write_all(b"\n")?;
            tracing::info!(cells = output.cells.len(), m = output.m_hypotheses, "analysis written");
        }
        Command::Report {
            analysis,
            format,
            layout,
            out,
        } => {
            let output: AnalysisOutput = serde_json::from_reader(open(&analysis)?)?;
            let layout: ReportLayout = match layout {
                Some(p) => serde_json::from_reader(open(&p)?)?,
                None => ReportLayout::default(),
            };
            let doc = render(&output, &layout, format.parse::<ReportFormat>()?)?;
            std::fs::write(&out, doc).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Export {
            data_dir,
            study,
            format,
            out,
            profiles_out,
        } => {
            let store = StudyStore::open(&data_dir)?;
            if !store.exists(&study) {
                bail!("unknown study {study:?} in {}", data_dir.display());
            }
            let (state, _log) = store.load_state(&study, Arc::new(CulturalSphereTable::shipped()))?;
            let format: ExportFormat = format.parse()?;
            write_export(create(&out)?, &export_rows(&state), format)?;
            let profiles_out = profiles_out.unwrap_or_else(|| with_suffix(&out, ".profiles.jsonl"));
            write_profiles(create(&profiles_out)?, &state)?;
            tracing::info!(annotations = state.annotations().len(), "export written");
        }
        Command::Serve {
            data_dir,
            addr,
            operator_token_env,
        } => {
            let token = std::env::var(&operator_token_env)
                .with_context(|| format!("operator token variable {operator_token_env} is not set"))?;
            if token.len() < 16 {
                bail!("operator token must be at least 16 characters");
            }
            let app = AppState::open(ServiceConfig::new(data_dir, token))?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                tracing::info!(%addr, "listening");
                positionality_service::serve(listener, app).await
            })?;
        }
    }
    Ok(())
}
