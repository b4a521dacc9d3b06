use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use riskscope_client::RiskscopeClient;
use riskscope_core::api::{parse_grid, AnalysisParams, AnswerRequest, RegisterDatasetRequest};
use riskscope_core::{Algorithm, Family, Query, Schema};

use crate::inputs::read_preference;
use crate::{emit, parse_algorithm, parse_family, DataError};

#[derive(Args)]
pub struct RemoteArgs {
    #[arg(long, env = "RISKSCOPE_URL", default_value = "http://127.0.0.1:8080")]
    url: String,
    #[arg(long, env = "RISKSCOPE_TOKEN")]
    token: String,
    #[command(subcommand)]
    command: RemoteCommand,
}

#[derive(Subcommand)]
enum RemoteCommand {
    Register {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        delta_g: Option<f64>,
    },
    Submit {
        #[arg(long)]
        dataset_id: String,
        #[arg(long)]
        query: PathBuf,
    },
    Tickets,
    Ticket {
        id: String,
    },
    Analysis {
        id: String,
        #[arg(long, value_parser = parse_family)]
        mechanism: Option<Family>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        sensitivity_override: Option<f64>,
    },
    Answer {
        id: String,
        #[arg(long, value_parser = parse_algorithm, default_value = "rdr")]
        algorithm: Algorithm,
        #[arg(long)]
        preference: Option<String>,
        #[arg(long)]
        tau_p: Option<f64>,
        #[arg(long)]
        tau_var: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = parse_family)]
        mechanism: Option<Family>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        eps_svt: Option<f64>,
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        sensitivity_override: Option<f64>,
    },
    Odometer {
        dataset_id: String,
    },
    DeltaG {
        dataset_id: String,
        value: f64,
    },
}

fn read(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(|e| DataError(e).into())
}

pub fn run(args: RemoteArgs) -> Result<()> {
    let client = RiskscopeClient::new(&args.url, args.token)?;
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    rt.block_on(async move {
        match args.command {
            RemoteCommand::Register { data, schema, delta_g } => {
                let req = RegisterDatasetRequest {
                    csv: read(&data)?,
                    schema: Schema::from_json(&read(&schema)?)?,
                    delta_g,
                };
                emit(&client.register_dataset(&req).await?, None)
            }
            RemoteCommand::Submit { dataset_id, query } => {
                let q = Query::from_json(&read(&query)?)?;
                emit(&client.submit_query(&dataset_id, &q).await?, None)
            }
            RemoteCommand::Tickets => emit(&client.list_queries().await?, None),
            RemoteCommand::Ticket { id } => emit(&client.ticket_json(&id).await?, None),
            RemoteCommand::Analysis {
                id,
                mechanism,
                delta,
                grid,
                sensitivity_override,
            } => {
                let params = AnalysisParams {
                    mechanism,
                    delta,
                    grid,
                    sensitivity_override,
                };
                emit(&client.analysis(&id, &params).await?, None)
            }
            RemoteCommand::Answer {
                id,
                algorithm,
                preference,
                tau_p,
                tau_var,
                seed,
                mechanism,
                delta,
                eps_svt,
                grid,
                sensitivity_override,
            } => {
                let mut req = AnswerRequest::new(algorithm, read_preference(preference.as_deref(), tau_p, tau_var)?, seed);
                req.mechanism = mechanism;
                req.delta = delta;
                req.eps_svt = eps_svt;
                req.grid = grid.as_deref().map(parse_grid).transpose()?;
                req.sensitivity_override = sensitivity_override;
                emit(&client.answer(&id, &req).await?, None)
            }
            RemoteCommand::Odometer { dataset_id } => emit(&client.odometer(&dataset_id).await?, None),
            RemoteCommand::DeltaG { dataset_id, value } => emit(&client.set_delta_g(&dataset_id, value).await?, None),
        }
    })
}
