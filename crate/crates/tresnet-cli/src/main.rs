use clap::Parser;

use tresnet_cli::{analyze, evaluate, predict, synth, train};

/// Forecasts next-interval maximum CPU utilization for cloud VM traces.
#[derive(Parser)]
#[command(name = "tresnet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand)]
enum Command {
    /// Generate a seeded synthetic utilization trace
    Synth(synth::SynthArgs),
    /// Emit per-VM decomposition and correlation-density charts
    Analyze(analyze::AnalyzeArgs),
    /// Train a forecaster on one deployment of a trace
    Train(train::TrainArgs),
    /// Write next-interval predictions for the test region
    Predict(predict::PredictArgs),
    /// Score the trained model against the baselines
    Evaluate(evaluate::EvaluateArgs),
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign { 0 } else { 1 };
        }
    };
    let result = match &cli.command {
        Command::Synth(args) => synth::cmd_synth(args),
        Command::Analyze(args) => analyze::cmd_analyze(args),
        Command::Train(args) => train::cmd_train(args),
        Command::Predict(args) => predict::cmd_predict(args),
        Command::Evaluate(args) => evaluate::cmd_evaluate(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn main() {
    std::process::exit(run());
}
