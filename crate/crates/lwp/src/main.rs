use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lwp::config::StreamSpec;
use lwp::csv_stream::write_stream;
use lwp::plot::plot_progression;
use lwp::runner::run_config;
use lwp_core::tasks::{AttributeParams, ToyOrder};

#[derive(Parser)]
#[command(name = "lwp", version, about = "Continual multi-task training with latent distance preservation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (mode, seed) cell of an experiment config.
    Run { config: PathBuf },
    /// Redraw plots from a results directory.
    Plot { results: PathBuf },
    /// Write a generated stream to CSV files plus schema.json.
    Gen {
        generator: Generator,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        /// Input noise for the toy stream.
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        /// Put the XOR task first in the toy stream.
        #[arg(long)]
        xor_first: bool,
        #[arg(long, default_value_t = 10)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        tasks: usize,
        #[arg(long, default_value_t = 0.5)]
        shift_scale: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    Toy,
    Attribute,
    Shift,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config } => run_config(&config).map(|out| {
            println!(
                "{} cell(s) done; aggregate at {}",
                out.cells.len(),
                out.aggregate.display()
            );
        }),
        Command::Plot { results } => plot_progression(&results).map(|paths| {
            for p in paths {
                println!("{}", p.display());
            }
        }),
        Command::Gen {
            generator,
            seed,
            out,
            n,
            noise,
            xor_first,
            dim,
            tasks,
            shift_scale,
        } => {
            let params = AttributeParams {
                n,
                dim,
                tasks,
                ..AttributeParams::default()
            };
            let spec = match generator {
                Generator::Toy => StreamSpec::Toy {
                    n,
                    noise,
                    order: if xor_first { ToyOrder::XorFirst } else { ToyOrder::CirclesFirst },
                },
                Generator::Attribute => StreamSpec::Attribute(params),
                Generator::Shift => StreamSpec::Shift { params, shift_scale },
            };
            spec.build(seed).and_then(|s| write_stream(&s, &out)).map(|paths| {
                for p in paths {
                    println!("{}", p.display());
                }
            })
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
