//! Command-line front end.

use clap::{Parser, Subcommand};
use fscl::cli::{cmd_nulldensity, cmd_test, export_schema, TestOptions};
use fscl::dataio::{ingest_csv, IngestOptions};
use fscl::harness::example1::{run_example1, Example1Config};
use fscl::harness::example2::{run_example2, Example2Config};
use fscl::harness::example3::{run_example3, Example3Config};
use fscl::harness::figures::{run_figure1, run_figure2, Figure1Config, Figure2Config};
use fscl::harness::Scale;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "fscl", version, about = "Forward step-up composite likelihood testing")]
struct Cli {
    /// Base seed for all random streams.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = rayon default). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory for reports.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a bundled Monte Carlo experiment.
    Simulate {
        /// One of: ex1, ex2, ex3, fig1, fig2.
        experiment: String,
        /// Monte Carlo replicates (experiment default when omitted).
        #[arg(long)]
        reps: Option<usize>,
        /// Bootstrap replicates.
        #[arg(long)]
        boot: Option<usize>,
        /// Permutation replicates.
        #[arg(long)]
        perm: Option<usize>,
        /// Significance level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Scale preset: paper or desk.
        #[arg(long, default_value = "desk")]
        scale: String,
    },
    /// Test a case-control CSV dataset.
    Test {
        /// Input CSV path.
        #[arg(long)]
        data: PathBuf,
        /// Group column name.
        #[arg(long, default_value = "group")]
        group_col: String,
        /// Force the number of category labels.
        #[arg(long)]
        categories: Option<usize>,
        /// Fixed search depth; "auto" selects by the information criterion.
        #[arg(long, default_value = "auto")]
        ncl_star: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 1000)]
        boot: usize,
        #[arg(long, default_value_t = 1000)]
        perm: usize,
    },
    /// Tabulate the analytic null density of the search statistic.
    NullDensity {
        /// Selected components k.
        #[arg(long)]
        ncl_star: usize,
        /// Total components K.
        #[arg(long)]
        ncl: usize,
        /// Per-component degrees of freedom.
        #[arg(long)]
        p_prime: u32,
        #[arg(long, default_value_t = 60.0)]
        t_max: f64,
        #[arg(long, default_value_t = 0.25)]
        t_step: f64,
    },
    /// Print the output file schemas.
    ExportSchema,
}

fn run(cli: Cli) -> fscl::Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| fscl::Error::invalid(format!("thread pool: {e}")))?;
    }
    let started = Instant::now();
    match cli.command {
        Command::Simulate {
            experiment,
            reps,
            boot,
            perm,
            alpha,
            scale,
        } => {
            let scale: Scale = scale.parse()?;
            let report = match experiment.as_str() {
                "ex1" => {
                    let mut cfg = Example1Config::new(cli.seed);
                    if let Some(r) = reps {
                        cfg.reps = r;
                    }
                    cfg.alpha = alpha;
                    run_example1(&cfg)?.report
                }
                "ex2" => {
                    let mut cfg = match scale {
                        Scale::Paper => Example2Config::paper(cli.seed),
                        Scale::Desk => Example2Config::desk(cli.seed),
                    };
                    if let Some(r) = reps {
                        cfg.reps = r;
                    }
                    if let Some(b) = boot {
                        cfg.b_boot = b;
                    }
                    if let Some(p) = perm {
                        cfg.b_perm = p;
                    }
                    cfg.alpha = alpha;
                    run_example2(&cfg)?.report
                }
                "ex3" => {
                    let mut cfg = Example3Config::desk(cli.seed);
                    if let Some(r) = reps {
                        cfg.reps = r;
                    }
                    if let Some(b) = boot {
                        cfg.b_boot = b;
                    }
                    if let Some(p) = perm {
                        cfg.b_perm = p;
                    }
                    cfg.alpha = alpha;
                    run_example3(&cfg)?.report
                }
                "fig1" => {
                    let mut cfg = Figure1Config::new(cli.seed);
                    if let Some(r) = reps {
                        cfg.reps = r;
                    }
                    cfg.alpha = alpha;
                    run_figure1(&cfg)?.report
                }
                "fig2" => {
                    let out = run_figure2(&Figure2Config::new(cli.seed))?;
                    out.hist_report.write(&cli.out, "fig2_hist")?;
                    out.report
                }
                other => {
                    return Err(fscl::Error::invalid(format!(
                        "unknown experiment '{other}' (expected ex1, ex2, ex3, fig1, fig2)"
                    )))
                }
            };
            let (csv, json) = report.write(&cli.out, &experiment)?;
            eprintln!(
                "wrote {} and {} in {:.1}s",
                csv.display(),
                json.display(),
                started.elapsed().as_secs_f64()
            );
        }
        Command::Test {
            data,
            group_col,
            categories,
            ncl_star,
            alpha,
            boot,
            perm,
        } => {
            let dataset = ingest_csv(
                &data,
                &IngestOptions {
                    group_column: group_col,
                    categories,
                },
            )?;
            let n_cl_star = match ncl_star.as_str() {
                "auto" => None,
                s => Some(s.parse::<usize>().map_err(|_| {
                    fscl::Error::invalid(format!("--ncl-star must be an integer or 'auto', got '{s}'"))
                })?),
            };
            let outcome = cmd_test(
                &dataset,
                &TestOptions {
                    n_cl_star,
                    alpha,
                    b_boot: boot,
                    b_perm: perm,
                    seed: cli.seed,
                },
            )?;
            let (csv, json) = outcome.report.write(&cli.out, "test")?;
            println!(
                "FS-CL depth {} (MAP {}): statistic {:.4}, p = {:.4}",
                outcome.data.chosen_depth,
                outcome.data.map_choice,
                outcome.data.fscl_statistic,
                outcome.data.fscl_p_value
            );
            println!(
                "selected variables: {}",
                outcome.data.selected_variables.join(", ")
            );
            println!(
                "wald p = {:.4}, lssb p = {:.4}, lssbw p = {:.4}, uminp p = {:.4}",
                outcome.data.wald_p_value,
                outcome.data.lssb_p_value,
                outcome.data.lssbw_p_value,
                outcome.data.uminp_p_value
            );
            eprintln!("wrote {} and {}", csv.display(), json.display());
        }
        Command::NullDensity {
            ncl_star,
            ncl,
            p_prime,
            t_max,
            t_step,
        } => {
            let table = cmd_nulldensity(ncl_star, ncl, p_prime, t_max, t_step)?;
            std::fs::create_dir_all(&cli.out)?;
            let path = cli.out.join("null_density.csv");
            std::fs::write(&path, table.to_csv())?;
            eprintln!("wrote {} (normalization {:.8})", path.display(), table.normalization);
        }
        Command::ExportSchema => {
            println!("{}", serde_json::to_string_pretty(&export_schema()).unwrap());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        let code = err.exit_code();
        let payload = serde_json::json!({
            "error": {"kind": err.kind(), "message": err.to_string()}
        });
        eprintln!("{payload}");
        std::process::exit(code);
    }
}
