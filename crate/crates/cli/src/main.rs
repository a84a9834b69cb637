use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qlp::algorithms::{algo1, algo2, Algo1Config, EpsRule, RandomProbes, SecondBatch};
use qlp::bench::{self, ExperimentConfig, ExperimentOutput, GeometrySuiteConfig, Mode};
use qlp::features::data_matrix;
use qlp::io::{read_matrix, read_sym_matrix, write_matrix, SystemBundle};
use qlp::lpcore::{farkas_certificate, solve_lp, LpModel, LpOutcome};
use qlp::system::{ground_truth_qpi, Dataset, LinearPolicy, Simulator};
use qlp::{matlib, SymMatrix};

#[derive(Parser)]
#[command(name = "qlp", version, about = "Sampled linear programs for LQ policy evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random plant and pole-placing gain; write A, B, L, K into a directory.
    GenSystem {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an LP given in the plain-text model format.
    SolveLp { model: PathBuf },
    /// Decide boundedness of the sampled LP for a dataset, objective and gain.
    CheckBounded {
        dataset: PathBuf,
        #[arg(long = "C")]
        c: PathBuf,
        #[arg(long = "K")]
        k: PathBuf,
        #[arg(long, default_value_t = bench::GAMMA)]
        gamma: f64,
    },
    /// Build a dataset and objective with the Lyapunov-probe construction.
    Algo1 {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, default_value_t = bench::GAMMA)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Probe along unit vectors instead of the columns of P^(1/2).
        #[arg(long)]
        identity_probes: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a dataset for a given objective and perturb it to a unique optimum.
    Algo2 {
        #[arg(long)]
        system: PathBuf,
        /// Objective matrix file; identity when omitted.
        #[arg(long = "C")]
        c: Option<PathBuf>,
        #[arg(long, default_value_t = bench::GAMMA)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Perturbation scale s in eps_i = s / ||M_i||.
        #[arg(long, default_value_t = 0.01)]
        eps_scale: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Boundedness frequency of random datasets.
    McExample1 {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "results/example1")]
        out: PathBuf,
    },
    /// Estimation error and timing of both constructions and the regularized baseline.
    McExample2 {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "results/example2")]
        out: PathBuf,
    },
    /// Cone, exact-set and reachability property suites.
    GeometrySuite {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 100)]
        directions: usize,
        #[arg(long, default_value = "results/geometry")]
        out: PathBuf,
    },
}

type CliResult = Result<ExitCode, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::GenSystem { n, m, seed, out } => gen_system(n, m, seed, &out),
        Command::SolveLp { model } => solve_model(&model),
        Command::CheckBounded { dataset, c, k, gamma } => check_bounded(&dataset, &c, &k, gamma),
        Command::Algo1 { system, gamma, seed, identity_probes, out } => run_algo1(&system, gamma, seed, identity_probes, out),
        Command::Algo2 { system, c, gamma, seed, eps_scale, out } => run_algo2(&system, c, gamma, seed, eps_scale, out),
        Command::McExample1 { config, out } => monte_carlo(&config, Mode::Example1, &out),
        Command::McExample2 { config, out } => monte_carlo(&config, Mode::Example2, &out),
        Command::GeometrySuite { seed, trials, instances, directions, out } => {
            let cfg = GeometrySuiteConfig {
                seed,
                cone_trials: trials,
                exact_instances: instances,
                reach_instances: instances,
                directions,
                ..Default::default()
            };
            geometry_suite(&cfg, &out)
        }
    }
}

fn gen_system(n: usize, m: usize, seed: u64, out: &Path) -> CliResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (plant, cost, policy) = bench::gen_system(n, m, &mut rng)?;
    let q_pi = ground_truth_qpi(&plant, &cost, &policy, bench::GAMMA)?;
    SystemBundle { plant, cost, policy }.write(out)?;
    write_matrix(out.join("Qpi.txt"), q_pi.as_matrix())?;
    println!("wrote system (n = {n}, m = {m}) to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn solve_model(path: &Path) -> CliResult {
    let model = LpModel::parse(&fs::read_to_string(path)?)?;
    let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
    match solve_lp(&model)? {
        LpOutcome::Optimal { point, value } => {
            println!("optimal {value}");
            println!("x: {}", join(&point));
        }
        LpOutcome::Unbounded { ray } => {
            println!("unbounded");
            println!("ray: {}", join(&ray));
        }
        LpOutcome::Infeasible => println!("infeasible"),
    }
    Ok(ExitCode::SUCCESS)
}

fn read_dataset(path: &Path) -> Result<Dataset, Box<dyn std::error::Error>> {
    Ok(Dataset::read_csv(fs::File::open(path)?)?)
}

fn check_bounded(dataset: &Path, c: &Path, k: &Path, gamma: f64) -> CliResult {
    let data = read_dataset(dataset)?;
    let c = read_sym_matrix(c)?;
    let policy = LinearPolicy::new(read_matrix(k)?);
    let mm = data_matrix(&data, &policy, gamma)?;
    match farkas_certificate(&mm, &c)? {
        Some(cert) => {
            println!("bounded");
            println!("residual {:e}", cert.residual(&mm, &c));
            let lambda: Vec<String> = cert.lambda.iter().map(|l| format!("{l}")).collect();
            println!("lambda: {}", lambda.join(" "));
        }
        None => println!("unbounded"),
    }
    Ok(ExitCode::SUCCESS)
}

fn report_estimate(data: &Dataset, policy: &LinearPolicy, gamma: f64, c: &SymMatrix, q_pi: &SymMatrix) -> CliResult {
    let check = bench::check_lp(data, policy, gamma, c)?;
    println!("samples {}", data.len());
    println!("bounded {}", check.bounded);
    println!("certificate_ok {}", check.certificate_ok);
    if let Some(q) = check.q {
        println!("e_pi {:e}", (&q - q_pi).norm2());
    }
    Ok(ExitCode::SUCCESS)
}

fn save_outputs(out: Option<PathBuf>, data: &Dataset, c: &SymMatrix) -> Result<(), Box<dyn std::error::Error>> {
    if let Some(dir) = out {
        fs::create_dir_all(&dir)?;
        data.write_csv(fs::File::create(dir.join("dataset.csv"))?)?;
        write_matrix(dir.join("C.txt"), c.as_matrix())?;
    }
    Ok(())
}

fn run_algo1(system: &Path, gamma: f64, seed: u64, identity: bool, out: Option<PathBuf>) -> CliResult {
    let b = SystemBundle::read(system)?;
    let q_pi = ground_truth_qpi(&b.plant, &b.cost, &b.policy, gamma)?;
    let sim = Simulator::new(b.plant, b.cost)?;
    let mut cfg = Algo1Config::new(q_pi.dim());
    if identity {
        cfg.second_batch = SecondBatch::Identity;
    }
    let mut probes = RandomProbes::new(ChaCha8Rng::seed_from_u64(seed));
    let res = algo1(&sim, &b.policy, gamma, &cfg, &mut probes)?;
    println!("lambda_min {:e}", res.lambda.iter().cloned().fold(f64::INFINITY, f64::min));
    println!("C_min_eig {:e}", res.c.min_eig()?);
    save_outputs(out, &res.dataset, &res.c)?;
    report_estimate(&res.dataset, &b.policy, gamma, &res.c, &q_pi)
}

fn run_algo2(system: &Path, c: Option<PathBuf>, gamma: f64, seed: u64, eps_scale: f64, out: Option<PathBuf>) -> CliResult {
    let b = SystemBundle::read(system)?;
    let q_pi = ground_truth_qpi(&b.plant, &b.cost, &b.policy, gamma)?;
    let c = match c {
        Some(p) => read_sym_matrix(p)?,
        None => SymMatrix::identity(q_pi.dim()),
    };
    let sim = Simulator::new(b.plant, b.cost)?;
    let mut probes = RandomProbes::new(ChaCha8Rng::seed_from_u64(seed));
    let res = algo2(&sim, &b.policy, gamma, &c, &mut probes, EpsRule::InverseNorm(eps_scale))?;
    println!("eps_max {:e}", res.eps.iter().cloned().fold(0.0, f64::max));
    println!("C_tilde_min_eig {:e}", res.c_tilde.min_eig()?);
    println!("P_cond {:e}", matlib::sym_eig(&res.p)?.values.last().unwrap() / res.p.min_eig()?);
    save_outputs(out, &res.dataset, &res.c_tilde)?;
    report_estimate(&res.dataset, &b.policy, gamma, &res.c_tilde, &q_pi)
}

fn print_summary(out: &ExperimentOutput) {
    println!("n,m,N,method,trials,f_bounded,failures,e_pi_median,time_median");
    for r in &out.summary {
        let e = r.e_pi.map_or("NA".to_string(), |q| format!("{:e}", q[1]));
        println!(
            "{},{},{},{},{},{},{},{},{:e}",
            r.n, r.m, r.samples, r.method, r.trials, r.bounded_frac, r.failures, e, r.wall_time[1]
        );
    }
}

fn monte_carlo(config: &Path, mode: Mode, out: &Path) -> CliResult {
    let cfg = ExperimentConfig::from_file(config, mode)?;
    if cfg.mode != mode {
        return Err(format!("config declares mode {}, but this command runs {mode}", cfg.mode).into());
    }
    let result = match mode {
        Mode::Example1 => bench::run_example1(&cfg)?,
        Mode::Example2 => bench::run_example2(&cfg)?,
    };
    result.write(out)?;
    print_summary(&result);
    println!("wrote {}", out.display());
    if result.has_failures() {
        eprintln!("{} trial(s) failed", result.records.iter().filter(|r| r.failed()).count());
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn geometry_suite(cfg: &GeometrySuiteConfig, out: &Path) -> CliResult {
    let res = bench::run_geometry_suite(cfg)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("cone_suite.csv"), res.cone.to_csv())?;
    for line in res.lines() {
        println!("{line}");
    }
    if !res.cone.passed() {
        res.cone.dump_counterexamples(out.join("counterexamples"), &res.cone_dataset)?;
    }
    Ok(if res.passed() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}
