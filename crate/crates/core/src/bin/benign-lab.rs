use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use benign_lab::config::RunConfig;
use benign_lab::datasets::{
    check_schema, load_abalone, load_wine, make_synthetic, prepare_real, DatasetKind,
};
use benign_lab::experiments::{
    aggregate_crossings, group_crossings, read_curves_csv, run_risk_curves, schedule_quantities,
    write_crossings_csv, write_curves_csv, write_failures_csv, DataSource, ExcessEval, ModelSpec,
};
use benign_lab::krr::{
    check_assumption_krr, krr_complexity_sweep, write_sweep_csv, KrrAssumptionInputs,
};
use benign_lab::ntk::{
    kappa, ntk_taylor, operator_apply_mc, spectrum, top_entry, write_spectrum_csv,
    DEFAULT_SERIES_TOL,
};
use benign_lab::relu_net::{init_antisymmetric, train};
use benign_lab::rng::{derive_seed, tag};
use benign_lab::sphere::sample_sphere;
use benign_lab::{Error, Result};

#[derive(Parser)]
#[command(
    name = "benign-lab",
    version,
    about = "NTK regression and two-layer ReLU risk-curve workbench"
)]
struct Cli {
    /// Worker threads for independent cells (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write NTK eigenvalues and multiplicities up to order MAX_H.
    Spectrum {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        max_h: usize,
        #[arg(long, default_value_t = DEFAULT_SERIES_TOL)]
        tol: f64,
        #[arg(long, default_value = "spectrum.csv")]
        out: PathBuf,
    },
    /// Monte-Carlo eigen-equation check and Taylor-series agreement check.
    KernelCheck {
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 500_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// KRR regularization sweep for every n in the config (first seed).
    KrrSweep(ConfigArg),
    /// Train one network cell (first n, first seed) with diagnostics.
    NnTrain(ConfigArg),
    /// Risk curves for every (n, seed) cell, crossings and failures.
    Experiment(ConfigArg),
    /// Crossing points and their aggregates from an existing curves table.
    Crossing {
        #[arg(long)]
        curves: PathBuf,
        #[arg(long, default_value = "crossings.csv")]
        out: PathBuf,
    },
    /// Evaluate the KRR parameter regime or the gradient-descent schedule.
    Assumptions {
        #[command(subcommand)]
        which: AssumptionCmd,
    },
    /// Dataset utilities.
    Data {
        #[command(subcommand)]
        which: DataCmd,
    },
}

#[derive(Args)]
struct ConfigArg {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum AssumptionCmd {
    /// Clause-by-clause check of the KRR parameter regime.
    Krr {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        f_eps_norm: Option<f64>,
        /// Absolute constant of the covariance concentration bound.
        #[arg(long = "C")]
        c: Option<f64>,
    },
    /// Training horizon T_eps and factorial-decay index U_eps.
    Nn {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, default_value_t = 1)]
        l_eps: u64,
        #[arg(long, default_value_t = 20)]
        max_h: usize,
    },
}

#[derive(Subcommand)]
enum DataCmd {
    /// Validate a dataset file and print its schema.
    Check {
        #[arg(long)]
        kind: DatasetKind,
        #[arg(long)]
        path: PathBuf,
        /// Comma-separated abalone measurement indices.
        #[arg(long, value_delimiter = ',')]
        abalone_columns: Option<Vec<usize>>,
    },
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn cmd_spectrum(d: usize, max_h: usize, tol: f64, out: &Path) -> Result<()> {
    let entries = spectrum(d, max_h, tol)?;
    write_atomic(out, |w| write_spectrum_csv(w, &entries))?;
    if let Some(top) = top_entry(&entries) {
        println!(
            "top eigenvalue {:.12e} at h={} (multiplicity {})",
            top.eigenvalue, top.order, top.multiplicity
        );
    }
    Ok(())
}

fn cmd_kernel_check(d: usize, samples: usize, seed: u64) -> Result<()> {
    if samples == 0 {
        return Err(Error::invalid("samples must be positive"));
    }
    if d < 2 {
        return Err(Error::invalid("d must be at least 2"));
    }
    const MC_TOL: f64 = 0.002;
    const TAYLOR_TERMS: usize = 10_000;
    const TAYLOR_TOL: f64 = 1e-3;
    let want = 1.0 / (4.0 * d as f64);
    let mut failures = Vec::new();

    let mut e_d = vec![0.0; d];
    e_d[d - 1] = 1.0;
    let points = sample_sphere(d, 4, derive_seed(seed, tag::SAMPLE_PAIRS, &[]))?;
    let mut evals: Vec<Vec<f64>> = vec![e_d];
    evals.extend((0..points.n()).map(|i| points.row_vec(i)));
    println!("eigen-equation: (H f)(x) vs f(x)/(4d) with f(x) = x_d, {samples} samples");
    for (k, x) in evals.iter().enumerate() {
        let est = operator_apply_mc(
            x,
            |p| p[d - 1],
            samples,
            derive_seed(seed, tag::EVAL, &[k as u64]),
        )?;
        let target = want * x[d - 1];
        let ok = (est - target).abs() <= MC_TOL;
        println!(
            "  point {k}: estimate {est:+.6} target {target:+.6} {}",
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failures.push(format!("eigen-equation at point {k}"));
        }
    }
    println!("taylor: {TAYLOR_TERMS}-term series vs closed form");
    for t in [-1.0, -0.5, 0.0, 0.3, 0.7, 0.95, 1.0] {
        let gap = (ntk_taylor(t, TAYLOR_TERMS)? - kappa(t)).abs();
        let ok = gap <= TAYLOR_TOL;
        println!(
            "  t = {t:+.2}: |gap| {gap:.3e} {}",
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failures.push(format!("taylor at t={t}"));
        }
    }
    if failures.is_empty() {
        println!("kernel-check passed");
        Ok(())
    } else {
        Err(Error::CheckFailed(failures.join("; ")))
    }
}

fn cmd_krr_sweep(cfg: &RunConfig) -> Result<()> {
    let exp = cfg.experiment()?;
    let gammas = match &exp.model {
        ModelSpec::Krr { gammas } => gammas.clone(),
        ModelSpec::Nn { .. } => cfg.require_list("gamma_list")?,
    };
    let out_dir = cfg.out_dir();
    fs::create_dir_all(&out_dir)?;
    let mut records = Vec::new();
    for cell in exp.cells().into_iter().filter(|c| c.seed_index == 0) {
        let data_seed = cell.seed(exp.base_seed, tag::DATA);
        let (train_set, eval) = match &exp.data {
            DataSource::Synthetic { d } => (
                make_synthetic(*d, cell.n, exp.noise_std, data_seed)?,
                ExcessEval::MonteCarlo {
                    d: *d,
                    samples: exp.mc_samples,
                    seed: cell.seed(exp.base_seed, tag::EVAL),
                },
            ),
            DataSource::Real { raw, n_test } => {
                let split = prepare_real(raw, cell.n, *n_test, exp.noise_std, data_seed)?;
                let eval = ExcessEval::held_out(&split.test)?;
                (split.train, eval)
            }
        };
        records.extend(krr_complexity_sweep(
            &train_set,
            &gammas,
            &eval.materialize()?,
        )?);
    }
    let path = out_dir.join("krr_sweep.csv");
    write_atomic(&path, |w| write_sweep_csv(w, &records))?;
    println!("wrote {} records to {}", records.len(), path.display());
    Ok(())
}

fn cmd_nn_train(cfg: &RunConfig) -> Result<()> {
    let exp = cfg.experiment()?;
    let ModelSpec::Nn { width, train: tc } = exp.model.clone() else {
        return Err(Error::config("model", "nn-train needs model = nn"));
    };
    let cell = exp.cells()[0];
    let data_seed = cell.seed(exp.base_seed, tag::DATA);
    let (train_set, eval) = match &exp.data {
        DataSource::Synthetic { d } => (
            make_synthetic(*d, cell.n, exp.noise_std, data_seed)?,
            ExcessEval::MonteCarlo {
                d: *d,
                samples: exp.mc_samples,
                seed: cell.seed(exp.base_seed, tag::EVAL),
            },
        ),
        DataSource::Real { raw, n_test } => {
            let split = prepare_real(raw, cell.n, *n_test, exp.noise_std, data_seed)?;
            let eval = ExcessEval::held_out(&split.test)?;
            (split.train, eval)
        }
    };
    let (net, _) = init_antisymmetric(width, train_set.dim(), cell.seed(exp.base_seed, tag::INIT))?;
    let mut tc = tc;
    if !cfg.contains("diagnostics") {
        tc.diagnostics = true;
    }
    let out = train(net, &train_set, &tc, &eval.materialize()?, cell.seed_index)?;
    let out_dir = cfg.out_dir();
    fs::create_dir_all(&out_dir)?;
    write_atomic(&out_dir.join("curves.csv"), |w| {
        write_curves_csv(w, std::slice::from_ref(&out.curve))
    })?;
    write_atomic(&out_dir.join("diagnostics.csv"), |w| {
        out.diagnostics.write_csv(w)
    })?;
    let last = out.curve.len() - 1;
    println!(
        "n={} m={width} iterations={}: empirical {:.6e}, excess {:.6e}",
        cell.n, out.curve.iterations[last], out.curve.empirical[last], out.curve.excess[last]
    );
    if out.diagnostics.gram_skipped {
        println!("empirical Gram eigenvalues skipped (n > 2000)");
    }
    Ok(())
}

fn cmd_experiment(cfg: &RunConfig) -> Result<()> {
    let exp = cfg.experiment()?;
    let out_dir = cfg.out_dir();
    fs::create_dir_all(&out_dir)?;
    let outcome = run_risk_curves(&exp)?;
    let summaries = aggregate_crossings(&group_crossings(&outcome.curves))?;
    write_atomic(&out_dir.join("curves.csv"), |w| {
        write_curves_csv(w, &outcome.curves)
    })?;
    write_atomic(&out_dir.join("crossings.csv"), |w| {
        write_crossings_csv(w, &summaries)
    })?;
    write_atomic(&out_dir.join("failures.csv"), |w| {
        write_failures_csv(w, &outcome.failures)
    })?;
    for s in &summaries {
        match s.stats {
            Some(st) => println!(
                "n={:>6}: crossed in {:.0}% of {} runs, iteration {:.1} ± {:.1}, risk {:.4e} ± {:.1e}",
                s.n,
                100.0 * s.found_fraction,
                s.runs,
                st.mean_iteration,
                st.std_iteration,
                st.mean_risk,
                st.std_risk
            ),
            None => println!("n={:>6}: no crossing in {} runs", s.n, s.runs),
        }
    }
    for f in &outcome.failures {
        eprintln!("cell n={} seed={} failed: {}", f.n, f.seed, f.error);
    }
    if outcome.curves.is_empty() {
        return Err(Error::CheckFailed(
            "every cell failed; see failures.csv".into(),
        ));
    }
    Ok(())
}

fn cmd_crossing(curves: &Path, out: &Path) -> Result<()> {
    let curves = read_curves_csv(fs::File::open(curves).map_err(|e| Error::at_path(curves, e))?)?;
    let summaries = aggregate_crossings(&group_crossings(&curves))?;
    write_atomic(out, |w| write_crossings_csv(w, &summaries))?;
    println!("{} groups from {} curves", summaries.len(), curves.len());
    Ok(())
}

fn pick<T: std::str::FromStr>(flag: Option<T>, cfg: &RunConfig, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(v),
        None => cfg.require(key),
    }
}

fn load_optional(config: &Option<PathBuf>) -> Result<RunConfig> {
    config
        .as_ref()
        .map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn cmd_assumptions(which: AssumptionCmd) -> Result<()> {
    match which {
        AssumptionCmd::Krr {
            config,
            eps,
            delta,
            gamma,
            d,
            n,
            f_eps_norm,
            c,
        } => {
            let cfg = load_optional(&config)?;
            let inputs = KrrAssumptionInputs {
                eps: pick(eps, &cfg, "eps")?,
                delta: pick(delta, &cfg, "delta")?,
                gamma: pick(gamma, &cfg, "gamma")?,
                d: pick(d, &cfg, "d")?,
                n: pick(n, &cfg, "n")?,
                f_eps_norm: pick(f_eps_norm, &cfg, "f_eps_norm")?,
                c: match c {
                    Some(v) => v,
                    None => cfg.get_or("constant_C", 1.0)?,
                },
            };
            check_assumption_krr(&inputs).write_text(io::stdout().lock())?;
        }
        AssumptionCmd::Nn {
            config,
            eps,
            d,
            l_eps,
            max_h,
        } => {
            let cfg = load_optional(&config)?;
            let eps: f64 = pick(eps, &cfg, "eps")?;
            let d: usize = pick(d, &cfg, "d")?;
            let spec = spectrum(d, max_h, DEFAULT_SERIES_TOL)?;
            let q = schedule_quantities(eps, d, &spec, l_eps)?;
            println!("eps        {}", q.eps);
            println!("L_eps      {}", q.l_eps);
            println!("lambda_eps {:.12e}", q.lambda_eps);
            println!("T_eps      {:.6}", q.t_eps);
            println!("U_eps      {}", q.u_eps);
        }
    }
    Ok(())
}

fn cmd_data(which: DataCmd) -> Result<()> {
    let DataCmd::Check {
        kind,
        path,
        abalone_columns,
    } = which;
    let raw = match kind {
        DatasetKind::Abalone => load_abalone(&path, abalone_columns.as_deref())?,
        DatasetKind::Wine => load_wine(&path)?,
        DatasetKind::Synthetic => {
            return Err(Error::invalid("synthetic data has no file to check"))
        }
    };
    let r = check_schema(&raw);
    println!("kind     {}", r.kind);
    println!("rows     {}", r.rows);
    println!("features {} ({})", r.features.len(), r.features.join(", "));
    println!("target   [{}, {}]", r.target_min, r.target_max);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Spectrum { d, max_h, tol, out } => cmd_spectrum(d, max_h, tol, &out),
        Command::KernelCheck { d, samples, seed } => cmd_kernel_check(d, samples, seed),
        Command::KrrSweep(a) => cmd_krr_sweep(&RunConfig::load(a.config)?),
        Command::NnTrain(a) => cmd_nn_train(&RunConfig::load(a.config)?),
        Command::Experiment(a) => cmd_experiment(&RunConfig::load(a.config)?),
        Command::Crossing { curves, out } => cmd_crossing(&curves, &out),
        Command::Assumptions { which } => cmd_assumptions(which),
        Command::Data { which } => cmd_data(which),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
