use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rcm::harness::output::{convergence_table, naive_table, online_table, timing_table, truth_table};
use rcm::harness::{
    online, study_naive_points, study_rbm_convergence, study_timing, study_truth_convergence, train, AnyModel,
    ModelArtifact, StudyConfig, TestSet,
};
use rcm::reduced::{LogEntry, ReducedModel};
use rcm::{Error, ParameterPoint, Result};

#[derive(Parser)]
#[command(name = "rcm", version, about = "Reduced collocation models: training, online solves and studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a reduced model and write it to --out.
    Offline(Flags),
    /// Evaluate a trained model at --mu.
    Online(Flags),
    /// Convergence and timing studies.
    #[command(subcommand)]
    Study(Study),
}

#[derive(Subcommand)]
enum Study {
    /// Truth-solver convergence against a fine reference.
    Truth(Flags),
    /// Reduced-model errors and bounds for n = 1..N.
    Rbm(Flags),
    /// Coarse Chebyshev collocation points next to the greedy ones.
    NaivePoints(Flags),
    /// Online, truth and offline wall times.
    Timing(Flags),
}

#[derive(Args, Default)]
struct Flags {
    /// key = value file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    nx: Option<String>,
    /// Training lattice, e.g. 32x32.
    #[arg(long = "train-grid")]
    train_grid: Option<String>,
    #[arg(long)]
    nmax: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    /// Greedy seed for `offline`, sampling seed for the studies.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Parameter point, e.g. 1,0.5.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    #[arg(long = "nx-list")]
    nx_list: Option<String>,
    #[arg(long = "ref-nx")]
    ref_nx: Option<String>,
    #[arg(long)]
    reps: Option<String>,
}

impl Flags {
    /// Configuration file (if any) with command-line overrides applied.
    fn resolve(&self, seed_key: &str) -> Result<StudyConfig> {
        let mut cfg = match &self.config {
            Some(p) => StudyConfig::from_file(p)?,
            None => StudyConfig::default(),
        };
        let overrides = [
            ("problem", &self.problem),
            ("method", &self.method),
            ("nx", &self.nx),
            ("train_grid", &self.train_grid),
            ("nmax", &self.nmax),
            ("tol", &self.tol),
            (seed_key, &self.seed),
            ("samples", &self.samples),
            ("model", &self.model),
            ("out", &self.out),
            ("mu", &self.mu),
            ("nx_list", &self.nx_list),
            ("ref_nx", &self.ref_nx),
            ("reps", &self.reps),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if cfg.custom.is_some() && self.problem.is_some() {
            return Err(Error::Config("--problem cannot replace a problem described in the config file".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn log_line(e: &LogEntry) -> String {
    let sel = e.selected_delta.map_or("-".to_string(), |d| format!("{d:.6e}"));
    format!(
        "iteration={} mu={:?} selected_delta={} max_delta={:.6e}",
        e.iteration,
        e.mu.as_slice(),
        sel,
        e.max_delta
    )
}

/// Artifact named by `--model`, and the configuration echoed by the study: the
/// training configuration with the study's own settings on top.
fn load_model(cfg: &StudyConfig) -> Result<(ModelArtifact, StudyConfig)> {
    let path = cfg
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("--model is required".into()))?;
    let art = ModelArtifact::load(path)?;
    let mut echo = art.config.clone();
    echo.test_seed = cfg.test_seed;
    echo.samples = cfg.samples;
    echo.repetitions = cfg.repetitions;
    echo.model = cfg.model.clone();
    echo.out = cfg.out.clone();
    Ok((art, echo))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Offline(flags) => {
            let cfg = flags.resolve("seed")?;
            let out = cfg
                .out
                .clone()
                .ok_or_else(|| Error::Config("--out is required for offline".into()))?;
            let art = train(&cfg, None)?;
            let m = art.model.reduced();
            for e in m.log() {
                println!("{}", log_line(e));
            }
            art.save(&out)?;
            println!(
                "wrote {} ({} basis functions, offline {:.3} s)",
                out.display(),
                m.size(),
                art.offline_seconds
            );
        }
        Command::Online(flags) => {
            let cfg = flags.resolve("seed")?;
            let (art, echo) = load_model(&cfg)?;
            if flags.mu.is_none() && flags.config.is_none() {
                return Err(Error::Config("--mu is required for online".into()));
            }
            let m = art.model.reduced();
            let r = online(m, &ParameterPoint::new(cfg.mu.clone()))?;
            online_table(m.problem().grid(), &r).write(&echo, cfg.out.as_deref())?;
        }
        Command::Study(Study::Truth(flags)) => {
            let cfg = flags.resolve("seed")?;
            let mu = ParameterPoint::new(cfg.mu.clone());
            let rows = study_truth_convergence(&cfg, &mu, &cfg.nx_list, cfg.ref_nx)?;
            truth_table(&rows).write(&cfg, cfg.out.as_deref())?;
        }
        Command::Study(Study::Rbm(flags)) => {
            let cfg = flags.resolve("test_seed")?;
            let (art, echo) = load_model(&cfg)?;
            let m = art.model.reduced();
            let tests = TestSet::sample(m.problem(), cfg.samples, cfg.test_seed)?;
            let rows = study_rbm_convergence(m, &tests)?;
            convergence_table(&rows).write(&echo, cfg.out.as_deref())?;
        }
        Command::Study(Study::NaivePoints(flags)) => {
            let cfg = flags.resolve("test_seed")?;
            let (art, echo) = load_model(&cfg)?;
            let AnyModel::Ercm(m) = &art.model else {
                return Err(Error::Config("naive-points needs an ercm model".into()));
            };
            let tests = TestSet::sample(m.problem(), cfg.samples, cfg.test_seed)?;
            let rows = study_naive_points(m, &tests)?;
            naive_table(&rows).write(&echo, cfg.out.as_deref())?;
        }
        Command::Study(Study::Timing(flags)) => {
            let cfg = flags.resolve("test_seed")?;
            let (art, echo) = load_model(&cfg)?;
            let row = study_timing(art.model.reduced(), art.offline_seconds, cfg.repetitions, cfg.test_seed)?;
            timing_table(&[row]).write(&echo, cfg.out.as_deref())?;
        }
    }
    Ok(())
}

/// `error: kind=<kind> message="<text>"` on a single line.
fn error_line(e: &Error) -> String {
    let message = e.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    format!("error: kind={} message=\"{}\"", e.kind(), message)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;
    use rcm::estimator::error_bound;
    use rcm::linalg::norm2;

    fn exec(args: &[&str]) -> Result<()> {
        let cli = Cli::try_parse_from(std::iter::once("rcm").chain(args.iter().copied())).expect("arguments parse");
        run(cli)
    }

    fn ok(args: &[&str]) {
        if let Err(e) = exec(args) {
            panic!("rcm {args:?} failed: {}", error_line(&e));
        }
    }

    fn path(dir: &Path, name: &str) -> String {
        dir.join(name).to_str().unwrap().to_string()
    }

    fn offline(dir: &Path, name: &str, extra: &[&str]) -> String {
        let p = path(dir, name);
        let mut args = vec!["offline", "--problem", "anisotropic", "--nx", "12", "--train-grid", "6x5", "--out", &p];
        args.extend_from_slice(extra);
        ok(&args);
        p
    }

    /// `# key v1 v2 ...` note of an online table.
    fn note(text: &str, key: &str) -> Vec<f64> {
        let line = text
            .lines()
            .find(|l| l.starts_with(&format!("# {key} ")))
            .unwrap_or_else(|| panic!("no `{key}` note"));
        line.split_whitespace().skip(2).map(|v| v.parse().unwrap()).collect()
    }

    #[test]
    fn offline_writes_a_model_with_its_log() {
        let dir = tempfile::tempdir().unwrap();
        let model = offline(dir.path(), "m.rcm", &["--method", "ercm", "--nmax", "4"]);
        let art = ModelArtifact::load(Path::new(&model)).unwrap();
        let m = art.model.reduced();
        assert_eq!(m.size(), 4);
        assert_eq!(m.selected().len(), 4);
        let AnyModel::Ercm(e) = &art.model else { panic!("expected an ercm model") };
        assert_eq!(e.points().len(), 4);
        let first = log_line(&m.log()[0]);
        assert!(first.starts_with("iteration=1 mu=[") && first.contains("selected_delta=-"), "{first}");
        assert!(log_line(&m.log()[1]).contains("selected_delta=") && !log_line(&m.log()[1]).contains("=-"));
    }

    #[test]
    fn single_snapshot_model_reproduces_its_snapshot_online() {
        let dir = tempfile::tempdir().unwrap();
        let model = offline(dir.path(), "one.rcm", &["--method", "lsrcm", "--nmax", "1"]);
        let art = ModelArtifact::load(Path::new(&model)).unwrap();
        let m = art.model.reduced();
        let mu = m.selected()[0].clone();
        let out = path(dir.path(), "u.csv");
        ok(&["online", "--model", &model, "--mu", &format!("{},{}", mu[0], mu[1]), "--out", &out]);
        let text = std::fs::read_to_string(&out).unwrap();
        let values: Vec<f64> = text
            .lines()
            .skip_while(|l| *l != "x,y,u")
            .skip(1)
            .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
            .collect();
        let truth = m.problem().truth_solve(&mu).unwrap().values;
        let err: Vec<f64> = values.iter().zip(&truth).map(|(a, b)| a - b).collect();
        assert_eq!(values.len(), truth.len());
        assert!(norm2(&err) <= 1e-8 * norm2(&truth));
    }

    #[test]
    fn online_bound_matches_an_independent_recomputation() {
        let dir = tempfile::tempdir().unwrap();
        let model = offline(dir.path(), "m.rcm", &["--method", "ercm", "--nmax", "5"]);
        let out = path(dir.path(), "u.csv");
        ok(&["online", "--model", &model, "--mu", "1,0.5", "--out", &out]);
        let text = std::fs::read_to_string(&out).unwrap();
        let residual = note(&text, "residual")[0];
        let beta = note(&text, "beta")[0];
        let delta = note(&text, "delta")[0];
        assert_eq!(delta, error_bound(residual, beta).unwrap());
        let mu = ParameterPoint::from([1.0, 0.5]);
        let p = rcm::problem::build_anisotropic(12).unwrap();
        let exact_beta = p.stability_constant(&mu).unwrap();
        assert!((beta - exact_beta).abs() <= 1e-12 * exact_beta);
        let art = ModelArtifact::load(Path::new(&model)).unwrap();
        let u = art.model.reduced().reconstruct(&note(&text, "coefficients"));
        let truth = p.truth_solve(&mu).unwrap().values;
        let err: Vec<f64> = u.iter().zip(&truth).map(|(a, b)| a - b).collect();
        assert!(norm2(&err) <= delta);
    }

    #[test]
    fn failures_report_one_machine_readable_line() {
        let dir = tempfile::tempdir().unwrap();
        let model = offline(dir.path(), "m.rcm", &["--nmax", "2"]);
        let e = exec(&["online", "--model", &model, "--mu", "9,9"]).unwrap_err();
        let line = error_line(&e);
        assert!(line.starts_with("error: kind=parameter_outside_domain message=\""), "{line}");
        assert_eq!(line.lines().count(), 1);

        let missing = path(dir.path(), "x.rcm");
        let e = exec(&["offline", "--problem", "anisotropic", "--out", &missing]).unwrap_err();
        assert_eq!(e.kind(), "config");
        assert!(!Path::new(&missing).exists());

        let bogus = path(dir.path(), "bogus.rcm");
        std::fs::write(&bogus, b"RCMA\x09\x00\x00\x00").unwrap();
        let e = exec(&["online", "--model", &bogus, "--mu", "1,1"]).unwrap_err();
        assert!(error_line(&e).starts_with("error: kind=artifact_version"));

        let quoted = Error::Config("a \"quoted\"\nvalue".into());
        assert_eq!(error_line(&quoted), "error: kind=config message=\"config: a \\\"quoted\\\" value\"");
    }

    #[test]
    fn command_line_flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = path(dir.path(), "run.cfg");
        std::fs::write(&cfg, "problem = anisotropic\nmethod = lsrcm\nnx = 10\ntrain_grid = 5x4\nnmax = 3\n").unwrap();
        let out = path(dir.path(), "m.rcm");
        ok(&["offline", "--config", &cfg, "--nmax", "2", "--method", "ercm", "--out", &out]);
        let art = ModelArtifact::load(Path::new(&out)).unwrap();
        assert_eq!(art.model.reduced().method(), "ercm");
        assert_eq!(art.model.reduced().size(), 2);
        assert_eq!(art.config.nx, Some(10));
        assert_eq!(art.config.train_grid, vec![5, 4]);
    }

    #[test]
    fn studies_write_tables_with_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let model = offline(dir.path(), "m.rcm", &["--method", "ercm", "--nmax", "4"]);
        for (study, header) in [
            ("rbm", "n,max_delta_xi,max_delta_test,max_l2,median_l2,min_l2,max_linf,median_linf,min_linf"),
            ("naive-points", "points,n,min_cond,median_cond,max_cond,singular,best_l2,best_linf"),
            ("timing", "method,nx,n,offline_seconds,online_seconds,truth_seconds,online_over_truth,offline_over_truth"),
        ] {
            let out = path(dir.path(), &format!("{study}.csv"));
            ok(&["study", study, "--model", &model, "--samples", "4", "--reps", "5", "--out", &out]);
            let text = std::fs::read_to_string(&out).unwrap();
            let lines: Vec<&str> = text.lines().collect();
            assert!(lines[0].starts_with("# rcm ") && lines[0].contains("table-format 1"), "{study}");
            assert!(lines[1].starts_with("# config {") && lines[1].contains("\"samples\":4"), "{study}");
            assert_eq!(lines[2], header);
            assert!(lines.len() > 3);
        }
        let out = path(dir.path(), "truth.csv");
        ok(&["study", "truth", "--problem", "anisotropic", "--mu", "1,0.5", "--nx-list", "8,12", "--ref-nx", "12", "--out", &out]);
        let text = std::fs::read_to_string(&out).unwrap();
        let last = text.lines().last().unwrap();
        assert!(last.starts_with("12,"));
        let linf: f64 = last.split(',').nth(2).unwrap().parse().unwrap();
        assert!(linf < 1e-12);
    }

    /// Timing tables keep their first three columns; the rest are wall times.
    fn without_timing(text: &str) -> String {
        text.lines()
            .map(|l| {
                if l.starts_with('#') {
                    l.to_string()
                } else {
                    l.split(',').take(3).collect::<Vec<_>>().join(",")
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn identical_configs_give_identical_tables() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (path(dir.path(), "a.rcm"), path(dir.path(), "b.rcm"));
        for out in [&a, &b] {
            ok(&[
                "offline", "--problem", "anisotropic", "--method", "ercm", "--nx", "12", "--train-grid", "8x6", "--nmax",
                "6", "--seed", "3", "--out", out,
            ]);
        }
        for study in ["rbm", "naive-points", "timing"] {
            let out = path(dir.path(), &format!("{study}.csv"));
            let mut outputs = Vec::new();
            for _ in 0..2 {
                ok(&["study", study, "--model", &a, "--samples", "6", "--seed", "9", "--reps", "3", "--out", &out]);
                outputs.push(std::fs::read_to_string(&out).unwrap());
            }
            if study == "timing" {
                assert_eq!(without_timing(&outputs[0]), without_timing(&outputs[1]));
            } else {
                assert_eq!(outputs[0], outputs[1], "{study}");
            }
        }
        // retraining from the same configuration gives the same numbers
        let out = path(dir.path(), "rbm-b.csv");
        ok(&["study", "rbm", "--model", &b, "--samples", "6", "--seed", "9", "--out", &out]);
        let body = |t: String| t.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
        assert_eq!(
            body(std::fs::read_to_string(path(dir.path(), "rbm.csv")).unwrap()),
            body(std::fs::read_to_string(&out).unwrap())
        );
    }

    #[test]
    fn truth_study_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let out = path(dir.path(), "t.csv");
        let args = ["study", "truth", "--problem", "diffusion", "--mu", "1,0.5", "--nx-list", "8,12,16", "--ref-nx", "20", "--out", &out];
        ok(&args);
        let first = std::fs::read_to_string(&out).unwrap();
        ok(&args);
        assert_eq!(first, std::fs::read_to_string(&out).unwrap());
    }
}
