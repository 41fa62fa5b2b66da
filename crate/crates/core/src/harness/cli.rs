use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::encoder::{closed_form_cost, CostMatrix};
use crate::formula::{compile, ground, CompileOptions, GroupMode, TolMode};
use crate::model::load_checkpoint;
use crate::trainer::{evaluate, format_g9, metrics_csv, TrainState};

use super::experiments::{prepare, run_to_dir, tag_names, ExperimentConfig, RunArtifacts, SavedState};
use super::gradcheck::all_suites;
use super::graphs::gen_graphs;
use super::shortcut::gen_shortcut_task;
use super::{bench_encoders, BenchExample, HarnessError};

#[derive(Debug, Parser)]
#[command(name = "logicloss", version, about = "Logical constraints as dual-variable training losses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Grouping {
    PerClause,
    Single,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DataTask {
    Shortcut,
    ShortestPath,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Example {
    #[value(alias = "appendix-c-1")]
    DisjunctionEscape,
    #[value(alias = "appendix-c-2")]
    ProductStationary,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a constraint file, print its clauses, and optionally its cost
    /// on concrete outputs.
    Compile {
        #[arg(long)]
        constraint: PathBuf,
        /// Outputs of one slot, `name=v0,v1,...`; repeatable.
        #[arg(long = "state", value_name = "SLOT=VALUES")]
        states: Vec<String>,
        #[arg(long, default_value_t = 0.01)]
        margin: f64,
        #[arg(long, value_enum, default_value = "per-clause")]
        grouping: Grouping,
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
    },
    /// Write a generated dataset as JSON lines.
    GenData {
        #[arg(long, value_enum)]
        task: DataTask,
        #[arg(long, default_value_t = 2000)]
        count: usize,
        #[arg(long, default_value_t = 8)]
        vertices: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train from an experiment config and write metrics, checkpoint and
    /// manifest under `<out>/<run id>/`.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Recompute test metrics from a run manifest and its checkpoint.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Run the finite-difference gradient suites.
    GradCheck {
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare constraint encoders on the one-dimensional examples.
    BenchEncoders {
        #[arg(long, value_enum, default_value = "all")]
        example: Example,
    },
}

fn parse_state(s: &str) -> Result<(String, Vec<f64>), HarnessError> {
    let (name, vals) = s
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("state `{}` is not SLOT=VALUES", s)))?;
    let vals = vals
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| HarnessError::Config(format!("bad number `{}` in state `{}`", v, s)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((name.trim().to_string(), vals))
}

fn read(path: &PathBuf) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {}", path.display(), e)))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), HarnessError> {
    match cli.command {
        Command::Compile {
            constraint,
            states,
            margin,
            grouping,
            tol,
        } => {
            let opts = CompileOptions {
                margin,
                grouping: match grouping {
                    Grouping::PerClause => GroupMode::PerClause,
                    Grouping::Single => GroupMode::Single,
                },
                ..CompileOptions::default()
            };
            let t = compile(&read(&constraint)?, &opts)?;
            writeln!(out, "{} clauses, {} literals, {} cost dimensions", t.clauses.len(), t.atom_count(), t.n_groups)?;
            writeln!(out, "{}", t)?;
            if !states.is_empty() {
                let bindings: BTreeMap<String, Vec<f64>> =
                    states.iter().map(|s| parse_state(s)).collect::<Result<_, _>>()?;
                let g = ground(&t, &bindings)?;
                let all: Vec<usize> = (0..t.clauses.len()).collect();
                let cf = closed_form_cost(&CostMatrix::from_grounding(&t, &g, &all)?)?;
                let sat = t.clause_satisfaction(&g.values, tol, TolMode::All)?;
                writeln!(out, "closed_form_cost {}", format_g9(cf.value))?;
                writeln!(out, "satisfied {}", sat.iter().all(|&s| s))?;
                for (i, s) in sat.iter().enumerate() {
                    writeln!(out, "  clause {} {}", i, if *s { "sat" } else { "unsat" })?;
                }
            }
        }
        Command::GenData {
            task,
            count,
            vertices,
            seed,
            out: path,
        } => {
            let mut text = String::new();
            match task {
                DataTask::Shortcut => {
                    let (d, _) = gen_shortcut_task(count, seed)?;
                    for (split, pts) in [("train", &d.train), ("test", &d.test)] {
                        for p in pts {
                            let mut v = serde_json::to_value(p)?;
                            v["split"] = split.into();
                            text.push_str(&serde_json::to_string(&v)?);
                            text.push('\n');
                        }
                    }
                }
                DataTask::ShortestPath => {
                    for g in gen_graphs(vertices, count, seed)? {
                        text.push_str(&serde_json::to_string(&g)?);
                        text.push('\n');
                    }
                }
            }
            std::fs::write(&path, text)?;
            writeln!(out, "wrote {}", path.display())?;
        }
        Command::Train { config, out: dir } => {
            let cfg: ExperimentConfig =
                serde_json::from_str(&read(&config)?).map_err(|e| HarnessError::Config(e.to_string()))?;
            let art = run_to_dir(&cfg, &dir)?;
            writeln!(out, "run {}", art.run_id)?;
            out.write_all(std::fs::read_to_string(&art.metrics_csv)?.as_bytes())?;
        }
        Command::Eval { manifest } => {
            let art: RunArtifacts =
                serde_json::from_str(&read(&manifest)?).map_err(|e| HarnessError::Config(e.to_string()))?;
            let p = prepare(&art.config)?;
            let mut state = TrainState::new(&p.spec, p.test.n_groups().unwrap_or(0), &art.config.train)?;
            state.params = load_checkpoint(&art.checkpoint)?;
            let saved: SavedState = serde_json::from_str(&read(&art.train_state)?)?;
            state.delta = saved.delta;
            state.duals = saved.duals;
            state.t = saved.t;
            if state.params.spec.layer_widths != p.spec.layer_widths {
                return Err(HarnessError::Config("checkpoint does not match the config".into()));
            }
            let row = evaluate(&state, &p.test, art.config.train.epochs, &art.config.train)?;
            out.write_all(metrics_csv(&tag_names(&p.test), &[row]).as_bytes())?;
        }
        Command::GradCheck { points, seed } => {
            let reports = all_suites(points, seed)?;
            writeln!(out, "{:<12} {:>7} {:>12} {:>9}  result", "suite", "points", "max_rel_err", "tol")?;
            for r in &reports {
                writeln!(
                    out,
                    "{:<12} {:>7} {:>12.3e} {:>9.0e}  {}",
                    r.suite,
                    r.points,
                    r.max_rel_err,
                    r.tolerance,
                    if r.passed() { "PASS" } else { "FAIL" }
                )?;
            }
            if let Some(r) = reports.iter().find(|r| !r.passed()) {
                return Err(HarnessError::Numeric(format!(
                    "{} gradients off by {:.3e}",
                    r.suite, r.max_rel_err
                )));
            }
        }
        Command::BenchEncoders { example } => {
            let examples = match example {
                Example::DisjunctionEscape => vec![BenchExample::DisjunctionEscape],
                Example::ProductStationary => vec![BenchExample::ProductStationary],
                Example::All => vec![BenchExample::DisjunctionEscape, BenchExample::ProductStationary],
            };
            writeln!(out, "example,encoder,start,start_grad,final_v,final_cost,reached_at,max_displacement")?;
            for e in examples {
                for r in bench_encoders(e)? {
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        r.example,
                        r.encoder,
                        format_g9(r.start),
                        format_g9(r.start_grad),
                        format_g9(r.final_v),
                        format_g9(r.final_cost),
                        r.reached_at.map_or("never".to_string(), |s| s.to_string()),
                        format_g9(r.max_displacement)
                    )?;
                }
            }
        }
    }
    Ok(())
}

/// Parses `argv`, runs, and maps failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {}", e);
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> Result<String, HarnessError> {
        let cli = Cli::try_parse_from(std::iter::once("logicloss").chain(args.iter().copied()))
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut buf = Vec::new();
        run(cli, &mut buf)?;
        Ok(String::from_utf8(buf).unwrap())
    }

    #[test]
    fn compile_prints_cost() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.txt");
        std::fs::write(&f, "v.out[0] == 1 | v.out[0] == 2\n").unwrap();
        let text = run_args(&["compile", "--constraint", f.to_str().unwrap(), "--state", "v=2.5"]).unwrap();
        assert!(text.starts_with("4 clauses"), "{}", text);
        assert!(text.contains("closed_form_cost 0.5"), "{}", text);
        assert!(text.contains("satisfied false"));
    }

    #[test]
    fn bench_aliases_parse() {
        let text = run_args(&["bench-encoders", "--example", "appendix-c-1"]).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("disjunction-escape,fuzzy_min_max,0,0,0,"));
    }

    #[test]
    fn exit_codes_for_bad_input() {
        assert_eq!(main_with_args(["logicloss", "nonsense"]), 2);
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("bad.txt");
        std::fs::write(&f, "x.out[0] <=").unwrap();
        assert_eq!(main_with_args(["logicloss", "compile", "--constraint", f.to_str().unwrap()]), 2);
        let missing = dir.path().join("none.json");
        assert_eq!(main_with_args(["logicloss", "train", "--config", missing.to_str().unwrap()]), 2);
    }

    #[test]
    fn gen_data_writes_lines() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("g.jsonl");
        run_args(&["gen-data", "--task", "shortest-path", "--count", "5", "--vertices", "4", "--out", f.to_str().unwrap()])
            .unwrap();
        assert_eq!(std::fs::read_to_string(&f).unwrap().lines().count(), 5);
        let f = dir.path().join("s.jsonl");
        run_args(&["gen-data", "--task", "shortcut", "--count", "100", "--out", f.to_str().unwrap()]).unwrap();
        assert_eq!(std::fs::read_to_string(&f).unwrap().lines().count(), 125);
    }
}
