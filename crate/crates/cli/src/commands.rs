//! The four subcommands. Each writes its files under `cfg.out` and returns
//! the text printed to stdout.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use robsub::data::save_basis_csv;
use robsub::glad::dp_pca_noise_scale;
use robsub::stability::{self, AlignmentSearch};
use robsub::trajectory::fmt_f64;

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::experiment::{self, NoiseSetting};
use crate::summary::Summary;

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> CliResult<()> {
    let ctx = || format!("writing {}", path.display());
    let mut out = BufWriter::new(File::create(path).map_err(|e| CliError::io(ctx(), e))?);
    f(&mut out).and_then(|_| out.flush()).map_err(|e| CliError::io(ctx(), e))
}

fn kv_text(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

fn kv_csv(pairs: &[(String, String)]) -> String {
    let mut s = String::from("key,value\n");
    for (k, v) in pairs {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}

/// Audit lines for a private run, or `None` when it is nonprivate.
pub fn noise_provenance(noise: &NoiseSetting) -> Option<String> {
    let plan = noise.plan.as_ref()?;
    let mut s = plan.to_string();
    if let Some((eps, delta)) = noise.budget {
        let _ = writeln!(s, "dp_pca_sigma={}", fmt_f64(dp_pca_noise_scale(plan.budget.n, eps, delta)));
    }
    Some(s)
}

/// Writes `points.csv` and `truth.csv` for the dataset of run repetition 0.
pub fn cmd_generate(cfg: &ExperimentConfig) -> CliResult<String> {
    let DataSource::Generate { dim, n, inlier_ratio } = cfg.source else {
        return Err(CliError::usage("generate draws a haystack; drop `data`"));
    };
    let seed = experiment::rep_seed(cfg.seed, 0, 0);
    let data = experiment::generated(cfg, dim, n, inlier_ratio, seed)?;
    ensure_dir(&cfg.out)?;
    let points = cfg.out.join("points.csv");
    let truth = cfg.out.join("truth.csv");
    data.save_csv(&points)
        .map_err(|e| CliError::runtime(format!("writing {}", points.display()), e))?;
    let basis = data.truth().expect("generated data carries its truth");
    save_basis_csv(basis, &truth).map_err(|e| CliError::runtime(format!("writing {}", truth.display()), e))?;
    Ok(format!(
        "points={}\ntruth={}\nn={}\nn_in={}\ndim={dim}\nrank={}\n",
        points.display(),
        truth.display(),
        data.len(),
        data.inlier_count().unwrap_or(0),
        cfg.rank
    ))
}

pub fn cmd_run(cfg: &ExperimentConfig) -> CliResult<String> {
    if cfg.dry_run {
        let file = experiment::load_file_source(cfg)?;
        let (n, _) = experiment::run_shape(cfg, file.as_ref());
        let t = experiment::run_iterations(cfg, n);
        let reps = cfg.run_reps();
        let mut s = String::new();
        for a in &cfg.algorithms {
            let _ = writeln!(s, "algorithm={a} reps={reps} iterations={t} work={}", reps * t);
        }
        let _ = writeln!(s, "total_work={}", reps * t * cfg.algorithms.len());
        return Ok(s);
    }
    let runs = experiment::run_experiment(cfg)?;
    ensure_dir(&cfg.out)?;
    let mut stdout = String::new();
    for run in &runs {
        let name = run.algorithm.name();
        for w in &run.reps[0].noise.warnings {
            log::warn!("{w}");
        }
        for (k, rep) in run.reps.iter().enumerate() {
            write_file(&cfg.out.join(format!("{name}_rep{k:03}.csv")), |w| rep.trajectory.write_csv(w))?;
        }
        let trajs: Vec<_> = run.reps.iter().map(|r| &r.trajectory).collect();
        let summary = Summary::from_trajectories(&trajs);
        write_file(&cfg.out.join(format!("{name}_summary.csv")), |w| summary.write_csv(w))?;
        let mut kv = vec![
            ("algorithm".to_string(), name.to_string()),
            ("n".to_string(), run.n.to_string()),
            ("dim".to_string(), run.dim.to_string()),
            ("iterations".to_string(), run.reps[0].iterations.to_string()),
        ];
        if let Some(b) = run.reps[0].noise.batch_size {
            kv.push(("batch_size".to_string(), b.to_string()));
        }
        kv.extend(summary.key_values());
        let text = kv_text(&kv);
        write_file(&cfg.out.join(format!("{name}_summary.txt")), |w| w.write_all(text.as_bytes()))?;
        stdout.push_str(&text);
        if let Some(prov) = noise_provenance(&run.reps[0].noise) {
            write_file(&cfg.out.join(format!("{name}_noise_plan.txt")), |w| w.write_all(prov.as_bytes()))?;
            stdout.push_str(&prov);
        }
        stdout.push('\n');
    }
    Ok(stdout)
}

/// Stability report of the run's first dataset.
pub fn stats_report(cfg: &ExperimentConfig) -> CliResult<Vec<(String, String)>> {
    let data = match (experiment::load_file_source(cfg)?, &cfg.source) {
        (Some(d), _) => d,
        (None, DataSource::Generate { dim, n, inlier_ratio }) => {
            experiment::generated(cfg, *dim, *n, *inlier_ratio, experiment::rep_seed(cfg.seed, 0, 0))?
        }
        (None, DataSource::File { .. }) => unreachable!("file sources are loaded"),
    };
    let run = |what: &str, e| CliError::runtime(what.to_string(), e);
    let search = AlignmentSearch {
        seed: cfg.seed,
        ..AlignmentSearch::default()
    };
    let glad = stability::stability_glad(&data, cfg.rank, cfg.gamma, &search).map_err(|e| run("stability", e))?;
    let pca = stability::stability_pca(&data, cfg.rank, cfg.gamma).map_err(|e| run("PCA stability", e))?;
    let reap = stability::reaper_stats(&data).map_err(|e| run("REAPER stability", e))?;
    let mut kv = vec![("n".to_string(), data.len().to_string()), ("dim".to_string(), data.dim().to_string())];
    kv.extend(glad.key_values());
    kv.push(("stability_pca".into(), fmt_f64(pca)));
    kv.extend(reap.key_values());
    if let Some(b) = cfg.stat_batch {
        let (mean, se) = stability::stability_expected(&data, cfg.rank, cfg.gamma, b, cfg.stat_samples, cfg.seed)
            .map_err(|e| run("expected stability", e))?;
        kv.push(("stat_batch".into(), b.to_string()));
        kv.push(("stability_expected".into(), fmt_f64(mean)));
        kv.push(("stability_expected_se".into(), fmt_f64(se)));
    }
    Ok(kv)
}

pub fn cmd_stats(cfg: &ExperimentConfig) -> CliResult<String> {
    let kv = stats_report(cfg)?;
    ensure_dir(&cfg.out)?;
    let text = kv_text(&kv);
    write_file(&cfg.out.join("stats.txt"), |w| w.write_all(text.as_bytes()))?;
    write_file(&cfg.out.join("stats.csv"), |w| w.write_all(kv_csv(&kv).as_bytes()))?;
    Ok(text)
}

pub fn cmd_phase(cfg: &ExperimentConfig) -> CliResult<String> {
    if cfg.dry_run {
        let work = experiment::phase_work(cfg)?;
        let cells = cfg.n_grid.len() * cfg.d_grid.len();
        return Ok(format!(
            "algorithms={}\ncells={cells}\nreps={}\ntotal_work={work}\n",
            cfg.algorithms.len(),
            cfg.phase_reps()
        ));
    }
    let grids = experiment::run_phase(cfg)?;
    ensure_dir(&cfg.out)?;
    let mut stdout = String::new();
    for g in &grids {
        let name = g.algorithm.name();
        let path = cfg.out.join(format!("phase_{name}.csv"));
        write_file(&path, |w| {
            let header: Vec<String> = g.d_grid.iter().map(|d| d.to_string()).collect();
            writeln!(w, "n\\d,{}", header.join(","))?;
            for (i, n) in g.n_grid.iter().enumerate() {
                let row: Vec<String> = g.values[i].iter().map(|&v| fmt_f64(v)).collect();
                writeln!(w, "{n},{}", row.join(","))?;
            }
            Ok(())
        })?;
        let _ = writeln!(stdout, "{name}={}", path.display());
        for (i, n) in g.n_grid.iter().enumerate() {
            for (j, d) in g.d_grid.iter().enumerate() {
                for w in g.noise[i][j].iter().flat_map(|s| &s.warnings) {
                    log::warn!("N={n} D={d}: {w}");
                }
            }
        }
        if cfg.privacy.is_some() {
            let plans = cfg.out.join(format!("phase_{name}_noise.csv"));
            write_file(&plans, |w| {
                writeln!(w, "n,d,mechanism,epsilon,delta,iterations,batch_size,c,c2,sigma2")?;
                for (i, n) in g.n_grid.iter().enumerate() {
                    for (j, d) in g.d_grid.iter().enumerate() {
                        let Some(plan) = g.noise[i][j].as_ref().and_then(|s| s.plan.as_ref()) else {
                            continue;
                        };
                        let b = &plan.budget;
                        writeln!(
                            w,
                            "{n},{d},{},{},{},{},{},{},{},{}",
                            plan.mechanism.name(),
                            fmt_f64(b.epsilon),
                            fmt_f64(b.delta),
                            b.iterations,
                            b.batch_size.map(|x| x.to_string()).unwrap_or_default(),
                            fmt_f64(b.c),
                            fmt_f64(b.c2),
                            fmt_f64(plan.sigma2)
                        )?;
                    }
                }
                Ok(())
            })?;
            let _ = writeln!(stdout, "{name}_noise={}", plans.display());
        }
    }
    Ok(stdout)
}
