use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use noisytree::evalkit::{chow_liu, score_trial};
use noisytree::experiment::{self, IdentifiabilityConfig, SweepConfig};
use noisytree::metric::{self, DistanceTable};
use noisytree::oracle::exact_pairwise_set;
use noisytree::recovery::find_tree;
use noisytree::sampler::{apply_noise, empirical_pairwise, sample_clean};
use noisytree::{io, AlgoParams, NoiseSpec, PairwisePmfSet, Tree, TreeModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{GenModelArgs, GridArgs, RecoverArgs, SampleArgs, SweepArgs};

#[derive(Debug)]
pub enum Failure {
    /// Bad config, arguments or input files.
    Config(String),
    /// The algorithm ran and gave up.
    Recovery(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Recovery(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) | Failure::Recovery(m) => f.write_str(m),
        }
    }
}

impl From<noisytree::Error> for Failure {
    fn from(e: noisytree::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn load_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    toml::from_str(&read_text(path)?)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<TreeModel> {
    Ok(io::model_from_json(&read_text(path)?)?)
}

fn load_noise(path: Option<&Path>, n: usize) -> Result<NoiseSpec> {
    match path {
        Some(p) => serde_json::from_str(&read_text(p)?)
            .map_err(|e| Failure::Config(format!("{}: {e}", p.display()))),
        None => Ok(NoiseSpec::noiseless(n)),
    }
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

#[derive(Serialize)]
struct Stamp<'a, A: Serialize, C: Serialize> {
    command: &'a str,
    git_describe: String,
    args: &'a A,
    config: Option<&'a C>,
}

/// Creates `out` and writes `run.toml` with the resolved inputs.
fn stamp<A: Serialize, C: Serialize>(
    out: &Path,
    command: &str,
    args: &A,
    config: Option<&C>,
) -> Result<()> {
    fs::create_dir_all(out)?;
    let s = Stamp {
        command,
        git_describe: git_describe(),
        args,
        config,
    };
    let text = toml::to_string(&s).map_err(|e| Failure::Config(e.to_string()))?;
    fs::write(out.join("run.toml"), text)?;
    Ok(())
}

fn create(path: PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load_sweep_config(path: &Path, seed: Option<u64>, exact_pmf: bool) -> Result<SweepConfig> {
    let mut cfg: SweepConfig = load_toml(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.exact_pmf |= exact_pmf;
    // Model files are resolved against the config's directory.
    if let Some(f) = &cfg.model.file {
        let p = Path::new(f);
        if p.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.model.file = Some(base.join(p).to_string_lossy().into_owned());
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn file_model(cfg: &SweepConfig) -> Result<Option<TreeModel>> {
    match (&cfg.model.family, &cfg.model.file) {
        (experiment::Family::File, Some(f)) => Ok(Some(load_model(Path::new(f))?)),
        _ => Ok(None),
    }
}

pub fn gen_model(a: &GenModelArgs) -> Result<()> {
    let cfg = load_sweep_config(&a.config, a.seed, false)?;
    let fm = file_model(&cfg)?;
    let setting = &cfg.settings()?[0];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let truth = experiment::draw_truth(&cfg, setting, fm.as_ref(), &mut rng)?;
    stamp(&a.out, "gen-model", a, Some(&cfg))?;
    fs::write(a.out.join("model.json"), io::model_to_json(&truth.model)?)?;
    fs::write(
        a.out.join("noise.json"),
        serde_json::to_string_pretty(&truth.noise).map_err(|e| Failure::Config(e.to_string()))?,
    )?;
    fs::write(a.out.join("edges.txt"), io::edge_list(truth.model.tree()))?;
    println!(
        "setting {}: n={} k={}",
        setting.id,
        truth.model.n(),
        truth.model.k()
    );
    Ok(())
}

pub fn sample(a: &SampleArgs) -> Result<()> {
    if a.samples == 0 {
        return Err(Failure::Config("--samples must be positive".into()));
    }
    let model = load_model(&a.model)?;
    let noise = load_noise(a.noise.as_deref(), model.n())?;
    let clean = sample_clean(&model, a.samples, experiment::mix_seed(&[a.seed, 1]))?;
    let noisy = apply_noise(&clean, &noise, experiment::mix_seed(&[a.seed, 2]))?;
    stamp::<_, ()>(&a.out, "sample", a, None)?;
    let mut w = create(a.out.join("samples.bin"))?;
    io::write_samples_binary(&noisy, &mut w)?;
    w.flush()?;
    if a.csv {
        let mut w = create(a.out.join("samples.csv"))?;
        io::write_samples_csv(&noisy, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn min_edge_distance(model: &TreeModel) -> Result<f64> {
    let dist = DistanceTable::from_pmfs(&exact_pairwise_set(model, None)?);
    Ok(model
        .tree()
        .edges()
        .iter()
        .map(|&(x, y)| dist.d(x, y))
        .fold(f64::INFINITY, f64::min))
}

/// Flags first, then model-derived values, then estimates from the data.
fn resolve_params(
    a: &RecoverArgs,
    pmfs: &PairwisePmfSet,
    model: Option<&TreeModel>,
    q_max: f64,
) -> Result<AlgoParams> {
    let k = pmfs.k();
    let p_min = a.p_min.unwrap_or(1.0 / k as f64);
    let dist = DistanceTable::from_pmfs(pmfs);
    let eta = metric::eta_max(k, q_max, p_min).unwrap_or(0.0);
    let est = metric::estimate_bounds(&dist, eta, q_max, &pmfs.marginals());
    let d_min = match (a.d_min, model) {
        (Some(d), _) => d,
        (None, Some(m)) => min_edge_distance(m)?,
        (None, None) => est.d_min_lower.ok_or_else(|| {
            Failure::Config("cannot estimate d_min from the data; pass --d-min".into())
        })?,
    };
    let d_max = a
        .d_max
        .unwrap_or_else(|| est.d_max_upper.max(d_min * (1.0 + 1e-9)));
    let mut p = AlgoParams::new(d_min, d_max, q_max, p_min);
    p.t0 = a.t0;
    p.threshold_scale = a.threshold_scale.unwrap_or(1.0);
    p.seed = a.seed;
    p.validate(k)?;
    Ok(p)
}

pub fn recover(a: &RecoverArgs, baseline: bool) -> Result<()> {
    let model = a.model.as_deref().map(load_model).transpose()?;
    let n = match (&model, &a.samples_file) {
        (Some(m), _) => m.n(),
        (None, Some(_)) => 0,
        (None, None) => return Err(Failure::Config("need --model or --samples".into())),
    };
    let noise = if a.noise.is_some() || model.is_some() {
        Some(load_noise(a.noise.as_deref(), n)?)
    } else {
        None
    };
    let pmfs = if a.exact_pmf {
        let m = model
            .as_ref()
            .ok_or_else(|| Failure::Config("--exact-pmf needs --model".into()))?;
        exact_pairwise_set(m, noise.as_ref())?
    } else {
        let path = a
            .samples_file
            .as_deref()
            .ok_or_else(|| Failure::Config("need --samples or --exact-pmf".into()))?;
        let file =
            File::open(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let s = io::read_samples_binary(BufReader::new(file))?;
        if model
            .as_ref()
            .is_some_and(|m| m.n() != s.n() || m.k() != s.k())
        {
            return Err(Failure::Config(
                "sample file does not match the model's n and k".into(),
            ));
        }
        empirical_pairwise(&s)
    };
    let q_max = a.q_max.or(noise.as_ref().map(|q| q.q_max())).unwrap_or(0.0);
    let command = if baseline { "chowliu" } else { "recover" };
    stamp::<_, ()>(&a.out, command, a, None)?;

    let start = Instant::now();
    let tree: Tree = if baseline {
        chow_liu(&pmfs)
    } else {
        let params = resolve_params(a, &pmfs, model.as_ref(), q_max)?;
        let s = find_tree(&pmfs, &params).map_err(|e| Failure::Recovery(e.to_string()))?;
        fs::write(a.out.join("structure.json"), io::structure_to_json(&s)?)?;
        s.tree().map_err(|e| Failure::Recovery(e.to_string()))?
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    fs::write(a.out.join("edges.txt"), io::edge_list(&tree))?;

    let n_samples = pmfs.sample_count().unwrap_or(0);
    let algorithm = if baseline {
        experiment::CHOW_LIU
    } else {
        experiment::OURS
    };
    let mut row = format!("{algorithm},{},{},{n_samples}", pmfs.n(), pmfs.k());
    let header = match (&model, &noise) {
        (Some(m), Some(q)) => {
            let flags = experiment::truth_flags(m, q)?;
            let s = score_trial(m.tree(), &flags, &tree);
            row.push_str(&format!(",{},{},{}", s.exact, s.eq_class, s.in_t_sub));
            "algorithm,n,k,N,exact,eq_class,in_t_sub,wall_ms"
        }
        _ => "algorithm,n,k,N,wall_ms",
    };
    row.push_str(&format!(",{wall_ms:.3}"));
    fs::write(a.out.join("metrics.csv"), format!("{header}\n{row}\n"))?;
    println!("{header}\n{row}");
    Ok(())
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let cfg = load_sweep_config(&a.config, a.seed, a.exact_pmf)?;
    let fm = file_model(&cfg)?;
    stamp(&a.out, "sweep", a, Some(&cfg))?;
    let records = experiment::run_sweep(&cfg, fm.as_ref())?;
    let rows = experiment::aggregate(&records);
    let mut w = create(a.out.join("sweep.csv"))?;
    experiment::write_sweep_csv(&rows, &mut w)?;
    w.flush()?;
    let mut w = create(a.out.join("trials.csv"))?;
    experiment::write_trials_csv(&records, &mut w)?;
    w.flush()?;
    for r in &rows {
        println!(
            "{:<32} N={:<8} {:<9} exact={:.2} eq_class={:.2} failures={}",
            r.setting, r.n_samples, r.algorithm, r.fraction_exact, r.fraction_eq_class, r.failures
        );
    }
    Ok(())
}

pub fn identifiability(a: &GridArgs) -> Result<()> {
    let cfg: IdentifiabilityConfig = load_toml(&a.config)?;
    stamp(&a.out, "identifiability", a, Some(&cfg))?;
    let rows = experiment::run_identifiability(&cfg)?;
    let mut w = create(a.out.join("identifiability.csv"))?;
    experiment::write_identifiability_csv(&rows, &mut w)?;
    w.flush()?;
    let feasible = rows.iter().filter(|r| r.feasible).count();
    println!("{} rows, {feasible} feasible", rows.len());
    Ok(())
}
