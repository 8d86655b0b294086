use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgg_core::dataio::{export_dot, load_dataset, save_dataset, DataError, GrammarConfig};
use sgg_core::eval::{
    auroc, corrupt_dataset, count_kl, dataset_stats, mmd, nearest_training_graph, occurrence_l1, render_stats,
    KernelConfig, KernelKind, MmdEstimator, WalkMode,
};
use sgg_core::model::{read_checkpoint, Checkpoint, ModelConfig, ModelError, SampleOptions, SceneGraphModel};
use sgg_core::train::{LogRecord, TrainConfig, TrainError, Trainer};
use sgg_core::{order_nodes, OrderingScheme, SceneGraph, Vocabulary};

use super::{Command, KernelFlags, Ordering, Profile, SampleFlags, Seed};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::ZeroPriorProbability(_) | ModelError::Autodiff(_) => CliError::Numeric(e.to_string()),
            ModelError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::NonFiniteGradient { .. } | TrainError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            TrainError::Config(_) => CliError::Usage(e.to_string()),
            TrainError::EmptyDataset | TrainError::Io(_) => CliError::Data(e.to_string()),
        }
    }
}

type Result<T = ()> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn seed_of(s: &Seed) -> u64 {
    s.seed.unwrap_or_else(|| {
        let seed = rand::random::<u64>();
        eprintln!("seed: {seed}");
        seed
    })
}

fn load(path: &Path) -> Result<(Vocabulary, Vec<SceneGraph>)> {
    Ok(load_dataset(path)?)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn grammar(path: Option<&Path>) -> Result<GrammarConfig> {
    Ok(match path {
        Some(p) => GrammarConfig::load(p)?,
        None => GrammarConfig::default_grammar(),
    })
}

fn same_vocab(a: &Vocabulary, b: &Vocabulary, what: &Path) -> Result {
    if a != b {
        return Err(CliError::Data(format!(
            "{}: vocabulary differs from the checkpoint's",
            what.display()
        )));
    }
    Ok(())
}

fn sample_options(s: &SampleFlags) -> Result<SampleOptions> {
    if !(s.temperature >= 0.0 && s.temperature.is_finite()) {
        return Err(CliError::Usage(format!("--temperature must be >= 0, got {}", s.temperature)));
    }
    if s.max_nodes == Some(0) {
        return Err(CliError::Usage("--max-nodes must be at least 1".into()));
    }
    Ok(SampleOptions {
        temperature: s.temperature,
        max_nodes: s.max_nodes,
    })
}

fn kernel_configs(k: &KernelFlags) -> Result<[KernelConfig; 2]> {
    if k.walk_length == 0 || k.walk_cap == 0 {
        return Err(CliError::Usage("--walk-length and --walk-cap must be positive".into()));
    }
    let walk = KernelConfig {
        kind: KernelKind::RandomWalk,
        walk_length: k.walk_length,
        walk_cap: k.walk_cap,
        mode: if k.cumulative { WalkMode::Cumulative } else { WalkMode::Single },
    };
    Ok([walk, KernelConfig { kind: KernelKind::ObjectSet, ..walk }])
}

fn check_threads(t: usize) -> Result {
    if t == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    Ok(())
}

pub fn run(cmd: Command) -> Result {
    match cmd {
        Command::SynthData(a) => {
            if a.print_grammar {
                print!("{}", sgg_core::dataio::DEFAULT_GRAMMAR);
                return Ok(());
            }
            // both required by the parser unless --print-grammar is given
            let (Some(count), Some(out)) = (a.count, a.out) else {
                return Err(CliError::Usage("--count and --out are required".into()));
            };
            let cfg = grammar(a.grammar.as_deref())?;
            let seed = a.seed.seed.unwrap_or(cfg.seed);
            let vocab = cfg.vocabulary()?;
            let graphs = sgg_core::dataio::generate_synthetic(&cfg, count, seed)?;
            save_dataset(&out, &vocab, &graphs)?;
            eprintln!("wrote {} graphs to {} (seed {seed})", graphs.len(), out.display());
        }
        Command::Train(a) => train(a)?,
        Command::Sample(a) => {
            let opts = sample_options(&a.sampling)?;
            let seed = seed_of(&a.seed);
            let ck = load_checkpoint(&a.checkpoint)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut graphs = Vec::with_capacity(a.count);
            let mut truncated = 0;
            for _ in 0..a.count {
                let s = ck.model.sample_graph(&mut rng, &opts)?;
                truncated += s.truncated as usize;
                graphs.push(s.graph);
            }
            save_dataset(&a.out, &ck.meta.vocabulary, &graphs)?;
            if let Some(dir) = &a.dot_dir {
                write_dots(dir, &graphs, &ck.meta.vocabulary)?;
            }
            eprintln!("wrote {} samples ({truncated} truncated) to {}", graphs.len(), a.out.display());
        }
        Command::Nll(a) => {
            let ck = load_checkpoint(&a.checkpoint)?;
            let (vocab, graphs) = load(&a.data)?;
            same_vocab(&ck.meta.vocabulary, &vocab, &a.data)?;
            let scores = score(&ck.model, &ck.meta.ordering, &graphs)?;
            let mut out: Box<dyn Write> = match &a.out {
                Some(p) => Box::new(create(p)?),
                None => Box::new(std::io::stdout().lock()),
            };
            let w = |r: std::io::Result<()>| r.map_err(|e| CliError::Data(e.to_string()));
            w(writeln!(out, "index\tnodes\tedges\tnll"))?;
            for (i, (g, s)) in graphs.iter().zip(&scores).enumerate() {
                w(writeln!(out, "{i}\t{}\t{}\t{s:.6}", g.num_nodes(), g.num_edges()))?;
            }
            w(out.flush())?;
        }
        Command::Corrupt(a) => {
            if !(0.0..=1.0).contains(&a.fraction) {
                return Err(CliError::Usage(format!("--fraction must lie in [0, 1], got {}", a.fraction)));
            }
            let seed = seed_of(&a.seed);
            let (vocab, graphs) = load(&a.data)?;
            let out = corrupt_dataset(&graphs, a.fraction, vocab.num_objects(), vocab.num_relations(), seed);
            save_dataset(&a.out, &vocab, &out)?;
        }
        Command::Anomaly(a) => {
            let ck = load_checkpoint(&a.checkpoint)?;
            let (v1, clean) = load(&a.clean)?;
            let (v2, bad) = load(&a.corrupt)?;
            same_vocab(&ck.meta.vocabulary, &v1, &a.clean)?;
            same_vocab(&ck.meta.vocabulary, &v2, &a.corrupt)?;
            let neg = score(&ck.model, &ck.meta.ordering, &clean)?;
            let pos = score(&ck.model, &ck.meta.ordering, &bad)?;
            let value = auroc(&pos, &neg)
                .ok_or_else(|| CliError::Numeric("AUROC undefined (empty set or NaN score)".into()))?;
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let report = serde_json::json!({
                "auroc": value,
                "clean": clean.len(),
                "corrupt": bad.len(),
                "mean_nll_clean": mean(&neg),
                "mean_nll_corrupt": mean(&pos),
            });
            println!("{report}");
        }
        Command::Mmd(a) => {
            check_threads(a.threads.threads)?;
            let kernels = kernel_configs(&a.kernel)?;
            let (va, ga) = load(&a.a)?;
            let (vb, gb) = load(&a.b)?;
            same_vocab(&va, &vb, &a.b)?;
            if ga.len() < 2 || gb.len() < 2 {
                return Err(CliError::Data("MMD needs at least two graphs per set".into()));
            }
            let estimator = if a.unbiased { MmdEstimator::Unbiased } else { MmdEstimator::Biased };
            let report = mmd(&ga, &gb, &kernels, estimator, a.threads.threads);
            println!("kernel\tmmd2\tmean_aa\tmean_bb\tmean_ab\twalk_cap_hits");
            for e in &report.entries {
                println!(
                    "{}\t{:.6e}\t{:.6}\t{:.6}\t{:.6}\t{}",
                    e.kernel, e.mmd2, e.within_a.mean, e.within_b.mean, e.across.mean, e.walk_cap_hits
                );
            }
            if let Some(p) = &a.out {
                let mut f = create(p)?;
                serde_json::to_writer(&mut f, &report).map_err(|e| CliError::Data(e.to_string()))?;
                writeln!(f).and_then(|_| f.flush()).map_err(io_err(p))?;
            }
        }
        Command::Stats(a) => {
            let (vocab, graphs) = load(&a.data)?;
            if graphs.is_empty() {
                return Err(CliError::Data(format!("{}: no graphs", a.data.display())));
            }
            let (c, r) = (vocab.num_objects(), vocab.num_relations());
            let s = dataset_stats(&graphs, c, r);
            print!("{}", render_stats(&s, &vocab));
            if let Some(path) = &a.reference {
                let (v2, reference) = load(path)?;
                same_vocab(&vocab, &v2, path)?;
                if reference.is_empty() {
                    return Err(CliError::Data(format!("{}: no graphs", path.display())));
                }
                println!("# occurrence_l1\t{:.6}", occurrence_l1(&s, &dataset_stats(&reference, c, r)));
                let kl = count_kl(&graphs, &reference, c);
                println!("# count_kl");
                for (cat, k) in &kl.per_category {
                    println!("{}\t{k:.6}", vocab.object_name(*cat));
                }
                println!("# count_kl_mean\t{:.6}", kl.mean);
            }
        }
        Command::Complete(a) => {
            let opts = sample_options(&a.sampling)?;
            let seed = seed_of(&a.seed);
            let ck = load_checkpoint(&a.checkpoint)?;
            let (vocab, partials) = load(&a.partial)?;
            same_vocab(&ck.meta.vocabulary, &vocab, &a.partial)?;
            let partial = partials
                .first()
                .ok_or_else(|| CliError::Data(format!("{}: no graphs", a.partial.display())))?;
            let perm: Vec<usize> = (0..partial.num_nodes()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::with_capacity(a.count);
            for _ in 0..a.count {
                out.push(ck.model.complete_graph(partial, &perm, &mut rng, &opts)?.graph);
            }
            save_dataset(&a.out, &vocab, &out)?;
        }
        Command::Nearest(a) => {
            let [walk, set] = kernel_configs(&a.kernel)?;
            let cfg = if a.object_set { set } else { walk };
            let (v1, queries) = load(&a.graph)?;
            let (v2, train) = load(&a.train)?;
            same_vocab(&v1, &v2, &a.train)?;
            if train.is_empty() {
                return Err(CliError::Data(format!("{}: no graphs", a.train.display())));
            }
            println!("query\tnearest\tsimilarity");
            for (i, q) in queries.iter().enumerate() {
                let (k, s) = nearest_training_graph(q, &train, &cfg).expect("nonempty training set");
                println!("{i}\t{k}\t{s:.6}");
            }
        }
        Command::ExportDot(a) => {
            let (vocab, graphs) = load(&a.data)?;
            write_dots(&a.out_dir, &graphs, &vocab)?;
        }
    }
    Ok(())
}

fn score(model: &SceneGraphModel<f32>, scheme: &OrderingScheme, graphs: &[SceneGraph]) -> Result<Vec<f64>> {
    let seqs = graphs
        .iter()
        .map(|g| {
            let perm = order_nodes(g, scheme).map_err(ModelError::from)?;
            Ok(sgg_core::encode_sequence(g, &perm).map_err(ModelError::from)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(model.cast::<f64>().score_sequences(&seqs)?)
}

fn write_dots(dir: &Path, graphs: &[SceneGraph], vocab: &Vocabulary) -> Result {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, g) in graphs.iter().enumerate() {
        let path = dir.join(format!("graph_{i:05}.dot"));
        std::fs::write(&path, export_dot(g, vocab)).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Forwards log lines to an optional file and prints a line per epoch.
struct Progress {
    file: Option<BufWriter<File>>,
    pending: Vec<u8>,
    losses: Vec<f64>,
}

impl Write for Progress {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        if let Some(f) = self.file.as_mut() {
            f.write_all(buf)?;
        }
        self.pending.extend_from_slice(buf);
        while let Some(end) = self.pending.iter().position(|&b| b == b'\n') {
            let line: Vec<u8> = self.pending.drain(..=end).collect();
            match serde_json::from_slice::<LogRecord>(&line) {
                Ok(LogRecord::Step { loss, .. }) => self.losses.push(loss),
                Ok(LogRecord::Epoch { epoch, step, val_nll }) => {
                    let mean = self.losses.iter().sum::<f64>() / self.losses.len().max(1) as f64;
                    self.losses.clear();
                    match val_nll {
                        Some(v) => eprintln!("epoch {epoch} (step {step}): loss {mean:.4}, validation NLL {v:.4}"),
                        None => eprintln!("epoch {epoch} (step {step}): loss {mean:.4}"),
                    }
                }
                _ => {}
            }
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        match self.file.as_mut() {
            Some(f) => f.flush(),
            None => Ok(()),
        }
    }
}

fn train(a: super::Train) -> Result {
    check_threads(a.threads.threads)?;
    let (vocab, data) = load(&a.data)?;
    let validation = match &a.validation {
        Some(p) => {
            let (v, g) = load(p)?;
            same_vocab(&vocab, &v, p)?;
            g
        }
        None => Vec::new(),
    };
    let mut trainer = match &a.resume {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            same_vocab(&ck.meta.vocabulary, &vocab, &a.data)?;
            let mut t = Trainer::resume(ck, data)?;
            t.cfg.threads = a.threads.threads;
            if let Some(e) = a.epochs {
                t.cfg.epochs = e;
            }
            t
        }
        None => {
            let seed = seed_of(&a.seed);
            let (mut model_cfg, mut cfg) = match a.profile {
                Profile::Full => (ModelConfig::default(), TrainConfig::full(seed)),
                Profile::Desk => (ModelConfig::desk(), TrainConfig::desk(seed)),
            };
            if let Some(m) = a.max_nodes {
                model_cfg.max_nodes = m;
            }
            if let Some(e) = a.epochs {
                cfg.epochs = e;
            }
            if let Some(b) = a.batches_per_epoch {
                cfg.batches_per_epoch = b;
            }
            if let Some(b) = a.batch_size {
                cfg.batch_size = b;
            }
            if let Some(lr) = a.lr {
                cfg.lr0 = lr;
            }
            cfg.threads = a.threads.threads;
            cfg.ordering = match a.ordering {
                Ordering::Random => OrderingScheme::random(seed),
                Ordering::Bfs => OrderingScheme::bfs(seed),
                Ordering::Hierarchical => {
                    let tiers = grammar(a.grammar.as_deref())?.tier_map(&vocab);
                    tiers.check_complete(&vocab).map_err(|e| CliError::Usage(e.to_string()))?;
                    OrderingScheme::hierarchical(tiers, seed)
                }
            };
            let model = SceneGraphModel::new(model_cfg, &vocab, seed)?;
            eprintln!("model: {} parameters", model.num_parameters());
            Trainer::new(model, vocab, data, cfg)?
        }
    };
    let file = match &a.log {
        Some(p) => Some(create(p)?),
        None => None,
    };
    trainer = trainer
        .with_validation(validation)
        .with_checkpoints(PathBuf::from(&a.out))
        .with_log_sink(Box::new(Progress {
            file,
            pending: Vec::new(),
            losses: Vec::new(),
        }));
    eprintln!(
        "training steps {}..{} (batch {})",
        trainer.step,
        trainer.cfg.total_steps(),
        trainer.cfg.batch_size
    );
    trainer.run()?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}
