//! The `extract`, `df`, `evaluate` and `train` subcommands.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use shortsim::corpus::{self, Corpus, PlainText};
use shortsim::embeddings::{compute_document_frequencies, load_embeddings};
use shortsim::eval::{self, paired_histograms, score_couples};
use shortsim::learn::{train_with_trace, FactorsFile};
use shortsim::{derive_seed, Couple, DfTable, DistanceKind, EmbeddingTable, Method, TrainConfig};

use crate::{DfArgs, EvaluateArgs, ExtractArgs, TrainArgs};

const EXTRACT_STREAM: u64 = 0;
const SPLIT_STREAM: u64 = 1;

pub(crate) fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} file not found: {}", path.display());
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(file))
}

pub(crate) fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub(crate) fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn read_corpus(path: &Path) -> Result<Corpus> {
    Corpus::read(open(path)?, &PlainText)
        .with_context(|| format!("reading corpus {}", path.display()))
}

fn read_embeddings(path: &Path) -> Result<EmbeddingTable> {
    load_embeddings(path).with_context(|| format!("reading embeddings {}", path.display()))
}

fn read_df(path: &Path) -> Result<DfTable> {
    DfTable::read_tsv(open(path)?).with_context(|| format!("reading df table {}", path.display()))
}

fn read_couples(path: &Path) -> Result<Vec<Couple>> {
    corpus::read_couples(open(path)?).with_context(|| format!("reading couples {}", path.display()))
}

fn write_couples(dir: &Path, name: &str, couples: &[Couple]) -> Result<()> {
    let mut w = create(dir, name)?;
    corpus::write_couples(&mut w, couples)?;
    w.flush()?;
    Ok(())
}

fn parse_fractions(text: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("--split expects three comma-separated numbers, got {text:?}"))?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => bail!("--split expects three comma-separated numbers, got {text:?}"),
    }
}

pub fn extract(args: &ExtractArgs) -> Result<()> {
    require_file(&args.corpus, "corpus")?;
    require_file(&args.embeddings, "embeddings")?;
    let fractions = args.split.as_deref().map(parse_fractions).transpose()?;
    let emb = read_embeddings(&args.embeddings)?;
    let mut corpus = read_corpus(&args.corpus)?;
    corpus.retain_tokens(|t| emb.contains(t.as_str()));

    let n_c = args.n_words as usize;
    let extraction = corpus::extract_couples(
        &corpus,
        n_c,
        args.max_pairs,
        derive_seed(args.seed, EXTRACT_STREAM),
    )?;
    prepare_out(&args.out)?;
    write_couples(&args.out, "couples.tsv", &extraction.couples)?;
    println!("pairs\t{}", extraction.n_pairs);
    println!("nonpairs\t{}", extraction.n_nonpairs);

    if let Some(fractions) = fractions {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(args.seed, SPLIT_STREAM));
        let split = corpus::split_dataset(extraction.couples, fractions, &mut rng)?;
        write_couples(&args.out, "train.tsv", &split.train)?;
        write_couples(&args.out, "test.tsv", &split.test)?;
        write_couples(&args.out, "validation.tsv", &split.validation)?;
        println!("train\t{}", split.train.len());
        println!("test\t{}", split.test.len());
        println!("validation\t{}", split.validation.len());
    }
    Ok(())
}

pub fn df(args: &DfArgs) -> Result<()> {
    require_file(&args.corpus, "corpus")?;
    let corpus = read_corpus(&args.corpus)?;
    let table = compute_document_frequencies(corpus.paragraphs())?;
    prepare_out(&args.out)?;
    let mut w = create(&args.out, "df.tsv")?;
    table.write_tsv(&mut w)?;
    w.flush()?;
    println!("documents\t{}", table.doc_count());
    println!("words\t{}", table.len());
    Ok(())
}

fn split_list(text: &str) -> Vec<&str> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Requested (method, distance) combinations in command-line order;
/// tf-idf is paired with cosine only.
fn combinations(args: &EvaluateArgs) -> Result<Vec<(Method, DistanceKind)>> {
    let distances: Vec<DistanceKind> = split_list(&args.distance)
        .into_iter()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()?;
    let names = split_list(&args.method);
    if names.is_empty() || distances.is_empty() {
        bail!("at least one method and one distance are required");
    }
    let factors = match &args.factors {
        Some(path) if names.contains(&"mean_importance") => {
            require_file(path, "factors")?;
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            let file = FactorsFile::from_json(&text)
                .with_context(|| format!("reading factors {}", path.display()))?;
            Some(file.factors)
        }
        _ => None,
    };
    let mut out: Vec<(Method, DistanceKind)> = Vec::new();
    for name in names {
        let method = Method::from_name(name, args.top_fraction, factors.clone())
            .with_context(|| format!("method {name:?}"))?;
        let dists: &[DistanceKind] = match method {
            Method::TfIdf => &[DistanceKind::Cosine],
            Method::Aggregate(_) => &distances,
        };
        for &d in dists {
            if !out
                .iter()
                .any(|(m, k)| m.name() == method.name() && *k == d)
            {
                out.push((method.clone(), d));
            }
        }
    }
    Ok(out)
}

fn couple_sources(args: &EvaluateArgs) -> Result<(PathBuf, PathBuf)> {
    match (&args.select_on, &args.report_on, &args.couples) {
        (Some(s), Some(r), _) => Ok((s.clone(), r.clone())),
        (None, None, Some(c)) => Ok((c.clone(), c.clone())),
        _ => bail!("provide --couples, or both --select-on and --report-on"),
    }
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let (select_path, report_path) = couple_sources(args)?;
    require_file(&select_path, "couples")?;
    require_file(&report_path, "couples")?;
    require_file(&args.embeddings, "embeddings")?;
    require_file(&args.df, "df")?;
    if args.bins < 2 {
        bail!("--bins must be at least 2");
    }
    let combos = combinations(args)?;
    let emb = read_embeddings(&args.embeddings)?;
    let df = read_df(&args.df)?;
    let select = read_couples(&select_path)?;
    let report = if report_path == select_path {
        None
    } else {
        Some(read_couples(&report_path)?)
    };
    prepare_out(&args.out)?;

    for (method, dist) in combos {
        let label = format!("{}_{}", method.name(), dist.name());
        let scored_select = score_couples(&select, &method, dist, &emb, &df)
            .with_context(|| format!("scoring {label} on {}", select_path.display()))?;
        let scored_report = match &report {
            Some(couples) => score_couples(couples, &method, dist, &emb, &df)
                .with_context(|| format!("scoring {label} on {}", report_path.display()))?,
            None => scored_select.clone(),
        };
        let result = eval::evaluate(
            method.name(),
            dist.name(),
            &scored_select,
            &scored_report,
            args.bins,
        )
        .with_context(|| format!("evaluating {label}"))?;

        let mut w = create(&args.out, &format!("{label}.json"))?;
        serde_json::to_writer_pretty(&mut w, &result)?;
        writeln!(w)?;
        w.flush()?;

        let (pairs, nonpairs) = paired_histograms(&scored_report, args.bins)?;
        let mut w = create(&args.out, &format!("{label}.hist.csv"))?;
        writeln!(w, "bin_left,bin_right,count_pairs,count_nonpairs")?;
        for (i, edge) in pairs.bin_edges.windows(2).enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                edge[0], edge[1], pairs.counts[i], nonpairs.counts[i]
            )?;
        }
        w.flush()?;

        println!(
            "{}\t{}\tsplit_error={:.6}\tjsd={:.6}",
            result.method, result.distance, result.split_error, result.js_divergence
        );
    }
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<()> {
    require_file(&args.couples, "couples")?;
    require_file(&args.embeddings, "embeddings")?;
    require_file(&args.df, "df")?;
    let config = TrainConfig {
        batch_size: args.batch_size,
        learning_rate: args.lr,
        momentum: args.momentum,
        lambda: args.lambda,
        init_value: args.init,
        epochs: args.epochs,
        seed: args.seed,
    };
    config.validate()?;
    let couples =
        corpus::read_uniform_couples(open(&args.couples)?, args.n_words.map(|n| n as usize))
            .with_context(|| format!("reading couples {}", args.couples.display()))?;
    if couples.is_empty() {
        bail!("no couples in {}", args.couples.display());
    }
    let emb = read_embeddings(&args.embeddings)?;
    let df = read_df(&args.df)?;
    let outcome = train_with_trace(&couples, &config, &emb, &df)?;

    prepare_out(&args.out)?;
    let file = FactorsFile {
        n_words: outcome.factors.len(),
        factors: outcome.factors,
        config,
    };
    let mut w = create(&args.out, "factors.json")?;
    writeln!(w, "{}", file.to_json()?)?;
    w.flush()?;

    let mut w = create(&args.out, "loss_trace.csv")?;
    writeln!(w, "batch,objective")?;
    for (i, objective) in outcome.trace.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, objective)?;
    }
    w.flush()?;
    println!("batches\t{}", outcome.trace.len());
    println!("n_words\t{}", file.n_words);
    Ok(())
}
