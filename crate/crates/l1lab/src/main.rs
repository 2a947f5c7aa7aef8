use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use l1lab::bounds::{evaluate_lower_bound, volume_bound_report};
use l1lab::construct::{
    default_star_embedding, random_sign_star_embedding, sparse_star_embedding,
    star_embedding_params, tree_embedding,
};
use l1lab::embedding::EmbeddingDoc;
use l1lab::error::Error;
use l1lab::jsonio::{read_json, to_canonical_json, write_canonical_json};
use l1lab::pipeline::{run_pipeline, verify_certificate, CertificateDoc, PipelineCertificate};
use l1lab::search::{append_frontier_row, min_distortion_star};
use l1lab::sweep::run_sweep_to_writer;

/// Exit codes: 0 success, 2 usage, 3 I/O or construction, 4 certificate
/// violation.
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_VIOLATION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "l1lab",
    version,
    about = "Low-distortion l1 embeddings of stars and trees: constructions, lower-bound certificates, and frontier sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an embedding and write it as JSON.
    #[command(subcommand)]
    Embed(EmbedTarget),
    /// Run the lower-bound pipeline or verify a stored certificate.
    #[command(subcommand)]
    Pipeline(PipelineAction),
    /// Evaluate closed-form dimension lower bounds.
    Bounds(BoundsArgs),
    /// Sweep the empirical dimension-distortion frontier to CSV.
    Sweep(SweepArgs),
    /// Heuristic distortion minimization for small (n, d).
    Search(SearchArgs),
}

#[derive(Subcommand)]
enum EmbedTarget {
    /// Random sparse-support embedding of the n-star.
    Star(EmbedStarArgs),
    /// Unit-edge (optionally perturbed) embedding of the complete k-ary tree.
    Tree(EmbedTreeArgs),
}

#[derive(Args)]
struct EmbedStarArgs {
    /// Number of star points (center plus n-1 leaves).
    #[arg(long)]
    n: usize,
    /// Ambient dimension; defaults to the construction's d(n, eps).
    #[arg(long)]
    d: Option<usize>,
    /// Target distortion slack; sets the default dimension and support size.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedTreeArgs {
    /// Arity of the complete tree.
    #[arg(long)]
    k: usize,
    /// Height of the complete tree.
    #[arg(long = "h", visible_alias = "height")]
    height: usize,
    /// Ambient dimension; defaults to the edge count.
    #[arg(long)]
    d: Option<usize>,
    /// Perturbation budget; 0 keeps the embedding isometric.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum PipelineAction {
    /// Run the full reduction on a star embedding and write the certificate.
    Run(PipelineRunArgs),
    /// Re-check every inequality recorded in a certificate.
    Verify { cert: PathBuf },
}

#[derive(Args)]
struct PipelineRunArgs {
    #[arg(long)]
    embedding: PathBuf,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    n: u64,
    /// Distortion slack for the counting bound.
    #[arg(long)]
    eps: Option<f64>,
    /// Evaluate the ball-packing bound instead.
    #[arg(long)]
    volume: bool,
    /// Distortion D for the volume bound.
    #[arg(long = "D")]
    distortion: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated star sizes.
    #[arg(long = "n-list", default_value = "16,64")]
    n_list: String,
    /// Comma-separated eps values (each at most 1/16 so certificates apply).
    #[arg(long = "eps-list", default_value = "0.0625,0.05")]
    eps_list: String,
    #[arg(long, default_value_t = 3)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Recorded in the frontier CSV alongside the result.
    #[arg(long = "eps-target")]
    eps_target: Option<f64>,
    /// Frontier CSV to append to.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn default_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| std::env::var("L1LAB_SEED").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(0)
}

fn fail(code: u8, err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(code)
}

/// Usage-level errors exit 2; I/O and parsing exit 3; everything else in
/// construction contexts exits 3 and in certificate contexts exits 4.
fn construction_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Parse(_) => EXIT_IO,
        _ => EXIT_IO,
    }
}

fn pipeline_code(err: &Error) -> u8 {
    match err {
        Error::OutOfRange(_) | Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Io(_) | Error::Parse(_) => EXIT_IO,
        _ => EXIT_VIOLATION,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Embed(EmbedTarget::Star(args)) => embed_star(args),
        Command::Embed(EmbedTarget::Tree(args)) => embed_tree(args),
        Command::Pipeline(PipelineAction::Run(args)) => pipeline_run(args),
        Command::Pipeline(PipelineAction::Verify { cert }) => pipeline_verify(cert),
        Command::Bounds(args) => bounds(args),
        Command::Sweep(args) => sweep(args),
        Command::Search(args) => search(args),
    }
}

fn embed_star(args: EmbedStarArgs) -> ExitCode {
    let seed = default_seed(args.seed);
    let built = match (args.d, args.eps) {
        (Some(d), Some(eps)) => star_embedding_params(args.n, eps)
            .and_then(|p| sparse_star_embedding(args.n, d, p.support_size.min(d), seed)),
        (Some(d), None) => random_sign_star_embedding(args.n, d, seed),
        (None, Some(eps)) => default_star_embedding(args.n, eps, seed),
        (None, None) => {
            eprintln!("error: provide --d, --eps, or both");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let embedding = match built {
        Ok(e) => e,
        Err(e) => return fail(construction_code(&e), e),
    };
    finish_embed(&embedding, &args.out)
}

fn embed_tree(args: EmbedTreeArgs) -> ExitCode {
    let seed = default_seed(args.seed);
    let edges = match l1lab::metric::kary_tree_size(args.k, args.height) {
        Some(n) => n - 1,
        None => return fail(EXIT_IO, "tree too large"),
    };
    let d = args.d.unwrap_or(edges);
    let embedding = match tree_embedding(args.k, args.height, d, args.eps, seed) {
        Ok(e) => e,
        Err(e) => return fail(construction_code(&e), e),
    };
    finish_embed(&embedding, &args.out)
}

fn finish_embed(embedding: &l1lab::Embedding, out: &std::path::Path) -> ExitCode {
    let distortion = match embedding.distortion() {
        Ok(v) => v,
        Err(e) => return fail(EXIT_IO, e),
    };
    let doc = EmbeddingDoc::from(embedding);
    if let Err(e) = write_canonical_json(out, &doc) {
        return fail(EXIT_IO, e);
    }
    println!("wrote {} (n={}, d={})", out.display(), doc.n, doc.dim);
    println!("distortion: {distortion}");
    ExitCode::SUCCESS
}

fn pipeline_run(args: PipelineRunArgs) -> ExitCode {
    if args.eps > 1.0 / 16.0 {
        return fail(EXIT_USAGE, format!("eps {} exceeds the pipeline gate 1/16", args.eps));
    }
    let doc: EmbeddingDoc = match read_json(&args.embedding) {
        Ok(d) => d,
        Err(e) => return fail(EXIT_IO, e),
    };
    let embedding = match doc.into_star_embedding() {
        Ok(e) => e,
        Err(e) => return fail(pipeline_code(&e), e),
    };
    let cert = match run_pipeline(&embedding, args.eps) {
        Ok(c) => c,
        Err(e) => return fail(pipeline_code(&e), e),
    };
    if let Err(e) = write_canonical_json(&args.out, &CertificateDoc::from(&cert)) {
        return fail(EXIT_IO, e);
    }
    println!(
        "wrote {} ({} checks, |S4| = {}, all pass)",
        args.out.display(),
        cert.checks.len(),
        cert.final_family().len()
    );
    ExitCode::SUCCESS
}

fn pipeline_verify(path: PathBuf) -> ExitCode {
    let doc: CertificateDoc = match read_json(&path) {
        Ok(d) => d,
        Err(e) => return fail(EXIT_IO, e),
    };
    let cert = match PipelineCertificate::try_from(doc) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_IO, e),
    };
    let report = verify_certificate(&cert);
    if report.pass {
        println!("certificate ok ({} checks verified)", cert.checks.len());
        ExitCode::SUCCESS
    } else {
        for failure in &report.failures {
            eprintln!("failed: {failure}");
        }
        ExitCode::from(EXIT_VIOLATION)
    }
}

fn bounds(args: BoundsArgs) -> ExitCode {
    let report = if args.volume {
        let d_ratio = match args.distortion {
            Some(v) => v,
            None => return fail(EXIT_USAGE, "--volume needs --D"),
        };
        volume_bound_report(args.n, d_ratio)
    } else {
        match args.eps {
            Some(eps) => evaluate_lower_bound(args.n, eps),
            None => return fail(EXIT_USAGE, "provide --eps, or --volume with --D"),
        }
    };
    match report {
        Ok(r) => match to_canonical_json(&r) {
            Ok(json) => {
                println!("{json}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_IO, e),
        },
        Err(e) => fail(EXIT_USAGE, e),
    }
}

fn parse_list<T: std::str::FromStr>(raw: &str) -> Result<Vec<T>, String> {
    let items: Result<Vec<T>, _> = raw
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>())
        .collect();
    match items {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(format!("could not parse list `{raw}`")),
    }
}

fn sweep(args: SweepArgs) -> ExitCode {
    let ns: Vec<usize> = match parse_list(&args.n_list) {
        Ok(v) => v,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let epss: Vec<f64> = match parse_list(&args.eps_list) {
        Ok(v) => v,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let seed = default_seed(args.seed);
    let file = match std::fs::File::create(&args.out) {
        Ok(f) => f,
        Err(e) => return fail(EXIT_IO, e),
    };
    let mut writer = std::io::BufWriter::new(file);
    match run_sweep_to_writer(&ns, &epss, args.trials, seed, &mut writer) {
        Ok(rows) => {
            let passes = rows.iter().filter(|r| r.cert_pass).count();
            println!(
                "wrote {} ({} rows, {passes} certificates pass)",
                args.out.display(),
                rows.len()
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_IO, e),
    }
}

fn search(args: SearchArgs) -> ExitCode {
    let seed = default_seed(args.seed);
    let result = match min_distortion_star(args.n, args.d, args.iterations, seed) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    println!(
        "n={} d={} iterations={} seed={seed}: best distortion {}",
        args.n, args.d, args.iterations, result.distortion
    );
    if let Some(path) = &args.out {
        if let Err(e) = append_frontier_row(
            path,
            args.n,
            args.d,
            args.eps_target,
            result.distortion,
            seed,
            args.iterations,
        ) {
            return fail(EXIT_IO, e);
        }
        println!("appended to {}", path.display());
    }
    ExitCode::SUCCESS
}
