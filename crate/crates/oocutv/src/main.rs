use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oocutv::matgen::{gen_rank_deficient, make_rhs, RhsOptions, Scenario};
use oocutv::mtx::{read_matrix_market, write_matrix_market};
use oocutv::oracle::{randutv_dense_reference, residual_dense, svd_lstsq_dense, ReferenceOptions};
use oocutv::scheduler::DEFAULT_LOOKAHEAD;
use oocutv::solver::{scratch_dir, DEFAULT_NB, DEFAULT_TAU};
use oocutv::store::read_header;
use oocutv::{estimate_rank, factor, lstsq, Error, Executor, Format, Mode, Policy, Result, SolverOptions, TileStore};
use oocutv_core::{Mat, StoreRole};
use tempfile::TempDir;

/// Writes to stdout; a closed pipe (`oocutv bench | head`) ends the process quietly.
fn emit(args: std::fmt::Arguments<'_>) {
    use std::io::Write;
    if let Err(e) = std::io::stdout().lock().write_fmt(args) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        panic!("writing to stdout: {e}");
    }
}

macro_rules! out {
    ($($t:tt)*) => { emit(format_args!($($t)*)) };
}

macro_rules! outln {
    () => { emit(format_args!("\n")) };
    ($($t:tt)*) => { emit(format_args!("{}\n", format_args!($($t)*))) };
}

/// Out-of-core least squares for dense, possibly rank-deficient systems.
#[derive(Parser)]
#[command(name = "oocutv", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic rank-deficient matrix and optionally a right-hand side.
    Generate(GenerateArgs),
    /// Convert a Matrix Market file to a tile store, or back with `--to-mtx`.
    Convert(ConvertArgs),
    /// Factor A·V = U·T and export the factors.
    Factor(FactorArgs),
    /// Numerical rank from the diagonal of a stored T.
    Rank(RankArgs),
    /// Solve min ‖A·X − B‖.
    Solve(SolveArgs),
    /// Run the full solve once per cache policy and tabulate disk traffic.
    Bench(BenchArgs),
    /// Compare the out-of-core path against dense in-memory references.
    Verify(VerifyArgs),
    /// Print the header of a tile-store file.
    DumpHeader { file: PathBuf },
}

#[derive(Args, Clone)]
struct SolverFlags {
    /// Power-iteration steps.
    #[arg(long, default_value_t = 0)]
    q: usize,
    #[arg(long, default_value_t = DEFAULT_NB)]
    nb: usize,
    /// Relative rank threshold on the diagonal of T.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// Cache capacity in MiB (default: 25 tiles).
    #[arg(long)]
    cache_mb: Option<f64>,
    /// none, lru4, lru or lfu.
    #[arg(long, default_value = "lfu", value_parser = parse_policy)]
    policy: Policy,
    /// Prefetch operands on a separate I/O thread.
    #[arg(long)]
    overlap: bool,
    #[arg(long, default_value_t = DEFAULT_LOOKAHEAD)]
    lookahead: usize,
    /// Skip clearing T(1:r, r+1:n); the solution is then not of minimum norm.
    #[arg(long)]
    no_nullify: bool,
    /// Accumulate U explicitly.
    #[arg(long)]
    build_u: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "table", value_parser = parse_format)]
    format: Format,
}

impl SolverFlags {
    fn options(&self) -> Result<SolverOptions> {
        if self.overlap && self.lookahead == 0 {
            return Err(Error::Invalid("--lookahead must be at least 1".into()));
        }
        let cache_bytes = match self.cache_mb {
            Some(mb) if !(mb > 0.0 && mb.is_finite()) => return Err(Error::Invalid(format!("bad --cache-mb {mb}"))),
            Some(mb) => Some((mb * 1024.0 * 1024.0) as usize),
            None => None,
        };
        Ok(SolverOptions {
            q: self.q,
            nb: self.nb,
            tau: self.tau,
            nullify: !self.no_nullify,
            build_u: self.build_u,
            seed: self.seed,
            cache_bytes,
            policy: self.policy,
            executor: if self.overlap {
                Executor::Overlapped { lookahead: self.lookahead }
            } else {
                Executor::Sequential
            },
            ..SolverOptions::default()
        })
    }
}

#[derive(Args, Clone)]
struct RhsFlags {
    /// Right-hand side file (`.mtx` or tile store). Implies scenario 1.
    #[arg(long)]
    b: Option<PathBuf>,
    /// 1 provided, 2 ones, 3 A·x for random x, 4 as 3 with perturbed entries.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    scenario: Option<u8>,
    /// Columns of a generated right-hand side.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0.10)]
    perturb_frac: f64,
    #[arg(long, default_value_t = 0.999)]
    perturb_scale: f64,
}

#[derive(Args)]
struct Source {
    /// Coefficient matrix (`.mtx` or tile store).
    #[arg(long, conflicts_with_all = ["m", "n", "rank"])]
    a: Option<PathBuf>,
    /// Rows of a generated matrix.
    #[arg(long, requires = "n")]
    m: Option<usize>,
    #[arg(long, requires = "m")]
    n: Option<usize>,
    /// Rank of a generated matrix (default min(m, n)).
    #[arg(long)]
    rank: Option<usize>,
    /// Seed of a generated matrix.
    #[arg(long, default_value_t = 0)]
    gen_seed: u64,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_NB)]
    nb: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write B here (scenario 2 unless given).
    #[arg(long)]
    b_out: Option<PathBuf>,
    /// Write the generating x of scenarios 3 and 4 here.
    #[arg(long)]
    x_out: Option<PathBuf>,
    #[command(flatten)]
    rhs: RhsFlags,
}

#[derive(Args)]
struct ConvertArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long, default_value_t = DEFAULT_NB)]
    nb: usize,
    /// Write a Matrix Market file from a tile store.
    #[arg(long)]
    to_mtx: bool,
}

#[derive(Args)]
struct FactorArgs {
    #[command(flatten)]
    src: Source,
    #[command(flatten)]
    rhs: RhsFlags,
    #[command(flatten)]
    flags: SolverFlags,
    /// Directory for T, V, and U / UᵀB when present.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RankArgs {
    /// Stored upper-triangular factor T.
    #[arg(long)]
    t: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    src: Source,
    #[command(flatten)]
    rhs: RhsFlags,
    #[command(flatten)]
    flags: SolverFlags,
    /// Write the solution here.
    #[arg(long)]
    x_out: Option<PathBuf>,
    /// Print the per-task report after the result line.
    #[arg(long)]
    report: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    src: Source,
    #[command(flatten)]
    rhs: RhsFlags,
    #[command(flatten)]
    flags: SolverFlags,
    /// Comma-separated policies to compare.
    #[arg(long, default_value = "none,lru4,lru,lfu", value_delimiter = ',', value_parser = parse_policy)]
    policies: Vec<Policy>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    src: Source,
    #[command(flatten)]
    rhs: RhsFlags,
    #[command(flatten)]
    flags: SolverFlags,
}

fn parse_policy(s: &str) -> std::result::Result<Policy, String> {
    Policy::from_name(s).ok_or_else(|| format!("unknown policy `{s}` (none, lru4, lru, lfu)"))
}

fn parse_format(s: &str) -> std::result::Result<Format, String> {
    Format::from_name(s).ok_or_else(|| format!("unknown format `{s}` (table, csv)"))
}

fn is_mtx(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("mtx"))
}

fn load(p: &Path, nb: usize, scratch: &Path, name: &str) -> Result<TileStore> {
    if is_mtx(p) {
        read_matrix_market(p, nb, scratch.join(name))
    } else {
        TileStore::open(p, Mode::ReadOnly)
    }
}

/// Problem inputs, with any generated or converted stores under `_dir`.
struct Problem {
    a: TileStore,
    b: TileStore,
    _dir: TempDir,
}

fn scenario(rhs: &RhsFlags) -> Result<Scenario> {
    match rhs.scenario {
        None if rhs.b.is_some() => Ok(Scenario::Provided),
        None => Ok(Scenario::Ones),
        Some(k) => Scenario::from_number(k).ok_or_else(|| Error::Invalid(format!("bad scenario {k}"))),
    }
}

fn rhs_options(rhs: &RhsFlags, seed: u64) -> RhsOptions {
    RhsOptions { k: rhs.k, seed, perturb_frac: rhs.perturb_frac, perturb_scale: rhs.perturb_scale }
}

fn source(src: &Source, nb: usize, dir: &Path) -> Result<TileStore> {
    match (&src.a, src.m, src.n) {
        (Some(p), _, _) => load(p, nb, dir, "a_in"),
        (None, Some(m), Some(n)) => {
            gen_rank_deficient(m, n, src.rank.unwrap_or(m.min(n)), src.gen_seed, nb, dir.join("a_gen"))
        }
        _ => Err(Error::Invalid("give --a, or --m and --n to generate a matrix".into())),
    }
}

fn problem(src: &Source, rhs: &RhsFlags, flags: &SolverFlags) -> Result<Problem> {
    let dir = scratch_dir()?;
    let a = source(src, flags.nb, dir.path())?;
    let provided = rhs.b.as_deref().map(|p| load(p, flags.nb, dir.path(), "b_in")).transpose()?;
    let (b, _) = make_rhs(
        scenario(rhs)?,
        &a,
        rhs_options(rhs, flags.seed),
        provided.as_ref(),
        dir.path().join("b"),
        dir.path().join("x"),
    )?;
    Ok(Problem { a, b, _dir: dir })
}

fn generate(g: &GenerateArgs) -> Result<()> {
    let a = gen_rank_deficient(g.m, g.n, g.rank.unwrap_or(g.m.min(g.n)), g.seed, g.nb, &g.out)?;
    outln!("wrote {} ({}×{}, nb={})", g.out.display(), a.rows(), a.cols(), a.nb());
    if let Some(bp) = &g.b_out {
        let dir = scratch_dir()?;
        let provided = g.rhs.b.as_deref().map(|p| load(p, g.nb, dir.path(), "b_in")).transpose()?;
        let xp = g.x_out.clone().unwrap_or_else(|| dir.path().join("x"));
        let (b, x) = make_rhs(scenario(&g.rhs)?, &a, rhs_options(&g.rhs, g.seed), provided.as_ref(), bp, &xp)?;
        outln!("wrote {} ({}×{})", bp.display(), b.rows(), b.cols());
        if let (Some(x), Some(_)) = (x, &g.x_out) {
            outln!("wrote {} ({}×{})", xp.display(), x.rows(), x.cols());
        }
    }
    Ok(())
}

fn convert(c: &ConvertArgs) -> Result<()> {
    if c.to_mtx {
        write_matrix_market(&TileStore::open(&c.input, Mode::ReadOnly)?, &c.output)?;
    } else {
        let s = read_matrix_market(&c.input, c.nb, &c.output)?;
        outln!("wrote {} ({}×{}, nb={})", c.output.display(), s.rows(), s.cols(), s.nb());
    }
    Ok(())
}

fn run_factor(f: &FactorArgs) -> Result<()> {
    let opts = f.flags.options()?;
    let dir = scratch_dir()?;
    let a = source(&f.src, opts.nb, dir.path())?;
    let b = if f.rhs.b.is_some() || f.rhs.scenario.is_some() {
        let provided = f.rhs.b.as_deref().map(|p| load(p, opts.nb, dir.path(), "b_in")).transpose()?;
        Some(
            make_rhs(
                scenario(&f.rhs)?,
                &a,
                rhs_options(&f.rhs, opts.seed),
                provided.as_ref(),
                dir.path().join("b"),
                dir.path().join("x"),
            )?
            .0,
        )
    } else {
        None
    };
    let mut fac = factor(&a, b.as_ref(), &opts)?;
    std::fs::create_dir_all(&f.out_dir)?;
    let mut exports = vec![(StoreRole::A, "T.ooct"), (StoreRole::V, "V.ooct")];
    if opts.build_u {
        exports.push((StoreRole::U, "U.ooct"));
    }
    if b.is_some() {
        exports.push((StoreRole::B, "UtB.ooct"));
    }
    for (role, name) in exports {
        fac.export(role, f.out_dir.join(name))?;
    }
    let r = fac.estimate_rank(opts.tau)?;
    outln!("rank={r} {}", fac.report().stats);
    out!("{}", fac.report().render(f.flags.format));
    Ok(())
}

fn solve(s: &SolveArgs) -> Result<()> {
    let opts = s.flags.options()?;
    let p = problem(&s.src, &s.rhs, &s.flags)?;
    let res = lstsq(&p.a, &p.b, &opts)?;
    outln!("{}", res.line());
    outln!("{}", res.report.stats);
    if let Some(out) = &s.x_out {
        res.save(out)?;
    }
    if s.report {
        out!("{}", res.report.render(s.flags.format));
    }
    Ok(())
}

fn bench(bn: &BenchArgs) -> Result<()> {
    let base = bn.flags.options()?;
    let p = problem(&bn.src, &bn.rhs, &bn.flags)?;
    let mut rows = Vec::new();
    for &policy in &bn.policies {
        let res = lstsq(&p.a, &p.b, &SolverOptions { policy, ..base })?;
        rows.push((policy, res));
    }
    let capacity = base.cache_config().capacity_bytes;
    match bn.flags.format {
        Format::Csv => {
            outln!("policy,reads,writes,hits,misses,rank,residual_fro");
            for (pol, r) in &rows {
                let s = r.report.stats;
                outln!(
                    "{},{},{},{},{},{},{:.6e}",
                    pol.name(),
                    s.reads,
                    s.writes,
                    s.hits,
                    s.misses,
                    r.rank,
                    r.residual_fro.unwrap_or(f64::NAN)
                );
            }
        }
        Format::Table => {
            outln!(
                "{}×{} matrix, nb={}, {}×{} tiles, cache {} tiles",
                p.a.rows(),
                p.a.cols(),
                base.nb,
                p.a.rows().div_ceil(base.nb),
                p.a.cols().div_ceil(base.nb),
                capacity / (base.nb * base.nb * 8)
            );
            out!("{:<14}", "");
            for (pol, _) in &rows {
                out!(" {:>10}", pol.name());
            }
            outln!();
            let line = |label: &str, f: &dyn Fn(&oocutv::CacheStats) -> u64| {
                out!("{label:<14}");
                for (_, r) in &rows {
                    out!(" {:>10}", f(&r.report.stats));
                }
                outln!();
            };
            line("# disk reads", &|s| s.reads);
            line("# disk writes", &|s| s.writes);
            line("# hits", &|s| s.hits);
            line("# misses", &|s| s.misses);
        }
    }
    if let Some((pol, r)) = rows.last() {
        outln!();
        outln!("tasks ({}):", pol.name());
        out!("{}", r.report.render(bn.flags.format));
    }
    Ok(())
}

fn check(name: &str, ok: bool, detail: String) -> bool {
    outln!("{} {name}: {detail}", if ok { "ok  " } else { "FAIL" });
    ok
}

fn verify(v: &VerifyArgs) -> Result<bool> {
    let opts = v.flags.options()?;
    let p = problem(&v.src, &v.rhs, &v.flags)?;
    let (m, n) = (p.a.rows(), p.a.cols());
    if m.max(n) > 2000 {
        return Err(Error::Invalid(format!("{m}×{n} is too large for the dense references")));
    }
    let (ad, bd) = (p.a.to_dense()?, p.b.to_dense()?);
    let mut all = true;

    let (xo, ro) = svd_lstsq_dense(&ad, &bd, opts.tau)?;
    let oracle_res = residual_dense(&ad, &xo, &bd);
    let res = lstsq(&p.a, &p.b, &opts)?;
    let got = res.residual_fro.unwrap_or(f64::NAN);
    let floor = 1e-12 * ad.fro_norm() * xo.fro_norm();
    all &= check("rank", res.rank == ro, format!("solver {} oracle {ro}", res.rank));
    all &= check("residual", got <= oracle_res * (1.0 + 1e-6) + floor, format!("{got:.6e} vs oracle {oracle_res:.6e}"));
    if opts.nullify {
        all &= check(
            "xnorm",
            res.xnorm_fro <= xo.fro_norm() * (1.0 + 1e-6),
            format!("{:.6e} vs oracle {:.6e}", res.xnorm_fro, xo.fro_norm()),
        );
    }

    let fac = factor(&p.a, Some(&p.b), &SolverOptions { build_u: true, ..opts })?;
    let rf = ReferenceOptions {
        q: opts.q,
        nb: opts.nb,
        seed: opts.seed,
        build_u: true,
        full_last_step: opts.full_last_step,
    };
    let dense = randutv_dense_reference(&ad, Some(&bd), rf).map_err(|e| Error::Invalid(e.to_string()))?;
    let (t, vv, u) = (fac.t()?.to_dense()?, fac.v()?.to_dense()?, fac.u()?.to_dense()?);
    let same = t == dense.t
        && vv == dense.v
        && Some(&u) == dense.u.as_ref()
        && Some(&fac.bt()?.to_dense()?) == dense.bt.as_ref();
    all &= check("dense-reference", same, if same { "bit-identical".into() } else { "factors differ".into() });

    let recon = ad.matmul(&vv).minus(&u.matmul(&t)).fro_norm() / ad.fro_norm().max(f64::MIN_POSITIVE);
    all &= check("AV=UT", recon <= 1e-10, format!("relative {recon:.3e}"));
    let uo = u.transpose().matmul(&u).minus(&Mat::identity(m)).fro_norm();
    all &= check("U orthogonal", uo <= 1e-11 * m as f64, format!("{uo:.3e}"));
    let vo = vv.transpose().matmul(&vv).minus(&Mat::identity(n)).fro_norm();
    all &= check("V orthogonal", vo <= 1e-11 * n as f64, format!("{vo:.3e}"));
    Ok(all)
}

fn dump_header(file: &Path) -> Result<()> {
    let h = read_header(file)?;
    outln!("version={}", h.version);
    outln!("rows={}", h.rows);
    outln!("cols={}", h.cols);
    outln!("nb={}", h.nb);
    outln!("elem={}", h.elem);
    outln!("checksum={:#018x}", h.checksum);
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Generate(g) => generate(&g)?,
        Cmd::Convert(c) => convert(&c)?,
        Cmd::Factor(f) => run_factor(&f)?,
        Cmd::Rank(r) => outln!("rank={}", estimate_rank(&TileStore::open(&r.t, Mode::ReadOnly)?, r.tau)?),
        Cmd::Solve(s) => solve(&s)?,
        Cmd::Bench(b) => bench(&b)?,
        Cmd::Verify(v) => return verify(&v),
        Cmd::DumpHeader { file } => dump_header(&file)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
