//! Command-line front end. Every subcommand prints a deterministic report —
//! the same inputs always produce byte-identical output — and exits 0 on
//! success, 2 on input/validation problems, 3 on infeasibility, 4 on
//! numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use moe_planner::accounting::{
    granularity_variants, parse_gran, parse_rational_str, solve_experts_for_budget, Gran,
    ModelDims, RoundingMode,
};
use moe_planner::chinchilla::{
    compare_configs, fit_chinchilla, ChinchillaFit, CurvePoint, DominanceReport, FitOptions,
};
use moe_planner::optimizer::{compare_with_brute_force, optimize};
use moe_planner::planfile::read_plan;
use moe_planner::records::{format_real, read_curve, read_records};
use moe_planner::regression::{fit_power_law, FeatureSpec, OlsOptions};
use moe_planner::report::{
    comparison_tsv, render_chinchilla_text, render_comparison_text, render_fit_text, series_tsv,
    slice_by_tokens, CountReport, OracleSummary, PlanReport, SolveExpertsReport, VariantsReport,
};
use moe_planner::PlannerError;

#[derive(Parser)]
#[command(
    name = "moe-planner",
    version,
    about = "Parameter accounting, scaling-law fits, and architecture planning \
             for mixture-of-experts transformers"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct DimsArgs {
    /// Number of transformer layers.
    #[arg(long)]
    l: u64,
    /// Model width (hidden size).
    #[arg(long)]
    d: u64,
    /// Granularity: integer, decimal, or fraction ("4", "2.5", "27/10").
    #[arg(long)]
    g: String,
    /// Routed experts per layer.
    #[arg(long)]
    n_exp: u64,
    /// Activated experts per token.
    #[arg(long)]
    n_topk: u64,
}

impl DimsArgs {
    fn parse(&self) -> Result<ModelDims, PlannerError> {
        ModelDims::new(self.l, self.d, parse_gran(&self.g)?, self.n_exp, self.n_topk)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Rounding {
    /// Ties go to the even neighbour.
    HalfEven,
    /// Ties move away from zero.
    HalfAway,
}

impl From<Rounding> for RoundingMode {
    fn from(r: Rounding) -> Self {
        match r {
            Rounding::HalfEven => RoundingMode::HalfEven,
            Rounding::HalfAway => RoundingMode::HalfAwayFromZero,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact parameter counts and ratios for one configuration.
    Count {
        #[command(flatten)]
        dims: DimsArgs,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Budget-preserving granularity variants of a base configuration.
    Variants {
        #[command(flatten)]
        dims: DimsArgs,
        /// Comma-separated scale factors, e.g. "1/4,1/2,1,2,4".
        #[arg(long)]
        factors: String,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Integer expert counts matching total/active budgets at fixed (l, d, g).
    SolveExperts {
        /// Number of transformer layers.
        #[arg(long)]
        l: u64,
        /// Model width (hidden size).
        #[arg(long)]
        d: u64,
        /// Granularity: integer, decimal, or fraction.
        #[arg(long)]
        g: String,
        /// Total-parameter target (integer, decimal, scientific, or fraction).
        #[arg(long)]
        target_total: String,
        /// Active-parameter target.
        #[arg(long)]
        target_active: String,
        /// Tie rule when the solved count lands on a half.
        #[arg(long, value_enum, default_value_t = Rounding::HalfEven)]
        rounding: Rounding,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Power-law regression over an experiment records CSV.
    FitPower {
        /// Records file: l,d,g,n_exp,n_topk,tokens_D,loss_L[,n_total,n_active,s].
        records: PathBuf,
        /// Regressor term list, e.g. "Ntotal+nexp+ntopk" or "Ntotal+s".
        #[arg(long)]
        spec: String,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Saturating loss-curve fit over an (N, D, loss) CSV.
    FitChinchilla {
        /// Curve file: n_total,tokens_D,loss_L.
        curve: PathBuf,
        /// Second curve file: fit both and report where the first sits below.
        #[arg(long)]
        compare: Option<PathBuf>,
        /// With --compare: write one predicted-series TSV per token count.
        #[arg(long, requires = "compare")]
        plot_dir: Option<PathBuf>,
        /// Robust-penalty transition width on the log-loss residual.
        #[arg(long, default_value_t = 1e-3)]
        delta: f64,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Constrained architecture search from a TOML plan file.
    Plan {
        /// Plan file with budgets, alignment, and search-grid overrides.
        plan: PathBuf,
        /// Cross-check the greedy sweep against exhaustive enumeration.
        #[arg(long)]
        verify_brute_force: bool,
        /// Include the per-cell outcome table in the report.
        #[arg(long)]
        table: bool,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Observed loss-vs-N series per token count, as TSV files.
    PlotData {
        /// Curve file: n_total,tokens_D,loss_L.
        curve: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            process::exit(e.exit_code());
        }
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("reports serialize"));
}

fn run(cli: Cli) -> Result<i32, PlannerError> {
    match cli.cmd {
        Cmd::Count { dims, json } => {
            let report = CountReport::new(&dims.parse()?);
            if json {
                print_json(&report);
            } else {
                print!("{}", report.render_text());
            }
            Ok(0)
        }
        Cmd::Variants { dims, factors, json } => {
            let base = dims.parse()?;
            let factors = factors
                .split(',')
                .map(|t| parse_gran(t.trim()))
                .collect::<Result<Vec<Gran>, _>>()?;
            let variants = granularity_variants(&base, &factors)?;
            let report = VariantsReport::new(base.l, base.d, &variants);
            if json {
                print_json(&report);
            } else {
                print!("{}", report.render_text());
            }
            Ok(0)
        }
        Cmd::SolveExperts { l, d, g, target_total, target_active, rounding, json } => {
            let g = parse_gran(&g)?;
            let target_total = parse_rational_str(&target_total)?;
            let target_active = parse_rational_str(&target_active)?;
            let sol =
                solve_experts_for_budget(l, d, g, &target_total, &target_active, rounding.into())?;
            let report = SolveExpertsReport::new(l, d, g, &target_total, &target_active, &sol);
            if json {
                print_json(&report);
            } else {
                print!("{}", report.render_text());
            }
            Ok(0)
        }
        Cmd::FitPower { records, spec, json } => {
            let records = read_records(&records)?;
            let spec = FeatureSpec::parse(&spec)?;
            let report = fit_power_law(&records, &spec, &OlsOptions::default())?;
            if json {
                print_json(&report);
            } else {
                print!("{}", render_fit_text(&report));
            }
            Ok(0)
        }
        Cmd::FitChinchilla { curve, compare, plot_dir, delta, json } => {
            cmd_fit_chinchilla(&curve, compare.as_deref(), plot_dir.as_deref(), delta, json)
        }
        Cmd::Plan { plan, verify_brute_force, table, json } => {
            cmd_plan(&plan, verify_brute_force, table, json)
        }
        Cmd::PlotData { curve, out_dir } => cmd_plot_data(&curve, &out_dir),
    }
}

/// Combined fit output: the primary fit plus the optional comparison.
#[derive(Serialize)]
struct ChinchillaOutput {
    fit: ChinchillaFit,
    compare_fit: Option<ChinchillaFit>,
    comparison: Option<DominanceReport>,
}

fn union_sorted(mut vals: Vec<f64>) -> Vec<f64> {
    vals.sort_by(|a, b| a.partial_cmp(b).expect("curve values are finite"));
    vals.dedup();
    vals
}

fn cmd_fit_chinchilla(
    curve: &Path,
    compare: Option<&Path>,
    plot_dir: Option<&Path>,
    delta: f64,
    json: bool,
) -> Result<i32, PlannerError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(PlannerError::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    let opts = FitOptions { delta, ..FitOptions::default() };
    let points = read_curve(curve)?;
    let fit = fit_chinchilla(&points, &opts)?;

    let mut output = ChinchillaOutput { fit, compare_fit: None, comparison: None };
    let mut written: Vec<PathBuf> = Vec::new();
    if let Some(path_b) = compare {
        let points_b = read_curve(path_b)?;
        let fit_b = fit_chinchilla(&points_b, &opts)?;
        let all = || points.iter().chain(&points_b);
        let ns = union_sorted(all().map(|p: &CurvePoint| p.n_total).collect());
        let ds = union_sorted(all().map(|p: &CurvePoint| p.tokens_d).collect());
        let comparison = compare_configs(&output.fit, &fit_b, &ns, &ds)?;
        if let Some(dir) = plot_dir {
            fs::create_dir_all(dir)?;
            for series in &comparison.series {
                let path = dir.join(format!("series_D{}.tsv", format_real(series.tokens_d)));
                fs::write(&path, comparison_tsv(series))?;
                written.push(path);
            }
        }
        output.compare_fit = Some(fit_b);
        output.comparison = Some(comparison);
    }

    if json {
        print_json(&output);
    } else {
        print!("{}", render_chinchilla_text(&output.fit));
        if let Some(fit_b) = &output.compare_fit {
            print!("comparison fit\n{}", render_chinchilla_text(fit_b));
        }
        if let Some(comparison) = &output.comparison {
            print!("{}", render_comparison_text(comparison));
        }
        for path in &written {
            println!("wrote {}", path.display());
        }
    }
    Ok(0)
}

fn cmd_plan(plan: &Path, verify: bool, table: bool, json: bool) -> Result<i32, PlannerError> {
    let spec = read_plan(plan)?;
    let out = optimize(&spec.constraints)?;
    let mut report = PlanReport::new(&spec.constraints, &out, spec.reference.as_ref(), table);
    if verify {
        report.oracle = Some(match compare_with_brute_force(&spec.constraints) {
            Ok(cmp) => {
                // Agreement means the global winners carry the same proxy
                // value (the per-cell misses are reported separately).
                let agreed = match (&out.best, &cmp.exhaustive.best) {
                    (None, None) => true,
                    (Some(g), Some(b)) => g.loss_proxy == b.loss_proxy,
                    _ => false,
                };
                OracleSummary {
                    ran: true,
                    note: "exhaustive enumeration completed".into(),
                    missed_cells: cmp.missed_cells.len(),
                    agreed,
                }
            }
            Err(PlannerError::SearchSpaceTooLarge(note)) => {
                OracleSummary { ran: false, note, missed_cells: 0, agreed: false }
            }
            Err(e) => return Err(e),
        });
    }
    let feasible = report.best.is_some();
    if json {
        print_json(&report);
    } else {
        print!("{}", report.render_text());
    }
    if feasible {
        Ok(0)
    } else {
        eprintln!("error: no feasible configuration under the given constraints");
        Ok(3)
    }
}

fn cmd_plot_data(curve: &Path, out_dir: &Path) -> Result<i32, PlannerError> {
    let points = read_curve(curve)?;
    if points.is_empty() {
        return Err(PlannerError::InvalidInput("curve file has no data rows".into()));
    }
    fs::create_dir_all(out_dir)?;
    for (tokens_d, slice) in slice_by_tokens(&points) {
        let path = out_dir.join(format!("series_D{}.tsv", format_real(tokens_d)));
        fs::write(&path, series_tsv(&slice))?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}
