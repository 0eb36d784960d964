//! Command-line driver: verify the optimal separable instrument, simulate and
//! audit LOCC protocols, evaluate the gap bound, and emit the sweep CSV.
//!
//! Exit status is 0 when every check passes, 1 when a check fails and 2 on
//! usage or validation errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use locc_gap::classical::{
    channel_of_pc, channel_stats, compile_pc_to_locc, kbar, build_classical_separable, is_separable_channel,
    random_pc_protocol, PcProtocol,
};
use locc_gap::gap::{
    check_feasible, default_q_values, delta_low, delta_min_grid, sweep_gap, sweep_to_csv, Sign, DEFAULT_GRID,
};
use locc_gap::locc::{
    audit_inequalities, build_protocol_family, classify, ebar_locc, simulate, verify_zigzag, CheckStatus, LoccProtocol,
    ProtocolFamily, DEFAULT_MAX_DEPTH,
};
use locc_gap::measures::{EntanglementMeasure, EqMeasure};
use locc_gap::separable::{build_optimal_instrument, evaluate_ebar};

#[derive(Parser)]
#[command(name = "locc-gap", version, about = "Separable operations versus LOCC on Bell-state discrimination")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Params {
    /// Required efficiency Q.
    #[arg(long, default_value_t = 0.2)]
    q: f64,
    /// Region parameter r.
    #[arg(long, default_value_t = 0.7)]
    r: f64,
    /// Region enlargement α.
    #[arg(long, default_value_t = 0.08)]
    alpha: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Build the optimal separable instrument and check Ē and efficiency.
    VerifySeparable {
        #[arg(long, default_value_t = 0.2)]
        q: f64,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        /// Write the instrument as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a protocol tree and run the inequality audits.
    Simulate {
        #[command(flatten)]
        params: Params,
        /// LOCC or PC protocol JSON.
        #[arg(long = "in", conflicts_with = "family")]
        input: Option<PathBuf>,
        /// Built-in family, e.g. projective-zz:2 or random:7:6:3.
        #[arg(long)]
        family: Option<String>,
        #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
        max_depth: usize,
        /// Write the branch table as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Star point, Δ_min (analytic and grid) and Δ_low.
    Gap {
        #[command(flatten)]
        params: Params,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Optimized Δ_low over a list of Q values, as CSV.
    #[command(visible_alias = "figure2")]
    Sweep {
        /// Comma-separated Q values; defaults to 0.05, 0.10, …, 0.95.
        #[arg(long, value_delimiter = ',')]
        qs: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classical separable agent, its K̄ and efficiency.
    Classical {
        #[arg(long, default_value_t = 0.2)]
        q: f64,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Compile a PC protocol to LOCC and compare the two simulations.
    CompilePc {
        #[arg(long = "in", required_unless_present = "seed")]
        input: Option<PathBuf>,
        /// Use a seeded random PC protocol instead of a file.
        #[arg(long, conflicts_with = "input")]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0.2)]
        q: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
}

/// Failure of a check, as opposed to bad input.
#[derive(Debug)]
struct CheckFailed(Vec<String>);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "failed checks: {}", self.0.join(", "))
    }
}

impl std::error::Error for CheckFailed {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<CheckFailed>() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::VerifySeparable { q, tol, out } => verify_separable(q, tol, out.as_deref()),
        Command::Simulate {
            params,
            input,
            family,
            max_depth,
            out,
        } => cmd_simulate(params, input.as_deref(), family.as_deref(), max_depth, out.as_deref()),
        Command::Gap { params, grid, tol } => cmd_gap(params, grid, tol),
        Command::Sweep { qs, out } => cmd_sweep(qs, out.as_deref()),
        Command::Classical { q, tol } => cmd_classical(q, tol),
        Command::CompilePc {
            input,
            seed,
            q,
            out,
            tol,
        } => cmd_compile_pc(input.as_deref(), seed, q, out.as_deref(), tol),
    }
}

fn measure(q: f64) -> Result<EqMeasure> {
    Ok(EqMeasure::new(q)?)
}

fn finish(failed: Vec<String>) -> Result<()> {
    if failed.is_empty() {
        println!("status: pass");
        Ok(())
    } else {
        println!("status: FAIL");
        Err(CheckFailed(failed).into())
    }
}

fn write_out(path: Option<&Path>, contents: &str) -> Result<()> {
    if let Some(p) = path {
        fs::write(p, contents).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |c| format!("{c:.17}"))
}

fn verify_separable(q: f64, tol: f64, out: Option<&Path>) -> Result<()> {
    let m = measure(q)?;
    let inst = build_optimal_instrument(q)?;
    let rep = evaluate_ebar(&inst, &m)?;
    println!("Q = {q}");
    println!("{:>3} {:>20} {:>20} {:>20} {:>20} {:>20} {:>20}", "k", "w", "x", "y", "p", "q", "C");
    for (k, (e, s)) in inst.elements().iter().zip(&rep.stats).enumerate() {
        println!(
            "{:>3} {:>20.17} {:>20.17} {:>20.17} {:>20.17} {:>20.17} {:>20}",
            k + 1,
            e.w,
            e.x,
            e.y,
            s.p,
            s.q,
            opt(s.c_plus)
        );
    }
    println!("Ebar = {:.17}", rep.ebar);
    println!("efficiency = {:.17}", rep.efficiency);
    write_out(out, &inst.to_json())?;
    let mut failed = Vec::new();
    if inst.completeness_defect() > tol.max(1e-12) {
        failed.push("completeness".to_string());
    }
    if (rep.ebar - m.eval(1.0 - q)).abs() > tol {
        failed.push("ebar".to_string());
    }
    if (rep.efficiency - q).abs() > tol {
        failed.push("efficiency".to_string());
    }
    finish(failed)
}

enum Loaded {
    Locc(LoccProtocol),
    Pc(PcProtocol),
}

fn load_protocol(path: &Path, max_depth: usize) -> Result<Loaded> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).context("parsing protocol JSON")?;
    if value.get("probs").is_some() {
        Ok(Loaded::Pc(PcProtocol::from_json(&text, max_depth)?))
    } else {
        Ok(Loaded::Locc(LoccProtocol::from_json(&text, max_depth)?))
    }
}

fn cmd_simulate(
    p: Params,
    input: Option<&Path>,
    family: Option<&str>,
    max_depth: usize,
    out: Option<&Path>,
) -> Result<()> {
    check_feasible(p.q, p.r, p.alpha)?;
    let m = measure(p.q)?;
    let (proto, pc) = match (input, family) {
        (Some(path), _) => match load_protocol(path, max_depth)? {
            Loaded::Locc(proto) => (proto, None),
            Loaded::Pc(pc) => (compile_pc_to_locc(&pc)?, Some(pc)),
        },
        (None, Some(f)) => (build_protocol_family(&f.parse::<ProtocolFamily>()?)?, None),
        (None, None) => bail!("one of --in or --family is required"),
    };
    let sim = simulate(&proto)?;
    let class = classify(&sim, p.r);
    let audit = audit_inequalities(&sim, &class, p.q, p.r, p.alpha)?;
    let e = ebar_locc(&sim, &m);
    let gap = delta_low(p.q, p.r, p.alpha)?;
    let bound = m.eval(1.0 - p.q) - gap.delta_low;

    println!("Q = {}  r = {}  alpha = {}", p.q, p.r, p.alpha);
    println!(
        "{:<16} {:>20} {:>20} {:>20} {:>20} {:>20} {:>20} {:>6}",
        "history", "x", "y", "p", "q", "C+", "C-", "class"
    );
    let mut rows = Vec::new();
    for leaf in &sim.leaves {
        let (x, y) = leaf.point();
        let cls = match class.class_of(&leaf.history) {
            Some(Sign::Plus) => "+",
            Some(Sign::Minus) => "-",
            None => "0",
        };
        let h = leaf.history.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(".");
        println!(
            "{:<16} {:>20.17} {:>20.17} {:>20.17} {:>20.17} {:>20} {:>20} {:>6}",
            h,
            x,
            y,
            leaf.stats.p,
            leaf.stats.q,
            opt(leaf.stats.c_plus),
            opt(leaf.stats.c_minus),
            cls
        );
        rows.push(serde_json::json!({
            "history": leaf.history,
            "x": x,
            "y": y,
            "p": leaf.stats.p,
            "q": leaf.stats.q,
            "c_plus": leaf.stats.c_plus,
            "c_minus": leaf.stats.c_minus,
            "class": cls,
        }));
    }
    println!("pruned branches = {}", sim.pruned);
    println!("efficiency = {:.17} (meets Q: {})", audit.efficiency, audit.meets_efficiency);
    for c in &audit.checks {
        println!("audit {:<14} lhs = {:>24.17e}  rhs = {:>24.17e}  {}", c.name, c.lhs, c.rhs, c.status);
    }
    println!("Ebar = {:.17}", e.ebar);
    println!("bound E(1-Q) - Delta_low = {:.17}", bound);
    if let Some(pc) = &pc {
        let ch = channel_of_pc(pc)?;
        println!("Kbar = {:.17}", kbar(&ch, &m, p.q)?.kbar);
    }
    write_out(
        out,
        &serde_json::to_string_pretty(&serde_json::json!({
            "leaves": rows,
            "audit": audit,
            "ebar": e.ebar,
            "bound": bound,
        }))?,
    )?;

    let mut failed: Vec<String> = audit
        .checks
        .iter()
        .filter(|c| c.status == CheckStatus::Fail)
        .map(|c| c.name.to_string())
        .collect();
    if !verify_zigzag(&sim.leaves) {
        failed.push("zigzag".into());
    }
    if sim.completeness_defect() > 1e-10 {
        failed.push("completeness".into());
    }
    if audit.meets_efficiency && e.ebar > bound + 1e-9 {
        failed.push("global_bound".into());
    }
    finish(failed)
}

fn cmd_gap(p: Params, grid: usize, tol: f64) -> Result<()> {
    let g = delta_low(p.q, p.r, p.alpha)?;
    let grid_min = delta_min_grid(p.q, p.r, p.alpha, g.star.mu_star, grid)?;
    println!("Q = {}  r = {}  alpha = {}", p.q, p.r, p.alpha);
    println!("x* = {:.17}", g.star.x_star);
    println!("y* = {:.17}", g.star.y_star);
    println!("mu* = {:.17}", g.star.mu_star);
    println!("Delta_min (analytic) = {:.17e}", g.delta_min);
    println!("Delta_min (grid {grid}) = {:.17e}", grid_min);
    println!("Delta_low = {:.17e}", g.delta_low);
    let mut failed = Vec::new();
    if (g.delta_min - grid_min).abs() > tol {
        failed.push("grid_agreement".to_string());
    }
    if !(g.delta_low > 0.0) {
        failed.push("positivity".to_string());
    }
    finish(failed)
}

fn cmd_sweep(qs: Option<Vec<f64>>, out: Option<&Path>) -> Result<()> {
    let qs = qs.unwrap_or_else(default_q_values);
    let rows = sweep_gap(&qs)?;
    let csv = sweep_to_csv(&rows);
    print!("{csv}");
    write_out(out, &csv)?;
    let failed = rows
        .iter()
        .filter(|r| !(r.delta_low > 0.0))
        .map(|r| format!("positivity@{}", r.q))
        .collect();
    finish(failed)
}

fn cmd_classical(q: f64, tol: f64) -> Result<()> {
    let m = measure(q)?;
    let agent = build_classical_separable(q)?;
    let ch = agent.channel()?;
    let stats = channel_stats(&ch);
    let rep = kbar(&ch, &m, q)?;
    println!("Q = {q}");
    println!("{:>3} {:>20} {:>20} {:>20} {:>20} {:>20} {:>20}", "k", "w", "x", "y", "p_cl", "q_cl", "lambda");
    for (k, (&(w, x, y), s)) in agent.elements().iter().zip(&stats).enumerate() {
        println!(
            "{:>3} {:>20.17} {:>20.17} {:>20.17} {:>20.17} {:>20.17} {:>20}",
            k + 1,
            w,
            x,
            y,
            s.p_cl,
            s.q_cl,
            opt(s.lambda_cl)
        );
    }
    println!("Kbar = {:.17}", rep.kbar);
    println!("efficiency = {:.17}", rep.efficiency);
    let mut failed = Vec::new();
    if (rep.kbar - m.eval(1.0 - q)).abs() > tol {
        failed.push("kbar".to_string());
    }
    if (rep.efficiency - q).abs() > tol {
        failed.push("efficiency".to_string());
    }
    if !is_separable_channel(&ch) {
        failed.push("product_form".to_string());
    }
    finish(failed)
}

fn cmd_compile_pc(input: Option<&Path>, seed: Option<u64>, q: f64, out: Option<&Path>, tol: f64) -> Result<()> {
    let m = measure(q)?;
    let pc = match (input, seed) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            PcProtocol::from_json(&text, DEFAULT_MAX_DEPTH)?
        }
        (None, Some(s)) => random_pc_protocol(s, 4, 3)?,
        (None, None) => bail!("one of --in or --seed is required"),
    };
    let ch = channel_of_pc(&pc)?;
    let stats = channel_stats(&ch);
    let proto = compile_pc_to_locc(&pc)?;
    let sim = simulate(&proto)?;
    write_out(out, &proto.to_json())?;

    let mut worst_p: f64 = 0.0;
    let mut worst_q: f64 = 0.0;
    let mut worst_state: f64 = 0.0;
    let mut missing = 0usize;
    for leaf in &sim.leaves {
        let Some(k) = ch.find(&leaf.history) else {
            missing += 1;
            continue;
        };
        worst_p = worst_p.max((leaf.stats.p - stats[k].p_cl).abs());
        worst_q = worst_q.max((leaf.stats.q - stats[k].q_cl).abs());
        if let (Some(l), Some(c)) = (stats[k].lambda_cl, leaf.stats.c_plus) {
            worst_state = worst_state.max((c - 2.0 * (l * (1.0 - l)).sqrt()).abs());
        }
    }
    let e = ebar_locc(&sim, &m).ebar;
    let k = kbar(&ch, &m, q)?;
    println!("outcomes = {}  leaves = {}  unmatched = {}", ch.len(), sim.leaves.len(), missing);
    println!("max |p - p_cl| = {worst_p:.3e}");
    println!("max |q - q_cl| = {worst_q:.3e}");
    println!("max |C - 2 sqrt(lambda(1-lambda))| = {worst_state:.3e}");
    println!("Ebar = {e:.17}");
    println!("Kbar = {:.17}", k.kbar);
    let mut failed = Vec::new();
    if missing > 0 {
        failed.push("outcome_match".to_string());
    }
    if worst_p > tol {
        failed.push("p".to_string());
    }
    if worst_q > tol {
        failed.push("q".to_string());
    }
    if worst_state > tol {
        failed.push("state".to_string());
    }
    if (e - k.kbar).abs() > tol {
        failed.push("ebar_kbar".to_string());
    }
    finish(failed)
}
