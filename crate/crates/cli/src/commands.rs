//! One function per subcommand. Each computes everything before any file is
//! written, so a failed run leaves no output behind.

use std::path::Path;

use barrier_mlmc::extremes::{empirical_extreme_cdf, extreme_cdf, extreme_density, QuadratureConfig};
use barrier_mlmc::models::{validate_theory, ModelSpec};
use barrier_mlmc::pricing::{mlmc_price, Executor, LevelStats, Problem};
use barrier_mlmc::studies::{complexity, fit_slope, level_study, strong_convergence};
use serde_json::{json, Value};

use crate::config::{RunConfig, ValidationMode};
use crate::output::{num, write_atomic, Csv};
use crate::{CliError, Command};

/// Moment order checked by the theory validation.
const MOMENT_ORDER: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct Report {
    /// `(file name, contents)`, the JSON report first.
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Vec<String>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        for (name, bytes) in &self.files {
            write_atomic(dir, name, bytes)?;
        }
        Ok(())
    }

    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    hash: String,
    seed: u64,
    exec: Executor,
    warnings: Vec<String>,
}

impl Ctx<'_> {
    fn csv(&self, header: &[&str]) -> Csv {
        Csv::new(&self.hash, self.seed, header)
    }

    /// Hard well-posedness always blocks; theory warnings block in strict mode.
    fn check_theory(&mut self, spec: &ModelSpec<f64>) -> Result<(), CliError> {
        let rep = validate_theory(spec, MOMENT_ORDER);
        if !rep.well_posed {
            return Err(CliError::Config(rep.messages.join("; ")));
        }
        if !rep.theory_warnings.is_empty() && self.cfg.validation.mode == ValidationMode::Strict {
            return Err(CliError::Config(format!(
                "strict validation refused the model: {}",
                rep.theory_warnings.join("; ")
            )));
        }
        self.warnings.extend(rep.theory_warnings);
        Ok(())
    }

    fn report(&self, command: Command, body: Value) -> Vec<u8> {
        let mut v = json!({
            "command": command.name(),
            "config_hash": self.hash,
            "seed": self.seed,
            "warnings": self.warnings,
        });
        if let (Value::Object(m), Value::Object(b)) = (&mut v, body) {
            m.extend(b);
        }
        let mut bytes = serde_json::to_vec_pretty(&v).expect("report serializes");
        bytes.push(b'\n');
        bytes
    }
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<Report, CliError> {
    let exec = Executor::new(cfg.workers())?;
    let mut ctx = Ctx { cfg, hash: cfg.hash(), seed: cfg.seed(), exec, warnings: Vec::new() };
    let (files, summary) = match command {
        Command::Price => price(&mut ctx)?,
        Command::Complexity => complexity_cmd(&mut ctx)?,
        Command::Convergence => convergence(&mut ctx)?,
        Command::Density => density(&mut ctx)?,
        Command::Levels => levels(&mut ctx)?,
    };
    Ok(Report { files, summary, warnings: ctx.warnings })
}

type Outputs = (Vec<(String, Vec<u8>)>, Vec<String>);

fn problem(ctx: &mut Ctx) -> Result<Problem<f64>, CliError> {
    let spec = ctx.cfg.model()?;
    let contract = ctx.cfg.contract()?;
    ctx.check_theory(&spec)?;
    Ok(Problem::new(&spec, &contract)?)
}

const LEVEL_HEADER: [&str; 7] = ["level", "n_samples", "mean_diff", "var_diff", "mean_fine", "var_fine", "cost"];

fn level_table(ctx: &Ctx, levels: &[LevelStats]) -> Vec<u8> {
    let mut csv = ctx.csv(&LEVEL_HEADER);
    for l in levels {
        csv.row(&[
            l.level.to_string(),
            l.n_samples.to_string(),
            num(l.mean_diff),
            num(l.var_diff),
            num(l.mean_fine),
            num(l.var_fine),
            num(l.cost_units),
        ]);
    }
    csv.into_bytes()
}

fn level_json(levels: &[LevelStats]) -> Value {
    levels
        .iter()
        .map(|l| {
            json!({
                "level": l.level,
                "n_samples": l.n_samples,
                "mean_diff": l.mean_diff,
                "var_diff": l.var_diff,
                "mean_fine": l.mean_fine,
                "var_fine": l.var_fine,
                "mean_coarse": l.mean_coarse,
                "var_coarse": l.var_coarse,
                "cost": l.cost_units,
                "positivity_failures": l.positivity_failures,
            })
        })
        .collect()
}

fn price(ctx: &mut Ctx) -> Result<Outputs, CliError> {
    let p = problem(ctx)?;
    let mcfg = ctx.cfg.mlmc_config()?;
    let eps = ctx.cfg.mlmc()?.eps.clone();
    let mut files = Vec::new();
    let mut results = Vec::new();
    let mut summary = Vec::new();
    for e in eps {
        let r = mlmc_price(&p, e, &mcfg, &ctx.exec)?;
        summary.push(format!(
            "eps={e:e} price={:.6} bias={:.3e} stat_error={:.3e} L={} cost={:.4e}",
            r.price,
            r.bias_estimate,
            r.statistical_error_estimate,
            r.finest_level(),
            r.total_cost_units
        ));
        files.push((format!("price_levels_eps{e:e}.csv"), level_table(ctx, &r.levels)));
        results.push(json!({
            "epsilon": e,
            "price": r.price,
            "bias_estimate": r.bias_estimate,
            "statistical_error_estimate": r.statistical_error_estimate,
            "total_cost": r.total_cost_units,
            "finest_level": r.finest_level(),
            "levels": level_json(&r.levels),
        }));
    }
    files.insert(0, ("price.json".into(), ctx.report(Command::Price, json!({ "results": results }))));
    Ok((files, summary))
}

fn complexity_cmd(ctx: &mut Ctx) -> Result<Outputs, CliError> {
    let p = problem(ctx)?;
    let mcfg = ctx.cfg.mlmc_config()?;
    let eps = ctx.cfg.mlmc()?.eps.clone();
    let settings = ctx.cfg.complexity_settings()?;
    let (rows, runs) = complexity(&p, &eps, &mcfg, &settings, &ctx.exec)?;

    let mut table = ctx.csv(&["eps", "price", "mlmc_cost", "mc_cost", "saving"]);
    let mut costs = ctx.csv(&["eps", "eps2_mlmc_cost", "eps2_mc_cost"]);
    let mut summary = Vec::new();
    for r in &rows {
        table.row(&[
            num(r.epsilon),
            r.price.map(num).unwrap_or_default(),
            num(r.mlmc_cost),
            num(r.mc_cost),
            num(r.saving),
        ]);
        let e2 = r.epsilon * r.epsilon;
        costs.row(&[num(r.epsilon), num(e2 * r.mlmc_cost), num(e2 * r.mc_cost)]);
        summary.push(format!(
            "eps={:e} price={} mlmc_cost={:.4e} mc_cost={:.4e} saving={:.2}{}",
            r.epsilon,
            r.price.map_or("-".into(), |p| format!("{p:.6}")),
            r.mlmc_cost,
            r.mc_cost,
            r.saving,
            if r.predicted { " (predicted)" } else { "" }
        ));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.epsilon.ln()).collect();
    let mlmc_slope = fit_slope(&xs, &rows.iter().map(|r| r.mlmc_cost.ln()).collect::<Vec<_>>());
    let mc_slope = fit_slope(&xs, &rows.iter().map(|r| r.mc_cost.ln()).collect::<Vec<_>>());
    if rows.len() > 1 {
        summary.push(format!("cost slopes: mlmc={mlmc_slope:.3} mc={mc_slope:.3}"));
    }

    // level structure of the smallest-eps run that was actually performed
    let mut shape = ctx.csv(&["level", "log2_var_diff", "log2_abs_mean_diff", "log2_var_fine", "log2_abs_mean_fine"]);
    if let Some(r) = runs.last() {
        for l in &r.levels {
            shape.row(&[
                l.level.to_string(),
                num(l.var_diff.log2()),
                num(l.mean_diff.abs().log2()),
                num(l.var_fine.log2()),
                num(l.mean_fine.abs().log2()),
            ]);
        }
    }
    let body = json!({
        "rows": rows,
        "mlmc_cost_slope": (rows.len() > 1).then_some(mlmc_slope),
        "mc_cost_slope": (rows.len() > 1).then_some(mc_slope),
        "runs": runs.iter().map(|r| json!({
            "epsilon": r.epsilon_target,
            "price": r.price,
            "bias_estimate": r.bias_estimate,
            "statistical_error_estimate": r.statistical_error_estimate,
            "levels": level_json(&r.levels),
        })).collect::<Vec<_>>(),
    });
    let files = vec![
        ("complexity.json".into(), ctx.report(Command::Complexity, body)),
        ("complexity.csv".into(), table.into_bytes()),
        ("complexity_levels.csv".into(), shape.into_bytes()),
        ("complexity_cost.csv".into(), costs.into_bytes()),
    ];
    Ok((files, summary))
}

fn convergence(ctx: &mut Ctx) -> Result<Outputs, CliError> {
    let spec = ctx.cfg.model()?;
    let sec = ctx.cfg.convergence.clone().ok_or_else(|| CliError::Config("missing section [convergence]".into()))?;
    if sec.levels.is_empty() || sec.levels.iter().any(|&l| l + 2 > sec.reference) {
        return Err(CliError::Config("[convergence] reference must exceed every level by at least 2".into()));
    }
    if sec.n_paths < 2 || !(sec.maturity > 0.0) {
        return Err(CliError::Config("[convergence] need n_paths >= 2 and maturity > 0".into()));
    }
    ctx.check_theory(&spec)?;
    let dyn_ = spec.dynamics()?;
    let y0 = dyn_.transform(spec.x0());
    let study = strong_convergence(
        &dyn_,
        spec.tag(),
        y0,
        sec.maturity,
        &sec.levels,
        sec.reference,
        sec.n_paths,
        ctx.seed,
        &ctx.exec,
    )?;
    let mut csv = ctx.csv(&["level", "sup_error"]);
    for e in &study.errors {
        csv.row(&[e.level.to_string(), num(e.sup_error)]);
    }
    let summary =
        vec![format!("strong order {:.4} over levels {:?} (reference {})", study.order, sec.levels, sec.reference)];
    let files = vec![
        (
            "convergence.json".into(),
            ctx.report(Command::Convergence, json!({ "study": study, "reference": sec.reference })),
        ),
        ("convergence.csv".into(), csv.into_bytes()),
    ];
    Ok((files, summary))
}

fn density(ctx: &mut Ctx) -> Result<Outputs, CliError> {
    let model = ctx.cfg.extreme_model()?;
    let sec = ctx.cfg.density.clone().ok_or_else(|| CliError::Config("missing section [density]".into()))?;
    let zs = match (&sec.z, sec.z_range) {
        (Some(z), _) => z.clone(),
        (None, Some((a, b, n))) if n >= 2 => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
        (None, Some((a, _, 1))) => vec![a],
        _ => return Err(CliError::Config("[density] needs z or z_range".into())),
    };
    if zs.is_empty() || !(sec.t > 0.0) {
        return Err(CliError::Config("[density] need a nonempty grid and t > 0".into()));
    }
    let mut quad = QuadratureConfig::default();
    if let Some(tol) = sec.abs_tol {
        quad.abs_tol = tol;
    }
    let mut dens = Vec::with_capacity(zs.len());
    for &z in &zs {
        let d = extreme_density(sec.target, model, z, sec.t, &quad)?;
        let c = extreme_cdf(sec.target, model, z, sec.t, &quad)?;
        dens.push((d, c));
    }
    let mc = if sec.mc_paths > 0 {
        ctx.check_theory(&ctx.cfg.model()?)?;
        Some(empirical_extreme_cdf(sec.target, model, &zs, sec.t, sec.mc_level, sec.mc_paths, ctx.seed, &ctx.exec)?)
    } else {
        None
    };
    let mut header = vec!["z", "density", "cdf"];
    if mc.is_some() {
        header.extend(["mc_cdf", "mc_se"]);
    }
    let mut csv = ctx.csv(&header);
    let mut worst: f64 = 0.0;
    for (i, &z) in zs.iter().enumerate() {
        let mut row = vec![num(z), num(dens[i].0), num(dens[i].1)];
        if let Some(m) = &mc {
            row.extend([num(m[i].0), num(m[i].1)]);
            worst = worst.max((dens[i].1 - m[i].0).abs() / m[i].1.max(f64::MIN_POSITIVE));
        }
        csv.row(&row);
    }
    let mut summary = vec![format!("{} grid points for {:?} at t = {}", zs.len(), sec.target, sec.t)];
    if mc.is_some() {
        summary.push(format!("largest |cdf - mc_cdf| = {worst:.2} standard errors"));
    }
    let body = json!({
        "target": sec.target,
        "t": sec.t,
        "abs_tol": quad.abs_tol,
        "mc_paths": sec.mc_paths,
        "mc_level": sec.mc_level,
        "max_mc_deviation_se": mc.as_ref().map(|_| worst),
    });
    let files =
        vec![("density.json".into(), ctx.report(Command::Density, body)), ("density.csv".into(), csv.into_bytes())];
    Ok((files, summary))
}

fn levels(ctx: &mut Ctx) -> Result<Outputs, CliError> {
    let p = problem(ctx)?;
    let sec = ctx.cfg.levels.clone().ok_or_else(|| CliError::Config("missing section [levels]".into()))?;
    if sec.levels.is_empty() || sec.n < 2 {
        return Err(CliError::Config("[levels] need a nonempty level list and n >= 2".into()));
    }
    let stats = level_study(&p, sec.levels.iter().copied(), sec.n, ctx.seed, &ctx.exec)?;
    let upper: Vec<&LevelStats> = stats.iter().filter(|l| l.level >= 1).collect();
    let xs: Vec<f64> = upper.iter().map(|l| l.level as f64).collect();
    let (var_slope, mean_slope) = if upper.len() >= 2 {
        let v: Vec<f64> = upper.iter().map(|l| l.var_diff.log2()).collect();
        let m: Vec<f64> = upper.iter().map(|l| l.mean_diff.abs().log2()).collect();
        (Some(fit_slope(&xs, &v)), Some(fit_slope(&xs, &m)))
    } else {
        (None, None)
    };
    let mut summary: Vec<String> = stats
        .iter()
        .map(|l| format!("level {} mean_diff={:.4e} var_diff={:.4e}", l.level, l.mean_diff, l.var_diff))
        .collect();
    if let (Some(v), Some(m)) = (var_slope, mean_slope) {
        summary.push(format!("slopes over levels >= 1: log2 var_diff {v:.3}, log2 |mean_diff| {m:.3}"));
    }
    let body = json!({
        "n": sec.n,
        "levels": level_json(&stats),
        "log2_var_diff_slope": var_slope,
        "log2_abs_mean_diff_slope": mean_slope,
    });
    let files = vec![
        ("levels.json".into(), ctx.report(Command::Levels, body)),
        ("levels.csv".into(), level_table(ctx, &stats)),
    ];
    Ok((files, summary))
}
