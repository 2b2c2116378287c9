use std::path::Path;

use clap::Args;
use impact_melnikov::flow;
use impact_melnikov::impact_map;
use impact_melnikov::numeric::format_float;
use impact_melnikov::melnikov::{self, HeteroclinicMelnikov, SubharmonicMelnikov};
use impact_melnikov::orbits::{
    self, Branch, ContinuationOptions, ExistenceOptions, HeteroclinicMode, OrbitSolution, OrbitSpec, Scaling,
};
use impact_melnikov::{PhaseState, TwoZoneSystem};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::Resolved;
use crate::output::{self, cells, Table};
use crate::Failure;

type Outcome = Result<(), Failure>;

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

fn check_pair(n: u32, m: u32) -> Outcome {
    OrbitSpec::new(n, m, 0.0, 0.0).map(|_| ()).map_err(|e| Failure::config(e.to_string()))
}

fn trajectory_table(sys: &TwoZoneSystem, y0: f64, t0: f64, span: f64, provenance: &serde_json::Value, run: &Resolved) -> Result<Table, Failure> {
    let traj = flow::simulate(sys, PhaseState::on_switching_line(y0, t0), t0 + span, &run.flow())?;
    Ok(Table::with_body(provenance, &traj.to_csv()))
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 0.5)]
    pub y0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub x0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,
    /// End time; defaults to `t0 + periods * T`.
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    pub periods: f64,
}

pub fn simulate(run: &Resolved, args: &SimulateArgs) -> Outcome {
    let sys = run.build();
    let t_end = args.t_end.unwrap_or(args.t0 + args.periods * sys.period());
    let prov = output::provenance("simulate", args, run);
    let traj = flow::simulate(&sys, PhaseState::new(args.x0, args.y0, args.t0), t_end, &run.flow())?;
    let path = Table::with_body(&prov, &traj.to_csv()).write(&run.output_dir, "trajectory.csv")?;
    announce(&path);
    println!("{} samples, {} impacts", traj.samples.len(), traj.impacts.impacts());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct PeriodArgs {
    /// Velocities at which to evaluate alpha.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub y: Vec<f64>,
    /// Periods to invert.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub p: Vec<f64>,
    /// Print CSV instead of text.
    #[arg(long)]
    pub csv: bool,
}

pub fn period(run: &Resolved, args: &PeriodArgs) -> Outcome {
    if args.y.is_empty() && args.p.is_empty() {
        return Err(Failure::config("period needs --y or --p"));
    }
    let sys = run.build();
    let mut rows = Vec::new();
    for &y in &args.y {
        rows.push(("alpha", y, impact_map::alpha(&sys, y)?));
    }
    for &p in &args.p {
        rows.push(("alpha_inverse", p, impact_map::alpha_inverse(&sys, p)?));
    }
    if args.csv {
        let mut table = Table::new(&output::provenance("period", args, run), &["quantity", "input", "value"]);
        for (q, input, value) in rows {
            table.row(&[q.to_string(), format_float(input), format_float(value)]);
        }
        print!("{}", table.as_str());
    } else {
        for (q, input, value) in rows {
            println!("{q}({input}) = {value}");
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct MelnikovArgs {
    #[arg(long, default_value_t = 5)]
    pub n: u32,
    #[arg(long, default_value_t = 1)]
    pub m: u32,
    #[arg(long, default_value_t = melnikov::DEFAULT_SAMPLES)]
    pub samples: usize,
    /// Heteroclinic function instead of the subharmonic one.
    #[arg(long)]
    pub heteroclinic: bool,
}

pub fn melnikov(run: &Resolved, args: &MelnikovArgs) -> Outcome {
    if args.samples < 4 {
        return Err(Failure::config("samples must be at least 4"));
    }
    let sys = run.build();
    let opts = run.flow();
    let (profile, rho) = if args.heteroclinic {
        let het = HeteroclinicMelnikov::new(&sys, &opts)?;
        let profile = het.profile(&melnikov::uniform_grid(het.period(), args.samples))?;
        (profile, orbits::heteroclinic_rho(&sys, &opts).ok())
    } else {
        check_pair(args.n, args.m)?;
        let mel = SubharmonicMelnikov::new(&sys, args.n, args.m, &opts)?;
        let profile = mel.profile(&melnikov::uniform_grid(mel.period(), args.samples))?;
        (profile, orbits::rho(&sys, args.n, args.m, &opts).ok())
    };
    let prov = output::provenance("melnikov", args, run);
    let mut table = Table::new(&prov, &["t0", "M"]);
    for &(t, v) in &profile.samples {
        table.row(&cells([t, v]));
    }
    announce(&table.write(&run.output_dir, "melnikov.csv")?);
    let mut zeros = Table::new(&prov, &["t0", "slope", "simple"]);
    for z in &profile.zeros {
        zeros.row(&[format_float(z.t0), format_float(z.slope), z.simple.to_string()]);
    }
    announce(&zeros.write(&run.output_dir, "melnikov_zeros.csv")?);
    if profile.identically_zero {
        println!("M vanishes identically; a second-order analysis would be required");
    } else {
        println!("{} zeros, max |M| = {}", profile.zeros.len(), profile.max_abs());
    }
    if let Some(rho) = rho {
        println!("dissipative threshold rho = {rho}");
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct FindOrbitArgs {
    #[arg(long, default_value_t = 5)]
    pub n: u32,
    #[arg(long, default_value_t = 1)]
    pub m: u32,
    /// Restitution-to-forcing ratio; selects the dissipative problem.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Scale parameter of the dissipative problem.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub eps_tilde: f64,
    /// Which Melnikov zero seeds the search.
    #[arg(long, default_value_t = 1)]
    pub seed_zero: usize,
    #[arg(long)]
    pub y0: Option<f64>,
    #[arg(long)]
    pub t0: Option<f64>,
    /// Continue from this eps (or delta) up to the requested one before the final solve.
    #[arg(long)]
    pub continue_from: Option<f64>,
}

fn pick<T: Copy>(items: &[T], index: usize, what: &str) -> Result<T, Failure> {
    if index == 0 || index > items.len() {
        return Err(Failure::config(format!("{what} {index} is not available ({} found)", items.len())));
    }
    Ok(items[index - 1])
}

pub fn find_orbit(run: &Resolved, args: &FindOrbitArgs) -> Outcome {
    check_pair(args.n, args.m)?;
    let base = run.build();
    let opts = run.flow();
    let newton = run.newton();
    let free = base.with_restitution(1.0)?.unperturbed();
    let cont = run.continuation();
    let (sys, seed, mode, branch): (TwoZoneSystem, (f64, f64), _, Option<Branch>) = match args.ratio {
        Some(ratio) => {
            let delta = args.delta.ok_or_else(|| Failure::config("--ratio needs --delta"))?;
            let scaling = Scaling::from_ratio(args.eps_tilde, ratio);
            let seeds = orbits::dissipative_seed(&free, args.n, args.m, ratio, &opts)?;
            let s = pick(&seeds, args.seed_zero, "seed")?;
            let seed = (args.y0.unwrap_or(s.y0), args.t0.unwrap_or(s.t0));
            let branch = match args.continue_from {
                Some(d0) => {
                    let spec = OrbitSpec::new(args.n, args.m, seed.0, seed.1)?;
                    Some(orbits::continue_in_delta(&free, &spec, scaling, d0, Some(delta), &cont)?)
                }
                None => None,
            };
            let mode = json!({ "mode": "dissipative", "ratio": ratio, "delta": delta, "eps_tilde": args.eps_tilde });
            (scaling.system(&free, delta)?, seed, mode, branch)
        }
        None => {
            let mel = SubharmonicMelnikov::new(&free, args.n, args.m, &opts)?;
            let seed = match (args.y0, args.t0) {
                (Some(y0), Some(t0)) => (y0, t0),
                (y0, t0) => {
                    let profile = mel.profile(&melnikov::uniform_grid(mel.period(), melnikov::DEFAULT_SAMPLES))?;
                    if profile.identically_zero {
                        return Err(impact_melnikov::Error::DegenerateMelnikov.into());
                    }
                    let zeros: Vec<_> = profile.simple_zeros().copied().collect();
                    let z = pick(&zeros, args.seed_zero, "Melnikov zero")?;
                    (y0.unwrap_or(mel.y0()), t0.unwrap_or(z.t0))
                }
            };
            let branch = match args.continue_from {
                Some(e0) => {
                    let spec = OrbitSpec::new(args.n, args.m, seed.0, seed.1)?;
                    Some(orbits::continue_in_epsilon(&base, &spec, e0, base.epsilon(), &cont)?)
                }
                None => None,
            };
            (base.clone(), seed, json!({ "mode": "conservative" }), branch)
        }
    };
    let start = match &branch {
        Some(b) if !b.reached_target => {
            return Err(impact_melnikov::Error::NoConvergence { iterations: b.points.len(), residual: b.last().residual }.into())
        }
        Some(b) => (b.last().y0, b.last().t0),
        None => seed,
    };
    let sol = orbits::find_periodic(&sys, &OrbitSpec::new(args.n, args.m, start.0, start.1)?, &newton)?;
    write_orbit(run, "find-orbit", args, &sys, &sol, json!({ "seed": seed, "problem": mode }), "orbit")?;
    println!("y0 = {}, t0 = {}, residual = {:.3e}", sol.y0, sol.t0, sol.residual_norm);
    Ok(())
}

fn write_orbit(
    run: &Resolved,
    command: &str,
    params: &impl Serialize,
    sys: &TwoZoneSystem,
    sol: &OrbitSolution,
    extra: serde_json::Value,
    stem: &str,
) -> Outcome {
    let prov = output::provenance(command, params, run);
    let span = sol.n as f64 * sys.period();
    let table = trajectory_table(sys, sol.y0, sol.t0, span, &prov, run)?;
    announce(&table.write(&run.output_dir, &format!("{stem}.csv"))?);
    let body = json!({ "solution": sol, "solved_system": sys.to_config(), "details": extra });
    announce(&output::write_json(&run.output_dir, &format!("{stem}.json"), &prov, body)?);
    Ok(())
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct ExistenceArgs {
    #[arg(long, default_value_t = 5)]
    pub n: u32,
    #[arg(long, default_value_t = 1)]
    pub m: u32,
    #[arg(long, num_args = 1.., value_delimiter = ',', default_values_t = [0.0906, 0.0908, 0.091, 0.0912, 0.0913, 0.0914])]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub eps_tilde: f64,
    #[arg(long, default_value_t = 1)]
    pub seed_zero: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub delta_start: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta_max: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub initial_step: f64,
    #[arg(long, default_value_t = 0.02)]
    pub max_step: f64,
}

fn existence_table(run: &Resolved, sys: &TwoZoneSystem, args: &ExistenceArgs, command: &str, stem: &str) -> Outcome {
    check_pair(args.n, args.m)?;
    if args.seed_zero == 0 {
        return Err(Failure::config("seed-zero counts from 1"));
    }
    let opts = ExistenceOptions {
        eps_tilde: args.eps_tilde,
        seed_index: args.seed_zero - 1,
        delta_start: args.delta_start,
        delta_max: Some(args.delta_max),
        continuation: ContinuationOptions { initial_step: args.initial_step, max_step: args.max_step, ..run.continuation() },
    };
    let curve = orbits::existence_curve(sys, args.n, args.m, &args.ratios, &opts)?;
    let closed = sys.is_linear_block() && args.m == 1;
    let prov = output::provenance(command, args, run);
    let mut table = Table::new(&prov, &["ratio", "seed_t0", "delta_end", "r", "epsilon", "folded", "closed_form_epsilon"]);
    for r in &curve.runs {
        let exact = if closed {
            format_float(orbits::linear_block_min_forcing(args.n, sys.omega(), 1.0 - r.r).abs())
        } else {
            String::new()
        };
        let mut row = cells([r.ratio, r.seed_t0, r.delta_end, r.r, r.epsilon]);
        row.push(r.folded.to_string());
        row.push(exact);
        table.row(&row);
    }
    announce(&table.write(&run.output_dir, &format!("{stem}.csv"))?);
    announce(&output::write_json(&run.output_dir, &format!("{stem}.json"), &prov, output::to_value(&curve))?);
    println!("rho = {}, {} of {} runs folded", curve.rho, curve.boundary.len() - 1, args.ratios.len());
    Ok(())
}

pub fn existence_curve(run: &Resolved, args: &ExistenceArgs) -> Outcome {
    let sys = run.build().with_restitution(1.0)?.unperturbed();
    existence_table(run, &sys, args, "existence-curve", "existence_curve")
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct HeteroclinicArgs {
    /// Restitution-to-forcing ratio; selects the scaled dissipative problem.
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub eps_tilde: f64,
    #[arg(long, default_value_t = orbits::SPLITTING_SAMPLES)]
    pub samples: usize,
}

pub fn heteroclinic(run: &Resolved, args: &HeteroclinicArgs) -> Outcome {
    let base = run.build();
    let opts = run.flow();
    let (sys, mode) = match args.ratio {
        Some(ratio) => {
            let delta = args.delta.ok_or_else(|| Failure::config("--ratio needs --delta"))?;
            let scaling = Scaling::from_ratio(args.eps_tilde, ratio);
            let free = base.with_restitution(1.0)?.unperturbed();
            (scaling.system(&free, delta)?, HeteroclinicMode::Scaled { eps_tilde: args.eps_tilde, r_tilde: scaling.r_tilde, delta })
        }
        None => (base.clone(), HeteroclinicMode::Conservative),
    };
    let hits = orbits::find_heteroclinic(&sys, mode, &opts)?;
    let het = HeteroclinicMelnikov::new(&sys, &opts)?;
    let grid = melnikov::uniform_grid(sys.period(), args.samples.max(1));
    let deltas: Vec<f64> = grid.par_iter().map(|&t| orbits::delta_distance(&sys, t, &opts)).collect::<Result<_, _>>()?;
    let prov = output::provenance("heteroclinic", args, run);
    let mut table = Table::new(&prov, &["t0", "delta", "melnikov"]);
    for (&t, &d) in grid.iter().zip(&deltas) {
        table.row(&cells([t, d, het.value(t)]));
    }
    announce(&table.write(&run.output_dir, "heteroclinic.csv")?);
    let body = json!({ "mode": mode, "intersections": hits, "solved_system": sys.to_config() });
    announce(&output::write_json(&run.output_dir, "heteroclinic.json", &prov, body)?);
    for h in &hits {
        println!("t0 = {}, slope = {:.3e}, simple = {}", h.t0, h.slope, h.simple);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Figure {
    Fig6,
    Fig7,
    Fig8,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub figure: Figure,
}

pub fn reproduce(run: &Resolved, args: &ReproduceArgs) -> Outcome {
    let omega = 5.0;
    let free = TwoZoneSystem::linear_block(omega);
    let mut run = run.clone();
    run.system = free.to_config();
    let run = &run;
    match args.figure {
        Figure::Fig6 => fig6(run, args, &free),
        Figure::Fig7 => fig7(run, args, &free),
        Figure::Fig8 => {
            let ex = ExistenceArgs {
                n: 5,
                m: 1,
                ratios: vec![0.09, 0.0902, 0.0904, 0.0906, 0.0908, 0.091, 0.0911, 0.0912, 0.0913, 0.0914],
                eps_tilde: 1.0,
                seed_zero: 1,
                delta_start: 1e-3,
                delta_max: 1.0,
                initial_step: 1e-3,
                max_step: 0.02,
            };
            existence_table(run, &free, &ex, "reproduce fig8", "fig8_existence")?;
            let rho = orbits::rho(&free, 5, 1, &run.flow())?;
            let prov = output::provenance("reproduce fig8", args, run);
            let mut table = Table::new(&prov, &["one_minus_r", "epsilon_min", "tangent_epsilon"]);
            for i in 0..=60 {
                let big_r = 0.0005 * i as f64;
                table.row(&cells([big_r, orbits::linear_block_min_forcing(5, omega, big_r).abs(), big_r / rho]));
            }
            announce(&table.write(&run.output_dir, "fig8_closed_form.csv")?);
            Ok(())
        }
    }
}

fn fig6(run: &Resolved, args: &ReproduceArgs, free: &TwoZoneSystem) -> Outcome {
    let target = 1.6565e-2;
    let y0 = (std::f64::consts::PI / 2.0).tanh();
    let quarter = free.period() / 4.0;
    let cont = run.continuation();
    let sys = free.with_epsilon(target)?;
    for (k, t0) in [(1, quarter), (2, 3.0 * quarter)] {
        let spec = OrbitSpec::new(5, 1, y0, t0)?;
        let branch = orbits::continue_in_epsilon(free, &spec, 1e-3, target, &cont)?;
        if !branch.reached_target {
            return Err(impact_melnikov::Error::NoConvergence { iterations: branch.points.len(), residual: branch.last().residual }.into());
        }
        let last = branch.last();
        let sol = orbits::find_periodic(&sys, &OrbitSpec::new(5, 1, last.y0, last.t0)?, &run.newton())?;
        let extra = json!({ "seed": [y0, t0], "branch": branch });
        write_orbit(run, "reproduce fig6", args, &sys, &sol, extra, &format!("fig6_orbit_{k}"))?;
        println!("orbit {k}: y0 = {}, t0 = {}", sol.y0, sol.t0);
    }
    Ok(())
}

fn fig7(run: &Resolved, args: &ReproduceArgs, free: &TwoZoneSystem) -> Outcome {
    let ratio = 0.07;
    let scaling = Scaling::from_ratio(1.0, ratio);
    let seeds = orbits::dissipative_seed(free, 5, 1, ratio, &run.flow())?;
    let cont = ContinuationOptions { initial_step: 0.01, max_step: 0.1, ..run.continuation() };
    let branches: Vec<Branch> = seeds
        .par_iter()
        .map(|s| orbits::continue_in_delta(free, &OrbitSpec::new(5, 1, s.y0, s.t0)?, scaling, 0.01, Some(20.0), &cont))
        .collect::<Result<_, _>>()?;
    let prov = output::provenance("reproduce fig7", args, run);
    for (k, (seed, branch)) in seeds.iter().zip(&branches).enumerate() {
        let k = k + 1;
        let mut table = Table::new(&prov, &["delta", "epsilon", "r", "y0", "t0", "residual"]);
        for p in &branch.points {
            table.row(&cells([p.parameter, p.parameter, 1.0 - scaling.r_tilde * p.parameter, p.y0, p.t0, p.residual]));
        }
        announce(&table.write(&run.output_dir, &format!("fig7_branch_{k}.csv"))?);
        let last = branch.last();
        let sys = scaling.system(free, last.parameter)?;
        let traj = trajectory_table(&sys, last.y0, last.t0, 5.0 * sys.period(), &prov, run)?;
        announce(&traj.write(&run.output_dir, &format!("fig7_orbit_{k}.csv"))?);
        let body = json!({ "seed": seed, "folded": branch.folded, "last": last, "solved_system": sys.to_config() });
        announce(&output::write_json(&run.output_dir, &format!("fig7_orbit_{k}.json"), &prov, body)?);
        println!("branch {k}: last delta = {}, folded = {}", last.parameter, branch.folded);
    }
    Ok(())
}
