//! End-to-end acceptance checks for the linear rocking block at `ω = 5`.
//!
//! Runs without the libtest harness so every verdict line is printed.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use impact_melnikov::flow::{self, Direction, FlowOptions};
use impact_melnikov::impact_map::{self, SectionPoint};
use impact_melnikov::melnikov::{self, SubharmonicMelnikov};
use impact_melnikov::orbits::{self, ContinuationOptions, ExistenceOptions, HeteroclinicMode, NewtonOptions, OrbitSpec, Scaling};
use impact_melnikov::*;

const OMEGA: f64 = 5.0;

type Verdict = std::result::Result<(bool, String), String>;

fn block() -> TwoZoneSystem {
    TwoZoneSystem::linear_block(OMEGA)
}

fn resonant_velocity() -> f64 {
    let e = PI.exp();
    (e - 1.0) / (e + 1.0)
}

fn dissipative_threshold(omega: f64, y0: f64) -> f64 {
    2.0 / ((omega * omega + 1.0) * y0 * y0)
}

fn err(e: Error) -> String {
    e.to_string()
}

fn c1_period() -> Verdict {
    let sys = block();
    let mut worst: f64 = 0.0;
    for i in 2..=19 {
        let y = 0.05 * i as f64;
        let exact = 2.0 * ((1.0 + y) / (1.0 - y)).ln();
        worst = worst.max((impact_map::alpha(&sys, y).map_err(err)? - exact).abs());
    }
    Ok((worst < 1e-10, format!("max |alpha - 2 ln((1+y)/(1-y))| = {worst:.2e}")))
}

fn cos_forcing_profiles() -> std::result::Result<Vec<(u32, u32, melnikov::MelnikovProfile)>, String> {
    let sys = block();
    let opts = FlowOptions::precise();
    let mut out = Vec::new();
    for n in [3, 5, 7] {
        for m in [1, 2, 3] {
            if n == m {
                continue;
            }
            let mel = SubharmonicMelnikov::new(&sys, n, m, &opts).map_err(err)?;
            let profile = mel.profile(&melnikov::uniform_grid(mel.period(), 64)).map_err(err)?;
            out.push((n, m, profile));
        }
    }
    Ok(out)
}

fn c2_melnikov(profiles: &[(u32, u32, melnikov::MelnikovProfile)]) -> Verdict {
    let amp = 4.0 / (OMEGA * OMEGA + 1.0);
    let (mut m1_err, mut higher): (f64, f64) = (0.0, 0.0);
    for (_, m, p) in profiles {
        if *m == 1 {
            for &(t, v) in &p.samples {
                m1_err = m1_err.max((v + amp * (OMEGA * t).cos()).abs());
            }
        } else {
            higher = higher.max(p.max_abs());
        }
    }
    Ok((m1_err < 1e-8 && higher < 1e-8, format!("max m=1 error {m1_err:.2e}, max |M| for m=2,3 {higher:.2e}")))
}

fn c3_zero_mean(profiles: &[(u32, u32, melnikov::MelnikovProfile)]) -> Verdict {
    let worst = profiles.iter().map(|(_, _, p)| melnikov::mean_m(p).abs()).fold(0.0, f64::max);
    Ok((worst < 1e-8, format!("max |mean| over {} profiles = {worst:.2e}", profiles.len())))
}

fn c4_conservative() -> Verdict {
    let sys = block();
    let y0 = resonant_velocity();
    let period = sys.period();
    let target = 1.6565e-2;
    let newton = NewtonOptions::default();
    let cont = ContinuationOptions::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, t0) in [("T/4", period / 4.0), ("3T/4", 0.75 * period)] {
        let spec = OrbitSpec::new(5, 1, y0, t0).map_err(err)?;
        let start = orbits::find_periodic(&sys.with_epsilon(1e-3).map_err(err)?, &spec, &newton).map_err(err)?;
        let branch = orbits::continue_in_epsilon(&sys, &spec, 1e-3, target, &cont).map_err(err)?;
        let mut gap: f64 = 0.0;
        let mut impacts_ok = true;
        for p in &branch.points {
            let s = sys.with_epsilon(p.parameter).map_err(err)?;
            let (g, k) = orbits::verify_orbit(&s, 5, 1, p.y0, p.t0, &newton.flow).map_err(err)?;
            gap = gap.max(g);
            impacts_ok &= k == 2;
        }
        let alive = branch.reached_target && !branch.folded;
        ok &= start.residual_norm < 1e-10 && alive && gap < 1e-8 && impacts_ok;
        parts.push(format!(
            "{label}: residual {:.1e}, reached eps {:.4e} over {} points, max gap {gap:.1e}",
            start.residual_norm,
            branch.last().parameter,
            branch.points.len()
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn c5_threshold() -> Verdict {
    let sys = block();
    let opts = FlowOptions::precise();
    let rho = orbits::rho(&sys, 5, 1, &opts).map_err(err)?;
    let y0 = resonant_velocity();
    let mut worst: f64 = 0.0;
    for ratio in [0.01, 0.03, 0.05, 0.07, 0.09] {
        let seeds = orbits::dissipative_seed(&sys, 5, 1, ratio, &opts).map_err(err)?;
        let first = (-(OMEGA * OMEGA + 1.0) / 2.0 * y0 * y0 * ratio).acos() / OMEGA;
        let expected = [first, sys.period() - first];
        if seeds.len() != 2 {
            return Ok((false, format!("ratio {ratio}: {} seeds", seeds.len())));
        }
        for (s, e) in seeds.iter().zip(expected) {
            worst = worst.max((s.t0 - e).abs());
        }
    }
    let closed = dissipative_threshold(OMEGA, y0);
    Ok((
        (0.0910..=0.0918).contains(&rho) && worst < 1e-10,
        format!("rho = {rho:.10} (closed form {closed:.10}), max seed error {worst:.2e}"),
    ))
}

fn c6_dissipative() -> Verdict {
    let sys = block();
    let ratio = 0.07;
    let scaling = Scaling::from_ratio(1.0, ratio);
    let seeds = orbits::dissipative_seed(&sys, 5, 1, ratio, &FlowOptions::precise()).map_err(err)?;
    let cont = ContinuationOptions { initial_step: 0.01, max_step: 0.1, ..ContinuationOptions::default() };
    let branches: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|seed| {
                let (sys, cont) = (&sys, &cont);
                scope.spawn(move || {
                    let spec = OrbitSpec::new(5, 1, seed.y0, seed.t0)?;
                    orbits::continue_in_delta(sys, &spec, scaling, 0.01, Some(20.0), cont)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("continuation thread")).collect()
    });
    let ends = branches.into_iter().map(|b| b.map(|b| b.last().parameter)).collect::<Result<Vec<f64>>>().map_err(err)?;
    let ok = ends[0] >= 0.8 && ends[1] >= 3.0;
    Ok((
        ok,
        format!(
            "eps_tilde = 1: seed 1 sustained to delta {:.3}, seed 2 to delta {:.3} (fold ratio {:.2}, informational)",
            ends[0],
            ends[1],
            ends[1] / ends[0]
        ),
    ))
}

fn c7_existence() -> Verdict {
    let sys = block();
    let rho = orbits::rho(&sys, 5, 1, &FlowOptions::precise()).map_err(err)?;
    let h = 1e-6;
    let slope = orbits::linear_block_min_forcing(5, OMEGA, h) / h;
    let slope_err = (slope + 1.0 / rho).abs() * rho;
    let opts = ExistenceOptions {
        eps_tilde: 1.0,
        delta_start: 1e-3,
        delta_max: Some(1.0),
        continuation: ContinuationOptions { initial_step: 1e-3, max_step: 0.02, ..ContinuationOptions::default() },
        ..ExistenceOptions::default()
    };
    let ratios = [0.0906, 0.0908, 0.091, 0.0912, 0.0913, 0.0914];
    let curve = orbits::existence_curve(&sys, 5, 1, &ratios, &opts).map_err(err)?;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for &(r, eps) in &curve.boundary[1..] {
        let big_r = 1.0 - r;
        if big_r <= 0.02 {
            let exact = orbits::linear_block_min_forcing(5, OMEGA, big_r).abs();
            worst = worst.max((eps - exact).abs() / exact);
            count += 1;
        }
    }
    let ok = slope_err < 0.01 && count >= 3 && worst < 0.1;
    Ok((
        ok,
        format!("slope {slope:.6} vs -1/rho {:.6} (rel {slope_err:.1e}); {count} fold points, max rel error {worst:.1e}", -1.0 / rho),
    ))
}

fn c8_heteroclinic() -> Verdict {
    let eps = 1e-3;
    let sys = block().with_epsilon(eps).map_err(err)?;
    let opts = FlowOptions::precise();
    let period = sys.period();
    let mut worst: f64 = 0.0;
    for t in melnikov::uniform_grid(period, 64) {
        let scaled = orbits::delta_distance(&sys, t, &opts).map_err(err)? / eps;
        worst = worst.max((scaled + 2.0 * (OMEGA * t).cos() / (1.0 + OMEGA * OMEGA)).abs());
    }
    let zeros = orbits::find_heteroclinic(&sys, HeteroclinicMode::Conservative, &opts).map_err(err)?;
    let offset = zeros.iter().map(|z| (z.t0 - period / 4.0).abs()).fold(f64::INFINITY, f64::min);
    Ok((
        worst < 5e-3 && offset < 5e-3 * period,
        format!("max |Delta/eps - closed form| = {worst:.2e}, zero offset from T/4 = {offset:.2e}"),
    ))
}

fn c9_properties() -> Verdict {
    let precise = FlowOptions::precise();
    let mut notes = Vec::new();
    let mut ok = true;

    let mut balance: f64 = 0.0;
    for (y, t0, eps, r) in [(0.4, 0.1, 0.02, 0.95), (0.7, 0.9, 0.05, 0.9), (0.85, 1.2, 0.01, 1.0)] {
        let sys = block().with_epsilon(eps).map_err(err)?.with_restitution(r).map_err(err)?;
        let seq = flow::impact_sequence(&sys, y, t0, 6, &precise).map_err(err)?;
        let e = |v: f64| sys.h0(0.0, v);
        let lost: f64 = seq.records[1..].iter().map(|rec| e(rec.y) - e(rec.y) / (r * r)).sum();
        balance = balance.max((e(seq.last().y) - e(y) - eps * seq.total_integral() - lost).abs());
    }
    ok &= balance < 1e-7;
    notes.push(format!("energy balance {balance:.1e}"));

    let base = block();
    let tight = precise.with_tolerance(1e-13);
    let (y0, t0) = (0.7, 0.4);
    let g = melnikov::g_m(&base, y0, t0, 1, &tight).map_err(err)?;
    let mut rem = Vec::new();
    for eps in [1e-3, 5e-4, 2.5e-4] {
        let sys = base.with_epsilon(eps).map_err(err)?;
        let last = *flow::impact_sequence(&sys, y0, t0, 2, &tight).map_err(err)?.last();
        rem.push(sys.h0(0.0, last.y) - sys.h0(0.0, y0) - eps * g);
    }
    let order = rem.windows(2).map(|w| (w[0] / w[1]).abs().log2()).fold(f64::INFINITY, f64::min);
    ok &= order >= 1.9;
    notes.push(format!("remainder order {order:.3}"));

    let sys = base.with_epsilon(0.02).map_err(err)?;
    let mut same = true;
    for (y, t) in [(0.4, 0.0), (0.7, 0.9), (0.9, 2.1)] {
        let p = SectionPoint::new(&sys, y, t).map_err(err)?;
        let half = impact_map::half_map(&sys, p, &precise).map_err(err)?;
        let composed = impact_map::half_map(&sys, half, &precise).map_err(err)?;
        let mapped = impact_map::impact_map_p(&sys, p, 1, &precise).map_err(err)?;
        same &= mapped.y == composed.y && mapped.t == composed.t;
    }
    ok &= same;
    notes.push(format!("unit-restitution map equals composition: {same}"));

    let sys = base.with_epsilon(0.2).map_err(err)?;
    let mut flow_err: f64 = 0.0;
    for (y, t0, zone) in [(0.3, 0.2, Zone::Plus), (0.8, 1.1, Zone::Plus), (-0.5, 0.7, Zone::Minus), (-0.9, 1.9, Zone::Minus)] {
        let start = PhaseState::on_switching_line(y, t0);
        let tr = flow::transit(&sys, start, zone, Direction::Forward, Some(t0 + 0.7), &precise, false).map_err(err)?;
        let exact = flow::closed_form_flow_linear(&sys, start, zone, tr.end.t).map_err(err)?;
        flow_err = flow_err.max((tr.end.x - exact.x).abs().max((tr.end.y - exact.y).abs()));
    }
    ok &= flow_err < 1e-9;
    notes.push(format!("closed-form flow error {flow_err:.1e}"));
    Ok((ok, notes.join(", ")))
}

fn report(id: u32, name: &str, budget: Option<Duration>, check: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let verdict = check();
    let elapsed = start.elapsed();
    let in_time = budget.map_or(true, |b| elapsed <= b);
    let (pass, detail) = match verdict {
        Ok((pass, detail)) => (pass && in_time, detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let limit = budget.map_or(String::new(), |b| format!(" / limit {:.0} s", b.as_secs_f64()));
    println!(
        "[{}] {id}. {name}: {detail} ({:.2} s{limit})",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    pass
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let secs = |s: u64| Some(Duration::from_secs(s));
    let mut results = Vec::new();
    results.push(report(1, "period closed form", secs(1), c1_period));
    let mut profiles = None;
    results.push(report(2, "subharmonic Melnikov closed form", secs(30), || {
        let built = cos_forcing_profiles()?;
        let verdict = c2_melnikov(&built);
        profiles = Some(built);
        verdict
    }));
    results.push(report(3, "zero-mean Melnikov profiles", None, || {
        c3_zero_mean(profiles.as_deref().ok_or("profiles unavailable")?)
    }));
    results.push(report(4, "conservative orbits and continuation", secs(120), c4_conservative));
    results.push(report(5, "dissipative threshold and seeds", None, c5_threshold));
    results.push(report(6, "dissipative orbit continuation", secs(300), c6_dissipative));
    results.push(report(7, "existence-curve tangency", None, c7_existence));
    results.push(report(8, "heteroclinic splitting", secs(120), c8_heteroclinic));
    results.push(report(9, "property suite", None, c9_properties));
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
