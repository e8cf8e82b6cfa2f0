use reach_surrogate_core::geometry::{CrossSection, ForcingSeries, Reach};
use reach_surrogate_core::hydro::{self, route_reach, route_reach_substeps, OracleConfig};

const WIDTH: f64 = 40.0;
const SLOPE: f64 = 1e-4;
const N_MAN: f64 = 0.03;

/// Prismatic rectangular channel with a constant bed slope.
fn uniform_reach(n: usize, dx: f64) -> Reach {
    let sections = (0..n)
        .map(|i| {
            let zb = 20.0 - SLOPE * dx * i as f64;
            let profile = vec![
                (0.0, zb + 10.0),
                (0.5, zb),
                (WIDTH - 0.5, zb),
                (WIDTH, zb + 10.0),
            ];
            CrossSection::new(dx * i as f64, profile, 0.0, WIDTH, N_MAN).unwrap()
        })
        .collect();
    Reach::new("uniform", sections).unwrap()
}

fn normal_stage(reach: &Reach, i: usize, q: f64) -> f64 {
    reach.cross_sections[i].z_bed + hydro::normal_depth(q, WIDTH, SLOPE, N_MAN).unwrap()
}

fn ramp_forcings(reach: &Reach, hours: usize, q0: f64, q1: f64) -> ForcingSeries {
    let last = reach.len() - 1;
    let q: Vec<f64> = (0..hours)
        .map(|t| q0 + (q1 - q0) * (t as f64 / 24.0).min(1.0))
        .collect();
    let h = vec![normal_stage(reach, last, q1); hours];
    ForcingSeries::new(0, q, h).unwrap()
}

#[test]
fn steady_forcing_converges_to_normal_depth_profile() {
    let reach = uniform_reach(20, 500.0);
    let q1 = 200.0;
    let f = ramp_forcings(&reach, 600, 50.0, q1);
    let field = route_reach(&reach, &f, &OracleConfig::default()).unwrap();
    field.validate(&reach.z_bed()).unwrap();
    let t = field.hours() - 1;
    for i in 0..reach.len() {
        assert!((field.q_at(t, i) - q1).abs() < 1e-3 * q1, "q at {i}");
        let want = normal_stage(&reach, i, q1);
        let depth = want - reach.cross_sections[i].z_bed;
        let got = field.h_at(t, i) - reach.cross_sections[i].z_bed;
        assert!(((got - depth) / depth).abs() < 1e-3, "depth at {i}: {got} vs {depth}");
    }
}

#[test]
fn boundary_contracts_hold_every_hour() {
    let reach = uniform_reach(12, 800.0);
    let f = ramp_forcings(&reach, 100, 10.0, 150.0);
    let field = route_reach(&reach, &f, &OracleConfig::default()).unwrap();
    for t in 0..field.hours() {
        assert_eq!(field.q_at(t, 0), f.q_up[t]);
        assert_eq!(field.h_at(t, reach.len() - 1), f.h_dn[t]);
    }
}

#[test]
fn pulse_volume_is_conserved() {
    let reach = uniform_reach(20, 500.0);
    let hours = 720;
    let base = 20.0;
    let q: Vec<f64> = (0..hours)
        .map(|t| {
            let u = (t as f64 - 40.0) / 36.0;
            if u <= 0.0 {
                base
            } else {
                base + 280.0 * u.powi(4) * (4.0 * (1.0 - u)).exp()
            }
        })
        .collect();
    let h = vec![normal_stage(&reach, 19, base); hours];
    let f = ForcingSeries::new(0, q.clone(), h).unwrap();
    let field = route_reach(&reach, &f, &OracleConfig::default()).unwrap();
    let inflow: f64 = q.iter().sum::<f64>() / hours as f64;
    let outflow: f64 = field.q_series(19).iter().sum::<f64>() / hours as f64;
    assert!(((outflow - inflow) / inflow).abs() < 0.02, "in {inflow} out {outflow}");
    // Volume balance on the pulse alone is the stricter reading.
    let pulse_in = inflow - base;
    let pulse_out = outflow - base;
    assert!(((pulse_out - pulse_in) / pulse_in).abs() < 0.02);
    field.validate(&reach.z_bed()).unwrap();
}

#[test]
fn zero_inflow_routes_no_water() {
    let reach = uniform_reach(10, 500.0);
    let last = reach.len() - 1;
    let h_dn = reach.cross_sections[last].z_bed + 1.5;
    let f = ForcingSeries::new(0, vec![0.0; 48], vec![h_dn; 48]).unwrap();
    let cfg = OracleConfig::default();
    let field = route_reach(&reach, &f, &cfg).unwrap();
    assert!(field.q.iter().all(|&q| q == 0.0));
    let blend = cfg.backwater_for(reach.len());
    assert_eq!(blend, 3);
    for i in 0..reach.len() {
        let j = last - i;
        let w = if j < blend { 1.0 - j as f64 / blend as f64 } else { 0.0 };
        let want = reach.cross_sections[i].z_bed + w * 1.5;
        assert!((field.h_at(47, i) - want).abs() < 1e-12, "section {i}");
    }
}

#[test]
fn halving_the_substep_barely_moves_the_profile() {
    let reach = uniform_reach(20, 500.0);
    let f = ramp_forcings(&reach, 300, 30.0, 250.0);
    let coarse = OracleConfig::default();
    let fine = OracleConfig {
        courant: 0.5,
        ..OracleConfig::default()
    };
    let (a, na) = route_reach_substeps(&reach, &f, &coarse).unwrap();
    let (b, nb) = route_reach_substeps(&reach, &f, &fine).unwrap();
    assert!(nb > na);
    let t = a.hours() - 1;
    for i in 0..reach.len() {
        let zb = reach.cross_sections[i].z_bed;
        let (da, db) = (a.h_at(t, i) - zb, b.h_at(t, i) - zb);
        assert!(((da - db) / da).abs() < 1e-3);
        assert!(((a.q_at(t, i) - b.q_at(t, i)) / a.q_at(t, i)).abs() < 1e-3);
    }
}

#[test]
fn standard_scenario_is_physical() {
    let t0 = std::time::Instant::now();
    let sc = reach_surrogate_core::synthetic::Scenario::standard(7).unwrap();
    eprintln!("standard scenario built in {:?}", t0.elapsed());
    let z_bed = sc.reach.z_bed();
    for seg in sc.train.iter().chain([&sc.test]) {
        seg.truth.validate(&z_bed).unwrap();
        assert_eq!(seg.truth.hours(), 2000);
    }
    let z_bank = sc.reach.z_bank();
    let max_over_bank = (0..sc.test.truth.hours())
        .flat_map(|t| (0..z_bank.len()).map(move |i| (t, i)))
        .map(|(t, i)| sc.test.truth.h_at(t, i) - z_bank[i])
        .fold(f64::NEG_INFINITY, f64::max);
    eprintln!("max stage above bank in held-out period: {max_over_bank:.2} m");
}
