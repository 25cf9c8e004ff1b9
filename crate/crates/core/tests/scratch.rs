//! Temporary full-scale probe (deleted before finishing).

use blockadmm::experiments::*;

fn show(table: &SweepTable) {
    for c in &table.cells {
        println!(
            "{} mult {:?}: mean {:?} (conv {}/{} divfrac {:.2}) res {:?}",
            c.algorithm.name(),
            c.tau_multiplier,
            c.mean_epochs.map(|m| (m * 10.0).round() / 10.0),
            c.converged_runs,
            c.runs,
            c.diverged_fraction,
            c.mean_half_sq_residual.map(|r| format!("{r:.2e}")),
        );
    }
}

#[test]
#[ignore]
fn probe_sweep_l2_theory() {
    let mut spec = SweepSpec::new(
        FamilySpec::L2(L2InstanceSpec::default()),
        vec![Algorithm::Jadmm, Algorithm::Hadmm, Algorithm::Fadmm],
        TauGrid::Theory,
    );
    spec.runs_per_cell = 10;
    spec.max_epochs = 20_000;
    let t = run_sweep(&spec).unwrap();
    println!("paper: J 4358.2 H 214.1 F 211.3");
    show(&t);
}

#[test]
#[ignore]
fn probe_sweep_l2_uniform() {
    let mut spec = SweepSpec::new(
        FamilySpec::L2(L2InstanceSpec::default()),
        vec![Algorithm::Jadmm, Algorithm::Hadmm, Algorithm::Fadmm],
        TauGrid::UniformMultipliers(vec![1.0, 0.6, 0.4, 0.22, 0.2, 0.1]),
    );
    spec.runs_per_cell = 10;
    spec.max_epochs = 20_000;
    let t = run_sweep(&spec).unwrap();
    println!("paper rows: 1.0: 530.0/526.3/526.2 | 0.6: 324.0/320.1/319.9 | 0.4: 217.7/214.5/214.1");
    println!("            0.22: 123.1/119.3/119.0 | 0.2: ---/95.8/95.5 | 0.1: ---/75.3/73.0");
    show(&t);
}

#[test]
#[ignore]
fn probe_sweep_l1_theory() {
    let mut spec = SweepSpec::new(
        FamilySpec::L1(L1InstanceSpec::default()),
        vec![
            Algorithm::Jadmm,
            Algorithm::Hadmm2,
            Algorithm::Hadmm,
            Algorithm::Fadmm,
        ],
        TauGrid::Theory,
    );
    spec.runs_per_cell = 6;
    spec.max_epochs = 40_000;
    spec.assumed_mu = Some(1.0);
    let t = run_sweep(&spec).unwrap();
    println!("paper: J 12610.1 H2 605.8 H 1882.1 F 1879.4 (res ~0.2e-16)");
    show(&t);
}

#[test]
#[ignore]
fn probe_init_variants() {
    use blockadmm::block::BlockVector;
    use blockadmm::engine::{self, Schedule, SolverConfig, SolverState};
    use blockadmm::tau;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use rayon::prelude::*;

    let run_custom = |problem: &blockadmm::problem::Problem,
                      config: &SolverConfig,
                      x_star: Option<&[f64]>,
                      x0: BlockVector,
                      y0: Vec<f64>|
     -> (String, usize) {
        let schedule = config.schedule.clone();
        let mut state = SolverState::from_iterates(problem, &schedule, x0, y0).unwrap();
        loop {
            if state.epoch >= config.max_epochs {
                return ("maxed".into(), state.epoch);
            }
            match engine::stop_check(&state, config, x_star).unwrap() {
                engine::Decision::Converged => return ("conv".into(), state.epoch),
                engine::Decision::Diverged => return ("div".into(), state.epoch),
                engine::Decision::Continue => {}
            }
            match &config.schedule {
                Schedule::GaussSeidel => engine::epoch_gauss_seidel(&mut state, problem, config).unwrap(),
                Schedule::Jacobi => engine::epoch_jacobi(&mut state, problem, config).unwrap(),
                Schedule::Hybrid(_) => engine::epoch_hybrid(&mut state, problem, config).unwrap(),
                Schedule::TwoGroup(_) => engine::epoch_two_group(&mut state, problem, config).unwrap(),
            }
            engine::dual_update(&mut state, config);
            state.epoch += 1;
        }
    };

    // l2 boundary cells under x-random/y-zero.
    let l2 = FamilySpec::L2(L2InstanceSpec::default());
    let results: Vec<String> = (1..=10u64)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&seed| {
            let inst = l2.generate(seed).unwrap();
            let norm = tau::full_matrix_norm(inst.problem.matrix()).unwrap();
            let base = inst.rho * inst.rho / 2.0 * norm.powi(4);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(3);
            let x0: Vec<f64> = (0..inst.problem.col_dim())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let mut line = format!("seed {seed}:");
            for mult in [0.2, 0.1] {
                let policy = tau::tau_uniform(mult * base, 100).unwrap();
                let config = SolverConfig::new(
                    inst.rho,
                    inst.gamma,
                    policy,
                    Schedule::GaussSeidel,
                )
                .unwrap()
                .with_max_epochs(20_000)
                .with_stop(inst.stop.clone());
                let xb =
                    BlockVector::from_flat(inst.problem.partition().clone(), x0.clone()).unwrap();
                let (o, e) = run_custom(
                    &inst.problem,
                    &config,
                    None,
                    xb,
                    vec![0.0; inst.problem.row_dim()],
                );
                line.push_str(&format!(" F@{mult}: {o} {e}"));
            }
            line
        })
        .collect();
    for r in &results {
        println!("{r}");
    }

    // l1 H2 boundary under x-random/y-zero: must still diverge at 0.03.
    let l1 = FamilySpec::L1(L1InstanceSpec::default());
    for seed in 1..=8u64 {
        let inst = l1.generate(seed).unwrap();
        let norm = tau::full_matrix_norm(inst.problem.matrix()).unwrap();
        let base = inst.rho * inst.rho / 2.0 * norm.powi(4);
        let policy = tau::tau_uniform(0.03 * base, 100).unwrap();
        let g2 = blockadmm::block::Grouping::contiguous(inst.problem.partition().clone(), 2)
            .unwrap();
        let config = SolverConfig::new(inst.rho, inst.gamma, policy, Schedule::TwoGroup(g2))
            .unwrap()
            .with_max_epochs(40_000)
            .with_stop(inst.stop.clone());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(3);
        let x0: Vec<f64> = (0..inst.problem.col_dim())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let xb = BlockVector::from_flat(inst.problem.partition().clone(), x0).unwrap();
        let (o, e) = run_custom(
            &inst.problem,
            &config,
            inst.x_star.as_deref(),
            xb,
            vec![0.0; inst.problem.row_dim()],
        );
        println!("l1 seed {seed} H2@0.03 x-rand/y-zero: {o} {e}");
    }
}

#[test]
#[ignore]
fn probe_init_scale() {
    use blockadmm::block::BlockVector;
    use blockadmm::engine::{self, Schedule, SolverConfig, SolverState};
    use blockadmm::tau;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use rayon::prelude::*;

    let family = FamilySpec::L1(L1InstanceSpec::default());
    let cells: Vec<(f64, Algorithm)> = vec![
        (0.05, Algorithm::Fadmm),
        (0.1, Algorithm::Jadmm),
        (0.05, Algorithm::Jadmm),
        (0.05, Algorithm::Hadmm2),
        (0.03, Algorithm::Jadmm),
        (0.03, Algorithm::Hadmm2),
        (0.02, Algorithm::Hadmm2),
        (0.03, Algorithm::Fadmm),
        (0.02, Algorithm::Fadmm),
        (0.02, Algorithm::Hadmm),
    ];
    for scale in [0.1, 0.12, 0.15] {
        println!("--- x0 scale {scale} ---");
        for &(mult, alg) in &cells {
            let outcomes: Vec<(String, usize)> = (1..=30u64)
                .collect::<Vec<_>>()
                .par_iter()
                .map(|&seed| {
                    let inst = family.generate(seed).unwrap();
                    let norm = tau::full_matrix_norm(inst.problem.matrix()).unwrap();
                    let base = inst.rho * inst.rho / 2.0 * norm.powi(4);
                    let policy = tau::tau_uniform(mult * base, 100).unwrap();
                    let schedule = alg.schedule(&inst.problem, 25).unwrap();
                    let config =
                        SolverConfig::new(inst.rho, inst.gamma, policy, schedule.clone())
                            .unwrap()
                            .with_max_epochs(40_000)
                            .with_stop(inst.stop.clone());
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(3);
                    let x0: Vec<f64> = (0..inst.problem.col_dim())
                        .map(|_| {
                            let g: f64 = StandardNormal.sample(&mut rng);
                            scale * g
                        })
                        .collect();
                    let xb = BlockVector::from_flat(inst.problem.partition().clone(), x0)
                        .unwrap();
                    let mut state = SolverState::from_iterates(
                        &inst.problem,
                        &schedule,
                        xb,
                        vec![0.0; inst.problem.row_dim()],
                    )
                    .unwrap();
                    let x_star = inst.x_star.clone().unwrap();
                    loop {
                        if state.epoch >= config.max_epochs {
                            return ("maxed".to_string(), state.epoch);
                        }
                        match engine::stop_check(&state, &config, Some(&x_star)).unwrap() {
                            engine::Decision::Converged => {
                                return ("conv".to_string(), state.epoch)
                            }
                            engine::Decision::Diverged => {
                                return ("div".to_string(), state.epoch)
                            }
                            engine::Decision::Continue => {}
                        }
                        match &config.schedule {
                            Schedule::GaussSeidel => {
                                engine::epoch_gauss_seidel(&mut state, &inst.problem, &config)
                                    .unwrap()
                            }
                            Schedule::Jacobi => {
                                engine::epoch_jacobi(&mut state, &inst.problem, &config).unwrap()
                            }
                            Schedule::Hybrid(_) => {
                                engine::epoch_hybrid(&mut state, &inst.problem, &config).unwrap()
                            }
                            Schedule::TwoGroup(_) => {
                                engine::epoch_two_group(&mut state, &inst.problem, &config)
                                    .unwrap()
                            }
                        }
                        engine::dual_update(&mut state, &config);
                        state.epoch += 1;
                    }
                })
                .collect();
            let conv = outcomes.iter().filter(|(o, _)| o == "conv").count();
            let div = outcomes.iter().filter(|(o, _)| o == "div").count();
            let mean: f64 = outcomes
                .iter()
                .filter(|(o, _)| o == "conv")
                .map(|(_, e)| *e as f64)
                .sum::<f64>()
                / conv.max(1) as f64;
            println!(
                "  {}@{mult}: conv {conv}/30 div {div} mean {mean:.1}",
                alg.name()
            );
        }
    }
}

#[test]
#[ignore]
fn probe_sweep_l1_uniform() {
    let mut spec = SweepSpec::new(
        FamilySpec::L1(L1InstanceSpec::default()),
        vec![
            Algorithm::Jadmm,
            Algorithm::Hadmm2,
            Algorithm::Hadmm,
            Algorithm::Fadmm,
        ],
        TauGrid::UniformMultipliers(vec![0.2, 0.1, 0.05, 0.03, 0.02]),
    );
    spec.runs_per_cell = 10;
    spec.max_epochs = 40_000;
    let t = run_sweep(&spec).unwrap();
    println!("paper rows: 0.2: 1078.3/1066.2/1051.3/1053.3 | 0.1: 600.3/581.5/570.0/567.8");
    println!("            0.05: 344.4/328.8/325.9/326.0 | 0.03: ---/---/246.3/244.4 | 0.02: ---/---/162.2/150.3");
    show(&t);
}
