mod common;

use common::*;
use dialogue_curricula::attributes::Attribute;
use dialogue_curricula::curriculum::{build_curriculum, Direction};
use dialogue_curricula::learner::{SimConfig, SimulatedLearner};
use dialogue_curricula::scheduler::{train_loop, Mode, TrainConfig};

fn skills_after(bench: &Bench, mode: Mode, steps: usize, seed: u64) -> [f64; 5] {
    let curricula = Attribute::ALL
        .iter()
        .map(|&a| build_curriculum(&bench.scores, a, Direction::EasyFirst).unwrap())
        .collect();
    let cfg = TrainConfig {
        mode,
        steps,
        seed,
        patience: None,
        ..TrainConfig::default()
    };
    let mut sim = SimulatedLearner::new(
        SimConfig {
            seed,
            ..SimConfig::default()
        },
        bench.easiness.clone(),
    );
    train_loop(&mut sim, curricula, bench.scores.len(), &cfg).unwrap();
    sim.skill()
}

#[test]
fn single_curriculum_trains_its_own_skill_fastest() {
    let bench = Bench::new(2000, 5);
    let runs: Vec<[f64; 5]> = Attribute::ALL
        .iter()
        .map(|&a| skills_after(&bench, Mode::Single(a), 200, 1))
        .collect();
    for (i, a) in Attribute::ALL.iter().enumerate() {
        for (j, other) in runs.iter().enumerate() {
            if i != j {
                assert!(
                    runs[i][i] > other[i],
                    "{a}: own run reached {} but single:{} reached {}",
                    runs[i][i],
                    Attribute::ALL[j],
                    other[i]
                );
            }
        }
    }
}

#[test]
fn uniform_batches_see_average_easiness() {
    let bench = Bench::new(2000, 6);
    let none = skills_after(&bench, Mode::None, 400, 2);
    let lr = SimConfig::default().learning_rates;
    for (a, (&s, &rate)) in none.iter().zip(&lr).enumerate() {
        // s = 1 - (1 - rate * e)^400 with mean easiness e near 1/2
        let e = 1.0 - (1.0 - s).powf(1.0 / 400.0);
        let e = e / rate;
        assert!((e - 0.5).abs() < 0.03, "attribute {a}: effective easiness {e}");
    }
}

#[test]
fn skill_growth_is_bounded_and_monotone() {
    let bench = Bench::new(500, 7);
    let mut prev = [0.0; 5];
    for steps in [50, 100, 200, 400] {
        let s = skills_after(&bench, Mode::RandomPolicy, steps, 3);
        for a in 0..5 {
            assert!(
                s[a] >= prev[a] && s[a] < 1.0,
                "skill {a} at {steps} steps: {} after {}",
                s[a],
                prev[a]
            );
        }
        prev = s;
    }
}
