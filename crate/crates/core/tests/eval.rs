use std::collections::{BTreeMap, BTreeSet};

use robotransfer_core::eval::{standard_methods, Chance, Method};
use robotransfer_core::features::StopWords;
use robotransfer_core::{evaluate, generate_synthetic, make_folds, Config, DtwParams, SyntheticSpec, TaskInstance};

fn spec(seed: u64, per_manual: usize) -> SyntheticSpec {
    SyntheticSpec {
        n_tasks: 20,
        demos_per_task: 4,
        points_per_part: 80,
        max_instructions_per_manual: per_manual,
        rng_seed: seed,
        ..SyntheticSpec::default()
    }
}

#[test]
fn synthesis_is_seed_deterministic() {
    let a = generate_synthetic(&spec(5, 2)).unwrap();
    let b = generate_synthetic(&spec(5, 2)).unwrap();
    let c = generate_synthetic(&spec(6, 2)).unwrap();
    assert_eq!(a.content_hash().unwrap(), b.content_hash().unwrap());
    assert_ne!(a.content_hash().unwrap(), c.content_hash().unwrap());
    assert_eq!(a.tasks.len(), 20);
    assert!(a.tasks.iter().all(|t| t.demos.len() == 4 && t.expert_demo.is_some()));
}

#[test]
fn folds_partition_manuals_evenly() {
    let ds = generate_synthetic(&spec(8, 2)).unwrap();
    for k in [2, 3, 5] {
        let split = make_folds(&ds.tasks, k, 99).unwrap();
        assert_eq!(split, make_folds(&ds.tasks, k, 99).unwrap());
        assert_eq!(split.assignment.len(), ds.tasks.len());

        let mut manual_fold: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &ds.tasks {
            let f = split.fold_of(&t.id).unwrap();
            assert!(f < k);
            if let Some(prev) = manual_fold.insert(&t.manual_id, f) {
                assert_eq!(prev, f, "manual {} spans folds", t.manual_id);
            }
        }
        let mut sizes = vec![0usize; k];
        for f in manual_fold.values() {
            sizes[*f] += 1;
        }
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        assert!(*lo > 0 && hi - lo <= 1, "{sizes:?}");
    }
    let manuals: BTreeSet<&str> = ds.tasks.iter().map(|t| t.manual_id.as_str()).collect();
    assert!(make_folds(&ds.tasks, manuals.len() + 1, 0).is_err());
}

#[test]
fn chance_is_uniform() {
    let n = 10;
    let draws = 5000;
    let chance = Chance { seed: 17 };
    let mut counts = vec![0usize; n];
    for i in 0..draws {
        counts[chance.pick(&format!("task-{i}"), n).unwrap()] += 1;
    }
    let p = 1.0 / n as f64;
    let expected = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    for c in &counts {
        assert!((*c as f64 - expected).abs() <= 4.0 * sigma, "{counts:?}");
    }
    assert_eq!(chance.pick("same", n).unwrap(), chance.pick("same", n).unwrap());
    assert!(chance.pick("x", 0).is_err());
}

fn baselines(config: &Config) -> Vec<Box<dyn Method>> {
    standard_methods(config, &StopWords::default())
        .into_iter()
        .take(3)
        .collect()
}

fn fold_of_demo(tasks: &[TaskInstance], split: &robotransfer_core::FoldSplit) -> BTreeMap<String, BTreeSet<usize>> {
    let mut out: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for t in tasks {
        for d in &t.demos {
            out.entry(d.id.clone())
                .or_default()
                .insert(split.fold_of(&t.id).unwrap());
        }
    }
    out
}

#[test]
fn evaluation_uses_only_training_folds() {
    let ds = generate_synthetic(&spec(21, 2)).unwrap();
    let config = Config::default();
    let split = make_folds(&ds.tasks, 4, 3).unwrap();
    let report = evaluate(&ds.tasks, &split, &baselines(&config), &DtwParams::default(), 10.0, 3).unwrap();
    let demo_folds = fold_of_demo(&ds.tasks, &split);
    assert_eq!(report.methods.len(), 3);
    for m in &report.methods {
        assert_eq!(m.instructions, ds.tasks.len());
        assert!((0.0..=100.0).contains(&m.accuracy));
        assert!(m.per_instruction.mean >= 0.0 && m.per_manual.mean >= 0.0);
        for item in &m.items {
            assert_eq!(split.fold_of(&item.task), Some(item.fold));
            let folds = &demo_folds[&item.predicted];
            assert!(
                folds.iter().any(|f| *f != item.fold),
                "{} leaked into fold {}",
                item.predicted,
                item.fold
            );
            assert!(item.distance >= 0.0);
        }
        let hits = m.items.iter().filter(|i| i.distance < 10.0).count();
        assert_eq!(m.accuracy, 100.0 * hits as f64 / m.items.len() as f64);
    }
}

#[test]
fn single_instruction_manuals_agree_across_granularities() {
    let ds = generate_synthetic(&spec(22, 1)).unwrap();
    let config = Config::default();
    let split = make_folds(&ds.tasks, 5, 1).unwrap();
    let report = evaluate(&ds.tasks, &split, &baselines(&config), &DtwParams::default(), 10.0, 1).unwrap();
    for m in &report.methods {
        assert_eq!(m.manuals, m.instructions);
        assert_eq!(m.per_manual.mean, m.per_instruction.mean);
        assert_eq!(m.per_manual.std, m.per_instruction.std);
    }
}

#[test]
fn tasks_without_expert_are_skipped() {
    let mut ds = generate_synthetic(&spec(23, 2)).unwrap();
    ds.tasks[0].expert_demo = None;
    let split = make_folds(&ds.tasks, 3, 0).unwrap();
    let methods: Vec<Box<dyn Method>> = vec![Box::new(Chance { seed: 0 })];
    let report = evaluate(&ds.tasks, &split, &methods, &DtwParams::default(), 10.0, 0).unwrap();
    assert_eq!(report.skipped, vec![ds.tasks[0].id.clone()]);
    assert_eq!(report.methods[0].instructions, ds.tasks.len() - 1);
}
