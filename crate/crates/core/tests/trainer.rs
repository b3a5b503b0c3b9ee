use binsim_core::bnn::{train, validate, ModelVariant, ToyModel, TrainConfig, TrainError, Trainer};
use binsim_core::dataset::{synthesize, Dataset, ImageShape, Split, SynthSpec};
use binsim_core::fitness::{FitnessFn, TrainedFitness};
use binsim_core::{Genome, MeasureExpr};

fn desk(seed: u64, samples: usize, noise: f64) -> (Dataset, Dataset) {
    let mut spec = SynthSpec::new(seed, samples, 10, ImageShape::new(16, 16, 1));
    spec.noise = noise;
    let train = synthesize(&spec, Split::Train);
    spec.samples = samples / 2;
    (train, synthesize(&spec, Split::Validation))
}

fn zero_measure() -> MeasureExpr {
    MeasureExpr::decode(Genome::new([1, 1, 1, 1, 0, 0, 0]).unwrap())
}

fn baseline() -> MeasureExpr {
    MeasureExpr::decode(Genome::BASELINE)
}

fn quick(epochs: u32, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn baseline_clears_one_and_a_half_times_chance() {
    let (tr, va) = desk(7, 1000, 0.1);
    let (report, _) = train(&quick(15, 0), &tr, &va, baseline()).unwrap();
    let last = *report.accuracy.last().unwrap();
    assert!(last >= 1.5 * va.chance_accuracy(), "accuracy {last}");
}

#[test]
fn constant_zero_measure_stays_at_chance() {
    let (tr, va) = desk(7, 1000, 0.1);
    let (report, _) = train(&quick(3, 0), &tr, &va, zero_measure()).unwrap();
    for acc in report.accuracy {
        assert!((acc - va.chance_accuracy()).abs() <= 0.03, "accuracy {acc}");
    }
}

#[test]
fn training_is_deterministic() {
    let (tr, va) = desk(3, 400, 0.1);
    let m1 = MeasureExpr::decode("3,0,3,0,0,1,6".parse().unwrap());
    let a = train(&quick(2, 11), &tr, &va, m1).unwrap();
    let b = train(&quick(2, 11), &tr, &va, m1).unwrap();
    assert_eq!(a.0, b.0);
    let (mut ma, mut mb) = (a.1, b.1);
    assert_eq!(ma.flat_params(), mb.flat_params());
}

#[test]
fn loss_trends_down_over_three_epochs() {
    let (tr, va) = desk(5, 600, 0.1);
    let mut drops: Vec<f64> = (0..5)
        .map(|seed| {
            let (r, _) = train(&quick(3, seed), &tr, &va, baseline()).unwrap();
            assert!(r.losses.iter().all(|l| l.is_finite()));
            r.losses[0] - r.losses[2]
        })
        .collect();
    drops.sort_by(f64::total_cmp);
    assert!(drops[2] > 0.0, "median loss drop {}", drops[2]);
}

#[test]
fn noiseless_data_is_learned_almost_perfectly() {
    let (tr, va) = desk(9, 1000, 0.0);
    let (r, _) = train(&quick(10, 0), &tr, &va, baseline()).unwrap();
    assert!(*r.accuracy.last().unwrap() >= 0.99, "{:?}", r.accuracy);
}

#[test]
fn small_conv_variant_learns() {
    let (tr, va) = desk(7, 600, 0.1);
    let cfg = TrainConfig {
        variant: ModelVariant::SmallConv,
        batch_size: 64,
        ..quick(4, 1)
    };
    let (r, _) = train(&cfg, &tr, &va, baseline()).unwrap();
    assert!(
        *r.accuracy.last().unwrap() >= 1.5 * va.chance_accuracy(),
        "{:?}",
        r.accuracy
    );
}

#[test]
fn untrained_accuracy_is_near_chance() {
    let (tr, va) = desk(13, 200, 0.1);
    let n = va.len() as f64;
    let p = va.chance_accuracy();
    let sigma = (p * (1.0 - p) / n).sqrt();
    let accs: Vec<f64> = (0..20)
        .map(|seed| {
            let cfg = quick(1, seed);
            let mut model = ToyModel::new(cfg.model_config(&tr), baseline(), seed);
            validate(&mut model, &va).unwrap()
        })
        .collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let sigma_mean = sigma / (accs.len() as f64).sqrt();
    // untrained logits are correlated across samples, so allow the per-run spread
    assert!(
        (mean - p).abs() <= 3.0 * sigma.max(sigma_mean),
        "mean {mean}"
    );
}

#[test]
fn empty_validation_set_is_an_error() {
    let (tr, va) = desk(1, 100, 0.1);
    let empty = va.select(&[]);
    let mut t = Trainer::for_measure(quick(1, 0), &tr, baseline()).unwrap();
    assert_eq!(t.validate(&empty), Err(TrainError::EmptyDataset));
}

#[test]
fn tiny_set_is_memorized() {
    // one sample per class; a lone sample would leave batch statistics undefined
    let (tr, _) = desk(2, 10, 0.1);
    let a = (0..tr.len()).find(|&i| tr.label(i) == 0).unwrap();
    let b = (0..tr.len()).find(|&i| tr.label(i) == 1).unwrap();
    let tiny = tr.select(&[a, b]);
    let cfg = TrainConfig {
        batch_size: 2,
        ..quick(1, 0)
    };
    let mut t = Trainer::for_measure(cfg, &tiny, baseline()).unwrap();
    for _ in 0..100 {
        t.train_epoch(&tiny).unwrap();
    }
    assert_eq!(t.validate(&tiny).unwrap(), 1.0);
}

#[test]
fn full_batch_training_ignores_sample_order() {
    let (tr, va) = desk(4, 200, 0.1);
    let mut order: Vec<usize> = (0..tr.len()).collect();
    order.reverse();
    order.swap(3, 77);
    let permuted = tr.select(&order);
    let cfg = TrainConfig {
        batch_size: tr.len(),
        shuffle: false,
        ..quick(3, 2)
    };
    let (a, _) = train(&cfg, &tr, &va, baseline()).unwrap();
    let (b, _) = train(&cfg, &permuted, &va, baseline()).unwrap();
    assert_eq!(a.accuracy, b.accuracy);
    for (x, y) in a.losses.iter().zip(&b.losses) {
        assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
    }
}

#[test]
fn early_rejection_paths() {
    let (tr, va) = desk(7, 600, 0.1);
    let fit = TrainedFitness::new(tr, va, quick(4, 0));
    let zero = fit
        .evaluate(&Genome::new([1, 1, 1, 1, 0, 0, 0]).unwrap(), 0.2)
        .unwrap();
    assert!(zero.rejected);
    assert_eq!(zero.epochs_trained, 1);
    assert_eq!(zero.accuracy_trace.len(), 1);
    assert_eq!(zero.fitness, zero.accuracy_trace[0]);

    let base = fit.evaluate(&Genome::BASELINE, 0.2).unwrap();
    assert!(!base.rejected);
    assert_eq!(base.epochs_trained, 4);
    assert_eq!(base.fitness, *base.accuracy_trace.last().unwrap());
    assert!(zero.fitness <= base.fitness);

    let vacuous = fit
        .evaluate(&Genome::new([1, 1, 1, 1, 0, 0, 0]).unwrap(), 0.0)
        .unwrap();
    assert!(!vacuous.rejected);
    assert_eq!(vacuous.accuracy_trace.len(), 4);
}
