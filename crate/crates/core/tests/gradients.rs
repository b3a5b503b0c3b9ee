//! Analytic gradients against central finite differences.

use binsim_core::bnn::{
    softmax_cross_entropy, BatchNorm, Conv, ConvGeometry, Dense, GlobalAvgPool, HardTanh, Layer,
    MeasureKind, MeasureLayer, Mode, ModelConfig, ModelVariant, SignSte, Tensor, ToyModel,
};
use binsim_core::dataset::ImageShape;
use binsim_core::measure::{builtins, GuardStats, UNARY_GENES};
use binsim_core::{Genome, MeasureExpr, SeedRng};
use rand::{Rng, SeedableRng};

const H: f64 = 1e-4;
const RELAXED_TRAIN: Mode = Mode {
    train: true,
    relaxed: true,
};

/// A finite-difference slope with its round-off scale `ε·|f|/h`.
#[derive(Clone, Copy, Debug)]
struct Fd {
    slope: f64,
    noise: f64,
}

fn close(analytic: f64, fd: Fd, rel: f64) -> bool {
    let numeric = fd.slope;
    (analytic - numeric).abs() <= rel * analytic.abs().max(numeric.abs()).max(1e-3) + 8.0 * fd.noise
}

/// Richardson-extrapolated central difference of `f` at `x` from steps
/// `h` and `h/2`, or `None` when the one-sided differences disagree (a kink
/// or guard switch inside the step).
fn central(f: &mut dyn FnMut(f64) -> Option<f64>, x: f64) -> Option<Fd> {
    let (lo, mid, hi) = (f(x - H)?, f(x)?, f(x + H)?);
    let (fwd, bwd) = ((hi - mid) / H, (mid - lo) / H);
    let d1 = (hi - lo) / (2.0 * H);
    if (fwd - bwd).abs() > 1e-2 * d1.abs().max(1.0) {
        return None;
    }
    let d2 = (f(x + H / 2.0)? - f(x - H / 2.0)?) / H;
    Some(Fd {
        slope: (4.0 * d2 - d1) / 3.0,
        noise: 4.0 * f64::EPSILON * mid.abs().max(1.0) / H,
    })
}

fn guarded_eval(expr: &MeasureExpr, counts: [f64; 4], alpha: [f64; 4]) -> Option<f64> {
    let mut stats = GuardStats::default();
    let v = expr.eval_grad(counts, alpha, &mut stats).value;
    (stats.total() == 0 && v.is_finite() && v.abs() < 1e8).then_some(v)
}

/// Checks every count and α derivative of `expr` at one point.
/// Returns the number of coordinates compared.
fn check_measure(expr: &MeasureExpr, counts: [f64; 4], alpha: [f64; 4], rel: f64) -> usize {
    let Some(_) = guarded_eval(expr, counts, alpha) else {
        return 0;
    };
    let e = expr.eval_grad(counts, alpha, &mut GuardStats::default());
    let mut checked = 0;
    for i in 0..4 {
        let mut f = |v: f64| {
            let mut c = counts;
            c[i] = v;
            guarded_eval(expr, c, alpha)
        };
        if let Some(fd) = central(&mut f, counts[i]) {
            assert!(
                close(e.d_counts[i], fd, rel),
                "{} d/d{}: analytic {} numeric {fd:?} at {counts:?}",
                expr.formula(),
                ["a", "b", "c", "d"][i],
                e.d_counts[i]
            );
            checked += 1;
        }
    }
    for s in expr.alpha_slots().collect::<Vec<_>>() {
        let mut f = |v: f64| {
            let mut al = alpha;
            al[s] = v;
            guarded_eval(expr, counts, al)
        };
        if let Some(fd) = central(&mut f, alpha[s]) {
            assert!(
                close(e.d_alpha[s], fd, rel),
                "{} d/dalpha{s}: analytic {} numeric {fd:?}",
                expr.formula(),
                e.d_alpha[s]
            );
            checked += 1;
        }
    }
    checked
}

fn random_point(rng: &mut SeedRng) -> ([f64; 4], [f64; 4]) {
    let counts = core::array::from_fn(|_| rng.gen_range(0.5..12.0));
    let alpha = core::array::from_fn(|_| rng.gen_range(0.3..1.7));
    (counts, alpha)
}

#[test]
fn builtin_measure_gradients() {
    let mut rng = SeedRng::seed_from_u64(1);
    for (name, genome) in builtins() {
        let expr = MeasureExpr::decode(genome);
        let mut checked = 0;
        for _ in 0..40 {
            let (c, a) = random_point(&mut rng);
            checked += check_measure(&expr, c, a, 1e-5);
        }
        assert!(checked >= 100, "{name}: only {checked} coordinates checked");
    }
}

#[test]
fn random_measure_gradients() {
    let mut rng = SeedRng::seed_from_u64(2);
    let mut checked = 0;
    for _ in 0..3000 {
        let expr = MeasureExpr::decode(Genome::random(&mut rng));
        let (c, a) = random_point(&mut rng);
        checked += check_measure(&expr, c, a, 1e-5);
    }
    assert!(checked > 6000, "{checked}");
}

#[test]
fn every_operator_is_exercised() {
    // each unary gene value in slot 0 and each binary value at the root
    let mut rng = SeedRng::seed_from_u64(3);
    for u in 0..18u8 {
        let g = Genome::new([u, 0, 3, 0, 0, 0, 1]).unwrap();
        let expr = MeasureExpr::decode(g);
        let mut checked = 0;
        for _ in 0..20 {
            let (c, a) = random_point(&mut rng);
            checked += check_measure(&expr, c, a, 1e-5);
        }
        assert!(checked > 0, "unary {u}");
    }
    for b in 0..14u8 {
        let g = Genome::new([3, 0, 3, 0, 0, 0, b]).unwrap();
        let expr = MeasureExpr::decode(g);
        let mut checked = 0;
        for _ in 0..20 {
            let (c, a) = random_point(&mut rng);
            checked += check_measure(&expr, c, a, 1e-5);
        }
        assert!(checked > 0, "binary {b}");
    }
}

fn randn(rng: &mut SeedRng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// `L = Σ r·layer(x)` with fixed random `r`.
fn probe_loss(layer: &mut Layer, x: &Tensor, r: &[f64]) -> f64 {
    let y = layer.forward(x.clone(), RELAXED_TRAIN);
    y.data.iter().zip(r).map(|(a, b)| a * b).sum()
}

/// Compares input and parameter gradients of `layer` with finite differences.
fn check_layer(mut layer: Layer, x: Tensor, rng: &mut SeedRng, rel: f64) {
    let y = layer.forward(x.clone(), RELAXED_TRAIN);
    let r = randn(rng, y.data.len(), 1.0);
    let dy = Tensor::from_vec(y.n, y.c, y.h, y.w, r.clone());
    let zero = |layer: &mut Layer| layer.for_each_param(&mut |p| p.grad.fill(0.0));
    zero(&mut layer);
    let dx = layer.backward(&dy);

    let mut grads = Vec::new();
    let mut values = Vec::new();
    layer.for_each_param(&mut |p| {
        grads.push(p.grad.to_vec());
        values.push(p.value.to_vec());
    });

    let mut checked = 0;
    for i in 0..x.data.len() {
        let mut probe = layer.clone();
        let mut f = |v: f64| {
            let mut xp = x.clone();
            xp.data[i] = v;
            Some(probe_loss(&mut probe, &xp, &r))
        };
        if let Some(fd) = central(&mut f, x.data[i]) {
            assert!(
                close(dx.data[i], fd, rel),
                "dx[{i}]: {} vs {fd:?}",
                dx.data[i]
            );
            checked += 1;
        }
    }
    for (t, vals) in values.iter().enumerate() {
        for j in 0..vals.len() {
            let mut probe = layer.clone();
            let mut f = |v: f64| {
                let mut k = 0;
                probe.for_each_param(&mut |p| {
                    if k == t {
                        p.value[j] = v;
                    }
                    k += 1;
                });
                Some(probe_loss(&mut probe, &x, &r))
            };
            if let Some(fd) = central(&mut f, vals[j]) {
                assert!(
                    close(grads[t][j], fd, rel),
                    "param {t}[{j}]: {} vs {fd:?}",
                    grads[t][j]
                );
                checked += 1;
            }
        }
    }
    assert!(checked > x.data.len() / 2, "too few coordinates checked");
}

fn measure_exprs() -> Vec<MeasureExpr> {
    ["baseline", "M1", "M3", "M7", "M9"]
        .iter()
        .map(|n| MeasureExpr::decode(binsim_core::measure::builtin(n).unwrap()))
        .collect()
}

#[test]
fn dense_and_conv_layers() {
    let mut rng = SeedRng::seed_from_u64(10);
    let w = randn(&mut rng, 5 * 4, 0.8);
    check_layer(
        Layer::Dense(Dense::new("d", 5, 4, w)),
        Tensor::from_vec(3, 5, 1, 1, randn(&mut rng, 15, 1.0)),
        &mut rng,
        1e-6,
    );
    let g = ConvGeometry {
        in_c: 2,
        in_h: 5,
        in_w: 4,
        kernel: 3,
        stride: 2,
        pad: 1,
    };
    let w = randn(&mut rng, 3 * g.patch_len(), 0.5);
    let x = Tensor::from_vec(2, 2, 5, 4, randn(&mut rng, 80, 1.0));
    check_layer(Layer::Conv(Conv::new("c", g, 3, w)), x, &mut rng, 1e-6);
}

#[test]
fn normalization_and_activations() {
    let mut rng = SeedRng::seed_from_u64(11);
    let x = Tensor::from_vec(4, 3, 2, 2, randn(&mut rng, 48, 2.0));
    let mut bn = BatchNorm::new("bn", 3);
    bn.gamma.value = randn(&mut rng, 3, 1.5);
    bn.beta.value = randn(&mut rng, 3, 0.5);
    check_layer(Layer::BatchNorm(bn), x.clone(), &mut rng, 1e-5);
    check_layer(
        Layer::HardTanh(HardTanh::default()),
        x.clone(),
        &mut rng,
        1e-6,
    );
    check_layer(Layer::Sign(SignSte::default()), x.clone(), &mut rng, 1e-6);
    check_layer(Layer::Pool(GlobalAvgPool::default()), x, &mut rng, 1e-6);
}

#[test]
fn measure_layers_relaxed() {
    let mut rng = SeedRng::seed_from_u64(12);
    for expr in measure_exprs() {
        let w = randn(&mut rng, 4 * 6, 0.9);
        let mut layer = MeasureLayer::new("m", MeasureKind::Dense { inputs: 6 }, 4, w, expr, false);
        for s in 0..UNARY_GENES {
            if let Some(a) = layer.alphas.slot_mut(s) {
                a.iter_mut().for_each(|v| *v = rng.gen_range(0.5..1.5));
            }
        }
        let x = Tensor::from_vec(3, 6, 1, 1, randn(&mut rng, 18, 0.9));
        check_layer(Layer::Measure(layer), x, &mut rng, 1e-4);

        let g = ConvGeometry {
            in_c: 2,
            in_h: 4,
            in_w: 4,
            kernel: 3,
            stride: 2,
            pad: 1,
        };
        let w = randn(&mut rng, 3 * g.patch_len(), 0.9);
        let layer = MeasureLayer::new("mc", MeasureKind::Conv(g), 3, w, expr, true);
        let x = Tensor::from_vec(2, 2, 4, 4, randn(&mut rng, 64, 0.9));
        check_layer(Layer::Measure(layer), x, &mut rng, 1e-4);
    }
}

fn model_loss(model: &mut ToyModel, x: &Tensor, labels: &[u8]) -> f64 {
    softmax_cross_entropy(&model.forward(x.clone(), RELAXED_TRAIN), labels).0
}

#[test]
fn whole_models_relaxed() {
    let mut rng = SeedRng::seed_from_u64(13);
    for variant in [ModelVariant::Mlp, ModelVariant::SmallConv] {
        for expr in measure_exprs() {
            let mut cfg = ModelConfig::new(variant, ImageShape::new(4, 4, 1), 3);
            cfg.hidden = 6;
            cfg.conv_channels = [3, 4, 5];
            let mut model = ToyModel::new(cfg, expr, rng.gen());
            let x = Tensor::from_vec(4, 1, 4, 4, randn(&mut rng, 64, 1.0));
            let labels = [0u8, 1, 2, 1];
            model.zero_grads();
            let logits = model.forward(x.clone(), RELAXED_TRAIN);
            let (_, dl) = softmax_cross_entropy(&logits, &labels);
            model.backward(&dl);
            let grads = model.flat_grads();
            let params = model.flat_params();
            let mut checked = 0;
            for i in (0..params.len()).step_by(3) {
                let mut probe = model.clone();
                let mut f = |v: f64| {
                    let mut p = params.clone();
                    p[i] = v;
                    probe.set_flat_params(&p);
                    Some(model_loss(&mut probe, &x, &labels))
                };
                if let Some(fd) = central(&mut f, params[i]) {
                    assert!(
                        close(grads[i], fd, 1e-4),
                        "{} {}: param {i}: {} vs {fd:?}",
                        variant.name(),
                        expr.formula(),
                        grads[i]
                    );
                    checked += 1;
                }
            }
            assert!(checked > params.len() / 6);
        }
    }
}
