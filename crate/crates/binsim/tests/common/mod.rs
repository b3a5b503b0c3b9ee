#![allow(dead_code)]

use binsim::checkpoint::Checkpoint;
use binsim::config::RunConfig;
use binsim::{bnnd, model_file};
use binsim_core::bnn::NamedTensor;
use binsim_core::dataset::{Dataset, ImageShape, Split};
use binsim_core::fitness::SurrogateFitness;
use binsim_core::ga::{SearchConfig, SearchState};
use binsim_core::{Genome, SeedRng};
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> SeedRng {
    SeedRng::seed_from_u64(seed)
}

pub fn random_dataset(rng: &mut SeedRng) -> Dataset {
    let shape = ImageShape::new(
        rng.gen_range(1..9),
        rng.gen_range(1..9),
        rng.gen_range(1..4),
    );
    let classes = rng.gen_range(1..=255u8);
    let n = rng.gen_range(0..20);
    let pixels = (0..n * shape.len()).map(|_| rng.gen()).collect();
    let labels = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    let split = if rng.gen() {
        Split::Train
    } else {
        Split::Validation
    };
    Dataset::new(shape, classes, pixels, labels, split).unwrap()
}

/// Tensors whose values are exactly representable in `f32`.
pub fn random_tensors(rng: &mut SeedRng) -> Vec<NamedTensor> {
    (0..rng.gen_range(0..6))
        .map(|t| {
            let shape: Vec<usize> = (0..rng.gen_range(0..4))
                .map(|_| rng.gen_range(1..5))
                .collect();
            let len = shape.iter().product();
            NamedTensor {
                name: format!(
                    "layer{t}.{}",
                    ["weight", "gamma", "alpha"][rng.gen_range(0..3)]
                ),
                shape,
                data: (0..len)
                    .map(|_| f64::from(rng.gen_range(-4.0f32..4.0)))
                    .collect(),
            }
        })
        .collect()
}

pub fn random_genome(rng: &mut SeedRng) -> Genome {
    Genome::random(rng)
}

/// A surrogate search advanced by `steps` generations.
pub fn surrogate_state(seed: u64, steps: u64) -> (RunConfig, SearchConfig, SearchState) {
    let mut r = rng(seed);
    let target = random_genome(&mut r);
    let cfg = RunConfig {
        seed,
        surrogate_target: Some(target.to_string()),
        max_generations: 400,
        stagnation_window: 400,
        ..RunConfig::default()
    };
    let search = cfg.search_config(1.0);
    let f = SurrogateFitness::new(target);
    let mut state = SearchState::initialize(&search, &f, seed).unwrap();
    for _ in 0..steps {
        state.step(&search, &f);
    }
    (cfg, search, state)
}

pub fn dataset_round_trips(data: &Dataset, dir: &std::path::Path) -> Result<(), String> {
    let back = bnnd::decode(&bnnd::encode(data), data.split()).map_err(|e| e.to_string())?;
    if &back != data {
        return Err("in-memory BNND round trip differs".into());
    }
    let p = dir.join("set.bnnd");
    bnnd::save(&p, data).map_err(|e| e.to_string())?;
    let back = bnnd::load(&p, data.split()).map_err(|e| e.to_string())?;
    if &back != data {
        return Err("BNND file round trip differs".into());
    }
    Ok(())
}

pub fn genome_round_trips(g: Genome) -> Result<(), String> {
    let back: Genome = g.to_string().parse().map_err(|e| format!("{e}"))?;
    let compact: Genome = g
        .compact()
        .map(|c| c.to_string())
        .unwrap_or_else(|| g.to_string())
        .parse()
        .map_err(|e| format!("{e}"))?;
    if back != g || compact != g {
        return Err(format!("genome {g} does not round-trip"));
    }
    Ok(())
}

pub fn tensors_round_trip(t: &[NamedTensor]) -> Result<(), String> {
    let back = model_file::decode(&model_file::encode(t)).map_err(|e| e.to_string())?;
    if back != t {
        return Err("model file round trip differs".into());
    }
    Ok(())
}

pub fn checkpoint_round_trips(seed: u64, steps: u64, dir: &std::path::Path) -> Result<(), String> {
    let (cfg, search, state) = surrogate_state(seed, steps);
    let ck = Checkpoint::capture(&state, &cfg);
    let p = dir.join("ck.json");
    ck.save(&p).map_err(|e| e.to_string())?;
    let loaded = Checkpoint::load(&p).map_err(|e| e.to_string())?;
    if loaded != ck {
        return Err("checkpoint JSON round trip differs".into());
    }
    let restored = loaded.restore(&search).map_err(|e| e.to_string())?;
    if Checkpoint::capture(&restored, &cfg) != ck
        || restored.population() != state.population()
        || restored.cache() != state.cache()
        || restored.rng_word_pos() != state.rng_word_pos()
    {
        return Err("restored search state differs".into());
    }
    Ok(())
}
