#![allow(dead_code)]

use std::ops::Range;

use quantformer::labeling::{build_dataset, Fraction, LabelScheme, LabeledSample, SectionWithReturns};
use quantformer::market_data::{aggregate_period, Frequency, PeriodTable, WindowMatrix, WINDOW_LEN};
use quantformer::model::{ModelConfig, ModelSettings, Pooling, Quantformer};
use quantformer::synthetic::{generate_universe, SyntheticSpec};
use quantformer::trainer::TrainConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_window(rng: &mut ChaCha8Rng) -> WindowMatrix {
    let mut w = [[0.0; 2]; WINDOW_LEN];
    for row in &mut w {
        for x in row.iter_mut() {
            *x = rng.random_range(-2.0..2.0);
        }
    }
    w
}

pub fn random_target(rng: &mut ChaCha8Rng, classes: usize) -> Vec<f64> {
    let mut y = vec![0.0; classes];
    y[rng.random_range(0..classes)] = 1.0;
    y
}

/// ‖a − b‖ / max(‖a‖, ‖b‖, floor)
pub fn block_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}

/// Analytic against central-difference gradients of the batch loss, one
/// entry per named parameter tensor.
pub fn network_gradient_errors(config: ModelConfig, samples: usize, seed: u64) -> Vec<(String, f64)> {
    let mut r = rng(seed);
    let windows: Vec<WindowMatrix> = (0..samples).map(|_| random_window(&mut r)).collect();
    let targets: Vec<Vec<f64>> = (0..samples).map(|_| random_target(&mut r, config.classes)).collect();
    let refs: Vec<&WindowMatrix> = windows.iter().collect();

    let model = Quantformer::<f64>::new(config).unwrap();
    let (_, grads) = model.loss_and_gradients(&refs, &targets).unwrap();
    let names: Vec<String> = model.params.named().into_iter().map(|(n, _)| n).collect();

    let mut out = Vec::new();
    for (slot, name) in names.into_iter().enumerate() {
        let len = model.params.tensors()[slot].len();
        let mut numeric = Vec::with_capacity(len);
        for j in 0..len {
            let mut plus = model.clone();
            plus.params.tensors_mut()[slot].data_mut()[j] += FD_STEP;
            let mut minus = model.clone();
            minus.params.tensors_mut()[slot].data_mut()[j] -= FD_STEP;
            let lp = plus.loss(&refs, &targets).unwrap();
            let lm = minus.loss(&refs, &targets).unwrap();
            numeric.push((lp - lm) / (2.0 * FD_STEP));
        }
        let err = block_relative_error(grads.get(slot).data(), &numeric, 1e-7);
        out.push((name, err));
    }
    out
}

/// Planted-signal market used by the learnability and strategy checks.
pub struct PlantedRun {
    pub table: PeriodTable,
    pub scheme: LabelScheme,
    pub train: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
    pub test_decisions: Range<usize>,
}

/// Sections up to decision period `cutoff` train; later ones test.
pub fn planted_run(seed: u64, signal_strength: f64, cutoff: usize) -> PlantedRun {
    let spec = SyntheticSpec {
        seed,
        stocks: 50,
        periods: 120,
        frequency: Frequency::Monthly,
        signal_strength,
        ..SyntheticSpec::default()
    };
    let panel = generate_universe(&spec).unwrap();
    let table = aggregate_period(&panel, Frequency::Monthly).unwrap();
    let scheme = LabelScheme::new(3, Fraction::new(1, 3).unwrap(), false).unwrap();
    let sections = quantformer::labeling::prepare_sections(&table, 0..table.period_count()).unwrap();
    let (fit, held): (Vec<SectionWithReturns>, Vec<SectionWithReturns>) =
        sections.into_iter().partition(|s| s.section.decision_time <= cutoff);
    let start = held.first().unwrap().section.decision_time;
    let end = held.last().unwrap().section.decision_time + 1;
    PlantedRun {
        train: build_dataset(&fit, &scheme).unwrap().samples,
        test: build_dataset(&held, &scheme).unwrap().samples,
        table,
        scheme,
        test_decisions: start..end,
    }
}

pub fn learnability_model(seed: u64) -> ModelConfig {
    ModelSettings {
        d_model: 16,
        heads: 4,
        layers: 2,
        pooling: Pooling::Last,
        model_seed: seed,
        ..ModelSettings::default()
    }
    .resolve(3)
    .unwrap()
}

pub fn learnability_training(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 50,
        batch_size: 64,
        learning_rate: 0.001,
        shuffle_seed: seed,
        ..TrainConfig::default()
    }
}
