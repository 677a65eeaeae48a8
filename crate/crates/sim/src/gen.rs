//! Synthetic fleet and data generation.
//!
//! Every device draws from its own random stream derived as
//! hash(master_seed, "device", index), so generation is independent of
//! visit order and reproducible under parallel execution. Ground truth
//! (news read-probabilities, reference transcriptions, true regression
//! weights) is planted by construction and stays hidden from devices'
//! reported payloads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, Zipf};

use fedtask_core::envelope::Payload;
use fedtask_core::seed::derive_seed;
use fedtask_core::{DataRecord, DeviceProfile, VirtualTime};
use fedtask_device::DataStore;
use fedtask_plugins::fe_asr::{correctness_labels, Utterance};
use fedtask_plugins::ft_news::{read_probability, NewsItem};

use crate::scenario::{AsrDataSpec, FlDataSpec, NewsDataSpec, Program, ScenarioConfig};

/// Feature distribution for correctly recognized words.
const CORRECT_FEATURE_MEAN: [f64; 2] = [1.2, 0.6];
/// Feature distribution for substituted or hallucinated words.
const WRONG_FEATURE_MEAN: [f64; 2] = [-0.6, 0.3];
const FEATURE_STD: f64 = 0.8;

fn weighted_pick<'a, T, R: Rng + ?Sized>(choices: &'a [(T, f64)], rng: &mut R) -> &'a T {
    let total: f64 = choices.iter().map(|(_, w)| w).sum();
    let mut target = rng.random::<f64>() * total;
    for (value, weight) in choices {
        target -= weight;
        if target <= 0.0 {
            return value;
        }
    }
    &choices.last().expect("non-empty distribution").0
}

/// Builds one device profile plus its populated data store.
pub fn generate_device(cfg: &ScenarioConfig, index: usize) -> (DeviceProfile, DataStore) {
    let mut rng = ChaCha12Rng::from_seed(derive_seed(cfg.master_seed, "device", index as u64));
    let opted_in = rng.random_bool(cfg.opt_in_fraction);
    let os_version = *weighted_pick(&cfg.os_versions, &mut rng);
    let device_type = weighted_pick(&cfg.device_types, &mut rng).clone();
    let unlocked = rng.random_bool(cfg.unlocked_fraction);

    let mut registered_plugins = Vec::new();
    if cfg.data.news.is_some() {
        registered_plugins.push(fedtask_plugins::ft_news::NEWS_PLUGIN_ID.to_string());
    }
    if cfg.data.asr.is_some() {
        registered_plugins.push(fedtask_plugins::fe_asr::ASR_PLUGIN_ID.to_string());
    }
    if cfg.data.fl.is_some() {
        registered_plugins.push(fedtask_pfl::FL_PLUGIN_ID.to_string());
    }
    if matches!(cfg.program, Program::Tasks { .. }) {
        registered_plugins.push(crate::fleet::ECHO_PLUGIN_ID.to_string());
    }

    let profile = DeviceProfile {
        device_id: format!("sim-device-{index:06}"),
        os_version,
        device_type,
        opted_in,
        power_connected: true,
        idle: true,
        unmetered_network: true,
        registered_plugins,
    };

    let mut store = DataStore::new(opted_in);
    store.set_unlocked(unlocked);
    let mut data_rng =
        ChaCha12Rng::from_seed(derive_seed(cfg.master_seed, "device-data", index as u64));
    if let Some(news) = &cfg.data.news {
        populate_news(&mut store, news, &mut data_rng);
    }
    if let Some(asr) = &cfg.data.asr {
        populate_asr(&mut store, asr, &mut data_rng);
    }
    if let Some(fl) = &cfg.data.fl {
        let truth = fl_true_weights(cfg.master_seed, fl.dim);
        populate_fl(&mut store, fl, &truth, &mut data_rng);
    }
    (profile, store)
}

fn write_record<R: Rng + ?Sized>(store: &mut DataStore, key: &str, payload: Payload, rng: &mut R) {
    // Generation bypasses nothing: records flow through the normal write
    // path (default policy, subsample 1).
    store.write(DataRecord::new(key, payload, VirtualTime::ZERO), rng);
}

fn populate_news<R: Rng + ?Sized>(store: &mut DataStore, spec: &NewsDataSpec, rng: &mut R) {
    for _ in 0..spec.items_per_device {
        let item = NewsItem {
            age_hours: rng.random::<f64>() * spec.max_age_hours,
            topic_affinities: (0..spec.topic_count).map(|_| rng.random::<f64>()).collect(),
            source_quality: rng.random::<f64>(),
            label: false,
        };
        let p = read_probability(&spec.true_params, &item);
        let tapped = rng.random_bool(p.clamp(0.0, 1.0));
        // Dwell time with exceedance probability p at the label threshold:
        // dwell ~ Exp(scale), P(dwell >= threshold) = p.
        let dwell_seconds = if p >= 1.0 {
            spec.dwell_threshold_seconds * 2.0
        } else {
            let scale = -spec.dwell_threshold_seconds / p.max(1e-12).ln();
            -scale * rng.random::<f64>().max(1e-300).ln()
        };

        let mut payload = Payload::new();
        payload.insert("age_hours".into(), serde_json::json!(item.age_hours));
        payload.insert("topic_affinities".into(), serde_json::json!(item.topic_affinities));
        payload.insert("source_quality".into(), serde_json::json!(item.source_quality));
        payload.insert("tapped".into(), serde_json::json!(tapped));
        payload.insert("dwell_seconds".into(), serde_json::json!(dwell_seconds));
        write_record(store, &spec.data_key, payload, rng);
    }
}

/// Draws word features correlated with correctness.
fn word_features<R: Rng + ?Sized>(correct: bool, rng: &mut R) -> Vec<f64> {
    let means = if correct { CORRECT_FEATURE_MEAN } else { WRONG_FEATURE_MEAN };
    let normal = Normal::new(0.0, FEATURE_STD).expect("valid std");
    means.iter().map(|m| m + normal.sample(rng)).collect()
}

/// Generates one utterance: Zipfian reference, substitution/deletion
/// corruption. Substituted and hallucinated words come from a disjoint
/// error vocabulary, so they never alias reference words and the optimal
/// alignment cost equals the positional substitution count.
pub fn generate_utterance<R: Rng + ?Sized>(spec: &AsrDataSpec, rng: &mut R) -> Utterance {
    if spec.no_speech_rate > 0.0 && rng.random_bool(spec.no_speech_rate) {
        // Background noise: no speech, but the recognizer still emits a
        // couple of low-confidence words.
        let count = rng.random_range(1..=3);
        let mut hypothesis_words = Vec::new();
        let mut features = Vec::new();
        for _ in 0..count {
            hypothesis_words.push(format!("x{:05}~", rng.random_range(0..100_000)));
            features.push(word_features(false, rng));
        }
        return Utterance { reference_words: vec![], hypothesis_words, word_features: features };
    }

    let zipf = Zipf::new(spec.vocab_size as f64, spec.zipf_exponent).expect("valid zipf");
    let length = rng.random_range(spec.ref_len_range.0..=spec.ref_len_range.1);
    let reference_words: Vec<String> =
        (0..length).map(|_| format!("w{:05}", zipf.sample(rng) as u64)).collect();

    let mut hypothesis_words = Vec::new();
    let mut features = Vec::new();
    for word in &reference_words {
        if spec.p_del > 0.0 && rng.random_bool(spec.p_del) {
            continue;
        }
        if rng.random_bool(spec.p_sub) {
            hypothesis_words.push(format!("x{:05}~", rng.random_range(0..100_000)));
            features.push(word_features(false, rng));
        } else {
            hypothesis_words.push(word.clone());
            features.push(word_features(true, rng));
        }
    }
    Utterance { reference_words, hypothesis_words, word_features: features }
}

fn populate_asr<R: Rng + ?Sized>(store: &mut DataStore, spec: &AsrDataSpec, rng: &mut R) {
    for _ in 0..spec.utterances_per_device {
        let utterance = generate_utterance(spec, rng);
        let value = serde_json::to_value(&utterance).expect("utterance serializes");
        let serde_json::Value::Object(payload) = value else { unreachable!() };
        write_record(store, &spec.data_key, payload, rng);
    }
}

/// The planted regression weights, derived from the master seed alone.
pub fn fl_true_weights(master_seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha12Rng::from_seed(derive_seed(master_seed, "fl-truth", 0));
    (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

fn populate_fl<R: Rng + ?Sized>(store: &mut DataStore, spec: &FlDataSpec, truth: &[f64], rng: &mut R) {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let shift: Vec<f64> =
        (0..spec.dim).map(|_| spec.non_iid_skew * normal.sample(rng)).collect();
    let noise = Normal::new(0.0, spec.label_noise_std.max(0.0)).ok();
    for _ in 0..spec.samples_per_device {
        let x: Vec<f64> = shift.iter().map(|s| s + normal.sample(rng)).collect();
        let mut y: f64 = x.iter().zip(truth).map(|(v, w)| v * w).sum();
        if spec.label_noise_std > 0.0 {
            y += noise.as_ref().expect("noise dist").sample(rng);
        }
        let mut payload = Payload::new();
        payload.insert("x".into(), serde_json::json!(x));
        payload.insert("y".into(), serde_json::json!(y));
        write_record(store, &spec.data_key, payload, rng);
    }
}

/// Central labeled utterances for confidence-model training and rho
/// calibration, drawn from the same distribution as the fleet data.
pub fn central_asr_set(master_seed: u64, spec: &AsrDataSpec, size: usize) -> Vec<Utterance> {
    let mut rng = ChaCha12Rng::from_seed(derive_seed(master_seed, "asr-central", 0));
    // The central set mirrors the paper's curated test data: scrubbed of
    // no-speech recordings.
    let mut scrubbed = spec.clone();
    scrubbed.no_speech_rate = 0.0;
    (0..size).map(|_| generate_utterance(&scrubbed, &mut rng)).collect()
}

/// Word-level training examples (features, correct) from labeled utterances.
pub fn word_training_examples(utterances: &[Utterance]) -> Vec<(Vec<f64>, bool)> {
    let mut examples = Vec::new();
    for utterance in utterances {
        let labels = correctness_labels(&utterance.hypothesis_words, &utterance.reference_words);
        for (features, correct) in utterance.word_features.iter().zip(labels) {
            examples.push((features.clone(), correct));
        }
    }
    examples
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{AvailabilityModel, DataSpec, ServerTuning};
    use fedtask_plugins::fe_asr::edit_distance;
    use fedtask_plugins::ft_news::PersonalizationParams;

    fn asr_spec(p_sub: f64, p_del: f64, no_speech: f64) -> AsrDataSpec {
        AsrDataSpec {
            utterances_per_device: 5,
            vocab_size: 200,
            zipf_exponent: 1.1,
            ref_len_range: (3, 12),
            p_sub,
            p_del,
            no_speech_rate: no_speech,
            data_key: "dictation_audio".into(),
        }
    }

    fn scenario(fleet_size: usize, opt_in: f64) -> ScenarioConfig {
        ScenarioConfig {
            fleet_size,
            opt_in_fraction: opt_in,
            master_seed: 7,
            availability: AvailabilityModel::default(),
            os_versions: vec![(14, 0.5), (15, 0.5)],
            device_types: vec![("phone".into(), 1.0)],
            unlocked_fraction: 1.0,
            transport_failure_rate: 0.0,
            execution_deadline_millis: 600_000,
            server: ServerTuning::default(),
            data: DataSpec {
                news: Some(NewsDataSpec {
                    items_per_device: 8,
                    true_params: PersonalizationParams::default(),
                    topic_count: 3,
                    max_age_hours: 48.0,
                    data_key: "news_interaction".into(),
                    dwell_threshold_seconds: 10.0,
                }),
                asr: None,
                fl: None,
            },
            persist_results: false,
            program: Program::Tasks { tasks: vec![] },
        }
    }

    #[test]
    fn full_opt_in_populates_every_store() {
        let cfg = scenario(10, 1.0);
        for i in 0..10 {
            let (profile, store) = generate_device(&cfg, i);
            assert!(profile.opted_in);
            assert_eq!(store.count_for_key("news_interaction"), 8);
        }
    }

    #[test]
    fn opted_out_devices_store_nothing() {
        let cfg = scenario(10, 0.0);
        for i in 0..10 {
            let (profile, store) = generate_device(&cfg, i);
            assert!(!profile.opted_in);
            assert!(store.is_empty());
        }
    }

    #[test]
    fn generation_is_order_independent() {
        let cfg = scenario(4, 0.7);
        let (profile_a, store_a) = generate_device(&cfg, 2);
        // Generating other devices first must not disturb device 2.
        let _ = generate_device(&cfg, 0);
        let _ = generate_device(&cfg, 3);
        let (profile_b, store_b) = generate_device(&cfg, 2);
        assert_eq!(profile_a, profile_b);
        assert_eq!(store_a.digest(), store_b.digest());
    }

    #[test]
    fn substitution_only_corruption_keeps_positional_identity() {
        // With a disjoint error vocabulary, edit distance equals the count
        // of substituted positions for every generated utterance.
        let spec = asr_spec(0.3, 0.0, 0.0);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..2_000 {
            let utt = generate_utterance(&spec, &mut rng);
            assert_eq!(utt.hypothesis_words.len(), utt.reference_words.len());
            let positional = utt
                .hypothesis_words
                .iter()
                .zip(&utt.reference_words)
                .filter(|(h, r)| h != r)
                .count();
            assert_eq!(edit_distance(&utt.hypothesis_words, &utt.reference_words), positional);
        }
    }

    #[test]
    fn no_speech_utterances_have_empty_references() {
        let spec = asr_spec(0.1, 0.0, 1.0);
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let utt = generate_utterance(&spec, &mut rng);
        assert!(utt.reference_words.is_empty());
        assert!(!utt.hypothesis_words.is_empty());
    }

    #[test]
    fn features_separate_correct_from_wrong() {
        let spec = asr_spec(0.3, 0.0, 0.0);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut correct_sum = 0.0;
        let mut correct_n = 0;
        let mut wrong_sum = 0.0;
        let mut wrong_n = 0;
        for _ in 0..500 {
            let utt = generate_utterance(&spec, &mut rng);
            for (word, features) in utt.hypothesis_words.iter().zip(&utt.word_features) {
                if word.ends_with('~') {
                    wrong_sum += features[0];
                    wrong_n += 1;
                } else {
                    correct_sum += features[0];
                    correct_n += 1;
                }
            }
        }
        let correct_mean = correct_sum / correct_n as f64;
        let wrong_mean = wrong_sum / wrong_n as f64;
        assert!(correct_mean > 0.8, "correct-word feature mean {correct_mean}");
        assert!(wrong_mean < 0.0, "wrong-word feature mean {wrong_mean}");
    }
}
