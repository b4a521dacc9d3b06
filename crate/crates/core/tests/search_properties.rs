use proptest::prelude::*;
use riskscope_core::fixtures::{patient_query, patients};
use riskscope_core::*;

fn svt_runs(queries: &[f64], threshold: f64, cfg: &SvtConfig, runs: u64) -> Vec<SvtOutcome> {
    (0..runs)
        .map(|s| svt_above_threshold(queries.iter().copied(), threshold, cfg, NoiseStream::from_seed(s)))
        .collect()
}

#[test]
fn svt_split_follows_one_to_two_thirds_power() {
    let cfg = SvtConfig::new(1.0, 1000, 1e-5).unwrap();
    let oracle = 1.0 / (1.0 + 4f64.cbrt());
    assert!((cfg.eps1 - oracle).abs() < 1e-15);
    assert!((cfg.eps1 - 0.3864882).abs() < 1e-6);
    assert!((cfg.eps2 / cfg.eps1 - 4f64.cbrt()).abs() < 1e-12);
    assert_eq!(cfg.eps1 + cfg.eps2, 1.0);
    assert_eq!(cfg.delta_svt, 1e-3);
}

#[test]
fn svt_far_below_threshold_exhausts() {
    let cfg = SvtConfig::new(1.0, 1_000_000, 0.0).unwrap();
    let out = svt_runs(&[-0.01; 37], 0.0, &cfg, 1000);
    assert!(out.iter().all(|o| *o == SvtOutcome::Exhausted));
}

#[test]
fn svt_far_above_threshold_stops_at_the_first_element() {
    let cfg = SvtConfig::new(1.0, 1_000, 0.0).unwrap();
    let out = svt_runs(&[0.5; 10], 0.0, &cfg, 1000);
    assert!(out.iter().all(|o| *o == SvtOutcome::Above(0)));
}

#[test]
fn svt_at_the_threshold_is_a_fair_coin() {
    // ν − ρ is symmetric about zero, so P(q + ν ≥ τ + ρ) = 1/2 when q = τ
    let cfg = SvtConfig::new(1.0, 1_000, 0.0).unwrap();
    let hits = svt_runs(&[0.0], 0.0, &cfg, 4000).iter().filter(|o| **o == SvtOutcome::Above(0)).count();
    let sd = (4000.0f64 * 0.25).sqrt();
    assert!(((hits as f64) - 2000.0).abs() < 4.0 * sd, "{hits}");
}

#[test]
fn search_results_are_deterministic_per_seed() {
    let d = patients();
    let pq = PreparedQuery::prepare(&d, &patient_query(), Mechanism::laplace(), SearchOptions::default()).unwrap();
    let grid = EpsilonGrid::default37();
    let pref = PrivacyPreference::min_max_ratio(0.5).unwrap();
    let run = |seed| serde_json::to_string(&find_epsilon_from_rdr(&pq, &grid, &pref, &NoiseSource::new(seed, "q")).unwrap()).unwrap();
    assert_eq!(run(11), run(11));
    assert_ne!(run(11), run(12));
    let cfg = SvtConfig::new(1.0, 3, 0.01).unwrap();
    let svt = |seed| serde_json::to_string(&find_and_release_epsilon(&pq, &grid, &cfg, &NoiseSource::new(seed, "q")).unwrap()).unwrap();
    assert_eq!(svt(3), svt(3));
}

#[test]
fn release_noise_depends_only_on_seed_query_and_index() {
    let d = patients();
    let pq = PreparedQuery::prepare(&d, &patient_query(), Mechanism::laplace(), SearchOptions::default()).unwrap();
    let grid = EpsilonGrid::new(vec![1.0, 0.1, 0.01]).unwrap();
    let pref = PrivacyPreference::min_max_ratio(0.9).unwrap();
    let r = find_epsilon_from_rdr(&pq, &grid, &pref, &NoiseSource::new(42, "q")).unwrap();
    let mut stream = NoiseSource::new(42, "q").stream(StreamLabel::Release(1));
    let expected = 1.0 + stream.laplace(1.0 / 0.1);
    assert_eq!(r.output.unwrap().values(), [expected]);
}

#[test]
fn the_default_grid_has_thirty_seven_descending_values() {
    let g = EpsilonGrid::default37();
    assert_eq!(g.len(), 37);
    assert_eq!(g.values()[0], 10.0);
    assert_eq!(*g.values().last().unwrap(), 0.001);
    assert!(g.values().windows(2).all(|w| w[0] > w[1]));
    let truncated = g.retain_above(PrivacyAmount::from_f64(0.7).unwrap());
    assert!(truncated.values().iter().all(|&e| e > 0.7));
    assert!(!truncated.values().contains(&0.7));
}

proptest! {
    #[test]
    fn svt_picks_a_candidate_meeting_the_variance_threshold_when_noise_vanishes(
        tau in 0.0f64..0.25, seed in any::<u64>(),
    ) {
        let d = patients();
        let pq = PreparedQuery::prepare(&d, &patient_query(), Mechanism::laplace(), SearchOptions::default()).unwrap();
        let grid = EpsilonGrid::default37();
        let cfg = SvtConfig::new(1e12, 3, tau).unwrap();
        let r = find_and_release_epsilon(&pq, &grid, &cfg, &NoiseSource::new(seed, "q")).unwrap();
        let first = grid.values().iter().position(|&e| {
            pq.profile(EpsilonCandidate::Finite(e)).unwrap().normalized_variance() <= tau
        });
        prop_assert_eq!(r.chosen_index, first);
    }
}
