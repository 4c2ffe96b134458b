use bayes_mar::data::CompleteDataset;
use bayes_mar::rng::seeded;
use bayes_mar::sampler::{run_sampler, PriorHyper, SamplerConfig};
use rand::Rng;
use rand_distr::StandardNormal;

fn modal_k(seed: u64) -> usize {
    let mut r = seeded(seed);
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|i| {
            let c = if i % 2 == 0 { -4.0 } else { 4.0 };
            (0..2).map(|_| c + r.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect();
    let data = CompleteDataset::from_rows(2, &rows).unwrap().to_masked();
    let prior = PriorHyper::defaults_for(&data).unwrap();
    let draws = run_sampler(&data, &prior, &SamplerConfig::default(), &mut seeded(seed + 1000)).unwrap();
    let mut counts = std::collections::BTreeMap::new();
    for d in &draws.draws {
        *counts.entry(d.state.k()).or_insert(0usize) += 1;
    }
    counts.into_iter().max_by_key(|&(k, c)| (c, std::cmp::Reverse(k))).unwrap().0
}

#[test]
fn modal_cluster_count_recovers_two_components() {
    let ks: Vec<usize> = (0..10).map(modal_k).collect();
    let hits = ks.iter().filter(|&&k| k == 2).count();
    assert!(hits >= 8, "modal K per run: {ks:?}");
}
