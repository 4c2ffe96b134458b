use bayes_mar::mdm::{apply_mdm, MdmSpec, Scenario};
use bayes_mar::predictive::{estimate, functional_estimate, generate, posterior_mixtures, Target};
use bayes_mar::rng::seeded;
use bayes_mar::sampler::{run_sampler, PriorHyper, SamplerConfig};

#[test]
fn generated_quantile_settles_as_the_sample_grows() {
    let complete = Scenario::gauss3d().sample(300, &mut seeded(31)).unwrap();
    let data = apply_mdm(&complete, &MdmSpec::step_mar3d(0.05).unwrap(), &mut seeded(32)).unwrap();
    let prior = PriorHyper::defaults_for(&data).unwrap();
    let config = SamplerConfig { t_total: 300, t_burn: 100, ..SamplerConfig::default() };
    let draws = run_sampler(&data, &prior, &config, &mut seeded(33)).unwrap();
    let t = [Target::Quantile(0, 0.1)];
    let q = |n: usize| {
        let g = generate(&draws, n, &mut seeded(34)).unwrap();
        assert_eq!(g.rows.len(), n);
        estimate(&g.rows, &t).unwrap().value(&t[0]).unwrap()
    };
    let (small, large) = (q(100_000), q(400_000));
    assert!((small - large).abs() < 0.01, "{small} vs {large}");
    let exact = functional_estimate(&posterior_mixtures(&draws).unwrap(), &t).unwrap().value(&t[0]).unwrap();
    assert!((large - exact).abs() < 0.01, "{large} vs {exact}");
}
