use super::*;

const BASE: &str = r#"
seed = 5
rounds = 20
reset_pools = true

[[pools]]
protocol = "uni"
pair = ["ETH", "USDC"]
reserves = [1000000000, 2000000000]

[[pools]]
protocol = "sushi"
pair = ["ETH", "USDC"]
reserves = [1000000000, 2000000000]

[population]
users = 3
pair = ["ETH", "USDC"]
protocols = ["uni", "sushi"]
amount = { family = "log_normal", location = 2.5, scale = 0.4 }
"#;

fn base() -> ScenarioConfig {
    ScenarioConfig::from_toml(BASE).unwrap()
}

#[test]
fn minimal_config_fills_defaults() {
    let c = base();
    assert_eq!(c.matchmaker, MatchmakerSection::default());
    assert_eq!(c.pools[0].fee_ppm, 3000);
    assert_eq!(c.population.hint_mix.len(), 1);
    assert!(c.searchers.is_empty() && c.attack.is_none());
}

#[test]
fn validation_names_the_field() {
    let e = ScenarioConfig::from_toml(&format!("{BASE}\n[matchmaker]\nsubsample_rate = 1.5\n")).unwrap_err();
    assert!(e.to_string().contains("subsample_rate"), "{e}");
    let e = ScenarioConfig::from_toml(&BASE.replace("rounds = 20", "rounds = 20\nbogus = 1")).unwrap_err();
    assert!(e.to_string().contains("bogus"), "{e}");
    let spec = r#"
[[specs]]
id = "v"
scope = { pair = { token1 = "DAI", token2 = "USDC" } }
min_opted_in = 1
min_opted_out = 1
query = { kind = "count" }
epsilon_cond = 1.0
epsilon_query = 1.0
"#;
    let e = ScenarioConfig::from_toml(&format!("{BASE}{spec}")).unwrap_err();
    assert!(e.to_string().contains("specs[0].scope"), "{e}");
    let e = ScenarioConfig::from_toml(&BASE.replace(r#"protocols = ["uni", "sushi"]"#, r#"protocols = ["curve"]"#))
        .unwrap_err();
    assert!(e.to_string().contains("population.protocols"), "{e}");
}

#[test]
fn config_echo_reloads_identically() {
    let mut c = base();
    c.searchers.push(SearcherConfig {
        id: "b".into(),
        strategy: StrategyKind::BruteForce,
        k: Some(3),
        rebate_percent: 10,
        cuts: crate::strategies::CutMode::Sample,
        prior: Some(AmountPrior::point(4.0)),
        learn_prior: true,
        prior_family: crate::strategies::PriorFamily::Histogram,
        scan_limit: 64,
    });
    c.matchmaker.block_capacity = Some(7);
    let text = c.to_toml().unwrap();
    assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), c);
}

#[test]
fn no_searchers_means_standalone_and_no_kickbacks() {
    let m = run_scenario(&base()).unwrap();
    assert_eq!(m.rounds.len(), 20);
    assert!(m.rounds.iter().all(|r| r.standalone == 3 && r.bundles == 0));
    assert!(m.kickbacks.is_empty());
}

#[test]
fn profile_counts_apportion_users() {
    let mut p = base().population;
    p.users = 10;
    p.hint_mix = vec![
        HintProfile { weight: 2.0, plain: vec![], opt_in: vec![] },
        HintProfile { weight: 1.0, plain: vec![], opt_in: vec![] },
    ];
    assert_eq!(p.profile_counts(), vec![7, 3]);
    p.users = 3;
    assert_eq!(p.profile_counts(), vec![2, 1]);
}
