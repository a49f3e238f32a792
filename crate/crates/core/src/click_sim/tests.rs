use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn flat_params(n: usize, alpha: f64, sigma: f64, query: &str) -> TableParameters {
    let mut p = TableParameters::default();
    for i in 0..n {
        p.attractiveness.insert(format!("s{i}"), alpha);
        p.satisfaction
            .insert((query.to_string(), format!("s{i}")), sigma);
    }
    p
}

fn ranked(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i}")).collect()
}

fn small_catalog() -> Catalog {
    generate_catalog(
        &CatalogSpec {
            n_skus: 300,
            ..CatalogSpec::default()
        },
        5,
    )
}

#[test]
fn unmatched_request_has_no_clicks() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = flat_params(10, 1.0, 1.0, "q");
    let params = SimulationParams {
        gamma: vec![1.0; 10],
        ..SimulationParams::default()
    };
    for _ in 0..100 {
        let (r, t) = simulate_request(
            0,
            "u",
            &toks("q"),
            &toks("q"),
            &ranked(10),
            false,
            &params,
            &p,
            &mut rng,
        )
        .unwrap();
        assert!(r.clicks.is_empty());
        assert!(!t.matched);
    }
}

#[test]
fn certain_parameters_click_everything() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = flat_params(10, 1.0, 1.0, "q");
    let params = SimulationParams {
        gamma: vec![1.0; 10],
        ..SimulationParams::default()
    };
    let (r, _) = simulate_request(
        0,
        "u",
        &toks("q"),
        &toks("q"),
        &ranked(10),
        true,
        &params,
        &p,
        &mut rng,
    )
    .unwrap();
    assert_eq!(r.clicks, (1..=10).collect::<Vec<_>>());
    r.validate().unwrap();
}

#[test]
fn missing_entries_are_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut p = flat_params(3, 0.5, 0.5, "q");
    let params = SimulationParams::default();
    let err = simulate_request(
        0,
        "u",
        &toks("q"),
        &toks("other"),
        &ranked(3),
        true,
        &params,
        &p,
        &mut rng,
    )
    .unwrap_err();
    assert!(matches!(
        err,
        Error::MissingParameter {
            kind: "satisfaction",
            ..
        }
    ));
    p.attractiveness.remove("s1");
    let err = simulate_request(
        0,
        "u",
        &toks("q"),
        &toks("q"),
        &ranked(3),
        true,
        &params,
        &p,
        &mut rng,
    )
    .unwrap_err();
    assert!(matches!(
        err,
        Error::MissingParameter {
            kind: "attractiveness",
            ..
        }
    ));
}

#[test]
fn ctr_by_rank_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (alpha, sigma) = (0.6, 0.7);
    let p = flat_params(10, alpha, sigma, "q");
    let params = SimulationParams::default();
    let n = 100_000;
    let mut clicks = [0usize; 10];
    for _ in 0..n {
        let (r, _) = simulate_request(
            0,
            "u",
            &toks("q"),
            &toks("q"),
            &ranked(10),
            true,
            &params,
            &p,
            &mut rng,
        )
        .unwrap();
        for c in r.clicks {
            clicks[c - 1] += 1;
        }
    }
    for (r, &c) in clicks.iter().enumerate() {
        let expect = params.gamma[r] * alpha * sigma;
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        let got = c as f64 / n as f64;
        assert!(
            (got - expect).abs() <= 3.0 * se,
            "rank {}: {got} vs {expect}",
            r + 1
        );
    }
}

#[test]
fn trace_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = flat_params(10, 0.5, 0.5, "q");
    let params = SimulationParams::default();
    for i in 0..10_000 {
        let (r, t) = simulate_request(
            0,
            "u",
            &toks("q"),
            &toks("q"),
            &ranked(10),
            i % 3 != 0,
            &params,
            &p,
            &mut rng,
        )
        .unwrap();
        for (k, imp) in t.impressions.iter().enumerate() {
            assert_eq!(imp.clicked, r.clicks.contains(&(k + 1)));
            if imp.clicked {
                assert!(imp.examined && imp.attracted && imp.satisfied && t.matched);
            }
        }
    }
}

#[test]
fn examination_and_attraction_uncorrelated() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = flat_params(10, 0.4, 0.5, "q");
    let params = SimulationParams {
        gamma: vec![0.5; 10],
        ..SimulationParams::default()
    };
    let mut xs = Vec::new();
    for _ in 0..10_000 {
        let (_, t) = simulate_request(
            0,
            "u",
            &toks("q"),
            &toks("q"),
            &ranked(10),
            true,
            &params,
            &p,
            &mut rng,
        )
        .unwrap();
        xs.extend(
            t.impressions
                .iter()
                .map(|i| (i.examined as u8 as f64, i.attracted as u8 as f64)),
        );
    }
    let n = xs.len() as f64;
    let (me, ma) = (
        xs.iter().map(|x| x.0).sum::<f64>() / n,
        xs.iter().map(|x| x.1).sum::<f64>() / n,
    );
    let cov = xs.iter().map(|(e, a)| (e - me) * (a - ma)).sum::<f64>() / n;
    let corr = cov / (me * (1.0 - me) * ma * (1.0 - ma)).sqrt();
    // under independence the sample correlation has sd 1/√n
    assert!(corr.abs() <= 3.0 / n.sqrt(), "corr {corr}");
}

fn run_sessions(alpha1: f64, alpha2: f64, max: usize, n: usize, seed: u64) -> Vec<Session> {
    let catalog = small_catalog();
    let retriever = TfIdfRetriever::new(&catalog);
    let rel = CatalogRelevance::new(&catalog, 1, (0.2, 0.9));
    let params = SimulationParams {
        alpha1,
        alpha2,
        max_queries: max,
        ..SimulationParams::default()
    };
    let chain = vec![toks("chair"), toks("chair red")];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            simulate_session(
                "u", 0, &chain[1], &chain, &catalog, &retriever, &params, &rel, &mut rng,
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn certain_match_and_stop_gives_single_request() {
    for s in run_sessions(1.0, 0.0, 5, 200, 7) {
        assert_eq!(s.requests.len(), 1);
    }
}

#[test]
fn never_matched_runs_to_max_length() {
    for s in run_sessions(0.0, 0.0, 5, 200, 8) {
        assert_eq!(s.requests.len(), 5);
        assert!(s.requests.iter().all(|r| r.clicks.is_empty()));
        assert_eq!(s.requests[4].query, "chair red");
    }
}

#[test]
fn mean_session_length_matches_chain() {
    let (a1, a2, max, n) = (0.5, 0.5, 10, 10_000);
    let sessions = run_sessions(a1, a2, max, n, 9);
    // continue with c = (1 − α₁) + α₁α₂ each step; E[L] = Σ_{k<max} c^k
    let c: f64 = (1.0 - a1) + a1 * a2;
    let mean_expect: f64 = (0..max).map(|k| c.powi(k as i32)).sum();
    let second: f64 = (0..max)
        .map(|k| (2 * k + 1) as f64 * c.powi(k as i32))
        .sum();
    let sd = (second - mean_expect * mean_expect).sqrt();
    let lens: Vec<f64> = sessions.iter().map(|s| s.requests.len() as f64).collect();
    let mean = lens.iter().sum::<f64>() / n as f64;
    assert!(
        (mean - mean_expect).abs() <= 3.0 * sd / (n as f64).sqrt(),
        "{mean} vs {mean_expect}"
    );
    for s in &sessions {
        for t in &s.traces {
            if !t.matched {
                assert!(t.continued);
            }
        }
        let last = s.traces.last().unwrap();
        assert!(!last.continued || s.requests.len() == max);
    }
}

#[test]
fn empty_catalog_is_an_error() {
    let catalog = Catalog::default();
    let retriever = TfIdfRetriever::new(&catalog);
    let rel = TableParameters::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let err = simulate_session(
        "u",
        0,
        &toks("x"),
        &[toks("x")],
        &catalog,
        &retriever,
        &SimulationParams::default(),
        &rel,
        &mut rng,
    );
    assert!(matches!(err, Err(Error::Empty("catalog"))));
}

#[test]
fn params_validation() {
    assert!(SimulationParams::default().validate().is_ok());
    let bad = |f: fn(&mut SimulationParams)| {
        let mut p = SimulationParams::default();
        f(&mut p);
        p.validate().is_err()
    };
    assert!(bad(|p| p.alpha1 = 1.5));
    assert!(bad(|p| p.alpha2 = -0.1));
    assert!(bad(|p| p.gamma = vec![0.5, 0.6]));
    assert!(bad(|p| p.gamma.clear()));
    assert!(bad(|p| p.max_queries = 0));
    assert!((default_gamma(10)[9] - 1.0 / 3.7).abs() < 1e-15);
}

#[test]
fn clicklog_is_deterministic_and_well_formed() {
    let catalog = small_catalog();
    let cfg = ClickLogConfig::default();
    let a = generate_clicklog(&catalog, 80, &cfg, 11).unwrap();
    let b = generate_clicklog(&catalog, 80, &cfg, 11).unwrap();
    assert_eq!(format_clicklog(&a.requests), format_clicklog(&b.requests));
    assert_eq!(a.ground_truth.to_tsv(), b.ground_truth.to_tsv());
    assert_ne!(
        format_clicklog(&a.requests),
        format_clicklog(&generate_clicklog(&catalog, 80, &cfg, 12).unwrap().requests)
    );
    for r in &a.requests {
        r.validate().unwrap();
        assert!(r.impressions.len() <= 10);
    }
    assert!(a
        .requests
        .windows(2)
        .all(|w| (w[0].ts, &w[0].user) <= (w[1].ts, &w[1].user)));
    let parsed = parse_clicklog(&format_clicklog(&a.requests)).unwrap();
    assert_eq!(parsed, a.requests);
    assert_eq!(
        GroundTruth::from_tsv(&a.ground_truth.to_tsv()).unwrap(),
        a.ground_truth
    );
    // every clicked (query, sku) has a ground-truth entry
    for r in &a.requests {
        for s in r.clicked_skus() {
            assert!(a.ground_truth.get(&r.query, s).is_some());
        }
    }
}

#[test]
fn clicklog_parse_errors_carry_line_numbers() {
    let good = r#"{"ts":1,"user":"u","query":"a b","impressions":[["s1",1]],"clicks":[1]}"#;
    assert_eq!(parse_clicklog(good).unwrap().len(), 1);
    let text = format!("{good}\n{{not json\n");
    assert!(matches!(
        parse_clicklog(&text),
        Err(Error::Parse { line: 2, .. })
    ));
    let bad_click = r#"{"ts":1,"user":"u","query":"a","impressions":[["s1",1]],"clicks":[2]}"#;
    assert!(matches!(
        parse_clicklog(bad_click),
        Err(Error::Parse { line: 1, .. })
    ));
    assert!(matches!(
        GroundTruth::from_tsv("a\tb\n"),
        Err(Error::Parse { line: 1, .. })
    ));
}

#[test]
fn aggregate_ctr_follows_parameters() {
    let catalog = small_catalog();
    // category-only intents, so each logged query is the session intent
    let cfg = ClickLogConfig {
        intent_attributes: (0, 0),
        ..ClickLogConfig::default()
    };
    let seed = 13;
    let log = generate_clicklog(&catalog, 3000, &cfg, seed).unwrap();
    let rel = CatalogRelevance::new(&catalog, seed, cfg.attractiveness);
    let mut shown = [0.0f64; 10];
    let mut clicked = [0.0f64; 10];
    let mut expected = [0.0f64; 10];
    let mut var = [0.0f64; 10];
    for r in &log.requests {
        let q = r.query_tokens();
        for (s, rank) in &r.impressions {
            let p = cfg.params.gamma[rank - 1]
                * cfg.params.alpha1
                * rel.attractiveness(s, &q).unwrap()
                * rel.satisfaction(s, &q).unwrap();
            shown[rank - 1] += 1.0;
            expected[rank - 1] += p;
            var[rank - 1] += p * (1.0 - p);
        }
        for c in &r.clicks {
            clicked[c - 1] += 1.0;
        }
    }
    // per rank, each impression clicks independently with probability
    // γ_r·α₁·α·σ; 4 sd since ten ranks are tested at once
    for r in 0..10 {
        if shown[r] < 100.0 {
            continue;
        }
        let sd = var[r].sqrt();
        assert!(
            (clicked[r] - expected[r]).abs() <= 4.0 * sd,
            "rank {}: {} clicks vs {:.1} expected",
            r + 1,
            clicked[r],
            expected[r]
        );
    }
}
