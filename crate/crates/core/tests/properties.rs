mod common;

use common::tv_distance;
use nbp::distributions::{RngStream, StreamName};
use nbp::gibbs::{draw_data, draw_prior, sweep, unpin, Hyperparams, TokenData, Variant};
use nbp::measures::{simulate_corpus, SimulationSpec};
use nbp::run::{Chain, RunConfig};

fn nb_pmf(m: u64, r: f64, p: f64) -> f64 {
    let rising: f64 = (0..m).map(|i| r + i as f64).product();
    let fact: f64 = (1..=m).map(|i| i as f64).product();
    rising / fact * (1.0 - p).powf(r) * p.powi(m as i32)
}

#[test]
fn gamma_nb_simulation_has_vmr_one_over_one_minus_p() {
    // Conditional on (r_k, p_j): E n = r p/(1-p), Var n = E n / (1-p), so
    // the standardized squared deviation averages to one.
    let (mut z2, mut cells) = (0.0, 0usize);
    for seed in 0..200 {
        let c = simulate_corpus(&SimulationSpec {
            variant: Variant::GammaNb,
            num_topics: 3,
            num_terms: 10,
            num_docs: 20,
            mean_doc_len: 30.0,
            // r around 2: tiny dispersions make n_jk so heavy-tailed that the
            // sample variance converges very slowly
            dispersion_shape: 20.0,
            dispersion_scale: 0.1,
            seed,
            ..SimulationSpec::default()
        })
        .unwrap();
        let t = &c.truth;
        for j in 0..t.num_docs {
            let p = t.p_group[j];
            for k in 0..t.num_topics {
                let mu = t.r_atom[k] * p / (1.0 - p);
                let n = t.n_jk[j * t.num_topics + k] as f64;
                z2 += (n - mu).powi(2) / (mu / (1.0 - p));
                cells += 1;
            }
        }
    }
    let ratio = z2 / cells as f64;
    assert!((ratio - 1.0).abs() < 0.05, "observed / predicted variance = {ratio}");
}

#[test]
fn beta_geometric_counts_are_geometric_given_p() {
    // n_jk | p_k ~ NB(1, p_k); the oracle averages that PMF over the drawn p_k.
    let hp = Hyperparams { k: 3, a0: 2.0, b0: 3.0, ..Hyperparams::default() };
    let mut rng = RngStream::named(5, StreamName::Simulation);
    let bins = 40;
    let mut hist = vec![0u64; bins + 1];
    let mut pmf = vec![0.0; bins];
    let reps = 20_000;
    let mut cells = 0u64;
    for _ in 0..reps {
        let mut s = draw_prior(Variant::BetaGeometric, &hp, 4, &[0, 0], &mut rng).unwrap();
        draw_data(&mut s, &mut rng).unwrap();
        for j in 0..2 {
            for k in 0..3 {
                let n = s.n_jk[j * 3 + k] as usize;
                hist[n.min(bins)] += 1;
                for (m, slot) in pmf.iter_mut().enumerate() {
                    *slot += nb_pmf(m as u64, 1.0, s.p_atom[k]);
                }
                cells += 1;
            }
        }
    }
    pmf.iter_mut().for_each(|x| *x /= cells as f64);
    let d = tv_distance(&hist, &pmf);
    assert!(d < 0.01, "TV {d}");
}

#[test]
fn top_tables_are_mostly_binary_when_truncation_is_generous() {
    let corpus = simulate_corpus(&SimulationSpec {
        variant: Variant::GammaNb,
        num_topics: 5,
        num_terms: 40,
        num_docs: 60,
        mean_doc_len: 60.0,
        seed: 3,
        ..SimulationSpec::default()
    })
    .unwrap();
    let config = RunConfig {
        variant: Variant::GammaNb,
        iterations: 1500,
        burn_in: 1000,
        warmup: 50,
        seed: 3,
        hyperparams: Hyperparams { k: 60, ..Hyperparams::default() },
        ..RunConfig::default()
    };
    assert!(config.hyperparams.k >= 10 * corpus.truth.active_topics());
    let data = TokenData::from_matrix(&corpus.counts);
    let empty = nbp::corpus::SparseCountMatrix::from_triplets(60, 40, &[]).unwrap();
    let mut chain = Chain::start(&config, &data, &empty, 0).unwrap();
    let (mut binary, mut total) = (0usize, 0usize);
    while !chain.finished(&config) {
        chain.step(&config, &data, &empty).unwrap();
        // starting from all K atoms active, the chain needs a while to prune
        if chain.iteration > 1000 {
            binary += chain.state.top_tables.iter().filter(|&&l| l <= 1).count();
            total += chain.state.top_tables.len();
        }
    }
    let frac = binary as f64 / total as f64;
    assert!(frac >= 0.95, "l'_k in {{0, 1}} for {frac} of atoms");
}

#[test]
fn crt_tables_bounded_by_counts_after_every_sweep() {
    let corpus = simulate_corpus(&SimulationSpec {
        variant: Variant::MarkedBetaNb,
        num_docs: 20,
        num_terms: 15,
        mean_doc_len: 25.0,
        ..SimulationSpec::default()
    })
    .unwrap();
    let data = TokenData::from_matrix(&corpus.counts);
    for variant in Variant::ALL {
        let hp = Hyperparams { k: 6, ..Hyperparams::default() };
        let mut rng = RngStream::new(9, 0);
        let mut s = nbp::gibbs::initialize(variant, &data, &hp, &mut rng).unwrap();
        unpin(&mut s);
        for _ in 0..20 {
            sweep(&mut s, &data, &hp, &mut rng).unwrap();
            s.check_consistency(&data).unwrap();
            // no CRT draws: θ = r, fixed r = 1, or Dirichlet weights
            if matches!(variant, Variant::Nb | Variant::BetaGeometric | Variant::DirPfa) {
                continue;
            }
            for (&l, &n) in s.tables.iter().zip(&s.n_jk) {
                assert!(l <= n && (n == 0 || l >= 1), "{variant}: l = {l}, n = {n}");
            }
        }
    }
}
