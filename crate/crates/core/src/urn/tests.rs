use super::*;
use crate::stats::{batch_means_se, mean};
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;
use std::collections::HashMap;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn hp1() -> Hyperparameters {
    let mut hp = Hyperparameters::default_for(1);
    hp.c_y = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    hp.c_x = vec![1.0];
    hp
}

fn sn<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn three_obs() -> Dataset {
    Dataset::from_rows(vec![0.1, 0.4, 3.0], &[vec![0.0], vec![0.3], vec![2.5]]).unwrap()
}

/// Log marginal likelihood of a regression block under the conjugate prior.
fn log_my(data: &Dataset, idx: &[usize], hp: &Hyperparameters) -> f64 {
    let n = idx.len();
    let x = nalgebra::DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { data.row(idx[r])[0] });
    let y = nalgebra::DVector::from_iterator(n, idx.iter().map(|&i| data.y()[i]));
    let c = nalgebra::DMatrix::from_fn(2, 2, |i, j| hp.c_y[i][j]);
    let b0 = nalgebra::DVector::from_column_slice(&hp.beta0);
    let lam = x.transpose() * &x + &c;
    let bn = lam.clone().try_inverse().unwrap() * (x.transpose() * &y + &c * &b0);
    let an = hp.a_y + n as f64 / 2.0;
    let brate = hp.b_y + 0.5 * (y.dot(&y) + b0.dot(&(&c * &b0)) - bn.dot(&(&lam * &bn)));
    -0.5 * n as f64 * LN_2PI + 0.5 * c.determinant().ln() - 0.5 * lam.determinant().ln()
        + hp.a_y * hp.b_y.ln()
        - an * brate.ln()
        + ln_gamma(an)
        - ln_gamma(hp.a_y)
}

/// Log marginal likelihood of a covariate block (one covariate).
fn log_mx(data: &Dataset, idx: &[usize], hp: &Hyperparameters) -> f64 {
    let xs: Vec<f64> = idx.iter().map(|&i| data.row(i)[0]).collect();
    let n = xs.len() as f64;
    let (c, m) = (hp.c_x[0], hp.m[0]);
    let xbar = mean(&xs);
    let an = hp.a_x + n / 2.0;
    let brate = hp.b_x
        + 0.5 * xs.iter().map(|x| (x - xbar).powi(2)).sum::<f64>()
        + 0.5 * n * c * (xbar - m).powi(2) / (n + c);
    -0.5 * n * LN_2PI + 0.5 * (c / (c + n)).ln() + hp.a_x * hp.b_x.ln() - an * brate.ln() + ln_gamma(an)
        - ln_gamma(hp.a_x)
}

/// Log CRP probability of the block sizes with concentration `a`.
fn log_crp(sizes: &[usize], a: f64) -> f64 {
    let n: usize = sizes.iter().sum();
    sizes.iter().map(|&s| a.ln() + ln_gamma(s as f64)).sum::<f64>() - (0..n).map(|i| (a + i as f64).ln()).sum::<f64>()
}

/// Canonical form: θ-labels by first appearance, ψ-labels by first
/// appearance within each θ-block.
fn canonical(k: &[usize], j: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut km: HashMap<usize, usize> = HashMap::new();
    let mut jm: HashMap<(usize, usize), usize> = HashMap::new();
    let mut per_k: HashMap<usize, usize> = HashMap::new();
    let mut ck = Vec::new();
    let mut cj = Vec::new();
    for (&a, &b) in k.iter().zip(j) {
        let next = km.len();
        let ka = *km.entry(a).or_insert(next);
        let cnt = per_k.entry(ka).or_insert(0);
        let jb = *jm.entry((ka, b)).or_insert_with(|| {
            *cnt += 1;
            *cnt - 1
        });
        ck.push(ka);
        cj.push(jb);
    }
    (ck, cj)
}

/// All restricted-growth strings of length `n`.
fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for p in &out {
            let max = p.iter().copied().max().map_or(0, |m| m + 1);
            for l in 0..=max {
                let mut q = p.clone();
                q.push(l);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

fn nested_partition_posterior(data: &Dataset, hp: &Hyperparameters, at: f64, ap: f64) -> HashMap<(Vec<usize>, Vec<usize>), f64> {
    let n = data.n();
    let mut logp: Vec<((Vec<usize>, Vec<usize>), f64)> = Vec::new();
    for kp in set_partitions(n) {
        let nblocks = kp.iter().max().unwrap() + 1;
        let blocks: Vec<Vec<usize>> = (0..nblocks).map(|b| (0..n).filter(|&i| kp[i] == b).collect()).collect();
        let inner: Vec<Vec<Vec<usize>>> = blocks.iter().map(|b| set_partitions(b.len())).collect();
        // cartesian product of the inner partitions
        let mut combos: Vec<Vec<usize>> = vec![vec![]];
        for choices in &inner {
            combos = combos
                .iter()
                .flat_map(|c| (0..choices.len()).map(move |x| [c.clone(), vec![x]].concat()))
                .collect();
        }
        for combo in combos {
            let mut j = vec![0; n];
            let mut lp = log_crp(&blocks.iter().map(Vec::len).collect::<Vec<_>>(), at);
            for (b, block) in blocks.iter().enumerate() {
                let jp = &inner[b][combo[b]];
                lp += log_my(data, block, hp);
                let nj = jp.iter().max().unwrap() + 1;
                let mut sizes = Vec::new();
                for s in 0..nj {
                    let cell: Vec<usize> = block.iter().zip(jp).filter(|(_, &l)| l == s).map(|(&i, _)| i).collect();
                    sizes.push(cell.len());
                    lp += log_mx(data, &cell, hp);
                }
                lp += log_crp(&sizes, ap);
                for (&i, &l) in block.iter().zip(jp) {
                    j[i] = l;
                }
            }
            logp.push((canonical(&kp, &j), lp));
        }
    }
    let max = logp.iter().map(|(_, l)| *l).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logp.iter().map(|(_, l)| (l - max).exp()).sum();
    logp.into_iter().map(|(k, l)| (k, (l - max).exp() / z)).collect()
}

#[test]
fn enumeration_helper_counts() {
    assert_eq!(set_partitions(3).len(), 5);
    let post = nested_partition_posterior(&three_obs(), &hp1(), 1.0, 1.0);
    assert_eq!(post.len(), 12);
    assert!((post.values().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn stationary_nested_partitions_match_enumeration() {
    let data = three_obs();
    let hp = hp1();
    let (at, ap) = (1.0, 0.7);
    let truth = nested_partition_posterior(&data, &hp, at, ap);
    let mut rng = stream(40, 0);
    let mut s = UrnSampler::new(&data, &hp, 3, &mut rng).unwrap();
    s.fix_concentrations(at, ap);
    for _ in 0..1000 {
        s.sweep(&data, &mut rng).unwrap();
    }
    let sweeps = 200_000;
    let keys: Vec<_> = truth.keys().cloned().collect();
    let mut series: Vec<Vec<f64>> = vec![Vec::with_capacity(sweeps); keys.len()];
    for _ in 0..sweeps {
        s.sweep(&data, &mut rng).unwrap();
        s.state().check().unwrap();
        let key = canonical(&s.state().k, &s.state().j);
        for (c, k) in keys.iter().enumerate() {
            series[c].push(if *k == key { 1.0 } else { 0.0 });
        }
    }
    for (c, k) in keys.iter().enumerate() {
        let f = mean(&series[c]);
        let se = batch_means_se(&series[c]);
        let p = truth[k];
        assert!((f - p).abs() <= 3.0 * se + 1e-4, "{k:?}: {f} vs {p} (se {se})");
    }
}

#[test]
fn single_observation_forms_one_cluster() {
    let data = Dataset::from_rows(vec![1.0], &[vec![2.0]]).unwrap();
    let mut rng = stream(41, 0);
    let mut s = UrnSampler::new(&data, &hp1(), 3, &mut rng).unwrap();
    for _ in 0..200 {
        s.sweep(&data, &mut rng).unwrap();
        assert_eq!(s.state().n_clusters(), 1);
        assert_eq!(s.state().clusters[0].psi.len(), 1);
    }
}

#[test]
fn vanishing_concentrations_collapse_to_one_cluster() {
    let mut rng = stream(42, 0);
    let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
    let y = (0..10).map(|i| 0.5 * i as f64 + 0.3 * sn(&mut rng)).collect();
    let data = Dataset::from_rows(y, &rows).unwrap();
    let mut s = UrnSampler::new(&data, &hp1(), 3, &mut rng).unwrap();
    s.fix_concentrations(1e-12, 1e-12);
    for _ in 0..500 {
        s.sweep(&data, &mut rng).unwrap();
    }
    assert_eq!(s.state().n_clusters(), 1);
    assert_eq!(s.state().clusters[0].psi.len(), 1);
}

#[test]
fn concentration_with_one_cluster_and_one_observation_is_prior() {
    let mut rng = stream(43, 0);
    let mut a = 1.0;
    let draws = 200_000;
    let xs: Vec<f64> = (0..draws)
        .map(|_| {
            a = update_dp_concentration(a, &[(1, 1)], 1.0, 1.0, &mut rng).unwrap();
            a
        })
        .collect();
    assert!((mean(&xs) - 1.0).abs() < 4.0 * batch_means_se(&xs));
    let sq: Vec<f64> = xs.iter().map(|x| (x - 1.0).powi(2)).collect();
    assert!((mean(&sq) - 1.0).abs() < 4.0 * batch_means_se(&sq));
}

/// Posterior moments of α given `J` clusters among `n` by quadrature of
/// `α^{a-1+J} e^{-bα} Γ(α)/Γ(α+n)`.
fn quadrature_moments(groups: &[(usize, usize)], a: f64, b: f64) -> (f64, f64) {
    let logf = |x: f64| {
        (a - 1.0) * x.ln() - b * x
            + groups
                .iter()
                .map(|&(j, n)| j as f64 * x.ln() + ln_gamma(x) - ln_gamma(x + n as f64))
                .sum::<f64>()
    };
    let (lo, hi, steps) = (1e-9f64, 60.0f64, 400_000);
    let h = (hi - lo) / steps as f64;
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for s in 0..=steps {
        let x = lo + s as f64 * h;
        let w = if s == 0 || s == steps { 0.5 } else { 1.0 };
        let f = w * logf(x).exp();
        z += f;
        m1 += f * x;
        m2 += f * x * x;
    }
    let mean = m1 / z;
    (mean, m2 / z - mean * mean)
}

#[test]
fn concentration_update_matches_quadrature() {
    for groups in [vec![(3usize, 40usize)], vec![(2, 5), (4, 30), (1, 2)]] {
        let (m, v) = quadrature_moments(&groups, 1.0, 1.0);
        let mut rng = stream(44, groups.len() as u64);
        let mut a = 1.0;
        let draws = 200_000;
        let xs: Vec<f64> = (0..draws)
            .map(|_| {
                a = update_dp_concentration(a, &groups, 1.0, 1.0, &mut rng).unwrap();
                a
            })
            .collect();
        assert!((mean(&xs) - m).abs() < 3.0 * batch_means_se(&xs), "{} vs {m}", mean(&xs));
        let sq: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
        assert!((mean(&sq) - v).abs() < 3.0 * batch_means_se(&sq), "{} vs {v}", mean(&sq));
    }
}

#[test]
fn disjoint_clusters_have_independent_parameters() {
    let data = Dataset::from_rows(
        vec![0.0, 0.5, 1.1, 9.0, 9.4, 10.2],
        &[vec![0.0], vec![0.5], vec![1.0], vec![8.0], vec![8.5], vec![9.0]],
    )
    .unwrap();
    let hp = hp1();
    let base = hp.prepare(1).unwrap();
    let mut rng = stream(45, 0);
    let mut s = UrnState::single_cluster(&base, 6, &mut rng).unwrap();
    let second = ThetaCluster {
        atom: base.draw_theta(&mut rng),
        alpha_psi: 1.0,
        psi: vec![PsiCluster { atom: base.draw_psi(&mut rng), size: 3 }],
        size: 3,
    };
    s.clusters[0].size = 3;
    s.clusters[0].psi[0].size = 3;
    s.clusters.push(second);
    s.k = vec![0, 0, 0, 1, 1, 1];
    s.check().unwrap();
    let sweeps = 100_000;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for _ in 0..sweeps {
        pu_update_cluster_params(&mut s, &data, &base, &mut rng).unwrap();
        a.push(s.clusters[0].atom.beta[0]);
        b.push(s.clusters[1].atom.beta[0]);
    }
    let (ma, mb) = (mean(&a), mean(&b));
    let (sa, sb) = (crate::stats::sample_sd(&a), crate::stats::sample_sd(&b));
    let z: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb) / (sa * sb)).collect();
    assert!(mean(&z).abs() < 3.0 * batch_means_se(&z), "corr {}", mean(&z));
}

fn redraw<R: Rng + ?Sized>(s: &UrnState, rng: &mut R) -> Dataset {
    let mut y = Vec::new();
    let mut x = Vec::new();
    for (&k, &j) in s.k.iter().zip(&s.j) {
        let c = &s.clusters[k];
        let ps = &c.psi[j].atom;
        let xi = ps.mu[0] + ps.tau_x[0].sqrt() * sn(rng);
        y.push(c.atom.mean(&[xi]) + c.atom.tau_y.sqrt() * sn(rng));
        x.push(xi);
    }
    Dataset::new(y, x, 1).unwrap()
}

#[test]
fn geweke_successive_conditional_reproduces_prior() {
    let hp = hp1();
    let base = hp.prepare(1).unwrap();
    let mut rng = stream(46, 0);
    let state = UrnState::single_cluster(&base, 4, &mut rng).unwrap();
    let mut data = redraw(&state, &mut rng);
    let mut s = UrnSampler::from_parts(base, state, 3);
    let sweeps = 200_000;
    let mut at = Vec::with_capacity(sweeps);
    for it in 0..sweeps + 1000 {
        s.sweep(&data, &mut rng).unwrap();
        data = redraw(s.state(), &mut rng);
        if it >= 1000 {
            at.push(s.state().alpha_theta);
        }
    }
    let m = mean(&at);
    assert!((m - 1.0).abs() < 4.0 * batch_means_se(&at), "mean {m} ± {}", batch_means_se(&at));
    let sq: Vec<f64> = at.iter().map(|a| (a - 1.0).powi(2)).collect();
    assert!((mean(&sq) - 1.0).abs() < 4.0 * batch_means_se(&sq), "var {}", mean(&sq));
}

#[test]
fn chain_is_deterministic_and_clean() {
    let data = three_obs();
    let cfg = UrnConfig {
        iterations: 50,
        burn_in: 10,
        thin: 4,
        seed: 3,
        stream: 0,
        m_aux: 3,
    };
    let a = run_pu_chain(&data, &hp1(), &cfg).unwrap();
    let b = run_pu_chain(&data, &hp1(), &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 10);
    for d in &a.draws {
        d.validate().unwrap();
        assert_eq!(d.representation, Representation::Urn);
        // every occupied component has members; the trailing one is new
        let occ = d.occupancy();
        assert!(occ[..occ.len() - 1].iter().all(|&c| c > 0));
        assert_eq!(*occ.last().unwrap(), 0);
    }
}

#[test]
fn config_validation() {
    let mut cfg = UrnConfig::default();
    cfg.validate().unwrap();
    cfg.m_aux = 0;
    assert!(cfg.validate().is_err());
    let cfg = UrnConfig { burn_in: 60_000, ..UrnConfig::default() };
    assert!(cfg.validate().is_err());
}
