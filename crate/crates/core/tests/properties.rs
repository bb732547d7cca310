use dag_ma::averaging::{average_estimator, qp_objective, solve_weights, AveragingConfig};
use dag_ma::candidates::{build_candidates, SearchConfig};
use dag_ma::fit::fit_edgeset;
use dag_ma::harness::graph_io::{parse_dot_edges, render_dot};
use dag_ma::harness::standardize;
use dag_ma::metrics::{estimated_precision, kl_loss};
use dag_ma::synth::{generate_true_dag, sample_data, true_precision, SynthConfig};
use dag_ma::types::{support_dag, validate_dag};
use dag_ma::{CoefMatrix, Dag, DataMatrix, PrecisionMatrix, WeightVector};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(r: usize, c: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0f64..3.0, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
}

fn data(n: usize, p: usize) -> impl Strategy<Value = DataMatrix> {
    matrix(n, p).prop_map(|m| DataMatrix::new(m).unwrap())
}

/// Random DAG whose edges respect a random permutation of the nodes.
fn dag(p: usize) -> impl Strategy<Value = Dag> {
    (Just((0..p).collect::<Vec<_>>()).prop_shuffle(), prop::collection::vec(any::<bool>(), p * p)).prop_map(
        move |(order, bits)| {
            let mut edges = Vec::new();
            for a in 0..p {
                for b in a + 1..p {
                    if bits[a * p + b] {
                        edges.push((order[a], order[b]));
                    }
                }
            }
            Dag::new(p, edges).unwrap()
        },
    )
}

fn simplex(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, m).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    })
}

fn psd(m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(m + 2, m).prop_map(|b| b.transpose() * b)
}

fn penalties(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1usize..4, m).prop_map(|steps| {
        steps
            .iter()
            .scan(0usize, |acc, s| {
                *acc += s;
                Some(*acc as f64)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_graphs_are_strictly_lower_triangular(p in 1usize..12, rho in 0.0f64..=1.0, seed: u64) {
        let a = generate_true_dag(&SynthConfig::new(p, rho, seed)).unwrap();
        let d = support_dag(&a).unwrap();
        prop_assert!(validate_dag(&d));
        prop_assert!(d.edges().iter().all(|&(k, j)| k > j));
        prop_assert!(d.edges().iter().all(|&(k, j)| a.get(k, j) == 0.5));
    }

    #[test]
    fn sampling_is_reproducible(p in 1usize..6, seed: u64) {
        let a = generate_true_dag(&SynthConfig::new(p, 0.5, seed)).unwrap();
        let x1 = sample_data(&a, 1.0, 20, seed ^ 7).unwrap();
        let x2 = sample_data(&a, 1.0, 20, seed ^ 7).unwrap();
        prop_assert_eq!(x1, x2);
    }

    #[test]
    fn true_precision_inverts_covariance(p in 1usize..8, rho in 0.0f64..=1.0, sigma in 0.2f64..3.0, seed: u64) {
        let a = generate_true_dag(&SynthConfig::new(p, rho, seed)).unwrap();
        let omega = true_precision(&a, sigma).unwrap();
        let inv = a.i_minus().try_inverse().unwrap();
        let sigma_x = inv.transpose() * &inv * (sigma * sigma);
        let err = (omega.values() * sigma_x - DMatrix::<f64>::identity(p, p)).amax();
        prop_assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn fit_is_zero_outside_edges_and_orthogonal(x in data(30, 5), e in dag(5)) {
        let fit = fit_edgeset(&x, &e).unwrap();
        for k in 0..5 {
            for j in 0..5 {
                if !e.contains(k, j) {
                    prop_assert_eq!(fit.a_hat.get(k, j).to_bits(), 0.0f64.to_bits());
                }
            }
        }
        let scale = x.values().norm_squared();
        for j in 0..5 {
            for k in e.parents(j) {
                let dot = x.values().column(k).dot(&fit.residuals.column(j));
                prop_assert!(dot.abs() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn nested_fits_have_monotone_rss(x in data(30, 5), e in dag(5), drop in any::<prop::sample::Index>()) {
        prop_assume!(!e.is_empty());
        let (k, j) = e.edges()[drop.index(e.len())];
        let smaller = e.without_edge(k, j);
        let big = fit_edgeset(&x, &e).unwrap();
        let small = fit_edgeset(&x, &smaller).unwrap();
        prop_assert!(big.rss <= small.rss + 1e-8 * small.rss);
    }

    #[test]
    fn refitting_on_the_support_is_idempotent(x in data(30, 5), e in dag(5)) {
        let first = fit_edgeset(&x, &e).unwrap();
        let support = support_dag(&first.a_hat).unwrap();
        let second = fit_edgeset(&x, &support).unwrap();
        prop_assert!((first.a_hat.values() - second.a_hat.values()).amax() <= 1e-10);
    }

    #[test]
    fn noise_free_children_recover_coefficients(p in 2usize..7, seed: u64) {
        let a0 = generate_true_dag(&SynthConfig::new(p, 0.6, seed)).unwrap();
        let support = support_dag(&a0).unwrap();
        // roots draw noise, every other node is an exact function of its parents
        let z = sample_data(&CoefMatrix::zeros(p), 1.0, 40, seed).unwrap();
        let mut x = z.values().clone();
        for j in support.topological_order().unwrap() {
            let pa = support.parents(j);
            if !pa.is_empty() {
                let col = pa.iter().fold(DVector::zeros(40), |acc, &k| acc + x.column(k) * a0.get(k, j));
                x.set_column(j, &col);
            }
        }
        let fit = fit_edgeset(&DataMatrix::new(x).unwrap(), &support);
        if let Ok(fit) = fit {
            prop_assert!((fit.a_hat.values() - a0.values()).amax() <= 1e-8);
        }
    }

    #[test]
    fn qp_beats_every_vertex_and_certifies_kkt(m in 1usize..7, g in psd(6), k in penalties(6), lambda in 0.0f64..5.0) {
        let g = g.view((0, 0), (m, m)).into_owned();
        let k = &k[..m];
        let sol = solve_weights(&g, k, lambda, &AveragingConfig::default()).unwrap();
        let lin: Vec<f64> = k.iter().map(|v| lambda * v).collect();
        for i in 0..m {
            let v = WeightVector::vertex(m, i);
            prop_assert!(sol.objective <= qp_objective(&g, &lin, v.as_slice()) + 1e-8);
        }
        prop_assert!(sol.kkt_residual <= 1e-10);
    }

    #[test]
    fn qp_gradient_matches_finite_differences(g in psd(4), k in penalties(4), lambda in 0.0f64..5.0, w in simplex(4)) {
        let lin: Vec<f64> = k.iter().map(|v| lambda * v).collect();
        let wv = DVector::from_column_slice(&w);
        let grad = &g * &wv * 2.0 + DVector::from_column_slice(&lin);
        let h = 1e-5;
        for i in 0..4 {
            let mut up = w.clone();
            let mut down = w.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (qp_objective(&g, &lin, &up) - qp_objective(&g, &lin, &down)) / (2.0 * h);
            prop_assert!((fd - grad[i]).abs() <= 1e-5 * grad[i].abs().max(1.0), "{fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn qp_is_permutation_equivariant(g in psd(4), k in penalties(4), lambda in 0.0f64..3.0, perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let cfg = AveragingConfig::default();
        let base = solve_weights(&g, &k, lambda, &cfg).unwrap();
        let gp = DMatrix::from_fn(4, 4, |a, b| g[(perm[a], perm[b])]);
        let kp: Vec<f64> = perm.iter().map(|&i| k[i]).collect();
        let sol = solve_weights(&gp, &kp, lambda, &cfg).unwrap();
        // the minimizer is unique when G is positive definite
        for (a, &i) in perm.iter().enumerate() {
            prop_assert!((sol.w.as_slice()[a] - base.w.as_slice()[i]).abs() <= 1e-6);
        }
        prop_assert!((sol.objective - base.objective).abs() <= 1e-9 * base.objective.abs().max(1.0));
    }

    #[test]
    fn qp_argmin_is_scale_invariant(g in psd(4), k in penalties(4), lambda in 0.0f64..3.0, c in 0.1f64..10.0) {
        let cfg = AveragingConfig::default();
        let base = solve_weights(&g, &k, lambda, &cfg).unwrap();
        let scaled = solve_weights(&(&g * c), &k, lambda * c, &cfg).unwrap();
        for (a, b) in base.w.as_slice().iter().zip(scaled.w.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn larger_lambda_never_increases_complexity(g in psd(5), k in penalties(5)) {
        let cfg = AveragingConfig::default();
        let mut prev = f64::INFINITY;
        for step in 0..12 {
            let lambda = 0.5 * step as f64;
            let sol = solve_weights(&g, &k, lambda, &cfg).unwrap();
            let wk: f64 = sol.w.as_slice().iter().zip(&k).map(|(w, k)| w * k).sum();
            prop_assert!(wk <= prev + 1e-7, "{wk} > {prev} at lambda {lambda}");
            prev = wk;
        }
    }

    #[test]
    fn standardize_is_idempotent(x in data(12, 3)) {
        let once = standardize(&x).unwrap();
        let twice = standardize(&once).unwrap();
        prop_assert!((once.values() - twice.values()).amax() <= 1e-12);
        for col in once.values().column_iter() {
            prop_assert!(col.mean().abs() <= 1e-12);
            prop_assert!((col.norm_squared() / 11.0 - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn dot_round_trips_the_support(p in 1usize..8, seed: u64, signs in prop::collection::vec(any::<bool>(), 64)) {
        let a0 = generate_true_dag(&SynthConfig::new(p, 0.5, seed)).unwrap();
        let mut v = a0.values().clone();
        for (i, x) in v.iter_mut().enumerate() {
            if signs[i % 64] {
                *x = -*x;
            }
        }
        let a = CoefMatrix::new(v).unwrap();
        let names: Vec<String> = (1..=p).map(|i| format!("x{i}")).collect();
        let text = render_dot(&a, &names).unwrap();
        prop_assert_eq!(&text, &render_dot(&a, &names).unwrap());
        let mut parsed: Vec<(usize, usize)> = parse_dot_edges(&text)
            .unwrap()
            .iter()
            .map(|e| (e.from[1..].parse::<usize>().unwrap() - 1, e.to[1..].parse::<usize>().unwrap() - 1))
            .collect();
        parsed.sort_unstable();
        prop_assert_eq!(parsed, support_dag(&a).unwrap().edges().to_vec());
    }

    #[test]
    fn averaged_support_is_acyclic_and_unit_determinant(seed: u64, w in simplex(5)) {
        let a0 = generate_true_dag(&SynthConfig::new(6, 0.4, seed)).unwrap();
        let x = sample_data(&a0, 1.0, 80, seed ^ 1).unwrap();
        let Ok(cs) = build_candidates(&x, &SearchConfig::new(5, seed)) else {
            return Ok(());
        };
        let k = cs.k();
        prop_assert!(k.windows(2).all(|p| p[1] == p[0] + 1));
        for pair in cs.models().windows(2) {
            prop_assert!(pair[0].edges.is_subset_of(&pair[1].edges));
        }
        let a = average_estimator(&cs, &WeightVector::new(w.clone()).unwrap()).unwrap();
        let support = support_dag(&a).unwrap();
        prop_assert!(validate_dag(&support));

        // permuting I - Â into topological order makes it unit upper triangular
        let order = support.topological_order().unwrap();
        let i_a = a.i_minus();
        let permuted = DMatrix::from_fn(6, 6, |r, c| i_a[(order[r], order[c])]);
        for r in 0..6 {
            prop_assert_eq!(permuted[(r, r)], 1.0);
            for c in 0..r {
                prop_assert_eq!(permuted[(r, c)], 0.0);
            }
        }
        prop_assert!((i_a.determinant() - 1.0).abs() <= 1e-10);
        prop_assert!(estimated_precision(&a, 0.7).is_ok());

        // triangle inequality for EE over the mixture
        let ee: f64 = (a0.values() - a.values()).norm();
        let bound: f64 = cs.models().iter().zip(&w).map(|(c, wm)| wm * (a0.values() - c.coef.values()).norm()).sum();
        prop_assert!(ee <= bound + 1e-12);
    }

    #[test]
    fn kl_is_positive_for_distinct_pairs(b1 in matrix(4, 4), b2 in matrix(4, 4)) {
        let o1 = PrecisionMatrix::new(&b1 * b1.transpose() + DMatrix::identity(4, 4) * 0.2).unwrap();
        let o2 = PrecisionMatrix::new(&b2 * b2.transpose() + DMatrix::identity(4, 4) * 0.2).unwrap();
        prop_assume!((o1.values() - o2.values()).amax() > 1e-6);
        let kl = kl_loss(&o1, &o2).unwrap();
        // eigenvalue oracle on Ω₂⁻¹Ω₁
        let m = o2.values().clone().try_inverse().unwrap() * o1.values();
        let eig = m.complex_eigenvalues();
        let oracle: f64 = eig.iter().map(|l| l.re - l.re.ln() - 1.0).sum();
        prop_assert!(kl > 0.0);
        prop_assert!((kl - oracle).abs() <= 1e-8 * oracle.max(1.0), "{kl} vs {oracle}");
    }
}
