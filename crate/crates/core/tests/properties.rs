use clinn::diffengine::{eval_with_input_grads, finite_diff_check};
use clinn::evalreport::{improvement_ratio, mse, mse_at_time};
use clinn::indicator::{an_out, detect_1d, IndicatorParams, Mesh1D};
use clinn::loss::{total_loss, LossWeights, Method};
use clinn::network::{Architecture, NetworkParams};
use clinn::oracle::exact;
use clinn::problems::{get_problem, sample_grid, CaseId, Grid};
use clinn::trainer::{rar_update, RarSchedule};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn case() -> impl Strategy<Value = CaseId> {
    prop::sample::select(CaseId::ALL.to_vec())
}

/// Glorot network with every bias perturbed so no parameter is special.
fn random_net(width: usize, depth: usize, input_dim: usize, seed: u64) -> NetworkParams {
    let arch = Architecture::new(width, depth, input_dim).unwrap();
    let mut p = NetworkParams::init(arch, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for v in p.as_mut_slice() {
        *v += rng.random_range(-0.2..0.2);
    }
    p
}

fn random_point(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn input_derivatives_match_finite_differences(seed in 0u64..10_000, di in 2usize..4) {
        let net = random_net(8, 2, di, seed);
        let x = random_point(di, seed + 1);
        let g = eval_with_input_grads(&net, &x).unwrap();
        let mut analytic = g.du_dx.clone();
        analytic.push(g.du_dt);
        let err = finite_diff_check(|p| net.forward(p).unwrap(), &analytic, &x, 1e-6);
        prop_assert!(err < 1e-5, "relative error {err}");
        let plain = net.forward(&x).unwrap();
        prop_assert!((g.u - plain).abs() <= 1e-12 * plain.abs().max(1.0));
    }

    #[test]
    fn forward_is_deterministic(seed in 0u64..10_000) {
        let a = random_net(6, 3, 2, seed);
        let b = random_net(6, 3, 2, seed);
        let x = random_point(2, seed);
        prop_assert_eq!(a.forward(&x).unwrap().to_bits(), b.forward(&x).unwrap().to_bits());
    }

    #[test]
    fn checkpoint_bytes_round_trip(seed in 0u64..10_000, width in 1usize..7, depth in 0usize..4) {
        let net = random_net(width, depth, 3, seed);
        let back = NetworkParams::from_bytes(&net.to_bytes()).unwrap();
        prop_assert_eq!(back, net);
    }

    #[test]
    fn hidden_unit_permutation_preserves_output(seed in 0u64..10_000, shift in 1usize..5) {
        let (n, depth, di) = (5usize, 2usize, 2usize);
        let net = random_net(n, depth, di, seed);
        let arch = *net.arch();
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let src = net.as_slice();
        let mut dst = src.to_vec();
        let (lw, lb) = (arch.lift_weights().start, arch.lift_bias().start);
        for i in 0..n {
            let j = perm[i];
            for k in 0..di {
                dst[lw + i * di + k] = src[lw + j * di + k];
            }
            dst[lb + i] = src[lb + j];
        }
        for blk in 0..depth {
            let (w, b) = (arch.block_weights(blk).start, arch.block_bias(blk).start);
            for i in 0..n {
                for k in 0..n {
                    dst[w + i * n + k] = src[w + perm[i] * n + perm[k]];
                }
                dst[b + i] = src[b + perm[i]];
            }
        }
        let q = arch.projection_weights().start;
        for i in 0..n {
            dst[q + i] = src[q + perm[i]];
        }
        let permuted = NetworkParams::from_vec(arch, dst).unwrap();
        let x = random_point(di, seed + 3);
        let (a, b) = (net.forward(&x).unwrap(), permuted.forward(&x).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn zero_blocks_can_be_removed(seed in 0u64..10_000) {
        let net = random_net(4, 2, 2, seed);
        let arch = *net.arch();
        let deeper = Architecture::new(4, 3, 2).unwrap();
        let mut data = net.as_slice()[..arch.block_weights(1).start].to_vec();
        data.extend(std::iter::repeat_n(0.0, 4 * 4 + 4));
        data.extend_from_slice(&net.as_slice()[arch.block_weights(1).start..]);
        let padded = NetworkParams::from_vec(deeper, data).unwrap();
        let x = random_point(2, seed);
        prop_assert_eq!(net.forward(&x).unwrap(), padded.forward(&x).unwrap());
    }

    #[test]
    fn lambda_is_the_flux_derivative(c in case(), t in 0.0f64..1.0) {
        let spec = get_problem(c);
        let u = spec.u0_inf + t * (spec.u0_sup - spec.u0_inf);
        let h = 1e-5 * u.abs().max(1.0);
        let fd = (spec.flux.f(u + h) - spec.flux.f(u - h)) / (2.0 * h);
        let lam = spec.flux.speed(u);
        let rel = (lam - fd).abs() / lam.abs().max(1.0);
        prop_assert!(rel < 1e-8, "u={u} lambda={lam} fd={fd}");
        prop_assert!(spec.lambda_eval(u).iter().all(|&l| l == lam));
    }

    #[test]
    fn oracle_stays_within_initial_bounds(c in case(), s in 0.0f64..1.0, r in 0.0f64..1.0, t in 0.0f64..1.0) {
        let spec = get_problem(c);
        let d = &spec.domain;
        let mut p: Vec<f64> = (0..spec.dim())
            .map(|k| d.lower[k] + [s, r][k] * (d.upper[k] - d.lower[k]))
            .collect();
        p.push(t * d.t_end);
        let u = exact(c, &p).unwrap();
        prop_assert!(u >= spec.u0_inf - 1e-12 && u <= spec.u0_sup + 1e-12, "u({p:?}) = {u}");
    }

    #[test]
    fn sample_grid_partitions_the_nodes(c in case(), nx in 3usize..12, nt in 2usize..6) {
        let spec = get_problem(c);
        let coll = sample_grid(&spec, nx, nt).unwrap();
        let mut seen = vec![0u8; coll.grid.len()];
        for &g in coll.interior_nodes.iter().chain(&coll.initial_nodes).chain(&coll.boundary_nodes) {
            seen[g] += 1;
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        prop_assert_eq!(coll.interior.len() + coll.initial.len() + coll.boundary.len(), coll.grid.len());
    }

    #[test]
    fn indicator_output_is_monotone(d in -3.0f64..3.0, dd in 0.01f64..1.0, dx in 0.001f64..1.0, ddx in 0.001f64..1.0) {
        let p = IndicatorParams::default();
        prop_assert!(an_out(d + dd, 0.0, dx, &p) > an_out(d, 0.0, dx, &p));
        prop_assert!(an_out(d, 0.0, dx + ddx, &p) < an_out(d, 0.0, dx, &p));
    }

    #[test]
    fn burgers_flags_ignore_constant_shifts(seed in 0u64..10_000, shift in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = Mesh1D::uniform(0.0, 1.0, 40).unwrap();
        let u: Vec<f64> = (0..40).map(|j| if j < 20 { 1.0 } else { 0.0 } + rng.random_range(-0.3..0.3)).collect();
        let shifted: Vec<f64> = u.iter().map(|v| v + shift).collect();
        let p = IndicatorParams::default();
        let a = detect_1d(&u, &mesh, |v| v, &p).unwrap();
        let b = detect_1d(&shifted, &mesh, |v| v, &p).unwrap();
        prop_assert_eq!(a.flags, b.flags);
    }

    #[test]
    fn rar_weights_add_up(seed in 0u64..10_000, n in 20usize..80, n_pt in 1usize..20, with_im in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gov: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let im: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let excluded = vec![false; n];
        let sched = RarSchedule { n_pt, w_eq: 33.0, w_if: 16.0, ..RarSchedule::default() };
        let w = rar_update(&gov, with_im.then_some(im.as_slice()), &excluded, &sched);
        let extra: f64 = w.iter().map(|w| w - 1.0).sum();
        let expected = n_pt as f64 * (33.0 + if with_im { 16.0 } else { 0.0 });
        prop_assert!((extra - expected).abs() < 1e-9);
        prop_assert!(w.iter().all(|&v| v == 1.0 || v == 34.0 || v == 17.0 || v == 50.0));
    }

    #[test]
    fn loss_is_linear_in_rar_weights_and_term_weights(seed in 0u64..1_000, scale in 0.1f64..10.0) {
        let spec = get_problem(CaseId::C1B);
        let mut coll = sample_grid(&spec, 7, 4).unwrap();
        let net = random_net(6, 2, 2, seed);
        let w = LossWeights::for_method(Method::Clinn);
        let base = total_loss(&net, &spec, &coll, &[], &w).unwrap();
        prop_assert!([base.gov, base.ic, base.bc, base.im, base.bd, base.rh].iter().all(|&v| v >= 0.0));

        let mut scaled = w;
        for v in [&mut scaled.gov, &mut scaled.ic, &mut scaled.bc, &mut scaled.im, &mut scaled.bd, &mut scaled.rh] {
            *v *= scale;
        }
        let b = total_loss(&net, &spec, &coll, &[], &scaled).unwrap();
        prop_assert!((b.total - scale * base.total).abs() <= 1e-10 * b.total.abs().max(1.0));

        coll.rar_weights.iter_mut().for_each(|v| *v = scale);
        let r = total_loss(&net, &spec, &coll, &[], &w).unwrap();
        prop_assert!((r.gov - scale * base.gov).abs() <= 1e-10 * r.gov.max(1.0));
        prop_assert!((r.im - scale * base.im).abs() <= 1e-10 * r.im.max(1.0));
    }

    #[test]
    fn mse_is_permutation_invariant_and_splits_by_slice(seed in 0u64..10_000, nx in 2usize..9, nt in 2usize..6) {
        let spec = get_problem(CaseId::C1B);
        let grid = Grid::new(&spec, nx.max(3), nt).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let all = mse(&a, &b).unwrap();
        let (mut ra, mut rb) = (a.clone(), b.clone());
        ra.reverse();
        rb.reverse();
        prop_assert!((mse(&ra, &rb).unwrap() - all).abs() < 1e-14);
        let per_slice: f64 = (0..grid.nt).map(|k| mse_at_time(&a, &b, &grid, grid.t(k)).unwrap().0).sum();
        prop_assert!((per_slice / grid.nt as f64 - all).abs() < 1e-12);
    }

    #[test]
    fn improvement_ratio_is_monotone(a in 0.01f64..10.0, b in 0.01f64..10.0, d in 0.01f64..1.0) {
        let r = improvement_ratio(a, b).unwrap();
        prop_assert!(improvement_ratio(a + d, b).unwrap() < r);
        prop_assert!(improvement_ratio(a, b + d).unwrap() > r);
    }
}

#[test]
fn oracle_against_itself_is_zero_for_every_case() {
    for c in CaseId::ALL {
        let spec = get_problem(c);
        let grid = Grid::new(&spec, 20, 6).unwrap();
        let u: Vec<f64> = (0..grid.len()).map(|g| exact(c, &grid.point(g)).unwrap()).collect();
        assert_eq!(mse(&u, &u).unwrap(), 0.0, "{c:?}");
    }
}

#[test]
fn dense_initial_data_stays_in_bounds() {
    for c in CaseId::ALL {
        let spec = get_problem(c);
        let d = &spec.domain;
        for i in 0..=2000 {
            let s = i as f64 / 2000.0;
            let x: Vec<f64> = (0..spec.dim()).map(|k| d.lower[k] + s * (d.upper[k] - d.lower[k])).collect();
            let u = spec.u0(&x);
            assert!(u >= spec.u0_inf && u <= spec.u0_sup, "{c:?} u0({x:?}) = {u}");
        }
    }
}
