// Exploration scratchpad (deleted before finalizing).

use rlm_core::baselines::{rsd_run, SdConfig};
use rlm_core::problems::*;
use rlm_core::solver::{rlm_run, RlmConfig};
use rlm_core::*;

#[test]
#[ignore]
fn explore_sphere_zero_residual() {
    let (inst, p) = gen_sphere_ls(5, 8, None, 42).unwrap();
    // Start at ambient distance ~0.5 from x*.
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let xs = inst.x_star_point();
    let man = p.manifold();
    let v = man.random_tangent(&xs, &mut rng);
    let v = v.scaled(0.5 / man.norm(&v).unwrap());
    let x0 = man.retract(&xs, &v).unwrap();
    println!("start error: {}", inst.error_to_truth(&x0));

    let cfg = RlmConfig {
        grad_tol: 1e-13,
        ..RlmConfig::default()
    };
    let summary = rlm_run(&p, &x0, &cfg).unwrap();
    println!("status {:?} iters {}", summary.status, summary.iters);
    for r in &summary.trace.records {
        println!(
            "k={} f={:.3e} g={:.3e} lam={:.3e} mu={:.3e} rho={:.3} succ={}",
            r.iter, r.f, r.grad_norm, r.lambda, r.mu, r.rho, r.successful
        );
    }
    println!("final grad {:.3e}  f {:.3e}", summary.final_grad_norm, summary.final_f);
    println!("order: {:?}", summary.order);
}

#[test]
#[ignore]
fn explore_sphere_warm_quadratic() {
    let (inst, p) = gen_sphere_ls(5, 8, None, 42).unwrap();
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let xs = inst.x_star_point();
    let man = p.manifold();
    let v = man.random_tangent(&xs, &mut rng);
    let v = v.scaled(1e-2 / man.norm(&v).unwrap());
    let x0 = man.retract(&xs, &v).unwrap();
    println!("start error: {}", inst.error_to_truth(&x0));
    let cfg = RlmConfig {
        grad_tol: 1e-13,
        ..RlmConfig::default()
    };
    let summary = rlm_run(&p, &x0, &cfg).unwrap();
    let mut grads: Vec<f64> = summary.trace.records.iter().map(|r| r.grad_norm).collect();
    grads.push(summary.final_grad_norm);
    println!("grads: {grads:?}");
    println!("order last4: {:?}", estimate_order(&grads, 4));
}

#[test]
#[ignore]
fn explore_sphere_nonzero_linear() {
    for mu_min in [1e4, 1e5, 1e6] {
        let (inst, p) = gen_sphere_ls(5, 8, Some(3.0), 42).unwrap();
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let xs = inst.x_star_point();
        let man = p.manifold();
        let v = man.random_tangent(&xs, &mut rng);
        let v = v.scaled(1e-2 / man.norm(&v).unwrap());
        let x0 = man.retract(&xs, &v).unwrap();
        let cfg = RlmConfig {
            flag_nz: true,
            mu_min,
            grad_tol: 3e-11,
            max_iter: 3000,
            ..RlmConfig::default()
        };
        let summary = rlm_run(&p, &x0, &cfg).unwrap();
        let mut grads: Vec<f64> = summary.trace.records.iter().map(|r| r.grad_norm).collect();
        grads.push(summary.final_grad_norm);
        let n = grads.len();
        println!(
            "mu_min={mu_min:.0e}: status {:?} iters {} final grad {:.3e}",
            summary.status, summary.iters, summary.final_grad_norm
        );
        if n >= 10 {
            println!("  last grads: {:?}", &grads[n.saturating_sub(10)..]);
        }
        println!("  order last8: {:?}", estimate_order(&grads, 8));
    }
}

#[test]
#[ignore]
fn explore_completion() {
    let (inst, p) = gen_completion(30, 30, 3, 0.97, 7).unwrap();
    let start = completion_random_start(30, 30, 3, derive_start_seed(7, 0)).unwrap();
    let x0 = refined_completion_start(&p, start).unwrap();
    println!("start error to truth: {:.3e}", inst.error_to_truth(p.fixed_rank(), &x0));

    let t0 = std::time::Instant::now();
    let summary = rlm_run(&p, &x0, &RlmConfig::completion_preset()).unwrap();
    println!(
        "RLM: status {:?} iters {} succ {} final f {:.3e} grad {:.3e} in {:.1} ms",
        summary.status,
        summary.iters,
        summary.successful_iters,
        summary.final_f,
        summary.final_grad_norm,
        t0.elapsed().as_secs_f64() * 1e3
    );
    for r in summary.trace.records.iter().rev().take(5) {
        println!(
            "k={} f={:.3e} g={:.3e} lam={:.3e} sub={} succ={}",
            r.iter, r.f, r.grad_norm, r.lambda, r.sub_iters, r.successful
        );
    }

    let t0 = std::time::Instant::now();
    let sd = rsd_run(
        &p,
        &x0,
        &SdConfig {
            grad_tol: 1e-8,
            max_iter: 5000,
            ..SdConfig::default()
        },
    )
    .unwrap();
    println!(
        "RSD: status {:?} iters {} final grad {:.3e} in {:.1} ms",
        sd.status,
        sd.iters,
        sd.final_grad_norm,
        t0.elapsed().as_secs_f64() * 1e3
    );
}

#[test]
#[ignore]
fn explore_cp() {
    let t_all = std::time::Instant::now();
    for seed in 0..3u64 {
        let (inst, p) = gen_cp((13, 11, 9), 5, Some(5.0), seed).unwrap();
        let x0 = cp_random_start(inst.dims, inst.rank, derive_start_seed(seed, 0));
        let t0 = std::time::Instant::now();
        let summary = rlm_run(&p, &x0, &RlmConfig::cp_preset()).unwrap();
        println!(
            "seed {seed}: status {:?} iters {} succ {} final f {:.3e} grad {:.3e} in {:.1} ms",
            summary.status,
            summary.iters,
            summary.successful_iters,
            summary.final_f,
            summary.final_grad_norm,
            t0.elapsed().as_secs_f64() * 1e3
        );
    }
    println!("total {:.1} s", t_all.elapsed().as_secs_f64());
}

#[test]
#[ignore]
fn explore_completion_quadratic() {
    let (inst, p) = gen_completion(20, 20, 2, 2.0, 3).unwrap();
    let man = p.fixed_rank();
    let truth = inst.truth_point(man).unwrap();
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let v = man.random_tangent(&truth, &mut rng);
    let v = v.scaled(1e-2 / man.norm(&v).unwrap());
    let x0 = man.retract(&truth, &v).unwrap();
    println!("start error: {:.3e}", inst.error_to_truth(man, &x0));
    let cfg = RlmConfig {
        grad_tol: 1e-13,
        ..RlmConfig::default()
    };
    let summary = rlm_run(&p, &x0, &cfg).unwrap();
    let mut grads: Vec<f64> = summary.trace.records.iter().map(|r| r.grad_norm).collect();
    grads.push(summary.final_grad_norm);
    println!("status {:?}; grads: {grads:?}", summary.status);
    println!("order last4: {:?}", estimate_order(&grads, 4));
}
