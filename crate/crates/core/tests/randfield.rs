use kasnerlab::numeric::mean_se;
use kasnerlab::randfield::{
    covariance_at, estimate_covariance, path_integral, read_cache, write_cache, EnsembleSpec, Kernel,
    NoiseMode, SamplerMethod,
};
use kasnerlab::{Execution, TimeGrid};

fn ou_spec(mode: NoiseMode, n: usize, size: usize, seed: u64) -> EnsembleSpec {
    let grid = TimeGrid::new(0.0, 0.05, 40).unwrap();
    EnsembleSpec::new(Kernel::ou(1.5, 0.7).unwrap(), grid, mode, n, size, seed).unwrap()
}

#[test]
fn ou_covariance_matches_kernel_at_several_lags() {
    let spec = ou_spec(NoiseMode::Iid, 1, 20_000, 3);
    let ens = spec.generate(Execution::Parallel).unwrap();
    for lag in [0usize, 5, 14, 30] {
        let est = covariance_at(&ens, 6, lag).unwrap();
        let want = 1.5 / 0.7 * (-(lag as f64) * 0.05 / 0.7).exp();
        assert!((est.mean - want).abs() < 4.0 * est.se, "lag {lag}: {} vs {want} (se {})", est.mean, est.se);
    }
    let pooled = estimate_covariance(&ens, 0).unwrap();
    assert!((pooled.mean - 1.5 / 0.7).abs() < 4.0 * pooled.se);
}

#[test]
fn cholesky_and_ar1_agree_in_distribution() {
    let a = ou_spec(NoiseMode::Iid, 1, 8_000, 11);
    let b = a.with_method(SamplerMethod::Cholesky);
    let ia: Vec<f64> = a.generate(Execution::Sequential).unwrap().paths.iter()
        .map(|p| path_integral(p, 2.0).unwrap()[0]).collect();
    let ib: Vec<f64> = b.generate(Execution::Sequential).unwrap().paths.iter()
        .map(|p| path_integral(p, 2.0).unwrap()[0]).collect();
    let sq = |v: &[f64]| mean_se(&v.iter().map(|x| x * x).collect::<Vec<_>>());
    let (va, vb) = (sq(&ia), sq(&ib));
    // exact variance of the trapezoid sum: w^T J w
    let k = Kernel::ou(1.5, 0.7).unwrap();
    let (dt, m) = (0.05, 41);
    let w: Vec<f64> = (0..m).map(|i| if i == 0 || i == m - 1 { 0.5 * dt } else { dt }).collect();
    let mut exact = 0.0;
    for i in 0..m {
        for j in 0..m {
            exact += w[i] * w[j] * k.eval((i as f64 - j as f64) * dt).unwrap();
        }
    }
    for v in [va, vb] {
        assert!((v.mean - exact).abs() < 4.0 * v.se, "{} vs {exact} (se {})", v.mean, v.se);
    }
}

#[test]
fn shared_mode_repeats_one_stream() {
    let spec = ou_spec(NoiseMode::Shared, 3, 2, 5);
    let path = spec.sampler().unwrap().path(1);
    assert_eq!(path.component(0), path.component(2));
    let iid = ou_spec(NoiseMode::Iid, 3, 2, 5).sampler().unwrap().path(1);
    assert_ne!(iid.component(0), iid.component(1));
}

#[test]
fn paths_depend_only_on_seed_and_index() {
    let spec = ou_spec(NoiseMode::Iid, 2, 50, 77);
    let par = spec.generate(Execution::Parallel).unwrap();
    let seq = spec.generate(Execution::Sequential).unwrap();
    assert_eq!(par.paths, seq.paths);
    assert_eq!(spec.sampler().unwrap().path(31), par.paths[31]);
}

#[test]
fn cache_round_trip_is_lossless() {
    let grid = TimeGrid::new(0.0, 0.1, 12).unwrap();
    let spec = EnsembleSpec::new(Kernel::squared_exp(1.0, 0.5).unwrap(), grid, NoiseMode::Iid, 2, 7, 9).unwrap();
    let ens = spec.generate(Execution::Sequential).unwrap();
    let mut buf = Vec::new();
    write_cache(&ens, &mut buf).unwrap();
    let back = read_cache(std::io::Cursor::new(buf)).unwrap();
    assert_eq!(back.spec, ens.spec);
    assert_eq!(back.paths, ens.paths);
}
