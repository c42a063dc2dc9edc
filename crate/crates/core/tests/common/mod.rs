//! Oracles shared by the integration and acceptance targets. Nothing here
//! calls into the sampler's own conditionals: forward draws use only the
//! model's generative story.

#![allow(dead_code)]

use glmixer::design::{GroupData, GroupedDesign};
use glmixer::gibbs::{sweep, ChainState, ErrorPrior, FixedScales, LocalPrior, PriorConfig};
use glmixer::inference::effective_sample_size;
use glmixer::kernels::{draw_categorical, draw_gamma, draw_normal, RngStream};

/// Largest gap between the empirical CDF of `draws` and `cdf`.
pub fn sup_distance(draws: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = draws.len() as f64;
    let mut worst: f64 = 0.0;
    for (i, &x) in draws.iter().enumerate() {
        let f = cdf(x);
        worst = worst.max((f - i as f64 / n).abs()).max((f - (i + 1) as f64 / n).abs());
    }
    worst
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Simpson's rule on `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Tabulated CDF of an unnormalized density on `(0, ∞)`, integrated on the
/// log axis between `exp(lo)` and `exp(hi)`.
pub struct TabulatedCdf {
    t: Vec<f64>,
    cum: Vec<f64>,
}

impl TabulatedCdf {
    pub fn positive(log_density: impl Fn(f64) -> f64, lo: f64, hi: f64, cells: usize) -> Self {
        let h = (hi - lo) / cells as f64;
        let g = |t: f64| (log_density(t.exp()) + t).exp();
        let mut t = vec![lo];
        let mut cum = vec![0.0];
        for k in 0..cells {
            let a = lo + k as f64 * h;
            let piece = simpson(g, a, a + h, 8);
            t.push(a + h);
            cum.push(cum[k] + piece);
        }
        let total = *cum.last().unwrap();
        cum.iter_mut().for_each(|c| *c /= total);
        Self { t, cum }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let t = x.ln();
        if t <= self.t[0] {
            return 0.0;
        }
        if t >= *self.t.last().unwrap() {
            return 1.0;
        }
        let h = self.t[1] - self.t[0];
        let k = ((t - self.t[0]) / h) as usize;
        let w = (t - self.t[k]) / h;
        self.cum[k] + w * (self.cum[k + 1] - self.cum[k])
    }
}

/// Proper hyperparameters for the tests that need draws from the prior.
pub fn proper_priors(error: ErrorPrior, local: LocalPrior) -> PriorConfig {
    let mut p = PriorConfig::new(error, local);
    p.a_phi = 3.0;
    p.b_phi = 3.0;
    p.a_tau = 3.0;
    p.b_tau = 3.0;
    p.a_zeta_eps = 3.0;
    p.b_zeta_eps = 3.0;
    p.a_zeta_u = 3.0;
    p.b_zeta_u = 3.0;
    p.beta_precision = 0.01;
    p
}

/// Parameters drawn from the prior, auxiliaries included.
pub fn forward_state(rng: &mut RngStream, priors: &PriorConfig, p: usize, m: usize) -> ChainState {
    let sd = 1.0 / priors.beta_precision.sqrt();
    let beta = (0..p).map(|_| draw_normal(rng, 0.0, sd).unwrap()).collect();
    let (at, bt) = priors.error_scale_hyper();
    let (af, bf) = priors.effect_scale_hyper();
    let tau = draw_gamma(rng, at, bt).unwrap();
    let phi = draw_gamma(rng, af, bf).unwrap();
    let pmf = priors.nu_prior_pmf();
    let weights: Vec<f64> = pmf.iter().map(|(_, w)| *w).collect();
    let mut s = ChainState {
        beta,
        u: vec![0.0; m],
        phi,
        tau,
        omega: vec![1.0; m],
        lambda: vec![1.0; m],
        rho: vec![1.0; m],
        varrho: vec![1.0; m],
        nu: vec![5; m],
    };
    for i in 0..m {
        if priors.error_prior == ErrorPrior::HalfCauchyLocal {
            // ρ ~ Exp(1), λ | ρ ~ Exp(ρ) has marginal (1 + λ)⁻².
            s.rho[i] = draw_gamma(rng, 1.0, 1.0).unwrap();
            s.lambda[i] = draw_gamma(rng, 1.0, s.rho[i]).unwrap();
        }
        match priors.reffect_prior {
            LocalPrior::CommonGamma => {}
            LocalPrior::Horseshoe => {
                s.varrho[i] = draw_gamma(rng, 0.5, 1.0).unwrap();
                s.omega[i] = draw_gamma(rng, 0.5, s.varrho[i]).unwrap();
            }
            LocalPrior::Laplace => {
                s.omega[i] = 1.0 / draw_gamma(rng, 1.0, 1.0).unwrap();
            }
            LocalPrior::StudentT => {
                let k = draw_categorical(rng, &weights).unwrap();
                s.nu[i] = pmf[k].0;
                let v = s.nu[i] as f64;
                s.omega[i] = draw_gamma(rng, v / 2.0, v / 2.0).unwrap();
            }
        }
        s.u[i] = draw_normal(rng, 0.0, (1.0 / (s.omega[i] * s.phi)).sqrt()).unwrap();
    }
    s
}

/// Fixed covariate rows `[1, x]` for the tiny configuration.
pub fn tiny_rows(m: usize, n: usize) -> Vec<Vec<Vec<f64>>> {
    (0..m)
        .map(|i| {
            (0..n)
                .map(|j| vec![1.0, -1.0 + 0.4 * j as f64 + 0.15 * i as f64])
                .collect()
        })
        .collect()
}

/// Responses drawn given every parameter.
pub fn forward_data(rng: &mut RngStream, s: &ChainState, rows: &[Vec<Vec<f64>>]) -> GroupedDesign {
    let groups = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let sd = (1.0 / (s.lambda[i] * s.tau)).sqrt();
            let y = r
                .iter()
                .map(|x| {
                    let mean: f64 = x.iter().zip(&s.beta).map(|(a, b)| a * b).sum::<f64>() + s.u[i];
                    draw_normal(rng, mean, sd).unwrap()
                })
                .collect();
            GroupData::new(format!("G{i}"), r, y).unwrap()
        })
        .collect();
    GroupedDesign::from_groups(groups).unwrap()
}

pub struct GewekeStat {
    pub name: String,
    pub z: f64,
}

fn statistics(s: &ChainState, d: &GroupedDesign, priors: &PriorConfig) -> Vec<(String, f64)> {
    let ybar: f64 = d.groups().iter().map(|g| g.y_bar).sum::<f64>() / d.m() as f64;
    let mut v = vec![
        ("beta0".to_string(), s.beta[0]),
        ("beta1".to_string(), s.beta[1]),
        ("beta0^2".to_string(), s.beta[0] * s.beta[0]),
        ("beta0*beta1".to_string(), s.beta[0] * s.beta[1]),
        ("ln tau".to_string(), s.tau.ln()),
        ("ln phi".to_string(), s.phi.ln()),
        ("tanh u1".to_string(), s.u[0].tanh()),
        ("tanh^2 u2".to_string(), s.u[1].tanh().powi(2)),
        ("tanh ybar".to_string(), ybar.tanh()),
    ];
    if priors.error_prior == ErrorPrior::HalfCauchyLocal {
        v.push(("ln lambda1".to_string(), s.lambda[0].ln()));
    }
    if priors.reffect_prior != LocalPrior::CommonGamma {
        v.push(("ln omega1".to_string(), s.omega[0].ln()));
    }
    if priors.reffect_prior == LocalPrior::StudentT {
        v.push(("nu1".to_string(), s.nu[0] as f64));
    }
    v
}

/// Marginal-conditional against successive-conditional simulation on the
/// tiny configuration. The second sample's standard error uses its
/// effective size.
pub fn geweke(priors: &PriorConfig, samples: usize, seed: u64) -> Vec<GewekeStat> {
    geweke_against(priors, priors, samples, seed)
}

/// As [`geweke`], with the forward draws taken under `forward_priors` and
/// the sweeps run under `priors`.
pub fn geweke_against(
    forward_priors: &PriorConfig,
    priors: &PriorConfig,
    samples: usize,
    seed: u64,
) -> Vec<GewekeStat> {
    let (m, n, p) = (3, 4, 2);
    let rows = tiny_rows(m, n);
    let mut rng = RngStream::new(seed, 0);

    let mut forward: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    for _ in 0..samples {
        let s = forward_state(&mut rng, forward_priors, p, m);
        let d = forward_data(&mut rng, &s, &rows);
        let st = statistics(&s, &d, priors);
        if forward.is_empty() {
            names = st.iter().map(|(k, _)| k.clone()).collect();
            forward = vec![Vec::with_capacity(samples); st.len()];
        }
        for (k, (_, v)) in st.into_iter().enumerate() {
            forward[k].push(v);
        }
    }

    let mut rng = RngStream::new(seed, 1);
    let mut s = forward_state(&mut rng, priors, p, m);
    let mut d = forward_data(&mut rng, &s, &rows);
    let mut chain: Vec<Vec<f64>> = vec![Vec::with_capacity(samples); names.len()];
    let fixed = FixedScales::default();
    for _ in 0..samples {
        sweep(&mut s, &d, priors, &fixed, &mut rng).unwrap();
        d = forward_data(&mut rng, &s, &rows);
        for (k, (_, v)) in statistics(&s, &d, priors).into_iter().enumerate() {
            chain[k].push(v);
        }
    }

    names
        .into_iter()
        .enumerate()
        .map(|(k, name)| {
            let (mf, vf) = mean_var(&forward[k]);
            let (mg, vg) = mean_var(&chain[k]);
            let ess = effective_sample_size(&[chain[k].as_slice()]).max(1.0);
            let se = (vf / forward[k].len() as f64 + vg / ess).sqrt();
            GewekeStat {
                name,
                z: (mf - mg) / se,
            }
        })
        .collect()
}

pub const COMBOS: [(ErrorPrior, LocalPrior); 8] = [
    (ErrorPrior::CommonGamma, LocalPrior::CommonGamma),
    (ErrorPrior::CommonGamma, LocalPrior::StudentT),
    (ErrorPrior::CommonGamma, LocalPrior::Horseshoe),
    (ErrorPrior::CommonGamma, LocalPrior::Laplace),
    (ErrorPrior::HalfCauchyLocal, LocalPrior::CommonGamma),
    (ErrorPrior::HalfCauchyLocal, LocalPrior::StudentT),
    (ErrorPrior::HalfCauchyLocal, LocalPrior::Horseshoe),
    (ErrorPrior::HalfCauchyLocal, LocalPrior::Laplace),
];

pub struct KernelCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
}

impl KernelCheck {
    pub fn pass(&self) -> bool {
        self.value < self.limit
    }
}

fn gig_log_density(p: f64, a: f64, b: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| (p - 1.0) * x.ln() - 0.5 * (a * x + b / x)
}

/// Inverse Gaussian CDF with mean `mu` and shape `lam`.
pub fn inverse_gaussian_cdf(x: f64, mu: f64, lam: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    if x <= 0.0 {
        return 0.0;
    }
    let z = Normal::new(0.0, 1.0).unwrap();
    let r = (lam / x).sqrt();
    let second = (2.0 * lam / mu + z.cdf(-r * (x / mu + 1.0)).ln()).exp();
    z.cdf(r * (x / mu - 1.0)) + second
}

/// Sup-distance checks for every generator, plus the GIG(−1/2) mean test
/// reported as |z| against a limit of 3.
pub fn kernel_checks(n: usize, seed: u64) -> Vec<KernelCheck> {
    use glmixer::kernels::{draw_gig, draw_log_gamma, draw_mvn_from_precision};
    use nalgebra::{DMatrix, DVector};
    use statrs::distribution::{ContinuousCDF, Gamma, Normal};
    use statrs::function::gamma::{gamma_lr, ln_gamma};

    let mut out = Vec::new();
    let mut rng = RngStream::new(seed, 0);
    let mut push = |name: String, value: f64, limit: f64| out.push(KernelCheck { name, value, limit });

    for (shape, rate) in [(0.3, 2.0), (1.0, 1.0), (2.5, 0.5), (40.0, 3.0)] {
        let mut xs: Vec<f64> = (0..n).map(|_| draw_gamma(&mut rng, shape, rate).unwrap()).collect();
        let g = Gamma::new(shape, rate).unwrap();
        push(
            format!("gamma({shape},{rate})"),
            sup_distance(&mut xs, |x| g.cdf(x)),
            0.01,
        );
    }

    let a = 0.01;
    let mut ts: Vec<f64> = (0..n).map(|_| draw_log_gamma(&mut rng, a, 1.0).unwrap()).collect();
    let log_cdf = |t: f64| {
        if t < -600.0 {
            (a * t - ln_gamma(a + 1.0)).exp()
        } else {
            gamma_lr(a, t.exp())
        }
    };
    push(format!("log-gamma({a},1)"), sup_distance(&mut ts, log_cdf), 0.01);

    let nd = Normal::new(1.0, 2.0).unwrap();
    let mut xs: Vec<f64> = (0..n).map(|_| draw_normal(&mut rng, 1.0, 2.0).unwrap()).collect();
    push("normal(1,2)".into(), sup_distance(&mut xs, |x| nd.cdf(x)), 0.01);

    for (p, a, b) in [
        (-0.5, 8.0, 2.0),
        (-0.5, 1e-3, 2.0),
        (1.5, 2.0, 0.5),
        (0.3, 0.05, 0.05),
        (-2.0, 3.0, 7.0),
        (5.0, 1.0, 1.0),
    ] {
        let mut xs: Vec<f64> = (0..n).map(|_| draw_gig(&mut rng, p, a, b).unwrap()).collect();
        let name = format!("gig({p},{a},{b})");
        let d = if p == -0.5 {
            let (mu, lam) = ((b / a).sqrt(), b);
            sup_distance(&mut xs, |x| inverse_gaussian_cdf(x, mu, lam))
        } else {
            let tab = TabulatedCdf::positive(gig_log_density(p, a, b), -40.0, 40.0, 40_000);
            sup_distance(&mut xs, |x| tab.cdf(x))
        };
        push(name, d, 0.01);
    }

    for (a, b) in [(8.0, 2.0), (0.5, 3.0), (2.0, 2.0)] {
        let xs: Vec<f64> = (0..n).map(|_| draw_gig(&mut rng, -0.5, a, b).unwrap()).collect();
        let (m, v) = mean_var(&xs);
        let z = (m - (b / a).sqrt()) / (v / n as f64).sqrt();
        push(format!("gig(-0.5,{a},{b}) mean |z|"), z.abs(), 3.0);
    }

    let weights = [0.1, 0.0, 2.0, 0.5, 1.4];
    let total: f64 = weights.iter().sum();
    let mut counts = [0usize; 5];
    for _ in 0..n {
        counts[draw_categorical(&mut rng, &weights).unwrap()] += 1;
    }
    let (mut emp, mut exact, mut worst) = (0.0, 0.0, 0.0f64);
    for k in 0..5 {
        emp += counts[k] as f64 / n as f64;
        exact += weights[k] / total;
        worst = worst.max((emp - exact).abs());
    }
    push("categorical".into(), worst, 0.01);

    let precision = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -0.7, 0.5, -0.7, 2.0]);
    let lin = [1.0, -2.0, 0.5];
    let cov = precision.clone().lu().try_inverse().unwrap();
    let mean = &cov * DVector::from_column_slice(&lin);
    let draws: Vec<Vec<f64>> = (0..n)
        .map(|_| draw_mvn_from_precision(&mut rng, &lin, &precision).unwrap())
        .collect();
    for (label, w) in [
        ("mvn x1", [1.0, 0.0, 0.0]),
        ("mvn x3", [0.0, 0.0, 1.0]),
        ("mvn x1-x2+2x3", [1.0, -1.0, 2.0]),
    ] {
        let wv = DVector::from_column_slice(&w);
        let mu = wv.dot(&mean);
        let sd = (wv.transpose() * &cov * &wv)[(0, 0)].sqrt();
        let nd = Normal::new(mu, sd).unwrap();
        let mut proj: Vec<f64> = draws
            .iter()
            .map(|x| x.iter().zip(&w).map(|(a, b)| a * b).sum())
            .collect();
        push(label.to_string(), sup_distance(&mut proj, |x| nd.cdf(x)), 0.01);
    }
    out
}

fn band_brute(c: f64) -> usize {
    if c < 0.3 {
        0
    } else if c < 0.6 {
        1
    } else if c < 0.8 {
        2
    } else if c < 0.9 {
        3
    } else {
        4
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-14 * b.abs().max(1.0)
}

/// Every metric against a loop written independently of the library.
/// Returns a description of the first disagreement.
pub fn metrics_agree(pred: &[f64], obs: &[f64], fixed: &[f64]) -> Result<(), String> {
    use glmixer::metrics::{MetricReport, SUBNATIONAL_THRESHOLD};
    let n = obs.len();
    let errs: Vec<f64> = pred.iter().zip(obs).map(|(p, c)| p - c).collect();
    let mae = errs.iter().map(|e| e.abs()).sum::<f64>() / n as f64;
    let mse = errs.iter().map(|e| e * e).sum::<f64>() / n as f64;
    let cbar = obs.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = obs.iter().map(|c| (c - cbar).powi(2)).sum();
    let ss_res: f64 = obs.iter().zip(fixed).map(|(c, f)| (c - f).powi(2)).sum();
    let r2 = 1.0 - ss_res / ss_tot;
    let lit = 1.0 - ss_tot / obs.iter().zip(fixed).map(|(c, f)| c - f).sum::<f64>();
    let small = errs.iter().filter(|e| e.abs() < 0.10).count();

    let rep = MetricReport::compute(pred, obs, Some(fixed), true).map_err(|e| e.to_string())?;
    let checks = [
        ("mae", rep.mae, mae),
        ("rmse", rep.rmse, mse.sqrt()),
        ("r_square", rep.r_square.unwrap(), r2),
        ("r_square_literal", rep.r_square_literal.unwrap(), lit),
        ("subnational mae", rep.subnational.mae, mae),
        ("subnational mse", rep.subnational.mse, mse),
    ];
    for (name, got, want) in checks {
        if !close(got, want) {
            return Err(format!("{name}: {got} vs {want}"));
        }
    }
    if rep.subnational.n_small_dev != small || rep.subnational.threshold != SUBNATIONAL_THRESHOLD {
        return Err(format!(
            "small-deviation count {} vs {small}",
            rep.subnational.n_small_dev
        ));
    }
    let mut total = 0;
    for (b, band) in rep.stratified.iter().enumerate() {
        let idx: Vec<usize> = (0..n).filter(|&k| band_brute(obs[k]) == b).collect();
        total += band.count;
        if band.count != idx.len() {
            return Err(format!("band {} count {} vs {}", band.band, band.count, idx.len()));
        }
        if idx.is_empty() {
            if band.mae.is_some() || band.rmse.is_some() {
                return Err(format!("empty band {} has metrics", band.band));
            }
            continue;
        }
        let m = idx.len() as f64;
        let bm = idx.iter().map(|&k| errs[k].abs()).sum::<f64>() / m;
        let br = (idx.iter().map(|&k| errs[k] * errs[k]).sum::<f64>() / m).sqrt();
        if !close(band.mae.unwrap(), bm) || !close(band.rmse.unwrap(), br) {
            return Err(format!("band {} metrics differ", band.band));
        }
    }
    if total != n {
        return Err(format!("bands hold {total} of {n} observations"));
    }
    Ok(())
}

/// Random instances of length up to 1000, with observed values drawn on the
/// band edges a quarter of the time.
pub fn random_metric_instance(rng: &mut RngStream) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    use rand::Rng;
    let n = rng.random_range(2..=1000);
    let edges = [0.3, 0.6, 0.8, 0.9, 1.0];
    let obs: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_bool(0.25) {
                edges[rng.random_range(0..edges.len())]
            } else {
                rng.open01()
            }
        })
        .collect();
    let pred: Vec<f64> = obs
        .iter()
        .map(|c| (c + 0.2 * (rng.open01() - 0.5)).clamp(1e-6, 1.0))
        .collect();
    let fixed: Vec<f64> = obs
        .iter()
        .map(|c| (c + 0.4 * (rng.open01() - 0.5)).clamp(1e-6, 1.0))
        .collect();
    (pred, obs, fixed)
}

pub const BIN: &str = env!("CARGO_BIN_EXE_glmixer");

/// Runs the binary in `dir` and returns (exit code, stdout, stderr).
pub fn glmixer(dir: &std::path::Path, args: &[&str]) -> (i32, String, String) {
    let out = std::process::Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

pub fn glmixer_ok(dir: &std::path::Path, args: &[&str]) -> String {
    let (code, stdout, stderr) = glmixer(dir, args);
    assert_eq!(code, 0, "glmixer {args:?} failed: {stderr}");
    stdout
}

/// simulate → fit → predict → diagnose → metrics with relative paths inside
/// `dir`. Returns every produced file relative to `dir`, sorted.
pub fn pipeline(dir: &std::path::Path, seed: u64) -> Vec<std::path::PathBuf> {
    let s = seed.to_string();
    glmixer_ok(
        dir,
        &["simulate", "--out", "sim", "--m", "8", "--n", "10", "--seed", &s],
    );
    glmixer_ok(
        dir,
        &[
            "fit",
            "--input",
            "sim/panel.csv",
            "--out",
            "fit",
            "--iters",
            "600",
            "--burn-in",
            "300",
            "--chains",
            "2",
            "--seed",
            &s,
        ],
    );
    glmixer_ok(
        dir,
        &["predict", "--fit", "fit", "--input", "sim/panel.csv", "--out", "pred"],
    );
    glmixer_ok(dir, &["diagnose", "--fit", "fit"]);
    glmixer_ok(
        dir,
        &["metrics", "--predictions", "pred/predictions.csv", "--out", "metrics"],
    );
    let mut files = Vec::new();
    for sub in ["sim", "fit", "pred", "metrics"] {
        for e in std::fs::read_dir(dir.join(sub)).unwrap() {
            files.push(e.unwrap().path().strip_prefix(dir).unwrap().to_path_buf());
        }
    }
    files.sort();
    files
}

/// Files whose bytes differ between two pipeline directories.
pub fn differing_files(a: &std::path::Path, b: &std::path::Path, files: &[std::path::PathBuf]) -> Vec<String> {
    files
        .iter()
        .filter(|f| std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok())
        .map(|f| f.display().to_string())
        .collect()
}
