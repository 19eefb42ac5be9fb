//! Temporary calibration harness (not shipped): surveys seeds and Monte
//! Carlo thresholds before freezing them into the acceptance suite.

use std::time::Instant;

use marketvol::index::{build_index_series, WeightScheme};
use marketvol::stats::{
    bootstrap_bands, compute_k, cross_correlation, fraction_within_bands, ks_uniform_null_quantile,
    rescale_check, sample_moments, uniformity_test,
};
use marketvol::synth::{gen_market, oracle_compare, SynthConfig};
use marketvol::{derived_seed, SQRT_3};

fn main() {
    let t0 = Instant::now();

    // 1. KS null thresholds
    for n in [2_000usize, 10_000] {
        let q99 = ks_uniform_null_quantile(n, 0.99, 2_000, 1234);
        println!("ks_null_q99(n={n}) = {q99:.6}  (asymptotic 1.628/sqrt(n) = {:.6})", 1.628 / (n as f64).sqrt());
    }
    println!("[{:?}]", t0.elapsed());

    // 2. per-seed survey at default config
    let tau_max = 250;
    let block_len = 25;
    let n_boot = 1_000;
    for seed in 1..=12u64 {
        let t1 = Instant::now();
        let cfg = SynthConfig { seed, ..SynthConfig::default() };
        let panel = gen_market(&cfg).unwrap();
        let s = build_index_series(&panel.returns, &WeightScheme::Equal).unwrap();
        let abs_r = s.abs_r();
        let abs_omega = s.abs_omega();

        let uni = uniformity_test(&s.omega, &s.valid, 20).unwrap();
        let cmp = oracle_compare(&s.sigma, &panel.sigma_true).unwrap();

        let pairs: Vec<(&str, &[f64], &[f64])> = vec![
            ("sigma,sigma", &s.sigma, &s.sigma),
            ("abs_omega,abs_omega", &abs_omega, &abs_omega),
            ("omega,sigma", &s.omega, &s.sigma),
            ("sigma,omega", &s.sigma, &s.omega),
            ("omega,abs_r", &s.omega, &abs_r),
            ("abs_r,omega", &abs_r, &s.omega),
        ];
        let mut fractions = Vec::new();
        let mut ss_outside_all_100 = true;
        let mut ss_min_margin = f64::INFINITY;
        let mut ss_first_inside = None;
        for (i, (label, x, y)) in pairs.iter().enumerate() {
            let curve = cross_correlation(label, x, y, &s.valid, tau_max).unwrap();
            let bands = bootstrap_bands(
                x,
                y,
                &s.valid,
                tau_max,
                block_len,
                n_boot,
                derived_seed(seed, 100 + i as u64),
            )
            .unwrap();
            let curve = curve.with_bands(&bands).unwrap();
            if i == 0 {
                for t in 1..=100usize {
                    let v = curve.values[t];
                    let hi = bands.high[t];
                    let margin = v - hi;
                    if margin < ss_min_margin {
                        ss_min_margin = margin;
                    }
                    if !(v > 0.0 && (v > hi || v < bands.low[t])) {
                        ss_outside_all_100 = false;
                        if ss_first_inside.is_none() {
                            ss_first_inside = Some(t);
                        }
                    }
                }
            } else {
                fractions.push((label.to_string(), fraction_within_bands(&curve, 1).unwrap()));
            }
        }

        println!(
            "seed {seed}: ks={:.5} mean|w|={:.5} (err {:+.2}%) mean w2={:.5} (err {:+.2}%) pearson={:.5} ratio={:.5} cv={:.4}",
            uni.ks_statistic,
            uni.mean_abs_omega,
            100.0 * (uni.mean_abs_omega / (SQRT_3 / 2.0) - 1.0),
            uni.mean_sq_omega,
            100.0 * (uni.mean_sq_omega - 1.0),
            cmp.pearson,
            cmp.ratio_mean,
            cmp.ratio_cv,
        );
        println!(
            "        ss outside all tau<=100: {ss_outside_all_100} (min margin {ss_min_margin:+.4}, first inside {ss_first_inside:?})"
        );
        let frac_str: Vec<String> =
            fractions.iter().map(|(l, f)| format!("{l}={f:.3}")).collect();
        println!("        inside fractions: {}  [{:?}]", frac_str.join(" "), t1.elapsed());
    }

    // 3. rescaling identity at T = 1e5
    for seed in 1..=3u64 {
        let t1 = Instant::now();
        let cfg = SynthConfig { n_days: 100_000, seed, ..SynthConfig::default() };
        let panel = gen_market(&cfg).unwrap();
        let s = build_index_series(&panel.returns, &WeightScheme::Equal).unwrap();
        let abs_r = s.abs_r();
        let c_rr = cross_correlation("abs_r,abs_r", &abs_r, &abs_r, &s.valid, tau_max).unwrap();
        let c_rs = cross_correlation("abs_r,sigma", &abs_r, &s.sigma, &s.valid, tau_max).unwrap();
        let c_sr = cross_correlation("sigma,abs_r", &s.sigma, &abs_r, &s.valid, tau_max).unwrap();
        let c_ss = cross_correlation("sigma,sigma", &s.sigma, &s.sigma, &s.valid, tau_max).unwrap();
        let k = compute_k(&sample_moments(&s.sigma, &s.valid).unwrap(), 0.75).unwrap();
        let report = rescale_check(&c_rr, &c_rs, &c_sr, &c_ss, k).unwrap();
        println!(
            "T=1e5 seed {seed}: k={k:.4} discrepancies rr/k={:.4} rs/sqrt={:.4} sr/sqrt={:.4} max={:.4}  [{:?}]",
            report.discrepancies[0],
            report.discrepancies[1],
            report.discrepancies[2],
            report.max_discrepancy,
            t1.elapsed()
        );
    }

    // 4. same at T = 1e4 (selftest full-mode scale)
    for seed in 1..=3u64 {
        let cfg = SynthConfig { seed, ..SynthConfig::default() };
        let panel = gen_market(&cfg).unwrap();
        let s = build_index_series(&panel.returns, &WeightScheme::Equal).unwrap();
        let abs_r = s.abs_r();
        let c_rr = cross_correlation("abs_r,abs_r", &abs_r, &abs_r, &s.valid, tau_max).unwrap();
        let c_rs = cross_correlation("abs_r,sigma", &abs_r, &s.sigma, &s.valid, tau_max).unwrap();
        let c_sr = cross_correlation("sigma,abs_r", &s.sigma, &abs_r, &s.valid, tau_max).unwrap();
        let c_ss = cross_correlation("sigma,sigma", &s.sigma, &s.sigma, &s.valid, tau_max).unwrap();
        let k = compute_k(&sample_moments(&s.sigma, &s.valid).unwrap(), 0.75).unwrap();
        let report = rescale_check(&c_rr, &c_rs, &c_sr, &c_ss, k).unwrap();
        println!("T=1e4 seed {seed}: k={k:.4} max_discrepancy={:.4}", report.max_discrepancy);
    }
    // and T = 2000 (selftest quick scale)
    for seed in 1..=3u64 {
        let cfg = SynthConfig { n_days: 2_000, seed, ..SynthConfig::default() };
        let panel = gen_market(&cfg).unwrap();
        let s = build_index_series(&panel.returns, &WeightScheme::Equal).unwrap();
        let abs_r = s.abs_r();
        let c_rr = cross_correlation("abs_r,abs_r", &abs_r, &abs_r, &s.valid, 250).unwrap();
        let c_rs = cross_correlation("abs_r,sigma", &abs_r, &s.sigma, &s.valid, 250).unwrap();
        let c_sr = cross_correlation("sigma,abs_r", &s.sigma, &abs_r, &s.valid, 250).unwrap();
        let c_ss = cross_correlation("sigma,sigma", &s.sigma, &s.sigma, &s.valid, 250).unwrap();
        let k = compute_k(&sample_moments(&s.sigma, &s.valid).unwrap(), 0.75).unwrap();
        let report = rescale_check(&c_rr, &c_rs, &c_sr, &c_ss, k).unwrap();
        let uni = uniformity_test(&s.omega, &s.valid, 20).unwrap();
        println!(
            "T=2e3 seed {seed}: k={k:.4} max_discrepancy={:.4} ks={:.4} mean|w| err {:+.2}% w2 err {:+.2}%",
            report.max_discrepancy,
            uni.ks_statistic,
            100.0 * (uni.mean_abs_omega / (SQRT_3 / 2.0) - 1.0),
            100.0 * (uni.mean_sq_omega - 1.0)
        );
    }

    println!("total {:?}", t0.elapsed());
}
