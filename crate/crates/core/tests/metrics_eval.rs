use pcnic::metrics::{bd_metrics, bd_quality, bd_rate, emit_report, format_bd, ms_ssim, psnr, rate_comparison, RdCurve, RdPoint};
use pcnic::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn curve(name: &str, pts: &[(f64, f64)]) -> RdCurve {
    RdCurve::new(name, pts.iter().map(|&(bpp, psnr)| RdPoint { bpp, psnr, msssim: Some(0.9 + psnr / 1000.0) }).collect()).unwrap()
}

fn textured(seed: u64, h: usize, w: usize) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f: Vec<f64> = (0..6).map(|_| rng.gen_range(0.02..0.2)).collect();
    let data = (0..3 * h * w)
        .map(|k| {
            let (c, i, j) = (k / (h * w), (k / w) % h, k % w);
            let v = 0.5 + 0.3 * (f[c] * i as f64 + f[c + 3] * j as f64).sin() + 0.1 * rng.gen_range(-1.0..1.0);
            v.clamp(0.0, 1.0)
        })
        .collect();
    Tensor::new(vec![3, h, w], data).unwrap()
}

fn perturb(t: &Tensor<f64>, seed: u64, amp: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = t.data().iter().map(|v| (v + rng.gen_range(-amp..amp)).clamp(0.0, 1.0)).collect();
    Tensor::new(t.shape().to_vec(), data).unwrap()
}

#[test]
fn psnr_of_identical_images_is_infinite() {
    let a = textured(1, 8, 8);
    assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
}

#[test]
fn constant_offset_of_a_tenth_gives_20_db() {
    let a = Tensor::full(vec![3, 16, 16], 0.25f64);
    let b = Tensor::full(vec![3, 16, 16], 0.35f64);
    assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-12);
}

#[test]
fn psnr_matches_straight_line_formula() {
    let a = textured(2, 20, 30);
    let b = perturb(&a, 3, 0.05);
    let mut sse = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        sse += (x - y) * (x - y);
    }
    let expected = 10.0 * (1.0 / (sse / a.numel() as f64)).log10();
    assert!((psnr(&a, &b).unwrap() - expected).abs() < 1e-9);
    assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
}

#[test]
fn ms_ssim_identity_symmetry_and_size_limit() {
    let a = textured(4, 161, 170);
    assert_eq!(ms_ssim(&a, &a).unwrap(), 1.0);
    let b = perturb(&a, 5, 0.1);
    let (ab, ba) = (ms_ssim(&a, &b).unwrap(), ms_ssim(&b, &a).unwrap());
    assert_eq!(ab, ba);
    assert!(ab > 0.0 && ab < 1.0);
    let small = textured(6, 160, 200);
    assert!(ms_ssim(&small, &small).is_err());
}

/// Direct 2-D window sums, no separability, no shared helpers.
fn naive_ssim_terms(x: &[f64], y: &[f64], h: usize, w: usize) -> (f64, f64) {
    let mut g = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (0.0001, 0.0009);
    let (mut ls, mut css, mut n) = (0.0, 0.0, 0.0);
    for i in 0..=h - 11 {
        for j in 0..=w - 11 {
            let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for a in 0..11 {
                for b in 0..11 {
                    let k = g[a][b] / total;
                    let (p, q) = (x[(i + a) * w + j + b], y[(i + a) * w + j + b]);
                    mx += k * p;
                    my += k * q;
                    xx += k * p * p;
                    yy += k * q * q;
                    xy += k * p * q;
                }
            }
            let (vx, vy, cov) = (xx - mx * mx, yy - my * my, xy - mx * my);
            ls += (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
            css += (2.0 * cov + c2) / (vx + vy + c2);
            n += 1.0;
        }
    }
    (ls / n, css / n)
}

fn naive_half(p: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = ((h + 1) / 2, (w + 1) / 2);
    let mut out = Vec::with_capacity(oh * ow);
    for i in 0..oh {
        for j in 0..ow {
            let cells: Vec<f64> = [(0, 0), (0, 1), (1, 0), (1, 1)]
                .iter()
                .filter(|(a, b)| 2 * i + a < h && 2 * j + b < w)
                .map(|(a, b)| p[(2 * i + a) * w + 2 * j + b])
                .collect();
            out.push(cells.iter().sum::<f64>() / cells.len() as f64);
        }
    }
    (out, oh, ow)
}

#[test]
fn ms_ssim_matches_composed_single_scale_oracle() {
    let (h, w) = (256, 256);
    let a = textured(7, h, w);
    let b = perturb(&a, 8, 0.15);
    let weights = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
    let mut mean = 0.0;
    for c in 0..3 {
        let mut x = a.data()[c * h * w..(c + 1) * h * w].to_vec();
        let mut y = b.data()[c * h * w..(c + 1) * h * w].to_vec();
        let (mut hh, mut ww) = (h, w);
        let mut prod = 1.0f64;
        for (s, wt) in weights.iter().enumerate() {
            let (l, cs) = naive_ssim_terms(&x, &y, hh, ww);
            prod *= if s == 4 { l * cs } else { cs }.max(0.0).powf(*wt);
            let nx = naive_half(&x, hh, ww);
            y = naive_half(&y, hh, ww).0;
            (x, hh, ww) = nx;
        }
        mean += prod / 3.0;
    }
    let got = ms_ssim(&a, &b).unwrap();
    assert!((got - mean).abs() < 1e-6, "{got} vs {mean}");
}

fn base_points() -> Vec<(f64, f64)> {
    vec![(0.1, 28.0), (0.2, 30.5), (0.4, 33.1), (0.8, 35.4), (1.6, 37.2)]
}

#[test]
fn identical_curves_give_zero_deltas() {
    let c = curve("a", &base_points());
    let r = bd_metrics(&c, &c).unwrap();
    assert_eq!((r.bd_quality, r.bd_rate_percent), (0.0, 0.0));
}

#[test]
fn one_db_shift_gives_one_db() {
    let a = curve("a", &base_points());
    let b = curve("b", &base_points().iter().map(|&(r, q)| (r, q + 1.0)).collect::<Vec<_>>());
    let r = bd_metrics(&a, &b).unwrap();
    assert!((r.bd_quality - 1.0).abs() < 1e-6, "{}", r.bd_quality);
    assert!(r.bd_rate_percent < 0.0);
}

/// Trapezoidal integration of the exact curves, 10⁴ samples.
fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let n = 10_000;
    let step = (hi - lo) / n as f64;
    let mut s = 0.5 * (f(lo) + f(hi));
    for i in 1..n {
        s += f(lo + i as f64 * step);
    }
    s * step
}

#[test]
fn log_curves_match_dense_integration() {
    let (c1, c2) = (30.0, 31.7);
    let rates = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0];
    let a = curve("a", &rates.map(|r| (r, 10.0 * f64::log10(r) + c1)));
    let b = curve("b", &rates.iter().map(|&r| (r * 1.3, 10.0 * (r * 1.3).log10() + c2)).collect::<Vec<_>>());
    let r = bd_metrics(&a, &b).unwrap();

    // quality overlap in log-rate, rate overlap in quality
    let (lo, hi) = ((0.125f64 * 1.3).log10(), 4f64.log10());
    let q_gap = trapezoid(|x| (10.0 * x + c2) - (10.0 * x + c1), lo, hi) / (hi - lo);
    let (qlo, qhi) = (10.0 * (0.125f64 * 1.3).log10() + c2, 10.0 * 4f64.log10() + c1);
    let lr_gap = trapezoid(|q| (q - c2) / 10.0 - (q - c1) / 10.0, qlo, qhi) / (qhi - qlo);
    let rate = (10f64.powf(lr_gap) - 1.0) * 100.0;
    assert!(((r.bd_quality - q_gap) / q_gap).abs() < 1e-4, "{} vs {q_gap}", r.bd_quality);
    assert!(((r.bd_rate_percent - rate) / rate).abs() < 1e-4, "{} vs {rate}", r.bd_rate_percent);
}

#[test]
fn bd_rate_is_antisymmetric_and_scale_invariant() {
    let a = curve("a", &base_points());
    let b = curve("b", &base_points().iter().map(|&(r, q)| (r * 0.97, q + 0.05 * r.ln().abs().sqrt())).collect::<Vec<_>>());
    let ab = bd_rate(&a, &b, |p| Some(p.psnr)).unwrap();
    let ba = bd_rate(&b, &a, |p| Some(p.psnr)).unwrap();
    assert!(ab < -1.0, "{ab}");
    assert!((ab + ba).abs() < 0.5, "{ab} {ba}");
    // the log-rate gap is exactly antisymmetric; percentages only to first order
    assert!(((1.0 + ab / 100.0) * (1.0 + ba / 100.0) - 1.0).abs() < 1e-12);
    let scale = |c: &RdCurve| RdCurve::new(&c.method, c.points.iter().map(|p| RdPoint { bpp: p.bpp * 3.0, ..*p }).collect()).unwrap();
    let scaled = bd_rate(&scale(&a), &scale(&b), |p| Some(p.psnr)).unwrap();
    assert!((scaled - ab).abs() < 1e-9);
    let q = bd_quality(&a, &b, |p| Some(p.psnr)).unwrap();
    assert!((q + bd_quality(&b, &a, |p| Some(p.psnr)).unwrap()).abs() < 1e-9);
}

#[test]
fn bd_requires_points_and_overlap() {
    let a = curve("a", &base_points());
    let short = curve("s", &base_points()[..3]);
    assert!(bd_metrics(&a, &short).is_err());
    let far = curve("f", &base_points().iter().map(|&(r, q)| (r * 100.0, q + 50.0)).collect::<Vec<_>>());
    assert!(bd_metrics(&a, &far).is_err());
}

#[test]
fn curve_csv_round_trips() {
    let mut c = curve("a", &base_points());
    c.points[2].msssim = None;
    let text = c.to_csv();
    assert!(text.starts_with("bpp,psnr,msssim\n"));
    assert_eq!(RdCurve::from_csv("a", &text).unwrap(), c);
}

#[test]
fn report_rows_and_formatting() {
    let a = curve("Cheng2020", &base_points());
    let rep = emit_report(&a, std::slice::from_ref(&a));
    assert_eq!(rep.rows[0].cells(), ["0", "0", "0", "0"]);
    assert_eq!(rep.rows[1].cells(), ["0", "0", "0", "0"]);
    assert_eq!([2.101, -54.518, 1.001, -29.315].map(format_bd).join(" / "), "2.101 / -54.518 / 1.001 / -29.315");
    assert!(rep.to_table().lines().next().unwrap().contains("BD-PSNR (dB)"));
    let short = curve("short", &base_points()[..2]);
    assert_eq!(emit_report(&a, &[short]).rows[1].cells(), ["n/a", "n/a", "n/a", "n/a"]);
}

#[test]
fn rate_comparison_of_a_model_with_itself_is_zero() {
    let pts = [(0.0018, RdPoint { bpp: 0.3, psnr: 31.0, msssim: None }), (0.0035, RdPoint { bpp: 0.5, psnr: 33.0, msssim: None })];
    let rows = rate_comparison(&pts, &pts).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.bpp_delta() == 0.0 && r.psnr_delta() == 0.0));
    assert!(rate_comparison(&pts, &pts[..1]).is_err());
}
