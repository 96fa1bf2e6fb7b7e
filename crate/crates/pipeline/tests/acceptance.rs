//! Acceptance criteria 1-11. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use neopain_core::classify::{self, ClassifierKind, ClassifierParams, ModelBody};
use neopain_core::cnn::{ops, ArchitectureSpec, Network, Phase, TapRequest, WeightSet, SHIPPED};
use neopain_core::eval::{self, ScoredSet};
use neopain_core::select::{self, ReliefParams, SampleCount, SelectionMethod};
use neopain_core::strain::{horn_schunck_flow, strain_magnitude_map, FlowField, FlowParams, Plane};
use neopain_core::{FeatureMatrix, Label, Tensor};
use neopain_pipeline::config::{FusionConfig, PipelineConfig, SelectorConfig, SweepConfig, TapConfig};
use neopain_pipeline::extract::{extract_deep, load_network, WeightSource};
use neopain_pipeline::fuse::fuse;
use neopain_pipeline::run::{plan_split, run_pipeline, select_features};
use neopain_pipeline::strain::extract_strain;
use neopain_pipeline::synth::gen_synthetic;
use neopain_pipeline::DatasetManifest;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    check(elapsed < limit, || format!("{what} took {elapsed:.2?}, limit {limit:?}"))
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// 1

fn dimension_pins() -> Outcome {
    let start = Instant::now();
    let conv5 = [("vgg-f", 43264), ("vgg-m", 86528), ("vgg-s", 147968), ("vgg-face", 100352)];
    check(SHIPPED.len() == 4, || format!("{} shipped architectures", SHIPPED.len()))?;
    for (name, want) in conv5 {
        let arch = ArchitectureSpec::shipped(name).map_err(e2s)?;
        let c5 = arch.flat_width("Conv 5").map_err(e2s)?;
        let f7 = arch.flat_width("Full 7").map_err(e2s)?;
        check(c5 == want, || format!("{name} Conv 5 = {c5}, want {want}"))?;
        check(f7 == 4096, || format!("{name} Full 7 = {f7}, want 4096"))?;
    }
    within(start.elapsed(), Duration::from_secs(1), "shape propagation")?;
    Ok(format!("Conv 5 and Full 7 widths exact in {:.0?}", start.elapsed()))
}

// 2

fn direct_conv(x: &Tensor, k: &Tensor, b: &[f32], stride: usize, pad: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (f, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = Vec::with_capacity(oh * ow * f);
    let mut scale = Vec::with_capacity(oh * ow * f);
    for oy in 0..oh {
        for ox in 0..ow {
            for fi in 0..f {
                let mut acc = b[fi] as f64;
                let mut mag = (b[fi] as f64).abs();
                for ky in 0..kh {
                    for kx in 0..kw {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        for ci in 0..c {
                            let xv = x.data()[(iy as usize * w + ix as usize) * c + ci] as f64;
                            let kv = k.data()[((fi * kh + ky) * kw + kx) * c + ci] as f64;
                            acc += xv * kv;
                            mag += (xv * kv).abs();
                        }
                    }
                }
                out.push(acc);
                scale.push(mag);
            }
        }
    }
    (vec![oh, ow, f], out, scale)
}

fn conv_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    while cases < 200 {
        let (h, w, c) = (rng.random_range(1..=32), rng.random_range(1..=32), rng.random_range(1..=4));
        let (kh, kw) = (rng.random_range(1..=7), rng.random_range(1..=7));
        let (stride, pad) = (rng.random_range(1..=4), rng.random_range(0..=3));
        if ops::window_output(h, kh, stride, pad).is_none() || ops::window_output(w, kw, stride, pad).is_none() {
            continue;
        }
        let f = rng.random_range(1..=6);
        let mut fill = |n: usize| (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect::<Vec<f32>>();
        let x = Tensor::new(vec![h, w, c], fill(h * w * c)).map_err(e2s)?;
        let k = Tensor::new(vec![f, kh, kw, c], fill(f * kh * kw * c)).map_err(e2s)?;
        let b = fill(f);
        let got = ops::conv2d(&x, &k, &Tensor::from_vec(b.clone()).map_err(e2s)?, stride, pad).map_err(e2s)?;
        let (shape, want, scale) = direct_conv(&x, &k, &b, stride, pad);
        check(got.shape() == shape.as_slice(), || format!("shape {:?} vs {shape:?}", got.shape()))?;
        for ((g, t), s) in got.data().iter().zip(&want).zip(&scale) {
            let rel = (*g as f64 - t).abs() / t.abs().max(*s).max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
        }
        cases += 1;
    }
    check(worst <= 1e-5, || format!("worst relative error {worst:.3e}"))?;
    within(start.elapsed(), Duration::from_secs(10), "200 cases")?;
    Ok(format!("200 cases, worst relative error {worst:.2e}, {:.2?}", start.elapsed()))
}

// 3

fn full_forward() -> Outcome {
    let arch = ArchitectureSpec::shipped("vgg-f").map_err(e2s)?;
    let net = Network::new(arch.clone(), WeightSet::random(&arch, 11).map_err(e2s)?).map_err(e2s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let input = Tensor::new(vec![224, 224, 3], (0..224 * 224 * 3).map(|_| rng.random_range(-120.0f32..120.0)).collect())
        .map_err(e2s)?;
    let layers = ["Conv 1", "Conv 2", "Conv 3", "Conv 4", "Conv 5", "Full 6", "Full 7"];
    let taps: Vec<TapRequest> = layers
        .iter()
        .flat_map(|l| [TapRequest::new(*l, Phase::PreReLU), TapRequest::new(*l, Phase::PostReLU)])
        .collect();
    let start = Instant::now();
    let first = net.forward_with_taps(&input, &taps).map_err(e2s)?;
    let per_image = start.elapsed();
    let second = net.forward_with_taps(&input, &taps).map_err(e2s)?;
    for l in layers {
        let pre = &first[&TapRequest::new(l, Phase::PreReLU)];
        let post = &first[&TapRequest::new(l, Phase::PostReLU)];
        check(post.iter().all(|&v| v >= 0.0), || format!("{l} PostReLU has negatives"))?;
        check(pre.iter().any(|&v| v < 0.0), || format!("{l} PreReLU has no negatives"))?;
        check(pre.iter().zip(post).all(|(a, b)| a.max(0.0) == *b), || {
            format!("{l} PostReLU differs from max(0, PreReLU)")
        })?;
    }
    for (tap, a) in &first {
        let b = &second[tap];
        check(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()), || format!("{tap} not bit-identical"))?;
    }
    within(per_image, Duration::from_secs(30), "one vgg-f image")?;
    Ok(format!("14 taps checked, {per_image:.2?} per image"))
}

// 4

/// Full distance matrix and explicit hit/miss sets; neighbours chosen by
/// repeated minimum search with ties to the lower index.
fn relief_oracle(x: &[Vec<f64>], y: &[bool], k: usize) -> Vec<f64> {
    let (n, d) = (x.len(), x[0].len());
    let range: Vec<f64> = (0..d)
        .map(|f| {
            let col = x.iter().map(|r| r[f]);
            col.clone().fold(f64::NEG_INFINITY, f64::max) - col.fold(f64::INFINITY, f64::min)
        })
        .collect();
    let diff = |i: usize, j: usize, f: usize| if range[f] > 0.0 { (x[i][f] - x[j][f]).abs() / range[f] } else { 0.0 };
    let dist: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| (0..d).map(|f| diff(i, j, f).powi(2)).sum::<f64>().sqrt()).collect())
        .collect();
    let mut w = vec![0.0; d];
    for i in 0..n {
        let pick = |same: bool| {
            let mut pool: Vec<usize> = (0..n).filter(|&j| j != i && (y[j] == y[i]) == same).collect();
            let mut chosen = Vec::new();
            for _ in 0..k {
                let (pos, _) = pool
                    .iter()
                    .enumerate()
                    .fold((usize::MAX, (f64::INFINITY, usize::MAX)), |best, (p, &j)| {
                        if (dist[i][j], j) < best.1 {
                            (p, (dist[i][j], j))
                        } else {
                            best
                        }
                    });
                chosen.push(pool.remove(pos));
            }
            chosen
        };
        let hits = pick(true);
        let misses = pick(false);
        for (f, wf) in w.iter_mut().enumerate() {
            let m: f64 = misses.iter().map(|&j| diff(i, j, f)).sum();
            let h: f64 = hits.iter().map(|&j| diff(i, j, f)).sum();
            *wf += (m - h) / (n * k) as f64;
        }
    }
    w
}

fn relief_vs_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let n = rng.random_range(8..=50);
        let d = rng.random_range(2..=8);
        let constant = rng.random_range(0..d);
        let mut y: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        for i in (1..n).rev() {
            y.swap(i, rng.random_range(0..=i));
        }
        let x: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..d)
                    .map(|f| match f {
                        _ if f == constant => 3.5,
                        0 => y[i] as u8 as f64 + rng.random_range(-0.8..0.8),
                        // coarse grid forces distance ties
                        _ if case % 3 == 0 => rng.random_range(0..3) as f64,
                        _ => rng.random_range(-5.0..5.0),
                    })
                    .collect()
            })
            .collect();
        let smallest = y.iter().filter(|&&p| p).count().min(y.iter().filter(|&&p| !p).count());
        let k = rng.random_range(1..=smallest.saturating_sub(1).clamp(1, 10));
        let names: Vec<String> = (0..d).map(|f| format!("f{f}")).collect();
        let mut m = FeatureMatrix::new(names).map_err(e2s)?;
        for (i, row) in x.iter().enumerate() {
            m.push_row(i.to_string(), i.to_string(), i.to_string(), Label::from_pain(y[i]), row).map_err(e2s)?;
        }
        let got = select::relieff_weights(&m, ReliefParams { k_neighbors: k, samples: SampleCount::All }).map_err(e2s)?;
        let want = relief_oracle(&x, &y, k);
        for (g, t) in got.iter().zip(&want) {
            worst = worst.max((g - t).abs());
        }
        check(got[constant] == 0.0, || format!("case {case}: constant feature weight {}", got[constant]))?;
        check(got.iter().all(|w| (-1.0..=1.0).contains(w)), || format!("case {case}: weight outside [-1, 1]"))?;
    }
    check(worst <= 1e-12, || format!("max deviation {worst:.3e}"))?;
    Ok(format!("20 fixtures, max deviation {worst:.2e}, constant features exactly 0"))
}

// 5

fn su_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.random_range(2..60);
        let mut x: Vec<u32> = (0..n).map(|_| rng.random_range(0..5)).collect();
        x[0] = 0;
        x[1] = 1;
        let su = select::symmetric_uncertainty_symbols(&x, &x).map_err(e2s)?;
        check((su - 1.0).abs() <= 1e-12, || format!("SU(x, x) = {su}"))?;
    }
    let mut products = 0;
    for _ in 0..30 {
        let a: Vec<usize> = (0..rng.random_range(2..5)).map(|_| rng.random_range(1..5)).collect();
        let b: Vec<usize> = (0..rng.random_range(2..4)).map(|_| rng.random_range(1..5)).collect();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (i, &ai) in a.iter().enumerate() {
            for (j, &bj) in b.iter().enumerate() {
                for _ in 0..ai * bj {
                    xs.push(i);
                    ys.push(j);
                }
            }
        }
        let su = select::symmetric_uncertainty_symbols(&xs, &ys).map_err(e2s)?;
        check(su == 0.0, || format!("product table {a:?} x {b:?} gives SU {su:e}"))?;
        products += 1;
    }
    for _ in 0..200 {
        let n = rng.random_range(1..80);
        let x: Vec<u32> = (0..n).map(|_| rng.random_range(0..6)).collect();
        let y: Vec<u32> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let xy = select::symmetric_uncertainty_symbols(&x, &y).map_err(e2s)?;
        let yx = select::symmetric_uncertainty_symbols(&y, &x).map_err(e2s)?;
        check((xy - yx).abs() <= 1e-12, || format!("asymmetric: {xy} vs {yx}"))?;
        check((0.0..=1.0).contains(&xy), || format!("SU {xy} outside [0, 1]"))?;
        let cont: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let labels: Vec<Label> = y.iter().map(|&v| Label::from_pain(v == 0)).collect();
        let s = select::symmetric_uncertainty(&cont, &labels, 10).map_err(e2s)?;
        check((0.0..=1.0).contains(&s), || format!("SU {s} outside [0, 1]"))?;
    }
    Ok(format!("identity, {products} exact product tables, symmetry and bounds"))
}

// 6

/// Twice the Mann-Whitney count, in integers.
fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for (i, &pi) in labels.iter().enumerate() {
        for (j, &pj) in labels.iter().enumerate() {
            if pi && !pj {
                pairs += 1;
                twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    twice as f64 / (2 * pairs) as f64
}

fn scored(scores: &[f64], labels: &[bool]) -> Result<ScoredSet, String> {
    ScoredSet::unnamed(scores.to_vec(), labels.iter().map(|&p| Label::from_pain(p)).collect()).map_err(e2s)
}

fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..60 {
        let n = rng.random_range(2..=500);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n)
            .map(|i| {
                let base = if labels[i] { 0.5 } else { 0.0 };
                if case % 2 == 0 {
                    ((base + rng.random_range(0.0f64..1.0)) * 8.0).floor()
                } else {
                    base + rng.random_range(0.0..1.0)
                }
            })
            .collect();
        let got = eval::auc(&scored(&scores, &labels)?).map_err(e2s)?;
        let want = pairwise_auc(&scores, &labels);
        check(got == want, || format!("case {case} (n = {n}): {got} vs {want}"))?;
    }
    let labels = [false, false, true, true, false, true];
    let perfect = eval::auc(&scored(&[0.1, 0.2, 0.8, 0.9, 0.3, 0.7], &labels)?).map_err(e2s)?;
    check(perfect == 1.0, || format!("perfect ranking gives {perfect}"))?;
    let flat = eval::auc(&scored(&[0.4; 6], &labels)?).map_err(e2s)?;
    check(flat == 0.5, || format!("all-equal scores give {flat}"))?;
    Ok("60 fixtures exact, perfect 1.0, ties 0.5".into())
}

// 7

fn delong() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 40;
    let labels: Vec<bool> = (0..n).map(|i| i % 5 < 2).collect();
    let a: Vec<f64> = labels.iter().map(|&p| p as u8 as f64 * 0.6 + rng.random_range(0.0..1.0)).collect();
    let b: Vec<f64> = labels
        .iter()
        .zip(&a)
        .map(|(&p, &x)| 0.5 * x + p as u8 as f64 * 0.2 + rng.random_range(0.0..0.6))
        .collect();
    let (sa, sb) = (scored(&a, &labels)?, scored(&b, &labels)?);

    let same = eval::compare_auc(&sa, &sa).map_err(e2s)?;
    check(same.z.abs() <= 1e-12 && (same.p - 1.0).abs() <= 1e-12, || {
        format!("self comparison z = {}, p = {}", same.z, same.p)
    })?;
    let ab = eval::compare_auc(&sa, &sb).map_err(e2s)?;
    let ba = eval::compare_auc(&sb, &sa).map_err(e2s)?;
    check(ab.z == -ba.z && ab.p == ba.p, || format!("swap: z {} / {}, p {} / {}", ab.z, ba.z, ab.p, ba.p))?;

    let pos = |s: &[f64]| -> Vec<f64> { s.iter().zip(&labels).filter(|(_, &p)| p).map(|(v, _)| *v).collect() };
    let neg = |s: &[f64]| -> Vec<f64> { s.iter().zip(&labels).filter(|(_, &p)| !p).map(|(v, _)| *v).collect() };
    let psi = |x: f64, y: f64| if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 };
    let components = |s: &[f64]| {
        let (p, q) = (pos(s), neg(s));
        let v10: Vec<f64> = p.iter().map(|&x| q.iter().map(|&y| psi(x, y)).sum::<f64>() / q.len() as f64).collect();
        let v01: Vec<f64> = q.iter().map(|&y| p.iter().map(|&x| psi(x, y)).sum::<f64>() / p.len() as f64).collect();
        (v10, v01)
    };
    let cov = |u: &[f64], v: &[f64]| {
        let (mu, mv) = (u.iter().sum::<f64>() / u.len() as f64, v.iter().sum::<f64>() / v.len() as f64);
        u.iter().zip(v).map(|(x, y)| (x - mu) * (y - mv)).sum::<f64>() / (u.len() - 1) as f64
    };
    let (a10, a01) = components(&a);
    let (b10, b01) = components(&b);
    let (m, k) = (a10.len() as f64, a01.len() as f64);
    let var_a = cov(&a10, &a10) / m + cov(&a01, &a01) / k;
    let var_b = cov(&b10, &b10) / m + cov(&b01, &b01) / k;
    let cab = cov(&a10, &b10) / m + cov(&a01, &b01) / k;
    let worst = [(ab.var_a, var_a), (ab.var_b, var_b), (ab.cov, cab)]
        .iter()
        .map(|(g, t)| (g - t).abs())
        .fold(0.0, f64::max);
    check(worst <= 1e-10, || format!("variance components off by {worst:e}"))?;
    let auc_a = a10.iter().sum::<f64>() / m;
    check((ab.auc_a - auc_a).abs() <= 1e-12, || format!("auc_a {} vs {auc_a}", ab.auc_a))?;
    Ok(format!("z = 0 and p = 1 on self, antisymmetric, components within {worst:.1e}"))
}

// 8

fn classifiers() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut m = FeatureMatrix::new(vec!["a".into(), "b".into(), "c".into()]).map_err(e2s)?;
    let normal = (0.6f64, 0.8f64);
    let mut count = 0;
    while count < 100 {
        // two clusters on either side of a gap of width 2 around the plane
        let side = if count % 2 == 0 { 1.0 } else { -1.0 };
        let p: [f64; 3] = [
            side * 2.5 + rng.random_range(-1.5..1.5),
            side * 2.5 + rng.random_range(-1.5..1.5),
            rng.random_range(-1.0..1.0),
        ];
        let proj = normal.0 * p[0] + normal.1 * p[1];
        if proj.abs() < 1.0 {
            continue;
        }
        m.push_row(count.to_string(), count.to_string(), count.to_string(), Label::from_pain(proj > 0.0), &p)
            .map_err(e2s)?;
        count += 1;
    }
    let params = ClassifierParams::default();
    for kind in ClassifierKind::ALL {
        let model = classify::train(&m, kind, &params).map_err(e2s)?;
        let preds = model.predict_matrix(&m).map_err(e2s)?;
        let labels: Vec<Label> = preds.iter().map(|p| p.label).collect();
        let acc = eval::accuracy(&labels, m.labels()).map_err(e2s)?;
        check(acc == 1.0, || format!("{} train accuracy {acc}", kind.display_name()))?;
    }

    let nb = classify::train_nb(&m).map_err(e2s)?;
    let mut worst: f64 = 0.0;
    for q in [[0.3, -0.2, 0.1], [2.0, 1.0, -0.5], [-1.5, 0.4, 0.9]] {
        let mut joint = [0.0f64; 2];
        for (c, j) in joint.iter_mut().enumerate() {
            let rows: Vec<&[f64]> = m.rows().zip(m.labels()).filter(|(_, l)| l.is_pain() as usize == c).map(|(r, _)| r).collect();
            let nc = rows.len() as f64;
            *j = nc / m.len() as f64;
            for f in 0..3 {
                let mu = rows.iter().map(|r| r[f]).sum::<f64>() / nc;
                let var = rows.iter().map(|r| (r[f] - mu).powi(2)).sum::<f64>() / nc;
                *j *= (-(q[f] - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
            }
        }
        let want = joint[1] / (joint[0] + joint[1]);
        let got = nb.score(&q).map_err(e2s)?;
        worst = worst.max((got - want).abs());
    }
    check(worst <= 1e-9, || format!("NB posterior off by {worst:e}"))?;

    let rf = |seed| {
        classify::train_rf(&m, 50, seed).map(|model| match model.body() {
            ModelBody::Rf(f) => format!("{f:?}"),
            _ => String::new(),
        })
    };
    let (r1, r2, r3) = (rf(3).map_err(e2s)?, rf(3).map_err(e2s)?, rf(4).map_err(e2s)?);
    check(r1 == r2, || "rf differs between runs with one seed".into())?;
    check(r1 != r3, || "rf ignores its seed".into())?;
    Ok(format!("NB, kNN, SVM, RFT at 100% train accuracy; NB posterior within {worst:.1e}; rf reproducible"))
}

// 9

fn strain() -> Outcome {
    let (h, w) = (24, 30);
    let field = |fu: &dyn Fn(f64, f64) -> f64, fv: &dyn Fn(f64, f64) -> f64| -> Result<FlowField, String> {
        FlowField::new(
            Plane::from_fn(h, w, |y, x| fu(x as f64, y as f64)).map_err(e2s)?,
            Plane::from_fn(h, w, |y, x| fv(x as f64, y as f64)).map_err(e2s)?,
        )
        .map_err(e2s)
    };
    let interior = |p: &Plane| -> Vec<f64> {
        (1..h - 1).flat_map(|y| (1..w - 1).map(move |x| (y, x))).map(|(y, x)| p.at(y, x)).collect()
    };

    let translation = strain_magnitude_map(&field(&|_, _| 1.7, &|_, _| -0.4)?).map_err(e2s)?;
    check(translation.data().iter().all(|&v| v == 0.0), || "constant flow gives nonzero strain".into())?;

    let a = 0.37;
    let shear = strain_magnitude_map(&field(&|_, y| a * y, &|_, _| 0.0)?).map_err(e2s)?;
    let dev = interior(&shear).iter().map(|v| (v - a / 2f64.sqrt()).abs()).fold(0.0, f64::max);
    check(dev <= 1e-6, || format!("shear magnitude off by {dev:e}"))?;

    let om = 0.21;
    let rot = strain_magnitude_map(&field(&|_, y| -om * y, &|x, _| om * x)?).map_err(e2s)?;
    let rmax = interior(&rot).into_iter().fold(0.0, f64::max);
    check(rmax <= 1e-10, || format!("rotation strain {rmax:e}"))?;

    let (fh, fw) = (48, 48);
    let pattern = |x: f64, y: f64| 100.0 + 40.0 * (0.35 * x).sin() * (0.3 * y).cos() + 20.0 * (0.21 * (x + y)).sin();
    let a_plane = Plane::from_fn(fh, fw, |y, x| pattern(x as f64, y as f64)).map_err(e2s)?;
    let b_plane = Plane::from_fn(fh, fw, |y, x| pattern(x as f64 - 1.0, y as f64)).map_err(e2s)?;
    let flow = horn_schunck_flow(&a_plane, &b_plane, FlowParams::default()).map_err(e2s)?;
    let mean_u = interior_mean(&flow.u, 4);
    let mean_v = interior_mean(&flow.v, 4);
    check((0.7..=1.3).contains(&mean_u), || format!("translation mean u = {mean_u}"))?;
    Ok(format!(
        "translation 0, shear within {dev:.1e}, rotation {rmax:.1e}, recovered u = {mean_u:.3} (v = {mean_v:.3})"
    ))
}

fn interior_mean(p: &Plane, border: usize) -> f64 {
    let (h, w) = (p.height(), p.width());
    p.mean_in(border, h - border, border, w - border)
}

// 10, 11

struct Fixture {
    _dir: tempfile::TempDir,
    manifest: DatasetManifest,
}

fn fixture(subjects: usize, frames: usize, seed: u64) -> Result<Fixture, String> {
    let dir = tempfile::tempdir().map_err(e2s)?;
    let manifest = gen_synthetic(dir.path(), subjects, frames, seed).map_err(e2s)?;
    Ok(Fixture { _dir: dir, manifest })
}

fn e2e_config() -> PipelineConfig {
    let mut cfg = PipelineConfig {
        architecture: "vgg-f".into(),
        tap: TapConfig { layer: "Conv 5".into(), phase: Phase::PostReLU },
        ..Default::default()
    };
    cfg.split.test_fraction = 0.5;
    cfg.weights.insert("vgg-f".into(), "random:7".into());
    cfg
}

/// First split seed whose test side holds both classes; chosen from labels only.
fn balanced_seed(manifest: &DatasetManifest, cfg: &PipelineConfig) -> Result<u64, String> {
    for seed in 0..100 {
        let mut c = cfg.clone();
        c.split.seed = seed;
        let plan = plan_split(manifest, &c).map_err(e2s)?;
        let test = plan.test_set();
        let labels: Vec<bool> = manifest.entries.iter().filter(|e| test.contains(&e.subject_id)).map(|e| e.label.is_pain()).collect();
        if labels.contains(&true) && labels.contains(&false) {
            return Ok(seed);
        }
    }
    Err("no split seed with both classes on the test side".into())
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let fx = fixture(8, 6, 1)?;
    let mut cfg = e2e_config();
    cfg.split.seed = balanced_seed(&fx.manifest, &cfg)?;

    let mut reports = Vec::new();
    for _ in 0..2 {
        let mut r = run_pipeline(&fx.manifest, &cfg, None).map_err(e2s)?;
        r.timestamp_unix = 0;
        reports.push(r);
    }
    let (a, b) = (reports[0].to_json().map_err(e2s)?, reports[1].to_json().map_err(e2s)?);
    check(a == b, || "two runs produced different reports".into())?;
    let rec = &reports[0].records[0];
    check(rec.dims == 43264, || format!("dims {}", rec.dims))?;
    let margin = rec.accuracy - rec.majority_baseline;
    check(margin >= 0.30, || {
        format!("accuracy {:.4} vs baseline {:.4}", rec.accuracy, rec.majority_baseline)
    })?;
    check(rec.accuracy >= 0.85, || format!("accuracy {:.4} below 0.85", rec.accuracy))?;
    let main_time = start.elapsed();
    within(main_time, Duration::from_secs(300), "end-to-end run")?;

    // 4 architectures x 2 layers x 2 phases
    let sweep_fx = fixture(8, 2, 3)?;
    let mut sweep_cfg = e2e_config();
    sweep_cfg.split.seed = balanced_seed(&sweep_fx.manifest, &sweep_cfg)?;
    sweep_cfg.sweep = Some(SweepConfig {
        architectures: SHIPPED.iter().map(|s| s.to_string()).collect(),
        layers: vec!["Conv 5".into(), "Full 7".into()],
        phases: vec![Phase::PreReLU, Phase::PostReLU],
    });
    for (i, arch) in SHIPPED.iter().enumerate() {
        sweep_cfg.weights.insert(arch.to_string(), format!("random:{}", 20 + i));
    }
    let sweep = run_pipeline(&sweep_fx.manifest, &sweep_cfg, None).map_err(e2s)?;
    check(sweep.records.len() == 16, || format!("sweep has {} rows", sweep.records.len()))?;
    for r in &sweep.records {
        let arch = ArchitectureSpec::shipped(&r.architecture).map_err(e2s)?;
        let layer = r.tap.rsplit_once(' ').map(|(l, _)| l).unwrap_or(&r.tap);
        let want = arch.flat_width(layer).map_err(e2s)?;
        check(r.dims == want, || format!("{}: dims {} vs width {want}", r.key(), r.dims))?;
    }

    // fused widths on the main fixture
    let plan = plan_split(&fx.manifest, &cfg).map_err(e2s)?;
    let net = load_network("vgg-f", &WeightSource::Random(7)).map_err(e2s)?;
    let tap = cfg.tap.request();
    let deep = extract_deep(&fx.manifest, &net, std::slice::from_ref(&tap), &cfg.preprocess).map_err(e2s)?;
    let (strain, _) = extract_strain(&fx.manifest, &cfg.preprocess, &cfg.strain).map_err(e2s)?;
    let mut widths = Vec::new();
    for deep_n in [15, 10] {
        let f = fuse(&strain, &deep.matrices[&tap], &plan, &cfg.selector, FusionConfig { strain_n: 5, deep_n })
            .map_err(e2s)?;
        check(f.width() == 5 + deep_n, || format!("fused width {} for 5 + {deep_n}", f.width()))?;
        widths.push(f.width());
    }
    Ok(format!(
        "accuracy {:.2}% vs baseline {:.2}% (split seed {}), deterministic, run {main_time:.1?}; sweep 16 rows; fused widths {widths:?}; total {:.1?}",
        rec.accuracy * 100.0,
        rec.majority_baseline * 100.0,
        cfg.split.seed,
        start.elapsed()
    ))
}

fn leakage_guard() -> Outcome {
    let fx = fixture(8, 6, 1)?;
    let mut cfg = e2e_config();
    cfg.split.seed = balanced_seed(&fx.manifest, &cfg)?;
    let plan = plan_split(&fx.manifest, &cfg).map_err(e2s)?;
    let net = load_network("vgg-f", &WeightSource::Random(7)).map_err(e2s)?;
    let taps = [TapRequest::new("Conv 5", Phase::PostReLU), TapRequest::new("Full 7", Phase::PreReLU)];
    let deep = extract_deep(&fx.manifest, &net, &taps, &cfg.preprocess).map_err(e2s)?;
    let (strain, _) = extract_strain(&fx.manifest, &cfg.preprocess, &cfg.strain).map_err(e2s)?;
    let mut matrices: BTreeMap<String, FeatureMatrix> =
        deep.matrices.into_iter().map(|(t, m)| (t.to_string(), m)).collect();
    matrices.insert("strain".into(), strain);

    let mut checked = 0;
    let mut skipped = Vec::new();
    for (name, m) in &matrices {
        let train_only = m.select_rows(&m.rows_for_subjects(&plan.train_set()));
        let (neg, pos) = train_only.class_counts();
        let smallest = neg.min(pos);
        let k = smallest.saturating_sub(1).clamp(1, 5);
        for (method, n) in [(SelectionMethod::Su, 10), (SelectionMethod::Relieff, 5)] {
            if method == SelectionMethod::Relieff && smallest < 2 {
                skipped.push(format!("{name} RF: one instance in a class"));
                continue;
            }
            let sel = SelectorConfig {
                method,
                n: n.min(m.width()),
                k_neighbors: k,
                ..Default::default()
            };
            let full = select_features(m, &plan, &sel).map_err(e2s)?;
            let guarded = select_features(&train_only, &plan, &sel).map_err(e2s)?;
            check(full == guarded, || format!("{name} {}: subsets differ", sel.label()))?;
            checked += 1;
        }
    }
    check(checked >= 4, || format!("only {checked} pairs checked"))?;
    Ok(format!("{checked} selector/matrix pairs unchanged without test rows; skipped {skipped:?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("dimension pins", dimension_pins),
        ("convolution oracle", conv_oracle),
        ("full forward", full_forward),
        ("relief-f oracle", relief_vs_oracle),
        ("symmetric uncertainty", su_properties),
        ("auc oracle", auc_oracle),
        ("delong", delong),
        ("classifiers", classifiers),
        ("strain", strain),
        ("end to end", end_to_end),
        ("leakage guard", leakage_guard),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|s| name.contains(s.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({secs:.1}s) {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({secs:.1}s) {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
