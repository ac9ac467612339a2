//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use candle_core::{DType, Device, Tensor, Var};
use makeupbag_cli::commands::fit_plain_skin_gmm;
use makeupbag_core::classical::{ChromaBands, GmmOptions};
use makeupbag_core::data::synth::{
    synth_faces, write_synth_dataset, SynthDistribution, SynthFace, SynthFaceSpec,
};
use makeupbag_core::data::{sample_by_intensity, Intensity, OversampleWeights};
use makeupbag_core::eval::{compare_methods, roc_from_scores, EvalSample, Method};
use makeupbag_core::geometry::{build_warp, region_encoding};
use makeupbag_core::image::{alpha_composite, poisson_blend};
use makeupbag_core::{AlphaMask, ImageTensor, LandmarkSet};
use makeupbag_models::checkpoint::{save_extractor, save_generator};
use makeupbag_models::extractor::{
    aggregate, logits_to_mask, mask_loss, mask_loss_tensor, train_extractor, ExtractorConfig,
    ExtractorModel, ExtractorTrainConfig, LabeledSample, PatchLogitMap, StageConfig,
};
use makeupbag_models::gan::{
    Discriminator, DiscriminatorConfig, GanPair, GanTrainConfig, GanTrainer, Generator,
    GeneratorConfig,
};
use makeupbag_models::losses::{lsgan_d_loss, lsgan_g_loss, rec_loss};
use makeupbag_models::params::ParamStore;
use makeupbag_models::pipeline::MaskSource;
use makeupbag_models::tensor::generator_input;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn flat(t: &Tensor) -> Vec<f64> {
    t.flatten_all()
        .unwrap()
        .to_dtype(DType::F64)
        .unwrap()
        .to_vec1()
        .unwrap()
}

fn scalar(t: &Tensor) -> f64 {
    t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
}

fn random_input(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<f32> {
    (0..7 * h * w)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect()
}

fn input_tensor(data: &[f32], h: usize, w: usize, dtype: DType) -> Tensor {
    Tensor::from_vec(data.to_vec(), (1, 7, h, w), &Device::Cpu)
        .unwrap()
        .to_dtype(dtype)
        .unwrap()
}

// 1. Patch locality ----------------------------------------------------------

fn locality(model: &ExtractorModel) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (h, w) = (64, 64);
    let rows = model.ledger.grid_len(h).ok_or("input too small")?;
    let cols = model.ledger.grid_len(w).ok_or("input too small")?;
    let mut worst = 0f64;
    for _ in 0..100 {
        let base = random_input(&mut rng, h, w);
        let before = flat(
            &model
                .patch_logits(&input_tensor(&base, h, w, model.dtype()))
                .map_err(err)?,
        );
        let (r, c) = (rng.random_range(0..rows), rng.random_range(0..cols));
        let (y0, y1) = model.ledger.window(r);
        let (x0, x1) = model.ledger.window(c);
        let mut x = base.clone();
        for ch in 0..7 {
            for y in 0..h {
                for xx in 0..w {
                    if y < y0 || y > y1 || xx < x0 || xx > x1 {
                        x[(ch * h + y) * w + xx] = rng.random_range(-5.0..5.0);
                    }
                }
            }
        }
        let after = flat(
            &model
                .patch_logits(&input_tensor(&x, h, w, model.dtype()))
                .map_err(err)?,
        );
        worst = worst.max((after[r * cols + c] - before[r * cols + c]).abs());
    }
    ensure(worst <= 1e-5, format!("max logit change {worst:e} > 1e-5"))?;
    Ok(format!("max logit change {worst:e} over 100 trials"))
}

// 2. Scalar head equals aggregated patch logits --------------------------------

fn aggregation(model: &ExtractorModel) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0f64;
    for _ in 0..50 {
        let (h, w) = (rng.random_range(17..72), rng.random_range(17..72));
        let x = input_tensor(&random_input(&mut rng, h, w), h, w, model.dtype());
        let logits = model.patch_logits(&x).map_err(err)?;
        let (_, _, r, c) = logits.dims4().map_err(err)?;
        let plm = PatchLogitMap::new(r, c, model.stride(), model.receptive_field(), flat(&logits))
            .map_err(err)?;
        let m = aggregate(&plm).map_err(err)?;
        let head = flat(&model.scalar_head(&x).map_err(err)?)[0];
        worst = worst.max((m - head).abs());
    }
    ensure(worst <= 1e-5, format!("max |aggregate - head| {worst:e}"))?;
    Ok(format!("max |aggregate - head| {worst:e} over 50 inputs"))
}

// 3. Loss oracles and gradient checks ----------------------------------------

fn t1(v: &[f64], shape: (usize, usize, usize, usize)) -> Tensor {
    Tensor::from_vec(v.to_vec(), shape, &Device::Cpu).unwrap()
}

fn loss_examples() -> Result<(), String> {
    let close =
        |a: f64, b: f64, what: &str| ensure((a - b).abs() <= 1e-6, format!("{what}: {a} vs {b}"));
    close(
        mask_loss(0.0, 1).map_err(err)?,
        std::f64::consts::LN_2,
        "mask_loss(0, 1)",
    )?;
    close(mask_loss(40.0, 1).map_err(err)?, 0.0, "mask_loss(40, 1)")?;
    for m in [-3.0, -0.2, 0.0, 1.7] {
        close(
            mask_loss(m, 1).map_err(err)?,
            mask_loss(-m, 0).map_err(err)?,
            "mask_loss symmetry",
        )?;
        let oracle = -(1.0 / (1.0 + f64::exp(-m))).ln();
        close(
            mask_loss(m, 1).map_err(err)?,
            oracle,
            "mask_loss vs -ln sigmoid",
        )?;
    }
    ensure(mask_loss(0.0, 2).is_err(), "non-binary label accepted")?;

    let px = |v: f64| t1(&[v, v, v], (1, 3, 1, 1));
    let m = t1(&[0.5], (1, 1, 1, 1));
    close(
        scalar(&rec_loss(&px(0.25), &px(1.0), &px(0.0), &m).map_err(err)?),
        0.5,
        "rec_loss 1x1",
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let mut v = |n: usize| {
            (0..n)
                .map(|_| rng.random_range(0.0..1.0))
                .collect::<Vec<f64>>()
        };
        let (est, re, or, mm) = (v(12), v(12), v(12), v(4));
        let mut sum = 0.0;
        for c in 0..3 {
            for p in 0..4 {
                let i = c * 4 + p;
                sum += (mm[p] * (re[i] - est[i])).abs() + ((1.0 - mm[p]) * (or[i] - est[i])).abs();
            }
        }
        let got = rec_loss(
            &t1(&est, (1, 3, 2, 2)),
            &t1(&re, (1, 3, 2, 2)),
            &t1(&or, (1, 3, 2, 2)),
            &t1(&mm, (1, 1, 2, 2)),
        )
        .map_err(err)?;
        close(scalar(&got), sum / 12.0, "rec_loss brute force")?;
    }

    let c = |v: f64| vec![t1(&[v; 4], (1, 1, 2, 2))];
    close(
        scalar(&lsgan_d_loss(&c(1.0), &c(0.0)).map_err(err)?),
        0.0,
        "lsgan d optimum",
    )?;
    close(
        scalar(&lsgan_g_loss(&c(0.5)).map_err(err)?),
        0.25,
        "lsgan g at 0.5",
    )?;
    close(
        scalar(&lsgan_d_loss(&c(0.0), &c(1.0)).map_err(err)?),
        2.0,
        "lsgan d worst",
    )?;
    Ok(())
}

/// Compares backprop against central differences on the 3 largest-gradient
/// entries of every parameter tensor. Returns the worst relative error.
fn gradient_check(vars: &[Var], loss: &dyn Fn() -> Tensor) -> Result<f64, String> {
    let grads = loss().backward().map_err(err)?;
    let h = 1e-6;
    let mut worst = 0f64;
    for var in vars {
        let g = flat(grads.get(var.as_tensor()).ok_or("missing gradient")?);
        let mut order: Vec<usize> = (0..g.len()).collect();
        order.sort_by(|a, b| g[*b].abs().total_cmp(&g[*a].abs()));
        let base = flat(var.as_tensor());
        let shape = var.shape().clone();
        for &i in order.iter().take(3) {
            if g[i].abs() < 1e-7 {
                continue;
            }
            let eval = |delta: f64| -> Result<f64, String> {
                let mut v = base.clone();
                v[i] += delta;
                var.set(&Tensor::from_vec(v, &shape, &Device::Cpu).map_err(err)?)
                    .map_err(err)?;
                Ok(scalar(&loss()))
            };
            let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
            var.set(&Tensor::from_vec(base.clone(), &shape, &Device::Cpu).map_err(err)?)
                .map_err(err)?;
            worst = worst.max((fd - g[i]).abs() / fd.abs().max(g[i].abs()));
        }
    }
    Ok(worst)
}

/// Moves zero-initialized biases off the ReLU kink so central differences
/// see a differentiable point.
fn jitter_biases(params: &ParamStore, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, var) in params.named() {
        if name.ends_with("bias") {
            let n = var.elem_count();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-0.1..0.1)).collect();
            let t = Tensor::from_vec(v, var.shape(), &Device::Cpu)
                .and_then(|t| t.to_dtype(var.dtype()))
                .map_err(err)?;
            var.set(&t).map_err(err)?;
        }
    }
    Ok(())
}

fn tiny_extractor(dtype: DType, seed: u64) -> ExtractorModel {
    let cfg = ExtractorConfig {
        stem_width: 6,
        stages: vec![
            StageConfig::new(8, 1, 3, 2),
            StageConfig::new(8, 1, 3, 2),
            StageConfig::new(8, 1, 3, 2),
            StageConfig::new(8, 1, 1, 1),
        ],
        ..Default::default()
    }
    .with_seed(seed);
    let mut e = ExtractorModel::build_with_dtype(&cfg, dtype).unwrap();
    e.steps = 1;
    e
}

fn tiny_generator(dtype: DType) -> Generator {
    let cfg = GeneratorConfig {
        base_width: 4,
        enhancer_width: 4,
        global_blocks: 1,
        enhancer_blocks: 1,
        ..Default::default()
    };
    Generator::build_with_dtype(&cfg, dtype).unwrap()
}

fn losses_and_gradients() -> Outcome {
    loss_examples()?;

    let e = tiny_extractor(DType::F64, 3);
    jitter_biases(&e.params, 5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = Tensor::cat(
        &[
            input_tensor(&random_input(&mut rng, 33, 33), 33, 33, DType::F64),
            input_tensor(&random_input(&mut rng, 33, 33), 33, 33, DType::F64),
        ],
        0,
    )
    .unwrap();
    let labels = Tensor::new(&[1.0f64, 0.0], &Device::Cpu).unwrap();
    let ext_err = gradient_check(&e.params.vars(), &|| {
        mask_loss_tensor(&e.image_logits(&x).unwrap(), &labels).unwrap()
    })?;

    let faces: Vec<SynthFace> = (0..2)
        .map(|i| SynthFaceSpec::plain(32, 40 + i).render().unwrap())
        .collect();
    let pairs = vec![GanPair {
        target: faces[0].image.clone(),
        target_landmarks: faces[0].landmarks.clone(),
        reference: faces[1].image.clone(),
        reference_landmarks: faces[1].landmarks.clone(),
    }];
    let d = Discriminator::build_with_dtype(
        &DiscriminatorConfig {
            scales: 2,
            depth: 2,
            width: 4,
            seed: 1,
        },
        DType::F64,
    )
    .unwrap();
    let trainer = GanTrainer::new(
        tiny_generator(DType::F64),
        d,
        tiny_extractor(DType::F32, 4),
        &pairs,
        GanTrainConfig::default(),
    )
    .map_err(err)?;
    jitter_biases(&trainer.generator.params, 6)?;
    jitter_biases(&trainer.discriminator.params, 7)?;
    let g_err = gradient_check(&trainer.generator.params.vars(), &|| {
        trainer.generator_objective(&[0]).unwrap().total
    })?;
    let d_err = gradient_check(&trainer.discriminator.params.vars(), &|| {
        trainer.discriminator_objective(&[0]).unwrap()
    })?;
    let worst = ext_err.max(g_err).max(d_err);
    ensure(
        worst < 1e-3,
        format!("gradient rel. err: extractor {ext_err:e}, generator {g_err:e}, critic {d_err:e}"),
    )?;
    Ok(format!(
        "tabulated losses within 1e-6; worst gradient rel. err {worst:e}"
    ))
}

// 4. Compositing identities ------------------------------------------------------

fn compositing() -> Outcome {
    let t = SynthFaceSpec::plain(64, 1).render().map_err(err)?.image;
    let w = SynthFaceSpec::plain(64, 2).render().map_err(err)?.image;
    let zero = alpha_composite(&t, &w, &AlphaMask::zeros(64, 64)).map_err(err)?;
    let one = alpha_composite(&t, &w, &AlphaMask::filled(64, 64, 1.0)).map_err(err)?;
    ensure(
        zero.data() == t.data(),
        "M = 0 does not reproduce the target",
    )?;
    ensure(
        one.data() == w.data(),
        "M = 1 does not reproduce the warped reference",
    )?;
    Ok("M=0 -> target, M=1 -> warped reference, bit-exact".into())
}

// 5. Warp correctness ----------------------------------------------------------

fn rounded(l: &LandmarkSet) -> LandmarkSet {
    LandmarkSet::new(
        l.schema.clone(),
        l.points
            .iter()
            .map(|[x, y]| [x.round(), y.round()])
            .collect(),
    )
}

fn warp_correctness() -> Outcome {
    let n = 64;
    let src = ImageTensor::from_fn(n, n, |y, x| {
        let (fx, fy) = (x as f32 / n as f32, y as f32 / n as f32);
        [
            0.1 + 0.8 * fx,
            0.1 + 0.8 * fy,
            0.5 + 0.3 * (3.0 * fx + 2.0 * fy).sin(),
        ]
    });
    let sl = rounded(&SynthFaceSpec::plain(n, 5).render().map_err(err)?.landmarks);
    let dl = rounded(&SynthFaceSpec::plain(n, 6).render().map_err(err)?.landmarks);
    let warp = build_warp(&sl, &dl, (n, n), (n, n)).map_err(err)?;
    let out = warp.warp_image(&src).map_err(err)?;
    let mut worst = 0f32;
    for (s, d) in sl.points.iter().zip(&dl.points) {
        let a = out.get(d[1] as usize, d[0] as usize);
        let b = src.get(s[1] as usize, s[0] as usize);
        for c in 0..3 {
            worst = worst.max((a[c] - b[c]).abs());
        }
    }
    ensure(
        worst <= 2.0 / 255.0,
        format!("control-point deviation {:.3}/255", worst * 255.0),
    )?;
    let id = build_warp(&sl, &sl, (n, n), (n, n))
        .map_err(err)?
        .warp_image(&src)
        .map_err(err)?;
    let id_worst = id
        .data()
        .iter()
        .zip(src.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0f32, f32::max);
    ensure(
        id_worst <= 1.0 / 255.0,
        format!("identity warp deviation {:.3}/255", id_worst * 255.0),
    )?;
    Ok(format!(
        "control points within {:.3}/255, identity within {:.3}/255",
        worst * 255.0,
        id_worst * 255.0
    ))
}

// 6. Poisson blending ----------------------------------------------------------

/// Dense Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|i, j| a[*i][k].abs().total_cmp(&a[*j][k].abs()))
            .unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

fn poisson() -> Outcome {
    let n = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let src = ImageTensor::new(
        n,
        n,
        (0..n * n * 3).map(|_| rng.random_range(0.3..0.7)).collect(),
    )
    .map_err(err)?;
    let dst = ImageTensor::new(
        n,
        n,
        (0..n * n * 3).map(|_| rng.random_range(0.3..0.7)).collect(),
    )
    .map_err(err)?;
    let inside = |y: usize, x: usize| (1..n - 1).contains(&y) && (1..n - 1).contains(&x);
    let region = AlphaMask::from_fn(n, n, |y, x| if inside(y, x) { 1.0 } else { 0.0 });
    let out = poisson_blend(&src, &dst, &region).map_err(err)?;

    let unknowns: Vec<(usize, usize)> = (0..n)
        .flat_map(|y| (0..n).map(move |x| (y, x)))
        .filter(|(y, x)| inside(*y, *x))
        .collect();
    let index = |y: usize, x: usize| unknowns.iter().position(|p| *p == (y, x));
    let mut worst_interior = 0f64;
    for c in 0..3 {
        let s = |y: usize, x: usize| src.get(y, x)[c] as f64;
        let d = |y: usize, x: usize| dst.get(y, x)[c] as f64;
        let m = unknowns.len();
        let mut a = vec![vec![0.0; m]; m];
        let mut b = vec![0.0; m];
        for (k, &(y, x)) in unknowns.iter().enumerate() {
            a[k][k] = 4.0;
            for (ny, nx) in [(y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)] {
                b[k] += s(y, x) - s(ny, nx);
                match index(ny, nx) {
                    Some(j) => a[k][j] -= 1.0,
                    None => b[k] += d(ny, nx),
                }
            }
        }
        let sol = dense_solve(a, b);
        for (k, &(y, x)) in unknowns.iter().enumerate() {
            worst_interior =
                worst_interior.max((out.get(y, x)[c] as f64 - sol[k].clamp(0.0, 1.0)).abs());
        }
    }
    for y in 0..n {
        for x in 0..n {
            if !inside(y, x) {
                ensure(
                    out.get(y, x) == dst.get(y, x),
                    format!("boundary pixel ({y}, {x}) changed"),
                )?;
            }
        }
    }
    ensure(
        worst_interior <= 1e-6,
        format!("interior deviation {worst_interior:e}"),
    )?;
    Ok(format!(
        "boundary exact, interior within {worst_interior:e} of dense solve"
    ))
}

// 7. ROC / AUC -------------------------------------------------------------------

fn roc_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0f64;
    for _ in 0..20 {
        let n = rng.random_range(5..200);
        let mut s: Vec<(f32, bool)> = (0..n)
            .map(|i| (i as f32 / n as f32, rng.random_bool(0.4)))
            .collect();
        if s.iter().all(|p| p.1) || s.iter().all(|p| !p.1) {
            continue;
        }
        s.sort_by(|a, b| a.0.total_cmp(&b.0).reverse());
        let mut shuffled: Vec<(f32, bool)> = Vec::new();
        for p in s.iter().rev() {
            let at = rng.random_range(0..=shuffled.len());
            shuffled.insert(at, *p);
        }
        let (pos, neg): (Vec<&(f32, bool)>, Vec<&(f32, bool)>) = shuffled.iter().partition(|p| p.1);
        let wins = pos
            .iter()
            .flat_map(|p| neg.iter().map(move |q| (p.0 > q.0) as u32))
            .sum::<u32>();
        let oracle = wins as f64 / (pos.len() * neg.len()) as f64;
        let auc = roc_from_scores(&mut shuffled).map_err(err)?.auc;
        worst = worst.max((auc - oracle).abs());
    }
    ensure(worst <= 1e-9, format!("trapezoid vs pairwise {worst:e}"))?;
    let mut perfect: Vec<(f32, bool)> = (0..100).map(|i| (i as f32, i >= 50)).collect();
    let p = roc_from_scores(&mut perfect).map_err(err)?.auc;
    ensure(p == 1.0, format!("perfect predictor AUC {p}"))?;
    let mut noise: Vec<(f32, bool)> = (0..20_000)
        .map(|_| (rng.random::<f32>(), rng.random_bool(0.5)))
        .collect();
    let z = roc_from_scores(&mut noise).map_err(err)?.auc;
    ensure((z - 0.5).abs() <= 0.05, format!("noise AUC {z}"))?;
    Ok(format!(
        "pairwise match {worst:e}, perfect 1.0, noise {z:.4}"
    ))
}

// 8. Scaled extraction experiment -------------------------------------------------

const C8_FACES: usize = 400;
const C8_TRAIN: usize = 320;
const C8_SEED: u64 = 2024;
const C8_MIN_AUC: f64 = 0.85;

fn c8_train_config() -> ExtractorTrainConfig {
    ExtractorTrainConfig {
        epochs: 8,
        steps_per_epoch: Some(40),
        batch_size: 16,
        lr: 1e-3,
        seed: 7,
        ..Default::default()
    }
}

struct Extraction {
    model: ExtractorModel,
    faces: Vec<SynthFace>,
}

fn labeled(faces: &[SynthFace]) -> Vec<LabeledSample> {
    faces
        .iter()
        .map(|f| LabeledSample {
            image: f.image.clone(),
            regions: region_encoding(&f.landmarks, f.image.height(), f.image.width()).unwrap(),
            label: f.label,
            intensity: f.intensity,
        })
        .collect()
}

/// Best mask any 17×17 / stride-8 patch scorer can produce: each cell's
/// logit is the makeup coverage of its own window, restricted to the face.
fn patch_oracle_mask(
    gt: &AlphaMask,
    lms: &LandmarkSet,
    rf: usize,
    stride: usize,
) -> Result<AlphaMask, String> {
    let (h, w) = gt.dims();
    let (rows, cols) = ((h - rf) / stride + 1, (w - rf) / stride + 1);
    let mut logits = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut cover = 0.0;
            for y in r * stride..r * stride + rf {
                for x in c * stride..c * stride + rf {
                    cover += (gt.get(y, x) >= 0.5) as u8 as f64;
                }
            }
            let p = (cover / (rf * rf) as f64).clamp(1e-4, 1.0 - 1e-4);
            logits.push((p / (1.0 - p)).ln());
        }
    }
    let plm = PatchLogitMap::new(rows, cols, stride, rf, logits).map_err(err)?;
    let m = logits_to_mask(&plm, h, w).map_err(err)?;
    let face = region_encoding(lms, h, w).map_err(err)?.face_area();
    Ok(AlphaMask::from_fn(h, w, |y, x| {
        m.get(y, x) * face.get(y, x)
    }))
}

fn extraction_experiment(state: &mut Option<Extraction>) -> Outcome {
    let dist = SynthDistribution {
        size: 64,
        ..Default::default()
    };
    let faces = synth_faces(&dist, C8_FACES, C8_SEED).map_err(err)?;
    let (train, test) = faces.split_at(C8_TRAIN);
    let mut model =
        ExtractorModel::build(&ExtractorConfig::default().with_seed(C8_SEED)).map_err(err)?;
    let history = train_extractor(
        &mut model,
        &labeled(train),
        &c8_train_config(),
        &mut |_, s| {
            eprintln!(
                "  extractor epoch {} loss {:.4} acc {:.3}",
                s.epoch, s.loss, s.accuracy
            );
            Ok(())
        },
    )
    .map_err(err)?;

    let plain: Vec<(ImageTensor, LandmarkSet)> = train
        .iter()
        .filter(|f| f.label == 0)
        .map(|f| (f.image.clone(), f.landmarks.clone()))
        .collect();
    let gmm_opts = GmmOptions::default();
    let gmm = fit_plain_skin_gmm(&plain, &gmm_opts).map_err(err)?;
    let samples: Vec<EvalSample> = test
        .iter()
        .filter(|f| f.label == 1)
        .map(|f| EvalSample {
            image: f.image.clone(),
            gt_mask: f.gt_mask.clone(),
            landmarks: Some(f.landmarks.clone()),
        })
        .collect();
    let report = {
        let sources = [
            MaskSource::Extractor(&model),
            MaskSource::Gmm {
                model: Some(&gmm),
                options: gmm_opts.clone(),
            },
            MaskSource::Chroma(ChromaBands::default()),
        ];
        let mut methods: Vec<Method<'_>> = sources
            .iter()
            .map(|src| {
                Method::new(src.name(), move |s: &EvalSample| {
                    src.mask(&s.image, s.landmarks.as_ref().unwrap())
                        .map_err(|e| makeupbag_core::Error::InvalidArgument(e.to_string()))
                })
            })
            .collect();
        let (rf, stride) = (model.receptive_field(), model.stride());
        methods.push(Method::new("patch-oracle", move |s: &EvalSample| {
            patch_oracle_mask(&s.gt_mask, s.landmarks.as_ref().unwrap(), rf, stride)
                .map_err(makeupbag_core::Error::InvalidArgument)
        }));
        compare_methods(&samples, &methods).map_err(err)?
    };
    let auc = |name: &str| report.auc(name).unwrap_or(f64::NAN);
    let (b, g, c, o) = (
        auc("bagnet"),
        auc("gmm"),
        auc("chroma"),
        auc("patch-oracle"),
    );
    let detail = format!(
        "AUC bagnet {b:.4}, gmm {g:.4}, chroma {c:.4} (patch-oracle ceiling {o:.4}) on {} held-out makeup faces; final train loss {:.4}",
        samples.len(),
        history.last().map_or(f64::NAN, |h| h.loss)
    );
    *state = Some(Extraction { model, faces });
    ensure(b >= C8_MIN_AUC && b > g && b > c, detail.clone())?;
    Ok(detail)
}

// 9. GAN smoke test ----------------------------------------------------------------

const C9_STEPS: usize = 200;
const C9_MIN_REDUCTION: f64 = 0.30;

fn gan_pairs(faces: &[SynthFace], n: usize) -> Vec<GanPair> {
    let plain: Vec<&SynthFace> = faces.iter().filter(|f| f.label == 0).collect();
    let made: Vec<&SynthFace> = faces.iter().filter(|f| f.label == 1).collect();
    (0..n)
        .map(|i| GanPair {
            target: plain[i % plain.len()].image.clone(),
            target_landmarks: plain[i % plain.len()].landmarks.clone(),
            reference: made[i % made.len()].image.clone(),
            reference_landmarks: made[i % made.len()].landmarks.clone(),
        })
        .collect()
}

fn gan_smoke(ex: &Extraction, out: &mut Option<Generator>) -> Outcome {
    let pairs = gan_pairs(&ex.faces, 32);
    let cfg = GanTrainConfig {
        epochs: 50,
        max_steps: Some(C9_STEPS),
        lambda_rec: 40.0,
        lambda_gan: 1.0,
        seed: 9,
        ..Default::default()
    };
    let g = Generator::build(&GeneratorConfig::default()).map_err(err)?;
    let d = Discriminator::build(&DiscriminatorConfig::default()).map_err(err)?;
    let mut e = ExtractorModel::build(&ex.model.config).map_err(err)?;
    e.params.copy_from(&ex.model.params).map_err(err)?;
    e.steps = ex.model.steps;
    let mut trainer = GanTrainer::new(g, d, e, &pairs, cfg).map_err(err)?;
    let idx: Vec<usize> = (0..pairs.len()).collect();
    let mean_rec = |t: &GanTrainer| -> Result<f64, String> {
        let v: Vec<f64> = idx
            .chunks(8)
            .map(|c| t.rec_loss_on(c))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    };
    let before = mean_rec(&trainer)?;
    trainer.train(&mut ()).map_err(err)?;
    let after = mean_rec(&trainer)?;
    ensure(
        trainer.steps() as usize == C9_STEPS,
        format!("ran {} steps", trainer.steps()),
    )?;
    ensure(after.is_finite(), "non-finite reconstruction loss")?;
    let reduction = 1.0 - after / before;

    let p = &pairs[0];
    let s1 = makeupbag_models::pipeline::stage_one(
        None,
        Some(&AlphaMask::filled(64, 64, 0.5)),
        &p.target,
        &p.target_landmarks,
        &p.reference,
        &p.reference_landmarks,
        Default::default(),
    )
    .map_err(err)?;
    let x = generator_input(
        &p.target,
        &s1.mask,
        &s1.warped,
        &s1.composite,
        trainer.generator.dtype(),
    )
    .map_err(err)?;
    let (y, trace) = trainer.generator.forward_traced(&x).map_err(err)?;
    let (_, _, h, w) = y.dims4().map_err(err)?;
    ensure((h, w) == (64, 64), format!("output {h}x{w}"))?;
    ensure(
        flat(&y).iter().all(|v| v.is_finite()),
        "non-finite generator output",
    )?;
    ensure(
        trace.input.0 == 4 * trace.global.0 && trace.input.1 == 4 * trace.global.1,
        format!("resolution ratio {:?} vs {:?}", trace.input, trace.global),
    )?;
    let detail = format!(
        "rec_loss {before:.4} -> {after:.4} ({:.1}% lower), ratio 4, dims 64x64",
        100.0 * reduction
    );
    *out = Some(trainer.into_models().0);
    ensure(reduction >= C9_MIN_REDUCTION, detail.clone())?;
    Ok(detail)
}

// 10. CLI separability --------------------------------------------------------------

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_makeupbag"))
        .args(args)
        .output()
        .map_err(err)?;
    ensure(
        out.status.success(),
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)),
    )
}

fn separability(ex: &Extraction, generator: &Generator, dir: &Path) -> Outcome {
    let data = dir.join("data");
    let faces: Vec<SynthFace> = ex.faces.iter().take(2).cloned().collect();
    let manifest = write_synth_dataset(&faces, &data).map_err(err)?;
    let file =
        |i: usize, f: fn(&makeupbag_core::data::ManifestEntry) -> Option<PathBuf>| -> String {
            manifest
                .resolve(&f(&manifest.entries()[i]).unwrap())
                .to_string_lossy()
                .into_owned()
        };
    let (t, tl) = (
        file(0, |e| Some(e.image.clone())),
        file(0, |e| e.landmarks.clone()),
    );
    let (r, rl) = (
        file(1, |e| Some(e.image.clone())),
        file(1, |e| e.landmarks.clone()),
    );
    let ext = dir.join("extractor.safetensors");
    let gen = dir.join("generator.safetensors");
    save_extractor(&ex.model, &ext).map_err(err)?;
    save_generator(generator, &gen).map_err(err)?;
    let s = |p: &Path| p.to_string_lossy().into_owned();
    let (full, mask, staged) = (
        dir.join("full.png"),
        dir.join("mask.png"),
        dir.join("staged.png"),
    );
    run_cli(&[
        "transfer",
        "--target",
        &t,
        "--target-landmarks",
        &tl,
        "--reference",
        &r,
        "--reference-landmarks",
        &rl,
        "--extractor",
        &s(&ext),
        "--generator",
        &s(&gen),
        "--out",
        &s(&full),
    ])?;
    run_cli(&[
        "extract",
        "--image",
        &r,
        "--landmarks",
        &rl,
        "--onto",
        &t,
        "--onto-landmarks",
        &tl,
        "--model",
        &s(&ext),
        "--out-mask",
        &s(&mask),
    ])?;
    run_cli(&[
        "apply",
        "--target",
        &t,
        "--target-landmarks",
        &tl,
        "--reference",
        &r,
        "--reference-landmarks",
        &rl,
        "--mask",
        &s(&mask),
        "--generator",
        &s(&gen),
        "--out",
        &s(&staged),
    ])?;
    let a = std::fs::read(&full).map_err(err)?;
    let b = std::fs::read(&staged).map_err(err)?;
    ensure(a == b, "transfer output differs from extract + apply")?;
    Ok(format!(
        "transfer == extract + apply ({} bytes, bit-identical)",
        a.len()
    ))
}

// 11. Sampling weights and flips ----------------------------------------------------

fn sampling() -> Outcome {
    let tags = [Intensity::Heavy, Intensity::None];
    let weights = OversampleWeights {
        none: 1.0,
        light: 1.0,
        mid: 1.0,
        heavy: 3.0,
    };
    let n = 10_000;
    let draws =
        sample_by_intensity(&tags, n, &mut ChaCha8Rng::seed_from_u64(18), &weights).map_err(err)?;
    let heavy = draws.iter().filter(|i| **i == 0).count() as f64;
    let sigma = (n as f64 * 0.75 * 0.25).sqrt();
    let dev = (heavy - 0.75 * n as f64).abs();
    ensure(
        dev <= 3.0 * sigma,
        format!("heavy draws {heavy} vs 7500 (3 sigma = {:.1})", 3.0 * sigma),
    )?;

    let face = SynthFaceSpec::plain(48, 19).render().map_err(err)?;
    ensure(
        face.image.flip_horizontal().flip_horizontal() == face.image,
        "image flip is not an involution",
    )?;
    ensure(
        face.gt_mask.flip_horizontal().flip_horizontal() == face.gt_mask,
        "mask flip is not an involution",
    )?;
    let twice = face
        .landmarks
        .flip_horizontal(48)
        .and_then(|l| l.flip_horizontal(48))
        .map_err(err)?;
    let lm_dev = twice
        .points
        .iter()
        .zip(&face.landmarks.points)
        .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
        .fold(0.0, f64::max);
    ensure(
        lm_dev <= 1e-9,
        format!("landmark double flip off by {lm_dev:e}"),
    )?;
    Ok(format!(
        "3:1 draws {heavy}/{n} (|dev| {dev:.0} <= {:.0}), flips are involutions",
        3.0 * sigma
    ))
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut run = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let r = f();
        results.push((n, name, r, t.elapsed().as_secs_f64()));
    };

    let random = ExtractorModel::build(&ExtractorConfig::default().with_seed(21)).unwrap();
    run(1, "patch locality", &mut || locality(&random));
    run(2, "scalar head = aggregate", &mut || aggregation(&random));
    run(3, "loss oracles and gradients", &mut losses_and_gradients);
    run(4, "compositing identities", &mut compositing);
    run(5, "warp correctness", &mut warp_correctness);
    run(6, "poisson blend", &mut poisson);
    run(7, "roc / auc", &mut roc_checks);
    let mut extraction = None;
    run(8, "scaled extraction experiment", &mut || {
        extraction_experiment(&mut extraction)
    });
    let mut generator = None;
    match &extraction {
        Some(ex) => {
            run(9, "gan smoke test", &mut || gan_smoke(ex, &mut generator));
            let g = generator
                .take()
                .unwrap_or_else(|| Generator::build(&GeneratorConfig::default()).unwrap());
            run(10, "pipeline separability", &mut || {
                separability(ex, &g, dir.path())
            });
        }
        None => {
            run(9, "gan smoke test", &mut || {
                Err("no trained extractor".into())
            });
            run(10, "pipeline separability", &mut || {
                Err("no trained extractor".into())
            });
        }
    }
    run(11, "sampling and flips", &mut sampling);

    let mut failed = 0;
    for (n, name, r, secs) in &results {
        match r {
            Ok(d) => println!("PASS {n:>2} {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {d} [{secs:.1}s]")
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
