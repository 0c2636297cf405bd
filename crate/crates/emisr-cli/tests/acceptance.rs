//! Acceptance suite for the bundled synthetic scenario.
//!
//! Every test checks one shipping criterion and prints a single
//! `criterion <id> (<label>): PASS|FAIL` line (run with `--nocapture`
//! to see the lines of passing tests). Criteria 7 and 8 share one
//! fixture that drives the full experiment pipeline twice through the
//! released binary.
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use emisr::grid::{DomainTag, EmissionMap};
use emisr::metrics::{nmse_db, ssim, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
use emisr::net::{Checkpoint, NetworkConfig, Provenance, SrNetwork, Tensor};
use emisr::resample::{bicubic_downsample, bicubic_upsample, cubic_weight};
use emisr::transform::{QuantileTransform, TargetDist};

fn verdict(id: &str, label: &str, ok: bool, detail: &str) {
    let state = if ok { "PASS" } else { "FAIL" };
    println!("criterion {id} ({label}): {state} — {detail}");
    assert!(ok, "criterion {id} ({label}) FAILED — {detail}");
}

// ── 1. zero-predictor identity ───────────────────────────────────────────────

#[test]
fn c1_zero_predictor_is_zero_db() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0f64;
    for _ in 0..100 {
        let n = rng.gen_range(16..256);
        let reference: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..8.0)).collect();
        let zeros = vec![0.0; n];
        let db = nmse_db(&reference, &zeros).unwrap();
        worst = worst.max(db.abs());
    }
    verdict(
        "1",
        "zero-predictor identity",
        worst <= 1e-9,
        &format!("max |nmse_db(ref, 0)| = {worst:.3e} over 100 references (bound 1e-9)"),
    );
}

// ── 2. gradient check against central finite differences ────────────────────

/// Mean squared error of the forward output against a fixed target.
fn mse_loss(net: &SrNetwork<f64>, input: &Tensor<f64>, target: &Tensor<f64>) -> f64 {
    let out = net.forward(input).unwrap();
    let m = out.numel() as f64;
    out.data()
        .iter()
        .zip(target.data())
        .map(|(o, t)| (o - t) * (o - t))
        .sum::<f64>()
        / m
}

fn rand_tensor(shape: [usize; 4], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_vec(
        shape,
        (0..shape.iter().product::<usize>())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )
    .unwrap()
}

#[test]
fn c2_gradients_match_finite_differences() {
    // Central differences only estimate the analytic gradient where the
    // loss is smooth within ±h, and a ±1e-3 parameter step can push a
    // ReLU pre-activation across zero. These seeds were screened so no
    // perturbation crosses a kink; the floor in the relative error keeps
    // near-zero gradients from dividing FD noise by itself.
    let mut worst = 0f64;
    for seed in [111u64, 120, 125, 129, 134] {
        let config = NetworkConfig::new(4, 1, 2).unwrap();
        let mut net: SrNetwork<f64> = SrNetwork::init(config, seed).unwrap();
        let input = rand_tensor([2, 1, 4, 4], seed + 1000);
        let target = rand_tensor([2, 1, 8, 8], seed + 2000);

        let (out, trace) = net.forward_traced(&input).unwrap();
        let m = out.numel() as f64;
        let grad_out = Tensor::from_vec(
            out.shape(),
            out.data()
                .iter()
                .zip(target.data())
                .map(|(o, t)| 2.0 * (o - t) / m)
                .collect(),
        )
        .unwrap();
        let (grads, _) = net.backward(&trace, &grad_out).unwrap();

        let h = 1e-3;
        for p in 0..net.params.len() {
            for i in 0..net.params[p].numel() {
                let orig = net.params[p].data()[i];
                net.params[p].data_mut()[i] = orig + h;
                let up = mse_loss(&net, &input, &target);
                net.params[p].data_mut()[i] = orig - h;
                let down = mse_loss(&net, &input, &target);
                net.params[p].data_mut()[i] = orig;
                let fd = (up - down) / (2.0 * h);
                let bp = grads[p].data()[i];
                let rel = (fd - bp).abs() / fd.abs().max(bp.abs()).max(1e-4);
                worst = worst.max(rel);
            }
        }
    }
    verdict(
        "2",
        "gradient correctness",
        worst < 1e-5,
        &format!("max relative error vs central differences = {worst:.3e} (bound 1e-5)"),
    );
}

// ── 3. forward pass against a naive per-layer loop oracle ────────────────────

/// Channel-plane image: `planes[c]` is an h×w row-major buffer.
type Planes = Vec<Vec<f64>>;

/// Direct-loop same-padded cross-correlation, one output channel at a time.
fn oracle_conv(inp: &Planes, h: usize, w: usize, weight: &Tensor<f64>, bias: &[f64]) -> Planes {
    let [c_out, c_in, k, _] = weight.shape();
    assert_eq!(c_in, inp.len());
    let half = k as i64 / 2;
    let mut out = vec![vec![0f64; h * w]; c_out];
    for (o, plane) in out.iter_mut().enumerate() {
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut acc = bias[o];
                for ci in 0..c_in {
                    for ky in 0..k as i64 {
                        for kx in 0..k as i64 {
                            let sy = y + ky - half;
                            let sx = x + kx - half;
                            if sy < 0 || sy >= h as i64 || sx < 0 || sx >= w as i64 {
                                continue; // zero padding
                            }
                            let wv = weight.data()
                                [((o * c_in + ci) * k + ky as usize) * k + kx as usize];
                            acc += wv * inp[ci][(sy * w as i64 + sx) as usize];
                        }
                    }
                }
                plane[(y * w as i64 + x) as usize] = acc;
            }
        }
    }
    out
}

/// The whole network, written as independent direct loops over plain
/// buffers: head conv → residual attention blocks → long skip → up conv
/// → pixel shuffle → tail conv.
fn oracle_forward(net: &SrNetwork<f64>, input: &[f64], h: usize, w: usize) -> Vec<f64> {
    let c = net.config.channels;
    let blocks = net.config.blocks;
    let bias = |t: &Tensor<f64>| t.data().to_vec();

    let head = oracle_conv(&vec![input.to_vec()], h, w, &net.params[0], &bias(&net.params[1]));
    let mut x = head.clone();
    for b in 0..blocks {
        let base = 2 + 8 * b;
        let c1: Planes = oracle_conv(&x, h, w, &net.params[base], &bias(&net.params[base + 1]))
            .into_iter()
            .map(|p| p.into_iter().map(|v| v.max(0.0)).collect())
            .collect();
        let c2 = oracle_conv(&c1, h, w, &net.params[base + 2], &bias(&net.params[base + 3]));
        let pooled: Vec<f64> = c2.iter().map(|p| p.iter().sum::<f64>() / p.len() as f64).collect();
        let hd = net.params[base + 4].shape()[0];
        let mut fc1 = vec![0f64; hd];
        for (i, f) in fc1.iter_mut().enumerate() {
            let mut acc = net.params[base + 5].data()[i];
            for (j, p) in pooled.iter().enumerate() {
                acc += net.params[base + 4].data()[i * c + j] * p;
            }
            *f = acc.max(0.0);
        }
        let mut gate = vec![0f64; c];
        for (i, g) in gate.iter_mut().enumerate() {
            let mut acc = net.params[base + 7].data()[i];
            for (j, f) in fc1.iter().enumerate() {
                acc += net.params[base + 6].data()[i * hd + j] * f;
            }
            *g = 1.0 / (1.0 + (-acc).exp());
        }
        for ch in 0..c {
            for i in 0..h * w {
                x[ch][i] += gate[ch] * c2[ch][i];
            }
        }
    }
    for ch in 0..c {
        for i in 0..h * w {
            x[ch][i] += head[ch][i];
        }
    }

    let up_base = 2 + 8 * blocks;
    let up = oracle_conv(&x, h, w, &net.params[up_base], &bias(&net.params[up_base + 1]));
    // pixel shuffle: channel c·4+(2dy+dx) at (y,x) → channel c at (2y+dy, 2x+dx)
    let (h2, w2) = (2 * h, 2 * w);
    let mut shuffled = vec![vec![0f64; h2 * w2]; c];
    for ch in 0..c {
        for dy in 0..2 {
            for dx in 0..2 {
                let src = &up[ch * 4 + 2 * dy + dx];
                for y in 0..h {
                    for x2 in 0..w {
                        shuffled[ch][(2 * y + dy) * w2 + 2 * x2 + dx] = src[y * w + x2];
                    }
                }
            }
        }
    }
    let out = oracle_conv(
        &shuffled,
        h2,
        w2,
        &net.params[up_base + 2],
        &bias(&net.params[up_base + 3]),
    );
    out.into_iter().next().unwrap()
}

#[test]
fn c3_forward_matches_naive_oracle() {
    let mut worst = 0f64;
    for trial in 0..10u64 {
        let config = NetworkConfig::new(8, 2, 4).unwrap();
        let net: SrNetwork<f64> = SrNetwork::init(config, 500 + trial).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(600 + trial);
        let (h, w) = (8, 8);
        let input: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..1.5)).collect();
        let tensor = Tensor::from_vec([1, 1, h, w], input.clone()).unwrap();
        let fast = net.forward(&tensor).unwrap();
        let slow = oracle_forward(&net, &input, h, w);
        for (a, b) in fast.data().iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(
        "3",
        "forward equals naive oracle",
        worst < 1e-5,
        &format!("max |fast − naive| = {worst:.3e} over 10 random nets/inputs (bound 1e-5)"),
    );
}

// ── 4. quantile transform round trip and monotonicity ────────────────────────

#[test]
fn c4_quantile_round_trip_and_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    // Zero-inflated lognormal pool, the shape the pipeline actually sees.
    let pool: Vec<f32> = (0..20_000)
        .map(|_| {
            if rng.gen_bool(0.25) {
                0.0
            } else {
                (rng.gen_range(-1.5f64..1.5).exp() * rng.gen_range(0.2..2.0)) as f32
            }
        })
        .collect();
    let lo = pool.iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let hi = pool.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let range = hi - lo;

    let mut worst = 0f64;
    let mut monotone = true;
    for target in [TargetDist::Uniform01, TargetDist::StandardNormal] {
        let t = QuantileTransform::fit(&pool, 1000, target, DomainTag::Simulated, 7, 100_000)
            .unwrap();
        let z = t.apply_slice(&pool).unwrap();
        let back = t.invert_slice(&z).unwrap();
        for (x, b) in pool.iter().zip(&back) {
            worst = worst.max((*x as f64 - *b as f64).abs());
        }
        // Monotone on 10³ sorted inputs spanning the fitted range.
        let sorted: Vec<f32> = (0..1000)
            .map(|i| (lo + range * i as f64 / 999.0) as f32)
            .collect();
        let zs = t.apply_slice(&sorted).unwrap();
        monotone &= zs.windows(2).all(|w| w[1] >= w[0]);
    }
    verdict(
        "4",
        "quantile round trip",
        worst < 1e-3 * range && monotone,
        &format!(
            "max |invert(apply(x)) − x| = {worst:.3e} (bound {:.3e}); monotone = {monotone}",
            1e-3 * range
        ),
    );
}

// ── 5. bicubic kernel and resampling oracles ─────────────────────────────────

/// Direct product-weight resize oracle (no separable passes).
fn oracle_resize(values: &[f32], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f32> {
    let mut out = vec![0f32; out_h * out_w];
    for oy in 0..out_h {
        let sy = (oy as f64 + 0.5) * (h as f64 / out_h as f64) - 0.5;
        let (by, ty) = (sy.floor(), sy - sy.floor());
        for ox in 0..out_w {
            let sx = (ox as f64 + 0.5) * (w as f64 / out_w as f64) - 0.5;
            let (bx, tx) = (sx.floor(), sx - sx.floor());
            let mut acc = 0f64;
            for ky in 0..4i64 {
                let y = (by as i64 - 1 + ky).clamp(0, h as i64 - 1) as usize;
                let wy = cubic_weight(ty + 1.0 - ky as f64, -0.5);
                for kx in 0..4i64 {
                    let x = (bx as i64 - 1 + kx).clamp(0, w as i64 - 1) as usize;
                    let wx = cubic_weight(tx + 1.0 - kx as f64, -0.5);
                    acc += wy * wx * values[y * w + x] as f64;
                }
            }
            out[oy * out_w + ox] = acc.max(0.0) as f32;
        }
    }
    out
}

#[test]
fn c5_bicubic_constant_unity_and_oracle() {
    // Partition of unity on a 10³-point offset grid.
    let mut unity_err = 0f64;
    for i in 0..1000 {
        let t = i as f64 / 1000.0;
        let sum: f64 = (0..4).map(|k| cubic_weight(t + 1.0 - k as f64, -0.5)).sum();
        unity_err = unity_err.max((sum - 1.0).abs());
    }

    // Constant preservation through both directions.
    let constant = vec![3.25f32; 24 * 24];
    let up = bicubic_upsample(&constant, 24, 24, 2).unwrap();
    let down = bicubic_downsample(&constant, 24, 24, 2).unwrap();
    let const_err = up
        .iter()
        .chain(&down)
        .map(|v| (*v as f64 - 3.25).abs())
        .fold(0f64, f64::max);

    // Downsample vs the direct product-weight oracle.
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    let mut oracle_err = 0f64;
    for _ in 0..5 {
        let field: Vec<f32> = (0..32 * 32).map(|_| rng.gen_range(0.0..4.0)).collect();
        let fast = bicubic_downsample(&field, 32, 32, 2).unwrap();
        let slow = oracle_resize(&field, 32, 32, 16, 16);
        for (a, b) in fast.iter().zip(&slow) {
            oracle_err = oracle_err.max((*a as f64 - *b as f64).abs());
        }
    }

    verdict(
        "5",
        "bicubic kernel and resampling",
        unity_err <= 1e-12 && const_err <= 1e-6 && oracle_err <= 1e-6,
        &format!(
            "partition-of-unity err {unity_err:.3e} (1e-12); constant err {const_err:.3e} (1e-6); \
             oracle err {oracle_err:.3e} (1e-6)"
        ),
    );
}

// ── 6. SSIM identity and windowed oracle ─────────────────────────────────────

/// Direct 2-D windowed SSIM oracle: explicit Gaussian weights at every
/// valid window position, no separable filtering.
fn oracle_ssim(a: &[f64], b: &[f64], h: usize, w: usize, data_range: f64) -> f64 {
    let mut win1 = [0f64; SSIM_WINDOW];
    let mut sum = 0.0;
    for (i, v) in win1.iter_mut().enumerate() {
        let d = i as f64 - (SSIM_WINDOW / 2) as f64;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut win1 {
        *v /= sum;
    }
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let mut acc = 0f64;
    let mut count = 0usize;
    for y0 in 0..=(h - SSIM_WINDOW) {
        for x0 in 0..=(w - SSIM_WINDOW) {
            let (mut mx, mut my, mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..SSIM_WINDOW {
                for dx in 0..SSIM_WINDOW {
                    let wgt = win1[dy] * win1[dx];
                    let xa = a[(y0 + dy) * w + x0 + dx];
                    let xb = b[(y0 + dy) * w + x0 + dx];
                    mx += wgt * xa;
                    my += wgt * xb;
                    mxx += wgt * xa * xa;
                    myy += wgt * xb * xb;
                    mxy += wgt * xa * xb;
                }
            }
            let (vx, vy, cov) = (mxx - mx * mx, myy - my * my, mxy - mx * my);
            acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    acc / count as f64
}

#[test]
fn c6_ssim_identity_and_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    let (h, w) = (20, 20);
    let mut identity_err = 0f64;
    let mut oracle_err = 0f64;
    for _ in 0..5 {
        let a: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.0..3.0)).collect();
        let b: Vec<f64> = a.iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect();
        identity_err = identity_err.max((ssim(&a, &a, h, w, 3.0).unwrap() - 1.0).abs());
        let fast = ssim(&a, &b, h, w, 3.0).unwrap();
        let slow = oracle_ssim(&a, &b, h, w, 3.0);
        oracle_err = oracle_err.max((fast - slow).abs());
    }
    verdict(
        "6",
        "ssim identity and oracle",
        identity_err <= 1e-9 && oracle_err <= 1e-6,
        &format!("ssim(x,x)−1 err {identity_err:.3e} (1e-9); oracle err {oracle_err:.3e} (1e-6)"),
    );
}

// ── 7+8. the end-to-end trend suite, run twice for determinism ───────────────

struct Suite {
    run_a: PathBuf,
    run_b: PathBuf,
    elapsed_a: Duration,
    _keep: tempfile::TempDir,
}

fn scenario_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/default.ini")
}

fn run_cli(cwd: &Path, args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_emisr"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn emisr");
    assert!(
        out.status.success(),
        "emisr {:?} failed in {}: {}\n{}",
        args,
        cwd.display(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_pipeline(cwd: &Path) {
    let config = scenario_path();
    let config = config.to_str().unwrap();
    for cmd in [
        "synth",
        "patchify",
        "perfect-knowledge",
        "zero-knowledge",
        "transform-sweep",
        "injection-sweep",
        "report",
    ] {
        run_cli(cwd, &[cmd, "--config", config]);
    }
}

fn suite() -> &'static Suite {
    static SUITE: OnceLock<Suite> = OnceLock::new();
    SUITE.get_or_init(|| {
        let keep = tempfile::tempdir().expect("tempdir");
        let run_a = keep.path().join("a");
        let run_b = keep.path().join("b");
        fs::create_dir_all(&run_a).unwrap();
        fs::create_dir_all(&run_b).unwrap();
        let started = Instant::now();
        run_pipeline(&run_a);
        let elapsed_a = started.elapsed();
        run_pipeline(&run_b);
        Suite {
            run_a,
            run_b,
            elapsed_a,
            _keep: keep,
        }
    })
}

/// Data rows (header skipped) of a CSV under the fixture's out dir.
fn csv_rows(run: &Path, name: &str) -> Vec<Vec<String>> {
    let path = run.join("runs/out").join(name);
    let text = fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn field_f64(row: &[String], idx: usize) -> f64 {
    row[idx].parse().unwrap_or_else(|_| panic!("bad numeric field {idx} in {row:?}"))
}

/// Mean-NMSE rows of the transform sweep, keyed by checkpoint name.
fn sweep_means(run: &Path, checkpoint: &str) -> Vec<(f64, f64)> {
    csv_rows(run, "transform_sweep.csv")
        .iter()
        .filter(|r| r[0] == checkpoint && r[2] == "mean" && r[3] == "ok")
        .map(|r| (field_f64(r, 1), field_f64(r, 5)))
        .collect()
}

#[test]
fn c7_trend_suite_runs_within_budget() {
    let s = suite();
    let secs = s.elapsed_a.as_secs_f64();
    verdict(
        "7",
        "trend suite wall clock",
        secs <= 900.0,
        &format!("full pipeline took {secs:.0} s (budget 900 s)"),
    );
}

#[test]
fn c7a_perfect_knowledge_beats_bicubic() {
    let rows = csv_rows(&suite().run_a, "perfect_knowledge.csv");
    assert_eq!(rows.len(), 4, "expected 4 perfect-knowledge rows");
    let mut detail = String::new();
    let mut ok = true;
    for row in &rows {
        let (name, nmse, baseline) = (&row[0], field_f64(row, 4), field_f64(row, 6));
        ok &= nmse <= baseline - 3.0;
        detail.push_str(&format!("{name} {nmse:.2} vs bicubic {baseline:.2} dB; "));
    }
    verdict("7a", "trained beats bicubic by ≥3 dB", ok, detail.trim_end_matches("; "));
}

#[test]
fn c7b_zero_knowledge_collapses() {
    let rows = csv_rows(&suite().run_a, "zero_knowledge.csv");
    let nmse = field_f64(&rows[0], 4);
    verdict(
        "7b",
        "zero-knowledge near-collapse",
        nmse >= -3.0,
        &format!("source model + source transform on observed data: {nmse:.2} dB (≥ −3 dB)"),
    );
}

#[test]
fn c7c_transform_adaptation_recovers() {
    let run = &suite().run_a;
    let zk = field_f64(&csv_rows(run, "zero_knowledge.csv")[0], 4);
    let best = sweep_means(run, "fine")
        .into_iter()
        .map(|(_, nmse)| nmse)
        .fold(f64::INFINITY, f64::min);
    verdict(
        "7c",
        "transform adaptation ≥3 dB over zero-knowledge",
        best <= zk - 3.0,
        &format!("best refit {best:.2} dB vs zero-knowledge {zk:.2} dB"),
    );
}

#[test]
fn c7d_injection_improves_and_saturates() {
    let rows = csv_rows(&suite().run_a, "injection_sweep.csv");
    let nmse_at = |p: f64| -> f64 {
        rows.iter()
            .find(|r| (field_f64(r, 0) - p).abs() < 1e-9)
            .map(|r| field_f64(r, 3))
            .unwrap_or_else(|| panic!("no injection row at p={p}"))
    };
    let (n0, n06, n1) = (nmse_at(0.0), nmse_at(0.6), nmse_at(1.0));
    let ok = n1 <= n0 - 2.0 && (n06 - n1).abs() <= 1.0;
    verdict(
        "7d",
        "injection sweep trend",
        ok,
        &format!("p=0: {n0:.2} dB, p=0.6: {n06:.2} dB, p=1: {n1:.2} dB"),
    );
}

#[test]
fn c7e_fine_checkpoint_transfers_better() {
    let run = &suite().run_a;
    let best = |ckpt: &str| {
        sweep_means(run, ckpt)
            .into_iter()
            .map(|(_, nmse)| nmse)
            .fold(f64::INFINITY, f64::min)
    };
    let (fine, coarse) = (best("fine"), best("coarse"));
    verdict(
        "7e",
        "fine-trained beats coarse-trained",
        fine < coarse,
        &format!("fine {fine:.2} dB vs coarse {coarse:.2} dB under the refit transform"),
    );
}

#[test]
fn c8_equal_seeds_are_byte_identical() {
    let s = suite();
    let mut ok = true;
    let mut detail = String::new();
    // Wall-clock columns are the last two of the perfect-knowledge table;
    // every other metric CSV must match to the byte.
    let pk = |run: &Path| -> String {
        fs::read_to_string(run.join("runs/out/perfect_knowledge.csv"))
            .unwrap()
            .lines()
            .map(|l| {
                let fields: Vec<&str> = l.split(',').collect();
                fields[..fields.len().saturating_sub(2)].join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    if pk(&s.run_a) != pk(&s.run_b) {
        ok = false;
        detail.push_str("perfect_knowledge.csv differs; ");
    }
    for name in [
        "zero_knowledge.csv",
        "transform_sweep.csv",
        "injection_sweep.csv",
        "report.csv",
        "history_s_fine.csv",
        "history_s_coarse.csv",
        "history_o.csv",
        "history_st.csv",
    ] {
        let a = fs::read(s.run_a.join("runs/out").join(name)).unwrap();
        let b = fs::read(s.run_b.join("runs/out").join(name)).unwrap();
        if a != b {
            ok = false;
            detail.push_str(&format!("{name} differs; "));
        }
    }
    if ok {
        detail = "all metric CSVs byte-identical across equal-seed runs".into();
    }
    verdict("8", "determinism", ok, detail.trim_end_matches("; "));
}

// ── 9. format round trips and corrupted-magic rejection ─────────────────────

#[test]
fn c9_formats_round_trip_and_reject_bad_magic() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1100);
    let mut ok = true;
    let mut detail = String::new();

    // EMG: values and header survive a write/read/write cycle bit-exactly.
    let values: Vec<f32> = (0..64 * 64).map(|_| rng.gen_range(0.0f32..5.0)).collect();
    let map = EmissionMap::new(values, 64, 64, 0.25, DomainTag::Simulated, 7, "isoprene").unwrap();
    let p1 = tmp.path().join("a.emg");
    let p2 = tmp.path().join("b.emg");
    map.write_emg(&p1).unwrap();
    let back = EmissionMap::read_emg(&p1).unwrap();
    back.write_emg(&p2).unwrap();
    if fs::read(&p1).unwrap() != fs::read(&p2).unwrap() {
        ok = false;
        detail.push_str("EMG bytes differ after round trip; ");
    }

    // Transform CSV round trip.
    let pool: Vec<f32> = (0..4000).map(|_| rng.gen_range(0.0f32..3.0)).collect();
    let t = QuantileTransform::fit(&pool, 256, TargetDist::Uniform01, DomainTag::Simulated, 3, 100_000)
        .unwrap();
    let t1 = tmp.path().join("t1.csv");
    let t2 = tmp.path().join("t2.csv");
    t.write_csv(&t1).unwrap();
    QuantileTransform::read_csv(&t1).unwrap().write_csv(&t2).unwrap();
    if fs::read(&t1).unwrap() != fs::read(&t2).unwrap() {
        ok = false;
        detail.push_str("transform CSV bytes differ after round trip; ");
    }

    // SRCK checkpoint round trip.
    let net: SrNetwork<f32> = SrNetwork::init(NetworkConfig::new(4, 1, 2).unwrap(), 11).unwrap();
    let ckpt = Checkpoint::from_network(&net, Provenance::FineTunedDA(0.4), 11, 3);
    let c1 = tmp.path().join("c1.srck");
    let c2 = tmp.path().join("c2.srck");
    ckpt.save(&c1).unwrap();
    Checkpoint::load(&c1).unwrap().save(&c2).unwrap();
    if fs::read(&c1).unwrap() != fs::read(&c2).unwrap() {
        ok = false;
        detail.push_str("SRCK bytes differ after round trip; ");
    }

    // Corrupted magic bytes must be rejected with the data-error exit code.
    let work = tmp.path().join("work");
    fs::create_dir_all(&work).unwrap();
    let config = scenario_path();
    let config = config.to_str().unwrap();
    run_cli(&work, &["synth", "--config", config]);
    run_cli(&work, &["patchify", "--config", config]);
    let victim = work.join("runs/data/s_fine_000.emg");
    let mut bytes = fs::read(&victim).unwrap();
    bytes[..4].copy_from_slice(b"XXXX");
    fs::write(&victim, bytes).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_emisr"))
        .args(["fit-transform", "--config", config])
        .current_dir(&work)
        .output()
        .unwrap();
    let code = out.status.code();
    if code != Some(3) {
        ok = false;
        detail.push_str(&format!("corrupted magic exited with {code:?}, want Some(3); "));
    }

    if ok {
        detail = "EMG/transform/SRCK round-trip bit-exact; corrupted magic exits 3".into();
    }
    verdict("9", "format round trips", ok, detail.trim_end_matches("; "));
}
