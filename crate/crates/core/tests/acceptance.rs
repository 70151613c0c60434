//! Acceptance oracles. Prints one PASS/FAIL line per criterion, reports the
//! soft magnitude targets without gating on them, and exits non-zero if any
//! gated criterion fails.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlcpos_core::acoofdm::{AcoOfdm, OfdmConfig};
use vlcpos_core::channel::ImpulseResponse;
use vlcpos_core::harness::{emit_results, Experiment, ExperimentConfig, Flag, GridResult, Modulation};
use vlcpos_core::positioning::{laterate, Anchor};

struct Report {
    failed: usize,
}

impl Report {
    fn gate(&mut self, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }

    fn soft(&self, name: &str, ok: bool, detail: String) {
        println!("{} {name} (soft, not gated): {detail}", if ok { "MET " } else { "MISS" });
    }
}

fn random_symbols(modem: &AcoOfdm, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let c = modem.constellation();
    (0..modem.config().data_subcarriers())
        .map(|_| c.point(rng.gen_range(0..c.order())))
        .collect()
}

fn clipping_halving(report: &mut Report) {
    let t = Instant::now();
    let modem = AcoOfdm::new(&OfdmConfig::default()).unwrap();
    let cp = modem.config().cp_length;
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let frame = modem.transmit(&random_symbols(&modem, &mut rng)).unwrap();
        let spectrum = modem.forward_transform(&frame.clipped[cp..]);
        for k in (1..512).step_by(2) {
            let want = 0.5 * frame.freq_domain[k];
            worst = worst.max((spectrum[k] - want).norm() / want.norm());
        }
    }
    let el = t.elapsed();
    report.gate(
        "clipping-halving",
        worst <= 1e-9 && el < Duration::from_secs(5),
        format!("100 frames, max relative deviation {worst:.2e} (tol 1e-9), {el:.2?} (limit 5 s)"),
    );
}

fn los_inverse_exactness(report: &mut Report) {
    let t = Instant::now();
    let base = ExperimentConfig::default();
    let cfg = ExperimentConfig {
        scene: base.scene.absorbing(),
        modulations: vec![Modulation::Ofdm],
        ..base
    };
    let res = Experiment::new(&cfg).unwrap().run_grid(1).unwrap();
    let map = res.map(Modulation::Ofdm).unwrap();
    let in_fov: Vec<_> = map
        .records
        .iter()
        .filter(|r| !r.flags.iter().any(|f| matches!(f, Flag::OutsideFov(_))))
        .collect();
    let worst = in_fov.iter().map(|r| r.error).fold(0.0, f64::max);
    let all_finite = in_fov.iter().all(|r| r.error.is_finite());
    let center = map.summary.center_err;
    let el = t.elapsed();
    report.gate(
        "LOS inverse-exactness",
        all_finite && worst < 1e-3 && center < 1e-5 && el < Duration::from_secs(120),
        format!(
            "{} of {} points in FOV, max error {worst:.2e} m (tol 1e-3), centre {center:.2e} m (tol 1e-5), {el:.1?} (limit 2 min)",
            in_fov.len(),
            map.records.len()
        ),
    );
}

/// Independent solve of the linearized system through the 2x2 normal equations.
fn normal_equations(anchors: &[Anchor]) -> (f64, f64) {
    let a0 = anchors[0];
    let (mut s11, mut s12, mut s22, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for a in &anchors[1..] {
        let (u, v) = (a.x - a0.x, a.y - a0.y);
        let b = 0.5 * (a0.r * a0.r - a.r * a.r + a.x * a.x + a.y * a.y - a0.x * a0.x - a0.y * a0.y);
        s11 += u * u;
        s12 += u * v;
        s22 += v * v;
        t1 += u * b;
        t2 += v * b;
    }
    let det = s11 * s22 - s12 * s12;
    ((s22 * t1 - s12 * t2) / det, (s11 * t2 - s12 * t1) / det)
}

fn lateration_oracle(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let (mut worst_exact, mut worst_oracle) = (0.0f64, 0.0f64);
    let mut n = 0;
    while n < 1000 {
        let anchors_xy: Vec<(f64, f64)> = (0..4).map(|_| (rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0))).collect();
        // keep the instance well conditioned: smallest pairwise spread and area
        let (a, b, c) = (anchors_xy[1], anchors_xy[2], anchors_xy[3]);
        let o = anchors_xy[0];
        let area = |p: (f64, f64), q: (f64, f64)| ((p.0 - o.0) * (q.1 - o.1) - (p.1 - o.1) * (q.0 - o.0)).abs();
        if area(a, b).max(area(a, c)).max(area(b, c)) < 1.0 {
            continue;
        }
        n += 1;
        let (x, y) = (rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0));
        let exact: Vec<Anchor> = anchors_xy
            .iter()
            .enumerate()
            .map(|(i, &(ax, ay))| Anchor { id: i as u8, x: ax, y: ay, r: (x - ax).hypot(y - ay) })
            .collect();
        let p = laterate(&exact).unwrap();
        worst_exact = worst_exact.max((p.x - x).hypot(p.y - y));
        let noisy: Vec<Anchor> = exact
            .iter()
            .map(|a| Anchor { r: (a.r + rng.gen_range(-0.3..0.3)).abs(), ..*a })
            .collect();
        let p = laterate(&noisy).unwrap();
        let (ox, oy) = normal_equations(&noisy);
        worst_oracle = worst_oracle.max((p.x - ox).hypot(p.y - oy));
    }
    report.gate(
        "lateration oracle",
        worst_exact < 1e-9 && worst_oracle < 1e-9,
        format!("1000 instances, exact-range error {worst_exact:.2e} m, perturbed vs normal equations {worst_oracle:.2e} m (tol 1e-9)"),
    );
}

fn multipath_suite(report: &mut Report) -> GridResult {
    let t = Instant::now();
    let res = Experiment::new(&ExperimentConfig::default()).unwrap().run_grid(1).unwrap();
    let el = t.elapsed();
    let ofdm = res.map(Modulation::Ofdm).unwrap().summary;
    let ook = res.map(Modulation::Ook).unwrap().summary;
    for (name, s) in [("OFDM", ofdm), ("OOK", ook)] {
        report.gate(
            &format!("multipath ordering {name} centre < edge < corner"),
            s.center_err < s.edge_err && s.edge_err < s.corner_err,
            format!("centre {:.2e} m, edge {:.4} m, corner {:.4} m", s.center_err, s.edge_err, s.corner_err),
        );
        report.gate(
            &format!("multipath ordering {name} rms_rect < rms_whole"),
            s.rms_rect < s.rms_whole,
            format!("rms_rect {:.4} m, rms_whole {:.4} m", s.rms_rect, s.rms_whole),
        );
    }
    for (probe, a, b) in [
        ("corner", ofdm.corner_err, ook.corner_err),
        ("edge", ofdm.edge_err, ook.edge_err),
        ("centre", ofdm.center_err, ook.center_err),
    ] {
        report.gate(
            &format!("multipath ordering OFDM <= OOK at {probe}"),
            a <= b,
            format!("OFDM {a:.4e} m, OOK {b:.4e} m"),
        );
    }
    report.gate(
        "multipath suite runtime",
        el < Duration::from_secs(30 * 60),
        format!("61x61 grid, 3 bounces, both modulations, {el:.1?} (limit 30 min)"),
    );

    report.soft(
        "rms_rect(OFDM) < 0.15 m",
        ofdm.rms_rect < 0.15,
        format!("{:.4} m (reference 0.04 m)", ofdm.rms_rect),
    );
    let ratio = ook.rms_whole / ofdm.rms_whole;
    report.soft(
        "rms_whole(OOK)/rms_whole(OFDM) in [1.3, 3.0]",
        ofdm.rms_whole < ook.rms_whole && (1.3..=3.0).contains(&ratio),
        format!("OFDM {:.4} m, OOK {:.4} m, ratio {ratio:.3} (reference 0.53 / 1.01 = 1.9)", ofdm.rms_whole, ook.rms_whole),
    );
    report.soft(
        "corner OFDM error in [1.0, 3.0] m",
        (1.0..=3.0).contains(&ofdm.corner_err),
        format!("{:.4} m (reference 1.95 m)", ofdm.corner_err),
    );
    res
}

fn modem_loopback(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for n in [8usize, 64, 512] {
        let cfg = OfdmConfig {
            n_subcarriers: n,
            cp_length: 16.min(n / 4),
            ..OfdmConfig::default()
        };
        let modem = AcoOfdm::new(&cfg).unwrap();
        let gain = 3.7e-6;
        for _ in 0..20 {
            let symbols = random_symbols(&modem, &mut rng);
            let frame = modem.transmit(&symbols).unwrap();
            let rx: Vec<f64> = frame.clipped.iter().map(|v| gain * v).collect();
            let eq = vec![Complex64::new(gain, 0.0); cfg.data_subcarriers()];
            let out = modem.receive(&rx, &eq).unwrap();
            for (a, b) in out.iter().zip(&symbols) {
                worst = worst.max((a - b).norm());
            }
        }
    }
    report.gate(
        "modem loopback",
        worst < 1e-9,
        format!("N in {{8, 64, 512}}, flat channel, max symbol error {worst:.2e} (tol 1e-9)"),
    );

    // multipath up to 16 taps, previous frame spilling into the prefix
    let modem = AcoOfdm::new(&OfdmConfig::default()).unwrap();
    let c = modem.constellation().clone();
    let len = modem.config().frame_len();
    let mut errors = 0usize;
    let mut symbols_checked = 0usize;
    for taps in 1..=16 {
        for _ in 0..5 {
            let mut gains = vec![1.0];
            gains.extend((1..taps).map(|_| rng.gen_range(0.0..0.6)));
            let ir = ImpulseResponse {
                bin_width: 1.0,
                t0: 0.0,
                los_gain: 1.0,
                total_gain: gains.iter().sum(),
                gains,
            };
            let training = random_symbols(&modem, &mut rng);
            let data = random_symbols(&modem, &mut rng);
            let mut stream = modem.transmit(&random_symbols(&modem, &mut rng)).unwrap().clipped;
            stream.extend(modem.transmit(&training).unwrap().clipped);
            stream.extend(modem.transmit(&data).unwrap().clipped);
            let rx = ir.convolve(&stream);
            let est = modem
                .estimate_channel(&training, &modem.demodulate(&rx[len..2 * len]).unwrap())
                .unwrap();
            let out = modem.receive(&rx[2 * len..], &est.gains).unwrap();
            errors += out.iter().zip(&data).filter(|(a, b)| c.decide(**a) != c.decide(**b)).count();
            symbols_checked += data.len();
        }
    }
    report.gate(
        "cyclic prefix absorbs <= 16 taps",
        errors == 0,
        format!("{symbols_checked} symbols over 1..=16-tap channels, {errors} symbol errors"),
    );
}

fn determinism(report: &mut Report, reference: &GridResult) {
    let again = Experiment::new(&ExperimentConfig::default()).unwrap().run_grid(4).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit_results(&reference.maps, Some(&reference.metadata), a.path()).unwrap();
    emit_results(&again.maps, Some(&again.metadata), b.path()).unwrap();
    let mut same = true;
    for f in ["errors.csv", "summary.json", "histogram.csv"] {
        same &= std::fs::read(a.path().join(f)).unwrap() == std::fs::read(b.path().join(f)).unwrap();
    }
    let rows = std::fs::read_to_string(a.path().join("errors.csv")).unwrap().lines().count() - 1;
    report.gate(
        "determinism",
        same && rows == 2 * 61 * 61,
        format!("1 vs 4 workers, {rows} CSV rows, outputs byte-identical: {same}"),
    );
}

fn main() {
    let mut report = Report { failed: 0 };
    clipping_halving(&mut report);
    modem_loopback(&mut report);
    lateration_oracle(&mut report);
    los_inverse_exactness(&mut report);
    let grid = multipath_suite(&mut report);
    determinism(&mut report, &grid);
    if report.failed > 0 {
        println!("{} acceptance criteria failed", report.failed);
        std::process::exit(1);
    }
    println!("all gated acceptance criteria passed");
}
