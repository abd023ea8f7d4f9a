//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::process::Command;
use std::time::Instant;

use strata_profiles::coeff::{discrete_besov_norm, mterm_error_curve, Normalization, NormParams};
use strata_profiles::group::{validate_law, GroupSpec};
use strata_profiles::profiler::{extract, Escape, ExtractParams, Mode, ProfileDecomposition, Verdict};
use strata_profiles::sampling::{preset_sampling_set, SamplingSet};
use strata_profiles::transform::{
    analyze, besov_norm_continuous, calderon_reconstruct, lebesgue_norm, lp_block, sobolev_norm, GridFunction,
    GridSpec, KernelSet,
};
use strata_profiles::window::{log_grid, verify_partition, SpectralWindow, Window};
use strata_profiles::workbench::generate::{BundleAtom, Component, GeneratorKind, GeneratorSpec, Track};
use strata_profiles::workbench::{generate, GeneratorFile};

struct Outcome {
    id: u32,
    pass: bool,
}

fn line(id: u32, name: &str, pass: bool, detail: String) -> Outcome {
    println!("criterion {id:>2}: {} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { id, pass }
}

fn smooth() -> SpectralWindow {
    SpectralWindow::Smooth(Window::default())
}

fn criterion_1() -> Outcome {
    let g = GroupSpec::heisenberg(1);
    let t = Instant::now();
    let v = validate_law(&g, 1000, 11);
    let e = g.identity();
    let mut id_err: f64 = 0.0;
    for k in 0..1000 {
        let x = strata_profiles::group::Point(vec![(k as f64).sin(), (k as f64 * 0.7).cos(), k as f64 * 1e-3]);
        id_err = id_err.max(g.multiply(&x, &e).unwrap().max_abs_diff(&x));
        id_err = id_err.max(g.multiply(&e, &x).unwrap().max_abs_diff(&x));
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = v.passes(1e-12) && id_err <= 1e-12 && secs < 1.0;
    line(
        1,
        "group axioms on 1000 Heisenberg triples",
        pass,
        format!(
            "assoc {:.1e}, inverse {:.1e}, dilation {:.1e}, identity {id_err:.1e}, {secs:.3} s",
            v.max_associativity_error, v.max_inverse_error, v.max_dilation_error
        ),
    )
}

fn criterion_2() -> Outcome {
    let grid = log_grid(4f64.powi(-8), 4f64.powi(8), 512);
    let r = verify_partition(&smooth(), 8, &grid);
    line(
        2,
        "partition of unity, J = 8, 512 points",
        r.max_deviation <= 1e-12 && r.excluded == 0,
        format!("max deviation {:.2e}", r.max_deviation),
    )
}

fn gaussian(grid: GridSpec, sigma: f64, x0: f64) -> GridFunction {
    GridFunction::from_real_fn(grid, |x| (-(x[0] - x0).powi(2) / (2.0 * sigma * sigma)).exp())
}

fn criterion_3() -> Outcome {
    let grid = GridSpec::new(1, 1024, 8.0).unwrap();
    let ks = KernelSet::build(smooth(), -8, 8, grid).unwrap();
    let f = gaussian(grid, 0.3, 0.5);
    let n = f.l2();
    let mut worst: f64 = 0.0;
    for j in -5..=5 {
        let bj = lp_block(&f, &ks, j).unwrap();
        for gap in [-3, -2, 2, 3] {
            worst = worst.max(lp_block(&bj, &ks, j + gap).unwrap().l2() / n);
        }
    }
    let mut h = gaussian(grid, 0.5, 0.0);
    h.remove_dc();
    let r = calderon_reconstruct(&h, &ks).unwrap();
    let rel = r.function.sub(&h).unwrap().l2() / h.l2();
    line(
        3,
        "annihilation and reconstruction",
        worst <= 1e-12 && rel <= 1e-8,
        format!("annihilation {worst:.1e} * ||f||, reconstruction error {rel:.1e}"),
    )
}

fn criterion_4() -> Outcome {
    let grid = GridSpec::new(1, 4096, 64.0).unwrap();
    let h = 2.0;
    let (s, p) = (0.25, 4.0);
    let f = GridFunction::from_real_fn(grid, |x| (-x[0] * x[0] / 2.0).exp() * (6.0 * x[0]).cos());
    // f_h(x) = h^{-1/p} f(x / h) keeps both norms at the critical pair
    let fh = GridFunction::from_real_fn(grid, |x| {
        let y = x[0] / h;
        h.powf(-1.0 / p) * (-y * y / 2.0).exp() * (6.0 * y).cos()
    });
    let lp = (lebesgue_norm(&fh, p).unwrap() / lebesgue_norm(&f, p).unwrap() - 1.0).abs();
    let hs = (sobolev_norm(&fh, s).unwrap() / sobolev_norm(&f, s).unwrap() - 1.0).abs();
    line(
        4,
        "dilation invariance of L^4 and H^{1/4}",
        lp <= 1e-6 && hs <= 1e-6,
        format!("L^p drift {lp:.1e}, H^s drift {hs:.1e}"),
    )
}

fn corpus(grid: GridSpec, shift: f64, dilate: f64) -> Vec<GridFunction> {
    (0..20)
        .map(|k| {
            let sigma = 0.35 + 0.05 * k as f64;
            let x0 = -3.0 + 0.3 * k as f64 + shift;
            let w = (k % 5) as f64;
            let mut f = GridFunction::from_real_fn(grid, |x| {
                let y = (x[0] - x0) / dilate;
                (-y * y / (2.0 * sigma * sigma)).exp() * (w * y).cos()
            });
            f.remove_dc();
            f
        })
        .collect()
}

fn criterion_5() -> Outcome {
    let grid = GridSpec::new(1, 2048, 32.0).unwrap();
    let ks = KernelSet::build(smooth(), -7, 7, grid).unwrap();
    let beta = 0.5;
    let gs = preset_sampling_set(&GroupSpec::abelian(1), beta).unwrap();
    let np = NormParams::new(0.25, 2.0, 2.0).unwrap();
    let mut c_max: f64 = 1.0;
    let mut worst = String::new();
    for (label, shift, dilate) in [("base", 0.0, 1.0), ("translated", 5.0 * beta, 1.0), ("dilated", 0.0, 2.0)] {
        for (k, f) in corpus(grid, shift, dilate).iter().enumerate() {
            let cont = besov_norm_continuous(f, &ks, &np).unwrap();
            let c = analyze(f, &ks, &gs, Normalization::L1Atoms).unwrap();
            let disc = discrete_besov_norm(&c, &np).unwrap();
            let r = cont / disc;
            let cr = r.max(1.0 / r);
            if cr >= c_max {
                c_max = cr;
                worst = format!("{label} #{k}");
            }
        }
    }
    line(
        5,
        "continuous/discrete Besov equivalence, 60 functions",
        c_max <= 10.0,
        format!("C = {c_max:.4} (worst {worst}; alias-free value sqrt(beta)^-1 = {:.4})", beta.sqrt().recip()),
    )
}

fn criterion_6() -> Outcome {
    let grid = GridSpec::new(1, 1024, 8.0).unwrap();
    let ks = KernelSet::build(smooth(), -2, 5, grid).unwrap();
    let gs = preset_sampling_set(&GroupSpec::abelian(1), 0.5).unwrap();
    let mut f = gaussian(grid, 0.4, 0.3);
    f.remove_dc();
    let mut c = analyze(&f, &ks, &gs, Normalization::lp(4.0).unwrap()).unwrap();
    c.apply_floor();
    let card = c.len();
    let ms: Vec<usize> = (1..=card).collect();
    let curve = mterm_error_curve(&c, &ms).unwrap();
    let monotone = curve.windows(2).all(|w| w[1].1 <= w[0].1);
    let last = curve.last().unwrap().1;
    line(
        6,
        "M-term L^p-proxy error curve",
        monotone && last == 0.0,
        format!("{card} atoms, nonincreasing {monotone}, error at M = card {last:e}"),
    )
}

/// `n`-th offset of a bundle, zero at `n = 0`.
fn offset(dim: usize, n: usize) -> Vec<i64> {
    let k = n as i64;
    match dim {
        1 => vec![k * if n % 2 == 0 { 1 } else { -1 }],
        _ => vec![k, (3 * k) % 5, (2 * k) % 7],
    }
}

fn bundle(dim: usize, top: f64, size: usize) -> Vec<BundleAtom> {
    (0..size)
        .map(|n| BundleAtom {
            j: (n % 3) as i32,
            gamma: offset(dim, n),
            re: top - 0.01 * n as f64,
            im: if n % 4 == 1 { 0.003 } else { 0.0 },
        })
        .collect()
}

fn two_profile_spec(dim: usize) -> GeneratorSpec {
    let mut g1 = vec![0; dim];
    g1[0] = 4;
    GeneratorSpec {
        kind: GeneratorKind::Mixture,
        horizon: 32,
        n0: 1,
        p: 4.0,
        components: vec![
            Component {
                track: Track {
                    j0: 4,
                    j1: 1,
                    g0: vec![1; dim],
                    g1: vec![],
                },
                bundle: bundle(dim, 1.0, 32),
            },
            Component {
                track: Track {
                    j0: 0,
                    j1: 0,
                    g0: vec![0; dim],
                    g1,
                },
                bundle: bundle(dim, 0.595, 32),
            },
        ],
        noise: None,
        allow_overlap: false,
        check: None,
    }
}

fn params(m_max: usize, mode: Mode) -> ExtractParams {
    ExtractParams {
        m_max,
        l_max: 4,
        eps_conv: 1e-10,
        t_div: 4.0,
        eps_stable: 1e-9,
        tail: 8,
        mode,
    }
}

fn matches_bundles(d: &ProfileDecomposition, spec: &GeneratorSpec) -> Result<f64, String> {
    if d.profile_count() != spec.components.len() {
        return Err(format!("{} profiles", d.profile_count()));
    }
    let mut err: f64 = 0.0;
    for (l, comp) in spec.components.iter().enumerate() {
        let atoms = d.lattice_atoms(l);
        if atoms.len() != comp.bundle.len() {
            return Err(format!("profile {} has {} atoms", l + 1, atoms.len()));
        }
        for ((scale, gamma, v), b) in atoms.iter().zip(&comp.bundle) {
            if *scale != b.j || gamma.as_deref() != Some(b.gamma.as_slice()) {
                return Err(format!("profile {} atom {:?} vs {:?}", l + 1, (scale, gamma), (b.j, &b.gamma)));
            }
            err = err.max((v - b.value()).norm());
        }
    }
    Ok(err)
}

fn criterion_7() -> (Outcome, Vec<ProfileDecomposition>) {
    let mut ok = true;
    let mut details = Vec::new();
    let mut decs = Vec::new();
    for (name, g) in [("abelian", GroupSpec::abelian(1)), ("heisenberg", GroupSpec::heisenberg(1))] {
        let gs = preset_sampling_set(&g, 1.0).unwrap();
        let spec = two_profile_spec(g.dim());
        let d = extract(&generate(&gs, &spec).unwrap(), &params(64, Mode::Strict)).unwrap();
        let coeff = matches_bundles(&d, &spec);
        let verdict = d.classification[32].verdicts == vec![Verdict::ScaleOrthogonal];
        let escapes: Vec<Escape> = d.profiles.iter().map(|p| p.escape).collect();
        let escape_ok = escapes == vec![Escape::Concentrating, Escape::Translating];
        let defect = d.diagnostics.max_energy_defect;
        let pass = matches!(coeff, Ok(e) if e <= 1e-10) && verdict && escape_ok && defect <= 1e-10;
        ok &= pass;
        details.push(format!(
            "{name}: {} profiles, coefficient error {}, escapes {escapes:?}, defect {defect:.1e}",
            d.profile_count(),
            match coeff {
                Ok(e) => format!("{e:.1e}"),
                Err(m) => m,
            }
        ));
        decs.push(d);
    }
    (line(7, "two-profile mixture recovery", ok, details.join("; ")), decs)
}

fn near_collision() -> (SamplingSet, GeneratorSpec) {
    let gs = preset_sampling_set(&GroupSpec::abelian(1), 1.0).unwrap();
    // offsets 0, 1, -1, 2, -2, ..., 8, -8 with decreasing moduli
    let b = |top: f64| -> Vec<BundleAtom> {
        (0..17usize)
            .map(|n| {
                let k = n.div_ceil(2) as i64;
                BundleAtom {
                    j: 0,
                    gamma: vec![if n % 2 == 1 { k } else { -k }],
                    re: top - 0.02 * n as f64,
                    im: 0.0,
                }
            })
            .collect()
    };
    let (a, bb) = (b(1.0), b(0.99));
    let spec = GeneratorSpec {
        kind: GeneratorKind::Mixture,
        horizon: 32,
        n0: 1,
        p: 4.0,
        components: vec![
            Component {
                track: Track {
                    j0: 0,
                    j1: 0,
                    g0: vec![0],
                    g1: vec![],
                },
                bundle: a,
            },
            Component {
                track: Track {
                    j0: 0,
                    j1: 0,
                    g0: vec![0],
                    g1: vec![1],
                },
                bundle: bb,
            },
        ],
        noise: None,
        allow_overlap: true,
        check: None,
    };
    (gs, spec)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_8() -> (Outcome, Option<ProfileDecomposition>) {
    let (gs, spec) = near_collision();
    let d = match generate(&gs, &spec).and_then(|s| extract(&s, &params(16, Mode::Strict))) {
        Ok(d) => d,
        Err(e) => return (line(8, "near-collision defect decay", false, e.to_string()), None),
    };
    let l = d.profile_count();
    let defects: Vec<f64> = d.energy_check(l).unwrap().into_iter().map(|(_, e)| e).collect();
    let q = defects.len() / 4;
    let first = median(defects[..q].to_vec());
    let last = median(defects[defects.len() - q..].to_vec());
    (
        line(
            8,
            "near-collision defect decay",
            last < first,
            format!("{l} profiles, median defect first quarter {first:.3e}, last quarter {last:.3e}"),
        ),
        Some(d),
    )
}

fn criterion_9(decs: &[&ProfileDecomposition]) -> Outcome {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for d in decs {
        let m_max = d.params.m_max;
        let b = d.check_bookkeeping();
        ok &= b.holds();
        for m in 1..=m_max {
            let mut all: Vec<usize> = (1..=d.profile_count()).flat_map(|l| d.e_set(l, m)).collect();
            all.sort();
            ok &= all == (1..=m).collect::<Vec<_>>();
            if m > 1 {
                ok &= matches!(d.nu[m - 1] - d.nu[m - 2], 0 | 1);
            }
        }
        for &n in d.n_values.iter().step_by(5) {
            for l in 0..=d.profile_count() {
                for m in 1..=m_max {
                    worst = worst.max(d.remainder_split(n, l, m).unwrap().deviation);
                }
            }
        }
        worst = worst.max(d.diagnostics.max_m_independence);
    }
    ok &= worst <= 1e-12;
    line(
        9,
        "bookkeeping of E(l, M), nu(M) and r1 + r2",
        ok,
        format!("{} decompositions, max M-dependence of r1 + r2 {worst:.1e}", decs.len()),
    )
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let gs = preset_sampling_set(&GroupSpec::heisenberg(1), 1.0).unwrap();
    let spec = GeneratorFile {
        sampling: gs,
        generator: two_profile_spec(3),
    };
    let spec_path = dir.path().join("spec.json");
    std::fs::write(&spec_path, serde_json::to_vec_pretty(&spec).unwrap()).unwrap();
    let params_path = dir.path().join("params.json");
    std::fs::write(&params_path, serde_json::to_vec(&params(64, Mode::Strict)).unwrap()).unwrap();
    let snaps = dir.path().join("snaps.jsonl");
    let bin = env!("CARGO_BIN_EXE_lieprof");
    let gen = Command::new(bin)
        .args(["generate", "--spec"])
        .arg(&spec_path)
        .arg("--out")
        .arg(&snaps)
        .status()
        .unwrap();
    let mut reports = Vec::new();
    let mut codes = vec![gen.code()];
    for k in 0..2 {
        let out = dir.path().join(format!("report{k}.json"));
        let st = Command::new(bin)
            .arg("decompose")
            .arg("--in")
            .arg(&snaps)
            .arg("--params")
            .arg(&params_path)
            .arg("--report")
            .arg(&out)
            .status()
            .unwrap();
        codes.push(st.code());
        reports.push(std::fs::read(&out).unwrap_or_default());
    }
    let same = !reports[0].is_empty() && reports[0] == reports[1];
    let ok_codes = codes.iter().all(|c| *c == Some(0));
    line(
        10,
        "deterministic CLI reports",
        same && ok_codes,
        format!("exit codes {codes:?}, {} byte reports identical: {same}", reports[0].len()),
    )
}

#[test]
fn acceptance() {
    let mut out = vec![criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_5(), criterion_6()];
    let (o7, decs7) = criterion_7();
    out.push(o7);
    let (o8, dec8) = criterion_8();
    out.push(o8);
    let mut decs: Vec<&ProfileDecomposition> = decs7.iter().collect();
    decs.extend(dec8.iter());
    out.push(criterion_9(&decs));
    out.push(criterion_10());
    let failed: Vec<u32> = out.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
