//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every line is printed; exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use benchirt::dataio::{self, filter_constant_items, Layout};
use benchirt::indicators::{
    agent_indicators, binning_from_model, dominance, generality, indicator_correlations, make_bins,
    theoretical_generality, variance_and_regularity, Dominance, Indicator,
};
use benchirt::irt::{
    fit, icc, marginal_item_gradient, marginal_log_likelihood, seed_consistency, FitConfig,
    ItemParams, ModelKind, NormalQuadrature,
};
use benchirt::normalize::{
    binarize, reference_scale, winrate_aggregate, BinarizePolicy, BinaryResponseMatrix,
};
use benchirt::synth::{perfectly_general_agent, sample_2pl_matrix, ScoreModel, TwoPLWorld};
use benchirt::ResultMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Rounds to two decimals, ties to even on the exact decimal value (so
/// 0.925 → 0.92 and 0.775 → 0.78).
fn round2(x: f64) -> String {
    let milli = (x * 1000.0).round();
    if (x * 1000.0 - milli).abs() < 1e-6 && (milli as i64).rem_euclid(10) == 5 {
        let down = (milli as i64 - 5) / 10;
        let cents = if down % 2 == 0 { down } else { down + 1 };
        return format!("{}.{:02}", cents / 100, cents % 100);
    }
    format!("{:.2}", x)
}

/// Exactly `round(p · n)` copies of each categorical value.
fn exact_sample(values: &[f64], probs: &[f64], n: usize) -> Vec<f64> {
    values
        .iter()
        .zip(probs)
        .flat_map(|(&v, &p)| std::iter::repeat_n(v, (p * n as f64).round() as usize))
        .collect()
}

fn criterion_1() -> Check {
    // (values, probs, printed mean, printed variance, printed regularity)
    let rows: [(&[f64], &[f64], &str, &str, &str); 7] = [
        (&[0.3, 0.4], &[0.5, 0.5], "0.35", "0.00", "400.00"),
        (&[0.7, 0.8], &[0.5, 0.5], "0.75", "0.00", "400.00"),
        (&[0.6, 0.9], &[0.5, 0.5], "0.75", "0.02", "44.44"),
        (&[0.0, 1.0], &[0.3, 0.7], "0.70", "0.21", "4.76"),
        (&[0.25, 1.0], &[0.3, 0.7], "0.78", "0.12", "8.47"),
        (&[0.5, 1.0], &[0.3, 0.7], "0.85", "0.05", "19.05"),
        (&[0.75, 1.0], &[0.3, 0.7], "0.92", "0.01", "76.19"),
    ];
    // Closed-form moments, computed independently of the library.
    let exact = [
        (0.35, 0.0025),
        (0.75, 0.0025),
        (0.75, 0.0225),
        (0.70, 0.21),
        (0.775, 0.118125),
        (0.85, 0.0525),
        (0.925, 0.013125),
    ];
    for ((values, probs, pm, pv, pr), (em, ev)) in rows.iter().zip(exact) {
        let model =
            ScoreModel::categorical(values.to_vec(), probs.to_vec()).map_err(|e| e.to_string())?;
        ensure(
            (model.analytic_mean() - em).abs() <= 1e-9,
            format!("{model}: mean {}", model.analytic_mean()),
        )?;
        ensure(
            (model.analytic_variance() - ev).abs() <= 1e-9,
            format!("{model}: variance {}", model.analytic_variance()),
        )?;
        let s = variance_and_regularity(&exact_sample(values, probs, 100))
            .map_err(|e| e.to_string())?;
        ensure(
            (s.mean - em).abs() <= 1e-9 && (s.variance - ev).abs() <= 1e-9,
            format!("{model}: sample moments"),
        )?;
        let reg = s.regularity.finite().ok_or("regularity unbounded")?;
        let got = (round2(s.mean), round2(s.variance), round2(reg));
        ensure(
            (got.0.as_str(), got.1.as_str(), got.2.as_str()) == (*pm, *pv, *pr),
            format!("{model}: printed {got:?}, expected ({pm}, {pv}, {pr})"),
        )?;
    }
    for c in [0.0, 1.0, 0.25, 0.5, 0.75] {
        let s = variance_and_regularity(&[c; 100]).map_err(|e| e.to_string())?;
        ensure(
            s.variance == 0.0 && s.regularity == Indicator::Unbounded,
            format!("constant {c}"),
        )?;
        ensure(
            round2(s.mean) == format!("{c:.2}"),
            format!("constant {c} mean"),
        )?;
    }
    Ok("7 categorical and 5 constant rows".into())
}

fn criterion_2_world() -> (TwoPLWorld, BinaryResponseMatrix) {
    let world = TwoPLWorld::generate(500, 60, 2024);
    let brm = sample_2pl_matrix(&world).expect("valid world");
    (world, brm)
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    benchirt::stats::pearson(x, y).unwrap_or(f64::NAN)
}

fn criterion_2() -> Check {
    let (world, brm) = criterion_2_world();
    ensure(
        brm.constant_items().is_empty(),
        "simulated matrix has a constant item",
    )?;
    let model = fit(&brm, ModelKind::TwoPL, &FitConfig::default()).map_err(|e| e.to_string())?;
    ensure(model.convergence.converged, "fit did not converge")?;
    let a: Vec<f64> = model.items.iter().map(|p| p.discrimination).collect();
    let b: Vec<f64> = model.items.iter().map(|p| p.difficulty).collect();
    let th: Vec<f64> = model.abilities.iter().map(|e| e.theta).collect();
    let ta: Vec<f64> = world.true_items.iter().map(|p| p.0).collect();
    let tb: Vec<f64> = world.true_items.iter().map(|p| p.1).collect();
    let (rb, ra, rt) = (
        pearson(&tb, &b),
        pearson(&ta, &a),
        pearson(&world.true_abilities, &th),
    );
    let detail = format!(
        "r_b={rb:.4} r_a={ra:.4} r_theta={rt:.4}, {} EM cycles",
        model.convergence.iterations
    );
    ensure(rb >= 0.95 && ra >= 0.80 && rt >= 0.90, detail.clone())?;
    Ok(detail)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let a = rng.random_range(-10.0..10.0);
        let b = rng.random_range(-10.0..10.0);
        ensure(
            icc(b, a, b, 0.0) == 0.5,
            format!("P(b; a={a}, b={b}) != 0.5"),
        )?;
    }
    for _ in 0..1000 {
        let a: f64 = rng.random_range(-5.0..5.0);
        let b = rng.random_range(-5.0..5.0);
        let c = rng.random_range(0.0..0.5);
        let grid: Vec<f64> = (0..=200).map(|k| -10.0 + 0.1 * k as f64).collect();
        let p: Vec<f64> = grid.iter().map(|&t| icc(t, a, b, c)).collect();
        let ok = p
            .windows(2)
            .all(|w| if a > 0.0 { w[1] >= w[0] } else { w[1] <= w[0] });
        ensure(
            ok && p[0] != p[200],
            format!("ICC not monotone for a={a} b={b} c={c}"),
        )?;
    }
    let quad = NormalQuadrature::new(21).map_err(|e| e.to_string())?;
    let world = TwoPLWorld::generate(40, 8, 17);
    let brm = sample_2pl_matrix(&world).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let kind = if k % 2 == 0 {
            ModelKind::TwoPL
        } else {
            ModelKind::ThreePL
        };
        let items: Vec<ItemParams> = brm
            .item_ids()
            .iter()
            .map(|id| {
                let c = if kind == ModelKind::ThreePL {
                    rng.random_range(0.0..0.3)
                } else {
                    0.0
                };
                ItemParams::new(
                    id.clone(),
                    rng.random_range(-2.5..2.5),
                    rng.random_range(-2.0..2.0),
                    c,
                )
                .unwrap()
            })
            .collect();
        let i = rng.random_range(0..items.len());
        let g = marginal_item_gradient(&brm, &items, i, kind, &quad).map_err(|e| e.to_string())?;
        let h = 1e-5;
        for (d, &gd) in g.iter().enumerate() {
            let shifted = |delta: f64| {
                let mut its = items.clone();
                let p = &its[i];
                let mut v = [p.discrimination, p.difficulty, p.guessing];
                v[d] += delta;
                its[i] = ItemParams::new(p.item_id.clone(), v[0], v[1], v[2]).unwrap();
                marginal_log_likelihood(&brm, &its, &quad).unwrap()
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            let e = rel_err(gd, fd);
            worst = worst.max(e);
            ensure(
                e < 1e-5,
                format!("point {k} param {d}: analytic {gd} vs fd {fd}"),
            )?;
        }
    }
    Ok(format!("worst gradient relative error {worst:.2e}"))
}

fn scores(ids: &[String], v: &[f64]) -> BTreeMap<String, f64> {
    ids.iter().cloned().zip(v.iter().copied()).collect()
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // (i) one bin
    for _ in 0..1000 {
        let n = rng.random_range(2..120);
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let ids: Vec<String> = (0..n).map(|i| format!("i{i:03}")).collect();
        let diffs: Vec<(String, f64)> = ids
            .iter()
            .map(|id| (id.clone(), rng.random_range(-3.0..3.0)))
            .collect();
        let one = make_bins(&diffs, 1, 1000).map_err(|e| e.to_string())?;
        let g = generality(&scores(&ids, &v), &one)
            .map_err(|e| e.to_string())?
            .value;
        let r = variance_and_regularity(&v)
            .map_err(|e| e.to_string())?
            .regularity;
        match (g, r) {
            (Indicator::Finite(x), Indicator::Finite(y)) => ensure(
                (x - y).abs() <= 1e-12 * y.max(1.0),
                format!("one-bin {x} vs regularity {y}"),
            )?,
            (x, y) => ensure(x == y, format!("one-bin {x} vs regularity {y}"))?,
        }
    }
    // (ii) step agents under every binning of several item sets
    let mut binnings = 0;
    for n in [1usize, 7, 40, 55, 123] {
        let diffs: Vec<(String, f64)> = (0..n)
            .map(|i| (format!("i{i:03}"), rng.random_range(-4.0..4.0)))
            .collect();
        for min_bins in 1..=8 {
            for min_per_bin in 1..=12 {
                let b = make_bins(&diffs, min_bins, min_per_bin).map_err(|e| e.to_string())?;
                binnings += 1;
                for cut in 1..=b.n_bins() {
                    let agent = perfectly_general_agent(&b, cut).map_err(|e| e.to_string())?;
                    let g = generality(&agent, &b).map_err(|e| e.to_string())?.value;
                    ensure(
                        g == Indicator::Unbounded,
                        format!("n={n} bins={} cut={cut}: {g}", b.n_bins()),
                    )?;
                }
            }
        }
    }
    // (iii) closed form vs bin variances of expected responses: each bin
    // holds two items scored p ± √(p(1-p)), whose population variance is
    // the Bernoulli variance p(1-p).
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(1..12);
        let theta = rng.random_range(-3.0..3.0);
        let hs: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let a_s: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..3.0)).collect();
        let mut diffs = Vec::new();
        let mut sc = BTreeMap::new();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&x, &y| hs[x].total_cmp(&hs[y]));
        for (rank, &h) in order.iter().enumerate() {
            let p = 1.0 / (1.0 + (-a_s[h] * (theta - hs[h])).exp());
            let sd = (p * (1.0 - p)).sqrt();
            // bin position encoded in the difficulty so bins follow `order`
            for (s, sign) in [("lo", -1.0), ("hi", 1.0)] {
                let id = format!("b{rank:02}{s}");
                diffs.push((id.clone(), rank as f64));
                sc.insert(id, p + sign * sd);
            }
        }
        let bins = make_bins(&diffs, k, 2).map_err(|e| e.to_string())?;
        ensure(bins.n_bins() == k, "bin construction")?;
        let eq3 = generality(&sc, &bins)
            .map_err(|e| e.to_string())?
            .value
            .finite()
            .ok_or("unbounded")?;
        let closed = theoretical_generality(theta, &hs, &a_s)
            .map_err(|e| e.to_string())?
            .finite()
            .ok_or("unbounded")?;
        let e = (eq3 - closed).abs() / closed.abs().max(1.0);
        worst = worst.max(e);
        ensure(e <= 1e-9, format!("theta={theta}: {eq3} vs {closed}"))?;
    }
    // (iv) dominance example
    let diffs: Vec<(String, f64)> = (1..=8).map(|h| (format!("h{h}"), h as f64)).collect();
    let per_difficulty = make_bins(&diffs, 8, 1).map_err(|e| e.to_string())?;
    let a = perfectly_general_agent(&per_difficulty, 5).map_err(|e| e.to_string())?;
    let b = perfectly_general_agent(&per_difficulty, 2).map_err(|e| e.to_string())?;
    ensure(
        dominance(&a, &b).map_err(|e| e.to_string())? == Dominance::Dominates,
        "h=5 agent should dominate h=2",
    )?;
    Ok(format!(
        "{binnings} binnings, closed-form worst relative error {worst:.1e}, dominance holds"
    ))
}

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = 30;
    let thetas: Vec<f64> = (0..m)
        .map(|j| -2.0 + 4.0 * j as f64 / (m - 1) as f64)
        .collect();
    let mut items: Vec<(f64, f64)> = (0..46)
        .map(|_| (rng.random_range(1.2..2.5), rng.random_range(-1.5..1.5)))
        .collect();
    let reversed = [7usize, 19, 33, 48];
    for &i in &reversed {
        items.insert(
            i,
            (-rng.random_range(1.5..2.5), rng.random_range(-0.5..0.5)),
        );
    }
    let world = TwoPLWorld::new(thetas, items, 55).map_err(|e| e.to_string())?;
    let brm = sample_2pl_matrix(&world).map_err(|e| e.to_string())?;
    ensure(
        brm.constant_items().is_empty(),
        "constructed matrix has constant items",
    )?;
    // The reversed items are solved mostly by agents with low raw scores.
    let raw: Vec<f64> = brm
        .rows()
        .iter()
        .map(|r| r.iter().map(|c| f64::from(c.unwrap_or(0))).sum())
        .collect();
    let median = {
        let mut s = raw.clone();
        s.sort_by(f64::total_cmp);
        s[m / 2]
    };
    for &i in &reversed {
        let (low, high) = brm
            .rows()
            .iter()
            .zip(&raw)
            .fold((0, 0), |(l, h), (r, &s)| match r[i] {
                Some(1) if s < median => (l + 1, h),
                Some(1) => (l, h + 1),
                _ => (l, h),
            });
        ensure(
            low > high,
            format!("item {i} is not solved mainly by low scorers ({low} vs {high})"),
        )?;
    }
    let model = fit(&brm, ModelKind::TwoPL, &FitConfig::default()).map_err(|e| e.to_string())?;
    let flagged: Vec<&str> = model.abstruse_items();
    let expected: Vec<&str> = reversed
        .iter()
        .map(|&i| world.item_ids[i].as_str())
        .collect();
    ensure(
        flagged == expected,
        format!("flagged {flagged:?}, expected {expected:?}"),
    )?;
    Ok(format!("flagged exactly {flagged:?}"))
}

fn criterion_6() -> Check {
    // Each agent has an ability knob θ and an independent generality knob s
    // (steepness of its characteristic curve). Items are mostly harder than
    // the agents, so mean score, and with it overall variance, rises with θ.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (m, n) = (100usize, 400usize);
    let hs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..7.0)).collect();
    let knobs: Vec<(f64, f64)> = (0..m)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.8..4.0)))
        .collect();
    let rows: Vec<Vec<Option<u8>>> = knobs
        .iter()
        .map(|&(theta, s)| {
            hs.iter()
                .map(|&h| {
                    Some(u8::from(
                        rng.random::<f64>() < 1.0 / (1.0 + (-s * (theta - h)).exp()),
                    ))
                })
                .collect()
        })
        .collect();
    let agents: Vec<String> = (0..m).map(|j| format!("agent{j:03}")).collect();
    let item_ids: Vec<String> = (0..n).map(|i| format!("item{i:03}")).collect();
    let brm = BinaryResponseMatrix::new(agents.clone(), item_ids.clone(), rows, None)
        .map_err(|e| e.to_string())?;
    let keep: Vec<String> = item_ids
        .iter()
        .enumerate()
        .filter(|(i, _)| !brm.constant_items().contains(i))
        .map(|(_, id)| id.clone())
        .collect();
    let brm = brm.retain_items(&keep).map_err(|e| e.to_string())?;
    let model = fit(&brm, ModelKind::TwoPL, &FitConfig::default()).map_err(|e| e.to_string())?;
    let binning = binning_from_model(&model, 4, 10, false).map_err(|e| e.to_string())?;
    let all = brm
        .rows()
        .iter()
        .enumerate()
        .map(|(j, row)| {
            let sc: BTreeMap<String, f64> = brm
                .item_ids()
                .iter()
                .zip(row)
                .filter_map(|(id, c)| Some((id.clone(), f64::from((*c)?))))
                .collect();
            agent_indicators(&agents[j], &sc, &binning, Some(model.abilities[j].theta))
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let corr = indicator_correlations(&all).map_err(|e| e.to_string())?;
    let ag = corr
        .get("ability", "generality")
        .ok_or("ability/generality undefined")?;
    let ar = corr
        .get("ability", "regularity")
        .ok_or("ability/regularity undefined")?;
    let knob = pearson(
        &knobs.iter().map(|k| k.1).collect::<Vec<_>>(),
        &all.iter()
            .map(|a| a.generality.finite().unwrap_or(f64::NAN))
            .collect::<Vec<_>>(),
    );
    let detail = format!(
        "corr(ability, generality)={ag:.3} corr(ability, regularity)={ar:.3} (generality tracks its knob: r={knob:.3}; {} bins)",
        binning.n_bins()
    );
    ensure(ag.abs() < 0.2 && ar < -0.5, detail.clone())?;
    Ok(detail)
}

fn criterion_7() -> Check {
    let (_, brm) = criterion_2_world();
    let config = FitConfig {
        seed: 11,
        ..FitConfig::default()
    };
    let first = fit(&brm, ModelKind::TwoPL, &config)
        .and_then(|m| m.to_json())
        .map_err(|e| e.to_string())?;
    let second = fit(&brm, ModelKind::TwoPL, &config)
        .and_then(|m| m.to_json())
        .map_err(|e| e.to_string())?;
    ensure(first == second, "same seed produced different model JSON")?;
    let report = seed_consistency(&brm, ModelKind::TwoPL, &FitConfig::default(), &[1, 2, 3])
        .map_err(|e| e.to_string())?;
    let detail = format!(
        "byte-identical JSON ({} bytes); max seed deviation {:.2e} <= {:.0e}",
        first.len(),
        report.max_deviation,
        report.threshold
    );
    ensure(
        report.consistent && report.max_deviation <= 10.0 * config.tolerance,
        detail.clone(),
    )?;
    Ok(detail)
}

fn data_dir() -> PathBuf {
    std::env::var_os("BENCHIRT_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

/// Reference-scaled scores → success at or above the target → constant
/// items dropped → 2PL fit. Returns (dropped items, retained items).
fn smoke(rm: &ResultMatrix) -> Result<(Vec<String>, usize), String> {
    let zeros: BTreeMap<String, f64> = rm.item_ids().iter().map(|id| (id.clone(), 0.0)).collect();
    let hundreds: BTreeMap<String, f64> =
        rm.item_ids().iter().map(|id| (id.clone(), 100.0)).collect();
    let nm = reference_scale(rm, &zeros, &hundreds).map_err(|e| e.to_string())?;
    smoke_binary(
        rm,
        binarize(&nm, BinarizePolicy::AtOrAbove { threshold: 1.0 }).map_err(|e| e.to_string())?,
    )
}

fn smoke_binary(
    rm: &ResultMatrix,
    brm: BinaryResponseMatrix,
) -> Result<(Vec<String>, usize), String> {
    let (brm, report) = filter_constant_items(rm, &brm).map_err(|e| e.to_string())?;
    let model = fit(&brm, ModelKind::TwoPL, &FitConfig::default()).map_err(|e| e.to_string())?;
    ensure(
        model
            .items
            .iter()
            .all(|p| p.discrimination.is_finite() && p.difficulty.is_finite()),
        "non-finite item parameters",
    )?;
    Ok((report.removed_constant_items, model.items.len()))
}

fn criterion_8() -> Check {
    // Synthetic ALE-shaped run: 40 agents x 49 games of human-normalized
    // scores (100 = human level), with 7 games below and 1 above human level
    // for everyone.
    let world = TwoPLWorld::generate(40, 41, 8);
    let brm = sample_2pl_matrix(&world).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut item_ids = world.item_ids.clone();
    let constants: Vec<String> = (0..8).map(|k| format!("const{k}")).collect();
    item_ids.extend(constants.iter().cloned());
    let values: Vec<Vec<f64>> = brm
        .rows()
        .iter()
        .map(|row| {
            let mut v: Vec<f64> = row
                .iter()
                .map(|c| {
                    if c == &Some(1) {
                        rng.random_range(100.0..400.0)
                    } else {
                        rng.random_range(-20.0..99.0)
                    }
                })
                .collect();
            v.extend((0..7).map(|_| rng.random_range(0.0..60.0)));
            v.push(rng.random_range(150.0..900.0));
            v
        })
        .collect();
    let mask = vec![vec![false; item_ids.len()]; values.len()];
    let rm = ResultMatrix::new(world.agent_ids.clone(), item_ids, values, mask)
        .map_err(|e| e.to_string())?;
    let mut dropped_expected: Vec<String> = world
        .item_ids
        .iter()
        .enumerate()
        .filter(|(i, _)| brm.constant_items().contains(i))
        .map(|(_, id)| id.clone())
        .collect();
    dropped_expected.extend(constants);
    let (dropped, kept) = smoke(&rm)?;
    let (mut a, mut b) = (dropped.clone(), dropped_expected);
    a.sort();
    b.sort();
    ensure(a == b, format!("dropped {a:?}, expected {b:?}"))?;
    let mut detail = format!(
        "synthetic ALE-shaped run kept {kept} items, dropped {}",
        dropped.len()
    );

    let dir = data_dir();
    let ale = dir.join("ale.csv");
    let gvgai = dir.join("gvgai_trials.csv");
    if !ale.exists() && !gvgai.exists() {
        detail.push_str(&format!(
            "; no published data under {} (skipped)",
            dir.display()
        ));
        return Ok(detail);
    }
    if ale.exists() {
        let rm = dataio::load_results(&ale, Layout::Wide)
            .map_err(|e| format!("{}: {e}", ale.display()))?;
        let (dropped, kept) = smoke(&rm)?;
        detail.push_str(&format!("; ALE: kept {kept}, dropped {dropped:?}"));
    }
    if gvgai.exists() {
        let trials =
            dataio::load_trials(&gvgai).map_err(|e| format!("{}: {e}", gvgai.display()))?;
        let nm = winrate_aggregate(&trials).map_err(|e| e.to_string())?;
        let rm = nm.to_result_matrix().map_err(|e| e.to_string())?;
        let brm = binarize(&nm, BinarizePolicy::MajorityWins).map_err(|e| e.to_string())?;
        let (dropped, kept) = smoke_binary(&rm, brm)?;
        detail.push_str(&format!("; GVGAI: kept {kept}, dropped {}", dropped.len()));
    }
    Ok(detail)
}

fn main() {
    let criteria: [(&str, fn() -> Check, Duration); 8] = [
        (
            "table rows: analytic moments and printed rounding",
            criterion_1,
            Duration::from_secs(1),
        ),
        (
            "2PL parameter recovery at 500 x 60",
            criterion_2,
            Duration::from_secs(60),
        ),
        (
            "ICC duality, monotonicity and marginal gradients",
            criterion_3,
            Duration::from_secs(10),
        ),
        ("generality semantics", criterion_4, Duration::from_secs(10)),
        (
            "negative-discrimination sign pattern",
            criterion_5,
            Duration::from_secs(30),
        ),
        (
            "population-structure correlations",
            criterion_6,
            Duration::from_secs(30),
        ),
        (
            "determinism and seed consistency",
            criterion_7,
            Duration::from_secs(120),
        ),
        (
            "end-to-end smoke run",
            criterion_8,
            Duration::from_secs(120),
        ),
    ];
    let mut failed = 0;
    for (k, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(d) if took > *budget => Err(format!("{d}; took {took:.2?}, budget {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail} [{took:.2?}]", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail} [{took:.2?}]", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
