//! Property checks shared by the integration tests and the acceptance run.
//!
//! Every check is deterministic (fixed seeds) and returns a one-line summary
//! on success or a description of the first violation.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::f64::consts::PI;

use ccs_core::channel::{synthesize_frame, FadingModelI, FadingModelII};
use ccs_core::cs_decoder::{best_k_term, kkt_residual, lasso_solve, objective, universal_lambda};
use ccs_core::seed;
use ccs_core::simulator::{compute_stats, with_threads};
use ccs_core::tree_code::{check_parity, extract_message, tree_decode, tree_encode};
use ccs_core::{
    Candidate, Codebook, CodedBlock, Complex64, DeviceRealization, Experiment, ExperimentConfig, FadeMetric,
    FadePruneConfig, FadingSpec, LassoConfig, ParityGenerators, RootPolicy, ShiftedDictionary,
    SlotCandidateList, TreeCodeParams, TreeDecoderConfig,
};
use rand::seq::SliceRandom;
use rand::Rng;

pub type Check = Result<String, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn random_complex<R: Rng>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// Tree-code profiles used throughout the checks.
pub fn profiles() -> Vec<TreeCodeParams> {
    vec![
        TreeCodeParams::new(6, 10, vec![0, 0, 0, 2, 10, 10], 38).unwrap(),
        TreeCodeParams::new(10, 11, vec![0, 5, 7, 7, 7, 7, 7, 10, 11, 11], 38).unwrap(),
        TreeCodeParams::new(4, 12, vec![0, 0, 0, 10], 38).unwrap(),
        TreeCodeParams::new(3, 4, vec![0, 0, 4], 8).unwrap(),
    ]
}

// ---------------------------------------------------------------------------
// Dictionary

/// The shifted dictionary applied to a one-hot vector reproduces the delayed,
/// zero-padded DFT codeword computed from its definition, and a superposition
/// of delayed device transmissions equals the dictionary applied to the
/// corresponding sparse coefficient vector. Exhaustive over `J ≤ 4`, `T ≤ 3`.
pub fn dictionary_equivalence() -> Check {
    let mut pairs = 0usize;
    let mut worst = 0.0f64;
    for j in 1..=4u32 {
        let size = 1usize << j;
        for t in 0..=3usize {
            let mut actives = vec![1, (size / 2).max(1), size];
            actives.dedup();
            for active in actives {
                let slot_len = active + t;
                let cb = Codebook::build(j, slot_len, t, 100 * j as u64 + 10 * t as u64 + active as u64)
                    .map_err(err)?;
                let scale = (slot_len as f64 / active as f64).sqrt();
                let dict = ShiftedDictionary::new(cb.clone());
                let mut ws = dict.workspace();

                for c in 0..size {
                    for tau in 0..=t {
                        let mut x = vec![ZERO; dict.width()];
                        x[dict.flat_index(c, tau)] = Complex64::new(1.0, 0.0);
                        let mut y = vec![ZERO; slot_len];
                        dict.apply(&x, &mut y, &mut ws);
                        let mut energy = 0.0;
                        for (row, got) in y.iter().enumerate() {
                            let expected = if row >= tau && row - tau < active {
                                let k = cb.rows()[row - tau] * c;
                                Complex64::from_polar(scale, -2.0 * PI * k as f64 / size as f64)
                            } else {
                                ZERO
                            };
                            worst = worst.max((got - expected).norm());
                            energy += got.norm_sqr();
                        }
                        worst = worst.max((energy - slot_len as f64).abs() / slot_len as f64);
                        pairs += 1;
                    }
                }

                // Superposition of devices against the sparse representation.
                let mut rng = seed::rng(7, &[j as u64, t as u64, active as u64]);
                let power = 2.5;
                let devices: Vec<DeviceRealization> = (0..3)
                    .map(|i| DeviceRealization {
                        identity: i,
                        h: random_complex(&mut rng),
                        tau: rng.random_range(0..=t),
                    })
                    .collect();
                let blocks: Vec<CodedBlock> = (0..3)
                    .map(|_| CodedBlock(vec![rng.random_range(0..size as u32)]))
                    .collect();
                let frame = synthesize_frame(&devices, &blocks, &[cb.clone()], 1, power, false, &mut rng)
                    .map_err(err)?;
                let mut x = vec![ZERO; dict.width()];
                for (d, b) in devices.iter().zip(&blocks) {
                    x[dict.flat_index(b.0[0] as usize, d.tau)] += d.h * power.sqrt();
                }
                let mut y = vec![ZERO; slot_len];
                dict.apply(&x, &mut y, &mut ws);
                for (a, b) in y.iter().zip(frame.slot(0)) {
                    worst = worst.max((a - b).norm());
                }

                // Adjoint consistency: <S̃x, v> = <x, S̃ᴴv>.
                let x: Vec<Complex64> = (0..dict.width()).map(|_| random_complex(&mut rng)).collect();
                let v: Vec<Complex64> = (0..slot_len).map(|_| random_complex(&mut rng)).collect();
                let mut ax = vec![ZERO; slot_len];
                let mut ahv = vec![ZERO; dict.width()];
                dict.apply(&x, &mut ax, &mut ws);
                dict.adjoint(&v, &mut ahv, &mut ws);
                let lhs: Complex64 = ax.iter().zip(&v).map(|(a, b)| a * b.conj()).sum();
                let rhs: Complex64 = x.iter().zip(&ahv).map(|(a, b)| a * b.conj()).sum();
                worst = worst.max((lhs - rhs).norm() / (1.0 + lhs.norm()));
            }
        }
    }
    if worst > 1e-9 {
        return Err(format!(
            "max deviation {worst:.3e} over {pairs} (column, delay) pairs"
        ));
    }
    Ok(format!(
        "{pairs} (column, delay) pairs, max deviation {worst:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// Tree code

/// Encode then decode a single transmitted path: the message comes back.
pub fn tree_roundtrip(count: usize) -> Check {
    let profiles = profiles();
    let mut rng = seed::rng(11, &[]);
    let cfg = TreeDecoderConfig::default();
    for i in 0..count {
        let params = &profiles[i % profiles.len()];
        let gens = ParityGenerators::derive(params, 3 + (i % 5) as u64);
        let b = params.message_bits();
        let message = rng.random::<u64>() & ((1u64 << b) - 1);
        let block = tree_encode(message, params, &gens).map_err(err)?;
        if extract_message(&block.0, params) != message {
            return Err(format!("extract_message failed for {message:#x}"));
        }
        let lists: Vec<SlotCandidateList> = block
            .0
            .iter()
            .enumerate()
            .map(|(slot, &v)| {
                let c = Candidate {
                    value: v,
                    delay: 0,
                    coeff: Complex64::new(1.0, 0.0),
                };
                SlotCandidateList::new(slot, vec![c])
            })
            .collect();
        let out = tree_decode(&lists, params, &gens, &cfg).map_err(err)?;
        if out.len() != 1 || out[0].message != message {
            return Err(format!("roundtrip of {message:#x} produced {out:?}"));
        }
    }
    Ok(format!("{count} messages over {} profiles", profiles.len()))
}

/// SplitMix64, written out from its published definition.
fn reference_splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    reference_finalizer(*state)
}

fn reference_finalizer(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Parity generators for `n = 3, J = 4, l = [0, 0, 4], seed 42` against an
/// independent reference, then exhaustive encoding of all 256 messages and
/// single-bit-flip detection against the reference matrix.
pub fn parity_reference() -> Check {
    let params = TreeCodeParams::new(3, 4, vec![0, 0, 4], 8).unwrap();
    let seed_value = 42u64;
    let gens = ParityGenerators::derive(&params, seed_value);
    if !gens.stage(0).is_empty() || !gens.stage(1).is_empty() {
        return Err("stages without parity carry rows".into());
    }
    let mut state = reference_finalizer(seed_value) ^ 2;
    let reference: Vec<u64> = (0..4).map(|_| reference_splitmix(&mut state) & 0xFF).collect();
    if gens.stage(2) != reference.as_slice() {
        return Err(format!(
            "stage 2 rows {:?} != reference {reference:?}",
            gens.stage(2)
        ));
    }

    let parity_of = |prior: u64| -> u32 {
        reference
            .iter()
            .fold(0u32, |acc, &row| (acc << 1) | ((row & prior).count_ones() & 1))
    };
    let mut flips = 0usize;
    for message in 0u64..256 {
        let block = tree_encode(message, &params, &gens).map_err(err)?;
        let expected = vec![(message >> 4) as u32, (message & 0xF) as u32, parity_of(message)];
        if block.0 != expected {
            return Err(format!("message {message:#x}: {:?} != {expected:?}", block.0));
        }
        // Flip every coded bit; stage 2 must fail exactly when the reference
        // parity of the corrupted prefix disagrees with the corrupted parity.
        for slot in 0..3 {
            for bit in 0..4 {
                let mut bad = block.0.clone();
                bad[slot] ^= 1 << bit;
                let prior = ((bad[0] as u64) << 4) | bad[1] as u64;
                let should_fail = parity_of(prior) != bad[2];
                let fails = !check_parity(&bad, 2, &params, &gens);
                if fails != should_fail {
                    return Err(format!(
                        "message {message:#x}, slot {slot}, bit {bit}: detection {fails}"
                    ));
                }
                if slot == 2 && !fails {
                    return Err(format!("parity bit flip undetected for {message:#x}"));
                }
                flips += 1;
            }
        }
    }
    Ok(format!(
        "generator rows match; 256 encodings and {flips} bit flips checked"
    ))
}

/// All messages reachable through the lists, found by enumerating every
/// index tuple and re-encoding. Returns `(all survivors, unique-root set)`.
fn oracle_paths(
    lists: &[SlotCandidateList],
    params: &TreeCodeParams,
    gens: &ParityGenerators,
) -> (BTreeSet<u64>, BTreeSet<u64>) {
    let n = lists.len();
    let mut all = BTreeSet::new();
    let mut unique = BTreeSet::new();
    for root in 0..lists[0].entries.len() {
        let mut found = Vec::new();
        let mut idx = vec![0usize; n];
        idx[0] = root;
        loop {
            let values: Vec<u32> = (0..n).map(|s| lists[s].entries[idx[s]].value).collect();
            let message = extract_message(&values, params);
            if tree_encode(message, params, gens).unwrap().0 == values {
                found.push(message);
            }
            // Odometer over slots 1..n.
            let mut s = n - 1;
            loop {
                if s == 0 {
                    break;
                }
                idx[s] += 1;
                if idx[s] < lists[s].entries.len() {
                    break;
                }
                idx[s] = 0;
                s -= 1;
            }
            if s == 0 {
                break;
            }
        }
        if found.len() == 1 {
            unique.insert(found[0]);
        }
        all.extend(found);
    }
    (all, unique)
}

/// Random instances with `K ≤ 3` devices plus junk candidates under weak
/// parity; the decoder must return exactly what brute-force enumeration finds.
pub fn tree_decoder_oracle(instances: usize) -> Check {
    let params = TreeCodeParams::new(3, 4, vec![0, 2, 4], 6).unwrap();
    let gens = ParityGenerators::derive(&params, 5);
    let mut rng = seed::rng(13, &[]);
    let mut nonempty = 0;
    for inst in 0..instances {
        let k = rng.random_range(1..=3);
        let messages: Vec<u64> = (0..k).map(|_| rng.random_range(0..64)).collect();
        let blocks: Vec<CodedBlock> = messages
            .iter()
            .map(|&m| tree_encode(m, &params, &gens).unwrap())
            .collect();
        let lists: Vec<SlotCandidateList> = (0..3)
            .map(|slot| {
                let mut values: Vec<u32> = blocks.iter().map(|b| b.0[slot]).collect();
                for _ in 0..rng.random_range(0..=2) {
                    values.push(rng.random_range(0..16));
                }
                values.sort_unstable();
                values.dedup();
                values.shuffle(&mut rng);
                let entries = values
                    .into_iter()
                    .map(|value| Candidate {
                        value,
                        delay: 0,
                        coeff: random_complex(&mut rng),
                    })
                    .collect();
                SlotCandidateList::new(slot, entries)
            })
            .collect();
        let (all, unique) = oracle_paths(&lists, &params, &gens);
        for (policy, expected) in [
            (RootPolicy::AllSurvivors, &all),
            (RootPolicy::UniqueOnly, &unique),
        ] {
            let cfg = TreeDecoderConfig {
                root_policy: policy,
                ..TreeDecoderConfig::default()
            };
            let got: BTreeSet<u64> = tree_decode(&lists, &params, &gens, &cfg)
                .map_err(err)?
                .iter()
                .map(|d| d.message)
                .collect();
            if &got != expected {
                return Err(format!(
                    "instance {inst} ({policy:?}): decoder {got:?} != oracle {expected:?}"
                ));
            }
        }
        if messages.iter().any(|m| !all.contains(m)) {
            return Err(format!("instance {inst}: a transmitted message is unreachable"));
        }
        nonempty += usize::from(!unique.is_empty());
    }
    Ok(format!(
        "{instances} instances ({nonempty} with uniquely decodable roots)"
    ))
}

/// Raising the fade tolerance never removes a decoded message when every
/// survivor is kept and no outliers are allowed.
pub fn fade_tolerance_monotone(instances: usize) -> Check {
    let params = TreeCodeParams::new(3, 4, vec![0, 0, 4], 8).unwrap();
    let gens = ParityGenerators::derive(&params, 9);
    let mut rng = seed::rng(17, &[]);
    let tolerances = [0.05, 0.2, 0.5, 1.0, 4.0];
    for inst in 0..instances {
        let lists: Vec<SlotCandidateList> = (0..3)
            .map(|slot| {
                let entries = (0..4)
                    .map(|_| Candidate {
                        value: rng.random_range(0..16),
                        delay: 0,
                        coeff: random_complex(&mut rng) * 2.0,
                    })
                    .collect();
                SlotCandidateList::new(slot, entries)
            })
            .collect();
        for metric in [FadeMetric::Magnitude, FadeMetric::Complex] {
            let mut previous: Option<BTreeSet<u64>> = None;
            for &tol in &tolerances {
                let cfg = TreeDecoderConfig {
                    fade: FadePruneConfig {
                        enabled: true,
                        rel_tolerance: tol,
                        metric,
                        ..FadePruneConfig::default()
                    },
                    root_policy: RootPolicy::AllSurvivors,
                    ..TreeDecoderConfig::default()
                };
                let got: BTreeSet<u64> = tree_decode(&lists, &params, &gens, &cfg)
                    .map_err(err)?
                    .iter()
                    .map(|d| d.message)
                    .collect();
                if let Some(prev) = &previous {
                    if !prev.is_subset(&got) {
                        return Err(format!(
                            "instance {inst}, {metric:?}: tolerance {tol} lost messages"
                        ));
                    }
                }
                previous = Some(got);
            }
        }
    }
    Ok(format!("{instances} instances, tolerances {tolerances:?}"))
}

// ---------------------------------------------------------------------------
// LASSO

fn random_instance(inst: u64) -> (ShiftedDictionary, Vec<Complex64>, f64) {
    let mut rng = seed::rng(23, &[inst]);
    let j = rng.random_range(3..=6u32);
    let t = rng.random_range(0..=3usize);
    let active = rng.random_range(4..=(1usize << j).min(24));
    let cb = Codebook::build(j, active + t, t, inst).unwrap();
    let dict = ShiftedDictionary::new(cb);
    let mut x = vec![ZERO; dict.width()];
    for _ in 0..rng.random_range(1..=3) {
        let i = rng.random_range(0..dict.width());
        x[i] = random_complex(&mut rng) * 3.0;
    }
    let mut y = vec![ZERO; dict.num_rows()];
    dict.apply(&x, &mut y, &mut dict.workspace());
    for v in &mut y {
        *v += random_complex(&mut rng) * 0.5;
    }
    let lambda = universal_lambda(&dict, 0.5, rng.random_range(0.3..1.5));
    (dict, y, lambda)
}

/// On 100 random instances the solver converges with KKT residual at most
/// `10·tol·λ`, and no random perturbation of the solution lowers the
/// objective by more than the solver tolerance allows.
pub fn lasso_kkt(instances: usize) -> Check {
    let config = LassoConfig {
        tol: 1e-6,
        max_iters: 50_000,
        ..LassoConfig::default()
    };
    let mut worst_ratio = 0.0f64;
    let mut probes = 0;
    for inst in 0..instances as u64 {
        let (dict, y, lambda) = random_instance(inst);
        let est = lasso_solve(&dict, &y, lambda, &config).map_err(err)?;
        if !est.converged {
            return Err(format!(
                "instance {inst}: no convergence in {} iterations",
                est.iterations
            ));
        }
        let kkt = kkt_residual(&dict, &y, &est.coefficients, lambda);
        let ratio = kkt / (config.tol * lambda);
        worst_ratio = worst_ratio.max(ratio);
        if ratio > 10.0 {
            return Err(format!("instance {inst}: KKT residual {kkt:.3e} > 10·tol·λ"));
        }
        let f0 = objective(&dict, &y, &est.coefficients, lambda);
        let mut rng = seed::rng(29, &[inst]);
        for _ in 0..20 {
            let eps = 10f64.powi(rng.random_range(-4..=-1));
            let mut x = est.coefficients.clone();
            for _ in 0..3 {
                let i = rng.random_range(0..x.len());
                x[i] += random_complex(&mut rng) * eps;
            }
            let f = objective(&dict, &y, &x, lambda);
            if f < f0 - 1e-6 * f0.max(1.0) {
                return Err(format!(
                    "instance {inst}: perturbation lowers objective {f0} -> {f}"
                ));
            }
            probes += 1;
        }
    }
    Ok(format!(
        "{instances} instances, worst KKT residual {worst_ratio:.2}·tol·λ, {probes} perturbation probes"
    ))
}

/// With a full DFT codebook and no delays the columns are orthogonal, so the
/// LASSO solution is soft-thresholded correlation, coordinate by coordinate.
pub fn orthogonal_closed_form() -> Check {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for j in 2..=6u32 {
        let size = 1usize << j;
        let dict = ShiftedDictionary::new(Codebook::build(j, size, 0, j as u64).map_err(err)?);
        let mut ws = dict.workspace();
        let mut rng = seed::rng(31, &[j as u64]);
        for _ in 0..5 {
            let y: Vec<Complex64> = (0..size).map(|_| random_complex(&mut rng) * 4.0).collect();
            let mut corr = vec![ZERO; size];
            dict.adjoint(&y, &mut corr, &mut ws);
            let lambda = rng.random_range(0.2..3.0) * (size as f64).sqrt();
            let config = LassoConfig {
                tol: 1e-10,
                max_iters: 10_000,
                ..LassoConfig::default()
            };
            let est = lasso_solve(&dict, &y, lambda, &config).map_err(err)?;
            let n = size as f64;
            for (c, got) in corr.iter().zip(&est.coefficients) {
                let mag = c.norm();
                let expected = if mag <= lambda {
                    ZERO
                } else {
                    c * ((mag - lambda) / (mag * n))
                };
                worst = worst.max((got - expected).norm());
            }
            cases += 1;
        }
    }
    if worst > 1e-6 {
        return Err(format!("max deviation {worst:.3e} from closed form"));
    }
    Ok(format!("{cases} instances, max deviation {worst:.1e}"))
}

/// `best_k_term` is an optimal `K`-term approximation (checked against all
/// supports) and breaks magnitude ties toward lower indices.
pub fn best_k_exhaustive(instances: usize) -> Check {
    let mut rng = seed::rng(37, &[]);
    let mut checked = 0;
    for inst in 0..instances {
        let len = rng.random_range(1..=8usize);
        // Small integer magnitudes so ties are common; zeros too.
        let x: Vec<Complex64> = (0..len)
            .map(|_| {
                let mag = rng.random_range(0..4) as f64;
                Complex64::from_polar(mag, rng.random_range(0..4) as f64 * PI / 2.0)
            })
            .collect();
        for k in 0..=len {
            let z = best_k_term(&x, k);
            let support: Vec<usize> = (0..len).filter(|&i| z[i] != ZERO).collect();
            if support.len() > k || support.iter().any(|&i| z[i] != x[i]) {
                return Err(format!("instance {inst}, k {k}: not a {k}-term restriction of x"));
            }
            let residual = |keep: u32| -> f64 {
                (0..len)
                    .filter(|&i| keep & (1 << i) == 0)
                    .map(|i| x[i].norm_sqr())
                    .sum()
            };
            let best = (0u32..1 << len)
                .filter(|s| s.count_ones() as usize <= k)
                .map(residual)
                .fold(f64::INFINITY, f64::min);
            let mask = support.iter().fold(0u32, |m, &i| m | (1 << i));
            if (residual(mask) - best).abs() > 1e-9 {
                return Err(format!(
                    "instance {inst}, k {k}: residual {} > optimum {best}",
                    residual(mask)
                ));
            }
            // Tie-breaking: a kept entry never loses to an equal-magnitude
            // entry at a lower index.
            for &i in &support {
                if (0..i).any(|p| !support.contains(&p) && x[p] != ZERO && x[p].norm() >= x[i].norm()) {
                    return Err(format!(
                        "instance {inst}, k {k}: tie not broken toward lower index"
                    ));
                }
            }
            checked += 1;
        }
    }
    Ok(format!("{instances} vectors, {checked} (vector, K) pairs"))
}

// ---------------------------------------------------------------------------
// Channel

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Fading moments against closed forms: sample means within 3 standard
/// errors of the truth (5% for the infinite-variance α = 2 Pareto).
pub fn fading_moments(samples: usize) -> Check {
    let mut rng = seed::rng(41, &[]);
    let mut report = Vec::new();
    let within = |name: &str, xs: &[f64], truth: f64, report: &mut Vec<String>| -> Result<(), String> {
        let (mean, se) = mean_and_se(xs);
        let z = (mean - truth).abs() / se;
        if z > 3.0 {
            return Err(format!(
                "{name}: mean {mean:.5} vs {truth:.5} is {z:.2} standard errors off"
            ));
        }
        report.push(format!("{name} {z:.1}σ"));
        Ok(())
    };

    let model = FadingModelI::new(1.0, 1.0).map_err(err)?;
    let h: Vec<Complex64> = (0..samples).map(|_| model.sample(&mut rng)).collect();
    let mags: Vec<f64> = h.iter().map(|v| v.norm()).collect();
    if mags.iter().any(|&m| !(1.0..=2.0).contains(&m)) {
        return Err("Model I magnitude outside [h, 2h]".into());
    }
    within("|h|", &mags, 1.5, &mut report)?;
    within(
        "|h|²",
        &h.iter().map(|v| v.norm_sqr()).collect::<Vec<_>>(),
        7.0 / 3.0,
        &mut report,
    )?;
    within(
        "Re h",
        &h.iter().map(|v| v.re).collect::<Vec<_>>(),
        0.0,
        &mut report,
    )?;
    within(
        "Im h",
        &h.iter().map(|v| v.im).collect::<Vec<_>>(),
        0.0,
        &mut report,
    )?;

    let eta = 0.05;
    for alpha in [2.0, 3.0, 10.0, 20.0] {
        let model = FadingModelII::new(eta, alpha, 1.0).map_err(err)?;
        let g: Vec<f64> = (0..samples).map(|_| model.sample_gain(&mut rng)).collect();
        if g.iter().any(|&v| v < eta) {
            return Err(format!("α = {alpha}: gain below η"));
        }
        let truth = alpha * eta / (alpha - 1.0);
        if alpha > 2.0 {
            within(&format!("E g (α={alpha})"), &g, truth, &mut report)?;
        } else {
            let mean = g.iter().sum::<f64>() / g.len() as f64;
            let rel = (mean - truth).abs() / truth;
            if rel > 0.05 {
                return Err(format!("α = 2: mean gain {mean:.5} vs {truth:.5}"));
            }
            report.push(format!("E g (α=2) {:.1}%", 100.0 * rel));
        }
    }
    Ok(format!("{samples} samples: {}", report.join(", ")))
}

// ---------------------------------------------------------------------------
// Harness

/// A small K = 10 experiment used for determinism checks.
pub fn small_experiment() -> ExperimentConfig {
    ExperimentConfig {
        tree: TreeCodeParams::new(6, 10, vec![0, 0, 0, 2, 10, 10], 38).unwrap(),
        frame_len: 720,
        max_delay: 4,
        active_devices: 10,
        fading: FadingSpec::ModelI { h_lower: 1.0 },
        snr_db: vec![-4.0, 0.0],
        trials: 16,
        seed: 77,
        lasso: LassoConfig::default(),
        decoder: TreeDecoderConfig {
            fade: FadePruneConfig {
                enabled: true,
                rel_tolerance: 0.5,
                check_delay: true,
                metric: FadeMetric::Complex,
                max_outliers: 1,
            },
            root_policy: RootPolicy::AllSurvivors,
            ..TreeDecoderConfig::default()
        },
        per_slot_codebooks: false,
        noise: true,
    }
}

/// Trial outcomes and statistics are bit-identical on 1, 4 and 8 workers.
pub fn worker_determinism() -> Check {
    let exp = Experiment::new(small_experiment()).map_err(err)?;
    let run = |threads: usize| {
        with_threads(threads, || {
            (0..exp.config().snr_db.len())
                .map(|i| exp.run_point(i))
                .collect::<ccs_core::Result<Vec<_>>>()
        })
    };
    let reference = run(1).map_err(err)?;
    for threads in [4, 8] {
        let other = run(threads).map_err(err)?;
        for (a, b) in reference.iter().flatten().zip(other.iter().flatten()) {
            if !a.same_outcome(b) {
                return Err(format!("{threads} workers changed a trial outcome"));
            }
        }
        for (i, (a, b)) in reference.iter().zip(&other).enumerate() {
            let snr = exp.config().snr_db[i];
            let (mut sa, mut sb) = (
                compute_stats(snr, a).map_err(err)?,
                compute_stats(snr, b).map_err(err)?,
            );
            sa.mean_decode_ms = 0.0;
            sb.mean_decode_ms = 0.0;
            if sa != sb {
                return Err(format!("{threads} workers changed statistics at {snr} dB"));
            }
        }
    }
    let trials: usize = reference.iter().map(Vec::len).sum();
    Ok(format!("{trials} trials identical on 1, 4 and 8 workers"))
}
