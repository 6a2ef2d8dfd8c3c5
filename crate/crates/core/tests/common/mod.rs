//! Oracles written independently of the library code paths they check.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tisim::mac::EdcaParams;

/// Hand calculation of MCS-9 airtime: 256-QAM (8 bit) at rate 5/6, so one
/// 13.6 µs symbol carries `tones * 40 / 6` bits. Count symbols by stepping
/// until the PSDU (16 service + 8/byte + 6 tail bits) fits.
pub fn hand_airtime_ns(bytes: u64, tones: u64) -> u64 {
    let need_bits_x6 = (16 + 8 * bytes + 6) * 6;
    let per_symbol_x6 = tones * 40;
    let mut lo = 0u64;
    let mut hi = 1u64;
    while hi * per_symbol_x6 < need_bits_x6 {
        hi *= 2;
    }
    // Smallest n with n * per_symbol >= need, by bisection.
    while lo < hi {
        let mid = (lo + hi) / 2;
        if mid * per_symbol_x6 >= need_bits_x6 {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    48_000 + lo * 13_600
}

/// bit/s, truncated: tones * 40/6 bits per 13.6 µs.
pub fn hand_rate_bps(tones: u64) -> u64 {
    // tones*40/6 / 13.6e-6 = tones * 40e7 / 816
    (tones as u128 * 400_000_000 / 816) as u64
}

/// Random (payload bytes, tones) pairs over the tone plan and payloads up
/// to 60 kB, with a few at the edges.
pub fn random_pairs(n: usize, seed: u64) -> Vec<(u64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tones = [980u64, 1960, 3920];
    let mut v: Vec<(u64, u64)> = vec![(0, 980), (1, 3920), (2544, 980), (2544 * 12, 1960)];
    while v.len() < n {
        v.push((rng.gen_range(0..60_000), tones[rng.gen_range(0..3)]));
    }
    v
}

/// Per-attempt collision probability of `n` saturated contenders, from
/// the stationary distribution of the joint backoff chain. A device's state
/// is (counter, stage); stage 0 draws from [0, cw_min], stage 1 from
/// [0, cw_max]. Each step the minimum counter fires; the others keep the
/// difference. The retry limit is ignored (its effect is O(p^8)).
pub fn collision_oracle(n: usize, e: &EdcaParams) -> f64 {
    assert!(e.cw_max == e.escalate(e.cw_min), "two-stage chain only");
    let cw = [e.cw_min as usize, e.cw_max as usize];
    let per_dev: Vec<(usize, usize)> = (0..2)
        .flat_map(|s| (0..=cw[s]).map(move |c| (c, s)))
        .collect();
    let m = per_dev.len();
    let states = m.pow(n as u32);
    let decode = |mut i: usize| -> Vec<(usize, usize)> {
        (0..n)
            .map(|_| {
                let d = per_dev[i % m];
                i /= m;
                d
            })
            .collect()
    };
    let index_of = |(c, s): (usize, usize)| per_dev.iter().position(|&x| x == (c, s)).unwrap();
    let encode = |v: &[(usize, usize)]| v.iter().rev().fold(0usize, |acc, &d| acc * m + index_of(d));

    // Sparse transitions: (to, prob), plus per-state attempts/collided.
    let mut trans: Vec<Vec<(usize, f64)>> = Vec::with_capacity(states);
    let mut att = vec![0.0; states];
    let mut col = vec![0.0; states];
    for i in 0..states {
        let st = decode(i);
        let k = st.iter().map(|d| d.0).min().unwrap();
        let fired: Vec<usize> = (0..n).filter(|&j| st[j].0 == k).collect();
        let stage = if fired.len() == 1 { 0 } else { 1 };
        att[i] = fired.len() as f64;
        col[i] = if fired.len() > 1 { fired.len() as f64 } else { 0.0 };
        // Enumerate fresh draws of the fired devices.
        let mut out = Vec::new();
        let draws = cw[stage] + 1;
        let combos = draws.pow(fired.len() as u32);
        let p = 1.0 / combos as f64;
        for mut c in 0..combos {
            let mut next = st.clone();
            for j in 0..n {
                if fired.contains(&j) {
                    next[j] = (c % draws, stage);
                    c /= draws;
                } else {
                    next[j] = (st[j].0 - k, st[j].1);
                }
            }
            out.push((encode(&next), p));
        }
        trans.push(out);
    }
    let mut pi = vec![1.0 / states as f64; states];
    for _ in 0..5000 {
        let mut nx = vec![0.0; states];
        for (i, t) in trans.iter().enumerate() {
            for &(j, p) in t {
                nx[j] += pi[i] * p;
            }
        }
        let diff: f64 = nx.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = nx;
        if diff < 1e-14 {
            break;
        }
    }
    let a: f64 = pi.iter().zip(&att).map(|(p, x)| p * x).sum();
    let c: f64 = pi.iter().zip(&col).map(|(p, x)| p * x).sum();
    c / a
}

/// RMS of `A sin(2π f t) - A sin(2π f (t - d))` over one period, by
/// composite Simpson quadrature.
pub fn delayed_sine_rmse_quadrature(a: f64, f: f64, d: f64) -> f64 {
    let period = 1.0 / f;
    let n = 200_000; // even
    let h = period / n as f64;
    let g = |t: f64| {
        let w = 2.0 * std::f64::consts::PI * f;
        let e = a * (w * t).sin() - a * (w * (t - d)).sin();
        e * e
    };
    let mut s = g(0.0) + g(period);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * g(i as f64 * h);
    }
    (s * h / 3.0 / period).sqrt()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
