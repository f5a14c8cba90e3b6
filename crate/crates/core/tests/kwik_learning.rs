use edgecache::data::generate_quasi_stream;
use edgecache::domain::ZipfSpec;
use edgecache::kwik::{kwik_step, KwikConfig, KwikOutput, KwikState};

fn run(stream: &[Vec<f64>], cfg: KwikConfig) -> Vec<KwikOutput> {
    let mut s = KwikState::new(stream[0].len(), cfg).unwrap();
    stream.iter().map(|obs| kwik_step(&mut s, obs).unwrap()).collect()
}

/// `x_t = Σ_k c_k x_{t−d+k}` from `d` seed vectors, `c` oldest lag first.
fn ar_stream(seeds: &[Vec<f64>], c: &[f64], len: usize) -> Vec<Vec<f64>> {
    let d = c.len();
    let mut out = seeds.to_vec();
    while out.len() < len {
        let t = out.len();
        let next = (0..seeds[0].len()).map(|i| (0..d).map(|k| c[k] * out[t - d + k][i]).sum()).collect();
        out.push(next);
    }
    out
}

#[test]
fn predictions_resume_and_match_the_ar_continuation() {
    // period-three rotation keeps lag vectors nondegenerate forever
    let seeds = vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.7, 0.2], vec![0.2, 0.1, 0.7]];
    let stream = ar_stream(&seeds, &[1.0, 0.0, 0.0], 60);
    let outs = run(&stream, KwikConfig::new(3).unwrap());
    let first = outs.iter().position(KwikOutput::all_known).expect("learner must start predicting");
    let abstained = outs[..first].iter().filter(|o| o.abstentions() > 0).count();
    assert!(abstained >= 3, "only {abstained} abstaining slots before {first}");
    for (t, out) in outs.iter().enumerate().take(stream.len() - 1).skip(first) {
        for (file, v) in out.values.iter().enumerate() {
            if let Some(v) = v {
                assert!((v - stream[t + 1][file]).abs() <= 1e-6, "slot {t} file {file}: {v}");
            }
        }
    }
}

#[test]
fn emitted_coefficients_sum_to_one() {
    for seed in 0..5 {
        let s = generate_quasi_stream(4, 60, 3, ZipfSpec::new(4, 1.0).unwrap(), seed).unwrap();
        let stream: Vec<Vec<f64>> = s.profiles.iter().map(|p| p.as_slice().to_vec()).collect();
        for out in run(&stream, KwikConfig::new(4).unwrap()) {
            for c in out.coefficients.iter().flatten() {
                assert!((c.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn quasi_stream_is_recovered_within_blocks() {
    for seed in 0..5 {
        let s = generate_quasi_stream(4, 200, 3, ZipfSpec::new(3, 1.5).unwrap(), seed).unwrap();
        let stream: Vec<Vec<f64>> = s.profiles.iter().map(|p| p.as_slice().to_vec()).collect();
        let outs = run(&stream, KwikConfig::new(4).unwrap());
        for b in 0..s.n_blocks() {
            let block = s.block(b);
            for t in block.start + 50..block.end {
                let out = &outs[t - 1];
                if let Some(err) = slot_error(out, &stream[t]) {
                    assert!(err <= 1e-6, "seed {seed} slot {t}: {err}");
                }
            }
        }
    }
}

fn slot_error(out: &KwikOutput, truth: &[f64]) -> Option<f64> {
    out.all_known().then(|| out.values.iter().zip(truth).map(|(v, p)| (v.unwrap() - p).powi(2)).sum())
}

#[test]
fn abstentions_rise_at_a_block_switch_and_decay() {
    // two files; a period-two block followed by a period-three block
    let a = vec![0.9, 0.1];
    let b = vec![0.1, 0.9];
    let c = vec![0.5, 0.5];
    let block_len = 60;
    let mut stream = ar_stream(&[a.clone(), b.clone(), a.clone()], &[0.0, 1.0, 0.0], block_len);
    let tail = ar_stream(&[c, a, b], &[1.0, 0.0, 0.0], block_len);
    stream.extend(tail);
    let cfg = KwikConfig { alpha_q: 0.5, alpha_v: 0.1, ..KwikConfig::new(3).unwrap() };
    let outs = run(&stream, cfg);
    let count = |r: std::ops::Range<usize>| outs[r].iter().map(KwikOutput::abstentions).sum::<usize>();
    let settled_first = count(block_len - 20..block_len - 1);
    let boundary = count(block_len - 1..block_len + 5);
    let settled_second = count(2 * block_len - 20..2 * block_len - 1);
    assert_eq!(settled_first, 0);
    assert!(boundary > 0, "no abstention at the switch");
    assert_eq!(settled_second, 0);
}
