use ssvf::cache::AddressMap;
use ssvf::workload::{
    self, AccessModel, Expander, Origin, Randomness, ReqOp, Request, SyntheticSpec, BLOCK_BYTES,
};
use ssvf::Error;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pearson statistic of `samples` against an exponential with `mean`,
/// over `bins` equiprobable bins.
fn exp_chi_square(samples: &[f64], mean: f64, bins: usize) -> f64 {
    let mut counts = vec![0f64; bins];
    for &x in samples {
        let u = 1.0 - (-x / mean).exp();
        counts[((u * bins as f64) as usize).min(bins - 1)] += 1.0;
    }
    let expected = samples.len() as f64 / bins as f64;
    counts.iter().map(|c| (c - expected).powi(2) / expected).sum()
}

#[test]
fn inter_arrival_gaps_are_exponential() {
    let spec = SyntheticSpec::default();
    let reqs = workload::gen_synthetic(&spec, 11, 50_000).unwrap();
    let mut prev = 0.0;
    let gaps: Vec<f64> = reqs
        .iter()
        .map(|r| {
            let g = (r.timestamp - prev) * 1e6;
            prev = r.timestamp;
            g
        })
        .collect();
    let stat = exp_chi_square(&gaps, spec.inter_arrival_us, 20);
    let p = 1.0 - ChiSquared::new(19.0).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi-square {stat:.1}, p={p:.2e}");
}

#[test]
fn write_fraction_matches() {
    let spec = SyntheticSpec { write_fraction: 0.35, ..Default::default() };
    let reqs = workload::gen_synthetic(&spec, 5, 40_000).unwrap();
    let writes = reqs.iter().filter(|r| r.op == ReqOp::Write).count() as f64;
    let n = reqs.len() as f64;
    let sd = (n * 0.35 * 0.65).sqrt();
    assert!((writes - n * 0.35).abs() < 4.0 * sd, "{writes} writes of {n}");
}

#[test]
fn sizes_are_whole_blocks_and_in_range() {
    let spec = SyntheticSpec { storage_blocks: 1 << 16, size_kb: 64.0, ..Default::default() };
    for randomness in [Randomness::Random, Randomness::Sequential] {
        let reqs = workload::gen_synthetic(&SyntheticSpec { randomness, ..spec }, 2, 20_000).unwrap();
        for r in &reqs {
            assert_eq!(r.size_bytes % BLOCK_BYTES, 0);
            assert!(r.size_bytes >= BLOCK_BYTES);
            assert!(r.lba + r.size_bytes / BLOCK_BYTES <= spec.storage_blocks);
        }
        assert!(reqs.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    }
}

#[test]
fn seeds_reproduce_and_differ() {
    let spec = SyntheticSpec::default();
    let a = workload::gen_synthetic(&spec, 1, 1000).unwrap();
    assert_eq!(a, workload::gen_synthetic(&spec, 1, 1000).unwrap());
    assert_ne!(a, workload::gen_synthetic(&spec, 2, 1000).unwrap());
}

#[test]
fn invalid_spec_names_field() {
    let spec = SyntheticSpec { write_fraction: 1.5, ..Default::default() };
    match workload::gen_synthetic(&spec, 1, 10) {
        Err(Error::Config { field, .. }) => assert!(field.contains("write_fraction")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn trace_errors_carry_line_numbers() {
    let cases = [
        ("0,1,512,R,0.1\n0,2,512,X,0.2\n", 2, "opcode"),
        ("# header\n0,1,512,R,0.1\n\n0,2,0,W,0.2\n", 4, "size"),
        ("0,1,512,R,0.5\n0,2,512,w,0.4\n", 2, "earlier"),
        ("0,1,512\n", 1, "fields"),
    ];
    for (text, line, word) in cases {
        match workload::parse_trace_from(text.as_bytes(), "t.csv") {
            Err(Error::Trace { path, line: got, reason }) => {
                assert_eq!(path, "t.csv");
                assert_eq!(got, line, "{text:?}: {reason}");
                assert!(reason.contains(word), "{reason}");
            }
            other => panic!("{text:?} gave {other:?}"),
        }
    }
}

#[test]
fn trace_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    std::fs::write(&path, "# asu,lba,size,op,ts\n1,100,4096,r,0.0\n1,108,1024,W,0.25\n").unwrap();
    let reqs = workload::parse_trace(&path).unwrap();
    assert_eq!(reqs.len(), 2);
    assert_eq!(reqs[1], Request { timestamp: 0.25, op: ReqOp::Write, lba: 108, size_bytes: 1024, asu: 1 });

    let missing = dir.path().join("absent.csv");
    let err = workload::parse_trace(&missing).unwrap_err();
    assert!(err.to_string().contains("absent.csv"), "{err}");
}

#[test]
fn expansion_respects_regions_and_ratio() {
    let map = AddressMap::default();
    let reqs = workload::gen_synthetic(&SyntheticSpec::default(), 9, 500).unwrap();
    for ratio in [0.0, 0.5, 1.0, 3.0] {
        let model = AccessModel { os_overhead_ratio: ratio, ..Default::default() };
        let mut ex = Expander::new(model, map, 8, 64, 9);
        let events = workload::expand_all(&reqs, &mut ex);
        let user_words: u64 = reqs.iter().map(|r| r.size_bytes / 8).sum();
        let user = events.iter().filter(|e| e.origin == Origin::UserPayload).count() as u64;
        let os = events.len() as u64 - user;
        assert_eq!(user, user_words);
        assert!((os as f64 - ratio * user as f64).abs() <= 1.0, "ratio {ratio}: {os} os accesses");
        for e in &events {
            let range = match e.origin {
                Origin::UserPayload => map.user_range(),
                Origin::OsOverhead => map.os_range(),
            };
            assert!(range.contains(&e.addr), "{e:?}");
        }
        assert!(events.windows(2).all(|w| w[0].cycle < w[1].cycle));
    }
}

#[test]
fn arrival_times_anchor_the_clock() {
    let model = AccessModel { os_overhead_ratio: 0.0, accesses_per_second: 1000.0, ..Default::default() };
    let mut ex = Expander::new(model, AddressMap::default(), 8, 64, 1);
    let req = |t: f64| Request { timestamp: t, op: ReqOp::Read, lba: 0, size_bytes: 64, asu: 0 };
    let mut out = Vec::new();
    ex.expand(&req(1.0), &mut out);
    assert_eq!(out[0].cycle, 1000);
    // a request arriving while the previous one is still in flight queues
    ex.expand(&req(1.001), &mut out);
    assert_eq!(out[8].cycle, 1008);
    ex.expand(&req(2.0), &mut out);
    assert_eq!(out[16].cycle, 2000);
}

#[test]
fn random_addresses_cover_the_volume() {
    let spec = SyntheticSpec::default();
    let reqs = workload::gen_synthetic(&spec, 13, 100_000).unwrap();
    let buckets = 32;
    let mut counts = vec![0f64; buckets];
    for r in &reqs {
        counts[(r.lba * buckets as u64 / spec.storage_blocks) as usize] += 1.0;
    }
    let e = reqs.len() as f64 / buckets as f64;
    let stat: f64 = counts.iter().map(|c| (c - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new((buckets - 1) as f64).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi-square {stat:.1}");
}

#[test]
fn eight_kilobyte_write_touches_128_lines() {
    let model = AccessModel { os_overhead_ratio: 0.0, ..Default::default() };
    let mut ex = Expander::new(model, AddressMap::default(), 8, 64, 1);
    let mut out = Vec::new();
    ex.expand(&Request { timestamp: 0.0, op: ReqOp::Write, lba: 77, size_bytes: 8192, asu: 0 }, &mut out);
    let mut lines: Vec<u64> = out.iter().map(|e| e.addr / 64).collect();
    lines.dedup();
    assert_eq!(lines.len(), 128);
    assert!(out.iter().all(|e| e.origin == Origin::UserPayload));
}

#[test]
fn empty_trace_is_empty() {
    assert!(workload::parse_trace_from("".as_bytes(), "e").unwrap().is_empty());
}
