//! Property checks shared by the round-trip tests and the acceptance run.
//! Each returns a description of the first minimal failure.

#![allow(dead_code)]

use std::fs;
use std::path::Path;

use hiervec::dataset::{read_vectors, write_vectors, Dataset, VectorFormat};
use hiervec::hierarchy::{build_levels, load_index, save_index, BuildConfig};
use hiervec::service::wire::read_message;
use hiervec::service::{ErrorFrame, Message, PartitionResultRequest, StoreStats};
use hiervec::{Candidate, DistanceMetric, VectorId};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
}

fn finish<T: std::fmt::Debug>(r: Result<(), proptest::test_runner::TestError<T>>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

fn rows(format: VectorFormat) -> impl Strategy<Value = (usize, Vec<f32>)> {
    (1usize..12, 1usize..40).prop_flat_map(move |(dim, n)| {
        let elem: BoxedStrategy<f32> = match format {
            VectorFormat::Fvecs => prop::num::f32::NORMAL.boxed(),
            VectorFormat::Bvecs => (0u8..=255).prop_map(f32::from).boxed(),
            VectorFormat::Ivecs => (-1_000_000i32..1_000_000).prop_map(|v| v as f32).boxed(),
        };
        (Just(dim), prop::collection::vec(elem, dim * n))
    })
}

/// Write, read back and rewrite every vector file format.
pub fn dataset_files(cases: u32) -> Result<(), String> {
    for format in [VectorFormat::Fvecs, VectorFormat::Bvecs, VectorFormat::Ivecs] {
        finish(runner(cases).run(&rows(format), |(dim, data)| {
            let ds = Dataset::from_rows(dim, data, DistanceMetric::SquaredL2).unwrap();
            let mut bytes = Vec::new();
            write_vectors(&mut bytes, &ds, format).unwrap();
            let back = read_vectors(&bytes[..], format).unwrap();
            prop_assert_eq!(back.vectors().data(), ds.vectors().data());
            prop_assert_eq!(back.dim(), dim);
            let mut again = Vec::new();
            write_vectors(&mut again, &back, format).unwrap();
            prop_assert_eq!(again, bytes);
            Ok(())
        }))
        .map_err(|e| format!("{format:?}: {e}"))?;
    }
    Ok(())
}

pub fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

/// Build small random indexes, save, load, and save again.
pub fn index_dirs(cases: u32) -> Result<(), String> {
    let strategy = (1usize..6, 30usize..400, 2usize..40, prop::sample::select(vec![0.1, 0.2, 0.5]), any::<u64>(), any::<bool>())
        .prop_flat_map(|(dim, n, budget, density, seed, ip)| {
            (prop::collection::vec(-10.0f32..10.0, dim * n), Just((dim, budget, density, seed, ip)))
        });
    finish(runner(cases).run(&strategy, |(data, (dim, budget, density, seed, ip))| {
        let metric = if ip { DistanceMetric::NegInnerProduct } else { DistanceMetric::SquaredL2 };
        let ds = Dataset::from_rows(dim, data, metric).unwrap();
        let mut cfg = BuildConfig::fixed(budget, density).unwrap();
        cfg.seed = seed;
        let index = build_levels(&ds, &cfg).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        save_index(&index, &a).unwrap();
        let back = load_index(&a).unwrap();
        prop_assert_eq!(&back, &index);
        save_index(&back, &b).unwrap();
        prop_assert_eq!(dir_bytes(&a), dir_bytes(&b));
        Ok(())
    }))
}

fn vid() -> impl Strategy<Value = VectorId> {
    (any::<u8>(), 0u64..(1 << 56)).prop_map(|(l, i)| VectorId::new(l, i))
}

fn candidate() -> impl Strategy<Value = Candidate> {
    (vid(), any::<f32>()).prop_map(|(id, d)| Candidate::new(id, d))
}

pub fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        (any::<u8>(), any::<u32>(), prop::collection::vec(any::<f32>(), 0..64), prop::collection::vec(vid(), 0..64))
            .prop_map(|(level, m, query, pids)| Message::GetPartitionResult(PartitionResultRequest { level, m, query, pids })),
        prop::collection::vec(any::<u8>(), 0..64).prop_map(Message::Ping),
        Just(Message::Stats),
        prop::collection::vec(candidate(), 0..600).prop_map(Message::PartitionResult),
        prop::collection::vec(any::<u8>(), 0..64).prop_map(Message::Pong),
        prop::array::uniform5(any::<u64>()).prop_map(|c| Message::StatsReply(StoreStats {
            requests: c[0],
            partitions_read: c[1],
            vectors_scanned: c[2],
            bytes_in: c[3],
            bytes_out: c[4],
        })),
        (any::<u16>(), prop::option::of(0u64..u64::MAX), ".{0,40}")
            .prop_map(|(code, pid, message)| Message::Error(ErrorFrame { code, pid: pid.map(VectorId), message })),
    ]
}

/// Encode, decode and re-encode every frame type. NaN distances compare by
/// bit pattern, so equality is checked on the re-encoded bytes.
pub fn wire_frames(cases: u32) -> Result<(), String> {
    finish(runner(cases).run(&message(), |msg| {
        let bytes = msg.encode();
        let back = read_message(&bytes[..]).unwrap().unwrap();
        prop_assert_eq!(back.encode(), bytes);
        prop_assert_eq!(back.opcode(), msg.opcode());
        Ok(())
    }))
}
