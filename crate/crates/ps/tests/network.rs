use std::io::{Read, Write};
use std::net::TcpStream;

use hetrec_ps::wire::{self, parse_frame, status, LoadMode, Opcode, Request, Response, HEADER_LEN};
use hetrec_ps::{ParamStore, PsError, RemoteTable, RetryPolicy, Shard, ShardServer, ShardedTable, SparseOptimizer};
use proptest::prelude::*;

fn spawn_cluster(n: usize, dim: usize, seed: u64) -> (Vec<String>, Vec<hetrec_ps::ShutdownHandle>) {
    let mut addrs = Vec::new();
    let mut stops = Vec::new();
    for i in 0..n {
        let server = ShardServer::bind("127.0.0.1:0", Shard::new(dim, seed, SparseOptimizer::Sgd), i, n).unwrap();
        addrs.push(server.local_addr().unwrap().to_string());
        stops.push(server.shutdown_handle().unwrap());
        server.spawn();
    }
    (addrs, stops)
}

#[test]
fn loopback_matches_in_process() {
    let (addrs, stops) = spawn_cluster(3, 8, 77);
    let remote = RemoteTable::new(addrs, 8);
    let local = ShardedTable::new(8, 3, 77);
    remote.ping().unwrap();
    let keys: Vec<u64> = (0..40).map(|k| k * 13).chain([0, 13]).collect();
    assert_eq!(remote.pull(&keys).unwrap(), local.pull(&keys).unwrap());

    let grads: Vec<f32> = (0..keys.len() * 8).map(|i| (i % 5) as f32 * 0.25).collect();
    remote.push(&keys, &grads, 0.1).unwrap();
    local.push(&keys, &grads, 0.1).unwrap();
    assert_eq!(remote.pull(&keys).unwrap(), local.pull(&keys).unwrap());
    stops.iter().for_each(|s| s.shutdown());
}

#[test]
fn remote_dim_mismatch_is_rejected() {
    let (addrs, stops) = spawn_cluster(1, 4, 0);
    let remote = RemoteTable::new(addrs.clone(), 4);
    let err = remote.push(&[1], &[1.0; 3], 0.1).unwrap_err();
    assert!(matches!(err, PsError::DimMismatch { .. }));

    // A client configured with the wrong width is refused by the server.
    let wrong = RemoteTable::new(addrs, 5);
    match wrong.push(&[1], &[1.0; 5], 0.1).unwrap_err() {
        PsError::Remote { status: s, .. } => assert_eq!(s, status::DIM_MISMATCH),
        e => panic!("unexpected {e}"),
    }
    stops.iter().for_each(|s| s.shutdown());
}

#[test]
fn malformed_frame_gets_error_frame_then_close() {
    let (addrs, stops) = spawn_cluster(1, 4, 0);
    let mut s = TcpStream::connect(&addrs[0]).unwrap();
    let mut bytes = Request::Ping.encode();
    bytes[0] = 0; // corrupt magic
    s.write_all(&bytes).unwrap();
    let mut reply = Vec::new();
    s.read_to_end(&mut reply).unwrap();
    let (frame, used) = parse_frame(&reply).unwrap();
    assert_eq!(used, reply.len());
    assert!(matches!(Response::decode(&frame).unwrap(), Response::Error { status: status::MALFORMED, .. }));
    stops.iter().for_each(|s| s.shutdown());
}

#[test]
fn remote_checkpoint_and_warm_start() {
    let dir = tempfile::tempdir().unwrap();
    let merged = dir.path().join("merged.ckpt");
    let local = ShardedTable::new(4, 1, 3);
    let keys: Vec<u64> = (0..20).collect();
    local.push(&keys, &vec![0.5; 80], 1.0).unwrap();
    local.save(&merged).unwrap();

    let (addrs, stops) = spawn_cluster(2, 4, 9);
    let remote = RemoteTable::new(addrs, 4);
    assert_eq!(remote.warm_start(&merged).unwrap(), 20);
    assert_eq!(remote.pull(&keys).unwrap(), local.pull(&keys).unwrap());

    let per_shard = dir.path().join("remote.ckpt");
    remote.save(&per_shard).unwrap();
    assert_eq!(remote.load(&per_shard).unwrap(), 20);
    assert_eq!(remote.pull(&keys).unwrap(), local.pull(&keys).unwrap());
    stops.iter().for_each(|s| s.shutdown());
}

#[test]
fn unreachable_shard_is_retryable_transport_error() {
    let policy = RetryPolicy { max_retries: 1, base_delay: std::time::Duration::from_millis(1), ..Default::default() };
    // Bind then drop to get a port nobody listens on.
    let addr = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().to_string();
    let remote = RemoteTable::with_retry(vec![addr], 4, policy);
    let err = remote.pull(&[1]).unwrap_err();
    assert!(err.is_retryable(), "{err}");
}

fn arb_request() -> impl Strategy<Value = Request> {
    prop_oneof![
        prop::collection::vec(any::<u64>(), 0..40).prop_map(|keys| Request::Pull { keys }),
        (0u32..6, prop::collection::vec(any::<u64>(), 0..10), any::<f32>(), any::<u64>()).prop_map(|(dim, keys, lr, salt)| {
            let grads = (0..keys.len() * dim as usize)
                .map(|i| f32::from_bits((salt.wrapping_mul(i as u64 + 1) >> 16) as u32))
                .collect();
            Request::Push { dim, lr, keys, grads }
        }),
        "[a-z/._]{0,30}".prop_map(|path| Request::Save { path }),
        ("[a-z/._]{0,30}", any::<bool>())
            .prop_map(|(path, m)| Request::Load { mode: if m { LoadMode::Merge } else { LoadMode::Replace }, path }),
        Just(Request::Ping),
    ]
}

fn bits_eq(a: &Request, b: &Request) -> bool {
    match (a, b) {
        (Request::Push { dim, lr, keys, grads }, Request::Push { dim: d2, lr: l2, keys: k2, grads: g2 }) => {
            dim == d2
                && lr.to_bits() == l2.to_bits()
                && keys == k2
                && grads.len() == g2.len()
                && grads.iter().zip(g2).all(|(x, y)| x.to_bits() == y.to_bits())
        }
        _ => a == b,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn request_roundtrip(req in arb_request()) {
        let bytes = req.encode();
        let (frame, used) = parse_frame(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(frame.opcode, req.opcode() as u8);
        prop_assert!(bits_eq(&Request::decode(&frame).unwrap(), &req));
    }

    #[test]
    fn pull_response_roundtrip(n in 0usize..20, dim in 1u32..9, salt in any::<u32>()) {
        let values: Vec<f32> = (0..n * dim as usize).map(|i| f32::from_bits(salt ^ (i as u32).wrapping_mul(2654435761))).collect();
        let resp = Response::Pulled { dim, values: values.clone() };
        let bytes = resp.encode(Opcode::Pull as u8);
        prop_assert_eq!(bytes.len(), HEADER_LEN + 1 + 4 + values.len() * 4);
        let (frame, _) = parse_frame(&bytes).unwrap();
        match Response::decode(&frame).unwrap() {
            Response::Pulled { dim: d, values: v } => {
                prop_assert_eq!(d, dim);
                prop_assert!(v.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
            other => prop_assert!(false, "{:?}", other),
        }
    }
}

#[test]
fn read_frame_reports_clean_eof() {
    let mut empty: &[u8] = &[];
    assert!(wire::read_frame(&mut empty).unwrap().is_none());
}
