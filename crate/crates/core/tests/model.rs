mod common;

use common::*;
use gridraid_core::grid::{build_system_matrices, MeasurementPlacement};
use gridraid_core::linalg::{pseudo_rank, DenseMatrix, DEFAULT_RANK_TOL};
use gridraid_core::Error;

const P: u128 = (1 << 61) - 1;

fn pow_mod(mut b: u128, mut e: u128) -> u128 {
    let mut r = 1;
    b %= P;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % P;
        }
        b = b * b % P;
        e >>= 1;
    }
    r
}

fn inv(a: u128) -> u128 {
    pow_mod(a, P - 2)
}

fn neg(a: u128) -> u128 {
    (P - a % P) % P
}

/// Exact rank over GF(p). Reduction mod p never increases rank, so a full
/// column rank result certifies full rank over the rationals.
fn rank_mod_p(mut a: Vec<Vec<u128>>, cols: usize) -> usize {
    let mut rank = 0;
    for c in 0..cols {
        let Some(piv) = (rank..a.len()).find(|&r| a[r][c] != 0) else { continue };
        a.swap(rank, piv);
        let iv = inv(a[rank][c]);
        for r in 0..a.len() {
            if r != rank && a[r][c] != 0 {
                let f = a[r][c] * iv % P;
                for k in c..cols {
                    let sub = f * a[rank][k] % P;
                    a[r][k] = (a[r][k] + P - sub) % P;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// H over GF(p) built directly from the branch list, with susceptance
/// 1/x = 100000/k for x = k/100000.
fn case14_exact() -> Vec<Vec<u128>> {
    let b: Vec<u128> = CASE14_LINES
        .iter()
        .map(|&(_, _, x)| 100_000 * inv((x * 100_000.0).round() as u128) % P)
        .collect();
    let col = |bus: u32| if bus == 1 { None } else { Some(bus as usize - 2) };
    let flow = |l: usize, sign: bool| {
        let (f, t, _) = CASE14_LINES[l];
        let mut row = vec![0u128; 13];
        let (pos, negb) = (b[l], neg(b[l]));
        let (vf, vt) = if sign { (pos, negb) } else { (negb, pos) };
        if let Some(c) = col(f) {
            row[c] = vf;
        }
        if let Some(c) = col(t) {
            row[c] = vt;
        }
        row
    };
    let mut rows = Vec::new();
    for l in 0..20 {
        rows.push(flow(l, true));
    }
    for l in 0..20 {
        rows.push(flow(l, false));
    }
    for bus in 1..=14u32 {
        let mut row = vec![0u128; 13];
        for (l, &(f, t, _)) in CASE14_LINES.iter().enumerate() {
            let r = if f == bus {
                flow(l, true)
            } else if t == bus {
                flow(l, false)
            } else {
                continue;
            };
            for k in 0..13 {
                row[k] = (row[k] + r[k]) % P;
            }
        }
        rows.push(row);
    }
    rows
}

#[test]
fn case14_dimensions_and_exact_rank() {
    let sys = case14();
    assert_eq!((sys.m(), sys.n()), (54, 13));
    let exact = case14_exact();
    assert_eq!(rank_mod_p(exact, 13), 13);
    assert_eq!(pseudo_rank(sys.h(), DEFAULT_RANK_TOL), 13);
}

#[test]
fn case14_rows_follow_the_branch_list() {
    let sys = case14();
    let h = sys.h();
    for (l, &(f, t, x)) in CASE14_LINES.iter().enumerate() {
        for c in 0..13 {
            let bus = c as u32 + 2;
            let expect = if bus == f {
                1.0 / x
            } else if bus == t {
                -1.0 / x
            } else {
                0.0
            };
            assert!((h[(l, c)] - expect).abs() < 1e-9, "line {} col {c}", l + 1);
            assert_eq!(h[(20 + l, c)], -h[(l, c)]);
        }
    }
}

#[test]
fn injection_rows_sum_to_zero() {
    let sys = case14();
    for c in 0..13 {
        let s: f64 = (40..54).map(|r| sys.h()[(r, c)]).sum();
        assert!(s.abs() < 1e-9);
    }
}

#[test]
fn doubling_reactances_halves_h() {
    let lines: Vec<(u32, u32, f64)> = CASE14_LINES.iter().map(|&(f, t, x)| (f, t, 2.0 * x)).collect();
    let a = case14();
    let b = full(&network(14, &lines));
    for (u, v) in a.h().as_slice().iter().zip(b.h().as_slice()) {
        assert!((u - 2.0 * v).abs() < 1e-12);
    }
}

fn assert_identity(m: &DenseMatrix, tol: f64) {
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            let e = if r == c { 1.0 } else { 0.0 };
            assert!((m[(r, c)] - e).abs() < tol);
        }
    }
}

#[test]
fn masking_a_redundant_to_flow() {
    let sys = case14();
    let mut d = vec![false; 54];
    d[26] = true;
    let masked = sys.apply_availability_mask(&d).unwrap();
    assert_identity(&masked.k().matmul(masked.hd()).unwrap(), 1e-8);
    assert!(masked.s().matmul(masked.hd()).unwrap().max_abs() < 1e-8);
    assert_eq!(masked.dof(), 40);
    for i in 0..54 {
        assert_eq!(masked.s()[(26, i)], 0.0);
        assert_eq!(masked.s()[(i, 26)], 0.0);
        assert_eq!(masked.k()[(i % 13, 26)], 0.0);
    }
}

#[test]
fn empty_mask_is_identity_operation() {
    let sys = case14();
    let same = sys.apply_availability_mask(&[false; 54]).unwrap();
    assert_eq!(same.k(), sys.k());
    assert_eq!(same.s(), sys.s());
}

#[test]
fn isolating_bus_8_is_unobservable() {
    // bus 8 hangs off line 14 (7-8): its flows and the injections at 7 and 8
    // are the only measurements that see its angle
    let sys = case14();
    let mut d = vec![false; 54];
    for i in [13, 33, 46, 47] {
        d[i] = true;
    }
    assert!(matches!(
        sys.apply_availability_mask(&d),
        Err(Error::Unobservable { rank: 12, states: 13 })
    ));
}

#[test]
fn unobservable_placement_is_rejected() {
    let net = case14_net();
    let lines: Vec<_> = net.lines().iter().map(|l| l.id).collect();
    let p = MeasurementPlacement::new(&net, &lines[..10], &[], &[], &[0.02; 10]).unwrap();
    assert!(matches!(build_system_matrices(&net, &p), Err(Error::Unobservable { .. })));
}
