#![allow(dead_code)]

use gridraid_core::grid::{build_system_matrices, BusId, Line, LineId, MeasurementPlacement, NetworkModel, SystemMatrices};

pub const CASE14_LINES: [(u32, u32, f64); 20] = [
    (1, 2, 0.05917),
    (1, 5, 0.22304),
    (2, 3, 0.19797),
    (2, 4, 0.17632),
    (2, 5, 0.17388),
    (3, 4, 0.17103),
    (4, 5, 0.04211),
    (4, 7, 0.20912),
    (4, 9, 0.55618),
    (5, 6, 0.25202),
    (6, 11, 0.19890),
    (6, 12, 0.25581),
    (6, 13, 0.13027),
    (7, 8, 0.17615),
    (7, 9, 0.11001),
    (9, 10, 0.08450),
    (9, 14, 0.27038),
    (10, 11, 0.19207),
    (12, 13, 0.19988),
    (13, 14, 0.34802),
];

pub fn network(buses: u32, lines: &[(u32, u32, f64)]) -> NetworkModel {
    NetworkModel::new(
        (1..=buses).map(BusId).collect(),
        BusId(1),
        lines
            .iter()
            .enumerate()
            .map(|(k, &(f, t, x))| Line {
                id: LineId(k as u32 + 1),
                from: BusId(f),
                to: BusId(t),
                reactance: x,
            })
            .collect(),
        100.0,
    )
    .unwrap()
}

pub fn full(net: &NetworkModel) -> SystemMatrices {
    build_system_matrices(net, &MeasurementPlacement::full(net, 0.02).unwrap()).unwrap()
}

pub fn case14_net() -> NetworkModel {
    network(14, &CASE14_LINES)
}

pub fn case14() -> SystemMatrices {
    full(&case14_net())
}

pub fn two_bus() -> SystemMatrices {
    full(&network(2, &[(1, 2, 1.0)]))
}

pub fn ring4() -> SystemMatrices {
    full(&network(4, &[(1, 2, 0.1), (2, 3, 0.2), (3, 4, 0.15), (4, 1, 0.25)]))
}

/// Three buses in a chain metered by two from-flows and three injections
/// (m = 5, n = 2).
pub fn chain3() -> SystemMatrices {
    let net = network(3, &[(1, 2, 0.2), (2, 3, 0.5)]);
    let p = MeasurementPlacement::new(
        &net,
        &[LineId(1), LineId(2)],
        &[],
        &[BusId(1), BusId(2), BusId(3)],
        &[0.02, 0.03, 0.02, 0.025, 0.02],
    )
    .unwrap();
    build_system_matrices(&net, &p).unwrap()
}
