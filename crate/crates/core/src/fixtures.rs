//! Tiny hand-checkable instances used as golden tests.
//!
//! * `t1` triangle: 1-2 (1), 2-3 (1), 1-3 (3); C = 2; d1 = 1→3, w 1, reach 2.
//! * `t2` occupied path: 1-2 free {1,2,3}, 2-3 free {2,3}; C = 3; d2 = 1→3, w 2, reach 5.
//! * `t3` contention: one link 1-2, C = 1; two width-1 demands 1→2.
//! * `t4` contiguity tail: 1-2, 2-3, C = 4, all free; d4 = 1→3, w 2, reach 5.

use rust_decimal::Decimal;

use crate::model::{ColorSet, Demand, DemandId, LinkId, LinkSpec, NodeId, OpticalNetwork, RestorationInstance};

fn link(id: u64, u: u32, v: u32, length: i64, colors: ColorSet) -> LinkSpec {
    LinkSpec { id: LinkId(id), u: u.to_string(), v: v.to_string(), length: Decimal::from(length), colors }
}

fn labels(n: u32) -> Vec<String> {
    (1..=n).map(|i| i.to_string()).collect()
}

/// Demand between 1-based node labels.
fn demand(id: u64, s: usize, t: usize, width: u32, reach: Decimal) -> Demand {
    Demand { id: DemandId(id), source: NodeId(s - 1), target: NodeId(t - 1), width, reach }
}

pub fn t1() -> RestorationInstance {
    let full = ColorSet::full(2);
    let net = OpticalNetwork::new(
        2,
        labels(3),
        vec![link(1, 1, 2, 1, full.clone()), link(2, 2, 3, 1, full.clone()), link(3, 1, 3, 3, full)],
    )
    .expect("t1 network");
    RestorationInstance::new(net, vec![demand(1, 1, 3, 1, Decimal::from(2))]).expect("t1 instance")
}

/// `t1` with the reach of d1 lowered to 1.5.
pub fn t1_short_reach() -> RestorationInstance {
    let mut inst = t1();
    inst.demands[0].reach = Decimal::new(15, 1);
    inst
}

pub fn t2() -> RestorationInstance {
    let net = OpticalNetwork::new(
        3,
        labels(3),
        vec![link(1, 1, 2, 1, [1, 2, 3].into_iter().collect()), link(2, 2, 3, 1, [2, 3].into_iter().collect())],
    )
    .expect("t2 network");
    RestorationInstance::new(net, vec![demand(2, 1, 3, 2, Decimal::from(5))]).expect("t2 instance")
}

pub fn t3() -> RestorationInstance {
    let net = OpticalNetwork::new(1, labels(2), vec![link(1, 1, 2, 1, ColorSet::full(1))]).expect("t3 network");
    RestorationInstance::new(net, vec![demand(31, 1, 2, 1, Decimal::from(10)), demand(32, 1, 2, 1, Decimal::from(10))])
        .expect("t3 instance")
}

pub fn t4() -> RestorationInstance {
    let full = ColorSet::full(4);
    let net = OpticalNetwork::new(4, labels(3), vec![link(1, 1, 2, 1, full.clone()), link(2, 2, 3, 1, full)])
        .expect("t4 network");
    RestorationInstance::new(net, vec![demand(4, 1, 3, 2, Decimal::from(5))]).expect("t4 instance")
}
