//! Straight-line random-direction mobility.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::channel::ChannelModel;
use crate::model::{Network, Point};

/// Advances every mobile UE by `dt_s` seconds along its heading.
///
/// A UE crossing the square boundary of side `boundary_m` bounces off it.
/// A UE whose next position would leave the coverage of every cell stays
/// where it is and draws a new heading.
pub fn step_mobility(
    network: &Network,
    channel: &ChannelModel,
    dt_s: f64,
    boundary_m: f64,
    rng: &mut ChaCha8Rng,
) -> Network {
    let half = boundary_m / 2.0;
    let mut ues = network.ues().to_vec();
    for (ui, ue) in ues.iter_mut().enumerate() {
        if !ue.is_mobile {
            continue;
        }
        let (x, vx) = reflect(ue.position.x + ue.velocity.x * dt_s, ue.velocity.x, half);
        let (y, vy) = reflect(ue.position.y + ue.velocity.y * dt_s, ue.velocity.y, half);
        let next = Point::new(x, y);
        if channel.covers(network, ui, &next) {
            ue.position = next;
            ue.velocity = Point::new(vx, vy);
        } else {
            let speed = ue.velocity.norm();
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            ue.velocity = Point::new(speed * theta.cos(), speed * theta.sin());
        }
    }
    network.with_ues(ues)
}

fn reflect(pos: f64, vel: f64, half: f64) -> (f64, f64) {
    if pos > half {
        (2.0 * half - pos, -vel)
    } else if pos < -half {
        (-2.0 * half - pos, -vel)
    } else {
        (pos, vel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::PathLossModel;
    use crate::model::{Cell, CellId, Slice, SliceId, Ue, UeId};
    use rand::SeedableRng;
    use std::collections::BTreeSet;

    fn network(velocity: Point, position: Point, mobile: bool) -> Network {
        Network::with_derived_members(
            vec![Cell {
                id: CellId(0),
                capacity_rbs: 1.0,
                position: Point::ORIGIN,
                tx_power_dbm: 49.0,
                bandwidth_mhz: 100.0,
                is_macro: true,
                band_id: 0,
            }],
            vec![Slice {
                id: SliceId(0),
                global_quota_rbs: 1.0,
                epsilon: 1.0,
                members: BTreeSet::new(),
            }],
            vec![Ue {
                id: UeId(0),
                slice: SliceId(0),
                weight: 1.0,
                position,
                velocity,
                is_mobile: mobile,
            }],
        )
    }

    fn model(net: &Network, noise: f64) -> ChannelModel {
        let pl = PathLossModel {
            noise_floor_dbm: noise,
            ..PathLossModel::default()
        };
        ChannelModel::synthetic(pl, net, &mut ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn static_ue_does_not_move() {
        let net = network(Point::ORIGIN, Point::new(10.0, 0.0), false);
        let m = model(&net, -68.0);
        let out = step_mobility(&net, &m, 1.0, 5000.0, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(out.ues()[0].position, Point::new(10.0, 0.0));
    }

    #[test]
    fn one_second_at_walking_car_speed() {
        let net = network(Point::new(8.0467, 0.0), Point::new(10.0, 0.0), true);
        let m = model(&net, -68.0);
        let out = step_mobility(&net, &m, 1.0, 5000.0, &mut ChaCha8Rng::seed_from_u64(1));
        let d = out.ues()[0].position.distance(&Point::new(10.0, 0.0));
        assert!((d - 8.0467).abs() < 1e-9);
    }

    #[test]
    fn boundary_reflects_heading() {
        // a very low noise floor keeps the whole area covered
        let net = network(Point::new(10.0, 0.0), Point::new(2495.0, 0.0), true);
        let m = model(&net, -200.0);
        let out = step_mobility(&net, &m, 1.0, 5000.0, &mut ChaCha8Rng::seed_from_u64(1));
        let ue = &out.ues()[0];
        assert_eq!(ue.position, Point::new(2495.0, 0.0));
        assert_eq!(ue.velocity, Point::new(-10.0, 0.0));
    }

    #[test]
    fn leaving_coverage_redraws_heading() {
        let m_net = network(Point::new(100.0, 0.0), Point::new(0.0, 0.0), true);
        let m = model(&m_net, -68.0);
        let edge = m.pathloss.coverage_radius(&m_net.cells()[0]);
        let net = network(Point::new(100.0, 0.0), Point::new(edge - 1.0, 0.0), true);
        let out = step_mobility(&net, &m, 1.0, 5000.0, &mut ChaCha8Rng::seed_from_u64(1));
        let ue = &out.ues()[0];
        assert_eq!(ue.position, Point::new(edge - 1.0, 0.0));
        assert!((ue.velocity.norm() - 100.0).abs() < 1e-9);
        assert_ne!(ue.velocity, Point::new(100.0, 0.0));
    }
}
