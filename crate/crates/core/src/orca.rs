//! Reciprocal velocity-obstacle half-plane constraints.
//!
//! For each nearby pair the velocity obstacle is the cone of relative
//! velocities leading to disc overlap within the horizon, truncated by the
//! disc of radius `combined_radius / horizon` around `p_rel / horizon`.
//! Each agent takes half of the avoidance effort, which yields one linear
//! constraint per neighbor on the agent's own next velocity. Constraints
//! are rebuilt from scratch every step.

use serde::{Deserialize, Serialize};

use crate::dynamics::{OutputObs, VehicleGeom};
use crate::error::{Error, Result};
use crate::vec2::Vec2;

/// One linear velocity constraint: `u` admissible iff `normal . u + offset >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    /// Unit normal pointing into the admissible side.
    pub normal: Vec2,
    /// Offset [m/s].
    pub offset: f64,
}

impl HalfPlane {
    /// Signed distance of `u` to the constraint line (negative = violated).
    pub fn eval(&self, u: Vec2) -> f64 {
        self.normal.dot(u) + self.offset
    }

    pub fn admits(&self, u: Vec2) -> bool {
        self.eval(u) >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrcaConfig {
    /// Collision-avoidance horizon T [s].
    pub horizon: f64,
    /// Number of nearest neighbors considered (K).
    pub max_neighbors: usize,
    /// Shared speed cap used by the neighbor cutoff test [m/s].
    pub v_max: f64,
    /// Multiplier (>= 1) applied to the combined radius to absorb
    /// linearization error.
    pub radius_inflation: f64,
}

impl Default for OrcaConfig {
    fn default() -> Self {
        Self { horizon: 2.0, max_neighbors: 10, v_max: 2.0, radius_inflation: 1.1 }
    }
}

/// Indices into `others` of the agents kept for constraint generation:
/// everything within `(2 v_max) T`, then the K closest, ties broken by
/// input order.
pub fn select_neighbor_indices(
    self_obs: &OutputObs,
    others: &[OutputObs],
    cfg: &OrcaConfig,
) -> Vec<usize> {
    let cutoff = 2.0 * cfg.v_max * cfg.horizon;
    let mut by_dist: Vec<(usize, f64)> = others
        .iter()
        .enumerate()
        .map(|(i, o)| (i, self_obs.pos.distance(o.pos)))
        .filter(|(_, d)| *d <= cutoff)
        .collect();
    // Stable sort keeps input order on exact ties.
    by_dist.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite distances"));
    by_dist.truncate(cfg.max_neighbors);
    by_dist.into_iter().map(|(i, _)| i).collect()
}

pub fn select_neighbors(
    self_obs: &OutputObs,
    others: &[OutputObs],
    cfg: &OrcaConfig,
) -> Vec<OutputObs> {
    select_neighbor_indices(self_obs, others, cfg)
        .into_iter()
        .map(|i| others[i])
        .collect()
}

// Below this, the relative velocity is considered to sit exactly on the
// truncation-disc center and the closest-point direction is ambiguous.
const W_TIE_EPS_SQ: f64 = 1e-24;

/// Half-plane on `self`'s velocity induced by one neighbor.
///
/// `dt_escape` is the simulation step; it is only used when the discs
/// already overlap, where the constraint pushes the pair apart within one
/// step instead of using the horizon.
pub fn halfplane_for_pair(
    self_obs: &OutputObs,
    other: &OutputObs,
    combined_radius: f64,
    horizon: f64,
    dt_escape: f64,
) -> Result<HalfPlane> {
    let p_rel = other.pos - self_obs.pos;
    let v_rel = self_obs.vel - other.vel;
    let dist_sq = p_rel.norm_sq();
    let r_sq = combined_radius * combined_radius;

    if dist_sq == 0.0 {
        return Err(Error::DegenerateGeometry);
    }

    let (normal, u) = if dist_sq > r_sq {
        vo_projection(p_rel, v_rel, dist_sq, combined_radius, horizon)
    } else {
        // Already overlapping: escape disc scaled by one time step.
        let center = p_rel / dt_escape;
        let w = v_rel - center;
        let w_len_sq = w.norm_sq();
        let n = if w_len_sq > W_TIE_EPS_SQ {
            w / w_len_sq.sqrt()
        } else {
            -(p_rel / dist_sq.sqrt())
        };
        let u = (combined_radius / dt_escape - w_len_sq.sqrt()) * n;
        (n, u)
    };

    // Reciprocity: each agent of the pair moves half of u.
    let point = self_obs.vel + 0.5 * u;
    Ok(HalfPlane { normal, offset: -normal.dot(point) })
}

/// Closest-point projection of `v_rel` onto the truncated-cone boundary for
/// a non-overlapping pair. Returns the outward unit normal at the closest
/// boundary point and the vector `u` from `v_rel` to that point.
fn vo_projection(
    p_rel: Vec2,
    v_rel: Vec2,
    dist_sq: f64,
    combined_radius: f64,
    horizon: f64,
) -> (Vec2, Vec2) {
    let r = combined_radius;
    let center = p_rel / horizon;
    let w = v_rel - center;
    let w_len_sq = w.norm_sq();

    if w_len_sq <= W_TIE_EPS_SQ {
        // v_rel exactly at the truncation-disc center: arc and both legs
        // are equidistant. Tie-break along -p_rel, pushing the relative
        // velocity back toward the opener side.
        let n = -(p_rel / dist_sq.sqrt());
        return (n, (r / horizon) * n);
    }

    let dot1 = w.dot(p_rel);
    if dot1 < 0.0 && dot1 * dot1 > r * r * w_len_sq {
        // Closest point lies on the truncation arc.
        let w_len = w_len_sq.sqrt();
        let n = w / w_len;
        (n, (r / horizon - w_len) * n)
    } else {
        // Closest point lies on a leg of the cone.
        let leg = (dist_sq - r * r).sqrt();
        let dir = if p_rel.cross(w) > 0.0 {
            // Left leg.
            Vec2::new(p_rel.x * leg - p_rel.y * r, p_rel.x * r + p_rel.y * leg) / dist_sq
        } else {
            // Right leg, oriented so the admissible side is its left.
            -(Vec2::new(p_rel.x * leg + p_rel.y * r, -p_rel.x * r + p_rel.y * leg) / dist_sq)
        };
        let u = v_rel.dot(dir) * dir - v_rel;
        (dir.perp(), u)
    }
}

/// All half-planes for one agent against a snapshot of the other agents'
/// outputs. Radius inflation is applied here. Coincident positions never
/// abort: the pair gets a substituted separation direction instead.
pub fn constraints_for_agent(
    self_obs: &OutputObs,
    others: &[OutputObs],
    geom: &VehicleGeom,
    cfg: &OrcaConfig,
    dt_escape: f64,
) -> Vec<HalfPlane> {
    let combined_radius = cfg.radius_inflation * 2.0 * geom.radius;
    select_neighbor_indices(self_obs, others, cfg)
        .into_iter()
        .map(|i| {
            let other = &others[i];
            halfplane_for_pair(self_obs, other, combined_radius, cfg.horizon, dt_escape)
                .unwrap_or_else(|_| {
                    log::warn!(
                        "coincident agent positions at {:?}; substituting separation direction",
                        self_obs.pos
                    );
                    let dir = Vec2::new(1.0, 0.0).rotate(i as f64);
                    let nudged = OutputObs {
                        pos: self_obs.pos + dir * (1e-9 * combined_radius),
                        vel: other.vel,
                    };
                    halfplane_for_pair(self_obs, &nudged, combined_radius, cfg.horizon, dt_escape)
                        .expect("nudged pair is non-coincident")
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn obs(px: f64, py: f64, vx: f64, vy: f64) -> OutputObs {
        OutputObs { pos: Vec2::new(px, py), vel: Vec2::new(vx, vy) }
    }

    #[test]
    fn select_empty() {
        let cfg = OrcaConfig::default();
        assert!(select_neighbors(&obs(0.0, 0.0, 0.0, 0.0), &[], &cfg).is_empty());
    }

    #[test]
    fn select_applies_cutoff() {
        let cfg = OrcaConfig::default();
        let cutoff = 2.0 * cfg.v_max * cfg.horizon;
        let inside = obs(cutoff - 1e-6, 0.0, 0.0, 0.0);
        let outside = obs(cutoff + 1e-6, 0.0, 0.0, 0.0);
        let me = obs(0.0, 0.0, 0.0, 0.0);
        assert_eq!(select_neighbors(&me, &[inside], &cfg).len(), 1);
        assert_eq!(select_neighbors(&me, &[outside], &cfg).len(), 0);
    }

    #[test]
    fn select_k_closest_matches_exhaustive_sort() {
        let me = obs(0.0, 0.0, 0.0, 0.0);
        let others: Vec<OutputObs> = [3.0, 1.0, 2.5, 0.5, 2.0, 1.5]
            .iter()
            .map(|d| obs(*d, 0.0, 0.0, 0.0))
            .collect();
        let cfg = OrcaConfig { max_neighbors: 3, ..OrcaConfig::default() };
        let got = select_neighbor_indices(&me, &others, &cfg);

        // Brute-force oracle: full sort of (distance, index).
        let mut all: Vec<(f64, usize)> = others
            .iter()
            .enumerate()
            .map(|(i, o)| (me.pos.distance(o.pos), i))
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want: Vec<usize> = all.iter().take(3).map(|(_, i)| *i).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn halfplane_frozen_head_on_example() {
        // p_i=(0,0), v_i=(0.5,0), p_j=(4,0), v_j=(0,0), R=2, T=2.
        // Closest point is on the truncation arc; worked out by hand:
        // n=(-1,0), u=(0.5,0), point=(0.75,0) -> offset 0.75.
        let hp = halfplane_for_pair(
            &obs(0.0, 0.0, 0.5, 0.0),
            &obs(4.0, 0.0, 0.0, 0.0),
            2.0,
            2.0,
            0.05,
        )
        .unwrap();
        assert_relative_eq!(hp.normal.x, -1.0, max_relative = 1e-12);
        assert_relative_eq!(hp.normal.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(hp.offset, 0.75, max_relative = 1e-12);
    }

    #[test]
    fn halfplane_normal_is_unit() {
        let hp = halfplane_for_pair(
            &obs(0.0, 0.0, 0.7, -0.2),
            &obs(2.0, 1.5, -0.3, 0.4),
            1.1,
            2.0,
            0.05,
        )
        .unwrap();
        assert!((hp.normal.norm() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn halfplane_symmetric_pair_mirrors() {
        // Mirror-image agents: the two half-planes are reflections, equal
        // offsets.
        let a = obs(-3.0, 0.0, 0.8, 0.0);
        let b = obs(3.0, 0.0, -0.8, 0.0);
        let hp_a = halfplane_for_pair(&a, &b, 1.5, 2.0, 0.05).unwrap();
        let hp_b = halfplane_for_pair(&b, &a, 1.5, 2.0, 0.05).unwrap();
        assert_relative_eq!(hp_a.normal.x, -hp_b.normal.x, epsilon = 1e-12);
        assert_relative_eq!(hp_a.normal.y, hp_b.normal.y, epsilon = 1e-12);
        assert_relative_eq!(hp_a.offset, hp_b.offset, epsilon = 1e-12);
    }

    #[test]
    fn halfplane_on_boundary_keeps_current_velocity() {
        // Relative velocity exactly on the VO boundary: u = 0 and the
        // constraint line passes through the agent's current velocity.
        // Head-on geometry, v_rel touching the truncation arc edge.
        let p_rel_x = 4.0;
        let r = 2.0;
        let t = 2.0;
        // Arc closest point straight toward the origin: v_rel at distance
        // R/T before the disc center along -x.
        let v_rel = Vec2::new(p_rel_x / t - r / t, 0.0);
        let me = obs(0.0, 0.0, v_rel.x, v_rel.y);
        let other = obs(p_rel_x, 0.0, 0.0, 0.0);
        let hp = halfplane_for_pair(&me, &other, r, t, 0.05).unwrap();
        assert!(hp.eval(me.vel).abs() <= 1e-12);
    }

    #[test]
    fn halfplane_coincident_is_degenerate() {
        let r = halfplane_for_pair(
            &obs(1.0, 1.0, 0.0, 0.0),
            &obs(1.0, 1.0, 0.0, 0.0),
            1.0,
            2.0,
            0.05,
        );
        assert!(matches!(r, Err(Error::DegenerateGeometry)));
    }

    #[test]
    fn constraints_cardinality_is_capped_at_k() {
        let me = obs(0.0, 0.0, 0.0, 0.0);
        let others: Vec<OutputObs> =
            (1..=5).map(|i| obs(i as f64, 0.2 * i as f64, 0.0, 0.0)).collect();
        let cfg = OrcaConfig { max_neighbors: 3, ..OrcaConfig::default() };
        let geom = VehicleGeom::default();
        let hps = constraints_for_agent(&me, &others, &geom, &cfg, 0.05);
        assert_eq!(hps.len(), 3);
    }

    #[test]
    fn constraints_match_pairwise_composition() {
        let me = obs(0.1, -0.4, 0.5, 0.3);
        let others = vec![
            obs(2.0, 0.5, -0.4, 0.0),
            obs(-1.5, 1.0, 0.2, -0.6),
            obs(0.5, -2.5, 0.0, 0.7),
        ];
        let cfg = OrcaConfig::default();
        let geom = VehicleGeom::default();
        let combined = cfg.radius_inflation * 2.0 * geom.radius;
        let got = constraints_for_agent(&me, &others, &geom, &cfg, 0.05);
        let idx = select_neighbor_indices(&me, &others, &cfg);
        assert_eq!(got.len(), idx.len());
        for (hp, i) in got.iter().zip(idx) {
            let want =
                halfplane_for_pair(&me, &others[i], combined, cfg.horizon, 0.05).unwrap();
            assert_eq!(*hp, want);
        }
    }

    #[test]
    fn coincident_positions_substituted_not_fatal() {
        let me = obs(1.0, 1.0, 0.3, 0.0);
        let others = vec![obs(1.0, 1.0, 0.0, 0.0)];
        let cfg = OrcaConfig::default();
        let geom = VehicleGeom::default();
        let hps = constraints_for_agent(&me, &others, &geom, &cfg, 0.05);
        assert_eq!(hps.len(), 1);
        assert!(hps[0].normal.norm().is_finite());
        assert!((hps[0].normal.norm() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn rigid_motion_equivariance() {
        // Rotating + translating both agents rotates the normal and keeps
        // the admissible set consistent: offset is rotation invariant.
        let me = obs(0.3, -0.7, 0.6, 0.1);
        let other = obs(2.2, 1.4, -0.2, -0.5);
        let hp = halfplane_for_pair(&me, &other, 1.3, 2.0, 0.05).unwrap();

        let ang = 1.234;
        let shift = Vec2::new(-4.0, 2.5);
        let xf = |o: &OutputObs| OutputObs {
            pos: o.pos.rotate(ang) + shift,
            vel: o.vel.rotate(ang),
        };
        let hp2 = halfplane_for_pair(&xf(&me), &xf(&other), 1.3, 2.0, 0.05).unwrap();
        let rn = hp.normal.rotate(ang);
        assert_relative_eq!(hp2.normal.x, rn.x, epsilon = 1e-12);
        assert_relative_eq!(hp2.normal.y, rn.y, epsilon = 1e-12);
        assert_relative_eq!(hp2.offset, hp.offset, epsilon = 1e-12);
    }
}
